"""Synthetic TPC-H workload: query specs, per-engine mini-optimizers, latency oracle.

Two query patterns are generated (multi-table COUNT(*) joins and single-table
top-N queries).  Each spec is planned twice: the TP optimizer prefers index
lookups and nested loops over row storage, the AP optimizer always scans
columns and hash-joins.  A deterministic latency oracle labels the faster
engine; its constants live in a versioned calibration file so labels are
reproducible and scale-invariant.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources

from .errors import (
    BalanceError,
    EngineMismatchError,
    FormatVersionError,
    ParamError,
    UnsupportedQueryError,
)
from .plans import Engine, ExecutionResult, PlanNode, PlanPair, PlanTree

CALIBRATION_VERSION = 1

# Operator repertoires; plan_for_engine never emits outside these sets.
TP_OPERATORS = frozenset(
    {"Table Scan", "Index Scan", "Filter", "Nested loop inner join",
     "Group aggregate", "Sort", "TopN"}
)
AP_OPERATORS = frozenset(
    {"Table Scan", "Filter", "Inner hash join", "Hash", "Aggregate",
     "Sort", "TopN"}
)


class Pattern(str, Enum):
    JOIN = "JOIN"
    TOPN = "TOPN"


@dataclass(frozen=True)
class TableInfo:
    name: str
    row_count: int
    column_count: int
    indexed_columns: frozenset[str]


@dataclass(frozen=True)
class SchemaCatalog:
    tables: tuple[TableInfo, ...]

    def __post_init__(self):
        for t in self.tables:
            if t.row_count <= 0:
                raise ParamError(f"table {t.name} must have positive row count")

    def table(self, name: str) -> TableInfo:
        for t in self.tables:
            if t.name == name:
                return t
        raise ParamError(f"unknown table {name!r}")

    def names(self) -> tuple[str, ...]:
        return tuple(t.name for t in self.tables)


# Row counts anchored on the orders/customer/nation sizes visible in the demo
# plans; the rest follow standard TPC-H cardinality ratios (orders:customer =
# 10:1, lineitem = 4x orders, part = orders/7.5, partsupp = 4x part,
# supplier = orders/150).
TPCH_CATALOG = SchemaCatalog(
    tables=(
        TableInfo("region", 5, 3, frozenset({"r_regionkey"})),
        TableInfo("nation", 25, 4, frozenset({"n_nationkey", "n_regionkey"})),
        TableInfo("supplier", 900_000, 7, frozenset({"s_suppkey", "s_nationkey"})),
        TableInfo("customer", 13_600_000, 8, frozenset({"c_custkey", "c_nationkey"})),
        TableInfo("part", 18_000_000, 9, frozenset({"p_partkey"})),
        TableInfo("partsupp", 72_000_000, 5, frozenset({"ps_partkey", "ps_suppkey"})),
        TableInfo("orders", 135_000_000, 9, frozenset({"o_orderkey", "o_custkey"})),
        TableInfo("lineitem", 540_000_000, 16, frozenset({"l_orderkey", "l_partkey", "l_suppkey"})),
    )
)

# Non-indexed attribute columns available for predicates and ORDER BY.
ATTRIBUTE_COLUMNS: dict[str, tuple[str, ...]] = {
    "region": ("r_name",),
    "nation": ("n_name",),
    "supplier": ("s_acctbal", "s_phone"),
    "customer": ("c_mktsegment", "c_phone", "c_acctbal"),
    "part": ("p_brand", "p_size", "p_retailprice"),
    "partsupp": ("ps_availqty", "ps_supplycost"),
    "orders": ("o_orderstatus", "o_orderdate", "o_totalprice"),
    "lineitem": ("l_shipdate", "l_quantity", "l_discount", "l_returnflag"),
}


@dataclass(frozen=True)
class JoinEdge:
    """FK -> PK relationship; pk_table owns the unique side of the key."""

    fk_table: str
    fk_column: str
    pk_table: str
    pk_column: str


JOIN_GRAPH: tuple[JoinEdge, ...] = (
    JoinEdge("nation", "n_regionkey", "region", "r_regionkey"),
    JoinEdge("supplier", "s_nationkey", "nation", "n_nationkey"),
    JoinEdge("customer", "c_nationkey", "nation", "n_nationkey"),
    JoinEdge("orders", "o_custkey", "customer", "c_custkey"),
    JoinEdge("lineitem", "l_orderkey", "orders", "o_orderkey"),
    JoinEdge("lineitem", "l_partkey", "part", "p_partkey"),
    JoinEdge("lineitem", "l_suppkey", "supplier", "s_suppkey"),
    JoinEdge("partsupp", "ps_partkey", "part", "p_partkey"),
    JoinEdge("partsupp", "ps_suppkey", "supplier", "s_suppkey"),
)


@dataclass(frozen=True)
class Predicate:
    table: str
    column: str
    selectivity: float
    sargable: bool

    def __post_init__(self):
        if not 0.0 < self.selectivity <= 1.0:
            raise ParamError(f"selectivity {self.selectivity} outside (0, 1]")


@dataclass(frozen=True)
class TopNClause:
    order_by: str
    limit: int
    offset: int = 0

    def __post_init__(self):
        if self.limit < 1:
            raise ParamError("limit must be >= 1")
        if self.offset < 0:
            raise ParamError("offset must be >= 0")


@dataclass(frozen=True)
class QuerySpec:
    pattern: Pattern
    tables: tuple[str, ...]
    join_keys: tuple[JoinEdge, ...] = ()
    predicates: tuple[Predicate, ...] = ()
    topn: TopNClause | None = None
    seed: int = 0

    def __post_init__(self):
        if self.pattern is Pattern.JOIN and len(self.tables) < 2:
            raise ParamError("JOIN pattern requires at least 2 tables")
        if self.pattern is Pattern.TOPN and self.topn is None:
            raise ParamError("TOPN pattern requires a top-N clause")

    def predicates_on(self, table: str) -> tuple[Predicate, ...]:
        return tuple(p for p in self.predicates if p.table == table)


@dataclass(frozen=True)
class LabeledExample:
    spec: QuerySpec
    pair: PlanPair
    result: ExecutionResult


@dataclass(frozen=True)
class GenParams:
    """Knobs for the query generator; defaults tuned for a balanced label mix."""

    min_tables: int = 2
    max_tables: int = 4
    predicate_prob: float = 0.7
    sel_log10_range: tuple[float, float] = (-3.3, -0.3)
    nonsargable_prob: float = 0.3
    indexed_pred_prob: float = 0.5
    ordered_index_prob: float = 0.7
    single_filter_prob: float = 0.5
    limit_range: tuple[int, int] = (5, 2000)
    offset_prob: float = 0.3
    offset_range: tuple[int, int] = (10, 2000)
    topn_pred_prob: float = 0.5


def spec_hash(spec: QuerySpec) -> str:
    """Content hash over everything except the seed, for dedup and set checks."""
    payload = {
        "pattern": spec.pattern.value,
        "tables": list(spec.tables),
        "join_keys": [
            [e.fk_table, e.fk_column, e.pk_table, e.pk_column] for e in spec.join_keys
        ],
        "predicates": [
            [p.table, p.column, round(p.selectivity, 9), p.sargable]
            for p in spec.predicates
        ],
        "topn": None
        if spec.topn is None
        else [spec.topn.order_by, spec.topn.limit, spec.topn.offset],
    }
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def _draw_selectivity(rng: random.Random, params: GenParams) -> float:
    lo, hi = params.sel_log10_range
    return round(10.0 ** rng.uniform(lo, hi), 6)


def _draw_predicate(rng: random.Random, table: TableInfo, params: GenParams) -> Predicate:
    if rng.random() < params.indexed_pred_prob and table.indexed_columns:
        column = rng.choice(sorted(table.indexed_columns))
    else:
        column = rng.choice(ATTRIBUTE_COLUMNS[table.name])
    return Predicate(
        table=table.name,
        column=column,
        selectivity=_draw_selectivity(rng, params),
        sargable=rng.random() >= params.nonsargable_prob,
    )


def generate_query(
    pattern: Pattern | str,
    catalog: SchemaCatalog,
    params: GenParams = GenParams(),
    seed: int = 0,
) -> QuerySpec:
    """Deterministically draw one query spec for (pattern, params, seed)."""
    pattern = Pattern(pattern)
    rng = random.Random(seed)

    if pattern is Pattern.JOIN:
        if params.min_tables < 2:
            raise ParamError("JOIN pattern needs min_tables >= 2")
        if params.max_tables < params.min_tables:
            raise ParamError("max_tables < min_tables")
        n_tables = rng.randint(params.min_tables, params.max_tables)
        start = rng.choice(sorted({e.fk_table for e in JOIN_GRAPH} | {e.pk_table for e in JOIN_GRAPH}))
        chosen = [start]
        edges: list[JoinEdge] = []
        while len(chosen) < n_tables:
            frontier = [
                e
                for e in JOIN_GRAPH
                if (e.fk_table in chosen) != (e.pk_table in chosen)
            ]
            if not frontier:
                break
            edge = rng.choice(frontier)
            edges.append(edge)
            chosen.append(edge.pk_table if edge.fk_table in chosen else edge.fk_table)
        predicates = []
        if rng.random() < params.single_filter_prob:
            # one selective driving filter, everything else joined clean
            name = rng.choice(chosen)
            lo, hi = params.sel_log10_range
            narrow = replace(params, sel_log10_range=(lo, (lo + hi) / 2))
            predicates.append(_draw_predicate(rng, catalog.table(name), narrow))
        else:
            for name in chosen:
                if rng.random() < params.predicate_prob:
                    predicates.append(_draw_predicate(rng, catalog.table(name), params))
            if not predicates:
                # explanation-worthy joins always filter something
                predicates.append(_draw_predicate(rng, catalog.table(rng.choice(chosen)), params))
        return QuerySpec(
            pattern=pattern,
            tables=tuple(chosen),
            join_keys=tuple(edges),
            predicates=tuple(predicates),
            seed=seed,
        )

    # TOPN
    table = catalog.table(rng.choice(sorted(catalog.names())))
    if rng.random() < params.ordered_index_prob and table.indexed_columns:
        order_by = rng.choice(sorted(table.indexed_columns))
    else:
        order_by = rng.choice(ATTRIBUTE_COLUMNS[table.name])
    limit = rng.randint(*params.limit_range)
    offset = rng.randint(*params.offset_range) if rng.random() < params.offset_prob else 0
    predicates = ()
    if rng.random() < params.topn_pred_prob:
        predicates = (_draw_predicate(rng, table, params),)
    return QuerySpec(
        pattern=pattern,
        tables=(table.name,),
        predicates=predicates,
        topn=TopNClause(order_by=order_by, limit=limit, offset=offset),
        seed=seed,
    )


def _render_predicate(pred: Predicate, catalog: SchemaCatalog) -> str:
    if not pred.sargable:
        n_prefixes = max(1, round(pred.selectivity * 90))
        prefixes = ", ".join(f"'{10 + i}'" for i in range(min(n_prefixes, 90)))
        return f"SUBSTRING({pred.column}, 1, 2) IN ({prefixes})"
    table = catalog.table(pred.table)
    if pred.column in table.indexed_columns:
        bound = max(1, round(table.row_count * pred.selectivity))
        return f"{pred.column} < {bound}"
    return f"{pred.column} = 'v{round(pred.selectivity * 1e6):07d}'"


def render_sql(spec: QuerySpec, catalog: SchemaCatalog = TPCH_CATALOG) -> str:
    """Render the spec as SQL text; pure function of the spec."""
    preds = [_render_predicate(p, catalog) for p in spec.predicates]
    if spec.pattern is Pattern.JOIN:
        conds = [f"{e.fk_column} = {e.pk_column}" for e in spec.join_keys] + preds
        return (
            f"SELECT COUNT(*) FROM {', '.join(spec.tables)} "
            f"WHERE {' AND '.join(conds)};"
        )
    sql = f"SELECT * FROM {spec.tables[0]}"
    if preds:
        sql += f" WHERE {' AND '.join(preds)}"
    sql += f" ORDER BY {spec.topn.order_by} LIMIT {spec.topn.limit}"
    if spec.topn.offset:
        sql += f" OFFSET {spec.topn.offset}"
    return sql + ";"


# ---------------------------------------------------------------------------
# Mini-optimizers.  Costs are engine-local estimates in incompatible units;
# they only need to be deterministic and directionally sensible.


def _filtered_rows(table: TableInfo, preds: tuple[Predicate, ...]) -> int:
    sel = 1.0
    for p in preds:
        sel *= p.selectivity
    return max(1, round(table.row_count * sel))


def _combined_selectivity(preds: tuple[Predicate, ...]) -> float:
    sel = 1.0
    for p in preds:
        sel *= p.selectivity
    return sel


def _join_order(spec: QuerySpec, catalog: SchemaCatalog) -> list[str]:
    """Greedy smallest-filtered-first order that keeps the join connected."""
    sizes = {
        name: _filtered_rows(catalog.table(name), spec.predicates_on(name))
        for name in spec.tables
    }
    adjacency: dict[str, set[str]] = {name: set() for name in spec.tables}
    for e in spec.join_keys:
        if e.fk_table in adjacency and e.pk_table in adjacency:
            adjacency[e.fk_table].add(e.pk_table)
            adjacency[e.pk_table].add(e.fk_table)
    ordered = [min(spec.tables, key=lambda n: (sizes[n], n))]
    remaining = set(spec.tables) - set(ordered)
    while remaining:
        reachable = [n for n in remaining if any(m in adjacency[n] for m in ordered)]
        if not reachable:
            raise UnsupportedQueryError(
                f"join keys do not connect tables {sorted(remaining)}"
            )
        nxt = min(reachable, key=lambda n: (sizes[n], n))
        ordered.append(nxt)
        remaining.remove(nxt)
    return ordered


def _edge_for(spec: QuerySpec, table: str, joined: list[str]) -> JoinEdge:
    for e in spec.join_keys:
        if e.fk_table == table and e.pk_table in joined:
            return e
        if e.pk_table == table and e.fk_table in joined:
            return e
    raise UnsupportedQueryError(f"no join edge connects {table} to {joined}")


def _join_out_rows(left_rows: int, right_rows: int, edge: JoinEdge, catalog: SchemaCatalog) -> int:
    domain = catalog.table(edge.pk_table).row_count
    return max(1, round(left_rows * right_rows / domain))


def _tp_stats_factor(spec: QuerySpec, table: str) -> float:
    """Row-store statistics are sampled and stale; displayed estimates come
    out one to five orders of magnitude low.  Deterministic per (query, table)
    so identical inputs always produce identical plans."""
    digest = hashlib.sha256(f"{spec_hash(spec)}:{table}".encode()).digest()
    u = int.from_bytes(digest[:8], "big") / 2**64
    return 10.0 ** (-5.0 + 4.0 * u)


def _tp_scan_pipeline(
    spec: QuerySpec, table: TableInfo, *, ordered_rows: int | None = None
) -> tuple[PlanNode, int]:
    """Scan + optional Filter for one table under the TP engine.

    Returns (node, displayed_out_rows).  Node fields carry the engine's own
    sampled estimates, not the true cardinalities; the latency oracle works
    those out independently from the spec.

    ordered_rows, when given, caps an order-providing index scan (top-N early
    termination baked into the estimate).
    """
    preds = spec.predicates_on(table.name)
    factor = _tp_stats_factor(spec, table.name)
    index_pred = next(
        (p for p in preds if p.sargable and p.column in table.indexed_columns), None
    )
    if ordered_rows is not None:
        scan_rows = max(1, round(min(table.row_count, ordered_rows) * factor))
        scan = PlanNode(
            "Index Scan",
            relation_name=table.name,
            total_cost=round(0.05 + scan_rows * 0.002, 4),
            plan_rows=scan_rows,
            children=(),
        )
        out = max(1, round(scan_rows * _combined_selectivity(preds)))
    elif index_pred is not None:
        scan_rows = max(1, round(table.row_count * index_pred.selectivity * factor))
        scan = PlanNode(
            "Index Scan",
            relation_name=table.name,
            total_cost=round(0.05 + scan_rows * 0.002, 4),
            plan_rows=scan_rows,
            children=(),
        )
        preds = tuple(p for p in preds if p is not index_pred)
        out = max(1, round(scan_rows * _combined_selectivity(preds)))
    else:
        scan_rows = max(1, round(table.row_count * factor))
        scan = PlanNode(
            "Table Scan",
            relation_name=table.name,
            total_cost=round(scan_rows * 0.001, 4),
            plan_rows=scan_rows,
            children=(),
        )
        out = max(1, round(scan_rows * _combined_selectivity(preds)))
    if preds:
        node = PlanNode(
            "Filter",
            total_cost=round(scan.total_cost + scan.plan_rows * 0.0001, 4),
            plan_rows=out,
            children=(scan,),
        )
        return node, out
    return scan, scan.plan_rows


def _ap_scan_pipeline(spec: QuerySpec, table: TableInfo) -> tuple[PlanNode, int]:
    preds = spec.predicates_on(table.name)
    col_frac = _columns_read(spec, table.name) / table.column_count
    scan = PlanNode(
        "Table Scan",
        relation_name=table.name,
        total_cost=round(table.row_count * col_frac * 0.1, 4),
        plan_rows=table.row_count,
        children=(),
    )
    if preds:
        out = max(1, round(table.row_count * _combined_selectivity(preds)))
        node = PlanNode(
            "Filter",
            total_cost=round(scan.total_cost + table.row_count * 0.01, 4),
            plan_rows=out,
            children=(scan,),
        )
        return node, out
    return scan, table.row_count


def _plan_tp(spec: QuerySpec, catalog: SchemaCatalog) -> PlanNode:
    if spec.pattern is Pattern.JOIN:
        ordered = _join_order(spec, catalog)
        current, current_rows = _tp_scan_pipeline(spec, catalog.table(ordered[0]))
        joined = [ordered[0]]
        for name in ordered[1:]:
            table = catalog.table(name)
            edge = _edge_for(spec, name, joined)
            preds = spec.predicates_on(name)
            join_col = edge.fk_column if edge.fk_table == name else edge.pk_column
            pk_displayed = max(
                1,
                round(catalog.table(edge.pk_table).row_count
                      * _tp_stats_factor(spec, edge.pk_table)),
            )
            if not preds and join_col in table.indexed_columns:
                # clean index nested loop: per-probe match estimate
                if edge.pk_table == name:
                    per_probe = 1
                else:
                    displayed_total = max(
                        1, round(table.row_count * _tp_stats_factor(spec, name))
                    )
                    per_probe = max(1, round(displayed_total / pk_displayed))
                inner: PlanNode = PlanNode(
                    "Index Scan",
                    relation_name=name,
                    total_cost=round(0.05 + per_probe * 0.002, 4),
                    plan_rows=per_probe,
                    children=(),
                )
                out = max(1, round(current_rows * per_probe))
            else:
                inner, inner_rows = _tp_scan_pipeline(spec, table)
                out = max(1, round(current_rows * inner_rows / pk_displayed))
            current = PlanNode(
                "Nested loop inner join",
                total_cost=round(current.total_cost + inner.total_cost
                                 + current_rows * 0.0005 + out * 0.0001, 4),
                plan_rows=out,
                children=(current, inner),
            )
            current_rows = out
            joined.append(name)
        return PlanNode(
            "Group aggregate",
            total_cost=round(current.total_cost + current_rows * 0.0002 + 0.01, 4),
            plan_rows=1,
            children=(current,),
        )

    # TOPN over a single table
    table = catalog.table(spec.tables[0])
    topn = spec.topn
    needed = topn.limit + topn.offset
    sel = _combined_selectivity(spec.predicates_on(table.name))
    if topn.order_by in table.indexed_columns:
        # walk the index in order, stop once enough rows survive the filter
        scan_rows = min(table.row_count, max(needed, math.ceil(needed / sel)))
        pipeline, out = _tp_scan_pipeline(spec, table, ordered_rows=scan_rows)
        top = PlanNode(
            "TopN",
            total_cost=round(pipeline.total_cost + needed * 0.0002, 4),
            plan_rows=min(topn.limit, out),
            children=(pipeline,),
        )
        return top
    pipeline, out = _tp_scan_pipeline(spec, table)
    sort = PlanNode(
        "Sort",
        total_cost=round(pipeline.total_cost
                         + out * math.log2(max(2, out)) * 0.0002, 4),
        plan_rows=out,
        children=(pipeline,),
    )
    return PlanNode(
        "TopN",
        total_cost=round(sort.total_cost + out * 0.0001, 4),
        plan_rows=min(topn.limit, out),
        children=(sort,),
    )


def _plan_ap(spec: QuerySpec, catalog: SchemaCatalog) -> PlanNode:
    if spec.pattern is Pattern.JOIN:
        ordered = _join_order(spec, catalog)
        current, current_rows = _ap_scan_pipeline(spec, catalog.table(ordered[0]))
        joined = [ordered[0]]
        for name in ordered[1:]:
            edge = _edge_for(spec, name, joined)
            probe, probe_rows = _ap_scan_pipeline(spec, catalog.table(name))
            build = PlanNode(
                "Hash",
                total_cost=round(current.total_cost + current_rows * 0.05, 4),
                plan_rows=current_rows,
                children=(current,),
            )
            out = _join_out_rows(current_rows, probe_rows, edge, catalog)
            current = PlanNode(
                "Inner hash join",
                total_cost=round(probe.total_cost + build.total_cost
                                 + (probe_rows + current_rows) * 0.02, 4),
                plan_rows=out,
                children=(probe, build),
            )
            current_rows = out
            joined.append(name)
        return PlanNode(
            "Aggregate",
            total_cost=round(current.total_cost + current_rows * 0.01 + 0.1, 4),
            plan_rows=1,
            children=(current,),
        )

    table = catalog.table(spec.tables[0])
    topn = spec.topn
    pipeline, out = _ap_scan_pipeline(spec, table)
    sort = PlanNode(
        "Sort",
        total_cost=round(pipeline.total_cost
                         + out * math.log2(max(2, out)) * 0.01, 4),
        plan_rows=out,
        children=(pipeline,),
    )
    return PlanNode(
        "TopN",
        total_cost=round(sort.total_cost + out * 0.005, 4),
        plan_rows=min(topn.limit, out),
        children=(sort,),
    )


def plan_for_engine(
    spec: QuerySpec, engine: Engine | str, catalog: SchemaCatalog = TPCH_CATALOG
) -> PlanTree:
    """Plan the spec with one engine's optimizer; output stays in its grammar."""
    engine = Engine(engine)
    for name in spec.tables:
        catalog.table(name)  # raises E_PARAM on unknown tables
    root = _plan_tp(spec, catalog) if engine is Engine.TP else _plan_ap(spec, catalog)
    return PlanTree(root=root, engine=engine)


# ---------------------------------------------------------------------------
# Latency oracle


def load_calibration(path: str | None = None) -> dict[str, float]:
    """Load oracle constants; defaults ship with the package."""
    if path is None:
        text = resources.files("htapxplain.data").joinpath("calibration.json").read_text()
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    constants = json.loads(text)
    if constants.get("version") != CALIBRATION_VERSION:
        raise FormatVersionError(
            f"calibration version {constants.get('version')!r} != {CALIBRATION_VERSION}"
        )
    return {k: float(v) for k, v in constants.items()}


def _columns_read(spec: QuerySpec, table: str) -> int:
    cols = {p.column for p in spec.predicates_on(table)}
    for e in spec.join_keys:
        if e.fk_table == table:
            cols.add(e.fk_column)
        if e.pk_table == table:
            cols.add(e.pk_column)
    if spec.topn is not None and spec.tables[0] == table:
        cols.add(spec.topn.order_by)
    return max(1, len(cols))


def oracle_latency(
    spec: QuerySpec,
    plan: PlanTree,
    engine: Engine | str,
    catalog: SchemaCatalog = TPCH_CATALOG,
    constants: dict[str, float] | None = None,
) -> float:
    """Deterministic stand-in for wall-clock execution, in milliseconds.

    Work is driven by true cardinalities recomputed from the spec and the
    plan's physical structure; the estimates printed on plan nodes play no
    part (the row engine's are sampled and unreliable).  Every additive term
    is linear in one calibration constant, so scaling all constants by a
    common factor rescales latencies without moving any argmin.
    """
    engine = Engine(engine)
    if plan.engine is not engine:
        raise EngineMismatchError(f"plan from {plan.engine.value}, oracle asked for {engine.value}")
    allowed = TP_OPERATORS if engine is Engine.TP else AP_OPERATORS
    for node in plan.root.walk():
        if node.node_type not in allowed:
            raise EngineMismatchError(
                f"{engine.value} plan contains foreign operator {node.node_type!r}"
            )
    c = load_calibration() if constants is None else constants

    def tables_of(node: PlanNode) -> frozenset[str]:
        return frozenset(n.relation_name for n in node.walk() if n.relation_name)

    def edge_between(left: frozenset[str], right: frozenset[str]) -> JoinEdge:
        for e in spec.join_keys:
            if (e.fk_table in left and e.pk_table in right) or (
                e.pk_table in left and e.fk_table in right
            ):
                return e
        raise EngineMismatchError(
            f"no join key in the query connects {sorted(left)} with {sorted(right)}"
        )

    def index_depth(name: str) -> float:
        return math.log2(max(2, catalog.table(name).row_count))

    def tp_index_scan_rows(name: str) -> int:
        """True entries an order- or predicate-driven index scan touches."""
        table = catalog.table(name)
        preds = spec.predicates_on(name)
        if (
            spec.pattern is Pattern.TOPN
            and spec.topn.order_by in table.indexed_columns
        ):
            needed = spec.topn.limit + spec.topn.offset
            sel = _combined_selectivity(preds)
            return min(table.row_count, max(needed, math.ceil(needed / sel)))
        index_pred = next(
            (p for p in preds if p.sargable and p.column in table.indexed_columns),
            None,
        )
        if index_pred is None:
            raise EngineMismatchError(
                f"index scan on {name!r} has no matching indexed predicate"
            )
        return max(1, round(table.row_count * index_pred.selectivity))

    def tp_residual_sel(name: str, scan_kind: str) -> float:
        """Selectivity the Filter above a scan still has to apply."""
        table = catalog.table(name)
        preds = spec.predicates_on(name)
        if scan_kind == "Index Scan" and not (
            spec.pattern is Pattern.TOPN
            and spec.topn.order_by in table.indexed_columns
        ):
            index_pred = next(
                (p for p in preds if p.sargable and p.column in table.indexed_columns),
                None,
            )
            if index_pred is not None:
                preds = tuple(p for p in preds if p is not index_pred)
        return _combined_selectivity(preds)

    def tp(node: PlanNode) -> tuple[float, int]:
        kind = node.node_type
        if kind == "Table Scan":
            rows = catalog.table(node.relation_name).row_count
            return rows * c["tp_scan_ms_per_row"], rows
        if kind == "Index Scan":
            rows = tp_index_scan_rows(node.relation_name)
            ms = (index_depth(node.relation_name) * c["tp_index_probe_ms_per_level"]
                  + rows * c["tp_emit_ms_per_row"])
            return ms, rows
        child = node.children[0]
        child_ms, child_out = tp(child)
        if kind == "Filter":
            sel = tp_residual_sel(child.relation_name, child.node_type)
            out = max(1, round(child_out * sel))
            return child_ms + child_out * c["tp_filter_ms_per_row"], out
        if kind == "Nested loop inner join":
            inner = node.children[1]
            edge = edge_between(tables_of(child), tables_of(inner))
            if inner.node_type == "Index Scan":
                # probe the join-key index once per outer row
                name = inner.relation_name
                if edge.pk_table == name:
                    matches = 1
                else:
                    matches = max(
                        1,
                        round(catalog.table(name).row_count
                              / catalog.table(edge.pk_table).row_count),
                    )
                per_probe = (index_depth(name) * c["tp_index_probe_ms_per_level"]
                             + matches * c["tp_emit_ms_per_row"])
                out = _join_out_rows(child_out, catalog.table(name).row_count,
                                     edge, catalog)
                return child_ms + child_out * per_probe, out
            inner_ms, inner_out = tp(inner)
            ms = child_ms + inner_ms + child_out * inner_out * c["tp_loop_ms_per_cmp"]
            return ms, _join_out_rows(child_out, inner_out, edge, catalog)
        if kind == "Group aggregate":
            return child_ms + child_out * c["tp_agg_ms_per_row"], 1
        if kind == "Sort":
            cmps = child_out * math.log2(max(2, child_out))
            return child_ms + cmps * c["tp_sort_ms_per_cmp"], child_out
        if kind == "TopN":
            out = min(spec.topn.limit, child_out) if spec.topn else child_out
            return child_ms + child_out * c["tp_topn_ms_per_row"], out
        raise EngineMismatchError(f"unhandled TP operator {kind!r}")

    def ap(node: PlanNode) -> tuple[float, int]:
        kind = node.node_type
        if kind == "Table Scan":
            table = catalog.table(node.relation_name)
            frac = _columns_read(spec, table.name) / table.column_count
            return table.row_count * frac * c["ap_scan_ms_per_cell"], table.row_count
        child = node.children[0]
        child_ms, child_out = ap(child)
        if kind == "Filter":
            sel = _combined_selectivity(spec.predicates_on(child.relation_name))
            out = max(1, round(child_out * sel))
            return child_ms + child_out * c["ap_filter_ms_per_row"], out
        if kind == "Hash":
            return child_ms + child_out * c["ap_build_ms_per_row"], child_out
        if kind == "Inner hash join":
            build_ms, build_out = ap(node.children[1])
            edge = edge_between(tables_of(child), tables_of(node.children[1]))
            ms = child_ms + build_ms + (child_out + build_out) * c["ap_hash_join_ms_per_row"]
            return ms, _join_out_rows(child_out, build_out, edge, catalog)
        if kind == "Aggregate":
            return child_ms + child_out * c["ap_agg_ms_per_row"], 1
        if kind == "Sort":
            cmps = child_out * math.log2(max(2, child_out))
            return child_ms + cmps * c["ap_sort_ms_per_cmp"], child_out
        if kind == "TopN":
            out = min(spec.topn.limit, child_out) if spec.topn else child_out
            return child_ms + child_out * c["ap_topn_ms_per_row"], out
        raise EngineMismatchError(f"unhandled AP operator {kind!r}")

    ms, _ = tp(plan.root) if engine is Engine.TP else ap(plan.root)
    return c["base_ms"] + ms


def label_example(
    spec: QuerySpec,
    catalog: SchemaCatalog = TPCH_CATALOG,
    constants: dict[str, float] | None = None,
) -> LabeledExample:
    """Plan the spec on both engines and label the winner via the oracle."""
    tp_plan = plan_for_engine(spec, Engine.TP, catalog)
    ap_plan = plan_for_engine(spec, Engine.AP, catalog)
    tp_ms = oracle_latency(spec, tp_plan, Engine.TP, catalog, constants)
    ap_ms = oracle_latency(spec, ap_plan, Engine.AP, catalog, constants)
    pair = PlanPair(ap_plan=ap_plan, tp_plan=tp_plan, query_text=render_sql(spec, catalog))
    return LabeledExample(
        spec=spec,
        pair=pair,
        result=ExecutionResult.from_latencies(tp_latency_ms=tp_ms, ap_latency_ms=ap_ms),
    )


def demo_query_spec() -> QuerySpec:
    """Spec shaped like the built-in demo query (three-way join, phone
    substring predicate blocking index use on customer)."""
    return QuerySpec(
        pattern=Pattern.JOIN,
        tables=("customer", "nation", "orders"),
        join_keys=(
            JoinEdge("customer", "c_nationkey", "nation", "n_nationkey"),
            JoinEdge("orders", "o_custkey", "customer", "c_custkey"),
        ),
        predicates=(
            Predicate("customer", "c_phone", 0.078, False),
            Predicate("customer", "c_mktsegment", 0.2, True),
            Predicate("nation", "n_name", 0.04, True),
            Predicate("orders", "o_orderstatus", 0.02, True),
        ),
        seed=0,
    )


# ---------------------------------------------------------------------------
# Dataset assembly


def _ap_fraction(examples: list[LabeledExample]) -> float:
    if not examples:
        return 0.0
    wins = sum(1 for ex in examples if ex.result.winner is Engine.AP)
    return wins / len(examples)


def build_dataset(
    catalog: SchemaCatalog = TPCH_CATALOG,
    n_train: int = 400,
    n_kb: int = 20,
    n_test: int = 200,
    seed: int = 1,
    params: GenParams = GenParams(),
    constants: dict[str, float] | None = None,
    balance: tuple[float, float] = (0.3, 0.7),
    max_attempts: int = 20,
) -> tuple[list[LabeledExample], list[LabeledExample], list[LabeledExample]]:
    """Generate disjoint train/test splits plus a KB seed drawn from train."""
    if n_kb > n_train:
        raise ParamError("n_kb must not exceed n_train")
    if constants is None:
        constants = load_calibration()

    for attempt in range(max_attempts):
        rng = random.Random(seed * 1_000_003 + attempt)
        seen: set[str] = set()
        examples: list[LabeledExample] = []
        guard = 0
        while len(examples) < n_train + n_test:
            guard += 1
            if guard > 50 * (n_train + n_test):
                raise BalanceError("generator stalled while deduplicating specs")
            pattern = Pattern.JOIN if rng.random() < 0.5 else Pattern.TOPN
            spec = generate_query(pattern, catalog, params, seed=rng.getrandbits(63))
            h = spec_hash(spec)
            if h in seen:
                continue
            seen.add(h)
            examples.append(label_example(spec, catalog, constants))
        train, test = examples[:n_train], examples[n_train:]
        lo, hi = balance
        if lo <= _ap_fraction(train) <= hi and lo <= _ap_fraction(test) <= hi:
            break
    else:
        raise BalanceError(
            f"could not reach an AP-wins fraction inside {balance} in {max_attempts} attempts"
        )

    # KB seed: spread across (pattern, winner) strata so retrieval has coverage
    strata: dict[tuple[Pattern, Engine], list[LabeledExample]] = {}
    for ex in train:
        strata.setdefault((ex.spec.pattern, ex.result.winner), []).append(ex)
    kb_seed: list[LabeledExample] = []
    buckets = [strata[k] for k in sorted(strata.keys(), key=lambda k: (k[0].value, k[1].value))]
    i = 0
    while len(kb_seed) < min(n_kb, len(train)):
        bucket = buckets[i % len(buckets)]
        if bucket:
            kb_seed.append(bucket.pop(0))
        i += 1
        if all(not b for b in buckets):
            break
    return train, kb_seed, test


# ---------------------------------------------------------------------------
# Rule-based expert commentary for seeded KB entries and the mock provider.


def draft_expert_explanation(pair: PlanPair, result: ExecutionResult) -> str:
    """What a reviewer would plausibly write for this pair, derived from plan shape."""
    tp_types = {n.node_type for n in pair.tp_plan.root.walk()}
    ap_types = {n.node_type for n in pair.ap_plan.root.walk()}
    biggest = max(n.plan_rows for n in pair.ap_plan.root.walk())
    small_data = biggest < 10_000

    if result.winner is Engine.AP:
        if "Nested loop inner join" in tp_types and "Index Scan" not in tp_types:
            return (
                "AP is faster: with no usable index, TP repeats nested-loop passes "
                "over the inner tables, while AP scans each column set once and "
                "joins through hash tables."
            )
        if "Nested loop inner join" in tp_types:
            return (
                "AP is faster: the filtered inputs are still large, so AP's hash "
                "joins over columnar scans beat TP's nested loops even though TP "
                "can probe an index."
            )
        if "Sort" in tp_types or "TopN" in tp_types:
            return (
                "AP is faster: the order-by column has no index, so both engines "
                "sort, and AP's columnar scan reads only the referenced columns "
                "before sorting."
            )
        return "AP is faster thanks to columnar scans that touch only the needed columns."

    if "Index Scan" in tp_types and "Nested loop inner join" in tp_types:
        return (
            "TP is faster: it drives the join with index lookups on the join key, "
            "touching a handful of rows per probe, while AP has to scan and hash "
            "the full tables."
        )
    if "Index Scan" in tp_types and ("TopN" in tp_types or "Sort" in tp_types):
        return (
            "TP is faster: the index already yields rows in the requested order, "
            "so TP stops after the limit; AP must scan the table and sort it before "
            "taking the top rows."
        )
    if small_data:
        return (
            "TP is faster: the data involved is tiny, so row-store access wins on "
            "overhead while AP's columnar machinery buys nothing."
        )
    return (
        "TP is faster here because its access paths touch far fewer rows than "
        "AP's full columnar scans."
    )


# ---------------------------------------------------------------------------
# Dataset / KB-seed file IO (one JSON record per line)


def example_to_record(ex: LabeledExample) -> dict:
    from .plans import plan_node_to_dict

    return {
        "query": ex.pair.query_text or "",
        "ap_plan": plan_node_to_dict(ex.pair.ap_plan.root),
        "tp_plan": plan_node_to_dict(ex.pair.tp_plan.root),
        "tp_latency_ms": ex.result.tp_latency_ms,
        "ap_latency_ms": ex.result.ap_latency_ms,
        "winner": ex.result.winner.value,
    }


def record_to_pair_result(record: dict) -> tuple[PlanPair, ExecutionResult]:
    from .plans import Engine as Eng
    from .plans import plan_node_from_dict

    pair = PlanPair(
        ap_plan=PlanTree(plan_node_from_dict(record["ap_plan"], warn_unknown=False), Eng.AP),
        tp_plan=PlanTree(plan_node_from_dict(record["tp_plan"], warn_unknown=False), Eng.TP),
        query_text=record.get("query") or None,
    )
    result = ExecutionResult.from_latencies(
        tp_latency_ms=float(record["tp_latency_ms"]),
        ap_latency_ms=float(record["ap_latency_ms"]),
    )
    return pair, result


def write_dataset(examples: list[LabeledExample], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(example_to_record(ex), sort_keys=True) + "\n")


def read_dataset(path: str) -> list[tuple[PlanPair, ExecutionResult]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(record_to_pair_result(json.loads(line)))
    return out


def write_kb_seed(examples: list[LabeledExample], path: str) -> None:
    """KB seed records: dataset fields plus a drafted expert explanation."""
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            record = example_to_record(ex)
            record["explanation"] = draft_expert_explanation(ex.pair, ex.result)
            record["provenance"] = "EXPERT_SEED"
            fh.write(json.dumps(record, sort_keys=True) + "\n")
