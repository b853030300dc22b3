"""Typed execution-plan trees: parsing, serialization, and basic statistics.

The external plan format is a UTF-8 JSON object per node with the keys
"Node Type", "Relation Name", "Total Cost", "Plan Rows" and "Plans"
(children).  Only these five keys are retained; anything else is dropped on
parse.
"""

from __future__ import annotations

import json
import warnings
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum

from .errors import ParamError, PlanArityError, PlanSchemaError, PlanSyntaxError

# Closed operator vocabulary.  Featurization needs a fixed dimension, so
# anything outside this list is mapped to UNKNOWN at parse time.
NODE_TYPES = (
    "Table Scan",
    "Index Scan",
    "Filter",
    "Nested loop inner join",
    "Inner hash join",
    "Hash",
    "Group aggregate",
    "Aggregate",
    "Sort",
    "TopN",
)
UNKNOWN_NODE_TYPE = "UNKNOWN"
SCAN_NODE_TYPES = frozenset({"Table Scan", "Index Scan"})

KEY_NODE_TYPE = "Node Type"
KEY_RELATION = "Relation Name"
KEY_COST = "Total Cost"
KEY_ROWS = "Plan Rows"
KEY_CHILDREN = "Plans"


class Engine(str, Enum):
    TP = "TP"
    AP = "AP"


class UnknownNodeTypeWarning(UserWarning):
    """Raised as a warning when a plan contains an operator outside the vocabulary."""


@dataclass(frozen=True)
class PlanNode:
    """One physical operator: at most two children, engine-local cost units."""

    node_type: str
    relation_name: str | None = None
    total_cost: float = 0.0
    plan_rows: int = 0
    children: tuple["PlanNode", ...] = ()

    def __post_init__(self):
        if self.node_type != UNKNOWN_NODE_TYPE and self.node_type not in NODE_TYPES:
            raise PlanSchemaError(f"node type {self.node_type!r} outside vocabulary")
        is_scan = self.node_type in SCAN_NODE_TYPES
        if is_scan and not self.relation_name:
            raise PlanSchemaError(f"{self.node_type!r} node requires a relation name")
        if not is_scan and self.relation_name is not None:
            raise PlanSchemaError(f"{self.node_type!r} node must not carry a relation name")
        if len(self.children) > 2:
            raise PlanArityError(f"{self.node_type!r} node has {len(self.children)} children")
        if self.total_cost < 0:
            raise PlanSchemaError("total_cost must be non-negative")
        if self.plan_rows < 0:
            raise PlanSchemaError("plan_rows must be non-negative")

    def walk(self):
        """Yield every node in pre-order."""
        yield self
        for child in self.children:
            yield from child.walk()


@dataclass(frozen=True)
class PlanTree:
    root: PlanNode
    engine: Engine


@dataclass(frozen=True)
class PlanPair:
    """Ordered (AP, TP) plans for one query.  AP always comes first."""

    ap_plan: PlanTree
    tp_plan: PlanTree
    query_text: str | None = None

    def __post_init__(self):
        if self.ap_plan.engine is not Engine.AP:
            raise ParamError("ap_plan must come from the AP engine")
        if self.tp_plan.engine is not Engine.TP:
            raise ParamError("tp_plan must come from the TP engine")


@dataclass(frozen=True)
class ExecutionResult:
    """Which engine won and by how much.  Ties resolve to TP."""

    winner: Engine
    tp_latency_ms: float
    ap_latency_ms: float

    def __post_init__(self):
        if self.tp_latency_ms <= 0 or self.ap_latency_ms <= 0:
            raise ParamError("latencies must be strictly positive")
        expected = Engine.AP if self.ap_latency_ms < self.tp_latency_ms else Engine.TP
        if self.winner is not expected:
            raise ParamError(
                f"winner {self.winner.value} inconsistent with latencies "
                f"(tp={self.tp_latency_ms}, ap={self.ap_latency_ms})"
            )

    @classmethod
    def from_latencies(cls, tp_latency_ms: float, ap_latency_ms: float) -> "ExecutionResult":
        winner = Engine.AP if ap_latency_ms < tp_latency_ms else Engine.TP
        return cls(winner=winner, tp_latency_ms=tp_latency_ms, ap_latency_ms=ap_latency_ms)


@dataclass(frozen=True)
class PlanStats:
    node_count: int
    max_depth: int
    node_type_counts: dict[str, int] = field(default_factory=dict)
    scanned_relations: frozenset[str] = frozenset()


def _node_from_obj(obj, *, warn_unknown: bool) -> PlanNode:
    if not isinstance(obj, dict):
        raise PlanSyntaxError(f"plan node must be an object, got {type(obj).__name__}")
    if KEY_NODE_TYPE not in obj:
        raise PlanSchemaError(f'missing required key "{KEY_NODE_TYPE}"')
    node_type = obj[KEY_NODE_TYPE]
    if not isinstance(node_type, str):
        raise PlanSchemaError(f'"{KEY_NODE_TYPE}" must be a string')
    if node_type not in NODE_TYPES:
        if warn_unknown:
            warnings.warn(
                f"unknown node type {node_type!r} mapped to {UNKNOWN_NODE_TYPE}",
                UnknownNodeTypeWarning,
                stacklevel=3,
            )
        node_type = UNKNOWN_NODE_TYPE

    raw_children = obj.get(KEY_CHILDREN, [])
    if not isinstance(raw_children, list):
        raise PlanSyntaxError(f'"{KEY_CHILDREN}" must be an array')
    if len(raw_children) > 2:
        raise PlanArityError(f"node {node_type!r} has {len(raw_children)} children")
    children = tuple(_node_from_obj(c, warn_unknown=warn_unknown) for c in raw_children)

    relation = obj.get(KEY_RELATION)
    if node_type not in SCAN_NODE_TYPES:
        relation = None  # non-scan relation keys are dropped like any other extra key
    cost = obj.get(KEY_COST, 0)
    rows = obj.get(KEY_ROWS, 0)
    if not isinstance(cost, (int, float)) or isinstance(cost, bool):
        raise PlanSchemaError(f'"{KEY_COST}" must be a number')
    if not isinstance(rows, int) or isinstance(rows, bool):
        raise PlanSchemaError(f'"{KEY_ROWS}" must be an integer')
    return PlanNode(
        node_type=node_type,
        relation_name=relation,
        total_cost=float(cost),
        plan_rows=rows,
        children=children,
    )


def plan_node_from_dict(obj: dict, *, warn_unknown: bool = True) -> PlanNode:
    """Build a PlanNode from an already-decoded JSON object."""
    return _node_from_obj(obj, warn_unknown=warn_unknown)


def parse_plan(text: str, engine: Engine | str) -> PlanTree:
    """Parse one serialized plan into a typed tree.

    Unknown operators are kept (as UNKNOWN) and reported via
    UnknownNodeTypeWarning; structural problems raise.
    """
    engine = Engine(engine)
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PlanSyntaxError(f"malformed plan text: {exc}") from exc
    return PlanTree(root=plan_node_from_dict(obj), engine=engine)


def plan_node_to_dict(node: PlanNode) -> dict:
    obj: dict = {KEY_NODE_TYPE: node.node_type}
    if node.relation_name is not None:
        obj[KEY_RELATION] = node.relation_name
    obj[KEY_COST] = node.total_cost
    obj[KEY_ROWS] = node.plan_rows
    if node.children:
        obj[KEY_CHILDREN] = [plan_node_to_dict(c) for c in node.children]
    return obj


def serialize_plan(tree: PlanTree, *, indent: int | None = None) -> str:
    """Serialize to the external JSON format; parse_plan inverts this exactly."""
    return json.dumps(plan_node_to_dict(tree.root), indent=indent)


def plan_stats(tree: PlanTree) -> PlanStats:
    counts: Counter[str] = Counter()
    relations: set[str] = set()
    max_depth = 0

    def visit(node: PlanNode, depth: int):
        nonlocal max_depth
        max_depth = max(max_depth, depth)
        counts[node.node_type] += 1
        if node.relation_name is not None:
            relations.add(node.relation_name)
        for child in node.children:
            visit(child, depth + 1)

    visit(tree.root, 1)
    return PlanStats(
        node_count=sum(counts.values()),
        max_depth=max_depth,
        node_type_counts=dict(counts),
        scanned_relations=frozenset(relations),
    )


# JSON wire helpers shared by dataset files, the CLI and the HTTP service.


def pair_to_dict(pair: PlanPair) -> dict:
    obj: dict = {
        "ap_plan": plan_node_to_dict(pair.ap_plan.root),
        "tp_plan": plan_node_to_dict(pair.tp_plan.root),
    }
    if pair.query_text is not None:
        obj["query_text"] = pair.query_text
    return obj


def pair_from_dict(obj: dict, *, warn_unknown: bool = True) -> PlanPair:
    try:
        ap = obj["ap_plan"]
        tp = obj["tp_plan"]
    except KeyError as exc:
        raise PlanSchemaError(f"plan pair requires key {exc}") from exc
    return PlanPair(
        ap_plan=PlanTree(plan_node_from_dict(ap, warn_unknown=warn_unknown), Engine.AP),
        tp_plan=PlanTree(plan_node_from_dict(tp, warn_unknown=warn_unknown), Engine.TP),
        query_text=obj.get("query_text"),
    )


def result_to_dict(result: ExecutionResult) -> dict:
    return {
        "winner": result.winner.value,
        "tp_latency_ms": result.tp_latency_ms,
        "ap_latency_ms": result.ap_latency_ms,
    }


def result_from_dict(obj: dict) -> ExecutionResult:
    try:
        return ExecutionResult(
            winner=Engine(obj["winner"]),
            tp_latency_ms=float(obj["tp_latency_ms"]),
            ap_latency_ms=float(obj["ap_latency_ms"]),
        )
    except KeyError as exc:
        raise PlanSchemaError(f"execution result requires key {exc}") from exc
