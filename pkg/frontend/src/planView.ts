/**
 * Side-by-side plan rendering.
 *
 * Plans come in as the EXPLAIN-style JSON the service round-trips; they are
 * shown as collapsible indented trees (matching the nesting users already
 * know from EXPLAIN output) rather than graphs. All figures on screen are
 * lifted from the wire data; nothing is re-derived.
 */

import type {
  Engine,
  ExecutionResultWire,
  PlanNodeWire,
  PlanPairWire,
} from "./types.js";

export interface PlanRow {
  depth: number;
  nodeType: string;
  relation: string | null;
  planRows: number;
  totalCost: number;
  children: PlanRow[];
}

export interface EnginePlanView {
  engine: Engine;
  root: PlanRow;
  nodeCount: number;
  isWinner: boolean;
  latencyMs: number;
}

export interface PlanPairView {
  tp: EnginePlanView;
  ap: EnginePlanView;
  winner: Engine;
}

function toRow(node: PlanNodeWire, depth: number): PlanRow {
  return {
    depth,
    nodeType: node["Node Type"],
    relation: node["Relation Name"] ?? null,
    planRows: node["Plan Rows"],
    totalCost: node["Total Cost"],
    children: (node.Plans ?? []).map((child) => toRow(child, depth + 1)),
  };
}

export function countRows(row: PlanRow): number {
  return 1 + row.children.reduce((sum, child) => sum + countRows(child), 0);
}

export function flattenPreorder(row: PlanRow): PlanRow[] {
  return [row, ...row.children.flatMap(flattenPreorder)];
}

/** One line per operator: type, scanned relation if any, and row estimate. */
export function nodeLabel(row: PlanRow): string {
  const relation = row.relation === null ? "" : ` on ${row.relation}`;
  return `${row.nodeType}${relation} · ${row.planRows} rows`;
}

export function buildPlanPairView(
  pair: PlanPairWire,
  result: ExecutionResultWire,
): PlanPairView {
  const build = (engine: Engine, node: PlanNodeWire, latencyMs: number): EnginePlanView => {
    const root = toRow(node, 0);
    return {
      engine,
      root,
      nodeCount: countRows(root),
      isWinner: result.winner === engine,
      latencyMs,
    };
  };
  return {
    tp: build("TP", pair.tp_plan, result.tp_latency_ms),
    ap: build("AP", pair.ap_plan, result.ap_latency_ms),
    winner: result.winner,
  };
}

function renderRow(doc: Document, row: PlanRow): HTMLElement {
  if (row.children.length === 0) {
    const leaf = doc.createElement("div");
    leaf.className = "plan-node plan-leaf";
    leaf.textContent = nodeLabel(row);
    return leaf;
  }
  const details = doc.createElement("details");
  details.className = "plan-node";
  details.open = true;
  const summary = doc.createElement("summary");
  summary.textContent = nodeLabel(row);
  details.appendChild(summary);
  for (const child of row.children) {
    details.appendChild(renderRow(doc, child));
  }
  return details;
}

export function renderEnginePlan(doc: Document, view: EnginePlanView): HTMLElement {
  const panel = doc.createElement("section");
  panel.className = `plan-panel engine-${view.engine.toLowerCase()}`;

  const heading = doc.createElement("h3");
  heading.textContent = `${view.engine} plan`;
  if (view.isWinner) {
    const badge = doc.createElement("span");
    badge.className = "winner-badge";
    badge.textContent = "winner";
    heading.appendChild(badge);
  }
  panel.appendChild(heading);

  const meta = doc.createElement("p");
  meta.className = "plan-meta";
  meta.textContent = `${view.nodeCount} nodes · ${view.latencyMs} ms`;
  panel.appendChild(meta);

  panel.appendChild(renderRow(doc, view.root));
  return panel;
}

export function renderPlanPair(doc: Document, view: PlanPairView): HTMLElement {
  const wrap = doc.createElement("div");
  wrap.className = "plan-pair";
  wrap.appendChild(renderEnginePlan(doc, view.ap));
  wrap.appendChild(renderEnginePlan(doc, view.tp));
  return wrap;
}
