import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";
import {
  buildPlanPairView,
  countRows,
  flattenPreorder,
  nodeLabel,
  renderEnginePlan,
  renderPlanPair,
} from "../src/planView.js";
import type { ExecutionResultWire, PlanPairWire } from "../src/types.js";

const here = dirname(fileURLToPath(import.meta.url));
const fixture = JSON.parse(
  readFileSync(join(here, "..", "..", "fixtures", "example1.json"), "utf-8"),
) as { plan_pair: PlanPairWire; execution_result: ExecutionResultWire };

describe("plan view model", () => {
  const view = buildPlanPairView(fixture.plan_pair, fixture.execution_result);

  it("reports the demo node counts", () => {
    expect(view.tp.nodeCount).toBe(9);
    expect(view.ap.nodeCount).toBe(11);
  });

  it("marks AP as the winner with its latencies attached", () => {
    expect(view.winner).toBe("AP");
    expect(view.ap.isWinner).toBe(true);
    expect(view.tp.isWinner).toBe(false);
    expect(view.tp.latencyMs).toBe(5800.0);
    expect(view.ap.latencyMs).toBe(310.0);
  });

  it("node count matches an independent walk of the tree", () => {
    for (const engine of [view.tp, view.ap]) {
      expect(flattenPreorder(engine.root).length).toBe(engine.nodeCount);
      expect(countRows(engine.root)).toBe(engine.nodeCount);
    }
  });

  it("labels carry operator, relation, and row estimate", () => {
    const scans = flattenPreorder(view.tp.root).filter((row) => row.relation !== null);
    expect(scans.length).toBeGreaterThan(0);
    for (const scan of scans) {
      const label = nodeLabel(scan);
      expect(label).toContain(scan.nodeType);
      expect(label).toContain(` on ${scan.relation}`);
      expect(label).toContain(`${scan.planRows} rows`);
    }
    const root = nodeLabel(view.tp.root);
    expect(root).not.toContain(" on ");
  });

  it("preorder flattening keeps parents before children", () => {
    const rows = flattenPreorder(view.ap.root);
    for (let i = 1; i < rows.length; i += 1) {
      expect(rows[i].depth).toBeLessThanOrEqual(rows[i - 1].depth + 1);
    }
    expect(rows[0].depth).toBe(0);
  });
});

describe("plan DOM rendering", () => {
  const view = buildPlanPairView(fixture.plan_pair, fixture.execution_result);

  it("renders one labeled element per node", () => {
    const panel = renderEnginePlan(document, view.ap);
    const labeled = panel.querySelectorAll("summary, .plan-leaf");
    expect(labeled.length).toBe(view.ap.nodeCount);
  });

  it("shows the winner badge only on the winning engine", () => {
    const pair = renderPlanPair(document, view);
    const badges = pair.querySelectorAll(".winner-badge");
    expect(badges.length).toBe(1);
    expect(badges[0].closest(".engine-ap")).not.toBeNull();
  });

  it("inner nodes are collapsible details elements", () => {
    const panel = renderEnginePlan(document, view.tp);
    const details = panel.querySelectorAll("details");
    expect(details.length).toBeGreaterThan(0);
    for (const node of details) {
      expect(node.open).toBe(true);
    }
  });

  it("displays the service-provided node count and latency", () => {
    const panel = renderEnginePlan(document, view.tp);
    const meta = panel.querySelector(".plan-meta");
    expect(meta?.textContent).toContain("9 nodes");
    expect(meta?.textContent).toContain("5800 ms");
  });
});
