"""Built-in demo artifacts: a three-way join with its real TP/AP plans.

This is the canonical pair used across tests, the CLI and the console demo:
a COUNT(*) join over customer/nation/orders where a function-wrapped phone
predicate blocks index use, so TP falls back to nested loops (5.80 s) while
AP streams through hash joins (310 ms).
"""

from __future__ import annotations

from .plans import (
    Engine,
    ExecutionResult,
    PlanPair,
    PlanTree,
    plan_node_from_dict,
)

DEMO_QUERY_SQL = (
    "SELECT COUNT(*) FROM customer, nation, orders "
    "WHERE SUBSTRING(c_phone, 1, 2) IN ('20', '40', '22', '30', '39', '42', '21') "
    "AND c_mktsegment = 'machinery' "
    "AND n_name = 'egypt' AND o_orderstatus = 'p' "
    "AND o_custkey = c_custkey "
    "AND n_nationkey = c_nationkey;"
)

DEMO_TP_LATENCY_MS = 5800.0
DEMO_AP_LATENCY_MS = 310.0

DEMO_TP_PLAN = {
    "Node Type": "Group aggregate",
    "Total Cost": 5213.0,
    "Plan Rows": 1,
    "Plans": [
        {
            "Node Type": "Nested loop inner join",
            "Total Cost": 5175.0,
            "Plan Rows": 379,
            "Plans": [
                {
                    "Node Type": "Nested loop inner join",
                    "Total Cost": 1002.0,
                    "Plan Rows": 285,
                    "Plans": [
                        {
                            "Node Type": "Filter",
                            "Total Cost": 2.75,
                            "Plan Rows": 2,
                            "Plans": [
                                {
                                    "Node Type": "Table Scan",
                                    "Relation Name": "nation",
                                    "Total Cost": 2.75,
                                    "Plan Rows": 25,
                                }
                            ],
                        },
                        {
                            "Node Type": "Filter",
                            "Total Cost": 290.0,
                            "Plan Rows": 114,
                            "Plans": [
                                {
                                    "Node Type": "Table Scan",
                                    "Relation Name": "customer",
                                    "Total Cost": 290.0,
                                    "Plan Rows": 1142,
                                }
                            ],
                        },
                    ],
                },
                {
                    "Node Type": "Filter",
                    "Total Cost": 13.3,
                    "Plan Rows": 1,
                    "Plans": [
                        {
                            "Node Type": "Table Scan",
                            "Relation Name": "orders",
                            "Total Cost": 13.3,
                            "Plan Rows": 13,
                        }
                    ],
                },
            ],
        }
    ],
}

DEMO_AP_PLAN = {
    "Node Type": "Aggregate",
    "Total Cost": 16500000.0,
    "Plan Rows": 1,
    "Plans": [
        {
            "Node Type": "Inner hash join",
            "Total Cost": 16500000.0,
            "Plan Rows": 134933,
            "Plans": [
                {
                    "Node Type": "Filter",
                    "Total Cost": 13500000.0,
                    "Plan Rows": 13500000,
                    "Plans": [
                        {
                            "Node Type": "Table Scan",
                            "Relation Name": "orders",
                            "Total Cost": 0.5,
                            "Plan Rows": 135000000,
                        }
                    ],
                },
                {
                    "Node Type": "Hash",
                    "Plans": [
                        {
                            "Node Type": "Inner hash join",
                            "Total Cost": 1640000.0,
                            "Plan Rows": 135985,
                            "Plans": [
                                {
                                    "Node Type": "Filter",
                                    "Total Cost": 1500000.0,
                                    "Plan Rows": 1360000,
                                    "Plans": [
                                        {
                                            "Node Type": "Table Scan",
                                            "Relation Name": "customer",
                                            "Total Cost": 0.5,
                                            "Plan Rows": 13600000,
                                        }
                                    ],
                                },
                                {
                                    "Node Type": "Hash",
                                    "Plans": [
                                        {
                                            "Node Type": "Filter",
                                            "Total Cost": 3.0,
                                            "Plan Rows": 2,
                                            "Plans": [
                                                {
                                                    "Node Type": "Table Scan",
                                                    "Relation Name": "nation",
                                                    "Total Cost": 0.5,
                                                    "Plan Rows": 25,
                                                }
                                            ],
                                        }
                                    ],
                                },
                            ],
                        }
                    ],
                },
            ],
        }
    ],
}


def demo_pair() -> PlanPair:
    return PlanPair(
        ap_plan=PlanTree(plan_node_from_dict(DEMO_AP_PLAN), Engine.AP),
        tp_plan=PlanTree(plan_node_from_dict(DEMO_TP_PLAN), Engine.TP),
        query_text=DEMO_QUERY_SQL,
    )


def demo_result() -> ExecutionResult:
    return ExecutionResult.from_latencies(
        tp_latency_ms=DEMO_TP_LATENCY_MS, ap_latency_ms=DEMO_AP_LATENCY_MS
    )


def demo_request_dict() -> dict:
    """The demo pair in the explain-request wire shape (CLI --pair files, POST /api/explain)."""
    from .plans import pair_to_dict, result_to_dict

    return {
        "query_text": DEMO_QUERY_SQL,
        "plan_pair": pair_to_dict(demo_pair()),
        "execution_result": result_to_dict(demo_result()),
    }
