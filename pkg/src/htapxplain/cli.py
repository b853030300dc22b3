"""Command-line front end: one subcommand per pipeline stage.

Exit codes: 0 success, 1 operational error (reported on stderr with its
stable code), 2 usage error (argparse's own convention).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import HtapxplainError, ParamError
from .kb import KnowledgeStore, Provenance, load_store
from .llm import LlmConfig, MockMode, Provider
from .pipeline import ExplainRequest, explain
from .plans import pair_from_dict, result_from_dict
from .router import Hyperparams, embed_pair, load_model, save_model, train
from .workload import (
    build_dataset,
    read_dataset,
    record_to_pair_result,
    write_dataset,
    write_kb_seed,
)


def parse_k_range(text: str) -> list[int]:
    """Accepts "2", "1,3,5", or "1..5"."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            values = list(range(int(lo), int(hi) + 1))
        else:
            values = [int(part) for part in text.split(",") if part]
    except ValueError:
        raise ParamError(f"cannot parse k range {text!r}") from None
    if not values:
        raise ParamError(f"k range {text!r} is empty")
    return values


def _llm_config(args: argparse.Namespace) -> LlmConfig:
    provider = Provider(args.llm.upper())
    if provider is Provider.REMOTE:
        return LlmConfig(
            provider=provider,
            endpoint=args.endpoint,
            model_name=args.model_name,
        )
    return LlmConfig(mock_mode=MockMode(args.mock_mode.upper()))


def _add_llm_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--llm", choices=["mock", "remote"], default="mock")
    parser.add_argument("--mock-mode", choices=["echo", "none", "none_below_k"],
                        default="echo")
    parser.add_argument("--endpoint", help="chat-completion URL (remote only)")
    parser.add_argument("--model-name", default="mock-explainer")


def _load_kb(path: str, autosave: bool = False) -> KnowledgeStore:
    if os.path.exists(path):
        return load_store(path, autosave=autosave)
    store = KnowledgeStore(autosave_path=path if autosave else None)
    return store


def cmd_gen_workload(args: argparse.Namespace) -> int:
    train_set, kb_seed, test_set = build_dataset(
        n_train=args.n_train, n_kb=args.n_kb, n_test=args.n_test, seed=args.seed
    )
    os.makedirs(args.out_dir, exist_ok=True)
    write_dataset(train_set, os.path.join(args.out_dir, "train.jsonl"))
    write_dataset(test_set, os.path.join(args.out_dir, "test.jsonl"))
    write_kb_seed(kb_seed, os.path.join(args.out_dir, "kb_seed.jsonl"))
    print(f"wrote {len(train_set)} train, {len(test_set)} test, "
          f"{len(kb_seed)} kb seed examples to {args.out_dir}")
    return 0


def cmd_train_router(args: argparse.Namespace) -> int:
    data = read_dataset(args.train)
    holdout = read_dataset(args.holdout) if args.holdout else None
    hyper = Hyperparams(
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        init_scale=args.init_scale,
        seed=args.seed,
    )
    model, report = train(data, hyper, holdout=holdout)
    save_model(model, args.out)
    summary = f"final loss {report.final_loss:.4f}"
    if report.holdout_accuracies:
        summary += f", holdout accuracy {report.final_accuracy:.3f}"
    print(f"trained on {len(data)} examples over {hyper.epochs} epochs: {summary}")
    print(f"model written to {args.out}")
    return 0


def cmd_ingest(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    store = _load_kb(args.kb)
    with open(args.entries, encoding="utf-8") as fh:
        records = [json.loads(line) for line in fh if line.strip()]
    for record in records:
        pair, result = record_to_pair_result(record)
        explanation = record.get("explanation", "")
        if not explanation:
            raise ParamError("ingest records need an explanation field")
        store.insert(
            key=embed_pair(model, pair),
            query_text=pair.query_text or "",
            plan_details=pair,
            execution_result=result,
            explanation=explanation,
            provenance=Provenance(record.get("provenance", "EXPERT_SEED")),
        )
    store.persist(args.kb)
    print(f"knowledge base {args.kb} now holds {len(store)} entries")
    return 0


def cmd_explain(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    store = load_store(args.kb)
    with open(args.pair, encoding="utf-8") as fh:
        payload = json.load(fh)
    pair = pair_from_dict(payload["plan_pair"], warn_unknown=False)
    result = (result_from_dict(payload["execution_result"])
              if payload.get("execution_result") else None)
    request = ExplainRequest(
        query_text=payload.get("query_text") or pair.query_text
        or "(query text unavailable)",
        pair=pair,
        result=result,
        user_context=args.context,
        k=args.k,
        baseline=args.baseline,
    )
    res = explain(request, model, store, _llm_config(args))
    print(f"status: {res.status.value}", file=sys.stderr)
    print(f"retrieved: {[(i, round(s, 4)) for i, s in res.retrieved]}", file=sys.stderr)
    t = res.timings
    print(f"timings ms: encode {t.encode_ms:.3f}, search {t.search_ms:.3f}, "
          f"think {t.llm_think_ms:.3f}, generate {t.llm_generate_ms:.3f}",
          file=sys.stderr)
    if res.status.value == "ERROR":
        print(res.error, file=sys.stderr)
        return 1
    print(res.explanation if res.explanation is not None else "None")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    from .evaluation import (
        format_k_sweep,
        format_timings,
        measure_timings,
        report_to_records,
        run_k_sweep,
    )

    model = load_model(args.model)
    store = load_store(args.kb)
    if args.eval_command == "k-sweep":
        test_set = read_dataset(args.test)
        report = run_k_sweep(test_set, model, store, _llm_config(args),
                             k_range=parse_k_range(args.k))
        print(format_k_sweep(report))
        if args.out:
            with open(args.out, "w", encoding="utf-8") as fh:
                for record in report_to_records(report):
                    fh.write(json.dumps(record, sort_keys=True) + "\n")
            print(f"records written to {args.out}", file=sys.stderr)
    else:
        report = measure_timings(model, store, n_requests=args.n)
        print(format_timings(report))
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    from .service import ServiceConfig, serve

    config = ServiceConfig(
        model_path=args.model,
        kb_path=args.kb,
        host=args.host,
        port=args.port,
        default_k=args.default_k,
        llm=_llm_config(args),
    )
    print(f"serving on http://{config.host}:{config.port}", file=sys.stderr)
    serve(config)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="htapxplain",
        description="Explain TP/AP plan performance gaps with retrieval-augmented "
                    "generation over an expert knowledge base.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-workload", help="generate labeled train/test/KB-seed data")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-train", type=int, default=400)
    p.add_argument("--n-kb", type=int, default=20)
    p.add_argument("--n-test", type=int, default=200)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=cmd_gen_workload)

    p = sub.add_parser("train-router", help="train the plan-pair router")
    p.add_argument("--train", required=True)
    p.add_argument("--holdout")
    p.add_argument("--out", required=True)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--init-scale", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_router)

    p = sub.add_parser("ingest", help="embed expert records into the knowledge base")
    p.add_argument("--kb", required=True)
    p.add_argument("--entries", required=True)
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("explain", help="explain one plan pair")
    p.add_argument("--pair", required=True, help="JSON file with plan_pair and "
                   "optional query_text/execution_result")
    p.add_argument("--kb", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--context", help="extra user context appended to the prompt")
    p.add_argument("--baseline", action="store_true",
                   help="skip retrieval (no KNOWLEDGE blocks)")
    _add_llm_flags(p)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("eval", help="run the evaluation harness")
    eval_sub = p.add_subparsers(dest="eval_command", required=True)
    ks = eval_sub.add_parser("k-sweep", help="accuracy/none-rate per retrieval depth")
    ks.add_argument("--test", required=True)
    ks.add_argument("--kb", required=True)
    ks.add_argument("--model", required=True)
    ks.add_argument("--k", default="1..5")
    ks.add_argument("--out", help="write line-delimited report records here")
    _add_llm_flags(ks)
    ks.set_defaults(func=cmd_eval)
    tm = eval_sub.add_parser("timings", help="embed/search wall-clock statistics")
    tm.add_argument("--kb", required=True)
    tm.add_argument("--model", required=True)
    tm.add_argument("--n", type=int, default=1000)
    tm.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--model", required=True)
    p.add_argument("--kb", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--default-k", type=int, default=2)
    _add_llm_flags(p)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except HtapxplainError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"E_IO: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
