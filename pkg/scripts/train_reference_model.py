"""Train the committed reference router and freeze its golden embedding.

The reference model pins down embedding behavior across refactors: the test
suite re-embeds the demo plan pair with this exact model and compares against
the vector stored next to it. Re-run this script only when the embedding
pipeline changes on purpose, and commit both regenerated files.
"""

import argparse
import json
import os
import sys
import time

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from htapxplain import fixtures
from htapxplain.router import Hyperparams, embed_pair, predict, save_model, train
from htapxplain.workload import build_dataset

DEFAULT_OUT_DIR = os.path.join(os.path.dirname(__file__), "..", "tests", "data")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default=DEFAULT_OUT_DIR)
    parser.add_argument("--seed", type=int, default=1, help="dataset seed")
    args = parser.parse_args()

    train_set, _, test_set = build_dataset(seed=args.seed)
    started = time.perf_counter()
    model, report = train(
        [(ex.pair, ex.result) for ex in train_set],
        Hyperparams(),
        holdout=[(ex.pair, ex.result) for ex in test_set],
    )
    elapsed = time.perf_counter() - started
    print(f"trained in {elapsed:.1f}s, final loss {report.final_loss:.4f}, "
          f"holdout accuracy {report.final_accuracy:.3f}")

    os.makedirs(args.out_dir, exist_ok=True)
    model_path = os.path.join(args.out_dir, "reference_router.json")
    save_model(model, model_path)
    print(f"model written to {model_path} ({os.path.getsize(model_path)} bytes)")

    pair = fixtures.demo_pair()
    winner, probs = predict(model, pair)
    golden = {
        "dataset_seed": args.seed,
        "holdout_accuracy": report.final_accuracy,
        "embedding": [float(x) for x in embed_pair(model, pair)],
        "predicted_winner": winner.value,
        "probabilities": [float(p) for p in probs],
    }
    golden_path = os.path.join(args.out_dir, "golden_embedding.json")
    with open(golden_path, "w", encoding="utf-8") as fh:
        json.dump(golden, fh, indent=2)
        fh.write("\n")
    print(f"golden embedding written to {golden_path} "
          f"(demo winner {winner.value})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
