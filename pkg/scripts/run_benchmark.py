#!/usr/bin/env python3
"""Train and evaluate all three variants on the synthetic gait benchmark.

Generates a train split (normal walks only) and a labeled test split, then
runs train/score/eval per variant and prints a comparison table.
"""

import argparse
import json
import sys
import time
from pathlib import Path

from kinflow.cli import main as kinflow
from kinflow.flow_model import FlowModel


def run(argv):
    code = kinflow(argv)
    if code != 0:
        sys.exit(f"kinflow {' '.join(argv)} exited with {code}")


def parse_args():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="benchmark_out", help="working directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-normal", type=int, default=200)
    p.add_argument("--test-normal", type=int, default=50)
    p.add_argument("--test-anomalous", type=int, default=50)
    p.add_argument("--frames", type=int, default=100)
    p.add_argument("--epochs", type=int, default=8)
    p.add_argument("--svg", action="store_true", help="render score curves per video")
    return p.parse_args()


def main():
    args = parse_args()
    base = Path(args.out)
    t0 = time.perf_counter()

    run(["gen", "--normal", str(args.train_normal), "--anomalous", "0",
         "--seed", str(args.seed), "--frames", str(args.frames),
         "--out", str(base / "train")])
    run(["gen", "--normal", str(args.test_normal), "--anomalous", str(args.test_anomalous),
         "--seed", str(args.seed + 1), "--frames", str(args.frames),
         "--out", str(base / "test")])

    rows = []
    for variant in ("HKVAD1", "HKVAD2", "HKVAD3"):
        model = base / f"model_{variant}.json"
        scores = base / f"scores_{variant}"
        report = base / f"report_{variant}.json"
        t1 = time.perf_counter()
        run(["train", "--manifest", str(base / "train" / "manifest.json"),
             "--variant", variant, "--seed", str(args.seed),
             "--epochs", str(args.epochs), "--out", str(model)])
        train_s = time.perf_counter() - t1
        score_argv = ["score", "--model", str(model),
                      "--manifest", str(base / "test" / "manifest.json"),
                      "--out", str(scores)]
        if args.svg:
            score_argv += ["--svg", str(base / f"svg_{variant}")]
        run(score_argv)
        run(["eval", "--manifest", str(base / "test" / "manifest.json"),
             "--scores", str(scores), "--out", str(report)])
        rep = json.loads(report.read_text())
        n_params = FlowModel.load(model).param_count()
        rows.append((variant, rep["micro_auc"], n_params, train_s))

    print()
    print(f"{'variant':<10}{'micro-AUC':>12}{'parameters':>12}{'train s':>10}")
    for variant, auc, n_params, train_s in rows:
        print(f"{variant:<10}{auc:>12.4f}{n_params:>12}{train_s:>10.2f}")
    print(f"\ntotal wall-clock: {time.perf_counter() - t0:.1f}s  (outputs in {base}/)")


if __name__ == "__main__":
    main()
