"""Desk-scale learning check: NS-RNN on marked reversal, NS-RNN vs LSTM on unmarked reversal.

Writes one metrics CSV and checkpoint per restart plus summary.json under --out.
"""
import argparse
import json
import time
from dataclasses import replace
from pathlib import Path

from nsrnn.harness import DataConfig, TrainConfig, generate_splits, grid_search_restarts

MARKED_TARGET = 0.1


def best_of_restarts(kind, task, config, out_dir, workers=1):
    train_set, valid_set = generate_splits(DataConfig(task=task), config.seed)
    grid = grid_search_restarts(kind, train_set, valid_set, config, str(out_dir), workers)
    (cell,) = grid.cells
    return [r.best_valid_ce_diff for r in cell.runs]


def run(out: Path, seed=0, restarts=5, lr=0.005, workers=1, dtype="float64"):
    base = TrainConfig(learning_rate_grid=(lr,), restarts=restarts, seed=seed, max_epochs=50, dtype=dtype)
    summary = {}
    start = time.perf_counter()
    summary["marked_ns"] = best_of_restarts(
        "ns", "marked-reversal", replace(base, target_ce_diff=MARKED_TARGET), out / "marked", workers)
    summary["unmarked_ns"] = best_of_restarts("ns", "unmarked-reversal", base, out / "unmarked", workers)
    summary["unmarked_lstm"] = best_of_restarts("lstm", "unmarked-reversal", base, out / "unmarked", workers)
    summary["seconds"] = time.perf_counter() - start
    summary["marked_pass"] = min(summary["marked_ns"]) < MARKED_TARGET
    summary["unmarked_pass"] = min(summary["unmarked_ns"]) < min(summary["unmarked_lstm"])
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    return summary


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="runs/desk-scale")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--lr", type=float, default=0.005)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--precision", choices=("float64", "float32"), default="float64")
    args = p.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = run(out, args.seed, args.restarts, args.lr, args.workers, args.precision)
    print(json.dumps(summary, indent=2))


if __name__ == "__main__":
    main()
