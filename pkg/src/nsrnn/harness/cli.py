"""Command-line entry point: ``python3 -m nsrnn.harness <command> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .. import tensor_core as tc
from ..controllers import NsRnn, load_checkpoint
from ..grammars import (
    TASKS,
    Pcfg,
    SizedSampler,
    UnachievableLengthError,
    compute_table,
    read_dataset,
    refactor_remove_epsilon_unary,
    write_dataset,
)
from ..hardest_cfl import GnfGrammar, apply_homomorphism, build_homomorphism, l0_membership
from ..ns_stack import pda_snapshot, wfa_snapshot
from ..wpda import WeightedPda, example_pda
from .data import DataConfig, generate_splits
from .evaluate import evaluate_by_length, save_report
from .grid import MODEL_KINDS, Job, grid_search_restarts, model_config_for, run_job
from .train import TrainConfig

log = logging.getLogger("nsrnn")


def _params(pairs: list[str]) -> dict[str, float]:
    out = {}
    for item in pairs or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {item!r}")
        out[key] = float(value)
    return out


def _train_config(args) -> TrainConfig:
    config = TrainConfig.from_dict(json.loads(Path(args.config).read_text())) if args.config else TrainConfig()
    overrides = {k: v for k, v in {
        "learning_rate": args.lr, "max_epochs": args.max_epochs, "seed": args.seed,
        "restarts": getattr(args, "restarts", None), "dtype": args.precision,
    }.items() if v is not None}
    return replace(config, **overrides)


def _load_splits(data_dir: str):
    d = Path(data_dir)
    return read_dataset(d / "train.txt"), read_dataset(d / "valid.txt")


# -- commands -----------------------------------------------------------------------

def cmd_generate(args) -> int:
    scale = DataConfig.full_scale(args.task) if args.full_scale else DataConfig(task=args.task)
    config = replace(scale, params=_params(args.param), **{k: v for k, v in {
        "min_length": args.min, "max_length": args.max, "train_size": args.train, "valid_size": args.valid,
    }.items() if v is not None})
    train_set, valid_set = generate_splits(config, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_dataset(train_set, out / "train.txt")
    write_dataset(valid_set, out / "valid.txt")
    print(f"wrote {len(train_set)} training and {len(valid_set)} validation strings to {out}")
    return 0


def cmd_train(args) -> int:
    train_set, valid_set = _load_splits(args.data)
    config = _train_config(args)
    model = model_config_for(args.model, train_set.task, args.hidden, args.embedding, config.dtype)
    if args.states or args.symbols:
        model = replace(model, num_states=args.states or model.num_states,
                        num_stack_symbols=args.symbols or model.num_stack_symbols)
    result = run_job(Job(model, config, args.out), train_set, valid_set)
    best = min(result.metrics.epochs, key=lambda r: r.valid_ce_diff)
    print(f"{result.name}: best validation difference {best.valid_ce_diff:.4f} at epoch {best.epoch}")
    return 0


def cmd_grid(args) -> int:
    train_set, valid_set = _load_splits(args.data)
    grid = grid_search_restarts(args.model, train_set, valid_set, _train_config(args), args.out, args.workers)
    best = grid.best_cell
    print(f"best learning rate {best.learning_rate:g}, mean validation difference {best.mean_valid_ce_diff:.4f}")
    return 0


def cmd_evaluate(args) -> int:
    model, extra = load_checkpoint(args.checkpoint)
    task = args.task or extra.get("task")
    if task not in TASKS:
        raise SystemExit(f"unknown task {task!r}; pass --task")
    report = evaluate_by_length(model, task, args.min, args.max, args.per_length, _params(args.param))
    if args.out:
        save_report(report, args.out)
    else:
        sys.stdout.write(report.to_csv())
    return 0


def cmd_inspect_wfa(args) -> int:
    if args.checkpoint:
        model, _ = load_checkpoint(args.checkpoint)
        if not isinstance(model, NsRnn):
            raise SystemExit("inspect-wfa needs an NS-RNN checkpoint")
        encoded = model.encode([args.input])
        eye = np.eye(model.config.vocab_size)
        state = model.initial_state(1, len(args.input))
        prev = model.config.bos
        with tc.no_grad():
            for a in encoded[0]:
                state, _ = model.step(state, tc.Tensor(eye[[prev]]))
                prev = a
        snap = wfa_snapshot(state.stack, args.threshold)
    else:
        pda = WeightedPda.from_text(Path(args.pda).read_text()) if args.pda else example_pda()
        snap = pda_snapshot(pda, args.input, args.threshold)
    text = snap.to_dot()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_sample(args) -> int:
    grammar = refactor_remove_epsilon_unary(Pcfg.load(args.grammar))
    table = compute_table(grammar, args.length)
    rng = np.random.default_rng(args.seed)
    sampler = SizedSampler(grammar, table)
    try:
        for _ in range(args.count):
            print(sampler.sample(grammar.start, args.length, rng))
    except UnachievableLengthError as exc:
        raise SystemExit(str(exc))
    return 0


def cmd_hardest(args) -> int:
    if args.action == "encode":
        h = build_homomorphism(GnfGrammar.load(args.grammar))
        print(apply_homomorphism(h, args.input))
        return 0
    s = apply_homomorphism(build_homomorphism(GnfGrammar.load(args.grammar)), args.input) if args.grammar else args.input
    member = l0_membership(s)
    print("accept" if member else "reject")
    return 0 if member else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nsrnn", description="Nondeterministic stack RNN experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="sample training and validation sets with true log-probabilities")
    g.add_argument("--task", choices=TASKS, required=True)
    g.add_argument("--param", action="append", metavar="NAME=VALUE", help="grammar parameter override")
    g.add_argument("--min", type=int)
    g.add_argument("--max", type=int)
    g.add_argument("--train", type=int)
    g.add_argument("--valid", type=int)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--full-scale", action="store_true", help="lengths 40-80, 10,000/1,000 strings")
    g.add_argument("--out", default="data")
    g.set_defaults(fn=cmd_generate)

    def training_args(q):
        q.add_argument("--model", choices=MODEL_KINDS, required=True)
        q.add_argument("--data", required=True, help="directory holding train.txt and valid.txt")
        q.add_argument("--config", help="JSON training config")
        q.add_argument("--lr", type=float)
        q.add_argument("--max-epochs", type=int)
        q.add_argument("--seed", type=int)
        q.add_argument("--precision", choices=("float64", "float32"))
        q.add_argument("--out", default="runs")

    t = sub.add_parser("train", help="train one model; writes a checkpoint and a metrics CSV")
    training_args(t)
    t.add_argument("--hidden", type=int, default=20)
    t.add_argument("--embedding", type=int, default=20)
    t.add_argument("--states", type=int)
    t.add_argument("--symbols", type=int)
    t.set_defaults(fn=cmd_train)

    gr = sub.add_parser("grid", help="learning-rate (and embedding) grid with random restarts")
    training_args(gr)
    gr.add_argument("--restarts", type=int)
    gr.add_argument("--workers", type=int, default=1)
    gr.set_defaults(fn=cmd_grid)

    e = sub.add_parser("evaluate", help="per-length cross-entropy differences on the fixed test set")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--task", choices=TASKS)
    e.add_argument("--param", action="append", metavar="NAME=VALUE")
    e.add_argument("--min", type=int, default=10)
    e.add_argument("--max", type=int, default=30)
    e.add_argument("--per-length", type=int, default=20)
    e.add_argument("--out", help="CSV path (default: stdout)")
    e.set_defaults(fn=cmd_evaluate)

    w = sub.add_parser("inspect-wfa", help="print the stack WFA for an input as DOT")
    src = w.add_mutually_exclusive_group()
    src.add_argument("--pda", help="PDA text file (default: the built-in example)")
    src.add_argument("--checkpoint", help="NS-RNN checkpoint")
    w.add_argument("--input", required=True)
    w.add_argument("--threshold", type=float, default=0.0)
    w.add_argument("--out")
    w.set_defaults(fn=cmd_inspect_wfa)

    s = sub.add_parser("sample", help="draw strings of an exact length from a PCFG file")
    s.add_argument("--grammar", required=True)
    s.add_argument("--length", type=int, required=True)
    s.add_argument("--count", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(fn=cmd_sample)

    h = sub.add_parser("hardest", help="encode strings into the hardest CFL or check membership")
    h.add_argument("action", choices=("encode", "check"))
    h.add_argument("--grammar", help="GNF grammar file (required for encode)")
    h.add_argument("--input", required=True)
    h.set_defaults(fn=cmd_hardest)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "hardest" and args.action == "encode" and not args.grammar:
        parser.error("hardest encode requires --grammar")
    try:
        return args.fn(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
