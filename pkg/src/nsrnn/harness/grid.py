"""Hyperparameter grid with random restarts, and single training jobs."""
from __future__ import annotations

import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..controllers import MODEL_KINDS, ModelConfig, build_model, save_checkpoint
from ..grammars import Dataset, TASKS, task_alphabet
from .train import Metrics, TrainConfig, train, write_atomic

# (states, stack symbols) for the nondeterministic stack, per task
NS_STACK_SIZES = {
    "marked-reversal": (2, 2),
    "unmarked-reversal": (2, 2),
    "padded-reversal": (3, 2),
    "dyck": (2, 2),
    "hardest-cfl": (3, 3),
}
EMBEDDING_GRID = (2, 20, 40)


def model_config_for(kind: str, task: str, hidden_size: int = 20, embedding_size: int = 20,
                     dtype: str = "float64") -> ModelConfig:
    nq, ng = NS_STACK_SIZES[task]
    return ModelConfig(kind, task_alphabet(task), hidden_size=hidden_size, num_states=nq, num_stack_symbols=ng,
                       stack_embedding_size=embedding_size, dtype=dtype)


@dataclass(frozen=True)
class Job:
    model: ModelConfig
    train: TrainConfig
    out_dir: str | None = None

    @property
    def name(self) -> str:
        m = self.model
        size = f"q{m.num_states}g{m.num_stack_symbols}" if m.kind == "ns" else f"m{m.stack_embedding_size}"
        return f"{m.kind}-{size}-lr{self.train.learning_rate:g}-seed{self.train.seed}"


@dataclass
class JobResult:
    name: str
    model: ModelConfig
    train: TrainConfig
    metrics: Metrics
    best_valid_ce_diff: float


def run_job(job: Job, train_set: Dataset, valid_set: Dataset) -> JobResult:
    """Train one model; with ``out_dir`` set, persist its metrics CSV and best checkpoint."""
    model = build_model(job.model, np.random.default_rng(np.random.SeedSequence([job.train.seed, 0])))
    result = train(model, train_set, valid_set, job.train)
    if job.out_dir:
        out = Path(job.out_dir)
        write_atomic(out / f"{job.name}.csv", result.metrics.to_csv())
        save_checkpoint(model, out / f"{job.name}.npz",
                        {"train": job.train.to_dict(), "best_epoch": result.best_epoch, "task": train_set.task})
    return JobResult(job.name, job.model, job.train, result.metrics, result.best_valid_ce_diff)


def _run_packed(args):
    return run_job(*args)


@dataclass
class CellResult:
    learning_rate: float
    model: ModelConfig
    runs: list[JobResult] = field(default_factory=list)

    @property
    def mean_valid_ce_diff(self) -> float:
        return float(np.mean([r.best_valid_ce_diff for r in self.runs]))

    @property
    def best_run(self) -> JobResult:
        return min(self.runs, key=lambda r: r.best_valid_ce_diff)


@dataclass
class GridResult:
    cells: list[CellResult]

    @property
    def best_cell(self) -> CellResult:
        return select_best(self.cells)


def select_best(cells: list[CellResult]) -> CellResult:
    """Cell with the lowest mean validation difference; ties go to the smallest (lr, sizes) key."""
    def key(c: CellResult):
        m = c.model
        return (c.mean_valid_ce_diff, c.learning_rate, m.num_states, m.num_stack_symbols, m.stack_embedding_size)
    return min(cells, key=key)


def grid_cells(kind: str, task: str, config: TrainConfig, hidden_size: int = 20,
               embedding_grid=EMBEDDING_GRID) -> list[tuple[float, ModelConfig]]:
    """All (learning rate, model config) pairs searched for one model kind."""
    sizes = embedding_grid if kind in ("superposition", "stratification") else (20,)
    return [
        (lr, model_config_for(kind, task, hidden_size, m, config.dtype))
        for lr, m in itertools.product(config.learning_rate_grid, sizes)
    ]


def grid_search_restarts(kind: str, train_set: Dataset, valid_set: Dataset, config: TrainConfig,
                         out_dir: str | None = None, workers: int = 1, hidden_size: int = 20,
                         embedding_grid=EMBEDDING_GRID) -> GridResult:
    """Every grid cell trained ``config.restarts`` times with seeds ``seed, seed+1, ...``."""
    cells = [CellResult(lr, m) for lr, m in grid_cells(kind, train_set.task, config, hidden_size, embedding_grid)]
    jobs = []
    for cell in cells:
        for r in range(config.restarts):
            tc = replace(config, learning_rate=cell.learning_rate, seed=config.seed + r)
            jobs.append((Job(cell.model, tc, out_dir), train_set, valid_set))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run_packed, jobs))
    else:
        results = [run_job(*j) for j in jobs]
    it = iter(results)
    for cell in cells:
        cell.runs = [next(it) for _ in range(config.restarts)]
    grid = GridResult(cells)
    if out_dir:
        summary = [
            {"learning_rate": c.learning_rate, "model": c.model.to_dict(),
             "mean_valid_ce_diff": c.mean_valid_ce_diff, "runs": [r.name for r in c.runs]}
            for c in cells
        ]
        best = grid.best_cell
        write_atomic(Path(out_dir) / f"{kind}-grid.json",
                     json.dumps({"cells": summary, "best": {"learning_rate": best.learning_rate,
                                                           "model": best.model.to_dict()}}, indent=2))
    return grid
