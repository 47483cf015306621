"""Datasets of sampled strings plus a JSON sidecar with their true log-probabilities.

``NAME.txt`` holds one string per line.  ``NAME.txt.json`` holds the task,
grammar parameters, length range, seed and per-string ``log_p_sample``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .inside import log_p_sample_many
from .refactor import refactor_remove_epsilon_unary
from .sampling import LengthTable, compute_table, sample_dataset
from .tasks import build_task_grammar, task_params

SIDECAR_SUFFIX = ".json"


class MissingSidecarError(FileNotFoundError):
    pass


@dataclass
class Dataset:
    strings: list[str]
    log_p_sample: np.ndarray
    task: str = ""
    params: dict[str, float] = field(default_factory=dict)
    length_range: tuple[int, int] = (0, 0)
    seed: int | None = None

    def __len__(self) -> int:
        return len(self.strings)

    @property
    def num_symbols(self) -> int:
        return sum(len(s) for s in self.strings)

    def true_cross_entropy(self) -> float:
        """Per-symbol cross-entropy of the sampling distribution on these strings."""
        return float(-np.sum(self.log_p_sample) / self.num_symbols)

    def subset(self, indices) -> "Dataset":
        idx = list(indices)
        return Dataset(
            [self.strings[i] for i in idx], self.log_p_sample[idx], self.task, dict(self.params), self.length_range, self.seed
        )


@dataclass
class TaskSource:
    """A task grammar prepared for sampling over lengths up to ``max_length``."""

    task: str
    params: dict[str, float]
    grammar: Any
    table: LengthTable

    @classmethod
    def build(cls, task: str, params: dict[str, float] | None, max_length: int) -> "TaskSource":
        merged = task_params(task, params)
        grammar = refactor_remove_epsilon_unary(build_task_grammar(task, merged))
        return cls(task, merged, grammar, compute_table(grammar, max_length))

    def sample(self, min_length: int, max_length: int, count: int, seed: int) -> Dataset:
        rng = np.random.default_rng(seed)
        strings = sample_dataset(self.grammar, min_length, max_length, count, rng, self.table)
        logp = log_p_sample_many(self.grammar, self.table, (min_length, max_length), strings)
        return Dataset(strings, logp, self.task, dict(self.params), (min_length, max_length), seed)


def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + SIDECAR_SUFFIX)


def write_dataset(dataset: Dataset, path: str | Path) -> None:
    path = Path(path)
    path.write_text("".join(s + "\n" for s in dataset.strings), encoding="utf-8")
    meta = {
        "task": dataset.task,
        "params": dataset.params,
        "length_range": list(dataset.length_range),
        "seed": dataset.seed,
        "log_p_sample": [float(x) for x in dataset.log_p_sample],
    }
    sidecar_path(path).write_text(json.dumps(meta, indent=1), encoding="utf-8")


def read_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    strings = path.read_text(encoding="utf-8").splitlines()
    side = sidecar_path(path)
    if not side.exists():
        raise MissingSidecarError(f"{path}: sidecar {side.name} not found")
    meta = json.loads(side.read_text(encoding="utf-8"))
    logp = np.array([float(x) if x is not None else -math.inf for x in meta["log_p_sample"]])
    if len(logp) != len(strings):
        raise ValueError(f"{path}: {len(strings)} strings but {len(logp)} sidecar log-probabilities")
    return Dataset(strings, logp, meta.get("task", ""), meta.get("params", {}), tuple(meta.get("length_range", (0, 0))), meta.get("seed"))
