"""Training loop with length-bucketed batches, LR decay and early stopping."""
from __future__ import annotations

import csv
import io
import logging
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .. import tensor_core as tc
from ..controllers import LanguageModel
from ..grammars import Dataset

log = logging.getLogger(__name__)

LEARNING_RATE_GRID = (0.01, 0.005, 0.001, 0.0005)
METRICS_HEADER = ("epoch", "train_ce", "valid_ce", "valid_ce_diff", "lr")


class TrainingError(RuntimeError):
    """Training aborted; ``batch`` holds the strings of the offending batch."""

    def __init__(self, message: str, epoch: int, batch: list[str]):
        super().__init__(f"{message} (epoch {epoch}, batch {batch})")
        self.epoch = epoch
        self.batch = batch


@dataclass
class TrainConfig:
    learning_rate: float = 0.005
    learning_rate_grid: tuple[float, ...] = LEARNING_RATE_GRID
    batch_size: int = 10
    clip_threshold: float = 5.0
    decay_factor: float = 0.9
    decay_patience: int = 5
    stop_patience: int = 10
    max_epochs: int = 50
    restarts: int = 5
    seed: int = 0
    dtype: str = "float64"
    # stop as soon as the validation difference falls below this value
    target_ce_diff: float | None = None

    def __post_init__(self):
        self.learning_rate_grid = tuple(self.learning_rate_grid)
        if not self.learning_rate_grid:
            raise ValueError("learning rate grid must not be empty")
        numbers = (self.learning_rate, self.batch_size, self.clip_threshold, self.decay_factor,
                   self.decay_patience, self.stop_patience, self.max_epochs, self.restarts, *self.learning_rate_grid)
        if min(numbers) <= 0:
            raise ValueError("training settings must be positive")
        if self.dtype not in ("float64", "float32"):
            raise ValueError(f"unsupported precision {self.dtype!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["learning_rate_grid"] = list(self.learning_rate_grid)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class EpochRecord:
    epoch: int
    train_ce: float
    valid_ce: float
    valid_ce_diff: float
    lr: float


@dataclass
class Metrics:
    epochs: list[EpochRecord] = field(default_factory=list)

    def add(self, record: EpochRecord) -> None:
        if self.epochs and record.epoch <= self.epochs[-1].epoch:
            raise ValueError("epochs must be strictly increasing")
        self.epochs.append(record)

    @property
    def lr_trace(self) -> list[float]:
        return [r.lr for r in self.epochs]

    @property
    def best(self) -> EpochRecord:
        return min(self.epochs, key=lambda r: (r.valid_ce_diff, r.epoch))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
        for r in self.epochs:
            writer.writerow([r.epoch, repr(r.train_ce), repr(r.valid_ce), repr(r.valid_ce_diff), repr(r.lr)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Metrics":
        rows = list(csv.reader(io.StringIO(text)))
        if tuple(rows[0]) != METRICS_HEADER:
            raise ValueError(f"unexpected metrics header {rows[0]}")
        m = cls()
        for row in rows[1:]:
            m.add(EpochRecord(int(row[0]), *map(float, row[1:])))
        return m


def write_atomic(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.chmod(tmp, 0o666 & ~current_umask())  # mkstemp creates files owner-only
    os.replace(tmp, path)


def current_umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


# -- cross-entropy ------------------------------------------------------------------

def cross_entropy(log_probs: np.ndarray, num_symbols: int) -> float:
    """Per-symbol cross-entropy in nats from per-string log-probabilities."""
    return float(-np.sum(log_probs) / num_symbols)


def cross_entropy_diff(model: LanguageModel, dataset: Dataset) -> float:
    """Model cross-entropy minus the sampling distribution's, on the same strings."""
    logp = model.log_prob_strings(dataset.strings)
    return cross_entropy(logp, dataset.num_symbols) - dataset.true_cross_entropy()


# -- batching -------------------------------------------------------------------------

def length_batches(dataset: Dataset, batch_size: int, rng: np.random.Generator) -> list[list[int]]:
    """One epoch of index batches, ``len(dataset) // batch_size`` of them.

    Each batch draws a length from the dataset's empirical length
    distribution, then ``batch_size`` strings of that length with replacement.
    """
    by_length: dict[int, list[int]] = {}
    for i, s in enumerate(dataset.strings):
        by_length.setdefault(len(s), []).append(i)
    lengths = sorted(by_length)
    counts = np.array([len(by_length[n]) for n in lengths], dtype=float)
    num_batches = max(1, len(dataset) // batch_size)
    chosen = rng.choice(len(lengths), size=num_batches, p=counts / counts.sum())
    batches = []
    for c in chosen:
        pool = by_length[lengths[c]]
        batches.append([pool[k] for k in rng.integers(0, len(pool), size=batch_size)])
    return batches


# -- training ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    metrics: Metrics
    best_epoch: int
    best_valid_ce_diff: float
    best_params: dict[str, np.ndarray]
    stopped_early: bool


def train(
    model: LanguageModel,
    train_set: Dataset,
    valid_set: Dataset,
    config: TrainConfig,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> TrainResult:
    """Train ``model`` in place; on return its parameters are the best-validation ones."""
    if not train_set.strings or not valid_set.strings:
        raise ValueError("training and validation sets must be non-empty")
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    optimizer = tc.Adam(model.parameters(), lr=config.learning_rate, clip_threshold=config.clip_threshold)
    valid_true = valid_set.true_cross_entropy()
    metrics = Metrics()
    best_diff, best_epoch = math.inf, 0
    best_params = {k: p.data.copy() for k, p in model.params.items()}
    stale = 0
    stopped_early = False

    for epoch in range(1, config.max_epochs + 1):
        total_logp, total_symbols = 0.0, 0
        for batch_idx in length_batches(train_set, config.batch_size, rng):
            strings = [train_set.strings[i] for i in batch_idx]
            encoded = model.encode(strings)
            logp = model.string_log_probs(encoded)
            symbols = encoded.size
            loss = -tc.sum(logp) / float(symbols)
            if not np.isfinite(loss.data):
                raise TrainingError("non-finite training loss", epoch, strings)
            optimizer.zero_grad()
            loss.backward()
            try:
                optimizer.step()
            except tc.NonFiniteGradientError as exc:
                raise TrainingError(str(exc), epoch, strings) from None
            total_logp += float(np.sum(logp.data))
            total_symbols += symbols

        valid_logp = model.log_prob_strings(valid_set.strings)
        valid_ce = cross_entropy(valid_logp, valid_set.num_symbols)
        record = EpochRecord(epoch, -total_logp / total_symbols, valid_ce, valid_ce - valid_true, optimizer.lr)
        metrics.add(record)
        if on_epoch:
            on_epoch(record)
        log.info("epoch %d train %.4f valid %.4f diff %.4f lr %.3g", *asdict(record).values())

        if record.valid_ce_diff < best_diff:
            best_diff, best_epoch, stale = record.valid_ce_diff, epoch, 0
            best_params = {k: p.data.copy() for k, p in model.params.items()}
            if config.target_ce_diff is not None and best_diff < config.target_ce_diff:
                stopped_early = True
                break
        else:
            stale += 1
            if stale >= config.stop_patience:
                stopped_early = True
                break
            if stale % config.decay_patience == 0:
                optimizer.lr *= config.decay_factor

    for k, p in model.params.items():
        p.data[...] = best_params[k]
    return TrainResult(metrics, best_epoch, best_diff, best_params, stopped_early)
