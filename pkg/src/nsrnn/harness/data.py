"""Dataset generation for experiments: train/validation splits and fixed test sets."""
from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass, field

import numpy as np

from ..grammars import Dataset, SizedSampler, TaskSource, UnachievableLengthError, log_p_sample_many

log = logging.getLogger(__name__)


def derive_seed(*parts) -> int:
    """Stable 32-bit seed from any printable parts."""
    return zlib.crc32(":".join(str(p) for p in parts).encode("utf-8"))


def test_seed(task: str) -> int:
    """Test sets depend on the task name only, so every experiment shares them."""
    return derive_seed("test", task)


@dataclass
class DataConfig:
    task: str = "marked-reversal"
    params: dict[str, float] = field(default_factory=dict)
    min_length: int = 10
    max_length: int = 20
    train_size: int = 1000
    valid_size: int = 200
    test_min_length: int = 10
    test_max_length: int = 30
    test_per_length: int = 20

    @classmethod
    def full_scale(cls, task: str, **overrides) -> "DataConfig":
        base = dict(task=task, min_length=40, max_length=80, train_size=10_000, valid_size=1_000,
                    test_min_length=40, test_max_length=100, test_per_length=100)
        base.update(overrides)
        return cls(**base)


def generate_splits(config: DataConfig, seed: int) -> tuple[Dataset, Dataset]:
    """Training and validation sets; both are redrawn for every experiment seed."""
    source = TaskSource.build(config.task, config.params, config.max_length)
    train = source.sample(config.min_length, config.max_length, config.train_size, derive_seed("train", seed))
    valid = source.sample(config.min_length, config.max_length, config.valid_size, derive_seed("valid", seed))
    return train, valid


def generate_test_set(config: DataConfig) -> Dataset:
    """``test_per_length`` strings for every achievable length in the test range.

    Log-probabilities are those of uniform-length sampling over the whole
    test range.  Unachievable lengths are skipped with a notice.
    """
    lo, hi = config.test_min_length, config.test_max_length
    source = TaskSource.build(config.task, config.params, hi)
    seed = test_seed(config.task)
    rng = np.random.default_rng(seed)
    sampler = SizedSampler(source.grammar, source.table)
    strings = []
    for length in range(lo, hi + 1):
        try:
            strings.extend(sampler.sample(source.grammar.start, length, rng) for _ in range(config.test_per_length))
        except UnachievableLengthError:
            log.info("skipping length %d: no string of that length in %s", length, config.task)
    logp = log_p_sample_many(source.grammar, source.table, (lo, hi), strings)
    return Dataset(strings, logp, config.task, dict(source.params), (lo, hi), seed)
