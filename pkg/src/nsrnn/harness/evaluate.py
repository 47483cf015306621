"""Per-length cross-entropy differences on a fixed test set."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass

import numpy as np

from ..controllers import LanguageModel
from ..grammars import Dataset
from .data import DataConfig, generate_test_set
from .train import cross_entropy, write_atomic

log = logging.getLogger(__name__)

LENGTH_HEADER = ("length", "ce_diff")
STRINGS_HEADER = ("index", "length", "model_log_prob", "true_log_prob")


@dataclass
class LengthReport:
    rows: list[tuple[int, float]]
    skipped: list[int]
    model_log_probs: np.ndarray
    dataset: Dataset

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LENGTH_HEADER)
        w.writerows((n, repr(d)) for n, d in self.rows)
        return buf.getvalue()

    def strings_csv(self) -> str:
        """Per-string log-likelihoods; the length table is recomputable from these alone."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(STRINGS_HEADER)
        for i, (s, m, t) in enumerate(zip(self.dataset.strings, self.model_log_probs, self.dataset.log_p_sample)):
            w.writerow((i, len(s), repr(float(m)), repr(float(t))))
        return buf.getvalue()


def differences_by_length(lengths, model_logp, true_logp) -> list[tuple[int, float]]:
    lengths = np.asarray(lengths)
    model_logp, true_logp = np.asarray(model_logp), np.asarray(true_logp)
    rows = []
    for n in sorted(set(lengths.tolist())):
        mask = lengths == n
        symbols = int(n * mask.sum())
        rows.append((n, cross_entropy(model_logp[mask], symbols) - cross_entropy(true_logp[mask], symbols)))
    return rows


def differences_from_strings_csv(text: str) -> list[tuple[int, float]]:
    rows = list(csv.DictReader(io.StringIO(text)))
    return differences_by_length(
        [int(r["length"]) for r in rows],
        [float(r["model_log_prob"]) for r in rows],
        [float(r["true_log_prob"]) for r in rows],
    )


def evaluate_on(model: LanguageModel, test_set: Dataset) -> LengthReport:
    logp = model.log_prob_strings(test_set.strings)
    rows = differences_by_length([len(s) for s in test_set.strings], logp, test_set.log_p_sample)
    lo, hi = test_set.length_range
    present = {n for n, _ in rows}
    skipped = [n for n in range(lo, hi + 1) if n not in present]
    return LengthReport(rows, skipped, logp, test_set)


def evaluate_by_length(model: LanguageModel, task: str, min_length: int = 10, max_length: int = 30,
                       per_length: int = 20, params: dict | None = None) -> LengthReport:
    """Evaluate on the task's fixed test set over ``[min_length, max_length]``."""
    config = DataConfig(task=task, params=dict(params or {}), test_min_length=min_length,
                        test_max_length=max_length, test_per_length=per_length)
    report = evaluate_on(model, generate_test_set(config))
    for n in report.skipped:
        log.warning("length %d skipped: unachievable in %s", n, task)
    return report


def save_report(report: LengthReport, path) -> None:
    write_atomic(path, report.to_csv())
    write_atomic(f"{path}.strings.csv", report.strings_csv())
