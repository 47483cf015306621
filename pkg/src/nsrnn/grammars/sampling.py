"""Exact length-conditioned sampling from a PCFG free of ε- and unary rules."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .pcfg import GrammarError, Pcfg, Rule


class UnachievableLengthError(GrammarError):
    """No string of the requested length can be derived."""


def compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    """Ordered ``parts``-tuples of positive integers summing to ``total``, lexicographically."""
    if parts == 0:
        if total == 0:
            yield ()
        return
    if parts == 1:
        if total >= 1:
            yield (total,)
        return
    for first in range(1, total - parts + 2):
        for rest in compositions(total - first, parts - 1):
            yield (first,) + rest


def _check_shape(g: Pcfg) -> None:
    if g.has_epsilon_rules() or g.has_unary_rules():
        raise GrammarError("grammar must be free of ε-rules and unary rules; refactor it first")


@dataclass
class LengthTable:
    """``T[X, ℓ]``: total weight of strings of length ℓ derived from X, for ℓ ≤ ``max_length``."""

    grammar: Pcfg
    values: np.ndarray  # (|N|, max_length + 1)
    index: dict[str, int] = field(repr=False)

    @property
    def max_length(self) -> int:
        return self.values.shape[1] - 1

    def __getitem__(self, key: tuple[str, int]) -> float:
        x, length = key
        if x not in self.index:
            raise KeyError(x)
        if length < 0 or length > self.max_length:
            if length > self.max_length:
                raise IndexError(f"table only covers lengths up to {self.max_length}")
            return 0.0
        return float(self.values[self.index[x], length])


def compute_weights(g: Pcfg, table: LengthTable, x: str, length: int) -> list[tuple[Rule, tuple[int, ...], float]]:
    """Every (rule, composition) for X at ``length`` with its weight ``t[β, C]``."""
    out = []
    for rule in g.rules_for(x):
        nts = [s for s in rule.rhs if g.is_nonterminal(s)]
        budget = length - len(rule.rhs) + len(nts)
        if budget < len(nts) or (not nts and budget != 0):
            continue
        rows = [table.values[table.index[s]] for s in nts]
        for comp in compositions(budget, len(nts)):
            w = rule.weight
            for row, c in zip(rows, comp):
                w *= row[c]
                if w == 0:
                    break
            if w > 0:
                out.append((rule, comp, w))
    return out


def compute_table(g: Pcfg, n: int, method: str = "compositions") -> LengthTable:
    """Fill ``T`` for lengths 1..n.

    ``method="compositions"`` enumerates compositions per rule;
    ``method="convolution"`` folds the rule's symbols left to right with
    length convolutions.  Both compute the same sums.
    """
    if n < 1:
        raise ValueError("maximum length must be at least 1")
    _check_shape(g)
    index = {x: i for i, x in enumerate(g.nonterminals)}
    table = LengthTable(g, np.zeros((len(index), n + 1)), index)
    for length in range(1, n + 1):
        for x in g.nonterminals:
            if method == "compositions":
                total = sum(w for _, _, w in compute_weights(g, table, x, length))
            elif method == "convolution":
                total = sum(rule.weight * _fold(g, table, rule, length) for rule in g.rules_for(x))
            else:
                raise ValueError(f"unknown method {method!r}")
            table.values[index[x], length] = total
    return table


def _fold(g: Pcfg, table: LengthTable, rule: Rule, length: int) -> float:
    dist = np.zeros(length + 1)
    dist[0] = 1.0
    for s in rule.rhs:
        if g.is_nonterminal(s):
            row = table.values[table.index[s], : length + 1].copy()
            row[length:] = 0.0  # the row for `length` itself is still being filled
            dist = np.convolve(dist, row)[: length + 1]
        else:
            dist = np.concatenate([[0.0], dist[:length]])
    return float(dist[length])


class SizedSampler:
    """Draws strings of an exact length, caching the (rule, composition) lists."""

    def __init__(self, g: Pcfg, table: LengthTable):
        _check_shape(g)
        self.grammar = g
        self.table = table
        self._cache: dict[tuple[str, int], tuple[list, np.ndarray]] = {}

    def _choices(self, x: str, length: int):
        key = (x, length)
        if key not in self._cache:
            weights = compute_weights(self.grammar, self.table, x, length)
            cumulative = np.cumsum([w for _, _, w in weights])
            self._cache[key] = (weights, cumulative)
        return self._cache[key]

    def sample(self, x: str, length: int, rng: np.random.Generator) -> str:
        return "".join(self._sample(x, length, rng))

    def _sample(self, x: str, length: int, rng: np.random.Generator) -> list[str]:
        if length > self.table.max_length:
            raise IndexError(f"table only covers lengths up to {self.table.max_length}")
        if length < 1 or self.table[x, length] == 0:
            raise UnachievableLengthError(f"{x} derives no string of length {length}")
        weights, cumulative = self._choices(x, length)
        k = int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"))
        rule, comp, _ = weights[min(k, len(weights) - 1)]
        out: list[str] = []
        parts = iter(comp)
        for s in rule.rhs:
            if self.grammar.is_nonterminal(s):
                out.extend(self._sample(s, next(parts), rng))
            else:
                out.append(s)
        return out


def sample_sized(g: Pcfg, table: LengthTable, x: str, length: int, rng: np.random.Generator) -> str:
    return SizedSampler(g, table).sample(x, length, rng)


def achievable_lengths(table: LengthTable, min_length: int, max_length: int) -> list[int]:
    start = table.grammar.start
    return [n for n in range(min_length, max_length + 1) if n >= 1 and table[start, n] > 0]


def sample_dataset(
    g: Pcfg,
    min_length: int,
    max_length: int,
    count: int,
    rng: np.random.Generator,
    table: LengthTable | None = None,
) -> list[str]:
    """Uniform length in the range, then an exact-length draw; unachievable lengths restart."""
    if min_length > max_length:
        raise ValueError("empty length range")
    table = table if table is not None else compute_table(g, max_length)
    if not achievable_lengths(table, min_length, max_length):
        raise UnachievableLengthError(f"no achievable length in [{min_length}, {max_length}]")
    sampler = SizedSampler(g, table)
    out = []
    while len(out) < count:
        length = int(rng.integers(min_length, max_length + 1))
        try:
            out.append(sampler.sample(g.start, length, rng))
        except UnachievableLengthError:
            continue
    return out
