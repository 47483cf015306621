"""Inside probabilities on ε-free, unary-free grammars, and the sampling distribution."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .pcfg import GrammarError, Pcfg
from .sampling import LengthTable, achievable_lengths


def inside_batch(g: Pcfg, strings: Sequence[str]) -> np.ndarray:
    """G(w) for each string in a batch of equal-length, non-empty strings.

    For every rule and every suffix ``β[k:]`` of its right-hand side the
    table ``suffix[r][k][:, i, j]`` holds the weight of ``β[k:]`` deriving
    ``w[i:j]``.  Start positions are visited right to left and end positions
    left to right, so every entry a cell depends on is already final.
    """
    if g.has_epsilon_rules() or g.has_unary_rules():
        raise GrammarError("grammar must be free of ε-rules and unary rules; refactor it first")
    strings = list(strings)
    if not strings:
        return np.zeros(0)
    n = len(strings[0])
    if n == 0 or any(len(s) != n for s in strings):
        raise ValueError("inside_batch needs non-empty strings of one length")
    b = len(strings)
    chars = np.array([list(s) for s in strings])
    match = {a: (chars == a).astype(float) for a in g.terminals}
    zero = np.zeros((b, n))
    index = {x: i for i, x in enumerate(g.nonterminals)}
    chart = np.zeros((len(index), b, n + 1, n + 1))
    rules = list(g.rules)
    suffix = []
    for r in rules:
        tables = np.zeros((len(r.rhs) + 1, b, n + 1, n + 1))
        tables[len(r.rhs), :, np.arange(n + 1), np.arange(n + 1)] = 1.0
        suffix.append(tables)

    def item(r, k, i, j):
        """Weight of β[k:] deriving w[i:j] (row i, given later rows)."""
        s = rules[r].rhs[k]
        rest = suffix[r][k + 1]
        if s in index:
            return np.einsum("bm,bm->b", chart[index[s], :, i, i + 1 : j + 1], rest[:, i + 1 : j + 1, j])
        return match.get(s, zero)[:, i] * rest[:, i + 1, j]

    for i in range(n - 1, -1, -1):
        for j in range(i + 1, n + 1):
            for r, rule in enumerate(rules):
                chart[index[rule.lhs], :, i, j] += rule.weight * item(r, 0, i, j)
            for r, rule in enumerate(rules):
                for k in range(len(rule.rhs) - 1, 0, -1):
                    suffix[r][k][:, i, j] = item(r, k, i, j)
    return chart[index[g.start], :, 0, n].copy()


def inside(g: Pcfg, w: str) -> float:
    """Total derivation weight of ``w`` (the empty string gets ``g.empty_weight``)."""
    if not w:
        return g.empty_weight
    if any(a not in g.terminals for a in w):
        return 0.0
    return float(inside_batch(g, [w])[0])


def inside_many(g: Pcfg, strings: Sequence[str]) -> np.ndarray:
    """G(w) for strings of mixed lengths, batched by length."""
    strings = list(strings)
    out = np.zeros(len(strings))
    by_len: dict[int, list[int]] = {}
    for i, s in enumerate(strings):
        if not s:
            out[i] = g.empty_weight
        elif all(a in g.terminals for a in s):
            by_len.setdefault(len(s), []).append(i)
    for _, idx in sorted(by_len.items()):
        out[idx] = inside_batch(g, [strings[i] for i in idx])
    return out


def p_sample(g: Pcfg, table: LengthTable, length_range: tuple[int, int], w: str, g_w: float | None = None) -> float:
    """Probability of ``w`` under uniform-length, exact-length sampling with restarts."""
    lo, hi = length_range
    if not lo <= len(w) <= hi:
        raise ValueError(f"length {len(w)} outside [{lo}, {hi}]")
    g_len = table[table.grammar.start, len(w)] if len(w) >= 1 else 0.0
    if g_len == 0:
        raise ValueError(f"length {len(w)} is unachievable")
    achievable = len(achievable_lengths(table, lo, hi))
    g_w = inside(g, w) if g_w is None else g_w
    return g_w / (achievable * g_len)


def log_p_sample_many(g: Pcfg, table: LengthTable, length_range: tuple[int, int], strings: Sequence[str]) -> np.ndarray:
    weights = inside_many(g, strings)
    out = np.empty(len(strings))
    for i, (s, gw) in enumerate(zip(strings, weights)):
        p = p_sample(g, table, length_range, s, g_w=float(gw))
        out[i] = math.log(p) if p > 0 else -math.inf
    return out
