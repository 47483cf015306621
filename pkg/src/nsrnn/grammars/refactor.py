"""Removal of ε-rules and unary rules with the string distribution preserved.

After refactoring, every non-empty string keeps its exact probability; the
probability of the empty string is reported in ``Pcfg.empty_weight``.
Rule weights of the result are no longer normalized per left-hand side:
each nonterminal's rules sum to the probability that it derives a non-empty
string.
"""
from __future__ import annotations

import itertools

import numpy as np

from .pcfg import GrammarError, Pcfg, Rule, merge_rules


def nullable_weights(g: Pcfg, tol: float = 1e-17, max_iter: int = 100_000) -> dict[str, float]:
    """Probability that each nonterminal derives ε (least fixed point)."""
    weights = {x: 0.0 for x in g.nonterminals}
    candidates = [r for r in g.rules if all(g.is_nonterminal(s) for s in r.rhs)]
    for _ in range(max_iter):
        new = {x: 0.0 for x in g.nonterminals}
        for r in candidates:
            new[r.lhs] += r.weight * float(np.prod([weights[s] for s in r.rhs]))
        delta = max(abs(new[x] - weights[x]) for x in weights)
        weights = new
        if delta <= tol:
            return weights
    raise GrammarError("nullable weights did not converge")


def remove_epsilon(g: Pcfg) -> Pcfg:
    e = nullable_weights(g)
    out = []
    for r in g.rules:
        optional = [k for k, s in enumerate(r.rhs) if g.is_nonterminal(s) and e[s] > 0]
        for dropped in itertools.product((False, True), repeat=len(optional)):
            drop = {k for k, d in zip(optional, dropped) if d}
            rhs = tuple(s for k, s in enumerate(r.rhs) if k not in drop)
            if not rhs:
                continue
            weight = r.weight * float(np.prod([e[r.rhs[k]] for k in drop]))
            if weight > 0:
                out.append(Rule(r.lhs, rhs, weight))
    rules = _drop_unproductive(g, merge_rules(out))
    if not any(r.lhs == g.start for r in rules):
        raise GrammarError("grammar puts all of its mass on the empty string")
    return Pcfg(g.start, rules, empty_weight=g.empty_weight + e[g.start])


def _drop_unproductive(g: Pcfg, rules: list[Rule]) -> list[Rule]:
    """Keep only rules whose nonterminals all derive some non-empty string."""
    productive: set[str] = set()
    changed = True
    while changed:
        changed = False
        for r in rules:
            if r.lhs not in productive and all(not g.is_nonterminal(s) or s in productive for s in r.rhs):
                productive.add(r.lhs)
                changed = True
    return [r for r in rules if r.lhs in productive and all(not g.is_nonterminal(s) or s in productive for s in r.rhs)]


def collapse_unary(g: Pcfg) -> Pcfg:
    """Replace chains X ⇒ Y by direct rules, summing cycles as a geometric series."""
    names = list(g.nonterminals)
    index = {x: i for i, x in enumerate(names)}
    n = len(names)
    unary = np.zeros((n, n))
    for r in g.rules:
        if len(r.rhs) == 1 and g.is_nonterminal(r.rhs[0]):
            unary[index[r.lhs], index[r.rhs[0]]] += r.weight
    if not unary.any():
        return g
    radius = float(np.max(np.abs(np.linalg.eigvals(unary))))
    if radius >= 1:
        raise GrammarError(f"unary cycles have total weight {radius:.6g} >= 1; the series diverges")
    closure = np.linalg.solve(np.eye(n) - unary, np.eye(n))
    reach = np.eye(n, dtype=bool)
    for _ in range(n):
        reach = reach | ((reach.astype(int) @ (unary > 0).astype(int)) > 0)
    closure = np.where(reach, closure, 0.0)
    out = []
    for x in names:
        for y in names:
            c = closure[index[x], index[y]]
            if c == 0:
                continue
            for r in g.rules_for(y):
                if len(r.rhs) == 1 and g.is_nonterminal(r.rhs[0]):
                    continue
                out.append(Rule(x, r.rhs, c * r.weight))
    rules = _drop_unproductive(g, merge_rules(out))
    return Pcfg(g.start, _reachable(g.start, rules), empty_weight=g.empty_weight)


def _reachable(start: str, rules: list[Rule]) -> list[Rule]:
    lhs = {r.lhs for r in rules}
    seen, frontier = {start}, [start]
    while frontier:
        x = frontier.pop()
        for r in rules:
            if r.lhs == x:
                for s in r.rhs:
                    if s in lhs and s not in seen:
                        seen.add(s)
                        frontier.append(s)
    return [r for r in rules if r.lhs in seen]


def refactor_remove_epsilon_unary(g: Pcfg) -> Pcfg:
    """ε-removal followed by unary-chain collapse."""
    return collapse_unary(remove_epsilon(g))
