"""Weighted context-free grammars and their text format.

A grammar file holds one rule per line, ``LHS -> RHS... / weight``, with
symbols separated by spaces.  An empty right-hand side (or a lone ``ε``) is
the empty string.  Every symbol that appears on a left-hand side is a
nonterminal; the left-hand side of the first rule is the start symbol.
Lines starting with ``%`` are comments.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

EPSILON = "ε"


class GrammarError(ValueError):
    pass


@dataclass(frozen=True)
class Rule:
    lhs: str
    rhs: tuple[str, ...]
    weight: float

    def __str__(self) -> str:
        rhs = " ".join(self.rhs) if self.rhs else EPSILON
        return f"{self.lhs} -> {rhs} / {self.weight!r}"


@dataclass
class Pcfg:
    """Rules with positive weights.

    ``empty_weight`` is the total weight of the empty string that a
    refactoring moved out of the grammar (zero for grammars as written).
    """

    start: str
    rules: tuple[Rule, ...]
    empty_weight: float = 0.0
    nonterminals: tuple[str, ...] = field(init=False)
    terminals: tuple[str, ...] = field(init=False)

    def __post_init__(self):
        self.rules = tuple(self.rules)
        nts: dict[str, None] = {self.start: None}
        for r in self.rules:
            nts.setdefault(r.lhs, None)
        self.nonterminals = tuple(nts)
        terms: dict[str, None] = {}
        for r in self.rules:
            if not r.weight > 0:
                raise GrammarError(f"rule weight must be positive: {r}")
            for s in r.rhs:
                if s not in nts:
                    terms.setdefault(s, None)
        self.terminals = tuple(sorted(terms))
        if not any(r.lhs == self.start for r in self.rules):
            raise GrammarError(f"start symbol {self.start!r} has no rules")
        by_lhs: dict[str, list[Rule]] = defaultdict(list)
        for r in self.rules:
            by_lhs[r.lhs].append(r)
        self._by_lhs = dict(by_lhs)

    def rules_for(self, lhs: str) -> list[Rule]:
        return self._by_lhs.get(lhs, [])

    def is_nonterminal(self, symbol: str) -> bool:
        return symbol in self._by_lhs or symbol == self.start

    def lhs_totals(self) -> dict[str, float]:
        return {x: sum(r.weight for r in self.rules_for(x)) for x in self.nonterminals}

    def is_probabilistic(self, tol: float = 1e-9) -> bool:
        return all(abs(t - 1.0) <= tol for t in self.lhs_totals().values())

    def has_epsilon_rules(self) -> bool:
        return any(not r.rhs for r in self.rules)

    def has_unary_rules(self) -> bool:
        return any(len(r.rhs) == 1 and self.is_nonterminal(r.rhs[0]) for r in self.rules)

    # -- text format ----------------------------------------------------------
    def to_text(self) -> str:
        ordered = sorted(self.rules, key=lambda r: r.lhs != self.start)
        return "".join(f"{r}\n" for r in ordered)

    @classmethod
    def from_text(cls, text: str) -> "Pcfg":
        parsed = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("%"):
                continue
            if "->" not in line or "/" not in line:
                raise GrammarError(f"line {lineno}: expected 'LHS -> RHS / weight'")
            lhs, rest = line.split("->", 1)
            rhs, weight = rest.rsplit("/", 1)
            lhs_tokens = lhs.split()
            if len(lhs_tokens) != 1:
                raise GrammarError(f"line {lineno}: left-hand side must be one symbol")
            symbols = tuple(s for s in rhs.split() if s != EPSILON)
            try:
                w = float(weight)
            except ValueError:
                raise GrammarError(f"line {lineno}: bad weight {weight.strip()!r}") from None
            parsed.append(Rule(lhs_tokens[0], symbols, w))
        if not parsed:
            raise GrammarError("grammar has no rules")
        return cls(parsed[0].lhs, parsed)

    @classmethod
    def load(cls, path: str | Path) -> "Pcfg":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")


def merge_rules(rules) -> list[Rule]:
    """Sum the weights of rules with identical (lhs, rhs); drop zero weights."""
    total: dict[tuple[str, tuple[str, ...]], float] = {}
    for r in rules:
        key = (r.lhs, r.rhs)
        total[key] = total.get(key, 0.0) + r.weight
    return [Rule(lhs, rhs, w) for (lhs, rhs), w in total.items() if w > 0]
