"""Reduction from any GNF grammar to the hardest context-free language L0.

A string of L0 is a sequence of blocks ``x , y , z ;`` where ``x`` and ``z``
are arbitrary strings over ``, $ ( ) [ ]`` and the ``y`` parts, read in
order, spell a member of ``$D2`` (``$`` followed by balanced ``()``/``[]``).
The homomorphism ``h`` maps each terminal of a GNF grammar to a block that
lists the encodings of every rule starting with that terminal; ``w`` is
generated by the grammar iff ``h(w)`` is in L0.

Membership in L0 is decided by a small PDA run through the tensorized stack
in the real semiring, so the checker also exercises the stack recurrences.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor_core as tc
from .ns_stack import REAL, NondeterministicStack, pack_transitions
from .tensor_core import Tensor
from .wpda import Pop, Push, Replace, WeightedPda

L0_ALPHABET = ("(", ")", "[", "]", "$", ",", ";")
FILLER = ("(", ")", "[", "]", "$", ",")


class GnfError(ValueError):
    pass


@dataclass(frozen=True)
class GnfRule:
    lhs: str
    terminal: str
    rhs: tuple[str, ...]  # nonterminals only

    def __str__(self) -> str:
        return " ".join((self.lhs, "->", self.terminal) + self.rhs)


@dataclass
class GnfGrammar:
    """Rules ``A -> a B1 ... Bm``; the first nonterminal is the start symbol."""

    nonterminals: tuple[str, ...]
    rules: tuple[GnfRule, ...]

    def __post_init__(self):
        self.nonterminals = tuple(self.nonterminals)
        self.rules = tuple(self.rules)
        if not self.nonterminals:
            raise GnfError("grammar has no nonterminals")
        if len(set(self.nonterminals)) != len(self.nonterminals):
            raise GnfError("duplicate nonterminal")
        names = set(self.nonterminals)
        for r in self.rules:
            if r.lhs not in names:
                raise GnfError(f"unknown left-hand side in {r}")
            if r.terminal in names:
                raise GnfError(f"rule must begin with a terminal: {r}")
            for s in r.rhs:
                if s not in names:
                    raise GnfError(f"only nonterminals may follow the terminal: {r}")
                if s == self.start:
                    raise GnfError(f"start symbol {self.start} appears on a right-hand side: {r}")

    @property
    def start(self) -> str:
        return self.nonterminals[0]

    @property
    def terminals(self) -> tuple[str, ...]:
        return tuple(sorted({r.terminal for r in self.rules}))

    def index(self, nonterminal: str) -> int:
        """1-based position, which sets the bracket depth of its encoding."""
        return self.nonterminals.index(nonterminal) + 1

    @classmethod
    def from_text(cls, text: str) -> "GnfGrammar":
        """Lines ``A -> a B C`` (an optional trailing ``/ weight`` is ignored)."""
        rules, order = [], {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("%"):
                continue
            if "->" not in line:
                raise GnfError(f"line {lineno}: expected 'A -> a B ...'")
            lhs, rhs = line.split("->", 1)
            rhs = rhs.rsplit("/", 1)[0] if "/" in rhs else rhs
            lhs_tokens, rhs_tokens = lhs.split(), rhs.split()
            if len(lhs_tokens) != 1 or not rhs_tokens:
                raise GnfError(f"line {lineno}: expected 'A -> a B ...'")
            order.setdefault(lhs_tokens[0], None)
            rules.append((lhs_tokens[0], rhs_tokens[0], tuple(rhs_tokens[1:])))
        return cls(tuple(order), tuple(GnfRule(*r) for r in rules))

    @classmethod
    def load(cls, path: str | Path) -> "GnfGrammar":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


def push_code(g: GnfGrammar, nonterminal: str) -> str:
    return "(" + "[" * g.index(nonterminal) + "("


def pop_code(g: GnfGrammar, nonterminal: str) -> str:
    if nonterminal == g.start:
        return "$"
    return ")" + "]" * g.index(nonterminal) + ")"


def rule_code(g: GnfGrammar, rule: GnfRule, reverse_pushes: bool = True) -> str:
    """``pop(A)`` followed by the pushes of the rule's nonterminals.

    Pushes go in reverse so the leftmost nonterminal ends on top and is the
    next one popped, as a leftmost derivation requires.
    """
    pushes = reversed(rule.rhs) if reverse_pushes else rule.rhs
    return pop_code(g, rule.lhs) + "".join(push_code(g, s) for s in pushes)


def build_homomorphism(g: GnfGrammar, reverse_pushes: bool = True) -> dict[str, str]:
    """Image of every terminal: ``,`` + rule codes joined by ``,`` + ``,;``."""
    h = {}
    for a in g.terminals:
        codes = [rule_code(g, r, reverse_pushes) for r in g.rules if r.terminal == a]
        h[a] = "," + ",".join(codes) + ",;"
    return h


def apply_homomorphism(h: dict[str, str], w: str) -> str:
    try:
        return "".join(h[a] for a in w)
    except KeyError as exc:
        raise GnfError(f"symbol {exc} has no image") from None


# -- L0 membership -------------------------------------------------------------------

L0_BOTTOM, L0_MARK = "⊥", "M"


def l0_pda() -> WeightedPda:
    """Unit-weight PDA whose runs guess the y part of every block.

    States: X (reading x), Y (reading y), Z (reading z).  The stack starts
    as ⊥; reading ``$`` in the first y replaces it with M, after which y
    symbols push and pop brackets.  A string is accepted when it ends with
    ``;`` and some run is in X with M on top (so the stack is exactly M).
    """
    gamma = (L0_BOTTOM, L0_MARK, "(", "[")
    pda = WeightedPda(("X", "Y", "Z"), L0_ALPHABET, gamma, "X", L0_BOTTOM)
    for x in gamma:
        for a in FILLER:
            pda.add("X", a, x, "X", Replace(x))
            pda.add("Z", a, x, "Z", Replace(x))
        pda.add("X", ",", x, "Y", Replace(x))
        pda.add("Y", ",", x, "Z", Replace(x))
        pda.add("Z", ";", x, "X", Replace(x))
    pda.add("Y", "$", L0_BOTTOM, "Y", Replace(L0_MARK))
    for x in (L0_MARK, "(", "["):
        pda.add("Y", "(", x, "Y", Push("("))
        pda.add("Y", "[", x, "Y", Push("["))
    pda.add("Y", ")", "(", "Y", Pop())
    pda.add("Y", "]", "[", "Y", Pop())
    return pda


_L0 = l0_pda()


def l0_membership_many(strings: Sequence[str], block_size: int = 4096) -> np.ndarray:
    """Membership of each string in L0; strings of equal length share one batched run."""
    strings = list(strings)
    out = np.zeros(len(strings), dtype=bool)
    by_len: dict[int, list[int]] = {}
    for i, s in enumerate(strings):
        if s and s[-1] == ";" and all(a in L0_ALPHABET for a in s):
            by_len.setdefault(len(s), []).append(i)
    accept_state = _L0.states.index("X")
    mark = _L0.stack_alphabet.index(L0_MARK)
    for _, idx in by_len.items():
        deltas = np.stack([pack_transitions(_L0, strings[i], REAL) for i in idx], axis=1)
        alive = np.ones(len(idx), dtype=bool)
        stack = NondeterministicStack(len(_L0.states), len(_L0.stack_alphabet), len(idx), semiring=REAL,
                                      block_size=block_size, check_alive=False)
        with tc.no_grad(), np.errstate(invalid="ignore", divide="ignore"):
            for d in deltas:
                stack.step(Tensor(d))
                alive &= stack.alpha[-1].data.reshape(len(idx), -1).any(axis=1)
                if not alive.any():
                    break
        if alive.any():
            out[idx] = alive & (stack.alpha[-1].data[:, accept_state, mark] > 0)
    return out


def l0_membership(s: str) -> bool:
    return bool(l0_membership_many([s])[0])
