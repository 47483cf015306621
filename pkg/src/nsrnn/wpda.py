"""Weighted pushdown automata with scanning transitions only.

Each transition reads one input symbol and applies one stack action to the
top symbol ``x``: push ``y`` on top of it, replace it with ``y``, or pop it.
This module also contains the brute-force run enumerator that serves as the
reference for the tensorized stack in :mod:`nsrnn.ns_stack`.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Union

import numpy as np


@dataclass(frozen=True)
class Push:
    symbol: str

    def __str__(self) -> str:
        return f"push({self.symbol})"


@dataclass(frozen=True)
class Replace:
    symbol: str

    def __str__(self) -> str:
        return f"replace({self.symbol})"


@dataclass(frozen=True)
class Pop:
    def __str__(self) -> str:
        return "pop"


StackAction = Union[Push, Replace, Pop]


def all_actions(stack_alphabet: Iterable[str]) -> list[StackAction]:
    """Pushes, then replacements, then pop: the layout of the action axis."""
    symbols = list(stack_alphabet)
    return [Push(y) for y in symbols] + [Replace(y) for y in symbols] + [Pop()]


@dataclass(frozen=True)
class Transition:
    target: str
    action: StackAction
    weight: float


class PdaError(ValueError):
    pass


class RunOverflowError(RuntimeError):
    """More runs than the caller's cap; enumeration is never truncated silently."""


@dataclass
class WeightedPda:
    states: tuple[str, ...]
    input_alphabet: tuple[str, ...]
    stack_alphabet: tuple[str, ...]
    start: str
    bottom: str
    # (state, input symbol, top of stack) -> outgoing transitions
    transitions: dict[tuple[str, str, str], list[Transition]] = field(default_factory=dict)

    def __post_init__(self):
        self.states = tuple(self.states)
        self.input_alphabet = tuple(self.input_alphabet)
        self.stack_alphabet = tuple(self.stack_alphabet)
        if self.start not in self.states:
            raise PdaError(f"start state {self.start!r} not in Q")
        if self.bottom not in self.stack_alphabet:
            raise PdaError(f"bottom symbol {self.bottom!r} not in stack alphabet")
        grouped: dict[tuple[str, str, str], list[Transition]] = defaultdict(list)
        for key, items in self.transitions.items():
            for t in items:
                self._check(key, t)
                grouped[key].append(t)
        self.transitions = dict(grouped)

    def _check(self, key, t: Transition) -> None:
        q, a, x = key
        if q not in self.states or t.target not in self.states:
            raise PdaError(f"unknown state in transition {key} -> {t}")
        if a not in self.input_alphabet:
            raise PdaError(f"unknown input symbol {a!r}")
        if x not in self.stack_alphabet:
            raise PdaError(f"unknown stack symbol {x!r}")
        if isinstance(t.action, (Push, Replace)) and t.action.symbol not in self.stack_alphabet:
            raise PdaError(f"unknown stack symbol {t.action.symbol!r}")
        if not isinstance(t.action, (Push, Replace, Pop)):
            raise PdaError(f"unsupported action {t.action!r}")
        if t.weight < 0 or not np.isfinite(t.weight):
            raise PdaError(f"transition weight must be nonnegative, got {t.weight}")

    def add(self, q: str, a: str, x: str, r: str, action: StackAction, weight: float = 1.0) -> None:
        t = Transition(r, action, float(weight))
        self._check((q, a, x), t)
        self.transitions.setdefault((q, a, x), []).append(t)

    def outgoing(self, q: str, a: str, x: str) -> list[Transition]:
        return self.transitions.get((q, a, x), [])

    @property
    def num_transitions(self) -> int:
        return sum(len(v) for v in self.transitions.values())

    @property
    def actions(self) -> list[StackAction]:
        return all_actions(self.stack_alphabet)

    def renormalized(self) -> "WeightedPda":
        """Copy with each (q, a, x) group scaled to sum to one."""
        out = {}
        for key, items in self.transitions.items():
            total = sum(t.weight for t in items)
            out[key] = [Transition(t.target, t.action, t.weight / total if total else 0.0) for t in items]
        return WeightedPda(self.states, self.input_alphabet, self.stack_alphabet, self.start, self.bottom, out)

    # -- text format -------------------------------------------------------------
    def to_text(self) -> str:
        lines = [
            f"states: {' '.join(self.states)}",
            f"input: {' '.join(self.input_alphabet)}",
            f"stack: {' '.join(self.stack_alphabet)}",
            f"start: {self.start}",
            f"bottom: {self.bottom}",
        ]
        for (q, a, x), items in self.transitions.items():
            for t in items:
                lines.append(f"{q} {a} {x} -> {t.target} {t.action} {t.weight!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "WeightedPda":
        header: dict[str, list[str]] = {}
        rules = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("%"):
                continue
            if "->" in line:
                lhs, rhs = line.split("->")
                lhs_tokens, rhs_tokens = lhs.split(), rhs.split()
                if len(lhs_tokens) != 3 or len(rhs_tokens) not in (2, 3):
                    raise PdaError(f"line {lineno}: expected 'q a x -> r ACTION weight'")
                weight = float(rhs_tokens[2]) if len(rhs_tokens) == 3 else 1.0
                rules.append((tuple(lhs_tokens), rhs_tokens[0], _parse_action(rhs_tokens[1], lineno), weight))
            elif ":" in line:
                key, value = line.split(":", 1)
                header[key.strip()] = value.split()
            else:
                raise PdaError(f"line {lineno}: cannot parse {raw!r}")
        try:
            states = header["states"]
            pda = cls(
                states,
                header["input"],
                header["stack"],
                header.get("start", states[:1])[0],
                header["bottom"][0],
            )
        except KeyError as exc:
            raise PdaError(f"missing header field {exc}") from None
        for (q, a, x), r, action, weight in rules:
            pda.add(q, a, x, r, action, weight)
        return pda


def _parse_action(token: str, lineno: int) -> StackAction:
    if token == "pop":
        return Pop()
    for name, kind in (("push", Push), ("replace", Replace)):
        if token.startswith(name + "(") and token.endswith(")"):
            return kind(token[len(name) + 1 : -1])
    raise PdaError(f"line {lineno}: unknown action {token!r}")


def example_pda(weighted: bool = False) -> WeightedPda:
    """Two-state PDA whose stack can be emptied iff the input read so far is w w^R.

    With ``weighted=True`` every (q, a, x) group is renormalized so the
    automaton is probabilistic (push and pop each get 1/2 where both apply).
    """
    sigma = ("0", "1")
    gamma = ("0", "1", "⊥")
    pda = WeightedPda(("q1", "q2"), sigma, gamma, "q1", "⊥")
    for x in gamma:
        for a in sigma:
            pda.add("q1", a, x, "q1", Push(a))
    for a in sigma:
        pda.add("q1", a, a, "q2", Pop())
    for a in sigma:
        pda.add("q2", a, a, "q2", Pop())
    return pda.renormalized() if weighted else pda


@dataclass
class ProbabilisticReport:
    ok: bool
    violations: list[tuple[tuple[str, str, str], float]]

    def __bool__(self) -> bool:
        return self.ok


def validate_probabilistic(pda: WeightedPda, tol: float = 1e-9) -> ProbabilisticReport:
    violations = []
    for key, items in pda.transitions.items():
        if not items:
            continue
        total = sum(t.weight for t in items)
        if abs(total - 1.0) > tol:
            violations.append((key, total))
    return ProbabilisticReport(not violations, violations)


# -- brute-force runs ---------------------------------------------------------------

Configuration = tuple[int, str, tuple[str, ...]]


@dataclass
class Run:
    configurations: list[Configuration]
    weight: float
    # True when the last transition emptied the stack before the input ended
    terminated: bool = False

    @property
    def final(self) -> Configuration:
        return self.configurations[-1]


def apply_action(stack: tuple[str, ...], action: StackAction) -> tuple[str, ...]:
    if isinstance(action, Push):
        return stack + (action.symbol,)
    if isinstance(action, Replace):
        return stack[:-1] + (action.symbol,)
    return stack[:-1]


def _runs_by_position(pda: WeightedPda, w: str, cap: int) -> tuple[list[list[Run]], list[Run]]:
    """Runs alive at each position 0..|w|, plus runs that emptied their stack."""
    layers = [[Run([(0, pda.start, (pda.bottom,))], 1.0)]]
    terminated: list[Run] = []
    produced = 1
    for j, a in enumerate(w, start=1):
        if a not in pda.input_alphabet:
            raise PdaError(f"symbol {a!r} not in input alphabet")
        alive = []
        for run in layers[-1]:
            _, q, stack = run.final
            for t in pda.outgoing(q, a, stack[-1]):
                if t.weight == 0:
                    continue
                produced += 1
                if produced > cap:
                    raise RunOverflowError(f"more than {cap} runs on input of length {len(w)}")
                new_stack = apply_action(stack, t.action)
                ext = Run(run.configurations + [(j, t.target, new_stack)], run.weight * t.weight)
                if new_stack:
                    alive.append(ext)
                else:
                    ext.terminated = True
                    terminated.append(ext)
        layers.append(alive)
    return layers, terminated


def enumerate_runs(pda: WeightedPda, w: str, cap: int = 1_000_000, include_terminated: bool = False) -> list[Run]:
    """All runs that scan the whole of ``w``.

    With ``include_terminated`` the runs that emptied their stack early are
    returned as well (flagged ``terminated``).
    """
    layers, terminated = _runs_by_position(pda, w, cap)
    return layers[-1] + terminated if include_terminated else layers[-1]


def oracle_config_weights(pda: WeightedPda, w: str, cap: int = 1_000_000) -> dict[tuple[int, str, str], float]:
    """Sum of run weights per (position, state, top symbol), by enumeration."""
    table: dict[tuple[int, str, str], float] = defaultdict(float)
    layers, _ = _runs_by_position(pda, w, cap)
    for runs in layers:
        for run in runs:
            j, q, stack = run.final
            table[(j, q, stack[-1])] += run.weight
    return dict(table)


def random_probabilistic_pda(
    rng: np.random.Generator,
    num_states: int = 2,
    num_symbols: int = 2,
    num_inputs: int = 2,
    max_branching: int = 3,
) -> WeightedPda:
    """Random probabilistic PDA; ``num_symbols`` excludes the bottom symbol."""
    states = tuple(f"q{i}" for i in range(num_states))
    inputs = tuple("ab"[:num_inputs]) if num_inputs <= 2 else tuple(str(i) for i in range(num_inputs))
    gamma = tuple(f"s{i}" for i in range(num_symbols)) + ("⊥",)
    pda = WeightedPda(states, inputs, gamma, states[0], "⊥")
    choices = [(r, act) for r in states for act in all_actions(gamma)]
    for q in states:
        for a in inputs:
            for x in gamma:
                k = int(rng.integers(1, min(max_branching, len(choices)) + 1))
                picked = rng.choice(len(choices), size=k, replace=False)
                weights = rng.dirichlet(np.ones(k))
                for idx, p in zip(picked, weights):
                    r, act = choices[idx]
                    pda.add(q, a, x, r, act, float(p))
    return pda
