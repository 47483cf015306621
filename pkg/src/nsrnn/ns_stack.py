"""Differentiable nondeterministic stack (tensorized Lang's algorithm).

Layers are numbered 0..n.  Layer 0 holds the axiom node ``(0, q0, ⊥)``;
scanning ``w_j`` builds layer ``j`` from the action weights ``Δ[j]``.

Stored quantities, all in the chosen semiring:

* ``columns[j-1]`` has shape ``(B, j, Q, Γ, Q, Γ)``; entry ``[b, i, q, x, r, y]``
  is the inner weight of the stack-WFA edge ``(i, q, x) --y--> (j, r, y)``.
  Only ``0 <= i < j`` is stored, so ``n`` steps keep ``n(n+1)/2`` blocks.
* ``bottom[j]`` has shape ``(B, Q, Γ)``: edges leaving the WFA's initial
  node.  ``bottom[0]`` is the axiom edge; later entries arise when the
  bottom-most symbol is replaced, or when a pop exposes it.
* ``alpha[j]`` has shape ``(B, Q, Γ)``: forward weights of layer ``j``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import tensor_core as tc
from .tensor_core import Tensor
from .tensor_core.einsum import DEFAULT_BLOCK_SIZE, Contraction
from .wpda import Pop, Push, Replace, WeightedPda, PdaError


@dataclass(frozen=True)
class Semiring:
    name: str
    zero: float
    one: float
    einsum: Callable[..., Tensor]
    plus: Callable[[Tensor, Tensor], Tensor]
    total: Callable[..., Tensor]  # reduction along an axis

    def from_real(self, x: np.ndarray) -> np.ndarray:
        if self.name == "log":
            with np.errstate(divide="ignore"):
                return np.log(x)
        return np.asarray(x, dtype=float)

    def to_real(self, x: np.ndarray) -> np.ndarray:
        return np.exp(x) if self.name == "log" else np.asarray(x)


LOG = Semiring("log", -np.inf, 0.0, tc.einsum_log, tc.logaddexp, tc.logsumexp)
REAL = Semiring("real", 0.0, 1.0, tc.einsum_real, tc.add, lambda t, axis: tc.sum(t, axis=axis))
SEMIRINGS = {"log": LOG, "real": REAL}


class DeadStackError(RuntimeError):
    """Every forward weight of a layer is zero: no run survives."""

    def __init__(self, step: int, batch_indices: Sequence[int]):
        super().__init__(f"no surviving run after step {step} (batch elements {list(batch_indices)})")
        self.step = step
        self.batch_indices = list(batch_indices)


def num_actions(num_symbols: int) -> int:
    return 2 * num_symbols + 1


def pack_transitions(pda: WeightedPda, w: str, semiring: Semiring = REAL) -> np.ndarray:
    """Transition weights for each input position, shape ``(n, Q, Γ, Q, 2Γ+1)``.

    Action axis layout: push y (first Γ slots), replace with y, pop.
    Absent transitions get the semiring zero.
    """
    q_idx = {q: i for i, q in enumerate(pda.states)}
    g_idx = {x: i for i, x in enumerate(pda.stack_alphabet)}
    nq, ng = len(pda.states), len(pda.stack_alphabet)
    out = np.zeros((len(w), nq, ng, nq, num_actions(ng)))
    for j, a in enumerate(w):
        if a not in pda.input_alphabet:
            raise PdaError(f"symbol {a!r} not in input alphabet")
        for q in pda.states:
            for x in pda.stack_alphabet:
                for t in pda.outgoing(q, a, x):
                    if isinstance(t.action, Push):
                        slot = g_idx[t.action.symbol]
                    elif isinstance(t.action, Replace):
                        slot = ng + g_idx[t.action.symbol]
                    else:
                        slot = 2 * ng
                    out[j, q_idx[q], g_idx[x], q_idx[t.target], slot] += t.weight
    return semiring.from_real(out)


class _TriangularBuffer:
    """Stored columns laid out for the pop contraction, grown by doubling.

    Layout ``(b, y, i, q, x, k, t)`` puts batch axes first and contracted axes
    last.  Column ``k`` (1-based) fills ``[:, :, :k, :, :, k-1, :]``; the rest
    holds the semiring zero.  Entries are written once and never modified,
    so views handed out earlier stay valid after the buffer grows.
    """

    def __init__(self, batch, nq, ng, zero, dtype, capacity=8):
        self.shape = (batch, nq, ng)
        self.zero, self.dtype = zero, dtype
        self.size = 0
        self.data = self._allocate(capacity)

    def _allocate(self, cap):
        b, nq, ng = self.shape
        return np.full((b, ng, cap + 1, nq, ng, cap, nq), self.zero, dtype=self.dtype)

    def append(self, column: np.ndarray) -> None:
        k = self.size + 1
        cap = self.data.shape[5]
        if k > cap:
            grown = self._allocate(2 * cap)
            grown[:, :, : cap + 1, :, :, :cap, :] = self.data
            self.data = grown
        self.data[:, :, :k, :, :, k - 1, :] = np.moveaxis(column, 5, 1)
        self.size = k

    def view(self, kmax: int) -> np.ndarray:
        return self.data[:, :, : kmax + 1, :, :, :kmax, :]


def _pop_contraction(columns: Sequence[Tensor], padded: np.ndarray, m_rest: Tensor, semiring: Semiring,
                     block_size: int):
    """Pop term for a new layer ``j``.

    ``columns`` are the stored columns for layers ``k = 1..j-2``, ``padded``
    is their triangular arrangement, and ``m_rest[:, k-1]`` is
    ``Σ_{s,z} γ[k→j-1][t,y→s,z] Δ[j][s,z,r,pop]``.  Returns a tensor over
    ``i = 0..j-2`` (the last row is the semiring zero) and the number of
    (i, k) pairs contracted.
    """
    kmax = len(columns)  # == j - 2
    spec = "byiqxkt,bktyr->biqxry"
    contraction = Contraction(spec, [padded, m_rest.data], semiring.name, block_size)
    out = contraction.result

    def bw(g):
        d_padded, d_m = contraction.backward(g, [True, m_rest.requires_grad])
        grads = [np.moveaxis(d_padded[:, :, :k, :, :, k - 1, :], 1, 5).copy() for k in range(1, kmax + 1)]
        return tuple(grads) + (d_m,)

    pairs = kmax * (kmax + 1) // 2
    return tc.make_node(out, tuple(columns) + (m_rest,), bw), pairs


class NondeterministicStack:
    """All runs of a weighted PDA, advanced one scanned symbol at a time.

    Step inputs are action tensors of shape ``(B, Q, Γ, Q, 2Γ+1)`` in the
    stack's semiring (log weights for :data:`LOG`, raw weights for
    :data:`REAL`).
    """

    def __init__(
        self,
        num_states: int,
        num_symbols: int,
        batch_size: int = 1,
        start_state: int = 0,
        bottom_symbol: int = 0,
        semiring: Semiring = LOG,
        block_size: int = DEFAULT_BLOCK_SIZE,
        dtype=np.float64,
        check_alive: bool = True,
    ):
        self.check_alive = check_alive
        self.num_states = num_states
        self.num_symbols = num_symbols
        self.batch_size = batch_size
        self.start_state = start_state
        self.bottom_symbol = bottom_symbol
        self.semiring = semiring
        self.block_size = block_size
        self.dtype = dtype
        axiom = np.full((batch_size, num_states, num_symbols), semiring.zero, dtype=dtype)
        axiom[:, start_state, bottom_symbol] = semiring.one
        self.bottom: list[Tensor] = [Tensor(axiom)]
        self.alpha: list[Tensor] = [self.bottom[0]]
        self.columns: list[Tensor] = []
        self._triangle = _TriangularBuffer(batch_size, num_states, num_symbols, semiring.zero, dtype)
        self.pop_macs = 0
        self.bottom_pop_macs = 0

    @property
    def num_layers(self) -> int:
        """Number of symbols consumed so far (``t``)."""
        return len(self.columns)

    @property
    def stored_gamma_entries(self) -> int:
        per_edge = self.num_states**2 * self.num_symbols**2
        return sum(c.shape[1] for c in self.columns) * per_edge

    def reading(self) -> Tensor:
        """Distribution over the top stack symbol at the current layer, shape (B, Γ)."""
        return self._reading(self.alpha[-1])

    def _reading(self, alpha: Tensor) -> Tensor:
        sr = self.semiring
        per_symbol = sr.total(alpha, axis=1)
        if sr is LOG:
            return tc.softmax(per_symbol, axis=-1)
        return per_symbol / tc.sum(per_symbol, axis=-1, keepdims=True)

    def step(self, delta: Tensor) -> Tensor:
        """Consume one layer of action weights; return the new reading τ."""
        sr, bs = self.semiring, self.block_size
        nq, ng = self.num_states, self.num_symbols
        delta = tc.as_tensor(delta)
        expected = (self.batch_size, nq, ng, nq, num_actions(ng))
        if delta.shape != expected:
            raise ValueError(f"action tensor has shape {delta.shape}, expected {expected}")
        j = self.num_layers + 1
        push = delta[..., :ng]
        repl = delta[..., ng : 2 * ng]
        pop = delta[..., 2 * ng]

        new_bottom = sr.einsum("bsz,bszry->bry", self.bottom[-1], repl, block_size=bs)
        parts = []
        if j >= 2:
            prev = self.columns[-1]  # γ[i→j-1] for i = 0..j-2
            rest = sr.einsum("biqxsz,bszry->biqxry", prev, repl, block_size=bs)
            m = sr.einsum("bktysz,bszr->bktyr", prev, pop, block_size=bs)
            bottoms = tc.stack(self.bottom[: j - 1], axis=1)
            bottom_pop = sr.einsum("bkty,bktyr->bry", bottoms, m, block_size=bs)
            new_bottom = sr.plus(new_bottom, bottom_pop)
            self.bottom_pop_macs += (j - 1) * nq**2 * ng
            if j >= 3:
                padded = self._triangle.view(j - 2)
                pop_term, pairs = _pop_contraction(self.columns[: j - 2], padded, m[:, 1:], sr, bs)
                rest = sr.plus(rest, pop_term)
                self.pop_macs += pairs * nq**3 * ng**2
            parts.append(rest)
        parts.append(tc.expand_dims(push, 1))
        column = parts[0] if len(parts) == 1 else tc.concatenate(parts, axis=1)

        alphas = tc.stack(self.alpha, axis=1)
        alpha = sr.plus(new_bottom, sr.einsum("biqx,biqxry->bry", alphas, column, block_size=bs))
        if self.check_alive:
            self._check_alive(alpha.data, j)
        self.columns.append(column)
        self._triangle.append(column.data)
        self.bottom.append(new_bottom)
        self.alpha.append(alpha)
        return self._reading(alpha)

    def _check_alive(self, alpha: np.ndarray, j: int) -> None:
        flat = alpha.reshape(alpha.shape[0], -1)
        if self.semiring is LOG:
            dead = np.all(flat == -np.inf, axis=1)
        else:
            dead = np.all(flat == 0.0, axis=1)
        if np.isnan(flat).any():
            raise FloatingPointError(f"NaN forward weight at step {j}")
        if dead.any():
            raise DeadStackError(j, np.flatnonzero(dead).tolist())

    # -- inspection -------------------------------------------------------------
    def forward_weights(self, batch_index: int = 0) -> np.ndarray:
        """Real-valued α for one batch element, shape (t+1, Q, Γ)."""
        return self.semiring.to_real(np.stack([a.data[batch_index] for a in self.alpha]))

    def snapshot(self, threshold: float = 0.0, batch_index: int = 0, state_names=None, symbol_names=None):
        return wfa_snapshot(self, threshold, batch_index, state_names, symbol_names)


# -- stack WFA export ------------------------------------------------------------------

INITIAL = "start"


@dataclass(frozen=True)
class WfaEdge:
    source: str
    target: str
    symbol: str
    weight: float

    @property
    def label(self) -> str:
        return f"{self.symbol}/{self.weight:.4g}"


@dataclass
class WfaSnapshot:
    nodes: list[str] = field(default_factory=list)
    edges: list[WfaEdge] = field(default_factory=list)

    def to_dot(self) -> str:
        lines = ["digraph stack_wfa {", "  rankdir=LR;", f'  "{INITIAL}" [shape=point];']
        for node in self.nodes:
            if node != INITIAL:
                lines.append(f'  "{node}" [label="{node}"];')
        for e in self.edges:
            lines.append(f'  "{e.source}" -> "{e.target}" [label="{e.label}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def wfa_snapshot(stack: NondeterministicStack, threshold: float = 0.0, batch_index: int = 0,
                 state_names=None, symbol_names=None) -> WfaSnapshot:
    """Nodes and edges of the stack WFA that are reachable with weight above ``threshold``.

    The axiom edge is always included.  Other edges are kept when their own
    weight and the forward weight of their source exceed ``threshold``.
    """
    qn = state_names or [f"q{i}" for i in range(stack.num_states)]
    gn = symbol_names or [str(i) for i in range(stack.num_symbols)]
    to_real = stack.semiring.to_real

    def name(j, q, x):
        return f"{j},{qn[q]},{gn[x]}"

    alpha = stack.forward_weights(batch_index)
    axiom = name(0, stack.start_state, stack.bottom_symbol)
    snap = WfaSnapshot([INITIAL, axiom], [WfaEdge(INITIAL, axiom, gn[stack.bottom_symbol], 1.0)])
    seen = set(snap.nodes)

    def keep(edge: WfaEdge):
        snap.edges.append(edge)
        if edge.target not in seen:
            seen.add(edge.target)
            snap.nodes.append(edge.target)

    for j in range(1, stack.num_layers + 1):
        bottom = to_real(stack.bottom[j].data[batch_index])
        for r, y in zip(*np.nonzero(bottom > threshold)):
            keep(WfaEdge(INITIAL, name(j, r, y), gn[y], float(bottom[r, y])))
        column = to_real(stack.columns[j - 1].data[batch_index])
        for i, q, x, r, y in zip(*np.nonzero(column > threshold)):
            if alpha[i, q, x] > threshold:
                keep(WfaEdge(name(i, q, x), name(j, r, y), gn[y], float(column[i, q, x, r, y])))
    return snap


def run_pda(pda: WeightedPda, w: str, semiring: Semiring = REAL, **kwargs) -> NondeterministicStack:
    """Drive a stack with the packed transition weights of ``pda`` on ``w``."""
    deltas = pack_transitions(pda, w, semiring)
    stack = NondeterministicStack(
        len(pda.states),
        len(pda.stack_alphabet),
        start_state=pda.states.index(pda.start),
        bottom_symbol=pda.stack_alphabet.index(pda.bottom),
        semiring=semiring,
        **kwargs,
    )
    with tc.no_grad():
        for d in deltas:
            stack.step(Tensor(d[None]))
    return stack


def pda_snapshot(pda: WeightedPda, w: str, threshold: float = 0.0, semiring: Semiring = REAL) -> WfaSnapshot:
    stack = run_pda(pda, w, semiring)
    return wfa_snapshot(stack, threshold, 0, list(pda.states), list(pda.stack_alphabet))
