"""Tensor contraction in the real and log semirings.

Two evaluation strategies share one interface:

* ``blocked``: the contracted indices are flattened into a single axis and
  processed in blocks of ``block_size`` positions.  Each block materializes
  at most ``output_size * block_size`` terms; log-space sums are accumulated
  with an online max-shifted logsumexp.  Works for any number of operands.
* ``scaled`` (two operands): each operand is shifted by its maximum over the
  summed-out indices, exponentiated, and contracted with ``numpy.einsum``.
  If any output entry falls more than ``SCALED_UNDERFLOW`` below its shift,
  the whole contraction is redone with ``blocked``, so results agree with
  the exact path to rounding.

``auto`` picks ``scaled`` whenever it applies.
"""
from __future__ import annotations

import functools
import math
from typing import Sequence

import numpy as np

from .tensor import Tensor, TensorError, as_tensor, make_node

DEFAULT_BLOCK_SIZE = 4096
SCALED_UNDERFLOW = 1e-200
METHODS = ("auto", "blocked", "scaled")


class EinsumSpecError(TensorError):
    pass


class _Operand:
    __slots__ = ("perm", "bshape", "con_pos", "con_dims", "out_dims", "reduce_axes", "injective")

    def __init__(self, indices: str, output: str, contracted: str, sizes: dict[str, int]):
        out_idx = [c for c in output if c in indices]
        con_idx = [c for c in contracted if c in indices]
        self.perm = tuple(indices.index(c) for c in out_idx + con_idx)
        self.bshape = tuple(sizes[c] if c in indices else 1 for c in output)
        self.con_pos = tuple(contracted.index(c) for c in con_idx)
        self.con_dims = tuple(sizes[c] for c in con_idx)
        self.out_dims = tuple(sizes[c] for c in out_idx)
        self.reduce_axes = tuple(i for i, c in enumerate(output) if c not in indices)
        self.injective = len(con_idx) == len(contracted)

    def gather(self, arr_t: np.ndarray, idx: tuple[np.ndarray, ...], b: int) -> np.ndarray:
        if self.con_pos:
            sub = arr_t[(Ellipsis,) + tuple(idx[p] for p in self.con_pos)]
            return sub.reshape(self.bshape + (b,))
        return arr_t.reshape(self.bshape + (1,))

    def scatter(self, grad_t: np.ndarray, contrib: np.ndarray, idx: tuple[np.ndarray, ...]) -> None:
        """Add a block's contribution (output-shaped + block axis) into ``grad_t``."""
        if self.reduce_axes:
            contrib = contrib.sum(axis=self.reduce_axes)
        if not self.con_pos:
            grad_t += contrib.sum(axis=-1).reshape(grad_t.shape)
            return
        out_size = math.prod(self.out_dims)
        con_size = math.prod(self.con_dims)
        g2 = grad_t.reshape(out_size, con_size)
        flat = np.ravel_multi_index(tuple(idx[p] for p in self.con_pos), self.con_dims)
        contrib = contrib.reshape(out_size, -1)
        if self.injective:
            g2[:, flat] += contrib
        else:
            np.add.at(g2, (slice(None), flat), contrib)


class ContractionPlan:
    """A parsed contraction ``"ab,bc->ac"`` bound to concrete operand shapes."""

    def __init__(self, spec: str, shapes: Sequence[tuple[int, ...]]):
        if "->" not in spec:
            raise EinsumSpecError(f"contraction spec needs an explicit output: {spec!r}")
        lhs, output = spec.replace(" ", "").split("->")
        inputs = lhs.split(",")
        if len(inputs) != len(shapes):
            raise EinsumSpecError(f"spec {spec!r} names {len(inputs)} operands, got {len(shapes)}")
        sizes: dict[str, int] = {}
        for indices, shape in zip(inputs, shapes):
            if len(indices) != len(shape):
                raise EinsumSpecError(f"operand {indices!r} has shape {tuple(shape)}")
            if len(set(indices)) != len(indices):
                raise EinsumSpecError(f"repeated index within operand {indices!r}")
            for c, n in zip(indices, shape):
                if sizes.setdefault(c, n) != n:
                    raise EinsumSpecError(f"index {c!r} has sizes {sizes[c]} and {n}")
        if len(set(output)) != len(output) or any(c not in sizes for c in output):
            raise EinsumSpecError(f"bad output indices {output!r}")
        contracted = "".join(dict.fromkeys(c for ix in inputs for c in ix if c not in output))
        self.inputs = tuple(inputs)
        self.output = output
        self.contracted = contracted
        self.out_shape = tuple(sizes[c] for c in output)
        self.con_dims = tuple(sizes[c] for c in contracted)
        self.num_terms = math.prod(self.con_dims)
        self.operands = [_Operand(ix, output, contracted, sizes) for ix in inputs]

    # -- block iteration -----------------------------------------------------
    def _blocks(self, block_size: int):
        if block_size < 1:
            raise EinsumSpecError("block_size must be >= 1")
        total = self.num_terms
        for start in range(0, max(total, 1), block_size):
            stop = min(total, start + block_size)
            if self.con_dims:
                idx = np.unravel_index(np.arange(start, stop), self.con_dims)
            else:
                idx = ()
            yield idx, stop - start

    def _prepare(self, arrays):
        return [np.transpose(a, op.perm) for a, op in zip(arrays, self.operands)]

    # -- log semiring ------------------------------------------------------------
    def forward_log(self, arrays: Sequence[np.ndarray], block_size: int) -> np.ndarray:
        dtype = np.result_type(*arrays)
        prepared = self._prepare(arrays)
        m = np.full(self.out_shape, -np.inf, dtype=dtype)
        s = np.zeros(self.out_shape, dtype=dtype)
        if self.num_terms == 0:
            return m
        for idx, b in self._blocks(block_size):
            term = functools.reduce(
                np.add, (op.gather(a, idx, b) for op, a in zip(self.operands, prepared))
            )
            new_m = np.maximum(m, term.max(axis=-1))
            shift = np.where(np.isfinite(new_m), new_m, 0.0)
            s = s * np.exp(m - shift) + np.exp(term - shift[..., None]).sum(axis=-1)
            m = new_m
        with np.errstate(divide="ignore"):
            return np.log(s) + np.where(np.isfinite(m), m, 0.0)

    def backward_log(self, arrays, result, grad, block_size, needs=None):
        prepared = self._prepare(arrays)
        finite = np.isfinite(result)
        safe = np.where(finite, result, 0.0)[..., None]
        gmask = np.where(finite, grad, 0.0)[..., None]
        grads_t = [np.zeros(p.shape, dtype=p.dtype) for p in prepared]
        needs = needs or [True] * len(arrays)
        for idx, b in self._blocks(block_size):
            term = functools.reduce(
                np.add, (op.gather(a, idx, b) for op, a in zip(self.operands, prepared))
            )
            gw = gmask * np.exp(term - safe)
            for op, g_t, need in zip(self.operands, grads_t, needs):
                if need:
                    op.scatter(g_t, np.broadcast_to(gw, self.out_shape + (b,)), idx)
        return [
            np.transpose(g, np.argsort(op.perm)) if need else None
            for g, op, need in zip(grads_t, self.operands, needs)
        ]

    # -- real semiring -------------------------------------------------------------
    def forward_real(self, arrays: Sequence[np.ndarray], block_size: int) -> np.ndarray:
        dtype = np.result_type(*arrays)
        prepared = self._prepare(arrays)
        s = np.zeros(self.out_shape, dtype=dtype)
        for idx, b in self._blocks(block_size):
            term = functools.reduce(
                np.multiply, (op.gather(a, idx, b) for op, a in zip(self.operands, prepared))
            )
            s = s + np.broadcast_to(term, self.out_shape + (term.shape[-1],)).sum(axis=-1)
        return s

    def backward_real(self, arrays, result, grad, block_size, needs=None):
        prepared = self._prepare(arrays)
        grads_t = [np.zeros(p.shape, dtype=p.dtype) for p in prepared]
        needs = needs or [True] * len(arrays)
        g = grad[..., None]
        for idx, b in self._blocks(block_size):
            gathered = [op.gather(a, idx, b) for op, a in zip(self.operands, prepared)]
            for i, (op, g_t, need) in enumerate(zip(self.operands, grads_t, needs)):
                if not need:
                    continue
                others = [x for k, x in enumerate(gathered) if k != i]
                prod = functools.reduce(np.multiply, others, g)
                op.scatter(g_t, np.broadcast_to(prod, self.out_shape + (b,)), idx)
        return [
            np.transpose(gr, np.argsort(op.perm)) if need else None
            for gr, op, need in zip(grads_t, self.operands, needs)
        ]


@functools.lru_cache(maxsize=1024)
def _matmul_layout(spec: str, shape_a: tuple[int, ...], shape_b: tuple[int, ...]):
    lhs, out = spec.split("->")
    ia, ib = lhs.split(",")
    sizes = dict(zip(ia, shape_a)) | dict(zip(ib, shape_b))
    batch = [c for c in out if c in ia and c in ib]
    free_a = [c for c in out if c in ia and c not in ib]
    free_b = [c for c in out if c in ib and c not in ia]
    con = [c for c in ia if c in ib and c not in out]
    only_a = tuple(i for i, c in enumerate(ia) if c not in ib and c not in out)
    only_b = tuple(i for i, c in enumerate(ib) if c not in ia and c not in out)
    ia_r = "".join(c for c in ia if c in ib or c in out)
    ib_r = "".join(c for c in ib if c in ia or c in out)
    perm_a = [ia_r.index(c) for c in batch + free_a + con]
    perm_b = [ib_r.index(c) for c in batch + con + free_b]
    nb, na, nbf, nc = (math.prod(sizes[c] for c in grp) for grp in (batch, free_a, free_b, con))
    mm_out = batch + free_a + free_b
    out_perm = [mm_out.index(c) for c in out]
    mm_shape = [sizes[c] for c in mm_out]
    return only_a, only_b, perm_a, perm_b, (nb, na, nc), (nb, nc, nbf), mm_shape, out_perm


def pair_contract(spec: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Two-operand real contraction as one batched matrix product."""
    only_a, only_b, perm_a, perm_b, shape_a, shape_b, mm_shape, out_perm = _matmul_layout(spec, a.shape, b.shape)
    if only_a:
        a = a.sum(axis=only_a)
    if only_b:
        b = b.sum(axis=only_b)
    a = np.transpose(a, perm_a).reshape(shape_a)
    b = np.transpose(b, perm_b).reshape(shape_b)
    return np.transpose(np.matmul(a, b).reshape(mm_shape), out_perm)


def _align(arr: np.ndarray, indices: str, output: str) -> np.ndarray:
    """Reorder an array over ``indices`` (a subset of ``output``) to broadcast against it."""
    kept = [c for c in output if c in indices]
    arr = np.transpose(arr, [indices.index(c) for c in kept])
    return arr.reshape([arr.shape[kept.index(c)] if c in indices else 1 for c in output])


class _Pair:
    """Index bookkeeping for a two-operand contraction."""

    def __init__(self, plan: ContractionPlan):
        self.a, self.b = plan.inputs
        self.out = plan.output
        self.a_red = tuple(i for i, c in enumerate(self.a) if c not in self.out)
        self.b_red = tuple(i for i, c in enumerate(self.b) if c not in self.out)
        self.a_keep = "".join(c for c in self.a if c in self.out)
        self.b_keep = "".join(c for c in self.b if c in self.out)
        # operand-gradient subscripts: indices that survive into the output or the partner
        self.a_sub = "".join(c for c in self.a if c in self.out or c in self.b)
        self.b_sub = "".join(c for c in self.b if c in self.out or c in self.a)
        self.spec = f"{self.a},{self.b}->{self.out}"

    def grad(self, which: int, g: np.ndarray, other: np.ndarray, shape) -> np.ndarray:
        mine, sub, partner = (self.a, self.a_sub, self.b) if which == 0 else (self.b, self.b_sub, self.a)
        part = pair_contract(f"{self.out},{partner}->{sub}", np.asarray(g), other)
        return np.broadcast_to(_align(part, sub, mine), shape)


@functools.lru_cache(maxsize=512)
def _pair_for(plan: ContractionPlan) -> _Pair:
    return _Pair(plan)


def _shift(arr: np.ndarray, axes: tuple[int, ...]):
    m = arr.max(axis=axes, keepdims=True) if arr.size else np.zeros_like(arr)
    finite = np.isfinite(m)
    m_safe = np.where(finite, m, 0.0)
    with np.errstate(invalid="ignore"):
        scaled = np.exp(arr - m_safe)
    return scaled, m_safe, finite


def _scaled_log_forward(plan: ContractionPlan, arrays):
    """Returns ``(result, state)`` or ``None`` when an entry would underflow."""
    pair = _pair_for(plan)
    a, b = arrays
    sa, ma, fa = _shift(a, pair.a_red)
    sb, mb, fb = _shift(b, pair.b_red)
    sq_a, sq_b = pair.a_red, pair.b_red
    shift = _align(np.squeeze(ma, sq_a), pair.a_keep, pair.out) + _align(np.squeeze(mb, sq_b), pair.b_keep, pair.out)
    alive = _align(np.squeeze(fa, sq_a), pair.a_keep, pair.out) & _align(np.squeeze(fb, sq_b), pair.b_keep, pair.out)
    shift, alive = np.broadcast_to(shift, plan.out_shape), np.broadcast_to(alive, plan.out_shape)
    total = pair_contract(pair.spec, sa, sb)
    if np.any(alive & (total < SCALED_UNDERFLOW)):
        return None
    with np.errstate(divide="ignore"):
        out = np.where(alive, np.log(np.where(alive, total, 1.0)) + shift, -np.inf)
    return out, (shift, alive)


def _scaled_log_backward(plan: ContractionPlan, arrays, out, grad, state, needs):
    pair = _pair_for(plan)
    shift, alive = state
    sa = _shift(arrays[0], pair.a_red)[0]
    sb = _shift(arrays[1], pair.b_red)[0]
    with np.errstate(over="ignore", invalid="ignore"):
        h = np.where(alive, grad * np.exp(shift - np.where(alive, out, 0.0)), 0.0)
    grads = []
    for which, (arr, scaled, other, need) in enumerate(zip(arrays, (sa, sb), (sb, sa), needs)):
        grads.append(scaled * pair.grad(which, h, other, arr.shape) if need else None)
    return grads


class Contraction:
    """One evaluated contraction with a matching backward rule."""

    def __init__(self, spec: str, arrays, semiring: str, block_size: int = DEFAULT_BLOCK_SIZE, method: str = "auto"):
        if method not in METHODS:
            raise EinsumSpecError(f"unknown contraction method {method!r}")
        if block_size < 1:
            raise EinsumSpecError("block_size must be >= 1")
        self.plan = plan_for(spec, tuple(np.shape(a) for a in arrays))
        self.arrays = arrays
        self.semiring = semiring
        self.block_size = block_size
        self.state = None
        two = len(arrays) == 2
        if method == "scaled" and not two:
            raise EinsumSpecError("the scaled method needs exactly two operands")
        self.method = "scaled" if (method == "scaled" or (method == "auto" and two)) else "blocked"
        if semiring == "log":
            if self.method == "scaled":
                res = _scaled_log_forward(self.plan, arrays)
                if res is None:
                    self.method = "blocked"
                else:
                    self.result, self.state = res
            if self.method == "blocked":
                self.result = self.plan.forward_log(arrays, block_size)
        elif semiring == "real":
            if self.method == "scaled":
                self.result = pair_contract(_pair_for(self.plan).spec, *arrays)
            else:
                self.result = self.plan.forward_real(arrays, block_size)
        else:
            raise EinsumSpecError(f"unknown semiring {semiring!r}")

    def backward(self, grad: np.ndarray, needs) -> list:
        plan, arrays = self.plan, self.arrays
        if self.semiring == "log":
            if self.method == "scaled":
                return _scaled_log_backward(plan, arrays, self.result, grad, self.state, needs)
            return plan.backward_log(arrays, self.result, grad, self.block_size, list(needs))
        if self.method == "scaled":
            pair = _pair_for(plan)
            return [
                pair.grad(which, grad, arrays[1 - which], arrays[which].shape) if need else None
                for which, need in enumerate(needs)
            ]
        return plan.backward_real(arrays, self.result, grad, self.block_size, list(needs))


@functools.lru_cache(maxsize=512)
def plan_for(spec: str, shapes: tuple[tuple[int, ...], ...]) -> ContractionPlan:
    return ContractionPlan(spec, shapes)


def _check_nan(tensors: Sequence[Tensor]) -> None:
    for t in tensors:
        if np.isnan(t.data).any():
            raise TensorError("NaN in contraction operand")


def _einsum(semiring: str, spec: str, operands, block_size: int, method: str) -> Tensor:
    tensors = [as_tensor(o) for o in operands]
    _check_nan(tensors)
    c = Contraction(spec, [t.data for t in tensors], semiring, block_size, method)

    def bw(g):
        return c.backward(g, [t.requires_grad for t in tensors])

    return make_node(c.result, tensors, bw)


def einsum_log(spec: str, *operands, block_size: int = DEFAULT_BLOCK_SIZE, method: str = "auto") -> Tensor:
    """Log-semiring contraction: products become sums, sums become logsumexp."""
    return _einsum("log", spec, operands, block_size, method)


def einsum_real(spec: str, *operands, block_size: int = DEFAULT_BLOCK_SIZE, method: str = "auto") -> Tensor:
    """Ordinary sum-of-products contraction with the same interface as :func:`einsum_log`."""
    return _einsum("real", spec, operands, block_size, method)
