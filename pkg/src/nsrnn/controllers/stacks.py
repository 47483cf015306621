"""Deterministic differentiable stacks used by the baselines.

Superposition stacks keep a fixed number of cells (index 0 is the top) and
blend the push / pop / no-op outcomes of every cell.  Stratification stacks
keep a growing list of vectors with strengths (index -1 is the top) and read
the topmost unit of total strength.
"""
from __future__ import annotations

import numpy as np

from .. import tensor_core as tc
from ..tensor_core import Tensor


def superposition_step(cells: Tensor, actions: Tensor, pushed: Tensor) -> tuple[Tensor, Tensor]:
    """Blend all three operations.

    ``cells`` is (B, depth, m); ``actions`` is (B, 3) holding push, pop and
    no-op probabilities; ``pushed`` is (B, m).  Returns new cells and the
    reading (the new top cell).
    """
    cells, actions, pushed = tc.as_tensor(cells), tc.as_tensor(actions), tc.as_tensor(pushed)
    b, depth, m = cells.shape
    p_push = tc.reshape(actions[:, 0], (b, 1, 1))
    p_pop = tc.reshape(actions[:, 1], (b, 1, 1))
    p_noop = tc.reshape(actions[:, 2], (b, 1, 1))
    after_push = tc.concatenate([tc.reshape(pushed, (b, 1, m)), cells[:, : depth - 1]], axis=1)
    after_pop = tc.concatenate([cells[:, 1:], Tensor(np.zeros((b, 1, m), cells.dtype))], axis=1)
    new = p_push * after_push + p_noop * cells + p_pop * after_pop
    return new, new[:, 0]


def _strength_above(strengths: Tensor) -> Tensor:
    """Sum of strengths strictly above each position (positions bottom to top)."""
    t = strengths.shape[1]
    above = np.triu(np.ones((t, t), strengths.dtype), k=1).T  # [i', i] = 1 iff i' > i
    return tc.matmul(strengths, Tensor(above))


def stratification_step(
    values: Tensor, strengths: Tensor, push_weight: Tensor, pop_weight: Tensor, pushed: Tensor
) -> tuple[Tensor, Tensor, Tensor]:
    """Pop by ``pop_weight``, push ``pushed`` with ``push_weight``, read the top unit.

    ``values`` is (B, t, m), ``strengths`` (B, t), weights (B, 1), ``pushed`` (B, m).
    """
    values, strengths = tc.as_tensor(values), tc.as_tensor(strengths)
    push_weight, pop_weight, pushed = tc.as_tensor(push_weight), tc.as_tensor(pop_weight), tc.as_tensor(pushed)
    b, t, m = values.shape
    if t:
        strengths = tc.relu(strengths - tc.relu(pop_weight - _strength_above(strengths)))
    values = tc.concatenate([values, tc.reshape(pushed, (b, 1, m))], axis=1)
    strengths = tc.concatenate([strengths, push_weight], axis=1)
    weight = tc.minimum(strengths, tc.relu(1.0 - _strength_above(strengths)))
    reading = tc.sum(tc.reshape(weight, (b, t + 1, 1)) * values, axis=1)
    return values, strengths, reading
