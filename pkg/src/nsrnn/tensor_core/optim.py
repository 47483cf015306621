from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import Tensor, TensorError


class NonFiniteGradientError(TensorError):
    pass


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moments: list[np.ndarray] = field(default_factory=list)
    second_moments: list[np.ndarray] = field(default_factory=list)


def global_norm(grads: Sequence[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def clip_by_global_norm(grads: list[np.ndarray], threshold: float) -> tuple[list[np.ndarray], float]:
    """Rescale ``grads`` so their joint L2 norm is at most ``threshold``.

    Returns the (possibly rescaled) gradients and the norm before clipping.
    """
    if threshold <= 0:
        raise ValueError("clip threshold must be positive")
    norm = global_norm(grads)
    if norm > threshold:
        scale = threshold / norm
        grads = [g * scale for g in grads]
    return grads, norm


def adam_step_with_clip(
    params: Sequence[Tensor],
    grads: Sequence[np.ndarray | None],
    state: AdamState,
    clip_threshold: float | None = 5.0,
) -> float:
    """One in-place Adam update; returns the pre-clipping gradient norm."""
    grads = [np.zeros_like(p.data) if g is None else g for p, g in zip(params, grads)]
    for p, g in zip(params, grads):
        if g.shape != p.shape:
            raise TensorError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        if not np.isfinite(g).all():
            raise NonFiniteGradientError(f"non-finite gradient for parameter {p.name or p.shape}")
    if clip_threshold is not None:
        grads, norm = clip_by_global_norm(grads, clip_threshold)
    else:
        norm = global_norm(grads)
    if not state.first_moments:
        state.first_moments = [np.zeros_like(p.data) for p in params]
        state.second_moments = [np.zeros_like(p.data) for p in params]
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.first_moments, state.second_moments):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return norm


class Adam:
    """Thin stateful wrapper pairing a parameter list with an :class:`AdamState`."""

    def __init__(self, params: Sequence[Tensor], lr: float = 0.001, clip_threshold: float | None = 5.0):
        self.params = list(params)
        self.state = AdamState(lr=lr)
        self.clip_threshold = clip_threshold

    @property
    def lr(self) -> float:
        return self.state.lr

    @lr.setter
    def lr(self, value: float) -> None:
        self.state.lr = value

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> float:
        return adam_step_with_clip(self.params, [p.grad for p in self.params], self.state, self.clip_threshold)
