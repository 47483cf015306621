"""Central finite-difference checks against reverse-mode gradients."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad


@dataclass
class GradCheckResult:
    relative_errors: np.ndarray  # one entry per checked coordinate

    @property
    def worst(self) -> float:
        return float(self.relative_errors.max()) if self.relative_errors.size else 0.0

    def fraction_below(self, tol: float) -> float:
        if not self.relative_errors.size:
            return 1.0
        return float(np.mean(self.relative_errors < tol))


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-7) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def check_gradients(
    fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    step: float = 1e-6,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
    fd_dtype=None,
) -> GradCheckResult:
    """Compare ``backward`` gradients of scalar ``fn()`` with central differences.

    ``max_coords`` limits how many coordinates per parameter are perturbed
    (chosen with ``rng``); ``None`` checks all of them.  With ``fd_dtype``
    (e.g. ``np.longdouble``) the finite differences are evaluated on a copy of
    the parameters in that precision, which lowers the rounding noise of the
    reference below what a 64-bit difference quotient can resolve.
    """
    for p in params:
        p.grad = None
    fn().backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    errors = []
    originals = [p.data for p in params]
    if fd_dtype is not None:
        for p in params:
            p.data = p.data.astype(fd_dtype)
    try:
        errors = _numeric_errors(fn, params, analytic, step, max_coords, rng)
    finally:
        for p, data in zip(params, originals):
            p.data = data
    return GradCheckResult(np.asarray(errors, dtype=float))


def _numeric_errors(fn, params, analytic, step, max_coords, rng) -> list[float]:
    errors = []
    with no_grad():
        for p, grad in zip(params, analytic):
            flat = p.data.reshape(-1)
            coords = np.arange(flat.size)
            if max_coords is not None and flat.size > max_coords:
                coords = (rng or np.random.default_rng(0)).choice(flat.size, max_coords, replace=False)
            for c in coords:
                orig = flat[c]
                flat[c] = orig + step
                plus = fn().data[()]
                flat[c] = orig - step
                minus = fn().data[()]
                flat[c] = orig
                numeric = (plus - minus) / (2 * step)
                errors.append(float(relative_error(grad.reshape(-1)[c], numeric)))
    return errors
