"""Symmetric and asymmetric coderivative moduli of a sweeping process."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .process import NormalRay, SweepingProcess

DEFAULT_CALM_STEPS = tuple(1e-2 * 2.0 ** -k for k in range(11))


@dataclass(frozen=True)
class ModulusValue:
    value: float

    def __post_init__(self):
        if math.isnan(self.value) or self.value < 0:
            raise ValueError(f"modulus must be nonnegative, got {self.value}")

    @property
    def critical(self) -> bool:
        return math.isinf(self.value)

    def __float__(self) -> float:
        return self.value


ZERO = ModulusValue(0.0)
INF = ModulusValue(math.inf)


def moduli_arrays(alpha, unorm) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ``(asym, sym)`` for rays with time part ``alpha`` and
    spatial norm ``unorm``; ``u = 0`` gives +inf (or 0 for nonpositive alpha)."""
    alpha = np.asarray(alpha, dtype=float)
    unorm = np.asarray(unorm, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = alpha / unorm
    vertical = unorm == 0
    asym = np.where(vertical, np.where(alpha > 0, np.inf, 0.0), np.maximum(ratio, 0.0))
    sym = np.where(vertical, np.where(alpha != 0, np.inf, 0.0), np.abs(ratio))
    return asym, sym


def asym_modulus(ray: NormalRay) -> ModulusValue:
    """``sup a+`` over the coderivative at unit ``u``: ``max(0, alpha/|u|)``."""
    if ray.zero:
        return ZERO
    a, _ = moduli_arrays(ray.alpha, np.linalg.norm(ray.u))
    return ModulusValue(float(a))


def sym_modulus(ray: NormalRay) -> ModulusValue:
    """``sup |a|`` over the coderivative at unit ``u``: ``|alpha|/|u|``."""
    if ray.zero:
        return ZERO
    _, s = moduli_arrays(ray.alpha, np.linalg.norm(ray.u))
    return ModulusValue(float(s))


def modulus_at(S: SweepingProcess, t: float, x) -> tuple[ModulusValue, ModulusValue]:
    ray = S.boundary_normal(t, x)
    return asym_modulus(ray), sym_modulus(ray)


def oriented_calm_estimate(S: SweepingProcess, t: float, x, steps: Sequence[float] = DEFAULT_CALM_STEPS) -> float:
    """Max over the step ladder of ``d(x, S(t + dt)) / dt``."""
    x = np.asarray(x, dtype=float)
    if not S.contains(t, x):
        raise ValueError(f"point {x.tolist()} is not in S({t})")
    best = 0.0
    for dt in steps:
        if dt <= 0:
            raise ValueError("calmness steps must be positive")
        y = S.project(t + dt, x)
        best = max(best, float(np.linalg.norm(x - y)) / dt)
    return best
