"""Time reparametrizations built from the talweg: the majorant
``max(phi_up, 1)``, its primitive ``theta``, the inverse ``Psi`` and the
cumulative oriented talweg ``sigma``."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from .process import SweepingProcess
from .talweg import (
    CONVERGENT,
    CriticalValueError,
    TalwegTable,
    cumulative_talweg,
    integrate_talweg,
    sample_talweg,
    talweg_at,
)

PASS_TOL = 1e-3
VIOLATION_LEVEL = 1.01


class DesingularizationError(ValueError):
    pass


def build_majorant(table: TalwegTable) -> TalwegTable:
    """Table with ``phi_up`` replaced by ``max(phi_up, 1)``."""
    inner = table.critical_flags[1:-1]
    if np.any(inner):
        t = table.grid[1:-1][inner][0]
        raise CriticalValueError(f"critical value inside window at t={t:.17g}")
    return table.with_phi_up(np.maximum(table.phi_up, 1.0))


def _check_window(table: TalwegTable, a: float, b: float) -> None:
    res = integrate_talweg(table, a, b)
    if res.verdict != CONVERGENT:
        raise DesingularizationError(f"talweg on [{a}, {b}] is {res.verdict}; no desingularization is built")


@dataclass
class DesingularizationMap:
    a: float
    b: float
    rho: float
    theta_nodes: np.ndarray  # (k, 2): t, theta(t)
    table: TalwegTable
    majorant: TalwegTable

    def __post_init__(self):
        t, th = self.theta_nodes[:, 0], self.theta_nodes[:, 1]
        self._psi = PchipInterpolator(th, t, extrapolate=False)
        self._theta = PchipInterpolator(t, th, extrapolate=False)
        fin = np.isfinite(self.majorant.phi_up)
        self._bar_t = self.majorant.grid[fin]
        self._bar_v = self.majorant.phi_up[fin]
        self._crit_ends = (not fin[0], not fin[-1])

    def psi(self, r) -> np.ndarray:
        r = np.clip(np.asarray(r, dtype=float), 0.0, self.rho)
        return np.clip(self._psi(r), self.a, self.b)

    def theta(self, t) -> np.ndarray:
        t = np.clip(np.asarray(t, dtype=float), self.a, self.b)
        return self._theta(t)

    def phi_bar(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        v = np.interp(t, self._bar_t, self._bar_v)
        if self._crit_ends[0]:
            v = np.where(t <= self.a, np.inf, v)
        if self._crit_ends[1]:
            v = np.where(t >= self.b, np.inf, v)
        return v

    def psi_prime(self, r) -> np.ndarray:
        """``1 / phi_bar(Psi(r))``."""
        return 1.0 / self.phi_bar(self.psi(r))

    def samples(self, count: int = 257) -> np.ndarray:
        """``(r, Psi(r), Psi'(r))`` rows on a uniform grid of ``[0, rho]``."""
        r = np.linspace(0.0, self.rho, count)
        return np.column_stack([r, self.psi(r), self.psi_prime(r)])


def build_map(S: SweepingProcess, a: float, b: float, nodes: int = 65, *, m: int = 64,
              table: TalwegTable | None = None) -> DesingularizationMap:
    if table is None:
        table = sample_talweg(S, a, b, nodes, m)
    _check_window(table, a, b)
    maj = build_majorant(table)
    t, th = cumulative_talweg(maj, a, b)
    if np.any(np.diff(th) <= 0):
        raise DesingularizationError("primitive of the majorant is not strictly increasing")
    return DesingularizationMap(float(a), float(b), float(th[-1]), np.column_stack([t, th]), table, maj)


@dataclass(frozen=True)
class DesingularizationCheck:
    max_value: float
    passed: bool
    violation: bool
    r: np.ndarray
    products: np.ndarray

    @property
    def argmax_r(self) -> float:
        return float(self.r[int(np.argmax(self.products))])


def verify_desingularized(S: SweepingProcess, dmap: DesingularizationMap, samples: int = 257,
                          m: int = 64) -> DesingularizationCheck:
    """``Psi'(r) * asym modulus`` at the talweg argmax of ``S(Psi(r))`` for
    ``samples`` values of ``r`` uniform in the open interval ``(0, rho)``."""
    r = dmap.rho * np.arange(1, samples + 1) / (samples + 1)
    psi, dpsi = dmap.psi(r), dmap.psi_prime(r)
    prods = np.empty(samples)
    for i, (t, d) in enumerate(zip(psi, dpsi)):
        up = talweg_at(S, float(t), m).phi_up
        prods[i] = 0.0 if up == 0.0 else d * up
    mx = float(np.max(prods))
    return DesingularizationCheck(mx, bool(mx <= 1.0 + PASS_TOL), bool(mx > VIOLATION_LEVEL), r, prods)


@dataclass(frozen=True)
class SigmaFunction:
    """Monotone table of ``sigma(t) = int_a^t phi_up``."""

    t: np.ndarray
    values: np.ndarray

    def __call__(self, t):
        return np.interp(np.asarray(t, dtype=float), self.t, self.values)

    @property
    def total(self) -> float:
        return float(self.values[-1])


def sigma_from_talweg(S: SweepingProcess, a: float, b: float, nodes: int = 65, *, m: int = 64,
                      table: TalwegTable | None = None) -> SigmaFunction:
    if table is None:
        table = sample_talweg(S, a, b, nodes, m)
    try:
        _check_window(table, a, b)
        t, cum = cumulative_talweg(table, a, b)
    except CriticalValueError as exc:
        raise DesingularizationError(str(exc)) from None
    if math.isinf(cum[-1]):
        raise DesingularizationError("talweg integral is infinite")
    return SigmaFunction(t, cum)
