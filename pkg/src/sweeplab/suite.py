"""Verification suites: the equivalent integrability / desingularization /
length-control properties plus the supporting lemma checks."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from . import __version__
from .catalog import DEFAULT_CALM_STEPS, CatalogEntry, uniform_grid
from .coderivative import moduli_arrays, oriented_calm_estimate
from .desing import DesingularizationError, build_map, sigma_from_talweg, verify_desingularized
from .dynamics import (
    OrbitError,
    catching_up,
    catching_up_on,
    excess_estimate,
    orbit_from_sequence,
    piecewise_catching_up,
    refine_to_orbit,
    talweg_chasing,
    total_length,
    velocity_check,
)
from .field_expr import FieldDomainError
from .process import ProcessError, SweepingProcess, slice_continuity_diagnostic
from .talweg import CONVERGENT, CriticalValueError, boundary_moduli, integrate_talweg, sample_decided, sample_talweg, talweg_at

CHECK_IDS = ("A.a", "A.b", "A.c", "A.d", "B.e", "B.f", "L.velocity", "L.excess", "L.moduli-order", "L.criterion")
SUITES = {
    "theoremA": ("A.a", "A.b", "A.c", "A.d"),
    "theoremB": ("B.e", "B.f"),
    "lemmas": ("L.velocity", "L.excess", "L.moduli-order", "L.criterion"),
    "all": CHECK_IDS,
}
PASS, FAIL, NOT_APPLICABLE, EXPECTED_FAIL = "pass", "fail", "not-applicable", "expected-fail"


@dataclass(frozen=True)
class SuiteConfig:
    suite: str = "all"
    seed: int = 0
    nodes: int = 65
    m: int = 64
    desing_samples: int = 257
    subwindows: int = 10
    grids: int = 10
    segments: int = 8
    orbit_tol: float = 1e-4
    length_tol: float = 1e-3
    velocity_steps: int = 1024
    velocity_tol: float = 5e-3
    excess_windows: int = 5
    excess_tol: float = 1e-6
    order_rays: int = 2000
    criterion_points: int = 20
    criterion_tol: float = 1e-3

    def __post_init__(self):
        if self.suite not in SUITES:
            raise ValueError(f"unknown suite {self.suite!r}; expected one of {', '.join(SUITES)}")


@dataclass(frozen=True)
class Hints:
    """Per-process knobs; catalog entries supply tuned values."""

    name: str = "custom"
    counterexample: bool = False
    expected_integral: float | None = None
    lemma_window: tuple[float, float] | None = None
    velocity_window: tuple[float, float] | None = None
    calm_steps: tuple[float, ...] = DEFAULT_CALM_STEPS
    per_level: int = 16
    chasing_grid: Callable = uniform_grid
    epsilons: tuple[float, ...] = ()

    @classmethod
    def from_entry(cls, e: CatalogEntry) -> "Hints":
        return cls(e.name, e.counterexample, e.expected_integral, e.lemma_window, e.velocity_window,
                   e.calm_steps, e.per_level, e.chasing_grid, e.epsilons)


@dataclass
class CheckResult:
    id: str
    status: str
    measured: float | None = None
    bound: float | None = None
    tolerance: float | None = None
    detail: str = ""


@dataclass
class VerificationReport:
    process: str
    window: tuple[float, float]
    checks: list[CheckResult]
    diagnostics: dict
    provenance: dict

    @property
    def first_failure(self) -> str | None:
        for c in self.checks:
            if c.status == FAIL:
                return c.id
        return None

    @property
    def verdict(self) -> str:
        return FAIL if self.first_failure else PASS

    def check(self, cid: str) -> CheckResult:
        return next(c for c in self.checks if c.id == cid)

    def to_json(self) -> dict:
        diag = dict(self.diagnostics, verdict=self.verdict, first_failure=self.first_failure)
        return _clean({
            "process": self.process,
            "window": list(self.window),
            "checks": [asdict(c) for c in self.checks],
            "diagnostics": diag,
            "provenance": self.provenance,
        })


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, inf to "inf", nan to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def config_hash(config: SuiteConfig, process: SweepingProcess, window) -> str:
    payload = {"config": asdict(config), "process": process.to_dict(), "window": [float(w) for w in window]}
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


class _Context:
    def __init__(self, S, a, b, cfg, hints):
        self.S, self.a, self.b, self.cfg, self.hints = S, a, b, cfg, hints
        self.rng = np.random.default_rng(cfg.seed)
        self.table = None
        self.integral = None
        self.sigma = None
        self.sigma_error = ""
        self.growth = None
        lw = hints.lemma_window or (a, b)
        self.lemma_window = (max(lw[0], a), min(lw[1], b))

    # shared pieces ----------------------------------------------------------
    def ensure_sigma(self):
        if self.sigma is None and not self.sigma_error:
            try:
                self.sigma = sigma_from_talweg(self.S, self.a, self.b, table=self.table)
            except (DesingularizationError, CriticalValueError) as exc:
                self.sigma_error = str(exc)
        return self.sigma

    def chasing_growth(self):
        """Totals of piecewise catching-up runs restarted at the talweg
        argmax, over ``[eps, b]`` for the entry's epsilon ladder."""
        if self.growth is None:
            eps = [e for e in self.hints.epsilons if self.a < e < self.b]
            totals = [talweg_chasing(self.S, self.hints.chasing_grid(e, self.b), self.cfg.m).total for e in eps]
            self.growth = (eps, totals)
        return self.growth

    def boundary_point(self, t: float) -> np.ndarray:
        P = self.S.sample_boundary(t, 16)
        return P[int(self.rng.integers(len(P)))]

    def argmax_point(self, t: float) -> np.ndarray:
        p = talweg_at(self.S, t, self.cfg.m).point
        if np.any(np.isnan(p)):
            return self.boundary_point(t)
        return p

    def sub_window(self, min_frac: float = 1e-3) -> tuple[float, float]:
        while True:
            t1, t2 = np.sort(self.rng.uniform(self.a, self.b, 2))
            if t2 - t1 >= min_frac * (self.b - self.a):
                return float(t1), float(t2)


def _length_bound(ctx: _Context, cid: str, excesses: list[float], detail: str) -> CheckResult:
    worst = max(excesses) if excesses else 0.0
    status = PASS if worst <= ctx.cfg.length_tol else FAIL
    return CheckResult(cid, status, worst, 0.0, ctx.cfg.length_tol, detail)


def _growth_check(ctx: _Context, cid: str) -> CheckResult:
    eps, totals = ctx.chasing_growth()
    if len(totals) < 2:
        return CheckResult(cid, FAIL, None, None, None, "no epsilon ladder inside the window")
    increasing = all(y > x for x, y in zip(totals[:-1], totals[1:]))
    status = EXPECTED_FAIL if increasing and totals[-1] > 2.0 * totals[0] else FAIL
    detail = (f"piecewise catching-up totals over [eps, {ctx.b}] for eps from {eps[0]} to {eps[-1]}: "
              + ", ".join(f"{v:.6f}" for v in totals) + "; no finite length bound")
    return CheckResult(cid, status, totals[-1], 2.0 * totals[0], 0.0, detail)


# checks -----------------------------------------------------------------------


def _check_Ad(ctx: _Context) -> CheckResult:
    res = ctx.integral
    if ctx.hints.counterexample:
        ratio = res.window_ratio.get("a", res.window_ratio.get("b", math.nan))
        status = EXPECTED_FAIL if res.verdict.startswith("divergent") else FAIL
        return CheckResult("A.d", status, ratio, 0.95, 0.0, f"verdict {res.verdict}; dyadic window ratio")
    ok = res.verdict == CONVERGENT
    exp = ctx.hints.expected_integral
    if ok and exp is not None:
        ok = abs(res.value - exp) <= ctx.cfg.length_tol
    return CheckResult("A.d", PASS if ok else FAIL, res.value, exp, ctx.cfg.length_tol if exp is not None else None,
                       f"verdict {res.verdict}")


def _check_Aa(ctx: _Context) -> CheckResult:
    try:
        dmap = build_map(ctx.S, ctx.a, ctx.b, table=ctx.table)
    except (DesingularizationError, CriticalValueError) as exc:
        if ctx.hints.counterexample:
            return CheckResult("A.a", EXPECTED_FAIL, None, 1.0, 1e-3, f"no desingularization: {exc}")
        return CheckResult("A.a", FAIL, None, 1.0, 1e-3, str(exc))
    if ctx.hints.counterexample:
        return CheckResult("A.a", FAIL, dmap.rho, None, None, "desingularization built for a counterexample")
    chk = verify_desingularized(ctx.S, dmap, ctx.cfg.desing_samples, ctx.cfg.m)
    detail = f"rho {dmap.rho:.9g}; max at r = {chk.argmax_r:.9g}"
    if chk.violation:
        detail += "; genuine violation (above 1.01)"
    return CheckResult("A.a", PASS if chk.passed else FAIL, chk.max_value, 1.0, 1e-3, detail)


def _check_Ab(ctx: _Context) -> CheckResult:
    if ctx.hints.counterexample:
        return _growth_check(ctx, "A.b")
    sigma = ctx.ensure_sigma()
    if sigma is None:
        return CheckResult("A.b", NOT_APPLICABLE, detail=ctx.sigma_error)
    ex = []
    for _ in range(ctx.cfg.subwindows):
        t1, t2 = ctx.sub_window()
        orbit = refine_to_orbit(ctx.S, t1, t2, ctx.boundary_point(t1), ctx.cfg.orbit_tol)
        ex.append(orbit.length - float(sigma(t2) - sigma(t1)))
    return _length_bound(ctx, "A.b", ex, f"{ctx.cfg.subwindows} refined orbits; measured = max(length - sigma increment)")


def _check_Ac(ctx: _Context) -> CheckResult:
    if ctx.hints.counterexample:
        return _growth_check(ctx, "A.c")
    sigma = ctx.ensure_sigma()
    if sigma is None:
        return CheckResult("A.c", NOT_APPLICABLE, detail=ctx.sigma_error)
    cuts = np.linspace(ctx.a, ctx.b, ctx.cfg.segments + 1)
    total = 0.0
    for t0, t1 in zip(cuts[:-1], cuts[1:]):
        total += refine_to_orbit(ctx.S, float(t0), float(t1), ctx.argmax_point(float(t0)), ctx.cfg.orbit_tol).length
    bound = sigma.total
    status = PASS if total <= bound + ctx.cfg.length_tol else FAIL
    return CheckResult("A.c", status, total, bound, ctx.cfg.length_tol,
                       f"{ctx.cfg.segments} orbit pieces restarted at the talweg argmax")


def _check_Be(ctx: _Context) -> CheckResult:
    if ctx.hints.counterexample:
        return _growth_check(ctx, "B.e")
    sigma = ctx.ensure_sigma()
    if sigma is None:
        return CheckResult("B.e", NOT_APPLICABLE, detail=ctx.sigma_error)
    ex = []
    for _ in range(ctx.cfg.grids):
        k = int(ctx.rng.integers(2, 65))
        times = np.unique(ctx.rng.uniform(ctx.a, ctx.b, k))
        if len(times) < 2:
            continue
        seq = catching_up_on(ctx.S, times, ctx.boundary_point(float(times[0])))
        if seq.error:
            raise OrbitError(seq.error)
        ex.append(seq.length - float(sigma(times[-1]) - sigma(times[0])))
    return _length_bound(ctx, "B.e", ex, f"{ctx.cfg.grids} random grids; measured = max(sum of steps - sigma increment)")


def _check_Bf(ctx: _Context) -> CheckResult:
    if ctx.hints.counterexample:
        return _growth_check(ctx, "B.f")
    sigma = ctx.ensure_sigma()
    if sigma is None:
        return CheckResult("B.f", NOT_APPLICABLE, detail=ctx.sigma_error)
    inner = np.sort(ctx.rng.uniform(ctx.a, ctx.b, ctx.cfg.segments - 1))
    cuts = np.concatenate([[ctx.a], inner, [ctx.b]])
    segs = [((float(t0), float(t1)), int(ctx.rng.integers(1, 33)), ctx.argmax_point(float(t0)))
            for t0, t1 in zip(cuts[:-1], cuts[1:]) if t1 > t0]
    total = total_length(piecewise_catching_up(ctx.S, segs))
    bound = sigma.total
    status = PASS if total <= bound + ctx.cfg.length_tol else FAIL
    return CheckResult("B.f", status, total, bound, ctx.cfg.length_tol, f"{len(segs)} segments with random step counts")


def _check_velocity(ctx: _Context) -> CheckResult:
    t0, t1 = ctx.hints.velocity_window or ctx.lemma_window
    seq = catching_up(ctx.S, t0, t1, ctx.cfg.velocity_steps, ctx.argmax_point(t0))
    stats = velocity_check(ctx.S, orbit_from_sequence(seq))
    status = PASS if stats.max_deviation <= ctx.cfg.velocity_tol else FAIL
    return CheckResult("L.velocity", status, stats.max_deviation, 0.0, ctx.cfg.velocity_tol,
                       f"window [{t0}, {t1}], {ctx.cfg.velocity_steps} steps, {stats.checked} nodes, "
                       f"{stats.skipped} contact switches skipped")


def _check_excess(ctx: _Context) -> CheckResult:
    lo, hi = ctx.lemma_window
    worst = -math.inf
    for _ in range(ctx.cfg.excess_windows):
        t0 = float(ctx.rng.uniform(lo, hi))
        t1 = min(hi, t0 + float(ctx.rng.uniform(0.01, 0.2)) * (hi - lo))
        if t1 <= t0:
            continue
        ex, _ = excess_estimate(ctx.S, t0, t1, m=32)
        tab = sample_talweg(ctx.S, t0, t1, nodes=33, m=ctx.cfg.m)
        worst = max(worst, ex - float(np.max(tab.phi_up)) * (t1 - t0))
    status = PASS if worst <= ctx.cfg.excess_tol else FAIL
    return CheckResult("L.excess", status, worst, 0.0, ctx.cfg.excess_tol, "measured = max(excess - max phi_up * dt)")


def _check_order(ctx: _Context) -> CheckResult:
    n = ctx.S.dim
    alpha = ctx.rng.standard_normal(ctx.cfg.order_rays)
    u = ctx.rng.standard_normal((ctx.cfg.order_rays, n))
    asym, sym = moduli_arrays(alpha, np.linalg.norm(u, axis=1))
    order_violation = float(np.max(asym - sym))
    eq_violation = 0.0
    lo, hi = ctx.lemma_window
    for t in np.linspace(lo, hi, 5):
        P = ctx.S.sample_boundary(float(t), 32)
        a_, s_ = boundary_moduli(ctx.S, float(t), P)
        act = np.isfinite(a_) & (a_ > 1e-9)
        if act.any():
            eq_violation = max(eq_violation, float(np.max(np.abs(a_[act] - s_[act]) / s_[act])))
    ok = order_violation <= 0.0 and eq_violation <= 1e-9
    return CheckResult("L.moduli-order", PASS if ok else FAIL, max(order_violation, eq_violation), 0.0, 1e-9,
                       f"{ctx.cfg.order_rays} random rays; equality on boundary samples where asym > 1e-9")


def _check_criterion(ctx: _Context) -> CheckResult:
    lo, hi = ctx.lemma_window
    steps = ctx.hints.calm_steps
    hi = min(hi, ctx.S.domain.t_max - max(steps))
    worst = 0.0
    used = 0
    for _ in range(ctx.cfg.criterion_points):
        t = float(ctx.rng.uniform(lo, hi))
        x = ctx.boundary_point(t)
        asym = float(boundary_moduli(ctx.S, t, x[None, :])[0][0])
        if not math.isfinite(asym):
            continue
        worst = max(worst, abs(oriented_calm_estimate(ctx.S, t, x, steps) - asym))
        used += 1
    status = PASS if worst <= ctx.cfg.criterion_tol else FAIL
    return CheckResult("L.criterion", status, worst, 0.0, ctx.cfg.criterion_tol,
                       f"{used} boundary points, step ladder {steps[0]:g} .. {steps[-1]:g}")


_CHECKS = {
    "A.d": _check_Ad, "A.a": _check_Aa, "A.b": _check_Ab, "A.c": _check_Ac, "B.e": _check_Be, "B.f": _check_Bf,
    "L.velocity": _check_velocity, "L.excess": _check_excess, "L.moduli-order": _check_order,
    "L.criterion": _check_criterion,
}
# execution order: integrability first, then the constructions that need it
_ORDER = ("A.d", "A.a", "A.b", "A.c", "B.e", "B.f", "L.velocity", "L.excess", "L.moduli-order", "L.criterion")


def run_suite(process: SweepingProcess | CatalogEntry, a: float | None = None, b: float | None = None,
              config: SuiteConfig | None = None) -> VerificationReport:
    cfg = config or SuiteConfig()
    if isinstance(process, CatalogEntry):
        hints = Hints.from_entry(process)
        a = process.window[0] if a is None else a
        b = process.window[1] if b is None else b
        S = process.build()
    else:
        S = process
        hints = Hints(name=S.name or "custom")
        if a is None or b is None:
            raise ValueError("a window [a, b] is required for processes outside the catalog")
    a, b = float(a), float(b)
    if not a < b:
        raise ValueError(f"empty window [{a}, {b}]")
    S.check_time(a)
    S.check_time(b)

    ctx = _Context(S, a, b, cfg, hints)
    ctx.table = sample_decided(S, a, b, cfg.nodes, cfg.m, per_level=hints.per_level)
    diagnostics = _diagnostics(ctx)
    try:
        ctx.integral = integrate_talweg(ctx.table, a, b)
    except CriticalValueError as exc:
        ctx.integral = None
        diagnostics["talweg"]["error"] = str(exc)
    else:
        diagnostics["talweg"].update(integral=ctx.integral.value, verdict=ctx.integral.verdict,
                                     tail_a=ctx.integral.tail_a, tail_b=ctx.integral.tail_b)

    selected = set(SUITES[cfg.suite])
    results = {}
    for cid in _ORDER:
        if cid not in selected:
            results[cid] = CheckResult(cid, NOT_APPLICABLE, detail=f"not in suite {cfg.suite}")
            continue
        if ctx.integral is None:
            results[cid] = CheckResult(cid, FAIL, detail="critical value inside window")
            continue
        try:
            results[cid] = _CHECKS[cid](ctx)
        except (ProcessError, OrbitError, FieldDomainError, ArithmeticError, ValueError) as exc:
            results[cid] = CheckResult(cid, FAIL, detail=f"{type(exc).__name__}: {exc}")

    provenance = {
        "config_hash": config_hash(cfg, S, (a, b)),
        "seed": cfg.seed,
        "config": asdict(cfg),
        "grid": {"talweg_nodes": len(ctx.table), "uniform_nodes": cfg.nodes, "boundary_samples": cfg.m,
                 "cluster_per_level": ctx.table.meta["per_level"]},
        "process_spec": S.to_dict(),
        "package_version": __version__,
    }
    return VerificationReport(hints.name, (a, b), [results[c] for c in CHECK_IDS], diagnostics, provenance)


def _diagnostics(ctx: _Context) -> dict:
    tab = ctx.table
    inner = tab.critical_flags[1:-1]
    fin = np.isfinite(tab.phi_up)
    a2 = {
        "finite_on_samples": bool(not inner.any()),
        "critical_endpoints": [float(t) for t, c in ((tab.grid[0], tab.critical_flags[0]),
                                                     (tab.grid[-1], tab.critical_flags[-1])) if c],
        "max_phi_up_sampled": float(np.max(tab.phi_up[fin])) if fin.any() else math.inf,
    }
    lo, hi = ctx.lemma_window
    try:
        rep = slice_continuity_diagnostic(ctx.S, lo, hi, grid=20, m=32)
        a3 = {"window": [lo, hi], "max_ratio": rep.max_ratio, "flags": rep.flags, "continuous": rep.continuous}
    except (ProcessError, FieldDomainError, ArithmeticError) as exc:
        a3 = {"window": [lo, hi], "error": str(exc)}
    return {"A2": a2, "A3": a3, "talweg": {"nodes": len(tab)}}
