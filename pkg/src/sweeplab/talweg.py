"""Oriented talweg: per-slice supremum of the asymmetric modulus, its
sampling over a time window, integration and divergence verdicts."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .coderivative import moduli_arrays
from .field_expr import FieldDomainError
from .process import (
    TAU_BND,
    IntervalProcess,
    MovingBallProcess,
    SweepingProcess,
    TwoIntervalsProcess,
    _LevelSetProcess,
)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
CLUSTER_LEVELS = 20
CLUSTER_RATIO = 0.5
VERDICT_WINDOWS = 7

CONVERGENT = "convergent"
DIVERGENT_A = "divergent-at-a"
DIVERGENT_B = "divergent-at-b"
INCONCLUSIVE = "inconclusive"


class CriticalValueError(ValueError):
    pass


@dataclass(frozen=True)
class TalwegPoint:
    t: float
    phi_up: float
    phi_sym: float
    point: np.ndarray
    critical: bool


@dataclass
class TalwegTable:
    grid: np.ndarray
    phi_up: np.ndarray
    phi_sym: np.ndarray
    argmax_points: np.ndarray
    critical_flags: np.ndarray
    base_spacing: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        n = len(self.grid)
        if n < 2 or np.any(np.diff(self.grid) <= 0):
            raise ValueError("talweg grid must be strictly increasing with at least 2 nodes")
        for name in ("phi_up", "phi_sym", "critical_flags"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} length does not match the grid")

    def __len__(self) -> int:
        return len(self.grid)

    def with_phi_up(self, values: np.ndarray) -> "TalwegTable":
        return TalwegTable(self.grid.copy(), np.asarray(values, dtype=float), self.phi_sym.copy(),
                           self.argmax_points.copy(), self.critical_flags.copy(), self.base_spacing, dict(self.meta))


# ---------------------------------------------------------------------------
# pointwise talweg


def boundary_moduli(S: SweepingProcess, t: float, P: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ``(asym, sym)`` at boundary points ``P`` of ``S(t)``."""
    if isinstance(S, _LevelSetProcess):
        G, D, _ = S.g_jets(t, P)
        alpha, unorm = D[0], np.linalg.norm(D[1:], axis=0)
        asym, sym = moduli_arrays(alpha, unorm)
        interior = G < -TAU_BND
        return np.where(interior, 0.0, asym), np.where(interior, 0.0, sym)
    if isinstance(S, MovingBallProcess):
        c, cdot, R, Rdot = S.state(t)
        r = P - c
        dist = np.linalg.norm(r, axis=1)
        n = r / np.where(dist > 0, dist, 1.0)[:, None]
        alpha = -(n @ cdot) - Rdot
        asym, sym = moduli_arrays(alpha, np.ones_like(alpha))
        interior = dist - R < -TAU_BND
        return np.where(interior, 0.0, asym), np.where(interior, 0.0, sym)
    out = []
    for p in P:
        ray = S.boundary_normal(t, p)
        if ray.zero:
            out.append((0.0, 0.0))
        else:
            a, s = moduli_arrays(ray.alpha, np.linalg.norm(ray.u))
            out.append((float(a), float(s)))
    arr = np.array(out, dtype=float).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


def _golden_max(fun: Callable[[float], float], lo: float, hi: float, tol: float = 1e-5) -> tuple[float, float]:
    c = hi - GOLDEN * (hi - lo)
    d = lo + GOLDEN * (hi - lo)
    fc, fd = fun(c), fun(d)
    while hi - lo > tol:
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = hi - GOLDEN * (hi - lo)
            fc = fun(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + GOLDEN * (hi - lo)
            fd = fun(d)
    return (c, fc) if fc >= fd else (d, fd)


def _sphere_ascent(fun: Callable[[np.ndarray], float], d0: np.ndarray, step: float, tol: float = 1e-6):
    """Pattern search over unit directions, used for boundaries of dimension >= 2."""
    d, best = d0 / np.linalg.norm(d0), fun(d0)
    n = len(d0)
    while step > tol:
        improved = False
        for j in range(n):
            for sgn in (1.0, -1.0):
                e = d.copy()
                e[j] += sgn * step
                e /= np.linalg.norm(e)
                v = fun(e)
                if v > best:
                    d, best, improved = e, v, True
        if not improved:
            step *= 0.5
    return d, best


def _ascend(S: SweepingProcess, t: float, P: np.ndarray, vals: np.ndarray, which: int, m: int):
    """Local refinement of the best sampled boundary points for modulus
    component ``which`` (0 asym, 1 sym); returns (value, point)."""
    best_i = int(np.argmax(vals))
    best_v, best_p = float(vals[best_i]), P[best_i]
    top = np.argsort(-vals, kind="stable")[:3]
    if S.dim == 2:
        curve = S.boundary_curve(t)
        if curve is None:
            return best_v, best_p
        h = 2.0 * math.pi / m
        for i in top:
            th0 = math.atan2(*(P[i] - _curve_center(S, t))[::-1])

            def obj(th):
                q = curve(th)
                return float(boundary_moduli(S, t, q[None, :])[which][0])

            th, v = _golden_max(obj, th0 - h, th0 + h)
            if v > best_v:
                best_v, best_p = v, curve(th)
    elif S.dim >= 3:
        center = _curve_center(S, t)
        for i in top:
            if isinstance(S, MovingBallProcess):
                c, _, R, _ = S.state(t)
                to_point = lambda d: c + R * d  # noqa: E731
            else:
                to_point = lambda d: S.ray_hits(t, center, d[None, :])[0]  # noqa: E731

            def obj(d):
                return float(boundary_moduli(S, t, to_point(d)[None, :])[which][0])

            d, v = _sphere_ascent(obj, P[i] - center, step=0.5 / math.sqrt(m))
            if v > best_v:
                best_v, best_p = v, to_point(d)
    return best_v, best_p


def _curve_center(S: SweepingProcess, t: float) -> np.ndarray:
    if isinstance(S, MovingBallProcess):
        return S.state(t)[0]
    return S.anchor(t)[0]


def talweg_at(S: SweepingProcess, t: float, m: int = 64) -> TalwegPoint:
    """``(phi_up(t), phi(t))`` by boundary sampling plus local ascent."""
    if m < 8:
        raise ValueError("talweg sampling needs m >= 8")
    t = S.check_time(t)
    try:
        P = S.sample_boundary(t, m)
        asym, sym = boundary_moduli(S, t, P)
    except FieldDomainError:
        return TalwegPoint(t, math.inf, math.inf, np.full(S.dim, np.nan), True)
    if len(P) == 0:
        return TalwegPoint(t, 0.0, 0.0, np.full(S.dim, np.nan), False)
    if np.any(np.isinf(asym)) or np.any(np.isinf(sym)):
        i = int(np.argmax(np.isinf(asym))) if np.any(np.isinf(asym)) else int(np.argmax(np.isinf(sym)))
        return TalwegPoint(t, float(asym.max()), math.inf, P[i].copy(), True)
    # argmax of asym, ties broken by larger sym then sample order
    order = np.lexsort((np.arange(len(P)), -sym, -asym))
    up, up_p = float(asym[order[0]]), P[order[0]]
    sy = float(sym.max())
    if S.dim >= 2:
        if asym.max() - asym.min() > 1e-12 * (1.0 + asym.max()):
            up, up_p = _ascend(S, t, P, asym, 0, m)
        if sym.max() - sym.min() > 1e-12 * (1.0 + sym.max()):
            sy, _ = _ascend(S, t, P, sym, 1, m)
    sy = max(sy, float(boundary_moduli(S, t, np.asarray(up_p)[None, :])[1][0]), up)
    return TalwegPoint(t, up, sy, np.asarray(up_p, dtype=float).copy(), False)


def _talweg_many_1d(S: SweepingProcess, times: np.ndarray):
    """Closed-form talweg for interval kinds, vectorized over ``times``."""
    if isinstance(S, IntervalProcess):
        l, dl, h, dh = S.endpoints(times)
        ends = [(l, np.maximum(dl, 0.0), np.abs(dl)), (h, np.maximum(-dh, 0.0), np.abs(dh))]
        valid = [np.ones(times.shape, bool)] * 2
    else:
        (a1, da1), (b1, db1), (a2, da2), (b2, db2) = S.endpoint_jets(times)
        merged = b1 >= a2
        ends = [(a1, np.maximum(da1, 0.0), np.abs(da1)), (b1, np.maximum(-db1, 0.0), np.abs(db1)),
                (a2, np.maximum(da2, 0.0), np.abs(da2)), (b2, np.maximum(-db2, 0.0), np.abs(db2))]
        valid = [np.ones(times.shape, bool), ~merged, ~merged, np.ones(times.shape, bool)]
    pos = np.stack([e[0] for e in ends])
    up = np.stack([np.where(v, e[1], -1.0) for e, v in zip(ends, valid)])
    sy = np.stack([np.where(v, e[2], -1.0) for e, v in zip(ends, valid)])
    # argmax of asym, ties by larger sym, then endpoint order
    cols = np.arange(len(times))
    best = up.max(axis=0)
    k = np.argmax(np.where(up == best[None, :], sy, -np.inf), axis=0)
    return up[k, cols], sy.max(axis=0), pos[k, cols][:, None]


def talweg_many(S: SweepingProcess, times, m: int = 64):
    """Talweg at several times: ``(phi_up, phi_sym, points, critical)``."""
    times = np.asarray(times, dtype=float)
    if len(times):
        S.check_time(float(times.min()))
        S.check_time(float(times.max()))
    if isinstance(S, (IntervalProcess, TwoIntervalsProcess)) and len(times):
        try:
            with np.errstate(all="ignore"):
                up, sy, pts = _talweg_many_1d(S, times)
            if np.all(np.isfinite(up)) and np.all(np.isfinite(sy)):
                return up, sy, pts, np.zeros(len(times), dtype=bool)
        except FieldDomainError:
            pass
    res = [talweg_at(S, float(t), m) for t in times]
    return (np.array([r.phi_up for r in res], dtype=float), np.array([r.phi_sym for r in res], dtype=float),
            np.array([r.point for r in res], dtype=float).reshape(len(times), S.dim),
            np.array([r.critical for r in res], dtype=bool))


# ---------------------------------------------------------------------------
# tables


def _cluster_nodes(end: float, inward: float, base: float, per_level: int) -> np.ndarray:
    """Geometric nodes ``end + inward * s`` with ``s`` in ``(0, base)``:
    ``CLUSTER_LEVELS`` halvings, each split log-uniformly into ``per_level``."""
    j = np.arange(1, CLUSTER_LEVELS * per_level + 1)
    s = base * CLUSTER_RATIO ** (j / per_level)
    return end + inward * s


def sample_talweg(S: SweepingProcess, a: float, b: float, nodes: int = 65, m: int = 64,
                  per_level: int = 16, refine: bool = True) -> TalwegTable:
    """Talweg table on a uniform grid, clustered geometrically toward any
    critical endpoint, with one adaptive bisection pass."""
    if nodes < 2:
        raise ValueError("need at least 2 nodes")
    if not a < b:
        raise ValueError(f"empty window [{a}, {b}]")
    S.check_time(a)
    S.check_time(b)
    grid = np.linspace(a, b, nodes)
    up, sy, pts, crit = talweg_many(S, grid, m)
    base = 0.5 * (b - a)
    extra = []
    if crit[0]:
        extra.append(_cluster_nodes(a, 1.0, base, per_level))
    if crit[-1]:
        extra.append(_cluster_nodes(b, -1.0, base, per_level))
    if extra:
        new = np.concatenate(extra)
        grid, up, sy, pts, crit = _merge(S, m, grid, up, sy, pts, crit, new)
    if refine:
        cap = 4 * nodes + sum(len(e) for e in extra)
        lo, hi = up[:-1], up[1:]
        fin = np.isfinite(lo) & np.isfinite(hi)
        jump = np.where(fin, np.abs(hi - lo), 0.0)
        idx = np.flatnonzero(jump > 0.25 * (1.0 + np.minimum(lo, hi)))
        room = max(0, cap - len(grid))
        if room and len(idx):
            idx = idx[np.argsort(-jump[idx], kind="stable")[:room]]
            mids = 0.5 * (grid[idx] + grid[idx + 1])
            grid, up, sy, pts, crit = _merge(S, m, grid, up, sy, pts, crit, mids)
    return TalwegTable(grid, up, np.maximum(sy, up), pts, crit, base_spacing=base,
                       meta={"nodes": nodes, "m": m, "per_level": per_level})


def _merge(S, m, grid, up, sy, pts, crit, new):
    new = np.setdiff1d(new, grid)
    u2, s2, p2, c2 = talweg_many(S, new, m)
    g = np.concatenate([grid, new])
    order = np.argsort(g, kind="stable")
    return (g[order], np.concatenate([up, u2])[order], np.concatenate([sy, s2])[order],
            np.concatenate([pts, p2])[order], np.concatenate([crit, c2])[order])


# ---------------------------------------------------------------------------
# integration


@dataclass(frozen=True)
class TalwegIntegral:
    value: float
    verdict: str
    finite_part: float
    tail_a: float
    tail_b: float
    window_ratio: dict

    def __iter__(self):
        yield self.value
        yield self.verdict


def _restrict(table: TalwegTable, a: float, b: float, values: np.ndarray | None = None):
    g = table.grid
    v = table.phi_up if values is None else values
    tol = 1e-12 * (1.0 + abs(a) + abs(b))
    if a < g[0] - tol or b > g[-1] + tol:
        raise ValueError(f"table covers [{g[0]}, {g[-1]}], not [{a}, {b}]")
    keep = (g >= a - tol) & (g <= b + tol)
    return g[keep], v[keep], table.critical_flags[keep]


def _tail(s: np.ndarray, v: np.ndarray) -> float:
    """Integral over ``(0, s[0])`` of a power law ``C s^-p`` fitted to the
    nearest nodes (``s`` increasing distances from a critical endpoint)."""
    k = min(len(s), 6)
    ss, vv = s[:k], v[:k]
    if np.any(vv <= 0) or k < 2:
        return float(vv[0] * ss[0]) if k else 0.0
    p = -np.polyfit(np.log(ss), np.log(vv), 1)[0]
    if p >= 1.0:
        return math.inf
    if p <= 0.0:
        return float(vv[0] * ss[0])
    return float(vv[0] * ss[0] / (1.0 - p))


def _window_partials(g: np.ndarray, v: np.ndarray, end: float, inward: float, base: float) -> np.ndarray:
    """Trapezoid partial integrals of the piecewise-linear interpolant over
    ``[end + inward*base*2^-j, end + inward*base*2^(1-j)]``, j = 1..7."""
    out = []
    fin = np.isfinite(v)
    gf, vf = g[fin], v[fin]
    for j in range(1, VERDICT_WINDOWS + 1):
        s0, s1 = base * 2.0 ** -j, base * 2.0 ** (1 - j)
        lo, hi = sorted((end + inward * s0, end + inward * s1))
        inside = (gf > lo) & (gf < hi)
        xs = np.concatenate([[lo], gf[inside], [hi]])
        ys = np.interp(xs, gf, vf)
        out.append(float(np.trapezoid(ys, xs)))
    return np.array(out)


def _endpoint_verdict(partials: np.ndarray) -> tuple[str, float]:
    if np.all(partials <= 0):
        return CONVERGENT, 0.0
    if partials[-1] <= 0:
        return CONVERGENT, 0.0
    if np.any(partials <= 0):
        return INCONCLUSIVE, math.nan
    j = np.arange(1, len(partials) + 1)
    slope = np.polyfit(j, np.log(partials), 1)[0]
    ratio = float(math.exp(slope))
    if ratio <= 0.9:
        return CONVERGENT, ratio
    if ratio >= 0.95:
        return "divergent", ratio
    return INCONCLUSIVE, ratio


def integrate_talweg(table: TalwegTable, a: float, b: float, values: np.ndarray | None = None) -> TalwegIntegral:
    """Trapezoid integral of the talweg over ``[a, b]`` with a divergence verdict.

    Critical values are allowed only at the endpoints; an integrable
    endpoint singularity is closed with a fitted power-law tail.
    """
    g, v, crit = _restrict(table, a, b, values)
    if np.any(crit[1:-1]) or np.any(np.isinf(v[1:-1])):
        bad = g[1:-1][crit[1:-1] | np.isinf(v[1:-1])][0]
        raise CriticalValueError(f"critical value inside window at t={bad:.17g}")
    base = min(table.base_spacing or (b - a) / 2.0, (b - a) / 2.0)
    fin = np.isfinite(v)
    finite_part = float(np.trapezoid(v[fin], g[fin]))
    tail_a = tail_b = 0.0
    verdict, ratios = CONVERGENT, {}
    if not fin[0]:
        s, vv = g[fin] - g[0], v[fin]
        tail_a = _tail(s, vv)
        ver, ratios["a"] = _endpoint_verdict(_window_partials(g, v, g[0], 1.0, base))
        if ver == "divergent" or math.isinf(tail_a):
            verdict = DIVERGENT_A
        elif ver == INCONCLUSIVE:
            verdict = INCONCLUSIVE
    if not fin[-1] and verdict == CONVERGENT:
        s, vv = (g[-1] - g[fin])[::-1], v[fin][::-1]
        tail_b = _tail(s, vv)
        ver, ratios["b"] = _endpoint_verdict(_window_partials(g, v, g[-1], -1.0, base))
        if ver == "divergent" or math.isinf(tail_b):
            verdict = DIVERGENT_B
        elif ver == INCONCLUSIVE:
            verdict = INCONCLUSIVE
    value = math.inf if verdict.startswith("divergent") else finite_part + tail_a + tail_b
    return TalwegIntegral(value, verdict, finite_part, tail_a, tail_b, ratios)


def cumulative_talweg(table: TalwegTable, a: float, b: float, values: np.ndarray | None = None):
    """Nodes and ``int_a^t`` of the talweg (tail at ``a`` included) at each node."""
    res = integrate_talweg(table, a, b, values)
    if res.verdict != CONVERGENT:
        raise CriticalValueError(f"talweg not integrable on [{a}, {b}] (verdict {res.verdict})")
    g, v, _ = _restrict(table, a, b, values)
    fin = np.isfinite(v)
    gv, vv = g[fin], v[fin]
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (vv[1:] + vv[:-1]) * np.diff(gv))]) + res.tail_a
    if not fin[0]:
        gv, cum = np.concatenate([[g[0]], gv]), np.concatenate([[0.0], cum])
    if not fin[-1]:
        gv, cum = np.concatenate([gv, [g[-1]]]), np.concatenate([cum, [cum[-1] + res.tail_b]])
    return gv, cum


MAX_PER_LEVEL = 1024


def sample_decided(S: SweepingProcess, a: float, b: float, nodes: int = 65, m: int = 64,
                   per_level: int = 16, max_per_level: int = MAX_PER_LEVEL) -> TalwegTable:
    """``sample_talweg`` with endpoint clustering densified 4x at a time while
    a critical endpoint leaves the integrability verdict inconclusive."""
    while True:
        table = sample_talweg(S, a, b, nodes, m, per_level=per_level)
        if not (table.critical_flags[0] or table.critical_flags[-1]) or per_level >= max_per_level:
            return table
        try:
            verdict = integrate_talweg(table, a, b).verdict
        except CriticalValueError:
            return table
        if verdict != INCONCLUSIVE:
            return table
        per_level = min(4 * per_level, max_per_level)
