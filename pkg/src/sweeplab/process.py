"""Smooth sweeping processes ``S: R => R^n`` with bounded slices.

Every kind is described by a defining field ``g(t, x)`` with
``S(t) = {x : g(t, x) <= 0}``; the outer normal of the graph at a boundary
point is generated by ``(dg/dt, grad_x g)`` of the active piece.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from .field_expr import FieldDomainError, FieldExpr, parse_field

TAU_MEM = 1e-10  # membership tolerance on the defining field
TAU_BND = 1e-8  # interior-vs-boundary threshold on the defining field
ESCAPE_RADIUS = 1e6
MAX_PROJ_ITER = 200

KINDS = ("sublevel", "implicit", "moving_ball", "interval", "two_intervals")


class ProcessError(ValueError):
    pass


class OutsideDomainError(ProcessError):
    pass


class EmptySliceError(ProcessError):
    pass


class UnboundedSliceError(ProcessError):
    pass


class ManifoldError(ProcessError):
    """The graph fails to be a smooth manifold at the queried point."""


class AmbiguousPieceError(ManifoldError):
    pass


class ProjectionError(ProcessError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class ProcessDomain:
    t_min: float = -math.inf
    t_max: float = math.inf

    def __post_init__(self):
        if not self.t_min < self.t_max:
            raise ProcessError(f"empty domain [{self.t_min}, {self.t_max}]")

    def __contains__(self, t: float) -> bool:
        return self.t_min <= t <= self.t_max

    def check_window(self) -> tuple[float, float]:
        """A finite window used for construction-time spot checks."""
        lo, hi = self.t_min, self.t_max
        if math.isinf(lo) and math.isinf(hi):
            return -1.0, 1.0
        if math.isinf(lo):
            return hi - 1.0, hi
        if math.isinf(hi):
            return lo, lo + 1.0
        return lo, hi


@dataclass(frozen=True, eq=False)
class NormalRay:
    """Unit generator ``(alpha, u)`` of the normal cone of the graph, or the
    zero marker for interior points."""

    alpha: float
    u: np.ndarray
    degenerate: bool = False
    zero: bool = False

    @classmethod
    def zero_marker(cls, dim: int) -> "NormalRay":
        return cls(0.0, np.zeros(dim), degenerate=False, zero=True)

    @classmethod
    def from_generator(cls, alpha: float, u) -> "NormalRay":
        u = np.asarray(u, dtype=float).reshape(-1)
        norm = math.hypot(alpha, float(np.linalg.norm(u)))
        if norm == 0.0 or not math.isfinite(norm):
            raise ManifoldError("vanishing normal generator (graph is not a manifold here)")
        return cls(float(alpha) / norm, u / norm, degenerate=not np.any(u))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([[self.alpha], self.u])


def _sphere_directions(dim: int, m: int) -> np.ndarray:
    if dim == 1:
        return np.array([[-1.0], [1.0]])
    if dim == 2:
        ang = 2.0 * np.pi * np.arange(m) / m
        return np.column_stack([np.cos(ang), np.sin(ang)])
    pts = np.random.default_rng(0).standard_normal((m, dim))
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def _path_jets(expr: FieldExpr, t, dim: int):
    """Value and d/dt of a formula in ``t`` only (vectorized over ``t``)."""
    t = np.asarray(t, dtype=float)
    v, d, _ = expr.jet_arrays(t, np.zeros(t.shape + (dim,)))
    return np.asarray(v, dtype=float), np.asarray(d[0], dtype=float)


def _lexmin(points: list[np.ndarray]) -> np.ndarray:
    return min(points, key=lambda p: tuple(p.tolist()))


class SweepingProcess:
    """Base class; concrete kinds implement the field and geometry hooks."""

    kind = "abstract"

    def __init__(self, dim: int, domain: ProcessDomain, smooth_certificate: bool = True, name: str | None = None):
        if int(dim) != dim or dim < 1:
            raise ProcessError(f"dim must be a positive integer, got {dim!r}")
        self.dim = int(dim)
        self.domain = domain
        self.smooth_certificate = bool(smooth_certificate)
        self.name = name

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"<{type(self).__name__}{label} dim={self.dim} domain=[{self.domain.t_min}, {self.domain.t_max}]>"

    # -- hooks ---------------------------------------------------------------
    def field(self, t: float, X) -> np.ndarray:
        """Defining field values at points ``X`` (trailing axis ``dim``)."""
        raise NotImplementedError

    def active_jet(self, t: float, x: np.ndarray) -> tuple[float, float, np.ndarray]:
        """``(g, dg/dt, grad_x g)`` of the active piece at one point."""
        raise NotImplementedError

    def _project(self, t: float, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _sample_boundary(self, t: float, m: int) -> np.ndarray:
        raise NotImplementedError

    def boundary_curve(self, t: float) -> Callable[[float], np.ndarray] | None:
        """Angle parametrization of the boundary for planar kinds, else None."""
        return None

    def interior_samples(self, t: float, m: int) -> np.ndarray:
        return np.zeros((0, self.dim))

    def to_dict(self) -> dict:
        raise NotImplementedError

    # -- public operations ---------------------------------------------------
    def check_time(self, t: float) -> float:
        t = float(t)
        if t not in self.domain:
            raise OutsideDomainError(f"t={t!r} outside domain [{self.domain.t_min}, {self.domain.t_max}]")
        return t

    def _point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape != (self.dim,):
            raise ProcessError(f"expected a point in R^{self.dim}, got {x.shape[0]} coordinates")
        return x

    def contains(self, t: float, x) -> bool:
        t = self.check_time(t)
        return bool(self.field(t, self._point(x)) <= TAU_MEM)

    def project(self, t: float, x) -> np.ndarray:
        t = self.check_time(t)
        return self._project(t, self._point(x))

    def boundary_normal(self, t: float, x) -> NormalRay:
        t = self.check_time(t)
        x = self._point(x)
        g, gt, gx = self.active_jet(t, x)
        if g > TAU_MEM:
            raise ProcessError(f"point {x.tolist()} is not in S({t})")
        if g < -TAU_BND:
            return NormalRay.zero_marker(self.dim)
        return NormalRay.from_generator(gt, gx)

    def sample_boundary(self, t: float, m: int) -> np.ndarray:
        t = self.check_time(t)
        if m < 2:
            raise ProcessError("need at least 2 boundary samples")
        return self._sample_boundary(t, int(m))

    def sample_slice(self, t: float, m: int) -> np.ndarray:
        """Boundary samples plus interior samples of ``S(t)``."""
        t = self.check_time(t)
        pts = [self._sample_boundary(t, int(m)), self.interior_samples(t, int(m))]
        return np.vstack([p for p in pts if len(p)])

    # -- construction checks -------------------------------------------------
    def validate(self, grid: int = 9) -> None:
        if hasattr(self, "convex"):
            self.convex = True
        lo, hi = self.domain.check_window()
        checked = 0
        for t in np.linspace(lo, hi, grid):
            try:
                self._validate_slice(float(t))
            except FieldDomainError:
                continue  # formula undefined at an isolated critical time
            checked += 1
        if checked < grid // 2:
            raise ProcessError("defining formulas fail to evaluate on most of the domain")

    def _validate_slice(self, t: float) -> None:
        pts = self._sample_boundary(t, 8)
        if len(pts) == 0:
            raise EmptySliceError(f"S({t}) is empty")
        if np.any(np.abs(pts) > ESCAPE_RADIUS):
            raise UnboundedSliceError(f"S({t}) escapes radius {ESCAPE_RADIUS:g}")
        for p in pts:
            _, gt, gx = self.active_jet(t, p)
            if gt == 0.0 and not np.any(gx):
                raise ManifoldError(f"vanishing graph normal at t={t}, x={p.tolist()}")


# ---------------------------------------------------------------------------
# Closed-form kinds


class MovingBallProcess(SweepingProcess):
    """``S(t) = closed ball(c(t), R(t))`` with ``R > 0``."""

    kind = "moving_ball"

    def __init__(self, center: Sequence[FieldExpr], radius: FieldExpr, domain: ProcessDomain, *,
                 smooth_certificate: bool = True, name: str | None = None, check: bool = True):
        super().__init__(len(center), domain, smooth_certificate, name)
        for e in list(center) + [radius]:
            if e.depends_on_x:
                raise ProcessError(f"path formula {e} must depend on t only")
        self.center = tuple(center)
        self.radius = radius
        if check:
            self.validate()

    def state(self, t) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Center, center velocity, radius and radius rate (vectorized in t)."""
        cs = [_path_jets(e, t, self.dim) for e in self.center]
        c = np.stack([v for v, _ in cs], axis=-1)
        cdot = np.stack([d for _, d in cs], axis=-1)
        R, Rdot = _path_jets(self.radius, t, self.dim)
        return c, cdot, R, Rdot

    def field(self, t, X):
        c, _, R, _ = self.state(t)
        return np.linalg.norm(np.asarray(X, dtype=float) - c, axis=-1) - R

    def active_jet(self, t, x):
        c, cdot, R, Rdot = self.state(t)
        r = x - c
        dist = float(np.linalg.norm(r))
        if dist == 0.0:
            return -float(R), 0.0, np.zeros(self.dim)
        n = r / dist
        return dist - float(R), float(-cdot @ n - Rdot), n

    def _project(self, t, x):
        c, _, R, _ = self.state(t)
        r = x - c
        dist = float(np.linalg.norm(r))
        if dist - R <= TAU_MEM:
            return x.copy()
        return c + (R / dist) * r

    def _sample_boundary(self, t, m):
        c, _, R, _ = self.state(t)
        return c + R * _sphere_directions(self.dim, m)

    def interior_samples(self, t, m):
        c, _, R, _ = self.state(t)
        dirs = _sphere_directions(self.dim, max(2, m // 2))
        return np.vstack([c, c + 0.5 * R * dirs])

    def boundary_curve(self, t):
        if self.dim != 2:
            return None
        c, _, R, _ = self.state(t)
        return lambda th: c + R * np.array([math.cos(th), math.sin(th)])

    def _validate_slice(self, t):
        _, _, R, _ = self.state(t)
        if not R > 0:
            raise ProcessError(f"radius must stay positive (R({t}) = {float(R)})")

    def to_dict(self):
        return {"kind": self.kind, "dim": self.dim, "domain": _domain_json(self.domain),
                "center": [str(e) for e in self.center], "radius": str(self.radius)}


class IntervalProcess(SweepingProcess):
    """``S(t) = [l(t), h(t)]`` in R."""

    kind = "interval"

    def __init__(self, lower: FieldExpr, upper: FieldExpr, domain: ProcessDomain, *,
                 smooth_certificate: bool = True, name: str | None = None, check: bool = True):
        super().__init__(1, domain, smooth_certificate, name)
        for e in (lower, upper):
            if e.depends_on_x:
                raise ProcessError(f"endpoint formula {e} must depend on t only")
        self.lower, self.upper = lower, upper
        if check:
            self.validate()

    def endpoints(self, t):
        """``(l, l', h, h')`` vectorized in t."""
        l, dl = _path_jets(self.lower, t, 1)
        h, dh = _path_jets(self.upper, t, 1)
        return l, dl, h, dh

    def field(self, t, X):
        l, h = _path_jets(self.lower, t, 1)[0], _path_jets(self.upper, t, 1)[0]
        x = np.asarray(X, dtype=float)[..., 0]
        return np.maximum(l - x, x - h)

    def active_jet(self, t, x):
        l, dl, h, dh = (float(v) for v in self.endpoints(t))
        gl, gh = l - x[0], x[0] - h
        if abs(gl) <= TAU_BND and abs(gh) <= TAU_BND:
            raise AmbiguousPieceError(f"both endpoints active at t={t} (degenerate slice)")
        if gh >= gl:
            return gh, -dh, np.array([1.0])
        return gl, dl, np.array([-1.0])

    def _project(self, t, x):
        l, _, h, _ = self.endpoints(t)
        return np.array([min(max(x[0], float(l)), float(h))])

    def _sample_boundary(self, t, m):
        l, _, h, _ = self.endpoints(t)
        return np.array([[float(l)], [float(h)]])

    def interior_samples(self, t, m):
        l, _, h, _ = self.endpoints(t)
        return np.linspace(float(l), float(h), max(3, m))[1:-1, None]

    def _validate_slice(self, t):
        l, _, h, _ = self.endpoints(t)
        if not l < h:
            raise ProcessError(f"interval endpoints must satisfy l < h (t={t}: l={float(l)}, h={float(h)})")

    def to_dict(self):
        return {"kind": self.kind, "dim": 1, "domain": _domain_json(self.domain),
                "lower": str(self.lower), "upper": str(self.upper)}


class TwoIntervalsProcess(SweepingProcess):
    """``S(t) = [a1, b1] U [a2, b2]`` in R, disjoint on the admissible domain."""

    kind = "two_intervals"

    def __init__(self, a1: FieldExpr, b1: FieldExpr, a2: FieldExpr, b2: FieldExpr, domain: ProcessDomain, *,
                 smooth_certificate: bool = True, name: str | None = None, check: bool = True):
        super().__init__(1, domain, smooth_certificate, name)
        for e in (a1, b1, a2, b2):
            if e.depends_on_x:
                raise ProcessError(f"endpoint formula {e} must depend on t only")
        self.ends = (a1, b1, a2, b2)
        if check:
            self.validate()

    def endpoint_jets(self, t):
        return [_path_jets(e, t, 1) for e in self.ends]

    def pieces(self, t: float) -> list[tuple[tuple[float, float], tuple[float, float]]]:
        """Connected components as ((lo, lo'), (hi, hi')), merged when they touch."""
        (a1, da1), (b1, db1), (a2, da2), (b2, db2) = [(float(v), float(d)) for v, d in self.endpoint_jets(t)]
        parts = sorted([((a1, da1), (b1, db1)), ((a2, da2), (b2, db2))])
        (lo1, hi1), (lo2, hi2) = parts
        if hi1[0] >= lo2[0]:
            return [(lo1, max(hi1, hi2))]
        return [(lo1, hi1), (lo2, hi2)]

    def field(self, t, X):
        (a1, _), (b1, _), (a2, _), (b2, _) = self.endpoint_jets(t)
        x = np.asarray(X, dtype=float)[..., 0]
        return np.minimum(np.maximum(a1 - x, x - b1), np.maximum(a2 - x, x - b2))

    def active_jet(self, t, x):
        xv = x[0]
        (_, _), (b1, _), (a2, _), (_, _) = self.endpoint_jets(t)
        if abs(float(b1) - xv) <= TAU_BND and abs(float(a2) - xv) <= TAU_BND:
            raise AmbiguousPieceError(f"ambiguous active piece at t={t}, x={xv} (merge event)")
        cands = []
        for (lo, dlo), (hi, dhi) in self.pieces(t):
            cands.append((lo - xv, dlo, -1.0))
            cands.append((xv - hi, -dhi, 1.0))
        g = float(self.field(t, x))
        near = [c for c in cands if abs(c[0] - g) <= TAU_BND and c[0] >= -TAU_BND]
        if g < -TAU_BND or not near:
            return g, 0.0, np.zeros(1)
        if len(near) > 1:
            raise AmbiguousPieceError(f"ambiguous active piece at t={t}, x={xv} (merge event)")
        gv, gt, s = near[0]
        return gv, gt, np.array([s])

    def _project(self, t, x):
        xv = x[0]
        best = []
        for (lo, _), (hi, _) in self.pieces(t):
            y = min(max(xv, lo), hi)
            best.append((abs(xv - y), y))
        dmin = min(d for d, _ in best)
        tol = 1e-9 * (1.0 + abs(xv))
        return np.array([min(y for d, y in best if d <= dmin + tol)])

    def _sample_boundary(self, t, m):
        pts = []
        for (lo, _), (hi, _) in self.pieces(t):
            pts += [lo, hi]
        return np.array(pts)[:, None]

    def interior_samples(self, t, m):
        out = []
        for (lo, _), (hi, _) in self.pieces(t):
            out.append(np.linspace(lo, hi, max(3, m // 2))[1:-1])
        return np.concatenate(out)[:, None]

    def _validate_slice(self, t):
        (a1, _), (b1, _), (a2, _), (b2, _) = [(float(v), d) for v, d in self.endpoint_jets(t)]
        if not (a1 < b1 and a2 < b2):
            raise ProcessError(f"each piece needs lo < hi (t={t})")
        if not b1 < a2:
            raise ProcessError(f"pieces merge at t={t} (b1={b1} >= a2={a2}); merge events are excluded")

    def to_dict(self):
        a1, b1, a2, b2 = (str(e) for e in self.ends)
        return {"kind": self.kind, "dim": 1, "domain": _domain_json(self.domain),
                "a1": a1, "b1": b1, "a2": a2, "b2": b2}


# ---------------------------------------------------------------------------
# Level-set kinds (numerical geometry)


class _LevelSetProcess(SweepingProcess):
    def __init__(self, dim, domain, smooth_certificate, name, anchor_hint):
        super().__init__(dim, domain, smooth_certificate, name)
        self.anchor_hint = np.zeros(dim) if anchor_hint is None else np.asarray(anchor_hint, dtype=float)
        self._anchor = lru_cache(maxsize=4096)(self._compute_anchor)
        # set by validate() when the field is convex in x on every sampled slice
        self.convex = False

    # subclasses provide value/jet of g
    def g_jets(self, t, X):
        raise NotImplementedError

    def active_jet(self, t, x):
        v, d, _ = self.g_jets(t, x)
        return float(v), float(d[0]), np.array(d[1:], dtype=float)

    def _minimize_g(self, t: float, x0: np.ndarray) -> tuple[np.ndarray, float]:
        def fun(y):
            v, d, _ = self.g_jets(t, y)
            return float(v), np.array(d[1:], dtype=float)

        try:
            res = minimize(fun, x0, jac=True, method="BFGS", options={"gtol": 1e-12, "maxiter": 500})
            y = np.asarray(res.x, dtype=float)
        except FieldDomainError:
            y = x0
        return y, float(self.field(t, y))

    def _compute_anchor(self, t: float) -> tuple[np.ndarray, float]:
        y, gv = self._minimize_g(t, self.anchor_hint)
        if gv > TAU_MEM:
            raise EmptySliceError(f"S({t}) appears empty (min of defining field {gv:.3e} > 0)")
        return y, gv

    def anchor(self, t: float) -> tuple[np.ndarray, float]:
        """Deepest point of ``S(t)`` and its field value (negative for a
        slice with interior, in ``[0, TAU_MEM]`` for a single-point slice)."""
        y, gv = self._anchor(float(t))
        return y.copy(), gv

    def ray_hits(self, t: float, origin: np.ndarray, dirs: np.ndarray, tol: float = 1e-10,
                 rel: bool = False) -> np.ndarray:
        """Boundary points along rays ``origin + r * dir`` (first exit),
        bracketed to ``tol`` in r and returned on the member side."""
        radii = 1e-9 * 2.0 ** np.arange(51)
        P = origin + radii[None, :, None] * dirs[:, None, :]
        G = self.field(t, P)
        outside = G > 0
        if not np.all(outside.any(axis=1)):
            raise UnboundedSliceError(f"S({t}) escapes radius {radii[-1]:.3g} along a sampled ray")
        first = outside.argmax(axis=1)
        lo = np.where(first == 0, 0.0, radii[np.maximum(first - 1, 0)])
        hi = radii[first]
        if rel:
            tol = tol * float(np.max(hi))
        # Illinois regula falsi on the bracket, bisection whenever it stalls
        f_lo = self.field(t, origin + lo[:, None] * dirs)
        f_hi = self.field(t, origin + hi[:, None] * dirs)
        side = np.zeros(len(dirs), dtype=int)
        for it in range(200):
            if np.all(hi - lo <= tol):
                break
            with np.errstate(divide="ignore", invalid="ignore"):
                mid = (lo * f_hi - hi * f_lo) / (f_hi - f_lo)
            width = hi - lo
            bisect = ~np.isfinite(mid) | (mid <= lo) | (mid >= hi) | (it % 4 == 3)
            mid = np.where(bisect, 0.5 * (lo + hi), mid)
            # nudge so the bracket always shrinks by at least tol/2 from each end
            mid = np.clip(mid, lo + 0.25 * np.minimum(tol, width), hi - 0.25 * np.minimum(tol, width))
            f_mid = self.field(t, origin + mid[:, None] * dirs)
            out = f_mid > 0
            act = width > tol
            new_hi = act & out
            new_lo = act & ~out
            f_lo = np.where(new_hi & (side == -1), 0.5 * f_lo, f_lo)
            f_hi = np.where(new_lo & (side == 1), 0.5 * f_hi, f_hi)
            hi = np.where(new_hi, mid, hi)
            f_hi = np.where(new_hi, f_mid, f_hi)
            lo = np.where(new_lo, mid, lo)
            f_lo = np.where(new_lo, f_mid, f_lo)
            side = np.where(new_hi, -1, np.where(new_lo, 1, side))
        return origin + lo[:, None] * dirs

    def _sample_boundary(self, t, m):
        a, depth = self.anchor(t)
        if depth >= 0:
            return a[None, :]
        return self.ray_hits(t, a, _sphere_directions(self.dim, m))

    def interior_samples(self, t, m):
        a, depth = self.anchor(t)
        if depth >= 0:
            return np.zeros((0, self.dim))
        b = self._sample_boundary(t, max(4, m // 2))
        mids = a + 0.5 * (b - a)
        keep = self.field(t, mids) <= TAU_MEM
        return np.vstack([a, mids[keep]])

    def boundary_curve(self, t):
        if self.dim != 2:
            return None
        a, depth = self.anchor(t)
        if depth >= 0:
            return None
        return lambda th: self.ray_hits(t, a, np.array([[math.cos(th), math.sin(th)]]))[0]

    def _grad_hess(self, t: float, Y: np.ndarray):
        """Field, gradient and finite-difference Hessian (of the exact
        gradient) at each row of ``Y``."""
        k, n = Y.shape
        h = 1e-6 * (1.0 + np.abs(Y).max(axis=1))
        E = np.eye(n)
        pts = np.concatenate([Y[:, None, :], Y[:, None, :] + h[:, None, None] * E, Y[:, None, :] - h[:, None, None] * E],
                             axis=1)
        G, D, _ = self.g_jets(t, pts)
        grads = np.moveaxis(D[1:], 0, -1)  # (k, 2n+1, n)
        H = (grads[:, 1:n + 1] - grads[:, n + 1:]) / (2.0 * h[:, None, None])
        return G[:, 0], grads[:, 0], 0.5 * (H + np.swapaxes(H, 1, 2))

    def _descend(self, t: float, x: np.ndarray, Y: np.ndarray, maxit: int = MAX_PROJ_ITER):
        """Newton iteration on the KKT system of ``min |y - x|^2, g(y) = 0``
        from every start at once, with backtracking on the KKT residual.

        Starts that enter a small ball around an already converged iterate
        are retired (they would reproduce it)."""
        k, n = Y.shape
        Y = Y.copy()
        G, grad, H = self._grad_hess(t, Y)
        gg = (grad * grad).sum(axis=1)
        mu = np.where(gg > 0, ((x - Y) * grad).sum(axis=1) / np.where(gg > 0, gg, 1.0), 0.0)

        def residual(Yv, muv, Gv, gradv):
            r = Yv - x + muv[:, None] * gradv
            return np.concatenate([r, Gv[:, None]], axis=1)

        F = residual(Y, mu, G, grad)
        ok = np.isfinite(F).all(axis=1) & (gg > 0)
        live = np.flatnonzero(ok)
        done: list[np.ndarray] = []
        scale = 1.0 + float(np.abs(x).max())
        merge_tol = 1e-7 * scale
        eye = np.eye(n)
        for _ in range(maxit):
            if live.size == 0:
                break
            J = np.zeros((live.size, n + 1, n + 1))
            J[:, :n, :n] = eye + mu[live, None, None] * H[live]
            J[:, :n, n] = grad[live]
            J[:, n, :n] = grad[live]
            try:
                step = np.linalg.solve(J, -F[live][..., None])[..., 0]
            except np.linalg.LinAlgError:
                step = np.stack([np.linalg.lstsq(Jm, -f, rcond=None)[0] for Jm, f in zip(J, F[live])])
            f0 = (F[live] ** 2).sum(axis=1)
            lam = np.ones(live.size)
            pending = np.ones(live.size, dtype=bool)
            Yn, mun = Y[live].copy(), mu[live].copy()
            Gn, gn, Hn = G[live].copy(), grad[live].copy(), H[live].copy()
            Fn = F[live].copy()
            for _ in range(12):
                idx = np.flatnonzero(pending)
                if idx.size == 0:
                    break
                Yt = Y[live[idx]] + lam[idx, None] * step[idx, :n]
                mut = mu[live[idx]] + lam[idx] * step[idx, n]
                Gt, gt, Ht = self._grad_hess(t, Yt)
                Ft = residual(Yt, mut, Gt, gt)
                f1 = (Ft ** 2).sum(axis=1)
                acc = np.isfinite(f1) & (f1 <= (1.0 - 1e-4 * lam[idx]) * f0[idx] + 1e-30)
                a_idx = idx[acc]
                Yn[a_idx], mun[a_idx], Gn[a_idx], gn[a_idx], Hn[a_idx], Fn[a_idx] = (
                    Yt[acc], mut[acc], Gt[acc], gt[acc], Ht[acc], Ft[acc])
                pending[a_idx] = False
                lam[idx[~acc]] *= 0.5
            moved = np.sqrt((step[:, :n] ** 2).sum(axis=1)) * lam
            Y[live], mu[live], G[live], grad[live], H[live], F[live] = Yn, mun, Gn, gn, Hn, Fn
            res = np.sqrt((Fn ** 2).sum(axis=1))
            conv = ~pending & ((res <= 1e-15 * scale) | (moved <= 1e-15 * scale))
            stuck = pending  # no decrease even with tiny steps: local floor reached or hopeless
            conv |= stuck & (res <= 1e-12 * scale)
            fail = stuck & ~conv
            ok[live[fail]] = False
            done.extend(Y[live[conv]])
            keep = ~conv & ~fail
            if done and keep.any():
                C = np.array(done)
                near = np.sqrt(((Y[live][:, None, :] - C[None, :, :]) ** 2).sum(axis=2)).min(axis=1) <= merge_tol
                ok[live[keep & near]] = False
                keep &= ~near
            live = live[keep]
        ok[live] = False
        return Y, ok

    def _kkt_residual(self, t, x, Y):
        G, D, _ = self.g_jets(t, Y)
        grad = D[1:].T
        gn = np.linalg.norm(grad, axis=1)
        n = grad / np.where(gn > 0, gn, 1.0)[:, None]
        r = x - Y
        tang = r - np.einsum("ij,ij->i", r, n)[:, None] * n
        return np.linalg.norm(tang, axis=1) + np.abs(G) / np.where(gn > 0, gn, np.inf)

    def _linearized(self, t: float, x: np.ndarray, maxit: int = 40) -> np.ndarray | None:
        """Project ``x`` onto successive tangent linearizations of ``{g = 0}``.

        Cheap and contracting when ``x`` is close to the boundary relative to
        its curvature radius; returns None as soon as it stops contracting."""
        y = x.copy()
        last = math.inf
        scale = 1.0 + float(np.abs(x).max())
        for _ in range(maxit):
            G, D, _ = self.g_jets(t, y)
            grad = np.asarray(D[1:], dtype=float)
            gg = float(grad @ grad)
            if not (gg > 0 and math.isfinite(float(G))):
                return None
            z = x - ((float(G) + float(grad @ (x - y))) / gg) * grad
            step = float(np.sqrt(((z - y) ** 2).sum()))
            y = z
            if step <= 1e-15 * scale:
                return y
            if step > 0.5 * last:
                return None
            last = step
        return None

    def _finalize(self, t: float, x: np.ndarray, Y: np.ndarray, ok: np.ndarray):
        """Member-side correction, KKT acceptance and nearest-point selection."""
        G, D, _ = self.g_jets(t, Y)
        grad = D[1:].T
        gg = np.einsum("ij,ij->i", grad, grad)
        fix = ok & (G > 0) & (gg > 0)
        Y[fix] -= ((G[fix] + 1e-14) / gg[fix])[:, None] * grad[fix]
        Gf = self.field(t, Y)
        res = self._kkt_residual(t, x, Y)
        scale = 1.0 + float(np.linalg.norm(x))
        good = ok & (Gf <= TAU_MEM) & (res <= 1e-7 * scale)
        if not np.any(good):
            return None, float(np.min(np.where(np.isfinite(res), res, np.inf)))
        cand = Y[good]
        dist = np.linalg.norm(cand - x, axis=1)
        near = cand[dist <= dist.min() + 1e-9 * scale]
        return _lexmin(list(near)).copy(), 0.0

    def _project(self, t, x):
        if float(self.field(t, x)) <= TAU_MEM:
            return x.copy()
        a, depth = self.anchor(t)
        if depth >= 0:
            return a
        if self.convex:
            # any KKT point of a convex slice is the nearest point
            y = self._linearized(t, x)
            if y is not None:
                Y, ok = y[None, :], np.ones(1, dtype=bool)
            else:
                Y, ok = self._descend(t, x, x[None, :])
            best, _ = self._finalize(t, x, Y, ok)
            if best is not None:
                return best
        n = self.dim
        dirs = np.vstack([np.eye(n), -np.eye(n)])
        starts = np.vstack([self.ray_hits(t, a, dirs, tol=1e-2, rel=True), x[None, :]])
        Y, ok = self._descend(t, x, starts)
        best, res = self._finalize(t, x, Y, ok)
        if best is None:
            raise ProjectionError(f"projection onto S({t}) did not converge", res)
        return best

    def _validate_slice(self, t):
        super()._validate_slice(t)
        a, depth = self.anchor(t)
        if depth >= 0 or not self.convex:
            return
        # convexity probe: Hessian of the field at boundary and interior samples
        P = np.vstack([self._sample_boundary(t, 16), self.interior_samples(t, 16)])
        _, _, H = self._grad_hess(t, P)
        lam = np.linalg.eigvalsh(H)
        if np.min(lam) < -1e-7 * (1.0 + np.max(np.abs(lam))):
            self.convex = False


class SublevelProcess(_LevelSetProcess):
    """``S(t) = {x : f(x) <= -t}`` for a time-independent ``f``."""

    kind = "sublevel"

    def __init__(self, f: FieldExpr, domain: ProcessDomain, *, anchor_hint=None,
                 smooth_certificate: bool = True, name: str | None = None, check: bool = True):
        super().__init__(f.dim, domain, smooth_certificate, name, anchor_hint)
        if f.depends_on_t:
            raise ProcessError("sublevel formula f must not depend on t (use kind 'implicit')")
        self.f = f
        self._fmin = None
        if check:
            self.validate()

    def field(self, t, X):
        return self.f.value(0.0, X) + t

    def g_jets(self, t, X):
        v, d, k = self.f.jet_arrays(0.0, X)
        d = np.array(d)
        d[0] = 1.0
        return v + t, d, k

    def _compute_anchor(self, t):
        if self._fmin is None:
            self._fmin = self._minimize_g(0.0, self.anchor_hint)
        y, fmin = self._fmin
        gv = fmin + t
        if gv > TAU_MEM:
            raise EmptySliceError(f"S({t}) is empty (min f = {fmin:.6g} > {-t:.6g})")
        return y, gv

    def to_dict(self):
        return {"kind": self.kind, "dim": self.dim, "domain": _domain_json(self.domain), "f": str(self.f),
                "anchor": self.anchor_hint.tolist()}


class ImplicitProcess(_LevelSetProcess):
    """``S(t) = {x : g(t, x) <= 0}``."""

    kind = "implicit"

    def __init__(self, g: FieldExpr, domain: ProcessDomain, *, anchor_hint=None,
                 smooth_certificate: bool = True, name: str | None = None, check: bool = True):
        super().__init__(g.dim, domain, smooth_certificate, name, anchor_hint)
        self.g = g
        if check:
            self.validate()

    def field(self, t, X):
        return self.g.value(t, X)

    def g_jets(self, t, X):
        return self.g.jet_arrays(t, X)

    def to_dict(self):
        return {"kind": self.kind, "dim": self.dim, "domain": _domain_json(self.domain), "g": str(self.g),
                "anchor": self.anchor_hint.tolist()}


# ---------------------------------------------------------------------------
# Module-level operations


def contains(S: SweepingProcess, t: float, x) -> bool:
    return S.contains(t, x)


def project(S: SweepingProcess, t: float, x) -> np.ndarray:
    return S.project(t, x)


def boundary_normal(S: SweepingProcess, t: float, x) -> NormalRay:
    return S.boundary_normal(t, x)


def sample_boundary(S: SweepingProcess, t: float, m: int) -> np.ndarray:
    return S.sample_boundary(t, m)


def _one_sided(S: SweepingProcess, A: np.ndarray, t_to: float, B: np.ndarray) -> float:
    """Estimated sup over a in A of the distance from a to the boundary set
    sampled by B at time ``t_to``."""
    worst = 0.0
    for a in A:
        d = float(np.min(np.linalg.norm(B - a, axis=1)))
        if not S.contains(t_to, a):
            d = min(d, float(np.linalg.norm(a - S.project(t_to, a))))
        worst = max(worst, d)
    return worst


def boundary_distance(S: SweepingProcess, t0: float, t1: float, m: int = 64) -> float:
    """Estimated Pompeiu-Hausdorff distance between H_S(t0) and H_S(t1)."""
    A, B = S.sample_boundary(t0, m), S.sample_boundary(t1, m)
    return max(_one_sided(S, A, t1, B), _one_sided(S, B, t0, A))


@dataclass
class ContinuityReport:
    times: np.ndarray
    ratios: np.ndarray
    max_ratio: float
    flags: list[float]

    @property
    def continuous(self) -> bool:
        return not self.flags


def slice_continuity_diagnostic(S: SweepingProcess, a: float, b: float, grid: int = 50, m: int = 64,
                                threshold: float = 1e3, refinements: int = 3) -> ContinuityReport:
    """Hausdorff-rate scan of ``t -> H_S(t)`` on ``[a, b]``.

    A jump of size J in a cell of width h shows a ratio J/h that doubles
    under each bisection, while a steep but continuous motion keeps its rate.
    Cells that could cross ``threshold`` within ``refinements`` bisections are
    bisected toward the worse half and flagged when the final ratio exceeds
    ``threshold``.
    """
    S.check_time(a)
    S.check_time(b)
    times = np.linspace(a, b, grid + 1)
    ratios = np.array([boundary_distance(S, t0, t1, m) / (t1 - t0) for t0, t1 in zip(times[:-1], times[1:])])
    flags = []
    for i in np.flatnonzero(ratios * 2.0 ** refinements > threshold):
        lo, hi = float(times[i]), float(times[i + 1])
        worst = ratios[i]
        for _ in range(refinements):
            mid = 0.5 * (lo + hi)
            left = boundary_distance(S, lo, mid, m) / (mid - lo)
            right = boundary_distance(S, mid, hi, m) / (hi - mid)
            lo, hi = (lo, mid) if left >= right else (mid, hi)
            worst = max(left, right)
        if worst > threshold:
            flags.append(0.5 * (lo + hi))
    return ContinuityReport(times, ratios, float(ratios.max(initial=0.0)), flags)


# ---------------------------------------------------------------------------
# JSON description


def _domain_json(domain: ProcessDomain) -> list:
    return [None if math.isinf(domain.t_min) else domain.t_min, None if math.isinf(domain.t_max) else domain.t_max]


def _domain_from(value) -> ProcessDomain:
    if value is None:
        return ProcessDomain()
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ProcessError("domain must be a pair [t_min, t_max]")
    lo, hi = (float(v) if v not in (None, "-inf", "inf") else None for v in value)
    return ProcessDomain(-math.inf if lo is None else lo, math.inf if hi is None else hi)


def process_from_dict(spec: dict, *, check: bool = True) -> SweepingProcess:
    """Build a process from its JSON description (see README for the schema)."""
    try:
        kind = spec["kind"]
        dim = int(spec.get("dim", 1))
    except (KeyError, TypeError, ValueError) as exc:
        raise ProcessError(f"invalid process description: {exc}") from None
    domain = _domain_from(spec.get("domain"))
    common = dict(smooth_certificate=bool(spec.get("smooth_certificate", True)), name=spec.get("name"), check=check)

    def field(key):
        if key not in spec:
            raise ProcessError(f"process kind {kind!r} needs field {key!r}")
        return parse_field(str(spec[key]), dim)

    if kind == "sublevel":
        return SublevelProcess(field("f"), domain, anchor_hint=spec.get("anchor"), **common)
    if kind == "implicit":
        return ImplicitProcess(field("g"), domain, anchor_hint=spec.get("anchor"), **common)
    if kind == "moving_ball":
        center = spec.get("center")
        if not isinstance(center, list) or len(center) != dim:
            raise ProcessError(f"moving_ball needs 'center' as a list of {dim} formulas")
        return MovingBallProcess([parse_field(str(c), dim) for c in center], field("radius"), domain, **common)
    if kind == "interval":
        if dim != 1:
            raise ProcessError("interval processes live in R (dim 1)")
        return IntervalProcess(field("lower"), field("upper"), domain, **common)
    if kind == "two_intervals":
        if dim != 1:
            raise ProcessError("two_intervals processes live in R (dim 1)")
        return TwoIntervalsProcess(field("a1"), field("b1"), field("a2"), field("b2"), domain, **common)
    raise ProcessError(f"unknown process kind {kind!r} (expected one of {', '.join(KINDS)})")
