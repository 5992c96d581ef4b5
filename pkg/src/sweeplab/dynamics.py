"""Catching-up discretizations, orbit refinement, and the velocity and
excess checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .process import (
    TAU_BND,
    IntervalProcess,
    ProcessError,
    SweepingProcess,
    TwoIntervalsProcess,
)
from .talweg import _talweg_many_1d, boundary_moduli, talweg_at

CHUNK = 1_000_000


class OrbitError(RuntimeError):
    pass


@dataclass
class CatchingUpSequence:
    times: np.ndarray
    points: np.ndarray
    error: str | None = None

    @property
    def displacements(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.points, axis=0), axis=1)

    @property
    def length(self) -> float:
        return float(self.displacements.sum())

    @property
    def nodes(self) -> list[tuple[float, np.ndarray]]:
        return list(zip(self.times.tolist(), self.points))

    @property
    def complete(self) -> bool:
        return self.error is None


def _member_start(S: SweepingProcess, t0: float, x0) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if not S.contains(t0, x0):
        raise ProcessError(f"start point {x0.tolist()} is not in S({t0})")
    return x0


def catching_up_on(S: SweepingProcess, times: Sequence[float], x0) -> CatchingUpSequence:
    """Catching-up sequence ``x_{i+1} = Proj_{S(t_{i+1})}(x_i)`` on an
    arbitrary increasing grid; a failing projection ends the run early."""
    times = np.asarray(times, dtype=float)
    if len(times) < 2 or np.any(np.diff(times) <= 0):
        raise ValueError("catching-up grid must be strictly increasing with at least 2 nodes")
    S.check_time(times[0])
    S.check_time(times[-1])
    x = _member_start(S, times[0], x0)
    pts = [x]
    for t in times[1:]:
        try:
            x = S.project(t, x)
        except (ProcessError, ArithmeticError) as exc:
            return CatchingUpSequence(times[: len(pts)], np.array(pts), error=str(exc))
        pts.append(x)
    return CatchingUpSequence(times, np.array(pts))


def catching_up(S: SweepingProcess, t0: float, t1: float, steps: int, x0) -> CatchingUpSequence:
    """Catching-up on the uniform grid ``t0 + i (t1 - t0) / steps``."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not t0 < t1:
        raise ValueError(f"empty window [{t0}, {t1}]")
    times = t0 + (t1 - t0) * np.arange(steps + 1) / steps
    times[-1] = t1
    return catching_up_on(S, times, x0)


@dataclass
class Segment:
    t0: float
    t1: float
    steps: int
    start: np.ndarray


def piecewise_catching_up(S: SweepingProcess, segments: Sequence) -> list[CatchingUpSequence]:
    """Runs catching-up per segment ``((t0, t1), steps, start)``; segment
    windows must abut and restarts may jump in space."""
    segs = [s if isinstance(s, Segment) else Segment(float(s[0][0]), float(s[0][1]), int(s[1]), np.asarray(s[2], float))
            for s in segments]
    if not segs:
        raise ValueError("need at least one segment")
    for prev, nxt in zip(segs[:-1], segs[1:]):
        if abs(prev.t1 - nxt.t0) > 1e-12 * (1.0 + abs(prev.t1)):
            raise ValueError(f"segment windows must abut: {prev.t1} != {nxt.t0}")
    return [catching_up(S, s.t0, s.t1, s.steps, s.start) for s in segs]


def total_length(runs: Sequence[CatchingUpSequence]) -> float:
    """Sum of within-segment lengths (restart jumps are not counted)."""
    return float(sum(r.length for r in runs))


# ---------------------------------------------------------------------------
# talweg chasing


@dataclass
class ChasingRun:
    """Piecewise catching-up with one-step segments on ``times``, each
    restarted at the talweg argmax of its initial slice."""

    times: np.ndarray
    displacements: np.ndarray

    @property
    def total(self) -> float:
        return float(np.sum(self.displacements))

    @property
    def segments(self) -> int:
        return len(self.times) - 1


def _project_many_1d(S: SweepingProcess, times: np.ndarray, x: np.ndarray) -> np.ndarray:
    if isinstance(S, IntervalProcess):
        l, _, h, _ = S.endpoints(times)
        return np.clip(x, l, h)
    (a1, _), (b1, _), (a2, _), (b2, _) = S.endpoint_jets(times)
    merged = b1 >= a2
    y1 = np.clip(x, a1, np.where(merged, np.maximum(b1, b2), b1))
    y2 = np.clip(x, a2, b2)
    d1, d2 = np.abs(x - y1), np.abs(x - y2)
    tol = 1e-9 * (1.0 + np.abs(x))
    pick1 = merged | (d1 < d2 - tol) | ((np.abs(d1 - d2) <= tol) & (y1 <= y2))
    return np.where(pick1, y1, y2)


def talweg_chasing(S: SweepingProcess, times: Sequence[float], m: int = 64) -> ChasingRun:
    times = np.asarray(times, dtype=float)
    if len(times) < 2 or np.any(np.diff(times) <= 0):
        raise ValueError("chasing grid must be strictly increasing with at least 2 nodes")
    S.check_time(times[0])
    S.check_time(times[-1])
    if isinstance(S, (IntervalProcess, TwoIntervalsProcess)):
        out = []
        with np.errstate(all="ignore"):
            for lo in range(0, len(times) - 1, CHUNK):
                ts = times[lo: lo + CHUNK + 1]
                _, _, pos = _talweg_many_1d(S, ts[:-1])
                x = pos[:, 0]
                out.append(np.abs(_project_many_1d(S, ts[1:], x) - x))
        return ChasingRun(times, np.concatenate(out))
    disp = np.empty(len(times) - 1)
    for i, (t0, t1) in enumerate(zip(times[:-1], times[1:])):
        x = talweg_at(S, float(t0), m).point
        disp[i] = float(np.linalg.norm(S.project(float(t1), x) - x))
    return ChasingRun(times, disp)


# ---------------------------------------------------------------------------
# orbits


@dataclass
class Orbit:
    times: np.ndarray
    points: np.ndarray
    dt: float
    residual: float
    steps: int
    history: list = field(default_factory=list)

    @property
    def length(self) -> float:
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())

    def speeds(self) -> np.ndarray:
        """Central-difference speeds (one-sided at the ends)."""
        if len(self.times) == 2:
            v = np.linalg.norm(self.points[1] - self.points[0]) / (self.times[1] - self.times[0])
            return np.array([v, v])
        return np.linalg.norm(np.gradient(self.points, self.times, axis=0), axis=1)


def orbit_from_sequence(seq: CatchingUpSequence, residual: float = math.nan) -> Orbit:
    if seq.error:
        raise OrbitError(f"catching-up run failed: {seq.error}")
    dt = float(seq.times[1] - seq.times[0])
    return Orbit(seq.times, seq.points, dt, residual, len(seq.times) - 1)


def refine_to_orbit(S: SweepingProcess, t0: float, t1: float, x0, tol: float = 1e-4,
                    start_steps: int = 64, max_steps: int = 2 ** 20) -> Orbit:
    """Doubles catching-up steps until the lengths form a Cauchy sequence."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    steps = start_steps
    prev = catching_up(S, t0, t1, steps, x0)
    history = [(steps, prev.length)]
    while True:
        steps *= 2
        if steps > max_steps:
            raise OrbitError(f"no convergent orbit detected up to {max_steps} steps")
        cur = catching_up(S, t0, t1, steps, x0)
        history.append((steps, cur.length))
        residual = abs(cur.length - prev.length)
        if residual <= tol * (1.0 + cur.length):
            orbit = orbit_from_sequence(cur, residual)
            orbit.history = history
            return orbit
        prev = cur


@dataclass(frozen=True)
class VelocityStats:
    max_deviation: float
    mean_deviation: float
    checked: int
    skipped: int


def _asym_along(S: SweepingProcess, times: np.ndarray, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Asym modulus and boundary flag at each orbit node."""
    asym = np.empty(len(times))
    on_bnd = np.empty(len(times), dtype=bool)
    for i, (t, x) in enumerate(zip(times, points)):
        g = S.active_jet(float(t), x)[0]
        on_bnd[i] = g >= -TAU_BND
        asym[i] = float(boundary_moduli(S, float(t), x[None, :])[0][0]) if on_bnd[i] else 0.0
    return asym, on_bnd


def velocity_check(S: SweepingProcess, orbit: Orbit) -> VelocityStats:
    """Central-difference speed against the asym modulus at interior nodes.

    Nodes whose neighbours differ in boundary contact are skipped: the speed
    law holds almost everywhere and fails at contact switches."""
    t, x = orbit.times, orbit.points
    if len(t) < 3:
        raise ValueError("velocity check needs at least 3 nodes")
    asym, on_bnd = _asym_along(S, t, x)
    speed = np.linalg.norm(x[2:] - x[:-2], axis=1) / (t[2:] - t[:-2])
    same = (on_bnd[:-2] == on_bnd[1:-1]) & (on_bnd[1:-1] == on_bnd[2:])
    dev = np.abs(speed - asym[1:-1])[same]
    if dev.size == 0:
        return VelocityStats(0.0, 0.0, 0, int((~same).sum()))
    return VelocityStats(float(dev.max()), float(dev.mean()), int(dev.size), int((~same).sum()))


def orbit_table(S: SweepingProcess, orbit: Orbit) -> np.ndarray:
    """Rows ``t, x1..xn, speed_est, asym_modulus``."""
    asym, _ = _asym_along(S, orbit.times, orbit.points)
    return np.column_stack([orbit.times, orbit.points, orbit.speeds(), asym])


def sequence_table(seq: CatchingUpSequence) -> np.ndarray:
    """Rows ``t, x1..xn, step_displacement`` (0 on the first row)."""
    return np.column_stack([seq.times, seq.points, np.concatenate([[0.0], seq.displacements])])


# ---------------------------------------------------------------------------
# excess


def _one_sided_excess(S: SweepingProcess, A: np.ndarray, t_to: float) -> float:
    worst = 0.0
    for y in A:
        if S.contains(t_to, y):
            continue
        worst = max(worst, float(np.linalg.norm(y - S.project(t_to, y))))
    return worst


def excess_estimate(S: SweepingProcess, t0: float, t1: float, m: int = 128) -> tuple[float, float]:
    """``(ex(S(t0), S(t1)), Hausdorff distance)`` over boundary and interior samples."""
    ex01 = _one_sided_excess(S, S.sample_slice(t0, m), t1)
    ex10 = _one_sided_excess(S, S.sample_slice(t1, m), t0)
    return ex01, max(ex01, ex10)

