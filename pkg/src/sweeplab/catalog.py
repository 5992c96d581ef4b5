"""Builtin processes with recommended windows and expected verdicts."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .process import SweepingProcess, process_from_dict

DEFAULT_CALM_STEPS = tuple(1e-6 * 2.0 ** -k for k in range(5))


def uniform_grid(a: float, b: float, count: int = 4096) -> np.ndarray:
    return np.linspace(a, b, count + 1)


def inverse_square_grid(a: float, b: float, per_period: int = 16) -> np.ndarray:
    """Grid uniform in ``u = 1/t^2`` with ``per_period`` nodes per ``2 pi``
    of ``u``: it resolves ``sin(1/t^2)`` at every scale (``0 < a < b``)."""
    if not 0 < a < b:
        raise ValueError("inverse-square grid needs 0 < a < b")
    du = 2.0 * math.pi / per_period
    ua, ub = 1.0 / a ** 2, 1.0 / b ** 2
    k = max(1, math.ceil((ua - ub) / du))
    u = np.linspace(ub, ua, k + 1)
    t = 1.0 / np.sqrt(u[::-1])
    t[0], t[-1] = a, b
    return t


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    description: str
    spec: dict
    window: tuple[float, float]
    verdict: str
    lemma_window: tuple[float, float]
    tags: tuple[str, ...] = ()
    expected_integral: float | None = None
    calm_steps: tuple[float, ...] = DEFAULT_CALM_STEPS
    per_level: int = 16
    velocity_window: tuple[float, float] | None = None
    chasing_grid: Callable[[float, float], np.ndarray] = field(default=uniform_grid, compare=False)
    epsilons: tuple[float, ...] = ()

    @property
    def counterexample(self) -> bool:
        return "counterexample" in self.tags

    def build(self) -> SweepingProcess:
        return process_from_dict(dict(self.spec, name=self.name))

    def summary(self) -> dict:
        return {
            "name": self.name,
            "kind": self.spec["kind"],
            "description": self.description,
            "window": list(self.window),
            "verdict": self.verdict,
            "tags": list(self.tags),
            "process": self.spec,
        }


_EPSILONS = tuple(0.05 * 2.0 ** -k for k in range(7)) + (0.0005,)

_ENTRIES = (
    CatalogEntry(
        "shrinking_disk",
        "disk of radius 1 - t centred at the origin",
        {"kind": "moving_ball", "dim": 2, "domain": [0.0, 0.95], "center": ["0", "0"], "radius": "1 - t"},
        (0.0, 0.5), "convergent", (0.0, 0.5), expected_integral=0.5,
    ),
    CatalogEntry(
        "expanding_disk",
        "disk of radius 1 + t; growth never pushes, talweg identically 0",
        {"kind": "moving_ball", "dim": 2, "domain": [0.0, 2.0], "center": ["0", "0"], "radius": "1 + t"},
        (0.0, 1.0), "convergent", (0.0, 1.0), tags=("sigma-zero",), expected_integral=0.0,
    ),
    CatalogEntry(
        "moving_ball",
        "unit disk translating at unit speed along the first axis",
        {"kind": "moving_ball", "dim": 2, "domain": [0.0, 2.0], "center": ["t", "0"], "radius": "1"},
        (0.0, 1.0), "convergent", (0.0, 1.0), expected_integral=1.0,
    ),
    CatalogEntry(
        "sublevel_quadratic",
        "sublevel sets {x1^2 + x2^2 <= -t}, collapsing to a point at t = 0",
        {"kind": "sublevel", "dim": 2, "domain": [-1.0, 0.0], "f": "x1^2 + x2^2", "anchor": [0.0, 0.0]},
        (-0.25, 0.0), "convergent", (-0.25, -0.01), expected_integral=0.5,
    ),
    CatalogEntry(
        "oscillatory_interval",
        "[-2, h(t)] with h(t) = t^2 (2 + sin(1/t^2)): smooth, but the talweg is not integrable at 0",
        {"kind": "interval", "dim": 1, "domain": [0.0, 1.0], "lower": "-2", "upper": "t^2*(2+sin(1/t^2))"},
        (0.0, 0.3), "divergent-at-a", (0.1, 0.3), tags=("counterexample",),
        calm_steps=tuple(1e-8 * 2.0 ** -k for k in range(5)), per_level=1024, velocity_window=(0.2, 0.3),
        chasing_grid=inverse_square_grid, epsilons=_EPSILONS,
    ),
    CatalogEntry(
        "two_intervals",
        "[-2, -t] U [t, 2]: the gap opens at unit speed",
        {"kind": "two_intervals", "dim": 1, "domain": [0.05, 1.5], "a1": "-2", "b1": "-t", "a2": "t", "b2": "2"},
        (0.1, 1.0), "convergent", (0.1, 1.0), expected_integral=0.9,
    ),
)


def catalog() -> list[CatalogEntry]:
    return list(_ENTRIES)


def catalog_entry(name: str) -> CatalogEntry:
    for e in _ENTRIES:
        if e.name == name:
            return e
    raise KeyError(f"unknown catalog process {name!r}; available: {', '.join(e.name for e in _ENTRIES)}")
