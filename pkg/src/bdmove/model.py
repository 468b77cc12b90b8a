"""Declarative birth-death-move models.

A model bundles the birth/death intensity functions, the birth/death
transition kernels, the inter-jump move process and the global bounds the
simulator relies on.  Ready-made presets reproduce the two simulation
studies (``sim41``: cardinality-driven intensity, ``sim42``: Delaunay
max-cell-area driven birth intensity).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .geometry import (
    GeometryError,
    PointConfig,
    Window,
    delaunay,
    max_cell_area,
)

__all__ = [
    "IntensityFn",
    "TransitionKernel",
    "MoveProcess",
    "ModelSpec",
    "ModelValidationError",
    "ValidationReport",
    "validate_model",
    "exp_cardinality_intensity",
    "maxarea_intensity",
    "linear_death_intensity",
    "constant_birth_intensity",
    "per_point_death_intensity",
    "uniform_birth_kernel",
    "uniform_death_kernel",
    "delaunay_area_birth_kernel",
    "brownian_move",
    "identity_move",
    "sim41_model",
    "sim42_model",
    "get_preset",
    "PRESETS",
]

BORN_ID = -1  # placeholder identity for a freshly born point; replaced by the simulator


@dataclass(frozen=True)
class IntensityFn:
    """A nonnegative intensity evaluator with a birth/death label.

    ``cardinality_only`` declares that the evaluator depends on a
    configuration only through its cardinality; the simulator exploits this
    to draw waiting times in closed form (the hazard is then constant along
    any cardinality-preserving move).
    """

    label: str  # "birth" or "death"
    fn: Callable[[PointConfig], float]
    cardinality_only: bool = False

    def __call__(self, x: PointConfig) -> float:
        return float(self.fn(x))


@dataclass(frozen=True)
class TransitionKernel:
    """Post-jump sampler; a birth adds one point, a death removes one."""

    kind: str  # "birth" or "death"
    sampler: Callable[[PointConfig, np.random.Generator], PointConfig]

    def sample(self, x: PointConfig, rng: np.random.Generator) -> PointConfig:
        return self.sampler(x, rng)


@dataclass(frozen=True)
class MoveProcess:
    """Inter-jump continuous Markov motion.

    ``mode`` is "exact" when the process can be advanced exactly over an
    arbitrary duration (Brownian or identity moves), "grid" when it is only
    defined on a fixed time grid.
    """

    advance: Callable[[PointConfig, float, np.random.Generator], PointConfig]
    mode: str = "exact"
    label: str = "custom"


@dataclass(frozen=True)
class ModelSpec:
    """Immutable specification of a birth-death-move process."""

    birth: IntensityFn
    death: IntensityFn
    birth_kernel: TransitionKernel
    death_kernel: TransitionKernel
    move: MoveProcess
    window: Window
    n_star: int
    alpha_lower: float
    alpha_upper: float
    name: str = "custom"
    sim_defaults: dict = field(default_factory=dict)

    def alpha(self, x: PointConfig) -> float:
        return self.birth(x) + self.death(x)

    @property
    def cardinality_only(self) -> bool:
        return self.birth.cardinality_only and self.death.cardinality_only


class ModelValidationError(ValueError):
    """Raised when a model violates a hypothesis the simulator relies on."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("model validation failed: " + "; ".join(self.violations))


@dataclass
class ValidationReport:
    probes: int
    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_model(m: ModelSpec, probe_budget: int = 50,
                   seed: int = 0, raise_on_failure: bool = False) -> ValidationReport:
    """Spot-check the model hypotheses on random configurations.

    Checks, on ``probe_budget`` random configurations spanning cardinalities
    0..n_star: death intensity vanishes on the empty configuration, the
    birth intensity vanishes at and above the saturation cardinality, the
    total intensity stays within the declared bounds, and the transition
    kernels respect their cardinality contracts.
    """
    if probe_budget < 1:
        raise ValueError("probe_budget must be >= 1")
    rng = np.random.default_rng(seed)
    violations: list[str] = []
    w = m.window

    def random_config(n):
        pts = w.lower + rng.random((n, w.dim)) * (w.upper - w.lower)
        return PointConfig(pts, ids=np.arange(n))

    # always probe the boundary cardinalities 0 and n_star
    cards = [0, m.n_star]
    if probe_budget > 2:
        extra = rng.integers(0, m.n_star + 1, size=probe_budget - 2)
        cards.extend(int(c) for c in extra)
    cards = cards[:max(probe_budget, 2)]

    for n in cards:
        x = random_config(n)
        b, d = m.birth(x), m.death(x)
        if n == 0 and d != 0.0:
            violations.append(f"death intensity must vanish on the empty configuration (got {d})")
        if n >= m.n_star and b != 0.0:
            violations.append(f"saturation hypothesis violated: birth intensity {b} at cardinality {n} >= n_star")
        if b < 0 or d < 0:
            violations.append(f"negative intensity at cardinality {n}")
        a = b + d
        if a > m.alpha_upper * (1 + 1e-12):
            violations.append(f"total intensity {a} above declared upper bound at cardinality {n}")
        if a < m.alpha_lower * (1 - 1e-12):
            violations.append(f"total intensity {a} below declared lower bound at cardinality {n}")
        if n < m.n_star:
            y = m.birth_kernel.sample(x, rng)
            if y.n != n + 1:
                violations.append(f"birth kernel changed cardinality {n} -> {y.n}")
            elif n and not np.array_equal(y.points[:n], x.points):
                violations.append("birth kernel moved existing points")
        if n >= 1:
            y = m.death_kernel.sample(x, rng)
            if y.n != n - 1:
                violations.append(f"death kernel changed cardinality {n} -> {y.n}")

    report = ValidationReport(probes=len(cards), violations=violations)
    if raise_on_failure and not report.ok:
        raise ModelValidationError(violations)
    return report


# ---------------------------------------------------------------------------
# Intensity constructors
# ---------------------------------------------------------------------------

def exp_cardinality_intensity(a: float = 5.0, b: float = 1.0, n0: float = 100.0,
                              label: str = "birth") -> IntensityFn:
    """Intensity ``x -> exp(a * (n(x)/n0 - b))``, a function of cardinality."""

    def fn(x: PointConfig) -> float:
        return math.exp(a * (x.n / n0 - b))

    return IntensityFn(label=label, fn=fn, cardinality_only=True)


def maxarea_intensity(c1: float = 50.0, c2: float = 25.0,
                      window: Window | None = None,
                      saturation: int | None = None,
                      label: str = "birth") -> IntensityFn:
    """Intensity ``x -> exp(c1 * maxarea(x)) / c2``.

    ``maxarea`` is the largest cell of the corners-augmented Delaunay
    tessellation.  With ``saturation`` set, the intensity is forced to zero
    at and above that cardinality.
    """
    if c1 <= 0 or c2 <= 0:
        raise ValueError("c1 and c2 must be positive")
    win = window if window is not None else Window.unit_square()

    def fn(x: PointConfig) -> float:
        if saturation is not None and x.n >= saturation:
            return 0.0
        return math.exp(c1 * max_cell_area(delaunay(x, win, add_corners=True))) / c2

    return IntensityFn(label=label, fn=fn, cardinality_only=False)


def linear_death_intensity(rate_per_point: float = 0.01, cap: int = 1000) -> IntensityFn:
    """Death intensity ``x -> rate * n(x)`` truncated above ``cap`` points."""
    if rate_per_point <= 0:
        raise ValueError("rate_per_point must be positive")

    def fn(x: PointConfig) -> float:
        n = x.n
        return rate_per_point * n if n <= cap else 0.0

    return IntensityFn(label="death", fn=fn, cardinality_only=True)


def constant_birth_intensity(rate: float, n_star: int) -> IntensityFn:
    """Constant birth intensity, truncated at the saturation cardinality."""

    def fn(x: PointConfig) -> float:
        return rate if x.n < n_star else 0.0

    return IntensityFn(label="birth", fn=fn, cardinality_only=True)


def per_point_death_intensity(rate: float) -> IntensityFn:
    """Death intensity ``x -> rate * n(x)`` (independent deaths per point)."""

    def fn(x: PointConfig) -> float:
        return rate * x.n

    return IntensityFn(label="death", fn=fn, cardinality_only=True)


# ---------------------------------------------------------------------------
# Transition kernels
# ---------------------------------------------------------------------------

def _append_point(x: PointConfig, p: np.ndarray) -> PointConfig:
    pts = np.vstack([x.points, p.reshape(1, -1)]) if x.n else p.reshape(1, -1)
    ids = None
    if x.ids is not None or x.n == 0:
        old = x.ids if x.ids is not None else np.empty(0, dtype=np.int64)
        ids = np.concatenate([old, [BORN_ID]])
    return PointConfig(pts, ids=ids)


def _remove_point(x: PointConfig, i: int) -> PointConfig:
    keep = np.ones(x.n, dtype=bool)
    keep[i] = False
    ids = x.ids[keep] if x.ids is not None else None
    return PointConfig(x.points[keep], ids=ids)


def uniform_birth_kernel(window: Window) -> TransitionKernel:
    """Birth kernel adding one point uniformly in the window."""

    def sampler(x: PointConfig, rng: np.random.Generator) -> PointConfig:
        p = window.lower + rng.random(window.dim) * (window.upper - window.lower)
        return _append_point(x, p)

    return TransitionKernel(kind="birth", sampler=sampler)


def uniform_death_kernel() -> TransitionKernel:
    """Death kernel removing one uniformly chosen existing point."""

    def sampler(x: PointConfig, rng: np.random.Generator) -> PointConfig:
        if x.is_empty():
            raise GeometryError("death kernel applied to the empty configuration")
        return _remove_point(x, int(rng.integers(x.n)))

    return TransitionKernel(kind="death", sampler=sampler)


def delaunay_area_birth_kernel(window: Window) -> TransitionKernel:
    """Birth kernel placing the new point in a Delaunay cell chosen by area.

    The tessellation is corners-augmented, so births can fall outside the
    convex hull of the configuration; within the chosen cell the point is
    uniform (barycentric sampling).
    """

    def sampler(x: PointConfig, rng: np.random.Generator) -> PointConfig:
        tess = delaunay(x, window, add_corners=True)
        probs = tess.areas / tess.areas.sum()
        ti = int(rng.choice(tess.n_triangles, p=probs))
        a, b, c = tess.vertices[tess.triangles[ti]]
        u, v = rng.random(2)
        if u + v > 1.0:
            u, v = 1.0 - u, 1.0 - v
        p = a + u * (b - a) + v * (c - a)
        return _append_point(x, p)

    return TransitionKernel(kind="birth", sampler=sampler)


# ---------------------------------------------------------------------------
# Move processes
# ---------------------------------------------------------------------------

def identity_move() -> MoveProcess:
    """No motion between jumps: a pure spatial birth-death process."""

    def advance(x: PointConfig, dt: float, rng: np.random.Generator) -> PointConfig:
        return x

    return MoveProcess(advance=advance, mode="exact", label="identity")


def _reflect(pts: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    span = upper - lower
    y = np.mod(pts - lower, 2.0 * span)
    y = np.where(y > span, 2.0 * span - y, y)
    return lower + y


def brownian_move(sigma: float, window: Window | None = None,
                  boundary: str = "none") -> MoveProcess:
    """Independent Brownian motion per point.

    The per-coordinate increment over duration ``dt`` has standard deviation
    ``sigma * sqrt(dt)`` (``sigma`` is a per-unit-time scale).  With
    ``boundary="reflect"`` coordinates are folded back into the window.
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    if boundary not in ("none", "reflect"):
        raise ValueError("boundary must be 'none' or 'reflect'")
    if boundary == "reflect" and window is None:
        raise ValueError("reflecting boundary requires a window")

    def advance(x: PointConfig, dt: float, rng: np.random.Generator) -> PointConfig:
        if x.is_empty() or sigma == 0.0:
            return x
        pts = x.points + rng.normal(0.0, sigma * math.sqrt(dt), size=x.points.shape)
        if boundary == "reflect":
            pts = _reflect(pts, window.lower, window.upper)
        return PointConfig(pts, ids=x.ids)

    return MoveProcess(advance=advance, mode="exact", label="brownian")


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

def sim41_model(n_star: int = 1000, sigma: float = 2e-3,
                a: float = 5.0, n0: float = 100.0) -> ModelSpec:
    """Cardinality-driven preset on the unit square.

    The total jump intensity is ``exp(a * (n/n0 - 1))``; a jump is a birth
    or a death with equal probability, forced to a birth at n=0 and a death
    at n=n_star.  Births are uniform, deaths uniform over points, and all
    points follow a reflected Brownian motion between jumps.
    """
    win = Window.unit_square()
    total = exp_cardinality_intensity(a=a, b=1.0, n0=n0)

    def birth_fn(x: PointConfig) -> float:
        n = x.n
        if n >= n_star:
            return 0.0
        frac = 1.0 if n == 0 else 0.5
        return frac * total(x)

    def death_fn(x: PointConfig) -> float:
        return total(x) - birth_fn(x)

    return ModelSpec(
        birth=IntensityFn("birth", birth_fn, cardinality_only=True),
        death=IntensityFn("death", death_fn, cardinality_only=True),
        birth_kernel=uniform_birth_kernel(win),
        death_kernel=uniform_death_kernel(),
        move=brownian_move(sigma, window=win, boundary="reflect"),
        window=win,
        n_star=n_star,
        alpha_lower=math.exp(-a),
        alpha_upper=math.exp(a * (n_star / n0 - 1.0)),
        name="sim41",
        sim_defaults={"sampler": "auto", "initial_intensity": 100.0},
    )


def sim42_model(c1: float = 50.0, c2: float = 25.0,
                death_rate: float = 0.01, n_star: int = 1000,
                sigma: float = 2e-3) -> ModelSpec:
    """Geometry-driven preset on the unit square.

    The birth intensity grows with the largest empty Delaunay cell,
    ``exp(c1 * maxarea) / c2``, and births land in a cell chosen
    proportionally to its area; the death intensity is linear in the number
    of points with a uniform death kernel.
    """
    win = Window.unit_square()
    return ModelSpec(
        birth=maxarea_intensity(c1=c1, c2=c2, window=win, saturation=n_star),
        death=linear_death_intensity(rate_per_point=death_rate, cap=n_star),
        birth_kernel=delaunay_area_birth_kernel(win),
        death_kernel=uniform_death_kernel(),
        move=brownian_move(sigma, window=win, boundary="reflect"),
        window=win,
        n_star=n_star,
        alpha_lower=1.0 / c2,
        # sup of the birth intensity is attained on the empty configuration
        # (maxarea = half the window area); the death part adds at most
        # death_rate * n_star.
        alpha_upper=math.exp(c1 * 0.5) / c2 + death_rate * n_star,
        name="sim42",
        sim_defaults={"sampler": "grid", "grid_dt": 0.5, "initial_intensity": 100.0},
    )


PRESETS: dict[str, Callable[[], ModelSpec]] = {
    "sim41": sim41_model,
    "sim42": sim42_model,
}


def get_preset(name: str, **kwargs) -> ModelSpec:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {sorted(PRESETS)}") from None
    return factory(**kwargs)


def poisson_initial_config(window: Window, intensity: float,
                           rng: np.random.Generator) -> PointConfig:
    """A Poisson point process realization in the window (initial state)."""
    vol = float(np.prod(window.upper - window.lower))
    n = int(rng.poisson(intensity * vol))
    pts = window.lower + rng.random((n, window.dim)) * (window.upper - window.lower)
    return PointConfig(pts, ids=np.arange(n))
