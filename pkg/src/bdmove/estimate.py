"""Kernel estimators of birth/death/total jump intensities.

Estimates are ratios of a jump sum to an occupation time: the numerator
sums kernel proximities between the query configuration and the pre-jump
configurations, the denominator integrates the same proximity along the
observed path.  Both continuous-time trajectories and discrete frame
sequences are supported, with the full set of proximity rules: indicator
of equal cardinality, and kernel-of-distance for the Hausdorff, optimal
matching, cardinality and feature distances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .geometry import PointConfig, Window, delaunay, max_cell_area
from .simulate import FrameSequence, Trajectory

__all__ = [
    "KernelSpec",
    "FeatureMap",
    "IntensityEstimate",
    "gaussian_profile",
    "eval_kernel",
    "config_distance",
    "occupation_time",
    "estimate_continuous",
    "estimate_discrete",
    "jump_counts_between",
    "feature_cardinality",
    "feature_maxarea",
    "trajectory_quadrature",
    "distance_matrix",
    "kernel_matrix",
]

_SQRT2PI = math.sqrt(2.0 * math.pi)


def gaussian_profile(u):
    """Standard Gaussian density, the default kernel profile."""
    u = np.asarray(u, dtype=float)
    return np.exp(-0.5 * u * u) / _SQRT2PI


@dataclass(frozen=True)
class FeatureMap:
    """A deterministic configuration summary in R^p."""

    name: str
    fn: Callable[[PointConfig], np.ndarray]

    def __call__(self, x: PointConfig) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.fn(x), dtype=float))


def feature_cardinality() -> FeatureMap:
    return FeatureMap("cardinality", lambda x: np.array([float(x.n)]))


def feature_maxarea(window: Window) -> FeatureMap:
    """Largest cell area of the corners-augmented Delaunay tessellation."""

    def fn(x: PointConfig) -> np.ndarray:
        return np.array([max_cell_area(delaunay(x, window, add_corners=True))])

    return FeatureMap("maxarea", fn)


@dataclass(frozen=True)
class KernelSpec:
    """Proximity rule between configurations.

    ``mode="indicator"`` is the indicator of equal cardinality;
    ``mode="distance"`` evaluates ``profile(d(x, y) / bandwidth)`` for the
    chosen distance.  For the Hausdorff distance, which is undefined when a
    configuration is empty, the proximity falls back to the indicator of
    configuration equality whenever either argument is empty.
    """

    mode: str = "distance"
    distance: str = "matching"  # hausdorff | matching | cardinality | feature
    bandwidth: float = 1.0
    kappa: float = math.sqrt(2.0)
    feature: FeatureMap | None = None
    profile: Callable = gaussian_profile

    def __post_init__(self):
        if self.mode not in ("indicator", "distance"):
            raise ValueError("mode must be 'indicator' or 'distance'")
        if self.mode == "distance":
            if self.distance not in ("hausdorff", "matching", "cardinality", "feature"):
                raise ValueError(f"unknown distance {self.distance!r}")
            if self.bandwidth <= 0:
                raise ValueError("bandwidth must be positive")
            if self.distance == "feature" and self.feature is None:
                raise ValueError("feature distance requires a FeatureMap")
            if self.distance == "matching" and self.kappa <= 0:
                raise ValueError("kappa must be positive")

    def with_bandwidth(self, h: float) -> "KernelSpec":
        return replace(self, bandwidth=float(h))


def config_distance(ks: KernelSpec, x: PointConfig, y: PointConfig) -> float:
    """The distance underlying a distance-mode kernel spec."""
    from . import geometry as g

    if ks.distance == "hausdorff":
        return g.hausdorff(x, y)
    if ks.distance == "matching":
        return g.optimal_matching(x, y, ks.kappa)
    if ks.distance == "cardinality":
        return g.cardinality_distance(x, y)
    return float(np.linalg.norm(ks.feature(x) - ks.feature(y)))


def eval_kernel(ks: KernelSpec, x: PointConfig, y: PointConfig) -> float:
    """Kernel proximity of two configurations under ``ks``."""
    if ks.mode == "indicator":
        return 1.0 if x.n == y.n else 0.0
    if ks.distance == "hausdorff" and (x.is_empty() or y.is_empty()):
        return 1.0 if x.same_point_set(y) else 0.0
    d = config_distance(ks, x, y)
    return float(ks.profile(d / ks.bandwidth))


# ---------------------------------------------------------------------------
# Vectorized proximity matrices with per-list memoization
# ---------------------------------------------------------------------------

def _cardinalities(configs) -> np.ndarray:
    return np.array([c.n for c in configs], dtype=float)


def feature_values(fm: FeatureMap, configs) -> np.ndarray:
    return np.vstack([fm(c) for c in configs])


def distance_matrix(ks: KernelSpec, xs, ys=None) -> np.ndarray:
    """Pairwise distances between two config lists (symmetric when ys is None).

    Entries involving an empty configuration under the Hausdorff distance
    are NaN; ``kernel_matrix`` applies the equality convention there.
    """
    from . import geometry as g

    sym = ys is None
    ys = xs if sym else ys
    if ks.distance == "cardinality":
        nx = _cardinalities(xs)
        ny = nx if sym else _cardinalities(ys)
        return np.abs(nx[:, None] - ny[None, :])
    if ks.distance == "feature":
        fx = feature_values(ks.feature, xs)
        fy = fx if sym else feature_values(ks.feature, ys)
        return cdist(fx, fy)

    out = np.empty((len(xs), len(ys)))
    if sym:
        for i, x in enumerate(xs):
            out[i, i] = 0.0 if (ks.distance != "hausdorff" or x.n) else np.nan
            for j in range(i + 1, len(xs)):
                out[i, j] = out[j, i] = _pair_distance(ks, x, xs[j])
    else:
        for i, x in enumerate(xs):
            for j, y in enumerate(ys):
                out[i, j] = _pair_distance(ks, x, y)
    return out


def _pair_distance(ks: KernelSpec, x: PointConfig, y: PointConfig) -> float:
    from . import geometry as g

    if ks.distance == "hausdorff":
        if x.is_empty() or y.is_empty():
            return np.nan
        d = cdist(x.points, y.points)
        return float(max(d.min(axis=1).max(), d.min(axis=0).max()))
    # optimal matching
    nx, ny = x.n, y.n
    m, big = min(nx, ny), max(nx, ny)
    if big == 0:
        return 0.0
    if m == 0:
        return float(ks.kappa)
    small, large = (x.points, y.points) if nx <= ny else (y.points, x.points)
    cost = np.minimum(cdist(small, large), ks.kappa)
    r, c = linear_sum_assignment(cost)
    return float((cost[r, c].sum() + ks.kappa * (big - m)) / big)


def kernel_matrix(ks: KernelSpec, xs, ys=None, dmat: np.ndarray | None = None) -> np.ndarray:
    """Kernel proximity matrix; accepts a precomputed distance matrix."""
    sym = ys is None
    ys_l = xs if sym else ys
    if ks.mode == "indicator":
        nx = _cardinalities(xs)
        ny = nx if sym else _cardinalities(ys_l)
        return (nx[:, None] == ny[None, :]).astype(float)
    if dmat is None:
        dmat = distance_matrix(ks, xs, ys)
    K = np.asarray(ks.profile(dmat / ks.bandwidth), dtype=float)
    if ks.distance == "hausdorff":
        bad = np.isnan(dmat)
        if bad.any():
            nx = _cardinalities(xs)
            ny = nx if sym else _cardinalities(ys_l)
            both_empty = (nx[:, None] == 0) & (ny[None, :] == 0)
            K[bad] = np.where(both_empty[bad], 1.0, 0.0)
    return K


# ---------------------------------------------------------------------------
# Quadrature over a trajectory
# ---------------------------------------------------------------------------

@dataclass
class TrajectoryQuadrature:
    """Time-weighted evaluation nodes approximating path integrals.

    ``mode="trapezoid"`` uses segment endpoints plus stored path samples
    with trapezoid weights; ``mode="segment"`` uses one node per segment
    (its end configuration) with the full segment duration, which is exact
    for identity moves and a tight approximation for slow moves.
    """

    configs: list[PointConfig]
    weights: np.ndarray
    segment_of: np.ndarray
    jump_node: np.ndarray  # node index of the pre-jump configuration of jump j

    @property
    def n_nodes(self) -> int:
        return len(self.configs)


def trajectory_quadrature(tr: Trajectory, mode: str = "trapezoid") -> TrajectoryQuadrature:
    if mode not in ("trapezoid", "segment"):
        raise ValueError("quadrature mode must be 'trapezoid' or 'segment'")
    configs: list[PointConfig] = []
    weights: list[float] = []
    seg_of: list[int] = []
    jump_node = np.full(tr.n_jumps, -1, dtype=np.int64)

    for s in range(tr.n_segments):
        t0, t1 = tr.segment_bounds(s)
        if mode == "segment":
            configs.append(tr.segment_end(s))
            weights.append(t1 - t0)
            seg_of.append(s)
            if s < tr.n_jumps:
                jump_node[s] = len(configs) - 1
            continue
        times = [t0] + [ts for ts, _ in tr.path_samples[s]] + [t1]
        nodes = [tr.segment_start(s)] + [c for _, c in tr.path_samples[s]] \
            + [tr.segment_end(s)]
        times_a = np.asarray(times)
        dt = np.diff(times_a)
        w = np.zeros(len(times))
        w[:-1] += 0.5 * dt
        w[1:] += 0.5 * dt
        configs.extend(nodes)
        weights.extend(w.tolist())
        seg_of.extend([s] * len(nodes))
        if s < tr.n_jumps:
            jump_node[s] = len(configs) - 1  # segment end = pre-jump of jump s+1
    return TrajectoryQuadrature(
        configs=configs, weights=np.asarray(weights),
        segment_of=np.asarray(seg_of, dtype=np.int64), jump_node=jump_node)


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------

@dataclass
class IntensityEstimate:
    """Per-query intensity estimates with their occupation masses."""

    queries: list[PointConfig]
    values: np.ndarray
    occupation: np.ndarray
    flags: np.ndarray  # True where the 0/0 convention was applied
    target: str
    kernel: KernelSpec


def _target_weights(kinds, target: str) -> np.ndarray:
    kinds = np.asarray(kinds)
    if target == "alpha":
        return np.ones(len(kinds))
    if target == "beta":
        return (kinds == "birth").astype(float)
    if target == "delta":
        return (kinds == "death").astype(float)
    raise ValueError("target must be 'alpha', 'beta' or 'delta'")


def occupation_time(tr: Trajectory, ks: KernelSpec, x: PointConfig,
                    quad: str = "trapezoid") -> float:
    """Kernel-weighted time the trajectory spends near ``x``."""
    q = trajectory_quadrature(tr, mode=quad)
    K = kernel_matrix(ks, [x], q.configs)[0]
    return float(K @ q.weights)


def estimate_continuous(tr: Trajectory, ks: KernelSpec, queries,
                        target: str = "alpha", quad: str = "trapezoid",
                        _quadrature: TrajectoryQuadrature | None = None,
                        _K_nodes: np.ndarray | None = None) -> IntensityEstimate:
    """Continuous-time intensity estimate at each query configuration.

    The numerator is the exact sum of kernel proximities to the pre-jump
    configurations, weighted by the jump type matching ``target``; the
    denominator is the quadrature approximation of the occupation time.
    Queries with zero occupation return 0 and are flagged.
    """
    queries = list(queries)
    q = _quadrature if _quadrature is not None else trajectory_quadrature(tr, mode=quad)
    K = _K_nodes if _K_nodes is not None else kernel_matrix(ks, queries, q.configs)
    occ = K @ q.weights
    w = _target_weights([j.kind for j in tr.jumps], target)
    if tr.n_jumps:
        num = K[:, q.jump_node] @ w
    else:
        num = np.zeros(len(queries))
    flags = occ <= 0.0
    values = np.where(flags, 0.0, num / np.where(flags, 1.0, occ))
    return IntensityEstimate(queries=queries, values=values, occupation=occ,
                             flags=flags, target=target, kernel=ks)


def jump_counts_between(fs: FrameSequence, j: int) -> tuple[int, int, int]:
    """Observable jump-count approximations (total, births, deaths) for frame j.

    With identity tracks, births are identities present in frame ``j`` but
    not in ``j-1`` and deaths the converse; without tracks the counts fall
    back to the cardinality-change indicator (an under-count when several
    jumps cancel, as the approximation contract permits).
    """
    if not 1 <= j <= fs.m:
        raise IndexError(f"frame index {j} out of range 1..{fs.m}")
    prev, cur = fs.configs[j - 1], fs.configs[j]
    if fs.has_tracks and prev.ids is not None and cur.ids is not None:
        born = np.setdiff1d(cur.ids, prev.ids).size
        dead = np.setdiff1d(prev.ids, cur.ids).size
        return born + dead, born, dead
    dn = cur.n - prev.n
    return (int(dn != 0), int(dn > 0), int(dn < 0))


def frame_jump_counts(fs: FrameSequence) -> np.ndarray:
    """(m, 3) array of (D, D_beta, D_delta) for frames 1..m."""
    return np.array([jump_counts_between(fs, j) for j in range(1, fs.m + 1)])


def estimate_discrete(fs: FrameSequence, ks: KernelSpec, queries,
                      target: str = "alpha",
                      _K: np.ndarray | None = None) -> IntensityEstimate:
    """Discrete-time intensity estimate from a frame sequence.

    Ratio of jump-count-weighted to duration-weighted kernel proximities to
    the frames ``t_0 .. t_{m-1}``.
    """
    if fs.m < 1:
        raise ValueError("need at least two frames")
    queries = list(queries)
    counts = frame_jump_counts(fs)
    col = {"alpha": 0, "beta": 1, "delta": 2}[target]
    D = counts[:, col].astype(float)
    dt = np.diff(fs.times)
    base = fs.configs[:-1]
    K = _K if _K is not None else kernel_matrix(ks, queries, base)
    num = K @ D
    den = K @ dt
    flags = den <= 0.0
    values = np.where(flags, 0.0, num / np.where(flags, 1.0, den))
    return IntensityEstimate(queries=queries, values=values, occupation=den,
                             flags=flags, target=target, kernel=ks)
