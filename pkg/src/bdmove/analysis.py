"""Replication harness: MSE benchmarks, scatter exports, cross-correlation.

``run_mse_experiment`` simulates a preset model, selects bandwidths by
cross-validation for each kernel strategy, estimates the target intensity
at query configurations regularly sequenced among the jump times, and
aggregates squared errors against the preset's true intensity.  ``ccf``
computes the empirical cross-correlation between two frame-indexed series.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .bandwidth import ContinuousCVCache, DiscreteCVCache, select_bandwidth
from .estimate import (
    IntensityEstimate,
    KernelSpec,
    estimate_continuous,
    estimate_discrete,
    feature_cardinality,
    feature_maxarea,
    kernel_matrix,
)
from .model import ModelSpec, get_preset
from .simulate import SimOptions, Trajectory, discretize, simulate

__all__ = [
    "MseStrategyResult",
    "MseReport",
    "SeriesPair",
    "STRATEGIES",
    "strategy_kernel",
    "true_intensity",
    "run_mse_experiment",
    "ccf",
    "scatter_export",
]

STRATEGIES = ("hausdorff", "matching", "ex3i", "ex3ii",
              "feature:cardinality", "feature:maxarea")


def strategy_kernel(name: str, window: geometry.Window | None = None,
                    kappa: float = math.sqrt(2.0)) -> KernelSpec:
    """Kernel spec for a named estimation strategy.

    ``ex3i`` is the indicator of equal cardinality; ``ex3ii`` the Gaussian
    kernel of the cardinality distance; the remaining names select the
    corresponding configuration distance.
    """
    if name == "ex3i":
        return KernelSpec(mode="indicator")
    if name == "ex3ii":
        return KernelSpec(distance="cardinality")
    if name == "hausdorff":
        return KernelSpec(distance="hausdorff")
    if name == "matching":
        return KernelSpec(distance="matching", kappa=kappa)
    if name == "feature:cardinality":
        return KernelSpec(distance="feature", feature=feature_cardinality())
    if name == "feature:maxarea":
        if window is None:
            raise ValueError("feature:maxarea requires an observation window")
        return KernelSpec(distance="feature", feature=feature_maxarea(window))
    raise ValueError(f"unknown strategy {name!r}")


def true_intensity(model: ModelSpec, target: str, x) -> float:
    if target == "alpha":
        return model.alpha(x)
    if target == "beta":
        return model.birth(x)
    if target == "delta":
        return model.death(x)
    raise ValueError("target must be 'alpha', 'beta' or 'delta'")


@dataclass
class MseStrategyResult:
    strategy: str
    mse: float
    sd: float  # standard deviation of the per-query squared errors
    na_count: int
    h_opt: float | None


@dataclass
class MseReport:
    preset: str
    seed: int
    T: float
    m: int | None  # None for continuous observation
    target: str
    n_queries: int
    results: dict[str, MseStrategyResult] = field(default_factory=dict)


def _query_jump_indices(n_jumps: int, n_queries: int) -> np.ndarray:
    """1-based jump indices, evenly sequenced including both ends."""
    if n_jumps < 1:
        raise ValueError("trajectory has no jumps to build queries from")
    return np.round(np.linspace(1, n_jumps, n_queries)).astype(int)


def _mse(values: np.ndarray, truth: np.ndarray, flags: np.ndarray):
    ok = ~flags
    na = int(flags.sum())
    if not ok.any():
        return float("nan"), float("nan"), na
    sq = (values[ok] - truth[ok]) ** 2
    return float(sq.mean()), float(sq.std()), na


def run_mse_experiment(preset: str, T: float, m_values=(), strategies=STRATEGIES,
                       n_queries: int = 100, seeds=range(10), target: str = "alpha",
                       quad: str = "segment", sim_opts: SimOptions | None = None,
                       grid=None, _truth_as_estimate: bool = False) -> list[MseReport]:
    """One MseReport per (seed, continuous / each m in ``m_values``).

    The default segment quadrature stores no interior path samples and
    evaluates path integrals at segment ends, which is exact for identity
    moves and lets all CV candidates share one distance matrix.
    """
    model = get_preset(preset)
    opts = sim_opts if sim_opts is not None else SimOptions(path_dt=None)
    reports: list[MseReport] = []
    for seed in seeds:
        tr = simulate(model, T=T, seed=seed, opts=opts)
        jidx = _query_jump_indices(tr.n_jumps, n_queries)
        queries = [tr.jumps[j - 1].post_config for j in jidx]
        truth = np.array([true_intensity(model, target, x) for x in queries])

        rep = MseReport(preset=preset, seed=seed, T=T, m=None, target=target,
                        n_queries=n_queries)
        for name in strategies:
            ks = strategy_kernel(name, model.window)
            rep.results[name] = _run_continuous_strategy(
                tr, model, ks, jidx, queries, truth, target, quad, grid,
                _truth_as_estimate)
        reports.append(rep)

        for m in m_values:
            times = np.linspace(0.0, T, int(m) + 1)
            fs = discretize(tr, times)
            drep = MseReport(preset=preset, seed=seed, T=T, m=int(m),
                             target=target, n_queries=n_queries)
            for name in strategies:
                ks = strategy_kernel(name, model.window)
                drep.results[name] = _run_discrete_strategy(
                    fs, ks, queries, truth, target, grid, _truth_as_estimate)
            reports.append(drep)
    return reports


def _run_continuous_strategy(tr: Trajectory, model: ModelSpec, ks: KernelSpec,
                             jidx, queries, truth, target, quad, grid,
                             truth_as_estimate) -> MseStrategyResult:
    h_opt = None
    cache = ContinuousCVCache.build(tr, ks, quad=quad)
    if ks.mode == "distance":
        cv = select_bandwidth(tr, ks, target=target, grid=grid, quad=quad,
                              cache=cache)
        h_opt = cv.h_opt
        ks = ks.with_bandwidth(h_opt)

    # With an identity move and segment quadrature, the post-jump query
    # configurations coincide with quadrature nodes, so the CV distance
    # matrix already contains every query row.
    if quad == "segment" and model.move.label == "identity":
        K_full = kernel_matrix(ks, cache.quadrature.configs, dmat=cache.dmat)
        est = estimate_continuous(tr, ks, queries, target=target,
                                  _quadrature=cache.quadrature,
                                  _K_nodes=K_full[np.asarray(jidx)])
    else:
        est = estimate_continuous(tr, ks, queries, target=target,
                                  _quadrature=cache.quadrature)
    values = truth if truth_as_estimate else est.values
    mse, sd, na = _mse(np.asarray(values), truth,
                       np.zeros(len(truth), bool) if truth_as_estimate else est.flags)
    return MseStrategyResult(strategy=_strategy_name(ks), mse=mse, sd=sd,
                             na_count=na, h_opt=h_opt)


def _run_discrete_strategy(fs, ks: KernelSpec, queries, truth, target, grid,
                           truth_as_estimate) -> MseStrategyResult:
    h_opt = None
    if ks.mode == "distance":
        cache = DiscreteCVCache.build(fs, ks)
        cv = select_bandwidth(fs, ks, target=target, grid=grid, cache=cache)
        h_opt = cv.h_opt
        ks = ks.with_bandwidth(h_opt)
    est = estimate_discrete(fs, ks, queries, target=target)
    values = truth if truth_as_estimate else est.values
    mse, sd, na = _mse(np.asarray(values), truth,
                       np.zeros(len(truth), bool) if truth_as_estimate else est.flags)
    return MseStrategyResult(strategy=_strategy_name(ks), mse=mse, sd=sd,
                             na_count=na, h_opt=h_opt)


def _strategy_name(ks: KernelSpec) -> str:
    if ks.mode == "indicator":
        return "ex3i"
    if ks.distance == "cardinality":
        return "ex3ii"
    if ks.distance == "feature":
        return f"feature:{ks.feature.name}"
    return ks.distance


# ---------------------------------------------------------------------------
# Cross-correlation between frame-indexed series
# ---------------------------------------------------------------------------

@dataclass
class SeriesPair:
    """Two equal-length series on a common frame grid.

    Series ``a`` is the reference: a positive lag ``h`` correlates ``a`` at
    frame ``j`` with ``b`` at frame ``j + h``.
    """

    a: np.ndarray
    b: np.ndarray
    times: np.ndarray | None = None

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.a.ndim != 1 or self.a.shape != self.b.shape:
            raise ValueError("series must be equal-length 1-d arrays")
        if len(self.a) < 2:
            raise ValueError("series must have length >= 2")
        if self.times is not None:
            self.times = np.asarray(self.times, dtype=float)
            if self.times.shape != self.a.shape:
                raise ValueError("times must align with the series")


def _pearson(u: np.ndarray, v: np.ndarray) -> float:
    du, dv = u - u.mean(), v - v.mean()
    su, sv = np.sqrt((du * du).sum()), np.sqrt((dv * dv).sum())
    if su == 0.0 or sv == 0.0:
        return float("nan")
    return float((du * dv).sum() / (su * sv))


def ccf(p: SeriesPair, max_lag: int) -> list[tuple[int, float]]:
    """Empirical cross-correlation at signed lags -max_lag..max_lag.

    Lag ``h`` pairs ``a[j]`` with ``b[j+h]`` over the overlapping index
    range; a constant series on the overlap yields NaN at that lag.
    """
    n = len(p.a)
    if not 0 <= max_lag < n - 1:
        raise ValueError("max_lag must satisfy 0 <= max_lag < len - 1")
    out = []
    for h in range(-max_lag, max_lag + 1):
        if h >= 0:
            u, v = p.a[: n - h], p.b[h:]
        else:
            u, v = p.a[-h:], p.b[: n + h]
        out.append((h, _pearson(u, v)))
    return out


# ---------------------------------------------------------------------------
# Scatter export
# ---------------------------------------------------------------------------

def scatter_export(est: IntensityEstimate, against: str,
                   window: geometry.Window | None = None,
                   times=None, truth=None) -> list[dict]:
    """Per-query rows (abscissa, estimate, occupation, truth) for plotting.

    ``against`` selects the abscissa: a query cardinality, its largest
    Delaunay cell area (needs ``window``), its largest nearest-neighbour
    distance, or the query time (needs ``times``).  Flagged queries are
    excluded.
    """
    if against == "cardinality":
        absc = [float(x.n) for x in est.queries]
    elif against == "maxarea":
        if window is None:
            raise ValueError("maxarea abscissa requires a window")
        fm = feature_maxarea(window)
        absc = [float(fm(x)[0]) for x in est.queries]
    elif against == "max_nn":
        absc = [geometry.max_nn_distance(x) for x in est.queries]
    elif against == "time":
        if times is None:
            raise ValueError("time abscissa requires query times")
        absc = [float(t) for t in times]
    else:
        raise ValueError(f"unknown abscissa {against!r}")

    rows = []
    for i, x in enumerate(est.queries):
        if est.flags[i]:
            continue
        row = {"query_index": i, "n": x.n, "abscissa": absc[i],
               "estimate": float(est.values[i]),
               "occupation": float(est.occupation[i]),
               "target": est.target}
        if truth is not None:
            row["truth"] = float(truth[i])
        rows.append(row)
    return rows
