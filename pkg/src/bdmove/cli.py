"""Command-line surface for simulation, estimation and benchmarking.

Subcommands: simulate, discretize, estimate, cv, bench, ccf, validate.
All randomness is controlled by an explicit --seed; options may come from
a YAML run config (--config) with command-line flags taking precedence.
"""

from __future__ import annotations

import argparse
import csv
import sys

import numpy as np

from . import io as bio
from .analysis import (
    ccf as compute_ccf,
    run_mse_experiment,
    scatter_export,
    SeriesPair,
    strategy_kernel,
    STRATEGIES,
)
from .bandwidth import select_bandwidth
from .estimate import estimate_continuous, estimate_discrete
from .model import get_preset, validate_model, PRESETS
from .simulate import FrameSequence, SimOptions, Trajectory, discretize, simulate

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="bdmove",
        description="Birth-death-move simulation and intensity estimation")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="YAML run config")
        sp.add_argument("--seed", type=int, help="random seed")
        sp.add_argument("--out", help="output path")

    sp = sub.add_parser("simulate", help="simulate a preset model")
    common(sp)
    sp.add_argument("--preset", choices=sorted(PRESETS))
    sp.add_argument("--T", type=float, help="time horizon")
    sp.add_argument("--sampler", choices=["auto", "exact", "thinning", "grid"])
    sp.add_argument("--path-dt", type=float, dest="path_dt")

    sp = sub.add_parser("discretize", help="sample a trajectory on a frame grid")
    common(sp)
    sp.add_argument("--in", dest="infile", required=True, help="trajectory file")
    sp.add_argument("--m", type=int, help="number of inter-frame intervals")

    sp = sub.add_parser("estimate", help="estimate an intensity")
    common(sp)
    sp.add_argument("--in", dest="infile", required=True,
                    help="trajectory (.json) or frames (.csv) file")
    sp.add_argument("--preset", choices=sorted(PRESETS),
                    help="model providing window and truth, if any")
    sp.add_argument("--strategy", choices=STRATEGIES)
    sp.add_argument("--target", choices=["alpha", "beta", "delta"])
    sp.add_argument("--bandwidth", type=float,
                    help="fixed bandwidth (default: cross-validated)")
    sp.add_argument("--kappa", type=float)
    sp.add_argument("--quad", choices=["trapezoid", "segment"])
    sp.add_argument("--n-queries", type=int, dest="n_queries")
    sp.add_argument("--frame-dt", type=float, dest="frame_dt")

    sp = sub.add_parser("cv", help="cross-validated bandwidth selection")
    common(sp)
    sp.add_argument("--in", dest="infile", required=True)
    sp.add_argument("--preset", choices=sorted(PRESETS))
    sp.add_argument("--strategy", choices=STRATEGIES)
    sp.add_argument("--target", choices=["alpha", "beta", "delta"])
    sp.add_argument("--kappa", type=float)
    sp.add_argument("--quad", choices=["trapezoid", "segment"])
    sp.add_argument("--grid", help="comma-separated candidate bandwidths")
    sp.add_argument("--frame-dt", type=float, dest="frame_dt")

    sp = sub.add_parser("bench", help="MSE benchmark across seeds")
    common(sp)
    sp.add_argument("--preset", choices=sorted(PRESETS))
    sp.add_argument("--T", type=float)
    sp.add_argument("--seeds", type=int, help="number of replications")
    sp.add_argument("--m", type=int, action="append", dest="m_values",
                    help="frame counts for discrete rows (repeatable)")
    sp.add_argument("--strategies", help="comma-separated strategy names")
    sp.add_argument("--target", choices=["alpha", "beta", "delta"])
    sp.add_argument("--n-queries", type=int, dest="n_queries")
    sp.add_argument("--quad", choices=["trapezoid", "segment"])

    sp = sub.add_parser("ccf", help="cross-correlate two estimate tables")
    common(sp)
    sp.add_argument("--a", required=True, help="reference series table")
    sp.add_argument("--b", required=True, help="lagged series table")
    sp.add_argument("--max-lag", type=int, dest="max_lag", default=20)
    sp.add_argument("--column", default="estimate")

    sp = sub.add_parser("validate", help="check a model's declared bounds")
    common(sp)
    sp.add_argument("--preset", choices=sorted(PRESETS))
    return p


def _settings(args) -> dict:
    """Config-file values overridden by any explicitly set flags."""
    cfg = bio.load_config(args.config) if getattr(args, "config", None) else {}
    for k, v in vars(args).items():
        if k in ("command", "config") or v is None:
            continue
        cfg[k] = v
    return cfg


def _require(cfg: dict, key: str):
    if key not in cfg or cfg[key] is None:
        raise SystemExit(f"error: missing required option --{key.replace('_', '-')}")
    return cfg[key]


def _load_input(path, frame_dt: float):
    if str(path).endswith(".csv"):
        return bio.read_frames(path, frame_dt=frame_dt)
    return bio.read_trajectory(path)


def _kernel_from(cfg, data, preset_name):
    name = cfg.get("strategy", "matching")
    window = None
    kappa = cfg.get("kappa")
    if preset_name:
        window = get_preset(preset_name).window
    elif isinstance(data, FrameSequence):
        window = bio.detections_window(data)
    if kappa is None and window is not None:
        kappa = window.diameter
    ks = strategy_kernel(name, window) if kappa is None \
        else strategy_kernel(name, window, kappa=kappa)
    return ks, name


def _cmd_simulate(cfg) -> int:
    preset = _require(cfg, "preset")
    T = _require(cfg, "T")
    seed = cfg.get("seed", 0)
    opts = SimOptions(sampler=cfg.get("sampler", "auto"),
                      path_dt=cfg.get("path_dt", SimOptions.path_dt),
                      grid_dt=cfg.get("grid_dt", SimOptions.grid_dt))
    tr = simulate(get_preset(preset), T=T, seed=seed, opts=opts)
    out = cfg.get("out", f"{preset}_seed{seed}.json")
    bio.write_trajectory(tr, out)
    print(f"simulated {preset}: T={T} seed={seed} jumps={tr.n_jumps} -> {out}")
    return 0


def _cmd_discretize(cfg) -> int:
    tr = bio.read_trajectory(cfg["infile"])
    m = _require(cfg, "m")
    fs = discretize(tr, np.linspace(0.0, tr.horizon, m + 1))
    out = cfg.get("out", "frames.csv")
    bio.write_frames(fs, out)
    print(f"discretized {cfg['infile']}: m={m} -> {out}")
    return 0


def _estimate_queries(data, cfg):
    n_q = cfg.get("n_queries", 100)
    if isinstance(data, Trajectory):
        if data.n_jumps < 1:
            raise SystemExit("error: trajectory has no jumps")
        idx = np.round(np.linspace(1, data.n_jumps, n_q)).astype(int)
        return [data.jumps[j - 1].post_config for j in idx], \
            np.array([data.jumps[j - 1].time for j in idx])
    idx = np.round(np.linspace(0, data.m, min(n_q, data.m + 1))).astype(int)
    return [data.configs[j] for j in idx], data.times[idx]


def _cmd_estimate(cfg) -> int:
    data = _load_input(cfg["infile"], cfg.get("frame_dt", 1.0))
    target = cfg.get("target", "alpha")
    quad = cfg.get("quad", "trapezoid")
    ks, name = _kernel_from(cfg, data, cfg.get("preset"))
    if isinstance(data, FrameSequence) and target != "alpha" and not data.has_tracks:
        print("warning: frames carry no tracks; birth/death counts fall back "
              "to the cardinality-change indicator", file=sys.stderr)
    if ks.mode == "distance":
        h = cfg.get("bandwidth")
        if h is None:
            h = select_bandwidth(data, ks, target=target, quad=quad).h_opt
            print(f"cross-validated bandwidth: {h:.6g}")
        ks = ks.with_bandwidth(h)
    queries, times = _estimate_queries(data, cfg)
    if isinstance(data, Trajectory):
        est = estimate_continuous(data, ks, queries, target=target, quad=quad)
    else:
        est = estimate_discrete(data, ks, queries, target=target)
    rows = scatter_export(est, "time", times=times)
    out = cfg.get("out", "estimate.csv")
    bio.write_table(rows, out)
    print(f"estimated {target} with {name} at {len(queries)} queries "
          f"({int(est.flags.sum())} flagged) -> {out}")
    return 0


def _cmd_cv(cfg) -> int:
    data = _load_input(cfg["infile"], cfg.get("frame_dt", 1.0))
    target = cfg.get("target", "alpha")
    ks, name = _kernel_from(cfg, data, cfg.get("preset"))
    grid = cfg.get("grid")
    if isinstance(grid, str):
        grid = [float(g) for g in grid.split(",")]
    res = select_bandwidth(data, ks, target=target, grid=grid,
                           quad=cfg.get("quad", "trapezoid"))
    out = cfg.get("out", "cv.csv")
    bio.write_table([{"bandwidth": h, "objective": o}
                     for h, o in zip(res.grid, res.objectives)], out)
    print(f"cv {name}/{target}: h_opt={res.h_opt:.6g} "
          f"({res.n_invalid} invalid candidates) -> {out}")
    return 0


def _cmd_bench(cfg) -> int:
    preset = _require(cfg, "preset")
    T = _require(cfg, "T")
    n_seeds = cfg.get("seeds", 10)
    strategies = cfg.get("strategies", "hausdorff,matching,ex3i,ex3ii")
    if isinstance(strategies, str):
        strategies = [s.strip() for s in strategies.split(",")]
    reports = run_mse_experiment(
        preset, T=T, m_values=cfg.get("m_values") or (),
        strategies=strategies, n_queries=cfg.get("n_queries", 100),
        seeds=range(n_seeds), target=cfg.get("target", "alpha"),
        quad=cfg.get("quad", "segment"))
    rows = []
    for rep in reports:
        for name, r in rep.results.items():
            rows.append({"preset": rep.preset, "seed": rep.seed, "T": rep.T,
                         "m": "" if rep.m is None else rep.m,
                         "target": rep.target, "strategy": name,
                         "mse": r.mse, "sd": r.sd, "na_count": r.na_count,
                         "h_opt": "" if r.h_opt is None else r.h_opt})
    out = cfg.get("out", "bench.csv")
    bio.write_table(rows, out)
    print(f"bench {preset}: {n_seeds} seeds x {len(strategies)} strategies -> {out}")
    return 0


def _read_series(path, column):
    with open(path, newline="") as fh:
        rows = [r for r in csv.DictReader(fh)]
    if not rows or column not in rows[0]:
        raise SystemExit(f"error: {path} has no column {column!r}")
    return np.array([float(r[column]) for r in rows])


def _cmd_ccf(cfg) -> int:
    a = _read_series(cfg["a"], cfg.get("column", "estimate"))
    b = _read_series(cfg["b"], cfg.get("column", "estimate"))
    if len(a) != len(b):
        raise SystemExit("error: series lengths differ")
    res = compute_ccf(SeriesPair(a=a, b=b), cfg.get("max_lag", 20))
    out = cfg.get("out", "ccf.csv")
    with open(out, "w", newline="") as fh:
        fh.write("# positive lag h pairs reference a[j] with b[j+h]\n")
        w = csv.writer(fh)
        w.writerow(["lag", "correlation"])
        for lag, c in res:
            w.writerow([lag, "NA" if np.isnan(c) else repr(c)])
    print(f"ccf over lags -{cfg.get('max_lag', 20)}..{cfg.get('max_lag', 20)} -> {out}")
    return 0


def _cmd_validate(cfg) -> int:
    preset = _require(cfg, "preset")
    report = validate_model(get_preset(preset), seed=cfg.get("seed", 0))
    if report.ok:
        print(f"{preset}: ok ({report.probes} probes)")
        return 0
    for v in report.violations:
        print(f"{preset}: {v}", file=sys.stderr)
    return 1


_COMMANDS = {
    "simulate": _cmd_simulate,
    "discretize": _cmd_discretize,
    "estimate": _cmd_estimate,
    "cv": _cmd_cv,
    "bench": _cmd_bench,
    "ccf": _cmd_ccf,
    "validate": _cmd_validate,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _settings(args)
        return _COMMANDS[args.command](cfg)
    except SystemExit:
        raise
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
