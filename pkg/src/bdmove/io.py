"""File formats: frame CSVs, trajectory records, run configurations.

Frames travel as comma-delimited text with one row per detection
(``frame_index, x, y`` plus optional ``time`` and ``track_id`` columns; a
row with blank coordinates declares an empty frame).  Trajectories are
line-delimited JSON with a versioned header and are lossless on round
trip.  Run configurations are YAML documents validated against a strict
schema that rejects unknown keys.
"""

from __future__ import annotations

import csv
import json

import jsonschema
import numpy as np
import yaml

from .geometry import PointConfig, Window
from .simulate import FrameSequence, JumpEvent, Trajectory

__all__ = [
    "FramesFormatError",
    "TrajectoryFormatError",
    "ConfigError",
    "read_frames",
    "write_frames",
    "write_trajectory",
    "read_trajectory",
    "load_config",
    "validate_config",
    "write_table",
    "detections_window",
    "RUN_CONFIG_SCHEMA",
    "TRAJECTORY_FORMAT_VERSION",
]


class FramesFormatError(ValueError):
    pass


class TrajectoryFormatError(ValueError):
    pass


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Frame sequences
# ---------------------------------------------------------------------------

def read_frames(path, frame_dt: float = 1.0) -> FrameSequence:
    """Load a detection table into a FrameSequence.

    Frame indices must be contiguous from 0; track ids, when present, must
    be unique within a frame.  Times default to ``frame_index * frame_dt``
    when no time column is given.
    """
    frames: dict[int, list] = {}
    frame_times: dict[int, float] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise FramesFormatError(f"{path}: empty file")
        cols = set(reader.fieldnames)
        if not {"frame_index", "x", "y"} <= cols:
            raise FramesFormatError(
                f"{path}: header must contain frame_index, x, y (got {sorted(cols)})")
        has_time = "time" in cols
        has_tracks = "track_id" in cols
        for lineno, row in enumerate(reader, start=2):
            try:
                fi = int(row["frame_index"])
                if fi < 0:
                    raise ValueError("negative frame_index")
                frames.setdefault(fi, [])
                if has_time and row["time"] not in (None, ""):
                    t = float(row["time"])
                    if frame_times.setdefault(fi, t) != t:
                        raise ValueError("inconsistent time within a frame")
                empty = row["x"] in (None, "") and row["y"] in (None, "")
                if empty:
                    continue
                x, y = float(row["x"]), float(row["y"])
                if not (np.isfinite(x) and np.isfinite(y)):
                    raise ValueError("non-finite coordinate")
                tid = None
                if has_tracks and row["track_id"] not in (None, ""):
                    tid = int(row["track_id"])
                frames[fi].append((x, y, tid))
            except (ValueError, KeyError) as exc:
                raise FramesFormatError(f"{path}:{lineno}: {exc}") from exc

    if not frames:
        raise FramesFormatError(f"{path}: no frames")
    n = max(frames) + 1
    missing = sorted(set(range(n)) - set(frames))
    if missing:
        raise FramesFormatError(f"{path}: non-contiguous frames, missing {missing}")

    configs = []
    for fi in range(n):
        rows = frames[fi]
        pts = np.array([(x, y) for x, y, _ in rows], dtype=float).reshape(len(rows), 2)
        ids = None
        if has_tracks:
            tids = [t for _, _, t in rows]
            if any(t is None for t in tids):
                if any(t is not None for t in tids):
                    raise FramesFormatError(
                        f"{path}: frame {fi} mixes tracked and untracked rows")
            else:
                if len(set(tids)) != len(tids):
                    raise FramesFormatError(
                        f"{path}: duplicate track_id within frame {fi}")
                ids = np.asarray(tids, dtype=np.int64)
        configs.append(PointConfig(pts, ids=ids))

    tracked = has_tracks and all(c.ids is not None or c.is_empty() for c in configs)
    if tracked:
        # empty frames carry empty id arrays so downstream id-diffs work
        configs = [PointConfig(c.points, ids=np.empty(0, np.int64))
                   if c.is_empty() and c.ids is None else c for c in configs]
    if has_time and frame_times:
        if len(frame_times) != n:
            raise FramesFormatError(f"{path}: time column present but not on every frame")
        times = np.array([frame_times[i] for i in range(n)])
    else:
        times = np.arange(n, dtype=float) * frame_dt
    return FrameSequence(times=times, configs=configs, has_tracks=tracked)


def write_frames(fs: FrameSequence, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame_index", "time", "track_id", "x", "y"])
        for fi, (t, c) in enumerate(zip(fs.times, fs.configs)):
            if c.is_empty():
                w.writerow([fi, repr(float(t)), "", "", ""])
                continue
            for k in range(c.n):
                tid = "" if c.ids is None else int(c.ids[k])
                w.writerow([fi, repr(float(t)), tid,
                            repr(float(c.points[k, 0])), repr(float(c.points[k, 1]))])


def detections_window(fs: FrameSequence, pad: float = 0.01) -> Window:
    """Bounding box of all detections, padded by a fraction of its extent."""
    pts = np.vstack([c.points for c in fs.configs if not c.is_empty()])
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = np.maximum(hi - lo, 1e-12)
    return Window(lo - pad * span, hi + pad * span)


# ---------------------------------------------------------------------------
# Trajectory records
# ---------------------------------------------------------------------------

TRAJECTORY_FORMAT_VERSION = 1


def _enc_config(c: PointConfig) -> dict:
    return {"points": c.points.tolist(),
            "ids": None if c.ids is None else c.ids.tolist()}


def _dec_config(d: dict) -> PointConfig:
    pts = np.asarray(d["points"], dtype=float)
    if pts.size == 0:
        pts = np.empty((0, 2))
    ids = None if d["ids"] is None else np.asarray(d["ids"], dtype=np.int64)
    return PointConfig(pts, ids=ids)


def write_trajectory(tr: Trajectory, path):
    """Line-delimited JSON dump; floats round-trip bit-exactly."""
    with open(path, "w") as fh:
        header = {"format": "bdmove-trajectory",
                  "version": TRAJECTORY_FORMAT_VERSION,
                  "horizon": tr.horizon, "n_jumps": tr.n_jumps,
                  "seed_info": tr.seed_info}
        fh.write(json.dumps(header) + "\n")
        fh.write(json.dumps({"type": "initial",
                             "config": _enc_config(tr.initial_config)}) + "\n")
        for i, j in enumerate(tr.jumps):
            fh.write(json.dumps({
                "type": "jump", "index": i, "time": j.time, "kind": j.kind,
                "pre": _enc_config(j.pre_config),
                "post": _enc_config(j.post_config),
                "changed_point": j.changed_point.tolist(),
                "changed_id": int(j.changed_id)}) + "\n")
        for s, samples in enumerate(tr.path_samples):
            fh.write(json.dumps({
                "type": "samples", "segment": s,
                "samples": [[t, _enc_config(c)] for t, c in samples]}) + "\n")
        fh.write(json.dumps({"type": "final",
                             "config": _enc_config(tr.final_config)}) + "\n")


def read_trajectory(path) -> Trajectory:
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise TrajectoryFormatError(f"{path}: empty file")
    header = json.loads(lines[0])
    if header.get("format") != "bdmove-trajectory":
        raise TrajectoryFormatError(f"{path}: not a trajectory file")
    if header.get("version") != TRAJECTORY_FORMAT_VERSION:
        raise TrajectoryFormatError(
            f"{path}: unsupported format version {header.get('version')} "
            f"(expected {TRAJECTORY_FORMAT_VERSION})")
    initial = final = None
    jumps: dict[int, JumpEvent] = {}
    samples: dict[int, list] = {}
    for ln in lines[1:]:
        rec = json.loads(ln)
        kind = rec.get("type")
        if kind == "initial":
            initial = _dec_config(rec["config"])
        elif kind == "jump":
            jumps[rec["index"]] = JumpEvent(
                time=rec["time"], kind=rec["kind"],
                pre_config=_dec_config(rec["pre"]),
                post_config=_dec_config(rec["post"]),
                changed_point=np.asarray(rec["changed_point"], dtype=float),
                changed_id=int(rec["changed_id"]))
        elif kind == "samples":
            samples[rec["segment"]] = [(t, _dec_config(c))
                                       for t, c in rec["samples"]]
        elif kind == "final":
            final = _dec_config(rec["config"])
        else:
            raise TrajectoryFormatError(f"{path}: unknown record type {kind!r}")
    n = header["n_jumps"]
    if initial is None or final is None or sorted(jumps) != list(range(n)) \
            or sorted(samples) != list(range(n + 1)):
        raise TrajectoryFormatError(f"{path}: truncated or incomplete file")
    return Trajectory(horizon=header["horizon"], initial_config=initial,
                      jumps=[jumps[i] for i in range(n)],
                      path_samples=[samples[i] for i in range(n + 1)],
                      final_config=final, seed_info=header.get("seed_info", {}))


# ---------------------------------------------------------------------------
# Run configurations
# ---------------------------------------------------------------------------

RUN_CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "preset": {"type": "string", "enum": ["sim41", "sim42"]},
        "T": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "seeds": {"type": "integer", "minimum": 1},
        "sampler": {"type": "string",
                    "enum": ["auto", "exact", "thinning", "grid"]},
        "path_dt": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "grid_dt": {"type": "number", "exclusiveMinimum": 0},
        "m": {"type": "integer", "minimum": 1},
        "m_values": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "frame_dt": {"type": "number", "exclusiveMinimum": 0},
        "strategy": {"type": "string"},
        "strategies": {"type": "array", "items": {"type": "string"}},
        "target": {"type": "string", "enum": ["alpha", "beta", "delta"]},
        "bandwidth": {"type": "number", "exclusiveMinimum": 0},
        "kappa": {"type": "number", "exclusiveMinimum": 0},
        "grid": {"type": "array",
                 "items": {"type": "number", "exclusiveMinimum": 0}},
        "n_queries": {"type": "integer", "minimum": 1},
        "quad": {"type": "string", "enum": ["trapezoid", "segment"]},
        "out": {"type": "string"},
    },
}


def validate_config(cfg: dict) -> dict:
    try:
        jsonschema.validate(cfg, RUN_CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid run config: {exc.message}") from exc
    return cfg


def load_config(path) -> dict:
    with open(path) as fh:
        cfg = yaml.safe_load(fh)
    if cfg is None:
        cfg = {}
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    return validate_config(cfg)


def write_table(rows: list[dict], path, fieldnames=None):
    """Write homogeneous dict rows as CSV."""
    if fieldnames is None:
        fieldnames = list(rows[0].keys()) if rows else []
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fieldnames)
        w.writeheader()
        for r in rows:
            w.writerow(r)
