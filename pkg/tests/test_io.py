import json

import numpy as np
import pytest

from bdmove.estimate import jump_counts_between
from bdmove.geometry import PointConfig
from bdmove.io import (
    ConfigError,
    FramesFormatError,
    TRAJECTORY_FORMAT_VERSION,
    TrajectoryFormatError,
    detections_window,
    load_config,
    read_frames,
    read_trajectory,
    validate_config,
    write_frames,
    write_table,
    write_trajectory,
)
from bdmove.model import sim41_model
from bdmove.simulate import FrameSequence, SimOptions, simulate


def write_text(path, text):
    path.write_text(text)
    return str(path)


# ---------------------------------------------------------------------------
# Frame files
# ---------------------------------------------------------------------------

class TestReadFrames:
    def test_tracked_two_frame_example(self, tmp_path):
        p = write_text(tmp_path / "f.csv", (
            "frame_index,track_id,x,y\n"
            "0,1,0.1,0.1\n"
            "0,2,0.2,0.2\n"
            "1,2,0.2,0.2\n"
            "1,3,0.3,0.3\n"))
        fs = read_frames(p)
        assert fs.has_tracks
        assert fs.m == 1
        assert jump_counts_between(fs, 1) == (2, 1, 1)
        assert np.array_equal(fs.times, [0.0, 1.0])

    def test_frame_dt_and_time_column(self, tmp_path):
        p = write_text(tmp_path / "f.csv", (
            "frame_index,x,y\n0,0.1,0.1\n1,0.2,0.2\n"))
        assert np.array_equal(read_frames(p, frame_dt=0.5).times, [0.0, 0.5])
        q = write_text(tmp_path / "g.csv", (
            "frame_index,time,x,y\n0,0.0,0.1,0.1\n1,0.7,0.2,0.2\n"))
        assert np.array_equal(read_frames(q).times, [0.0, 0.7])

    def test_untracked_file(self, tmp_path):
        p = write_text(tmp_path / "f.csv", (
            "frame_index,x,y\n0,0.1,0.1\n1,0.2,0.2\n1,0.3,0.3\n"))
        fs = read_frames(p)
        assert not fs.has_tracks
        assert fs.configs[1].n == 2
        assert fs.configs[1].ids is None

    def test_empty_frame_row(self, tmp_path):
        p = write_text(tmp_path / "f.csv", (
            "frame_index,track_id,x,y\n"
            "0,1,0.1,0.1\n"
            "1,,,\n"
            "2,1,0.1,0.1\n"))
        fs = read_frames(p)
        assert fs.configs[1].is_empty()
        # tracked sequences carry empty id arrays on empty frames
        assert fs.has_tracks and fs.configs[1].ids is not None

    def test_missing_columns(self, tmp_path):
        p = write_text(tmp_path / "f.csv", "frame_index,x\n0,0.1\n")
        with pytest.raises(FramesFormatError, match="header"):
            read_frames(p)

    def test_non_contiguous_frames(self, tmp_path):
        p = write_text(tmp_path / "f.csv", (
            "frame_index,x,y\n0,0.1,0.1\n2,0.2,0.2\n"))
        with pytest.raises(FramesFormatError, match=r"missing \[1\]"):
            read_frames(p)

    def test_duplicate_track_id(self, tmp_path):
        p = write_text(tmp_path / "f.csv", (
            "frame_index,track_id,x,y\n0,1,0.1,0.1\n0,1,0.2,0.2\n"))
        with pytest.raises(FramesFormatError, match="duplicate track_id"):
            read_frames(p)

    def test_malformed_row_reports_line(self, tmp_path):
        p = write_text(tmp_path / "f.csv", (
            "frame_index,x,y\n0,0.1,0.1\n0,oops,0.2\n"))
        with pytest.raises(FramesFormatError, match=":3:"):
            read_frames(p)

    def test_non_finite_coordinate(self, tmp_path):
        p = write_text(tmp_path / "f.csv", "frame_index,x,y\n0,inf,0.2\n")
        with pytest.raises(FramesFormatError, match="non-finite"):
            read_frames(p)

    def test_mixed_tracked_untracked_frame(self, tmp_path):
        p = write_text(tmp_path / "f.csv", (
            "frame_index,track_id,x,y\n0,1,0.1,0.1\n0,,0.2,0.2\n"))
        with pytest.raises(FramesFormatError, match="mixes"):
            read_frames(p)

    def test_inconsistent_frame_time(self, tmp_path):
        p = write_text(tmp_path / "f.csv", (
            "frame_index,time,x,y\n0,0.0,0.1,0.1\n0,0.5,0.2,0.2\n"))
        with pytest.raises(FramesFormatError, match=":3:"):
            read_frames(p)

    def test_empty_file(self, tmp_path):
        p = write_text(tmp_path / "f.csv", "")
        with pytest.raises(FramesFormatError):
            read_frames(p)


class TestWriteFrames:
    def test_round_trip(self, tmp_path):
        a = PointConfig([[0.1, 0.2], [0.3, 0.4]], ids=np.array([5, 7]))
        b = PointConfig.empty()
        b = PointConfig(b.points, ids=np.empty(0, np.int64))
        c = PointConfig([[0.5, 0.6]], ids=np.array([7]))
        fs = FrameSequence(times=[0.0, 0.3, 1.1], configs=[a, b, c],
                           has_tracks=True)
        p = tmp_path / "out.csv"
        write_frames(fs, p)
        back = read_frames(str(p))
        assert back.has_tracks
        assert np.array_equal(back.times, fs.times)
        for orig, got in zip(fs.configs, back.configs):
            assert np.array_equal(orig.points, got.points)
            assert np.array_equal(orig.ids, got.ids)

    def test_detections_window_padding(self):
        a = PointConfig([[0.0, 0.0], [2.0, 1.0]])
        fs = FrameSequence(times=[0.0, 1.0], configs=[a, a], has_tracks=False)
        w = detections_window(fs, pad=0.01)
        assert np.allclose(w.lower, [-0.02, -0.01])
        assert np.allclose(w.upper, [2.02, 1.01])


# ---------------------------------------------------------------------------
# Trajectory records
# ---------------------------------------------------------------------------

def assert_trajectories_equal(a, b):
    assert a.horizon == b.horizon
    assert a.n_jumps == b.n_jumps
    assert a.seed_info == b.seed_info
    assert np.array_equal(a.initial_config.points, b.initial_config.points)
    assert np.array_equal(a.initial_config.ids, b.initial_config.ids)
    assert np.array_equal(a.final_config.points, b.final_config.points)
    assert np.array_equal(a.final_config.ids, b.final_config.ids)
    for ja, jb in zip(a.jumps, b.jumps):
        assert ja.time == jb.time and ja.kind == jb.kind
        assert ja.changed_id == jb.changed_id
        assert np.array_equal(ja.changed_point, jb.changed_point)
        for ca, cb in ((ja.pre_config, jb.pre_config),
                       (ja.post_config, jb.post_config)):
            assert np.array_equal(ca.points, cb.points)
            assert np.array_equal(ca.ids, cb.ids)
    assert len(a.path_samples) == len(b.path_samples)
    for sa, sb in zip(a.path_samples, b.path_samples):
        assert len(sa) == len(sb)
        for (ta, ca), (tb, cb) in zip(sa, sb):
            assert ta == tb
            assert np.array_equal(ca.points, cb.points)
            assert np.array_equal(ca.ids, cb.ids)


class TestTrajectoryRoundTrip:
    def test_round_trip_with_path_samples(self, tmp_path):
        tr = simulate(sim41_model(), T=10.0, seed=0, opts=SimOptions(path_dt=0.25))
        p = tmp_path / "tr.json"
        write_trajectory(tr, p)
        assert_trajectories_equal(tr, read_trajectory(str(p)))

    def test_round_trip_thousand_jumps(self, tmp_path):
        tr = simulate(sim41_model(), T=250.0, seed=4,
                      opts=SimOptions(path_dt=None))
        assert tr.n_jumps >= 1000
        p = tmp_path / "big.json"
        write_trajectory(tr, p)
        assert_trajectories_equal(tr, read_trajectory(str(p)))

    def test_round_trip_empty_trajectory(self, tmp_path):
        m = sim41_model()
        tr = simulate(m, T=1e-6, seed=2, opts=SimOptions(path_dt=None))
        assert tr.n_jumps == 0
        p = tmp_path / "empty.json"
        write_trajectory(tr, p)
        assert_trajectories_equal(tr, read_trajectory(str(p)))

    def test_version_mismatch(self, tmp_path):
        tr = simulate(sim41_model(), T=1.0, seed=3, opts=SimOptions(path_dt=None))
        p = tmp_path / "tr.json"
        write_trajectory(tr, p)
        lines = p.read_text().splitlines()
        header = json.loads(lines[0])
        header["version"] = TRAJECTORY_FORMAT_VERSION + 1
        lines[0] = json.dumps(header)
        p.write_text("\n".join(lines) + "\n")
        with pytest.raises(TrajectoryFormatError, match="version"):
            read_trajectory(str(p))

    def test_truncated_file(self, tmp_path):
        tr = simulate(sim41_model(), T=5.0, seed=4, opts=SimOptions(path_dt=None))
        p = tmp_path / "tr.json"
        write_trajectory(tr, p)
        lines = p.read_text().splitlines()
        p.write_text("\n".join(lines[:-1]) + "\n")
        with pytest.raises(TrajectoryFormatError, match="truncated"):
            read_trajectory(str(p))

    def test_not_a_trajectory_file(self, tmp_path):
        p = tmp_path / "x.json"
        p.write_text('{"format": "something-else"}\n')
        with pytest.raises(TrajectoryFormatError):
            read_trajectory(str(p))


# ---------------------------------------------------------------------------
# Run configurations and tables
# ---------------------------------------------------------------------------

class TestRunConfig:
    def test_valid_config(self):
        cfg = {"preset": "sim41", "T": 200.0, "seed": 7,
               "strategies": ["ex3i", "ex3ii"], "quad": "segment"}
        assert validate_config(cfg) is cfg

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            validate_config({"preset": "sim41", "Tee": 200.0})

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError):
            validate_config({"T": -5.0})
        with pytest.raises(ConfigError):
            validate_config({"preset": "sim43"})

    def test_load_yaml(self, tmp_path):
        p = write_text(tmp_path / "c.yaml", "preset: sim41\nT: 50.0\nseed: 3\n")
        cfg = load_config(p)
        assert cfg == {"preset": "sim41", "T": 50.0, "seed": 3}

    def test_load_non_mapping(self, tmp_path):
        p = write_text(tmp_path / "c.yaml", "- a\n- b\n")
        with pytest.raises(ConfigError):
            load_config(p)


class TestWriteTable:
    def test_rows_round_trip(self, tmp_path):
        import csv
        rows = [{"a": 1, "b": "x"}, {"a": 2, "b": "y"}]
        p = tmp_path / "t.csv"
        write_table(rows, p)
        with open(p, newline="") as fh:
            back = list(csv.DictReader(fh))
        assert back == [{"a": "1", "b": "x"}, {"a": "2", "b": "y"}]
