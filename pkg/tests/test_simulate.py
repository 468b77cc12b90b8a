import math

import numpy as np
import pytest
from scipy.stats import kstest, ks_2samp, poisson

from bdmove.geometry import PointConfig, Window
from bdmove.model import (
    IntensityFn,
    ModelSpec,
    brownian_move,
    identity_move,
    sim41_model,
    uniform_birth_kernel,
    uniform_death_kernel,
)
from bdmove.simulate import (
    SimOptions,
    SimulationError,
    discretize,
    jump_count_scaling,
    sample_waiting_time,
    simulate,
)

UNIT = Window.unit_square()


def make_model(birth_fn, death_fn, alpha_lower, alpha_upper, n_star=10_000,
               move=None, cardinality_only=True):
    return ModelSpec(
        birth=IntensityFn("birth", birth_fn, cardinality_only=cardinality_only),
        death=IntensityFn("death", death_fn, cardinality_only=cardinality_only),
        birth_kernel=uniform_birth_kernel(UNIT),
        death_kernel=uniform_death_kernel(),
        move=move if move is not None else identity_move(),
        window=UNIT, n_star=n_star,
        alpha_lower=alpha_lower, alpha_upper=alpha_upper)


def constant_alpha_model(total=2.0, alpha_upper=None, move=None):
    """alpha identically ``total``; all mass on births at n=0."""

    def birth(x):
        return total if x.n == 0 else total / 2.0

    def death(x):
        return 0.0 if x.n == 0 else total / 2.0

    return make_model(birth, death, total, alpha_upper or total, move=move)


def simple_bd_model(lam=2.0, mu=1.0, n_star=50):
    def birth(x):
        return lam if x.n < n_star else 0.0

    def death(x):
        return mu * x.n

    return make_model(birth, death, min(lam, mu), lam + mu * n_star,
                      n_star=n_star)


def occupation_distribution(tr):
    """Time-weighted distribution of the cardinality over [0, T]."""
    weights = {}
    for s in range(tr.n_segments):
        t0, t1 = tr.segment_bounds(s)
        n = tr.segment_start(s).n
        weights[n] = weights.get(n, 0.0) + (t1 - t0)
    total = sum(weights.values())
    return {n: w / total for n, w in weights.items()}


def gillespie_reference(lam, mu, n_star, T, seed):
    """Independent direct-method simulation of the cardinality chain."""
    rng = np.random.default_rng(seed)
    t, n = 0.0, 0
    occ = {}
    while True:
        b = lam if n < n_star else 0.0
        d = mu * n
        rate = b + d
        tau = rng.exponential(1.0 / rate)
        dt = min(tau, T - t)
        occ[n] = occ.get(n, 0.0) + dt
        t += tau
        if t >= T:
            break
        n = n + 1 if rng.random() < b / rate else n - 1
    return {k: v / T for k, v in occ.items()}


def tv_distance(p, q):
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


# ---------------------------------------------------------------------------
# Waiting-time law
# ---------------------------------------------------------------------------

class TestWaitingTimes:
    def test_constant_alpha_waiting_times_exponential(self):
        m = constant_alpha_model(total=2.0)
        tr = simulate(m, T=1000.0, x0=PointConfig.empty(), seed=0,
                      opts=SimOptions(path_dt=None, validate=False))
        w = tr.waiting_times()
        assert len(w) > 1500
        assert kstest(w, "expon", args=(0, 0.5)).pvalue > 0.01

    def test_thinning_with_loose_bound_still_exact(self):
        # acceptance probability 0.5 throughout; the law must be unchanged
        m = constant_alpha_model(total=2.0, alpha_upper=4.0)
        tr = simulate(m, T=500.0, x0=PointConfig.empty(), seed=1,
                      opts=SimOptions(sampler="thinning", path_dt=None,
                                      validate=False))
        w = tr.waiting_times()
        assert kstest(w, "expon", args=(0, 0.5)).pvalue > 0.01

    def test_waiting_time_censoring(self):
        m = constant_alpha_model(total=0.001)
        rng = np.random.default_rng(3)
        tau, y, _ = sample_waiting_time(m, PointConfig.empty(), horizon=1.0,
                                        rng=rng, sampler="thinning")
        assert tau > 1.0

    def test_thinning_bound_violation_detected(self):
        def birth(x):
            return 5.0 if x.n == 0 else 2.5

        def death(x):
            return 0.0 if x.n == 0 else 2.5

        m = make_model(birth, death, 5.0, 3.0)  # declared bound too small
        with pytest.raises(SimulationError):
            simulate(m, T=50.0, x0=PointConfig.empty(), seed=0,
                     opts=SimOptions(sampler="thinning", path_dt=None,
                                     validate=False))

    def test_all_samplers_agree_from_fixed_state(self):
        # from a fixed 100-point state sim41 has alpha = 1, so repeated
        # waiting-time draws are iid Exp(1) for every sampler
        m = sim41_model(n_star=120)
        x0 = PointConfig(np.random.default_rng(0).random((100, 2)),
                         ids=np.arange(100))
        opts = SimOptions(path_dt=None, grid_dt=0.05)
        draws = {}
        for i, sampler in enumerate(("exact", "thinning", "grid")):
            rng = np.random.default_rng(100 + i)
            draws[sampler] = np.array(
                [sample_waiting_time(m, x0, horizon=100.0, rng=rng,
                                     sampler=sampler, opts=opts)[0]
                 for _ in range(2000)])
            assert kstest(draws[sampler], "expon").pvalue > 0.01
        assert ks_2samp(draws["exact"], draws["thinning"]).pvalue > 0.01
        assert ks_2samp(draws["thinning"], draws["grid"]).pvalue > 0.01

    def test_thinning_and_grid_agree_on_time_varying_hazard(self):
        # position-dependent intensity plus motion makes the hazard vary
        # inside a segment; thinning and grid must sample the same law
        def birth(x):
            return 1.0 if x.n == 0 else 0.5 + np.mean(x.points[:, 0])

        def death(x):
            return 0.0 if x.n == 0 else 0.5

        m = make_model(birth, death, 0.5, 2.5,
                       move=brownian_move(0.5, window=UNIT, boundary="reflect"),
                       cardinality_only=False)
        x0 = PointConfig(np.full((3, 2), 0.05), ids=np.arange(3))
        opts = SimOptions(path_dt=None, grid_dt=0.02)
        draws = {}
        for sampler in ("thinning", "grid"):
            rng = np.random.default_rng(99)
            draws[sampler] = np.array(
                [sample_waiting_time(m, x0, horizon=100.0, rng=rng,
                                     sampler=sampler, opts=opts)[0]
                 for _ in range(2000)])
        assert ks_2samp(draws["thinning"], draws["grid"]).pvalue > 0.01


# ---------------------------------------------------------------------------
# Stationary behaviour of the simple birth-death chain
# ---------------------------------------------------------------------------

class TestSimpleBirthDeath:
    def test_occupation_close_to_poisson(self):
        lam, mu = 2.0, 1.0
        m = simple_bd_model(lam, mu)
        tr = simulate(m, T=5000.0, x0=PointConfig.empty(), seed=5,
                      opts=SimOptions(path_dt=None, validate=False))
        occ = occupation_distribution(tr)
        target = {k: float(poisson.pmf(k, lam / mu)) for k in range(40)}
        assert tv_distance(occ, target) < 0.05

    def test_occupation_matches_independent_reference(self):
        lam, mu = 2.0, 1.0
        m = simple_bd_model(lam, mu)
        tr = simulate(m, T=5000.0, x0=PointConfig.empty(), seed=6,
                      opts=SimOptions(path_dt=None, validate=False))
        ref = gillespie_reference(lam, mu, 50, 5000.0, seed=106)
        assert tv_distance(occupation_distribution(tr), ref) < 0.05


# ---------------------------------------------------------------------------
# Structural invariants
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def traj():
    return simulate(sim41_model(), T=100.0, seed=7,
                    opts=SimOptions(path_dt=0.5))


class TestTrajectoryInvariants:
    def test_jump_times_strictly_increasing(self, traj):
        assert np.all(np.diff(traj.jump_times) > 0)
        assert traj.jump_times[-1] <= traj.horizon

    def test_cardinality_steps_match_kinds(self, traj):
        for j in traj.jumps:
            delta = j.post_config.n - j.pre_config.n
            assert delta == (1 if j.kind == "birth" else -1)

    def test_cardinality_constant_within_segments(self, traj):
        for s in range(traj.n_segments):
            n = traj.segment_start(s).n
            assert traj.segment_end(s).n == n
            for _, c in traj.path_samples[s]:
                assert c.n == n

    def test_path_samples_strictly_inside_segments(self, traj):
        for s in range(traj.n_segments):
            t0, t1 = traj.segment_bounds(s)
            for ts, _ in traj.path_samples[s]:
                assert t0 < ts < t1

    def test_ids_unique_and_monotone(self, traj):
        born = [j.changed_id for j in traj.jumps if j.kind == "birth"]
        assert len(born) == len(set(born))
        assert born == sorted(born)
        for j in traj.jumps:
            assert len(set(j.post_config.ids.tolist())) == j.post_config.n

    def test_no_birth_when_birth_intensity_zero(self):
        # pure-death regime: beta = 0 everywhere
        def birth(x):
            return 0.0

        def death(x):
            return float(x.n)

        m = make_model(birth, death, 1e-3, 60.0)
        x0 = PointConfig(np.random.default_rng(0).random((40, 2)),
                         ids=np.arange(40))
        tr = simulate(m, T=3.0, x0=x0, seed=8,
                      opts=SimOptions(path_dt=None, validate=False))
        assert all(j.kind == "death" for j in tr.jumps)
        assert tr.final_config.n <= 40

    def test_no_death_from_empty_and_saturation_respected(self):
        def birth(x):
            return 5.0 if x.n < 10 else 0.0

        def death(x):
            return 0.5 * x.n

        m = make_model(birth, death, 0.5, 10.0, n_star=10)
        tr = simulate(m, T=200.0, x0=PointConfig.empty(), seed=9,
                      opts=SimOptions(path_dt=None, validate=False))
        cards = [tr.initial_config.n] + [j.post_config.n for j in tr.jumps]
        assert max(cards) <= 10
        assert min(cards) >= 0
        for j in tr.jumps:
            if j.kind == "death":
                assert j.pre_config.n >= 1

    def test_sim41_birth_fraction_balanced(self):
        tr = simulate(sim41_model(), T=1500.0, seed=10,
                      opts=SimOptions(path_dt=None))
        assert tr.n_jumps >= 1000
        frac = np.mean([j.kind == "birth" for j in tr.jumps])
        assert 0.47 <= frac <= 0.53

    def test_determinism(self):
        a = simulate(sim41_model(), T=50.0, seed=12, opts=SimOptions(path_dt=0.25))
        b = simulate(sim41_model(), T=50.0, seed=12, opts=SimOptions(path_dt=0.25))
        assert a.n_jumps == b.n_jumps
        assert np.array_equal(a.jump_times, b.jump_times)
        assert np.array_equal(a.final_config.points, b.final_config.points)
        for ja, jb in zip(a.jumps, b.jumps):
            assert ja.kind == jb.kind
            assert np.array_equal(ja.post_config.points, jb.post_config.points)
        for sa, sb in zip(a.path_samples, b.path_samples):
            assert len(sa) == len(sb)
            for (ta, ca), (tb, cb) in zip(sa, sb):
                assert ta == tb and np.array_equal(ca.points, cb.points)

    def test_invalid_horizon(self):
        with pytest.raises(ValueError):
            simulate(sim41_model(), T=0.0, seed=0)

    def test_validation_runs_by_default(self):
        def birth(x):
            return 1.0  # violates saturation at n_star

        m = make_model(birth, lambda x: 0.0 if x.n == 0 else 1.0, 1.0, 2.0,
                       n_star=5)
        from bdmove.model import ModelValidationError
        with pytest.raises(ModelValidationError):
            simulate(m, T=1.0, seed=0)


# ---------------------------------------------------------------------------
# Discretization
# ---------------------------------------------------------------------------

class TestDiscretize:
    def test_frames_at_jump_times_are_post_configs(self):
        tr = simulate(sim41_model(), T=50.0, seed=20, opts=SimOptions(path_dt=0.5))
        assert tr.n_jumps >= 2
        fs = discretize(tr, tr.jump_times)
        for frame, j in zip(fs.configs, tr.jumps):
            assert np.array_equal(frame.points, j.post_config.points)
            assert np.array_equal(frame.ids, j.post_config.ids)

    def test_identity_move_frames_exact_everywhere(self):
        m = simple_bd_model()
        tr = simulate(m, T=100.0, x0=PointConfig.empty(), seed=21,
                      opts=SimOptions(path_dt=None, validate=False))
        times = np.linspace(0.0, 100.0, 173)
        fs = discretize(tr, times)
        jt = tr.jump_times
        for t, frame in zip(times, fs.configs):
            seg = int(np.searchsorted(jt, t, side="right"))
            assert np.array_equal(frame.points, tr.segment_start(seg).points)

    def test_tracks_present_and_contiguous(self):
        tr = simulate(sim41_model(), T=30.0, seed=22, opts=SimOptions(path_dt=0.1))
        fs = discretize(tr, np.linspace(0.0, 30.0, 61))
        assert fs.has_tracks
        seen = {}
        for fi, c in enumerate(fs.configs):
            for i in c.ids:
                seen.setdefault(int(i), []).append(fi)
        for frames in seen.values():
            assert frames == list(range(frames[0], frames[-1] + 1))

    def test_out_of_range_times_rejected(self):
        tr = simulate(sim41_model(), T=10.0, seed=23,
                      opts=SimOptions(path_dt=None))
        with pytest.raises(ValueError):
            discretize(tr, [0.0, 11.0])

    def test_brownian_frames_use_nearest_stored_sample(self):
        tr = simulate(sim41_model(), T=5.0, seed=24, opts=SimOptions(path_dt=0.01))
        fs = discretize(tr, np.linspace(0.0, 5.0, 11))
        for c in fs.configs:
            assert c.n > 0


# ---------------------------------------------------------------------------
# Jump-count scaling
# ---------------------------------------------------------------------------

class TestJumpCountScaling:
    def test_single_interval(self):
        tr = simulate(sim41_model(), T=20.0, seed=30,
                      opts=SimOptions(path_dt=None))
        out = jump_count_scaling(tr, [20.0, 10.0])
        assert out["rows"][0]["fraction_ge2"] == float(tr.n_jumps >= 2)

    def test_fractions_decrease_with_resolution(self):
        tr = simulate(sim41_model(), T=500.0, seed=31,
                      opts=SimOptions(path_dt=None))
        out = jump_count_scaling(tr, [2.0, 1.0, 0.5, 0.25])
        fracs = [r["fraction_ge2"] for r in out["rows"]]
        assert all(a >= b for a, b in zip(fracs, fracs[1:]))

    def test_needs_two_grids(self):
        tr = simulate(sim41_model(), T=10.0, seed=32,
                      opts=SimOptions(path_dt=None))
        with pytest.raises(ValueError):
            jump_count_scaling(tr, [1.0])
