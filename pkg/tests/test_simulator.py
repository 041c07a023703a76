import numpy as np
import pytest
from scipy import stats

from csa_mpr import (
    Ensemble,
    FrameRealization,
    SimConfig,
    ValidationError,
    generate_frame,
    load_threshold,
    repetition_ensemble,
    run_trials,
    sic_decode,
    single_parity_check_code,
    slice_degree_pmf,
)
from csa_mpr.simulator import trial_rng

REP3 = repetition_ensemble(3)


def small_config(**overrides) -> SimConfig:
    base = dict(
        n_users=40,
        n_slots=50,
        slices_per_slot=1,
        ensemble=REP3,
        k_mpr=1,
        seed=1,
        trials=5,
    )
    base.update(overrides)
    return SimConfig(**base)


class TestConfigValidation:
    def test_zero_trials(self):
        with pytest.raises(ValidationError):
            small_config(trials=0)

    def test_slices_must_match_segments(self):
        with pytest.raises(ValidationError):
            small_config(slices_per_slot=2)

    def test_frame_too_small_for_code(self):
        with pytest.raises(ValidationError):
            SimConfig(
                n_users=1, n_slots=1, slices_per_slot=1,
                ensemble=repetition_ensemble(4), k_mpr=1,
            )

    def test_loads(self):
        cfg = small_config()
        assert cfg.load == pytest.approx(0.8)
        assert cfg.physical_load == pytest.approx(2.4)


class TestGenerateFrame:
    def test_single_user(self):
        cfg = small_config(n_users=1)
        frame = generate_frame(cfg, np.random.default_rng(0))
        assert len(frame.user_slices[0]) == 3
        assert len(set(frame.user_slices[0])) == 3
        assert all(len(occ) == 1 for occ in frame.slice_occupants.values())

    def test_slices_distinct_per_user(self):
        cfg = small_config(n_users=200, n_slots=80)
        frame = generate_frame(cfg, np.random.default_rng(5))
        for slices in frame.user_slices:
            assert len(set(slices)) == len(slices)

    def test_dual_views_consistent(self):
        cfg = small_config()
        frame = generate_frame(cfg, np.random.default_rng(2))
        rebuilt = {}
        for u, slices in enumerate(frame.user_slices):
            for coord, s in enumerate(slices):
                rebuilt.setdefault(s, []).append((u, coord))
        assert {s: sorted(v) for s, v in rebuilt.items()} == {
            s: sorted(v) for s, v in frame.slice_occupants.items()
        }

    def test_deterministic_given_seed(self):
        cfg = small_config()
        f1 = generate_frame(cfg, trial_rng(7, 0))
        f2 = generate_frame(cfg, trial_rng(7, 0))
        f3 = generate_frame(cfg, trial_rng(7, 1))
        assert f1.user_slices == f2.user_slices
        assert (f1.code_indices == f2.code_indices).all()
        assert f1.user_slices != f3.user_slices

    def test_degree_histogram_matches_poisson(self):
        # aggregate over frames; each bin within 3 sigma of the multinomial count
        cfg = SimConfig(
            n_users=1000, n_slots=1000, slices_per_slot=1,
            ensemble=REP3, k_mpr=1, seed=21, trials=40,
        )
        result = run_trials(cfg)
        hist = result.degree_histogram
        total = hist.sum()
        g0 = cfg.physical_load
        for i in range(10):
            p = slice_degree_pmf(g0, i)
            sigma = np.sqrt(total * p * (1 - p))
            assert abs(hist[i] - total * p) < 3 * sigma + 1


def two_user_stopping_set() -> FrameRealization:
    # both users hold the same two slices: degree stays 2 everywhere
    return FrameRealization(
        code_indices=np.array([0, 0]),
        user_slices=((4, 9), (4, 9)),
        slice_occupants={4: [(0, 0), (1, 0)], 9: [(0, 1), (1, 1)]},
    )


class TestSicDecode:
    def test_stopping_set_blocks_collision_channel(self):
        ens = repetition_ensemble(2)
        result = sic_decode(two_user_stopping_set(), ens, k_mpr=1, n_slices=10)
        assert not result.recovered_users.any()
        assert result.iterations == 0

    def test_mpr_two_clears_stopping_set(self):
        ens = repetition_ensemble(2)
        result = sic_decode(two_user_stopping_set(), ens, k_mpr=2, n_slices=10)
        assert result.recovered_users.all()
        assert result.iterations == 1

    def test_capability_above_max_degree_clears_frame(self):
        cfg = small_config(n_users=60)
        frame = generate_frame(cfg, np.random.default_rng(3))
        max_degree = max(len(v) for v in frame.slice_occupants.values())
        result = sic_decode(frame, cfg.ensemble, k_mpr=max_degree, n_slices=cfg.n_slices)
        assert result.recovered_users.all()
        assert result.segment_loss_rate(frame) == 0.0

    def test_map_step_recovers_through_parity(self):
        # user 0's two clean slices determine its third coordinate by parity;
        # users 1 and 2 collide in all their slices and stay locked
        ens = Ensemble(codes=(single_parity_check_code(3),), probs=(1.0,))
        frame = FrameRealization(
            code_indices=np.array([0, 0, 0]),
            user_slices=((0, 1, 2), (2, 3, 4), (2, 3, 4)),
            slice_occupants={
                0: [(0, 0)],
                1: [(0, 1)],
                2: [(0, 2), (1, 0), (2, 0)],
                3: [(1, 1), (2, 1)],
                4: [(1, 2), (2, 2)],
            },
        )
        result = sic_decode(frame, ens, k_mpr=1, n_slices=5)
        # cancelling user 0's parity segment drops slice 2 to degree 2,
        # which is still beyond a collision channel
        assert result.recovered_users.tolist() == [True, False, False]
        assert result.known_counts.tolist() == [3, 0, 0]

    def test_monotone_iteration_counts(self):
        cfg = small_config(n_users=45)
        frame = generate_frame(cfg, np.random.default_rng(8))
        result = sic_decode(frame, cfg.ensemble, k_mpr=1, n_slices=cfg.n_slices)
        assert all(c > 0 for c in result.iteration_recoveries)
        assert sum(result.iteration_recoveries) == result.known_counts.sum()

    def test_order_independence(self):
        # fixpoint should not depend on slice/user processing order
        cfg = small_config(n_users=80, n_slots=100)
        shuffler = np.random.default_rng(99)
        for trial in range(100):
            frame = generate_frame(cfg, trial_rng(13, trial))
            baseline = sic_decode(frame, cfg.ensemble, 1, n_slices=cfg.n_slices)
            shuffled = sic_decode(
                frame, cfg.ensemble, 1, n_slices=cfg.n_slices, shuffle_rng=shuffler
            )
            assert (baseline.recovered_users == shuffled.recovered_users).all()
            assert (baseline.known_counts == shuffled.known_counts).all()


class TestRunTrials:
    def test_reproducible(self):
        cfg = small_config(trials=10)
        r1 = run_trials(cfg)
        r2 = run_trials(cfg)
        assert r1.packet_loss_rate == r2.packet_loss_rate
        assert (r1.per_trial_plr == r2.per_trial_plr).all()

    def test_seed_changes_results(self):
        r1 = run_trials(small_config(trials=10, seed=1))
        r2 = run_trials(small_config(trials=10, seed=2))
        assert (r1.per_trial_plr != r2.per_trial_plr).any()

    def test_ci_contains_mean(self):
        r = run_trials(small_config(n_users=60, trials=20))
        lo, hi = r.plr_ci
        assert lo <= r.packet_loss_rate <= hi

    def test_throughput_accounting(self):
        cfg = small_config(trials=4)
        r = run_trials(cfg)
        assert 0.0 <= r.throughput <= cfg.load + 1e-12

    @pytest.mark.slow
    def test_loss_decreases_with_frame_size(self):
        plrs = {}
        for n_slots, trials in ((250, 200), (1000, 100), (4000, 50)):
            cfg = SimConfig(
                n_users=int(0.8 * n_slots), n_slots=n_slots, slices_per_slot=1,
                ensemble=REP3, k_mpr=1, seed=11, trials=trials,
            )
            plrs[n_slots] = run_trials(cfg).packet_loss_rate
        assert plrs[250] > plrs[1000] > plrs[4000]
        assert plrs[250] > 5 * plrs[4000]

    @pytest.mark.slow
    def test_waterfall_straddles_de_threshold(self):
        g_star = load_threshold(REP3, 1).g_star
        results = {}
        for load in (g_star - 0.1, g_star + 0.1):
            cfg = SimConfig(
                n_users=int(load * 2000), n_slots=2000, slices_per_slot=1,
                ensemble=REP3, k_mpr=1, seed=9, trials=50,
            )
            results[load] = run_trials(cfg).packet_loss_rate
        below, above = results[g_star - 0.1], results[g_star + 0.1]
        assert above > 0.1
        assert above > 10 * max(below, 1e-6)

    @pytest.mark.slow
    def test_degree_distribution_chi_square(self):
        cfg = SimConfig(
            n_users=10000, n_slots=10000, slices_per_slot=1,
            ensemble=REP3, k_mpr=1, seed=3, trials=1,
        )
        hist = run_trials(cfg).degree_histogram
        total = hist.sum()
        expected = np.array(
            [slice_degree_pmf(cfg.physical_load, i) for i in range(hist.size)]
        ) * total
        # merge the tail so every expected count stays above 5
        hi = hist.size - int(np.argmax(np.cumsum(expected[::-1]) > 5.0))
        obs = np.append(hist[:hi], hist[hi:].sum())
        exp = np.append(expected[:hi], total - expected[:hi].sum())
        _, p_value = stats.chisquare(obs, exp)
        assert p_value > 0.01
