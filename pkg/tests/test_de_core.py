import math

import numpy as np
import pytest
from scipy.optimize import brentq

from csa_mpr import (
    CodeSpec,
    DEParams,
    Ensemble,
    ValidationError,
    density_evolution,
    edge_degree_pmf,
    load_threshold,
    repetition_code,
    repetition_ensemble,
    single_parity_check_code,
    slice_degree_pmf,
    slice_transfer,
    slice_transfer_series,
    user_transfer,
)
from csa_mpr.bound import BoundQuery, converse_bound


def mixed_2_3() -> Ensemble:
    return Ensemble(codes=(repetition_code(2), repetition_code(3)), probs=(0.5, 0.5))


def repetition_tangency_threshold(d: int) -> float:
    """Independent threshold oracle for (d, 1) repetition at K = 1.

    The recursion is q <- (1 - exp(-d G q))^(d-1); at the threshold the map
    is tangent to the identity.  With u = exp(-d G q), tangency reduces to
    (d-1) u ln(1/u) = 1 - u, and then G = ln(1/u) / (d (1-u)^(d-1)).
    """
    u = brentq(lambda v: (d - 1) * v * math.log(1 / v) - (1 - v), 1e-9, 1 - 1e-9,
               xtol=1e-15)
    return math.log(1 / u) / (d * (1 - u) ** (d - 1))


class TestEnsembleValidation:
    def test_probs_must_sum_to_one(self):
        with pytest.raises(ValidationError):
            Ensemble(codes=(repetition_code(3),), probs=(0.9,))

    def test_negative_prob(self):
        with pytest.raises(ValidationError):
            Ensemble(codes=(repetition_code(2), repetition_code(3)), probs=(1.5, -0.5))

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            Ensemble(codes=(repetition_code(3),), probs=(0.5, 0.5))

    def test_empty(self):
        with pytest.raises(ValidationError):
            Ensemble(codes=(), probs=())

    def test_invalid_member_code(self):
        bad = CodeSpec(n=3, k=2, generator=[[1, 0, 0], [0, 1, 0]])
        with pytest.raises(ValidationError):
            Ensemble(codes=(bad,), probs=(1.0,))

    def test_mixed_dimensions_rejected(self):
        with pytest.raises(ValidationError):
            Ensemble(
                codes=(repetition_code(3), single_parity_check_code(3)),
                probs=(0.5, 0.5),
            )

    def test_derived_quantities(self):
        ens = mixed_2_3()
        assert ens.mean_length == pytest.approx(2.5)
        assert ens.rate == pytest.approx(0.4)
        assert ens.edge_probs == pytest.approx((0.4, 0.6))

    def test_json_round_trip(self):
        ens = mixed_2_3()
        clone = Ensemble.from_dict(ens.to_dict())
        assert clone.rate == ens.rate
        assert [c.n for c in clone.codes] == [2, 3]


class TestUserTransfer:
    def test_rep2_is_identity(self):
        x = np.linspace(0, 1, 101)
        assert np.abs(user_transfer(repetition_ensemble(2), x) - x).max() < 1e-12

    def test_rep3_at_half(self):
        assert user_transfer(repetition_ensemble(3), 0.5) == pytest.approx(0.25, abs=1e-12)

    @pytest.mark.parametrize("d", [2, 3, 4, 5])
    def test_repetition_reduces_to_power(self, d):
        x = np.linspace(0.0, 1.0, 1000)
        diff = np.abs(user_transfer(repetition_ensemble(d), x) - x ** (d - 1))
        assert diff.max() < 1e-12

    def test_spc_closed_form(self):
        # coordinate recoverable iff both other coordinates known: 1-(1-x)^2
        ens = Ensemble(codes=(single_parity_check_code(3),), probs=(1.0,))
        x = np.linspace(0, 1, 101)
        assert np.abs(user_transfer(ens, x) - (2 * x - x**2)).max() < 1e-12

    def test_interleaved_pairs_closed_form(self):
        # two independent (2,1) repetitions: each coordinate determined by its partner
        code = CodeSpec(n=4, k=2, generator=[[1, 0, 1, 0], [0, 1, 0, 1]])
        ens = Ensemble(codes=(code,), probs=(1.0,))
        x = np.linspace(0, 1, 101)
        assert np.abs(user_transfer(ens, x) - x).max() < 1e-12

    @pytest.mark.parametrize(
        "ens", [repetition_ensemble(3), mixed_2_3(),
                Ensemble(codes=(single_parity_check_code(4),), probs=(1.0,))]
    )
    def test_endpoints(self, ens):
        assert user_transfer(ens, 1.0) == pytest.approx(1.0, abs=1e-12)
        assert user_transfer(ens, 0.0) >= 0.0

    def test_monotone(self):
        x = np.linspace(0, 1, 400)
        for ens in (mixed_2_3(), Ensemble(codes=(single_parity_check_code(4),), probs=(1.0,))):
            g = user_transfer(ens, x)
            assert (np.diff(g) >= -1e-12).all()

    def test_domain_check(self):
        with pytest.raises(ValidationError):
            user_transfer(repetition_ensemble(3), 1.5)

    def test_scalar_matches_vector_path(self):
        ens = mixed_2_3()
        xs = np.linspace(0, 1, 57)
        vec = user_transfer(ens, xs)
        scal = np.array([ens._user_transfer_scalar(float(x)) for x in xs])
        assert np.abs(vec - scal).max() < 1e-15


class TestSliceTransfer:
    def test_zero_maps_to_zero(self):
        for k in (1, 2, 5):
            assert slice_transfer(k, 1.0, 0.5, 0.0) == 0.0

    def test_k1_closed_form(self):
        assert slice_transfer(1, 0.5, 0.5, 1.0) == pytest.approx(1 - math.exp(-1), abs=1e-12)

    def test_k2_closed_form(self):
        assert slice_transfer(2, 1.0, 0.5, 1.0) == pytest.approx(1 - 3 * math.exp(-2), abs=1e-12)

    def test_monotone_in_x_load_and_capability(self):
        xs = np.linspace(0, 1, 101)
        f1 = slice_transfer(2, 1.0, 0.5, xs)
        assert (np.diff(f1) >= 0).all()
        f_more_load = slice_transfer(2, 1.5, 0.5, xs)
        assert (f_more_load >= f1 - 1e-15).all()
        f_more_mpr = slice_transfer(3, 1.0, 0.5, xs)
        assert (f_more_mpr <= f1 + 1e-15).all()

    def test_huge_capability_clears_everything(self):
        assert slice_transfer(200, 1.0, 0.5, 1.0) < 1e-12

    def test_parameter_validation(self):
        with pytest.raises(ValidationError):
            slice_transfer(0, 1.0, 0.5, 0.5)
        with pytest.raises(ValidationError):
            slice_transfer(1, -1.0, 0.5, 0.5)
        with pytest.raises(ValidationError):
            slice_transfer(1, 1.0, 1.5, 0.5)


class TestSeriesOracle:
    def test_matches_closed_form_spot(self):
        diff = slice_transfer(1, 0.5, 0.5, 0.7) - slice_transfer_series(1, 0.5, 0.5, 0.7, i_max=80)
        assert abs(diff) < 1e-10

    def test_zero(self):
        for k in (1, 3):
            assert slice_transfer_series(k, 1.0, 0.5, 0.0) == 0.0

    def test_grid_equivalence(self):
        for k_mpr in (1, 2, 3, 4):
            for g_over_r in (0.5, 1.0, 2.0, 4.0):
                for x in np.arange(0.1, 0.95, 0.1):
                    closed = slice_transfer(k_mpr, g_over_r * 0.5, 0.5, float(x))
                    series = slice_transfer_series(k_mpr, g_over_r * 0.5, 0.5, float(x))
                    assert abs(closed - series) < 1e-9

    def test_truncation_warning(self):
        with pytest.warns(UserWarning):
            slice_transfer_series(1, 4.0, 0.5, 0.5, i_max=5)


class TestDegreePmf:
    def test_poisson_at_zero(self):
        assert slice_degree_pmf(1.0, 0) == pytest.approx(math.exp(-1), abs=1e-12)

    def test_edge_view(self):
        assert edge_degree_pmf(2.0, 1) == pytest.approx(math.exp(-2), abs=1e-12)

    def test_normalization(self):
        for g0 in (0.5, 2.0, 6.0):
            assert sum(slice_degree_pmf(g0, i) for i in range(80)) == pytest.approx(1.0, abs=1e-12)
            assert sum(edge_degree_pmf(g0, i) for i in range(1, 81)) == pytest.approx(1.0, abs=1e-12)

    def test_edge_view_needs_positive_degree(self):
        with pytest.raises(ValidationError):
            edge_degree_pmf(1.0, 0)


class TestDensityEvolution:
    def test_rep3_below_threshold_converges(self):
        trace = density_evolution(repetition_ensemble(3), DEParams(k_mpr=1, load=0.5))
        assert trace.converged and not trace.inconclusive

    def test_rep3_above_bound_fails(self):
        trace = density_evolution(repetition_ensemble(3), DEParams(k_mpr=1, load=0.95))
        assert not trace.converged

    def test_rep2_straddles_half(self):
        assert density_evolution(repetition_ensemble(2), DEParams(k_mpr=1, load=0.49)).converged
        assert not density_evolution(repetition_ensemble(2), DEParams(k_mpr=1, load=0.51)).converged

    def test_trace_structure(self):
        trace = density_evolution(repetition_ensemble(3), DEParams(k_mpr=1, load=0.7))
        assert trace.q_sequence[0] == 1.0
        assert len(trace.q_sequence) == trace.iterations + 1
        assert len(trace.p_sequence) == trace.iterations
        assert ((0 <= trace.q_sequence) & (trace.q_sequence <= 1)).all()
        assert (np.diff(trace.q_sequence) <= 1e-15).all()

    def test_param_validation(self):
        with pytest.raises(ValidationError):
            DEParams(k_mpr=1, load=-0.5)
        with pytest.raises(ValidationError):
            DEParams(k_mpr=0, load=0.5)
        with pytest.raises(ValidationError):
            DEParams(k_mpr=1, load=0.5, max_iter=0)


class TestLoadThreshold:
    def test_rep2_slope_condition(self):
        # analytic threshold 1/2; the iteration cap biases the estimate a
        # touch low near this slope-determined threshold, hence the flag
        result = load_threshold(repetition_ensemble(2), 1, tol=1e-3)
        assert abs(result.g_star - 0.5) < 1e-3
        assert result.inconclusive

    @pytest.mark.parametrize("d", [3, 4, 5])
    def test_repetition_tangency_oracle(self, d):
        oracle = repetition_tangency_threshold(d)
        result = load_threshold(repetition_ensemble(d), 1)
        assert abs(result.g_star - oracle) < 3e-5
        assert result.bracket[1] - result.bracket[0] <= 1e-5

    def test_below_converse_bound(self):
        for d, k_mpr in ((3, 1), (3, 2), (4, 1)):
            g_star = load_threshold(repetition_ensemble(d), k_mpr, tol=1e-4).g_star
            bound = converse_bound(BoundQuery(rate=1.0 / d, k_mpr=k_mpr)).load_bound
            assert g_star <= bound

    def test_monotone_in_capability(self):
        ens = repetition_ensemble(3)
        stars = [load_threshold(ens, k, tol=1e-4).g_star for k in (1, 2, 3)]
        assert stars[0] < stars[1] < stars[2]

    def test_result_serialization(self):
        result = load_threshold(repetition_ensemble(3), 1, tol=1e-3)
        payload = result.to_dict()
        assert set(payload) >= {"G_star", "bracket", "K", "R"}
        assert payload["K"] == 1
