"""Dilution curve behavior, variant switches, and the least-squares fit."""

import numpy as np
import pytest

import pooltest.dilution as dilution_module
from pooltest import (
    BATEMAN_POOL_SENSITIVITIES,
    DEFAULT_KIT,
    DilutionModel,
    FitConvergenceError,
    SensitivityObservation,
    TestKit,
    bateman_fit_model,
    fit_dilution_model,
    load_observations,
    repeated_specificity,
)
from pooltest.dilution import (
    LINEAR_POSITIVES,
    RATIO_N_OVER_K,
)


class TestTestKit:
    def test_accepts_unit_boundary(self):
        kit = TestKit(se_i=1.0, sp=1.0)
        assert kit.se_i == 1.0

    def test_rejects_zero_and_out_of_range(self):
        with pytest.raises(ValueError, match="se_i"):
            TestKit(se_i=0.0, sp=0.99)
        with pytest.raises(ValueError, match="sp"):
            TestKit(se_i=0.99, sp=1.2)


class TestDilutionModel:
    def test_stock_curve_spot_values(self):
        """Single-positive pools at the calibration sizes."""
        model = bateman_fit_model()
        np.testing.assert_allclose(model.sensitivity(1, 1), 0.988745, atol=5e-7)
        np.testing.assert_allclose(model.sensitivity(5, 1), 0.933809, atol=5e-7)
        np.testing.assert_allclose(model.sensitivity(10, 1), 0.906827, atol=5e-7)
        np.testing.assert_allclose(model.sensitivity(50, 1), 0.810308, atol=5e-7)

    def test_undiluted_pool_nearly_matches_kit(self):
        model = bateman_fit_model()
        assert abs(model.sensitivity(1, 1) - DEFAULT_KIT.se_i) < 0.002

    def test_nondecreasing_in_positive_count(self):
        """More positive material in the same pool never hurts detection."""
        model = bateman_fit_model()
        for n in (2, 5, 10, 25, 50):
            values = [model.sensitivity(n, k) for k in range(1, n + 1)]
            assert all(b >= a for a, b in zip(values, values[1:]))

    def test_flipped_ratio_reverses_the_trend(self):
        flipped = bateman_fit_model(ratio_orientation=RATIO_N_OVER_K)
        values = [flipped.sensitivity(20, k) for k in range(1, 21)]
        assert all(b <= a for a, b in zip(values, values[1:]))

    def test_positives_linear_term_changes_the_curve(self):
        base = bateman_fit_model()
        variant = bateman_fit_model(linear_term=LINEAR_POSITIVES)
        assert variant.sensitivity(10, 1) != base.sensitivity(10, 1)
        # at k = n the two variants coincide by construction
        assert variant.raw_sensitivity(10, 10) == base.raw_sensitivity(10, 10)

    def test_clamping(self):
        kit = TestKit(se_i=0.99, sp=0.99)
        model = DilutionModel(kit=kit, alpha=0.03, beta=-0.05)
        assert model.raw_sensitivity(30, 1) < 0.0
        assert model.sensitivity(30, 1) == 0.0
        assert model.is_clamped(30, 1)
        assert not model.is_clamped(2, 1)

    def test_sensitivity_always_a_probability(self):
        rng = np.random.default_rng(321)
        for _ in range(100):
            model = DilutionModel(
                kit=TestKit(se_i=float(rng.uniform(0.5, 1.0)), sp=float(rng.uniform(0.5, 1.0))),
                alpha=float(rng.uniform(-0.2, 0.4)),
                beta=float(rng.uniform(-0.05, 0.05)),
            )
            n = int(rng.integers(1, 60))
            k = int(rng.integers(1, n + 1))
            assert 0.0 <= model.sensitivity(n, k) <= 1.0

    def test_repeated_sensitivity(self):
        model = bateman_fit_model()
        se = model.sensitivity(10, 1)
        np.testing.assert_allclose(
            model.repeated_sensitivity(10, 1, 3), 1.0 - (1.0 - se) ** 3, rtol=1e-15
        )
        assert model.repeated_sensitivity(10, 1, 1) == se
        assert model.repeated_sensitivity(10, 1, 4) >= model.repeated_sensitivity(10, 1, 2)

    def test_domain_validation(self):
        model = bateman_fit_model()
        with pytest.raises(ValueError, match="k must be"):
            model.sensitivity(5, 0)
        with pytest.raises(ValueError, match="k must be"):
            model.sensitivity(5, 6)
        with pytest.raises(ValueError, match="ratio_orientation"):
            DilutionModel(ratio_orientation="sideways")
        with pytest.raises(ValueError, match="linear_term"):
            DilutionModel(linear_term="quadratic")


class TestRepeatedSpecificity:
    def test_power_law(self):
        assert repeated_specificity(0.99, 1) == 0.99
        np.testing.assert_allclose(repeated_specificity(0.99, 3), 0.99**3, rtol=1e-15)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError, match="sp"):
            repeated_specificity(0.0, 2)
        with pytest.raises(ValueError, match="retest count"):
            repeated_specificity(0.99, 0)


class TestObservations:
    def test_validation(self):
        obs = SensitivityObservation(n=5, k=1, se_observed=0.93)
        assert obs.n == 5
        with pytest.raises(ValueError, match="k must be"):
            SensitivityObservation(n=5, k=0, se_observed=0.9)
        with pytest.raises(ValueError, match="se_observed"):
            SensitivityObservation(n=5, k=1, se_observed=1.3)

    def test_builtin_calibration_points(self):
        sizes = [obs.n for obs in BATEMAN_POOL_SENSITIVITIES]
        values = [obs.se_observed for obs in BATEMAN_POOL_SENSITIVITIES]
        assert sizes == [1, 5, 10, 50]
        assert values == [0.99, 0.93, 0.91, 0.81]
        assert all(obs.k == 1 for obs in BATEMAN_POOL_SENSITIVITIES)


class TestFit:
    def test_recovers_builtin_coefficients(self):
        """Refitting the calibration points lands on the stock (alpha, beta)."""
        result = fit_dilution_model(BATEMAN_POOL_SENSITIVITIES)
        stock = bateman_fit_model()
        np.testing.assert_allclose(result.model.alpha, stock.alpha, atol=1e-4)
        np.testing.assert_allclose(result.model.beta, stock.beta, atol=1e-4)
        assert result.mse < 1e-4

    def test_synthetic_round_trip(self):
        """Observations generated by a known curve are fit back to it."""
        truth = DilutionModel(kit=DEFAULT_KIT, alpha=0.021, beta=-0.0014)
        observations = [
            SensitivityObservation(n=n, k=1, se_observed=truth.raw_sensitivity(n, 1))
            for n in (1, 4, 8, 16, 32, 50)
        ]
        result = fit_dilution_model(observations)
        np.testing.assert_allclose(result.model.alpha, truth.alpha, atol=1e-8)
        np.testing.assert_allclose(result.model.beta, truth.beta, atol=1e-8)
        assert result.mse < 1e-16

    def test_residuals_and_iterations_reported(self):
        result = fit_dilution_model(BATEMAN_POOL_SENSITIVITIES)
        assert len(result.residuals) == 4
        assert result.iterations > 0
        np.testing.assert_allclose(
            np.mean(np.square(result.residuals)), result.mse, rtol=1e-9
        )

    def test_needs_two_observations(self):
        with pytest.raises(ValueError, match="at least 2"):
            fit_dilution_model(BATEMAN_POOL_SENSITIVITIES[:1])

    def test_nonconvergence_carries_best_point(self, monkeypatch):
        class _Stuck:
            success = False
            x = np.array([0.123, -0.004])
            fun = 0.5
            message = "simplex collapsed"
            nit = 17

        monkeypatch.setattr(
            dilution_module.optimize, "minimize", lambda *a, **k: _Stuck()
        )
        with pytest.raises(FitConvergenceError, match="simplex collapsed") as info:
            fit_dilution_model(BATEMAN_POOL_SENSITIVITIES)
        assert info.value.alpha == 0.123
        assert info.value.beta == -0.004
        assert info.value.mse == 0.5


class TestLoadObservations:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "obs.csv"
        path.write_text("n,k,se\n1,1,0.99\n5,1,0.93\n10,1,0.91\n50,1,0.81\n")
        observations = load_observations(path)
        assert observations == BATEMAN_POOL_SENSITIVITIES

    def test_rejects_wrong_header(self, tmp_path):
        path = tmp_path / "obs.csv"
        path.write_text("pool,k,se\n1,1,0.99\n")
        with pytest.raises(ValueError, match="expected header"):
            load_observations(path)

    def test_rejects_bad_row(self, tmp_path):
        path = tmp_path / "obs.csv"
        path.write_text("n,k,se\n5,9,0.93\n")
        with pytest.raises(ValueError, match="obs.csv:2"):
            load_observations(path)

    def test_rejects_empty(self, tmp_path):
        path = tmp_path / "obs.csv"
        path.write_text("n,k,se\n")
        with pytest.raises(ValueError, match="no observation rows"):
            load_observations(path)
