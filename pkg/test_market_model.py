import math

import numpy as np
import pytest

from errors import DomainError
from market_model import (IntensityCurve, PiecewiseConstant, RateModel, cir_bond_delta, cir_bond_price,
                          default_times_from_uniforms, dependence_correction, risk_neutral_bond_mc,
                          sample_default_times, step_intensities, survival)

CIR = RateModel("cir", k=0.5, theta=0.04, rho=0.1, r0=0.03)


def constant_intensities(h_A, h_B, h_delta=0.0):
    return IntensityCurve(PiecewiseConstant.constant(h_A), PiecewiseConstant.constant(h_B),
                          PiecewiseConstant.constant(h_delta), independent=(h_delta == 0.0))


class TestPiecewiseConstant:
    def test_evaluation_is_right_continuous(self):
        curve = PiecewiseConstant([0.0, 0.5], [0.1, 0.3])
        assert curve(0.0) == 0.1
        assert curve(0.49) == 0.1
        assert curve(0.5) == 0.3
        assert curve(7.0) == 0.3

    def test_integral_and_inverse(self):
        curve = PiecewiseConstant([0.0, 0.5], [0.1, 0.3])
        assert curve.integral(1.0) == pytest.approx(0.05 + 0.15)
        assert curve.inverse_integral(0.2) == pytest.approx(1.0)
        assert curve.inverse_integral(0.025) == pytest.approx(0.25)

    def test_unreachable_level_is_never(self):
        curve = PiecewiseConstant([0.0, 1.0], [0.1, 0.0])
        assert np.isinf(curve.inverse_integral(0.5))

    def test_rejects_bad_breakpoints(self):
        with pytest.raises(ValueError):
            PiecewiseConstant([0.1, 0.5], [1.0, 2.0])
        with pytest.raises(ValueError):
            PiecewiseConstant([0.0, 0.5, 0.5], [1.0, 2.0, 3.0])


class TestCirBond:
    def test_price_at_maturity_is_one(self):
        assert cir_bond_price(1.0, 0.03, CIR, 1.0) == pytest.approx(1.0, abs=1e-15)

    def test_price_in_unit_interval_and_decreasing_in_rate(self):
        r = np.linspace(0.001, 0.2, 50)
        price = cir_bond_price(0.0, r, CIR, 5.0)
        assert np.all((price > 0) & (price <= 1))
        assert np.all(np.diff(price) < 0)

    def test_small_volatility_matches_deterministic_limit(self):
        near = RateModel("cir", k=0.5, theta=0.04, rho=1e-8, r0=0.03)
        limit = RateModel("cir", k=0.5, theta=0.04, rho=0.0, r0=0.03)
        t = np.linspace(0.0, 2.0, 11)
        np.testing.assert_allclose(cir_bond_price(t, 0.03, near, 2.0), cir_bond_price(t, 0.03, limit, 2.0),
                                   rtol=1e-6)

    def test_monte_carlo_within_three_standard_errors(self):
        mc, stderr = risk_neutral_bond_mc(CIR, 1.0, n_paths=100_000, n_steps=200, seed=42)
        closed = float(cir_bond_price(0.0, CIR.r0, CIR, 1.0))
        assert abs(mc - closed) <= 3 * stderr

    def test_delta_matches_finite_difference(self):
        t, r = np.meshgrid(np.linspace(0.0, 0.9, 10), np.linspace(0.005, 0.1, 10))
        step = 1e-6
        de_dr = (cir_bond_price(t, r + step, CIR, 1.0) - cir_bond_price(t, r - step, CIR, 1.0)) / (2 * step)
        np.testing.assert_allclose(cir_bond_delta(t, r, CIR, 1.0, 1.0), CIR.rho * np.sqrt(r) * de_dr, rtol=1e-6)

    def test_delta_vanishes_at_maturity_and_without_volatility(self):
        assert cir_bond_delta(1.0, 0.03, CIR, 1.0, 1.0) == 0.0
        flat = RateModel("cir", k=0.5, theta=0.04, rho=0.0, r0=0.03)
        assert cir_bond_delta(0.3, 0.03, flat, 1.0, 1.0) == 0.0

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            cir_bond_price(1.5, 0.03, CIR, 1.0)
        with pytest.raises(DomainError):
            cir_bond_price(0.5, 0.0, CIR, 1.0)
        with pytest.raises(DomainError):
            cir_bond_delta(0.5, 0.03, CIR, 1.0, 0.0)

    def test_feller_flag(self):
        assert CIR.feller
        assert not RateModel("cir", k=0.1, theta=0.01, rho=0.5, r0=0.03).feller


class TestDefaults:
    def test_survival(self):
        curves = constant_intensities(0.02, 0.02)
        assert survival(0.0, curves) == 1.0
        assert survival(1.0, curves) == pytest.approx(math.exp(-0.04), rel=1e-15)

    def test_simultaneous_default_only(self):
        curves = constant_intensities(0.25, 0.25, h_delta=0.5)
        np.testing.assert_allclose(survival(np.linspace(0, 1, 5), curves), 1.0)

    def test_dependence_correction(self):
        assert np.all(dependence_correction(np.linspace(0, 1, 5), 1.0, constant_intensities(0.02, 0.03)) == 0.0)
        curves = constant_intensities(0.04, 0.03, h_delta=0.01)
        h0 = 0.06
        expected = 0.01 * (math.exp(-h0 * 0.3) - math.exp(-h0 * 1.0)) / h0
        assert dependence_correction(0.3, 1.0, curves)[0] == pytest.approx(expected, rel=1e-12)
        assert dependence_correction(1.0, 1.0, curves)[0] == 0.0

    def test_default_probability_binomial(self):
        curves = constant_intensities(0.02, 0.05)
        n = 100_000
        tau_A, _ = sample_default_times(curves, np.random.default_rng(7), n)
        expected = math.exp(-0.02)
        observed = float(np.mean(tau_A > 1.0))
        assert abs(observed - expected) <= 3 * math.sqrt(expected * (1 - expected) / n)

    def test_zero_hazard_never_defaults(self):
        curves = constant_intensities(0.0, 0.05)
        tau_A, tau_B = sample_default_times(curves, np.random.default_rng(1), 1000)
        assert np.all(np.isinf(tau_A))
        assert np.all(np.isfinite(tau_B))

    def test_uniform_one_maps_to_never(self):
        tau_A, tau_B = default_times_from_uniforms(constant_intensities(0.02, 0.02), np.array([[1.0, 0.5]]))
        assert np.isinf(tau_A[0])
        assert tau_B[0] == pytest.approx(-math.log(0.5) / 0.02)

    def test_sampling_rejects_dependent_defaults(self):
        with pytest.raises(DomainError):
            sample_default_times(constant_intensities(0.02, 0.02, h_delta=0.01), np.random.default_rng(0), 10)

    def test_independent_curve_rejects_h_delta(self):
        with pytest.raises(DomainError):
            IntensityCurve(PiecewiseConstant.constant(0.02), PiecewiseConstant.constant(0.02),
                           PiecewiseConstant.constant(0.01), independent=True)

    def test_step_intensities_constant_curves(self):
        times = np.linspace(0.0, 1.0, 11)
        h_A, h_B = step_intensities(times, constant_intensities(0.02, 0.03))
        factor = -math.expm1(-0.05 * 0.1) / (0.05 * 0.1)
        np.testing.assert_allclose(h_A[:-1], 0.02 * factor, rtol=1e-14)
        np.testing.assert_allclose(h_B[:-1], 0.03 * factor, rtol=1e-14)
        assert h_A[-1] == 0.02 and h_B[-1] == 0.03

    def test_step_intensities_split_at_breakpoints(self):
        curves = IntensityCurve(PiecewiseConstant([0.0, 0.25], [0.02, 0.4]), PiecewiseConstant.constant(0.03))
        times = np.array([0.0, 0.5, 1.0])
        h_A, h_B = step_intensities(times, curves)
        first_A = (0.02 * -math.expm1(-0.05 * 0.25) / 0.05
                   + math.exp(-0.05 * 0.25) * 0.4 * -math.expm1(-0.43 * 0.25) / 0.43)
        assert h_A[0] * 0.5 == pytest.approx(first_A, rel=1e-12)
        # Step weights add up to the probability of a default before T
        G = survival(times, curves)
        total = np.sum(G[:-1] * (h_A[:-1] + h_B[:-1]) * 0.5)
        assert total == pytest.approx(1.0 - G[-1], rel=1e-12)

    def test_step_intensities_without_defaults(self):
        h_A, h_B = step_intensities(np.linspace(0.0, 1.0, 5), constant_intensities(0.0, 0.0))
        assert np.all(h_A == 0.0) and np.all(h_B == 0.0)
