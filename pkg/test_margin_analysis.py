import numpy as np
import pytest

from errors import DomainError
from margin_analysis import check_full_margin, check_full_margin_appendix, curve_vanishes
from market_model import PiecewiseConstant
from pricing import scenario_p_hat

FULL_MARGIN_APPENDIX = {"agents.A.s": 0.0, "agents.A.s_m": 0.0, "agents.B.s": 0.0}


class TestMainMode:
    def test_delta_hedged_without_spreads(self, simulated):
        config, paths = simulated()
        report = check_full_margin(config.scenario, paths)
        assert report.full_margin_optimal
        assert report.violations == []
        assert report.drift_residual == 0.0
        assert report.aggregate_phi_zero
        assert report.p_hat == pytest.approx(scenario_p_hat(config.scenario))
        assert report.max_abs_delta <= 1e-10

    def test_naked_agent_breaks_full_margin(self, simulated):
        config, paths = simulated("example2")
        report = check_full_margin(config.scenario, paths)
        assert not report.full_margin_optimal
        assert "phi_B" in report.violations
        assert report.p_hat is None

    @pytest.mark.parametrize("changes, flag", [
        ({"agents.A.s": 0.001}, "s_A"),
        ({"agents.B.s": 1e-4}, "s_B"),
        ({"hedge.A": {"custom": 1e-4}}, "phi_A"),
        ({"hedge.B": {"custom": 1e-4}}, "phi_B"),
    ])
    def test_single_perturbation_flips_verdict(self, simulated, changes, flag):
        config, paths = simulated(changes=changes)
        report = check_full_margin(config.scenario, paths)
        assert not report.full_margin_optimal
        assert flag in report.violations
        assert report.max_abs_delta > 0

    def test_curve_checked_between_nodes(self):
        times = np.linspace(0.0, 1.0, 5)
        curve = PiecewiseConstant([0.0, 0.1, 0.2], [0.0, 0.01, 0.0])
        assert curve_vanishes(curve, times, np.array([0.3, 0.6]))
        assert not curve_vanishes(curve, times, np.array([0.15]))

    def test_singleton_domain_holds_fixed_collateral(self, simulated):
        config, paths = simulated("singleton")
        report = check_full_margin(config.scenario, paths)
        assert not report.full_margin_optimal
        assert "phi_A" in report.violations
        assert report.max_abs_delta == pytest.approx(0.2)

    def test_report_serializes(self, simulated):
        config, paths = simulated()
        data = check_full_margin(config.scenario, paths).to_dict()
        assert data["mode"] == "main"
        assert set(data["flags"]) == {"phi_A", "phi_B", "s_A", "s_B"}

    def test_wrong_mode(self, simulated):
        config, paths = simulated("appendix")
        with pytest.raises(DomainError):
            check_full_margin(config.scenario, paths)


class TestAppendixMode:
    def test_full_margin_without_spreads(self, simulated):
        config, paths = simulated("appendix", FULL_MARGIN_APPENDIX)
        report = check_full_margin_appendix(config.scenario, paths)
        assert report.full_margin_optimal
        assert report.drift_residual == 0.0

    def test_margin_spread_breaks_full_margin(self, simulated):
        config, paths = simulated("appendix", {**FULL_MARGIN_APPENDIX, "agents.A.s_m": 0.002})
        report = check_full_margin_appendix(config.scenario, paths)
        assert not report.full_margin_optimal
        assert "s_Am" in report.violations

    def test_funding_premium_with_stochastic_rate(self, simulated):
        cir = {"kind": "cir", "k": 0.5, "theta": 0.04, "rho": 0.1, "r0": 0.03}
        config, paths = simulated("appendix", {**FULL_MARGIN_APPENDIX, "market.rate": cir, "agents.B.b": 0.05})
        report = check_full_margin_appendix(config.scenario, paths)
        assert not report.full_margin_optimal
        assert "drift" in report.violations

    def test_wrong_mode(self, simulated):
        config, paths = simulated()
        with pytest.raises(DomainError):
            check_full_margin_appendix(config.scenario, paths)
