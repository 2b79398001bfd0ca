import math

import numpy as np
import pytest

from collateral import CollateralRule, golden_section_max
from contract_state import agent_utility
from errors import SolverError
from objective import reduced_objective
from pricing import (envelope_integrand, motivation_objective, motivation_price, mpp_residual, p_hat,
                     scenario_p_hat, solve_p_star, _expand_bracket)
from sde_engine import simulate_reduced_values


class TestMotivation:
    def test_identical_rates_give_zero(self):
        assert motivation_price(0.02, 0.02, 0.02, 1.0, 1.0) == 0.0

    def test_bargaining_weight_shift(self):
        assert motivation_price(0.02, 0.02, 0.02, 1.0, math.e ** 2) == pytest.approx(-1.0, abs=1e-15)

    def test_equal_weights_average_the_adjustments(self):
        R_A, R_B, r, T = 0.03, 0.02, 0.01, 2.0
        adjust_A = math.exp(-r * T) - math.exp(-R_A * T)
        adjust_B = math.exp(-r * T) - math.exp(-R_B * T)
        assert motivation_price(R_A, R_B, r, T, 1.0) == pytest.approx((adjust_A + adjust_B) / 2, abs=1e-12)

    def test_closed_form_is_the_maximizer(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            R_A, R_B, r = rng.uniform(0.0, 0.05, 3)
            T, lam = rng.uniform(0.5, 5.0), rng.uniform(0.5, 2.0)
            best = golden_section_max(lambda p: motivation_objective(p, R_A, R_B, r, T, lam), -2.0, 2.0, tol=1e-12)
            # Comparisons of objective values resolve the maximizer to about sqrt(machine epsilon)
            assert best == pytest.approx(motivation_price(R_A, R_B, r, T, lam), abs=1e-7)


class TestImpliedPrice:
    def test_examples(self):
        assert p_hat(1.0, 1.0, 0.0, 0.0, 1.0) == 0.0
        assert p_hat(1.0, 1.0, 0.3, 0.1, 1.0) == pytest.approx(-0.1)
        assert p_hat(1.0, 1.0, 0.0, 0.0, math.e ** 2) == pytest.approx(-1.0)

    def test_marginal_utilities_balance(self, make_config):
        scenario = make_config().scenario
        price = scenario_p_hat(scenario)
        A, B = scenario.agent_A, scenario.agent_B
        _, du_A = agent_utility(A, A.nu + price)
        _, du_B = agent_utility(B, B.nu - price)
        assert du_A == pytest.approx(scenario.contract.lam * du_B, rel=1e-12)

    def test_undefined_with_risk_neutral_agent(self, make_config):
        assert scenario_p_hat(make_config("appendix").scenario) is None


class TestResidual:
    def test_zero_at_implied_price_under_full_margin(self, simulated):
        config, paths = simulated()
        scenario = config.scenario
        rule = CollateralRule.for_scenario(scenario)
        price = scenario_p_hat(scenario)
        bundle = simulate_reduced_values(price, scenario, paths, rule)
        assert np.max(np.abs(bundle.delta)) <= 1e-10
        estimate = mpp_residual(bundle, scenario, rule)
        assert abs(estimate.value) <= 1e-10 + 3 * estimate.stderr
        assert estimate.q_fraction == 0.0
        above = mpp_residual(simulate_reduced_values(price + 0.1, scenario, paths, rule), scenario, rule)
        below = mpp_residual(simulate_reduced_values(price - 0.1, scenario, paths, rule), scenario, rule)
        assert below.value > 0 > above.value

    def test_envelope_branch_formula(self, simulated):
        config, paths = simulated("example2")
        scenario = config.scenario
        p = 0.05
        bundle = simulate_reduced_values(p, scenario, paths, CollateralRule.for_scenario(scenario))
        X = bundle.X[:, :-1]
        beta = bundle.beta[:, :-1]
        hazard = np.where(-X - p >= 0, paths.h_B[:-1], paths.h_A[:-1])
        expected = -hazard * beta * (-np.exp(-X) + np.exp(p))
        np.testing.assert_allclose(envelope_integrand(bundle, scenario), expected, rtol=1e-10, atol=1e-15)

    def test_decreasing_in_price(self, simulated):
        config, paths = simulated("example2")
        scenario = config.scenario
        rule = CollateralRule.for_scenario(scenario)
        values = [mpp_residual(simulate_reduced_values(p, scenario, paths, rule), scenario, rule).value
                  for p in np.linspace(-0.2, 0.2, 5)]
        assert np.all(np.diff(values) < 0)

    def test_envelope_agrees_with_finite_difference(self, simulated):
        config, paths = simulated("example2")
        scenario = config.scenario
        rule = CollateralRule.for_scenario(scenario)
        estimate = mpp_residual(simulate_reduced_values(0.0, scenario, paths, rule), scenario, rule)
        assert estimate.fd_gap <= 1e-4


class TestSolver:
    def test_full_margin_solution_is_implied_price(self, simulated):
        config, paths = simulated()
        solution = solve_p_star(config.scenario, paths)
        assert solution.converged
        assert abs(solution.p_star - solution.p_hat) <= 3 * solution.p_stderr + 1e-8
        assert solution.delta_abs_max <= 1e-6
        assert solution.slope < 0

    def test_symmetric_agents_share_at_zero(self, simulated):
        config, paths = simulated(changes={"agents.B.gamma": 1.0, "agents.B.nu": 0.1})
        solution = solve_p_star(config.scenario, paths)
        assert solution.p_hat == pytest.approx(0.0, abs=1e-15)
        assert abs(solution.p_star) <= 1e-8
        bundle = simulate_reduced_values(solution.p_star, config.scenario, paths,
                                         CollateralRule.for_scenario(config.scenario))
        assert np.max(np.abs(bundle.delta)) <= 1e-10
        assert solution.delta_abs_max <= 1e-10

    def test_one_naked_agent(self, simulated):
        config, paths = simulated("example2")
        scenario = config.scenario
        solution = solve_p_star(scenario, paths)
        assert solution.converged
        assert solution.evaluations <= 60
        assert abs(solution.residual) <= 1e-6
        rule = CollateralRule.for_scenario(scenario)
        at_root = reduced_objective(simulate_reduced_values(solution.p_star, scenario, paths, rule), scenario).value
        for shift in (-0.05, -0.01, 0.01, 0.05):
            nearby = simulate_reduced_values(solution.p_star + shift, scenario, paths, rule)
            assert at_root >= reduced_objective(nearby, scenario).value

    def test_deterministic_given_paths(self, simulated):
        config, paths = simulated("example2")
        first = solve_p_star(config.scenario, paths)
        second = solve_p_star(config.scenario, paths)
        assert first.p_star == second.p_star
        assert first.to_row() == second.to_row()

    @pytest.mark.parametrize("name", ["singleton", "appendix"])
    def test_other_modes_solve(self, simulated, name):
        config, paths = simulated(name)
        solution = solve_p_star(config.scenario, paths)
        assert solution.converged
        assert np.isfinite(solution.p_star)
        assert solution.p_hat is None or name == "singleton"

    def test_singleton_collateral_is_fixed(self, simulated):
        config, paths = simulated("singleton")
        solution = solve_p_star(config.scenario, paths)
        assert solution.delta_mean == pytest.approx(0.2)
        assert solution.delta_abs_max == pytest.approx(0.2)

    def test_no_sign_change(self):
        with pytest.raises(SolverError):
            _expand_bracket(lambda p: 1.0, 0.0)

    def test_increasing_residual(self):
        with pytest.raises(SolverError):
            _expand_bracket(lambda p: 1.0 + p * p, 0.5)

    def test_hint_does_not_move_root(self, simulated):
        config, paths = simulated("example2")
        base = solve_p_star(config.scenario, paths)
        hinted = solve_p_star(config.scenario, paths, hint=0.3)
        assert hinted.p_star == pytest.approx(base.p_star, abs=1e-8)
