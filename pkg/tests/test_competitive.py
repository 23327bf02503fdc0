from fractions import Fraction

import numpy as np
import pytest

from sponsornet.competitive import (
    cp_best_response,
    cp_best_response_unconstrained,
    cp_profit,
    cp_profit_gradient,
    solve_competitive,
    sp_best_response,
    sp_revenue,
    sp_revenue_derivative,
)
from sponsornet.demand import Strategy, demand_equilibrium
from sponsornet.errors import AllSponsored, DegeneratePrice
from sponsornet.model import GenerationConfig, MarketInstance, build_matrices, generate_instance
from sponsornet.validate import check_assumption3, finite_difference_gradient


def profit_at(inst, mats, p, theta):
    strat = Strategy(p, theta)
    return cp_profit(inst, strat, demand_equilibrium(inst, strat, mats).x)


def revenue_at(inst, mats, p, theta):
    strat = Strategy(p, theta)
    return sp_revenue(strat, demand_equilibrium(inst, strat, mats).x)


def test_payoffs_vanish_without_demand(default_market):
    inst, _ = default_market
    strat = Strategy(10.0, np.full(inst.n, 0.5))
    assert cp_profit(inst, strat, np.zeros(inst.n)) == 0.0
    assert sp_revenue(strat, np.zeros(inst.n)) == 0.0
    assert sp_revenue(Strategy(0.0, np.zeros(inst.n)), np.ones(inst.n)) == 0.0


def test_no_sponsorship_is_pure_ad_value(default_market):
    inst, _ = default_market
    x = np.linspace(0.01, 0.1, inst.n)
    expected = inst.gamma * np.sum(inst.s * x - inst.t * x**2)
    assert cp_profit(inst, Strategy(12.0, np.zeros(inst.n)), x) == pytest.approx(expected, rel=1e-14)


def test_single_user_profit(single_user):
    inst, _ = single_user
    x = Fraction(25, 66)
    expected = 2 * (5 * x - 5 * x * x) - 10 * Fraction(1, 2) * x
    got = cp_profit(inst, Strategy(10.0, [0.5]), [float(x)])
    assert got == pytest.approx(float(expected), rel=1e-13)
    assert got == pytest.approx(0.45914, abs=1e-5)


def test_revenue_arithmetic():
    assert sp_revenue(Strategy(10.0, [0.0, 0.0]), [0.2, 0.3]) == pytest.approx(5.0)


def test_cp_reply_single_user(single_user):
    inst, mats = single_user
    # (1/60) (1 + 10/66)^-1 * 10
    assert cp_best_response_unconstrained(inst, mats, 30.0)[0] == pytest.approx(11 / 76, rel=1e-13)
    assert cp_best_response(inst, mats, 30.0)[0] == pytest.approx(11 / 76, rel=1e-13)


def test_cp_reply_without_ad_value(default_market):
    inst, mats = default_market
    inst = inst.with_params(gamma=1e-9)
    mats = build_matrices(inst)
    p = 0.5 * float(inst.a.min())
    raw = cp_best_response_unconstrained(inst, mats, p)
    np.testing.assert_allclose(raw, (p - inst.a) / (2 * p), atol=1e-6)
    assert np.all(raw < 0)
    theta, projected = cp_best_response(inst, mats, p, return_info=True)
    assert projected
    np.testing.assert_array_equal(theta, 0.0)


def test_cp_reply_is_stationary(default_market):
    inst, mats = default_market
    theta = cp_best_response_unconstrained(inst, mats, 25.0)
    assert np.all((theta > 0) & (theta < 1))
    fd = finite_difference_gradient(lambda th: profit_at(inst, mats, 25.0, th), theta, 1e-6)
    assert np.abs(fd).max() < 1e-4


@pytest.mark.parametrize("p", [8.0, 15.0, 22.0, 45.0])
def test_box_reply_satisfies_kkt(default_market, p):
    inst, mats = default_market
    theta = cp_best_response(inst, mats, p)
    grad = cp_profit_gradient(inst, mats, Strategy(p, theta))
    scale = np.abs(grad).max() + p**2
    tol = 1e-8 * scale
    assert np.all(grad[theta <= 0] <= tol)
    assert np.all(grad[theta >= 1] >= -tol)
    interior = (theta > 0) & (theta < 1)
    assert np.all(np.abs(grad[interior]) <= tol)


def test_cp_reply_needs_positive_price(single_user):
    inst, mats = single_user
    with pytest.raises(DegeneratePrice):
        cp_best_response(inst, mats, 0.0)


def test_sp_reply_uniform_values():
    inst = generate_instance(GenerationConfig(n=30, seed=1)).with_params(a=np.full(30, 30.0))
    mats = build_matrices(inst)
    assert sp_best_response(inst, mats, np.zeros(30)) == pytest.approx(15.0, rel=1e-12)


def test_sp_reply_single_user(single_user):
    inst, mats = single_user
    assert sp_best_response(inst, mats, [0.5]) == pytest.approx(30.0, rel=1e-14)


def test_sp_reply_full_sponsorship(default_market):
    inst, mats = default_market
    with pytest.raises(AllSponsored):
        sp_best_response(inst, mats, np.ones(inst.n))


def test_sp_reply_is_stationary(default_market):
    inst, mats = default_market
    theta = np.random.default_rng(3).uniform(0, 0.1, inst.n)
    p = sp_best_response(inst, mats, theta)
    fd = finite_difference_gradient(lambda v: revenue_at(inst, mats, v[0], theta), [p], 1e-6)
    assert abs(fd[0]) < 1e-4
    assert sp_revenue_derivative(inst, mats, Strategy(p, theta)) == pytest.approx(0.0, abs=1e-10)


def test_single_user_equilibrium(single_user):
    inst, mats = single_user
    res = solve_competitive(inst, mats)
    p, theta = res.strategy.p, res.strategy.theta
    # the CP's stationary point is negative at p = 15, so it sponsors nothing
    assert p == pytest.approx(15.0, abs=1e-8)
    assert theta[0] == 0.0
    assert res.projected
    assert abs(sp_best_response(inst, mats, theta) - p) < 1e-8
    assert np.abs(cp_best_response(inst, mats, p) - theta).max() < 1e-8

    # grid oracle for both replies
    thetas = np.linspace(0, 1, 10_001)
    profits = [profit_at(inst, mats, p, [t]) for t in thetas]
    assert thetas[int(np.argmax(profits))] == 0.0
    prices = np.linspace(0.01, 29.99, 30_000)
    revenues = [revenue_at(inst, mats, q, theta) for q in prices]
    assert abs(prices[int(np.argmax(revenues))] - p) < 1e-3


def test_default_equilibrium_converges_deterministically(default_market):
    inst, mats = default_market
    one = solve_competitive(inst, mats)
    two = solve_competitive(inst, mats)
    assert one.residual < 1e-8
    assert one.payoffs == two.payoffs
    assert one.concave_at_iterates


def test_start_at_fixed_point(default_market):
    inst, mats = default_market
    res = solve_competitive(inst, mats)
    again = solve_competitive(inst, mats, theta0=res.strategy.theta, p0=res.strategy.p)
    assert again.iterations == 1


@pytest.mark.parametrize("seed", range(3))
def test_no_profitable_deviation(seed):
    inst = generate_instance(GenerationConfig(n=40, seed=seed))
    mats = build_matrices(inst)
    res = solve_competitive(inst, mats)
    p, theta = res.strategy.p, res.strategy.theta
    base_cp, base_sp = res.payoffs.cp_profit, res.payoffs.sp_revenue

    for factor in (0.99, 1.01):
        assert revenue_at(inst, mats, p * factor, theta) < base_sp
    for i in range(inst.n):
        for delta in (-0.01, 0.01):
            moved = theta.copy()
            moved[i] = np.clip(moved[i] + delta, 0, 1)
            if moved[i] == theta[i]:
                continue
            assert profit_at(inst, mats, p, moved) < base_cp


def test_unique_from_several_starts():
    inst = generate_instance(GenerationConfig(n=50, seed=4))
    mats = build_matrices(inst)
    ref = solve_competitive(inst, mats)
    assert check_assumption3(inst, mats, ref.strategy).holds
    rng = np.random.default_rng(0)
    for theta0, p0 in [(np.full(50, 0.5), 25.0), (rng.uniform(0, 1, 50), 8.0), (np.ones(50) * 0.9, 40.0)]:
        other = solve_competitive(inst, mats, theta0=theta0, p0=p0)
        assert abs(other.strategy.p - ref.strategy.p) < 1e-6
        assert np.abs(other.strategy.theta - ref.strategy.theta).max() < 1e-6


def test_interior_equilibrium_when_ads_are_valuable():
    # a large ad value makes sponsorship worthwhile for every user
    inst = MarketInstance.uniform(3, s=12.0)
    mats = build_matrices(inst)
    res = solve_competitive(inst, mats)
    theta, p = res.strategy.theta, res.strategy.p
    assert not res.projected
    assert np.all((theta > 0) & (theta < 1))
    np.testing.assert_allclose(cp_best_response_unconstrained(inst, mats, p), theta, atol=1e-8)
    assert sp_best_response(inst, mats, theta) == pytest.approx(p, abs=1e-8)
