"""Exit criteria, each at its stated tolerance and runtime budget.

A PASS/FAIL line per criterion is printed in the terminal summary.
"""
import time

import numpy as np
import pytest

from sponsornet.competitive import (
    cp_best_response,
    cp_best_response_unconstrained,
    cp_profit_gradient,
    solve_competitive,
    sp_best_response,
    sp_revenue_derivative,
)
from sponsornet.cooperative import solve_cooperative_closed_form, solve_cooperative_gradient
from sponsornet.demand import Strategy, best_response_user, brute_force_user_optimum, demand_equilibrium
from sponsornet.errors import NonPositiveDemand
from sponsornet.experiment import ExperimentConfig, Sweep, rows_to_csv, run_experiment, summarize
from sponsornet.model import GenerationConfig, build_matrices, generate_instance
from sponsornet.validate import (
    assumption3_threshold,
    check_assumption1,
    check_assumption3,
    check_definiteness_competitive,
    check_definiteness_cooperative,
    finite_difference_gradient,
)

from conftest import small_instance

pytestmark = pytest.mark.acceptance

DEFAULT_SEEDS = range(10)


@pytest.fixture(scope="module")
def default_equilibria():
    """Competitive and cooperative outcomes on the ten default-parameter seeds."""
    out = []
    for seed in DEFAULT_SEEDS:
        inst = generate_instance(GenerationConfig(seed=seed))
        mats = build_matrices(inst)
        start = time.perf_counter()
        comp = solve_competitive(inst, mats, tol=1e-8, max_iter=10_000)
        elapsed = time.perf_counter() - start
        out.append((inst, mats, comp, elapsed))
    return out


def _induced(inst, mats, p, theta):
    strat = Strategy(p, theta)
    return strat, demand_equilibrium(inst, strat, mats).x


@pytest.mark.criterion_1
def test_stage_two_demand():
    start = time.perf_counter()
    step = 1e-4
    rng = np.random.default_rng(2024)
    checked, seed = 0, 0
    while checked < 200:
        inst, mats = small_instance(seed)
        seed += 1
        if not check_assumption1(inst).holds:
            continue
        # a strategy at which every user demands a positive amount
        for _ in range(100):
            strat = Strategy(float(rng.uniform(0.0, 20.0)), rng.uniform(0.0, 1.0, inst.n))
            try:
                x = demand_equilibrium(inst, strat, mats).x
                break
            except NonPositiveDemand:
                continue
        else:
            continue
        br = np.array([best_response_user(inst, strat, x, i) for i in range(inst.n)])
        assert np.abs(br - x).max() < 1e-8
        for i in range(inst.n):
            grid = brute_force_user_optimum(inst, strat, x, i, grid_step=step, x_max=max(2.0, 2.0 * x[i]))
            assert abs(grid - x[i]) <= step
        checked += 1
    assert time.perf_counter() - start < 10.0


@pytest.mark.criterion_2
def test_best_response_formulas():
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    points = 0
    while points < 100:
        inst, mats = small_instance(int(rng.integers(0, 1_000_000)))
        n = inst.n
        p = float(rng.uniform(10.0, 25.0))
        theta = rng.uniform(0.05, 0.95, n)
        try:
            _induced(inst, mats, p, theta)
        except NonPositiveDemand:
            continue

        # smooth objectives, evaluated off the [0, 1] box too since the
        # closed-form replies ignore it
        def profit(th):
            x = mats.K @ (inst.a - p * (1 - th))
            return inst.gamma * np.sum(inst.s * x - inst.t * x**2) - p * (x @ th)

        def revenue(v):
            return v[0] * np.sum(mats.K @ (inst.a - v[0] * (1 - theta)))

        h = 1e-6 * p
        g_cp = cp_profit_gradient(inst, mats, Strategy(p, theta))
        fd_cp = finite_difference_gradient(profit, theta, 1e-6)
        assert np.abs(g_cp - fd_cp).max() <= 1e-5 * max(1.0, np.abs(fd_cp).max())
        g_sp = sp_revenue_derivative(inst, mats, Strategy(p, theta))
        fd_sp = finite_difference_gradient(revenue, [p], h)[0]
        assert abs(g_sp - fd_sp) <= 1e-5 * max(1.0, abs(fd_sp))

        # the closed-form replies are stationary for their own objectives
        theta_star = cp_best_response_unconstrained(inst, mats, p)
        assert np.abs(finite_difference_gradient(profit, theta_star, 1e-6)).max() < 1e-4
        p_star = sp_best_response(inst, mats, theta)
        assert abs(finite_difference_gradient(revenue, [p_star], 1e-6)[0]) < 1e-4
        points += 1
    assert time.perf_counter() - start < 30.0


@pytest.mark.criterion_3
def test_competitive_equilibrium(default_equilibria):
    total = 0.0
    for inst, mats, comp, elapsed in default_equilibria:
        total += elapsed
        assert comp.residual < 1e-8
        assert comp.iterations <= 10_000
        p, theta = comp.strategy.p, comp.strategy.theta
        assert abs(sp_best_response(inst, mats, theta) - p) < 1e-6
        assert np.abs(cp_best_response(inst, mats, p) - theta).max() < 1e-6
    assert total < 60.0


@pytest.mark.criterion_4
def test_cooperative_optimum():
    start = time.perf_counter()
    for seed in range(50):
        inst = generate_instance(GenerationConfig(seed=seed))
        mats = build_matrices(inst)
        closed = solve_cooperative_closed_form(inst, mats)
        grad = solve_cooperative_gradient(inst, mats, tol=1e-8)
        rel = abs(closed.aggregate_payoff - grad.aggregate_payoff) / abs(closed.aggregate_payoff)
        assert rel <= 1e-6
        H = -2.0 * inst.gamma * inst.t * mats.K2 - 2.0 * mats.K
        assert np.linalg.eigvalsh(H).max() < 0
    assert time.perf_counter() - start < 60.0


@pytest.mark.criterion_5
def test_cooperation_dominates(default_equilibria):
    strict = 0
    for inst, mats, comp, _ in default_equilibria:
        coop = solve_cooperative_closed_form(inst, mats)
        gap = coop.aggregate_payoff - comp.payoffs.aggregate
        assert gap >= 0
        strict += gap > 0
    assert strict >= 9


TREND_SWEEPS = [
    (Sweep("n", 20, 100, 5), +1),
    (Sweep("mu_g", 1, 4, 4), +1),
    (Sweep("c", 3, 6, 4), -1),
]


@pytest.mark.criterion_6
def test_trend_reproduction():
    start = time.perf_counter()
    bad_curves = []
    for sweep, sign in TREND_SWEEPS:
        rows = run_experiment(ExperimentConfig(sweep=sweep, replications=10))
        summary = summarize(rows)
        for mode in ("competitive", "cooperative"):
            curve = [s for s in summary if s.mode == mode]
            for metric in ("total_demand", "cp_profit", "sp_revenue"):
                values = np.array([s.mean[metric] for s in curve])
                violations = int(np.sum(sign * np.diff(values) <= 0))
                if violations > 1:
                    bad_curves.append((sweep.param, mode, metric, values.round(4).tolist()))
    assert not bad_curves
    assert time.perf_counter() - start < 300.0


@pytest.mark.criterion_7
def test_proof_machinery():
    rng = np.random.default_rng(11)
    sylvester_failures, counterexamples, a3_points = [], [], 0
    for k in range(50):
        inst, mats = small_instance(k)
        if k % 2 == 0:
            # push every effective price above the bound so the ex-post check passes
            theta = rng.uniform(0.0, 0.3, inst.n)
            bound = float(assumption3_threshold(inst, mats).max())
            p = bound / (1.0 - theta.max()) * float(rng.uniform(1.01, 1.5))
        else:
            theta = rng.uniform(0.0, 1.0, inst.n)
            p = float(rng.uniform(1.0, 40.0))
        strat = Strategy(p, theta)
        comp = check_definiteness_competitive(inst, mats, strat)
        coop = check_definiteness_cooperative(inst, mats, strat)
        if not (comp.sylvester_agrees and coop.sylvester_agrees):
            sylvester_failures.append(k)
        if check_assumption3(inst, mats, strat).holds:
            a3_points += 1
            if not (comp.blocks_positive_definite and coop.hessian_negative_definite):
                counterexamples.append(
                    f"point {k}: n={inst.n} p={p:.3f} "
                    f"min eig A,B,C = {comp.A.original.min_eigenvalue:.3g}, "
                    f"{comp.B.original.min_eigenvalue:.3g}, {comp.C.original.min_eigenvalue:.3g}; "
                    f"max eig H = {coop.hessian.max_eigenvalue:.3g}"
                )
    assert a3_points >= 25
    assert not sylvester_failures
    assert not counterexamples, f"{len(counterexamples)} of {a3_points} points:\n" + "\n".join(counterexamples)


@pytest.mark.criterion_8
def test_determinism(tmp_path):
    cfg = ExperimentConfig(generation=GenerationConfig(n=40), sweep=Sweep("mu_g", 1, 4, 4), replications=3)
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    run_experiment(ExperimentConfig(**{**cfg.__dict__, "output_path": str(first)}))
    run_experiment(ExperimentConfig(**{**cfg.__dict__, "output_path": str(second), "workers": 2}))
    assert first.read_bytes() == second.read_bytes()
    assert rows_to_csv(run_experiment(cfg)).encode() == first.read_bytes()
