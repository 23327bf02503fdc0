"""Stackelberg equilibria of a sponsored-data market with social network effects."""
from .competitive import (
    CompetitiveResult,
    PayoffPair,
    cp_best_response,
    cp_profit,
    solve_competitive,
    sp_best_response,
    sp_revenue,
)
from .cooperative import (
    CooperativeResult,
    coalition_payoff,
    recover_strategy,
    solve_cooperative_closed_form,
    solve_cooperative_gradient,
)
from .demand import DemandProfile, Strategy, demand_equilibrium, iterate_demand
from .experiment import ExperimentConfig, Sweep, SweepRow, run_experiment, summarize
from .model import EquilibriumMatrices, GenerationConfig, MarketInstance, build_matrices, generate_instance
from .validate import check_assumptions, check_definiteness_competitive, check_definiteness_cooperative

__version__ = "0.1.0"
