"""Stage I, competitive case: CP and SP best-respond to each other.

The CP picks sponsorship ``theta`` to maximize its profit, the SP picks the
uniform price ``p`` to maximize revenue, both anticipating the users'
equilibrium demand ``x = K (a - p (1 - theta))``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .demand import DemandProfile, Strategy, demand_equilibrium
from .errors import AllSponsored, DegeneratePrice, InvalidConfig, NoConvergence
from .model import EquilibriumMatrices, MarketInstance

__all__ = [
    "PayoffPair",
    "CompetitiveResult",
    "cp_profit",
    "sp_revenue",
    "cp_profit_gradient",
    "sp_revenue_derivative",
    "cp_hessian",
    "sp_second_derivative",
    "cp_best_response_unconstrained",
    "cp_best_response",
    "sp_best_response",
    "solve_competitive",
]


@dataclass(frozen=True)
class PayoffPair:
    cp_profit: float
    sp_revenue: float

    @property
    def aggregate(self) -> float:
        return self.cp_profit + self.sp_revenue


@dataclass(frozen=True, eq=False)
class CompetitiveResult:
    strategy: Strategy
    demand: DemandProfile
    payoffs: PayoffPair
    iterations: int
    residual: float
    projected: bool
    # concavity of both leaders' objectives held at every visited iterate
    concave_at_iterates: bool = True
    history: list = field(default_factory=list)


def cp_profit(inst: MarketInstance, strat: Strategy, x) -> float:
    x = np.asarray(x, dtype=float)
    ad_value = inst.gamma * np.sum(inst.s * x - inst.t * x**2)
    return float(ad_value - strat.p * np.sum(x * strat.theta))


def sp_revenue(strat: Strategy, x) -> float:
    return float(strat.p * np.sum(x))


def cp_profit_gradient(inst: MarketInstance, mats: EquilibriumMatrices, strat: Strategy) -> np.ndarray:
    """Gradient of CP profit in ``theta`` through the induced demand (dx/dtheta = p K)."""
    p, theta = strat.p, strat.theta
    K, a, gt = mats.K, inst.a, inst.gamma * inst.t
    w = 1.0 - theta
    return (
        inst.gamma * inst.s * p * mats.K1
        - 2.0 * gt * p * (mats.K2 @ (a - p * w))
        - p * (K @ a)
        + p**2 * (K @ w)
        - p**2 * (K @ theta)
    )


def sp_revenue_derivative(inst: MarketInstance, mats: EquilibriumMatrices, strat: Strategy) -> float:
    """d(revenue)/dp through the induced demand (dx/dp = -K (1 - theta))."""
    w = 1.0 - strat.theta
    return float(mats.K1 @ inst.a - 2.0 * strat.p * (mats.K1 @ w))


def cp_hessian(inst: MarketInstance, mats: EquilibriumMatrices, p: float) -> np.ndarray:
    return -2.0 * inst.t * inst.gamma * p**2 * mats.K2 - 2.0 * p**2 * mats.K


def sp_second_derivative(mats: EquilibriumMatrices, theta) -> float:
    return float(-2.0 * (mats.K1 @ (1.0 - np.asarray(theta))))


def cp_best_response_unconstrained(inst: MarketInstance, mats: EquilibriumMatrices, p: float) -> np.ndarray:
    """Stationary point of CP profit in ``theta``, ignoring the [0, 1] box."""
    if not p > 0:
        raise DegeneratePrice(f"CP best response needs p > 0, got {p}")
    n = mats.n
    gtK = inst.gamma * inst.t * mats.K
    rhs = inst.gamma * inst.s * np.ones(n) + (2.0 * gtK + np.eye(n)) @ (p - inst.a)
    return np.linalg.solve(gtK + np.eye(n), rhs) / (2.0 * p)


def _box_ascent(grad_fn, lipschitz, x0, lo, hi, tol, max_iter):
    # projected gradient ascent with fixed step 1/L on a concave quadratic
    x = np.clip(x0, lo, hi)
    step = 1.0 / lipschitz
    for k in range(1, max_iter + 1):
        x_new = np.clip(x + step * grad_fn(x), lo, hi)
        moved = float(np.abs(x_new - x).max())
        x = x_new
        if moved * lipschitz < tol:
            return x, k
    raise NoConvergence("projected ascent on CP profit stalled", moved * lipschitz)


def cp_best_response(
    inst: MarketInstance,
    mats: EquilibriumMatrices,
    p: float,
    tol: float = 1e-12,
    max_iter: int = 100_000,
    return_info: bool = False,
):
    """CP's best sponsorship vector in ``[0, 1]^n`` for price ``p``.

    The closed-form stationary point is clamped to the box; if the clamp
    binds, the box-constrained maximizer is refined by projected gradient
    ascent (CP profit is strictly concave in theta, so it is unique). With
    ``return_info`` the tuple ``(theta, projected)`` is returned.
    """
    theta_hat = cp_best_response_unconstrained(inst, mats, p)
    clamped = np.clip(theta_hat, 0.0, 1.0)
    projected = bool(np.any(clamped != theta_hat))
    if projected:
        lam_max = 2.0 * p**2 * (inst.gamma * inst.t * mats.eigh[0][-1] ** 2 + mats.eigh[0][-1])

        def grad(theta):
            return cp_profit_gradient(inst, mats, Strategy(p, theta))

        # scale the stopping rule with p^2 so it is a bound on theta, not on profit
        clamped, _ = _box_ascent(grad, lam_max, clamped, 0.0, 1.0, tol * max(1.0, p**2), max_iter)
    if return_info:
        return clamped, projected
    return clamped


def sp_best_response(inst: MarketInstance, mats: EquilibriumMatrices, theta) -> float:
    """Revenue-maximizing uniform price given sponsorship ``theta``."""
    theta = np.asarray(theta, dtype=float)
    denom = float(mats.K1 @ (1.0 - theta))
    if not denom > 0:
        raise AllSponsored("1^T K (1 - theta) <= 0: revenue has no interior maximizer")
    # the second derivative is -2 * denom < 0 here, so this is the maximizer
    return float(mats.K1 @ inst.a / (2.0 * denom))


def solve_competitive(
    inst: MarketInstance,
    mats: EquilibriumMatrices,
    tol: float = 1e-8,
    max_iter: int = 10_000,
    theta0=None,
    p0: float | None = None,
) -> CompetitiveResult:
    """Best-response dynamics between CP and SP.

    Starts from no sponsorship and the SP's reply to it unless ``theta0``/``p0``
    are given. Each sweep updates the CP then the SP; iteration stops when
    ``max(|dp| / max(1, p), |d theta|_inf) < tol``.
    """
    if tol <= 0:
        raise InvalidConfig("tol must be > 0")
    n = inst.n
    theta = np.zeros(n) if theta0 is None else np.clip(np.asarray(theta0, dtype=float), 0.0, 1.0)
    p = sp_best_response(inst, mats, theta) if p0 is None else float(p0)

    history = []
    concave = True
    projected = False
    for k in range(1, int(max_iter) + 1):
        theta_new, projected = cp_best_response(inst, mats, p, tol=min(tol, 1e-10) * 1e-2, return_info=True)
        p_new = sp_best_response(inst, mats, theta_new)

        concave &= sp_second_derivative(mats, theta_new) < 0
        lam = mats.eigh[0]
        concave &= bool(np.max(-2.0 * p**2 * (inst.gamma * inst.t * lam**2 + lam)) < 0)

        residual = max(abs(p_new - p) / max(1.0, abs(p)), float(np.abs(theta_new - theta).max()))
        history.append(residual)
        theta, p = theta_new, p_new
        if residual < tol:
            break
    else:
        raise NoConvergence(f"best-response dynamics did not settle in {max_iter} sweeps", history[-1], history)

    strat = Strategy(p, theta)
    demand = demand_equilibrium(inst, strat, mats)
    payoffs = PayoffPair(cp_profit(inst, strat, demand.x), sp_revenue(strat, demand.x))
    return CompetitiveResult(
        strategy=strat,
        demand=demand,
        payoffs=payoffs,
        iterations=k,
        residual=residual,
        projected=projected,
        concave_at_iterates=bool(concave),
        history=history,
    )
