"""Stage I, cooperative case: CP and SP jointly maximize their summed payoff.

Users react only to the effective price ``q = p (1 - theta)``, and the
coalition's payoff depends on ``(theta, p)`` only through ``q``. The closed
form solves the strictly concave problem in ``q``; the gradient method works
in the original ``(theta, p)`` coordinates and serves as a cross-check.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .competitive import cp_profit, sp_revenue
from .demand import DemandProfile, Strategy, user_utilities
from .errors import DegenerateQ, InvalidConfig, NoConvergence, NonPositiveDemand
from .model import EquilibriumMatrices, MarketInstance

__all__ = [
    "CooperativeResult",
    "coalition_payoff",
    "coalition_gradient",
    "coalition_hessian",
    "coalition_payoff_strategy",
    "coalition_gradient_strategy",
    "recover_strategy",
    "solve_cooperative_closed_form",
    "solve_cooperative_gradient",
]


@dataclass(frozen=True, eq=False)
class CooperativeResult:
    strategy: Strategy
    effective_price: np.ndarray
    demand: DemandProfile
    aggregate_payoff: float
    cp_profit: float
    sp_revenue: float
    method: str
    iterations: int = 0
    residual: float = 0.0


def _value(inst, mats, q):
    x = mats.K @ (inst.a - q)
    return inst.gamma * np.sum(inst.s * x - inst.t * x**2) + q @ x


def coalition_payoff(inst: MarketInstance, mats: EquilibriumMatrices, q) -> float:
    """Summed CP profit and SP revenue when users pay ``q`` per unit."""
    q = np.asarray(q, dtype=float)
    x = mats.K @ (inst.a - q)
    bad = np.flatnonzero(x <= 0)
    if bad.size:
        raise NonPositiveDemand(bad, demand=x)
    return float(inst.gamma * np.sum(inst.s * x - inst.t * x**2) + q @ x)


def coalition_gradient(inst: MarketInstance, mats: EquilibriumMatrices, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    r = inst.a - q
    return (
        -inst.gamma * inst.s * mats.K1
        + 2.0 * inst.gamma * inst.t * (mats.K2 @ r)
        + mats.K @ (inst.a - 2.0 * q)
    )


def coalition_hessian(inst: MarketInstance, mats: EquilibriumMatrices) -> np.ndarray:
    """Hessian in ``q``: ``-2 gamma t K^2 - 2 K`` (constant)."""
    return -2.0 * inst.gamma * inst.t * mats.K2 - 2.0 * mats.K


def coalition_payoff_strategy(inst: MarketInstance, mats: EquilibriumMatrices, theta, p: float) -> float:
    """Coalition payoff as a function of ``(theta, p)``; no positivity check."""
    q = p * (1.0 - np.asarray(theta, dtype=float))
    return float(_value(inst, mats, q))


def coalition_gradient_strategy(inst: MarketInstance, mats: EquilibriumMatrices, theta, p: float):
    """Return ``(d/dtheta, d/dp)`` of the coalition payoff."""
    w = 1.0 - np.asarray(theta, dtype=float)
    gq = coalition_gradient(inst, mats, p * w)
    return -p * gq, float(w @ gq)


def recover_strategy(q) -> Strategy:
    """Canonical ``(p, theta)`` with ``p (1 - theta) = q``: ``p = max q``.

    The least-sponsored user pays the full price. For ``q = 0`` every price
    with full sponsorship works; a :class:`DegenerateQ` warning is issued and
    ``p = 1, theta = 1`` returned.
    """
    q = np.asarray(q, dtype=float)
    if np.any(q < 0):
        raise ValueError("effective prices must be >= 0")
    p = float(q.max()) if q.size else 0.0
    if p == 0.0:
        warnings.warn("all effective prices are zero; strategy is not identified", DegenerateQ, stacklevel=2)
        return Strategy(1.0, np.ones(q.size))
    theta = np.clip(1.0 - q / p, 0.0, 1.0)
    return Strategy(p, theta)


def _finish(inst, mats, strat, q, method, iterations=0, residual=0.0):
    x = mats.K @ (inst.a - q)
    bad = np.flatnonzero(x <= 0)
    if bad.size:
        raise NonPositiveDemand(bad, demand=x)
    cp = cp_profit(inst, strat, x)
    sp = sp_revenue(strat, x)
    return CooperativeResult(
        strategy=strat,
        effective_price=q,
        demand=DemandProfile(x=x, utilities=user_utilities(inst, strat, x)),
        aggregate_payoff=cp + sp,
        cp_profit=cp,
        sp_revenue=sp,
        method=method,
        iterations=iterations,
        residual=residual,
    )


def _fd_gradient(f, x, step):
    out = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        out[i] = (f(x + e) - f(x - e)) / (2.0 * step)
    return out


def solve_cooperative_closed_form(
    inst: MarketInstance, mats: EquilibriumMatrices, verify: bool = True
) -> CooperativeResult:
    """Optimal effective prices from ``(2 gamma t K + 2 I) q = (2 gamma t K + I) a - gamma s 1``.

    With ``verify`` the stationarity of ``q*`` is confirmed by central finite
    differences and the Hessian in ``q`` by its eigenvalues. Negative
    components (a price subsidy) are removed by projected ascent on ``q >= 0``.
    """
    n = inst.n
    eye = np.eye(n)
    gtK2 = 2.0 * inst.gamma * inst.t * mats.K
    rhs = (gtK2 + eye) @ inst.a - inst.gamma * inst.s * np.ones(n)
    q = np.linalg.solve(gtK2 + 2.0 * eye, rhs)

    H = coalition_hessian(inst, mats)
    lam = np.linalg.eigvalsh(H)
    if verify and not lam[-1] < 0:
        raise ArithmeticError(f"coalition Hessian not negative definite (max eigenvalue {lam[-1]:.3e})")

    iterations = 0
    if np.any(q < 0):
        L = -lam[0]
        q = np.maximum(q, 0.0)
        for iterations in range(1, 100_001):
            q_new = np.maximum(q + coalition_gradient(inst, mats, q) / L, 0.0)
            moved = float(np.abs(q_new - q).max())
            q = q_new
            if moved < 1e-13 * max(1.0, float(np.abs(q).max())):
                break
        else:
            raise NoConvergence("projected ascent on q >= 0 stalled", moved)
    elif verify:
        scale = max(1.0, float(np.abs(inst.a).max()))
        fd = _fd_gradient(lambda v: _value(inst, mats, v), q, 1e-6 * scale)
        # stationarity up to finite-difference noise in the objective value
        noise = 1e-7 * max(1.0, abs(float(_value(inst, mats, q))))
        if np.abs(fd).max() > max(1e-6, noise):
            raise ArithmeticError(f"closed-form q* is not stationary (|grad| = {np.abs(fd).max():.3e})")

    return _finish(inst, mats, recover_strategy(q), q, "closed_form", iterations, 0.0)


def solve_cooperative_gradient(
    inst: MarketInstance,
    mats: EquilibriumMatrices,
    tol: float = 1e-8,
    max_iter: int = 100_000,
    theta0=None,
    p0: float | None = None,
) -> CooperativeResult:
    """Projected gradient ascent on the coalition payoff over ``(theta, p)``.

    Feasible set is ``[0, 1]^n x (0, p_max]`` with ``p_max = 2 max a``. Trial
    steps come from the Barzilai-Borwein rule and are halved until a
    nonmonotone Armijo test passes; iteration stops once the projected-gradient
    step ``|z - P(z + grad)|_inf < tol``.
    """
    if tol <= 0:
        raise InvalidConfig("tol must be > 0")
    n = inst.n
    p_max = 2.0 * float(inst.a.max())
    p_min = 1e-12 * p_max
    lo = np.append(np.zeros(n), p_min)
    hi = np.append(np.ones(n), p_max)

    theta = np.zeros(n) if theta0 is None else np.asarray(theta0, dtype=float)
    p = 0.5 * float(inst.a.max()) if p0 is None else float(p0)
    z = np.clip(np.append(theta, p), lo, hi)

    def f(v):
        return coalition_payoff_strategy(inst, mats, v[:n], v[n])

    def grad(v):
        g_theta, g_p = coalition_gradient_strategy(inst, mats, v[:n], v[n])
        return np.append(g_theta, g_p)

    # spectral (Barzilai-Borwein) step along the projected direction, then a
    # nonmonotone backtracking search that halves the step until it is accepted
    memory = 10
    step_min, step_max = 1e-10, 1e10
    value = f(z)
    recent = [value]
    gz = grad(z)
    step = 1.0 / max(1.0, float(np.abs(gz).max()))
    residual = np.inf
    for k in range(int(max_iter) + 1):
        residual = float(np.abs(z - np.clip(z + gz, lo, hi)).max())
        if residual < tol:
            break
        if k == int(max_iter):
            raise NoConvergence(f"gradient method did not converge in {max_iter} iterations", residual)
        d = np.clip(z + step * gz, lo, hi) - z
        slope = float(gz @ d)
        ref = max(recent)
        lam = 1.0
        while True:
            z_new = z + lam * d
            new_value = f(z_new)
            if new_value >= ref + 1e-4 * lam * slope:
                break
            lam *= 0.5
            if lam < 1e-20:
                raise NoConvergence("line search failed", residual)
        g_new = grad(z_new)
        s_vec, y_vec = z_new - z, gz - g_new
        sy = float(s_vec @ y_vec)
        step = float(np.clip(s_vec @ s_vec / sy, step_min, step_max)) if sy > 0 else step_max
        z, value, gz = z_new, new_value, g_new
        recent = (recent + [value])[-memory:]

    strat = Strategy(z[n], z[:n])
    return _finish(inst, mats, strat, strat.effective_price, "gradient", k, residual)
