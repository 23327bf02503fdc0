"""Stage II: users' data demand given the leaders' price and sponsorship."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IndexOutOfRange, InvalidConfig, NoConvergence, NonPositiveDemand
from .model import EquilibriumMatrices, MarketInstance, build_matrices

__all__ = [
    "Strategy",
    "DemandProfile",
    "user_utility",
    "user_utilities",
    "best_response_user",
    "demand_equilibrium",
    "linear_demand",
    "iterate_demand",
    "brute_force_user_optimum",
]


@dataclass(frozen=True, eq=False)
class Strategy:
    """Leader decisions: uniform unit price ``p`` and sponsorship fractions ``theta``."""

    p: float
    theta: np.ndarray

    def __post_init__(self):
        theta = np.array(np.atleast_1d(self.theta), dtype=float, copy=True)
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "p", float(self.p))
        if not np.isfinite(self.p) or self.p < 0:
            raise ValueError(f"price must be finite and >= 0, got {self.p}")
        if theta.ndim != 1 or np.any(~np.isfinite(theta)) or np.any(theta < 0) or np.any(theta > 1):
            raise ValueError("theta must be a vector with entries in [0, 1]")

    @classmethod
    def unsponsored(cls, p: float, n: int) -> "Strategy":
        return cls(p, np.zeros(n))

    @property
    def effective_price(self) -> np.ndarray:
        """What each user pays per unit: ``p * (1 - theta)``."""
        return self.p * (1.0 - self.theta)


@dataclass(frozen=True, eq=False)
class DemandProfile:
    x: np.ndarray
    utilities: np.ndarray

    @property
    def total(self) -> float:
        return float(self.x.sum())


def _check_sizes(inst, strat, x=None):
    if strat.theta.shape != (inst.n,):
        raise ValueError(f"theta has length {strat.theta.size}, market has {inst.n} users")
    if x is not None and np.shape(x) != (inst.n,):
        raise ValueError(f"demand vector must have length {inst.n}")


def user_utilities(inst: MarketInstance, strat: Strategy, x) -> np.ndarray:
    """Utility of every user at demand profile ``x`` (vectorized form of :func:`user_utility`)."""
    x = np.asarray(x, dtype=float)
    _check_sizes(inst, strat, x)
    total = x.sum()
    return (
        inst.a * x
        - inst.b * x**2
        + x * (inst.g @ x)
        - inst.c * total**2
        - strat.effective_price * x
    )


def user_utility(inst: MarketInstance, strat: Strategy, x, i: int) -> float:
    if not 0 <= i < inst.n:
        raise IndexOutOfRange(f"user index {i} outside 0..{inst.n - 1}")
    x = np.asarray(x, dtype=float)
    _check_sizes(inst, strat, x)
    xi = x[i]
    total = x.sum()
    return float(
        inst.a[i] * xi
        - inst.b[i] * xi**2
        + xi * (inst.g[i] @ x)
        - inst.c * total**2
        - strat.p * (1.0 - strat.theta[i]) * xi
    )


def _full_profile(inst, x_others, i):
    x_others = np.asarray(x_others, dtype=float)
    if x_others.shape == (inst.n,):
        return x_others
    if x_others.shape == (inst.n - 1,):
        return np.insert(x_others, i, 0.0)
    raise ValueError(f"x_others must have length {inst.n} or {inst.n - 1}")


def best_response_user(inst: MarketInstance, strat: Strategy, x_others, i: int) -> float:
    """Demand maximizing user ``i``'s utility with everyone else held fixed.

    ``x_others`` may be the full profile (entry ``i`` is ignored) or the
    profile with entry ``i`` removed.
    """
    if not 0 <= i < inst.n:
        raise IndexOutOfRange(f"user index {i} outside 0..{inst.n - 1}")
    x = _full_profile(inst, x_others, i).copy()
    x[i] = 0.0
    weights = inst.g[i] - 2.0 * inst.c
    weights[i] = 0.0
    num = inst.a[i] - strat.p * (1.0 - strat.theta[i]) + weights @ x
    return max(0.0, float(num / (2.0 * inst.b[i] + 2.0 * inst.c)))


def linear_demand(mats: EquilibriumMatrices, a, q) -> np.ndarray:
    """Unclamped interior demand ``K (a - q)`` for effective prices ``q``."""
    return mats.K @ (np.asarray(a, dtype=float) - q)


def demand_equilibrium(
    inst: MarketInstance, strat: Strategy, mats: EquilibriumMatrices | None = None
) -> DemandProfile:
    """Closed-form interior equilibrium ``x* = K [a - p (1 - theta)]``.

    Raises :class:`NonPositiveDemand` when some user's demand is not strictly
    positive; use :func:`iterate_demand` for the clamped fixed point then.
    """
    if mats is None:
        mats = build_matrices(inst)
    _check_sizes(inst, strat)
    x = linear_demand(mats, inst.a, strat.effective_price)
    bad = np.flatnonzero(x <= 0)
    if bad.size:
        raise NonPositiveDemand(bad, demand=x)
    return DemandProfile(x=x, utilities=user_utilities(inst, strat, x))


def iterate_demand(
    inst: MarketInstance,
    strat: Strategy,
    x0=None,
    tol: float = 1e-10,
    max_iter: int = 100_000,
    relaxation: float = 1.0,
) -> DemandProfile:
    """Simultaneous best-response iteration ``x <- max(0, BR(x))``.

    ``relaxation`` < 1 damps each step (``x <- x + w (BR(x) - x)``); plain
    Jacobi updates can oscillate on large markets with strong substitution
    even when every row condition holds.
    """
    if tol <= 0:
        raise InvalidConfig("tol must be > 0")
    if not 0 < relaxation <= 1:
        raise InvalidConfig("relaxation must be in (0, 1]")
    _check_sizes(inst, strat)
    n = inst.n
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if x.shape != (n,):
        raise ValueError(f"x0 must have length {n}")

    W = inst.g - 2.0 * inst.c
    np.fill_diagonal(W, 0.0)
    denom = 2.0 * inst.b + 2.0 * inst.c
    base = inst.a - strat.effective_price

    history = []
    for _ in range(int(max_iter)):
        br = np.maximum(0.0, (base + W @ x) / denom)
        step = br - x
        x = x + relaxation * step
        residual = float(np.abs(step).max()) * relaxation
        history.append(residual)
        if residual < tol:
            return DemandProfile(x=x, utilities=user_utilities(inst, strat, x))
        if not np.isfinite(residual) or residual > 1e12:
            raise NoConvergence("best-response iteration diverged", residual, history[-50:])
    raise NoConvergence(f"no convergence after {max_iter} iterations", history[-1], history[-50:])


def brute_force_user_optimum(
    inst: MarketInstance, strat: Strategy, x_others, i: int, grid_step: float, x_max: float
) -> float:
    """Grid search of user ``i``'s utility over ``{0, grid_step, ..., x_max}``. Test oracle."""
    if grid_step <= 0:
        raise InvalidConfig("grid_step must be > 0")
    if not 0 <= i < inst.n:
        raise IndexOutOfRange(f"user index {i} outside 0..{inst.n - 1}")
    x = _full_profile(inst, x_others, i).copy()
    grid = np.arange(0.0, x_max + 0.5 * grid_step, grid_step)
    others = x.copy()
    others[i] = 0.0
    rest = others.sum()
    social = inst.g[i] @ others
    # u_i(z) with the other users frozen, evaluated on the whole grid at once
    values = (
        inst.a[i] * grid
        - inst.b[i] * grid**2
        + grid * social
        - inst.c * (rest + grid) ** 2
        - strat.p * (1.0 - strat.theta[i]) * grid
    )
    return float(grid[int(np.argmax(values))])
