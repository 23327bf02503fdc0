"""Runtime checks for the model's standing assumptions and concavity conditions.

Three assumptions are checked:

1. bounded demand incentives: ``sum_j (g_ij - 2c) / (2 b_i + 2 c) < 1`` for every user;
2. strictly positive equilibrium demand at a given strategy;
3. every effective price above the threshold
   ``max{gamma s, a_i / 3, [(sqrt(2 gamma t K) + I)^-1 sqrt(gamma t K / 2) a]_i}``.

The definiteness checks assemble the block matrices used to argue uniqueness
of the competitive equilibrium (``A``, ``B``, ``C``, with
``grad F + grad F^T = -A - B - C``) and concavity of the coalition payoff
(``D``, ``E``, ``F``, with ``Hessian = -D - E - F``), each with its
block-diagonalizing congruence ``P^T Q P``. Verdicts come from eigenvalues so
reports carry margins, not just flags.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .demand import Strategy
from .errors import NotPositiveDefinite
from .model import EquilibriumMatrices, MarketInstance

__all__ = [
    "AssumptionCheck",
    "AssumptionReport",
    "MatrixVerdict",
    "CongruenceCheck",
    "CompetitiveDefiniteness",
    "CooperativeDefiniteness",
    "check_assumption1",
    "check_assumption2",
    "check_assumption3",
    "assumption3_threshold",
    "check_assumptions",
    "inertia",
    "competitive_pseudo_jacobian",
    "competitive_blocks",
    "cooperative_hessian",
    "cooperative_blocks",
    "check_definiteness_competitive",
    "check_definiteness_cooperative",
    "finite_difference_gradient",
    "finite_difference_hessian",
]


@dataclass(frozen=True, eq=False)
class AssumptionCheck:
    """Outcome of one assumption test; ``holds`` iff every margin is > 0."""

    holds: bool
    values: np.ndarray
    margins: np.ndarray

    @property
    def min_margin(self) -> float:
        return float(self.margins.min()) if self.margins.size else np.inf


@dataclass(frozen=True, eq=False)
class AssumptionReport:
    a1: AssumptionCheck
    a2: AssumptionCheck
    a3: AssumptionCheck
    strategy: Strategy

    @property
    def a1_holds(self) -> bool:
        return self.a1.holds

    @property
    def a2_holds(self) -> bool:
        return self.a2.holds

    @property
    def a3_holds(self) -> bool:
        return self.a3.holds


def check_assumption1(inst: MarketInstance) -> AssumptionCheck:
    W = inst.g - 2.0 * inst.c
    np.fill_diagonal(W, 0.0)
    ratios = W.sum(axis=1) / (2.0 * inst.b + 2.0 * inst.c)
    margins = 1.0 - ratios
    return AssumptionCheck(bool(np.all(margins > 0)), ratios, margins)


def check_assumption2(inst: MarketInstance, mats: EquilibriumMatrices, strat: Strategy) -> AssumptionCheck:
    x = mats.K @ (inst.a - strat.effective_price)
    return AssumptionCheck(bool(np.all(x > 0)), x, x)


def assumption3_threshold(inst: MarketInstance, mats: EquilibriumMatrices) -> np.ndarray:
    """Per-user lower bound on the effective price (strategy independent)."""
    gt = inst.gamma * inst.t
    root_2gtK = mats.sqrtm(2.0 * gt)
    root_half = mats.sqrtm(0.5 * gt)
    network_term = np.linalg.solve(root_2gtK + np.eye(mats.n), root_half @ inst.a)
    return np.maximum.reduce(
        [np.full(inst.n, inst.gamma * inst.s), inst.a / 3.0, network_term]
    )


def check_assumption3(inst: MarketInstance, mats: EquilibriumMatrices, strat: Strategy) -> AssumptionCheck:
    lam_min = mats.eigh[0][0]
    if lam_min <= 0:
        raise NotPositiveDefinite(f"K has eigenvalue {lam_min:.3e} <= 0")
    threshold = assumption3_threshold(inst, mats)
    margins = strat.effective_price - threshold
    return AssumptionCheck(bool(np.all(margins > 0)), threshold, margins)


def check_assumptions(inst: MarketInstance, mats: EquilibriumMatrices, strat: Strategy) -> AssumptionReport:
    return AssumptionReport(
        a1=check_assumption1(inst),
        a2=check_assumption2(inst, mats, strat),
        a3=check_assumption3(inst, mats, strat),
        strategy=strat,
    )


# -- definiteness -----------------------------------------------------------


def inertia(Q, rtol: float = 1e-10):
    """``(positive, negative, zero)`` eigenvalue counts of symmetric ``Q``."""
    lam = np.linalg.eigvalsh(0.5 * (Q + Q.T))
    cut = rtol * max(float(np.abs(lam).max()), np.finfo(float).tiny)
    return int(np.sum(lam > cut)), int(np.sum(lam < -cut)), int(np.sum(np.abs(lam) <= cut))


@dataclass(frozen=True, eq=False)
class MatrixVerdict:
    name: str
    matrix: np.ndarray
    eigenvalues: np.ndarray
    inertia: tuple

    @classmethod
    def of(cls, name, Q):
        Q = 0.5 * (Q + Q.T)
        return cls(name, Q, np.linalg.eigvalsh(Q), inertia(Q))

    @property
    def positive_definite(self) -> bool:
        return bool(self.eigenvalues[0] > 0)

    @property
    def negative_definite(self) -> bool:
        return bool(self.eigenvalues[-1] < 0)

    @property
    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def max_eigenvalue(self) -> float:
        return float(self.eigenvalues[-1])


@dataclass(frozen=True, eq=False)
class CongruenceCheck:
    """A block matrix, its congruence ``P^T Q P`` and the expected block-diagonal form."""

    original: MatrixVerdict
    congruent: MatrixVerdict
    P: np.ndarray
    schur: float

    @property
    def sylvester_agrees(self) -> bool:
        return self.original.inertia == self.congruent.inertia

    @property
    def positive_definite(self) -> bool:
        return self.original.positive_definite


def _block(M, v, d):
    n = M.shape[0]
    out = np.empty((n + 1, n + 1))
    out[:n, :n] = M
    out[:n, n] = v
    out[n, :n] = v
    out[n, n] = d
    return out


def _congruence(name, M, v, d, P_col):
    """``Q = [[M, v], [v^T, d]]`` with ``P = [[I, P_col], [0, 1]]``."""
    n = M.shape[0]
    Q = _block(M, v, d)
    P = np.eye(n + 1)
    P[:n, n] = P_col
    Qc = P.T @ Q @ P
    schur = float(d - v @ np.linalg.solve(M, v))
    return CongruenceCheck(MatrixVerdict.of(name, Q), MatrixVerdict.of(name + "'", Qc), P, schur)


def _pieces(inst, mats, strat):
    p = strat.p
    w = 1.0 - strat.theta
    K, K2, K1 = mats.K, mats.K2, mats.K1
    gt, gs = inst.gamma * inst.t, inst.gamma * inst.s
    r2 = inst.a - 2.0 * p * w
    r4 = inst.a - 4.0 * p * w
    return p, w, K, K2, K1, gt, gs, r2, r4


def competitive_pseudo_jacobian(inst: MarketInstance, mats: EquilibriumMatrices, strat: Strategy) -> np.ndarray:
    """Jacobian of ``F = (grad_theta CP profit, d revenue / dp)`` in ``(theta, p)``. Not symmetric."""
    p, w, K, K2, K1, gt, gs, r2, r4 = _pieces(inst, mats, strat)
    n = inst.n
    J = np.empty((n + 1, n + 1))
    J[:n, :n] = -2.0 * gt * p**2 * K2 - 2.0 * p**2 * K
    # d/dp of the CP gradient
    J[:n, n] = gs * K1 - 2.0 * gt * (K2 @ r2) - K @ inst.a + 2.0 * p * (K @ (1.0 - 2.0 * strat.theta))
    # d/dtheta of the SP derivative
    J[n, :n] = 2.0 * p * K1
    J[n, n] = -2.0 * float(K1 @ w)
    return J


def competitive_blocks(inst: MarketInstance, mats: EquilibriumMatrices, strat: Strategy) -> dict:
    """``A``, ``B``, ``C`` with their congruences; ``-(A + B + C) = grad F + grad F^T``."""
    p, w, K, K2, K1, gt, gs, r2, r4 = _pieces(inst, mats, strat)
    s1 = float(K1 @ w)
    return {
        "A": _congruence(
            "A", 4.0 * gt * p**2 * K2, 2.0 * gt * (K2 @ r2), 2.0 * s1,
            np.linalg.solve(-4.0 * gt * p**2 * K2, 2.0 * gt * (K2 @ r2)),
        ),
        "B": _congruence(
            "B", 3.0 * p**2 * K, -gs * K1, s1,
            np.linalg.solve(3.0 * p**2 * K, gs * K1),
        ),
        "C": _congruence(
            "C", p**2 * K, K @ r4, s1,
            -np.linalg.solve(p**2 * K, K @ r4),
        ),
    }


def cooperative_hessian(inst: MarketInstance, mats: EquilibriumMatrices, strat: Strategy) -> np.ndarray:
    """Hessian of the coalition payoff in ``(theta, p)``."""
    p, w, K, K2, K1, gt, gs, r2, r4 = _pieces(inst, mats, strat)
    off = gs * K1 - 2.0 * gt * (K2 @ r2) - K @ r4
    corner = -2.0 * gt * float(w @ K2 @ w) - 2.0 * float(w @ K @ w)
    return _block(-2.0 * gt * p**2 * K2 - 2.0 * p**2 * K, off, corner)


def cooperative_blocks(inst: MarketInstance, mats: EquilibriumMatrices, strat: Strategy) -> dict:
    """``D``, ``E``, ``F`` with their congruences; ``-(D + E + F)`` is the coalition Hessian."""
    p, w, K, K2, K1, gt, gs, r2, r4 = _pieces(inst, mats, strat)
    wKw = float(w @ K @ w)
    return {
        "D": _congruence(
            "D", 2.0 * gt * p**2 * K2, 2.0 * gt * (K2 @ r2), 2.0 * gt * float(w @ K2 @ w),
            -np.linalg.solve(2.0 * gt * p**2 * K2, 2.0 * gt * (K2 @ r2)),
        ),
        "E": _congruence(
            "E", p**2 * K, K @ r4, wKw,
            -np.linalg.solve(p**2 * K, K @ r4),
        ),
        "F": _congruence(
            "F", p**2 * K, -gs * K1, wKw,
            np.linalg.solve(p**2 * K, gs * K1),
        ),
    }


@dataclass(frozen=True, eq=False)
class CompetitiveDefiniteness:
    A: CongruenceCheck
    B: CongruenceCheck
    C: CongruenceCheck
    symmetric_jacobian: MatrixVerdict

    @property
    def blocks_positive_definite(self) -> bool:
        return self.A.positive_definite and self.B.positive_definite and self.C.positive_definite

    @property
    def sylvester_agrees(self) -> bool:
        return self.A.sylvester_agrees and self.B.sylvester_agrees and self.C.sylvester_agrees

    @property
    def diagonally_strictly_concave(self) -> bool:
        return self.symmetric_jacobian.negative_definite


@dataclass(frozen=True, eq=False)
class CooperativeDefiniteness:
    D: CongruenceCheck
    E: CongruenceCheck
    F: CongruenceCheck
    hessian: MatrixVerdict

    @property
    def blocks_positive_definite(self) -> bool:
        return self.D.positive_definite and self.E.positive_definite and self.F.positive_definite

    @property
    def sylvester_agrees(self) -> bool:
        return self.D.sylvester_agrees and self.E.sylvester_agrees and self.F.sylvester_agrees

    @property
    def hessian_negative_definite(self) -> bool:
        return self.hessian.negative_definite


def check_definiteness_competitive(
    inst: MarketInstance, mats: EquilibriumMatrices, strat: Strategy
) -> CompetitiveDefiniteness:
    blocks = competitive_blocks(inst, mats, strat)
    J = competitive_pseudo_jacobian(inst, mats, strat)
    return CompetitiveDefiniteness(**blocks, symmetric_jacobian=MatrixVerdict.of("J+J^T", J + J.T))


def check_definiteness_cooperative(
    inst: MarketInstance, mats: EquilibriumMatrices, strat: Strategy
) -> CooperativeDefiniteness:
    blocks = cooperative_blocks(inst, mats, strat)
    H = cooperative_hessian(inst, mats, strat)
    return CooperativeDefiniteness(**blocks, hessian=MatrixVerdict.of("H", H))


# -- finite differences -----------------------------------------------------


def finite_difference_gradient(f, point, step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``point``."""
    x = np.array(point, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        hi, lo = x.copy(), x.copy()
        hi[i] += step
        lo[i] -= step
        grad[i] = (f(hi) - f(lo)) / (2.0 * step)
    return grad


def finite_difference_hessian(f, point, step: float = 1e-5) -> np.ndarray:
    x = np.array(point, dtype=float)
    n = x.size
    H = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            vals = []
            for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                y = x.copy()
                y[i] += si * step
                y[j] += sj * step
                vals.append(f(y))
            H[i, j] = H[j, i] = (vals[0] - vals[1] - vals[2] + vals[3]) / (4.0 * step**2)
    return H
