"""Market instances, random instance generation and the derived equilibrium matrices.

A market has ``n`` mobile users with linear-quadratic utility, a symmetric
social-influence graph, a congestion coefficient, and a content provider whose
advertising value is ``gamma * sum(s * x_i - t * x_i**2)``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np
from scipy import linalg

from .errors import InvalidConfig, InvalidInstance, NotPositiveDefinite, SingularSystem

__all__ = [
    "MarketInstance",
    "EquilibriumMatrices",
    "GenerationConfig",
    "build_matrices",
    "generate_instance",
]


def _readonly(arr, dtype=float):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class MarketInstance:
    """Exogenous parameters of one market.

    ``a`` and ``b`` are the per-user linear and quadratic utility coefficients,
    ``g`` the symmetric zero-diagonal influence matrix, ``c`` the congestion
    coefficient, and ``gamma``, ``s``, ``t`` the CP's ad-value parameters.
    """

    a: np.ndarray
    b: np.ndarray
    g: np.ndarray
    c: float
    gamma: float
    s: float
    t: float

    def __post_init__(self):
        a = _readonly(np.atleast_1d(self.a))
        b = _readonly(np.atleast_1d(self.b))
        g = _readonly(np.atleast_2d(self.g))
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "g", g)
        for name in ("c", "gamma", "s", "t"):
            object.__setattr__(self, name, float(getattr(self, name)))

        n = a.shape[0]
        if a.ndim != 1 or b.shape != (n,) or g.shape != (n, n):
            raise InvalidInstance(f"shape mismatch: a{a.shape}, b{b.shape}, g{g.shape}")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b)) and np.all(np.isfinite(g))):
            raise InvalidInstance("non-finite parameters")
        if np.any(a <= 0) or np.any(b <= 0):
            raise InvalidInstance("a and b must be componentwise positive")
        if np.any(np.diag(g) != 0):
            raise InvalidInstance("g must have a zero diagonal")
        if not np.array_equal(g, g.T):
            raise InvalidInstance("g must be symmetric")
        if self.c < 0:
            raise InvalidInstance("c must be >= 0")
        if self.gamma <= 0 or self.s <= 0 or self.t <= 0:
            raise InvalidInstance("gamma, s and t must be > 0")

    @property
    def n(self) -> int:
        return self.a.shape[0]

    def with_params(self, **changes) -> "MarketInstance":
        return replace(self, **changes)

    @classmethod
    def uniform(cls, n, a=30.0, b=30.0, g=4.0, c=3.0, gamma=2.0, s=5.0, t=5.0):
        """Homogeneous market: identical users on a complete graph with equal ties."""
        ties = np.full((n, n), float(g))
        np.fill_diagonal(ties, 0.0)
        return cls(np.full(n, float(a)), np.full(n, float(b)), ties, c, gamma, s, t)


@dataclass(frozen=True, eq=False)
class EquilibriumMatrices:
    """``G`` (ties net of congestion), ``Lambda = diag(b + c)`` and ``K = (2 Lambda - G)^-1``."""

    G: np.ndarray
    Lambda: np.ndarray
    K: np.ndarray

    @property
    def n(self) -> int:
        return self.K.shape[0]

    @cached_property
    def eigh(self):
        """Symmetric eigendecomposition ``(lam, V)`` of K, shared by all matrix functions."""
        lam, vecs = np.linalg.eigh(self.K)
        return lam, vecs

    @cached_property
    def K1(self) -> np.ndarray:
        return self.K.sum(axis=1)

    @cached_property
    def K2(self) -> np.ndarray:
        return self.K @ self.K

    def matrix_function(self, fn) -> np.ndarray:
        """Return ``V diag(fn(lam)) V^T`` for the eigendecomposition of K."""
        lam, vecs = self.eigh
        if lam[0] <= 0:
            raise NotPositiveDefinite(f"K has eigenvalue {lam[0]:.3e} <= 0")
        return (vecs * fn(lam)) @ vecs.T

    def sqrtm(self, scale: float = 1.0) -> np.ndarray:
        """Principal square root of ``scale * K``."""
        return self.matrix_function(lambda lam: np.sqrt(scale * lam))


def build_matrices(inst: MarketInstance) -> EquilibriumMatrices:
    n = inst.n
    G = inst.g - 2.0 * inst.c
    np.fill_diagonal(G, 0.0)
    Lam = np.diag(inst.b + inst.c)
    M = 2.0 * Lam - G

    try:
        factor = linalg.cho_factor(M, lower=True, check_finite=True)
    except linalg.LinAlgError:
        # distinguish a singular system from an indefinite one
        eig = np.linalg.eigvalsh(M)
        scale = max(1.0, float(np.abs(eig).max()))
        if np.any(np.abs(eig) <= 1e-12 * scale):
            raise SingularSystem("2*Lambda - G is singular") from None
        raise NotPositiveDefinite(
            f"2*Lambda - G is not positive definite (min eigenvalue {eig[0]:.3e})"
        ) from None

    pivots = np.diag(factor[0]) ** 2
    if pivots.min() <= 1e-13 * pivots.max():
        raise SingularSystem("2*Lambda - G is numerically singular")

    K = linalg.cho_solve(factor, np.eye(n))
    K = 0.5 * (K + K.T)
    try:
        linalg.cholesky(K, lower=True)
    except linalg.LinAlgError:
        raise NotPositiveDefinite("K failed the Cholesky check") from None

    return EquilibriumMatrices(G=_readonly(G), Lambda=_readonly(Lam), K=_readonly(K))


@dataclass(frozen=True)
class GenerationConfig:
    """Random-instance settings. Draws are ``Normal(mu, 1)``."""

    n: int = 100
    mu_a: float = 30.0
    mu_b: float = 30.0
    mu_g: float = 4.0
    c: float = 3.0
    gamma: float = 2.0
    s: float = 5.0
    t: float = 5.0
    seed: int = 0

    def validate(self) -> None:
        if int(self.n) != self.n or self.n < 1:
            raise InvalidConfig(f"n must be a positive integer, got {self.n}")
        if self.c < 0:
            raise InvalidConfig("c must be >= 0")
        for name in ("gamma", "s", "t"):
            if getattr(self, name) <= 0:
                raise InvalidConfig(f"{name} must be > 0")
        for name in ("mu_a", "mu_b", "mu_g", "c", "gamma", "s", "t"):
            if not np.isfinite(getattr(self, name)):
                raise InvalidConfig(f"{name} must be finite")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidConfig("seed must fit in an unsigned 64-bit integer")


def _positive_normal(mu, n, main, spare):
    # resample from a separate stream so the main stream stays prefix-stable in n
    out = mu + main.standard_normal(n)
    bad = out <= 0
    while np.any(bad):
        out[bad] = mu + spare.standard_normal(int(bad.sum()))
        bad = out <= 0
    return out


def generate_instance(cfg: GenerationConfig) -> MarketInstance:
    """Draw a random market.

    Each parameter family has its own random stream, so for a fixed seed the
    instance for ``n`` users is a prefix of the instance for ``n' > n`` users,
    and changing ``mu_g`` shifts the same tie draws.
    """
    cfg.validate()
    n = int(cfg.n)
    streams = np.random.SeedSequence(int(cfg.seed)).spawn(5)
    rng_a, rng_b, rng_g, spare_a, spare_b = (np.random.default_rng(s) for s in streams)

    a = _positive_normal(cfg.mu_a, n, rng_a, spare_a)
    b = _positive_normal(cfg.mu_b, n, rng_b, spare_b)

    # lower triangle in row-major order: user k's ties to users 0..k-1 come after
    # all ties among users 0..k-1
    rows, cols = np.tril_indices(n, -1)
    ties = cfg.mu_g + rng_g.standard_normal(rows.size)
    g = np.zeros((n, n))
    g[rows, cols] = ties
    g[cols, rows] = ties

    return MarketInstance(a=a, b=b, g=g, c=cfg.c, gamma=cfg.gamma, s=cfg.s, t=cfg.t)
