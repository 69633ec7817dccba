"""Model parameters, claim-size laws, test functions and the generator.

The surplus process is

    dX_t = (a X_t + c) dt + sigma X_t dW_t - dP_t,

with P a compound Poisson process of rate ``lam`` whose jumps follow a
:class:`ClaimDistribution`.  Everything in this module is immutable.
"""

from __future__ import annotations

import math
import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy import integrate, optimize

from .errors import DomainError, QuadratureFailure, RegimeError

RHO_ONE_RTOL = 1e-12


# ---------------------------------------------------------------------------
# claim-size laws
# ---------------------------------------------------------------------------


class ClaimDistribution(ABC):
    """Law of a single claim size.

    A law is described by the absolutely continuous part of its density
    (:meth:`pdf`) plus a finite set of atoms.  Sampling goes through
    :meth:`quantile` so that coupled simulations can share uniform draws.
    """

    @property
    @abstractmethod
    def mean(self) -> float: ...

    @property
    @abstractmethod
    def essential_sup(self) -> float: ...

    @property
    @abstractmethod
    def variance(self) -> float: ...

    @abstractmethod
    def quantile(self, u): ...

    @abstractmethod
    def cdf(self, x): ...

    def pdf(self, x):
        """Density of the absolutely continuous part (zero by default)."""
        return np.zeros_like(np.asarray(x, dtype=float))

    @property
    def atoms(self) -> tuple[tuple[float, float], ...]:
        """Point masses as ``(location, mass)`` pairs."""
        return ()

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.essential_sup)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.quantile(rng.random(size))

    def total_mass(self, tol: float = 1e-10) -> float:
        """Continuous mass on (0, essential_sup] plus atom masses."""
        hi = self.essential_sup
        cont = 0.0
        if not isinstance(self, Deterministic):
            cont, _ = integrate.quad(lambda y: float(self.pdf(y)), 0.0, hi, epsabs=tol, limit=200)
        return cont + sum(m for _, m in self.atoms)


@dataclass(frozen=True)
class Exponential(ClaimDistribution):
    mean_size: float

    def __post_init__(self):
        if not (self.mean_size > 0 and math.isfinite(self.mean_size)):
            raise ValueError(f"exponential mean must be positive and finite, got {self.mean_size}")

    @property
    def mean(self) -> float:
        return self.mean_size

    @property
    def essential_sup(self) -> float:
        return math.inf

    @property
    def variance(self) -> float:
        return self.mean_size**2

    def quantile(self, u):
        return -self.mean_size * np.log1p(-np.asarray(u, dtype=float))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, -np.expm1(-np.maximum(x, 0.0) / self.mean_size), 0.0)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, np.exp(-np.maximum(x, 0.0) / self.mean_size) / self.mean_size, 0.0)


@dataclass(frozen=True)
class Uniform(ClaimDistribution):
    """Uniform claims on (0, hi]."""

    hi: float

    def __post_init__(self):
        if not (self.hi > 0 and math.isfinite(self.hi)):
            raise ValueError(f"uniform upper end must be positive and finite, got {self.hi}")

    @property
    def mean(self) -> float:
        return 0.5 * self.hi

    @property
    def essential_sup(self) -> float:
        return self.hi

    @property
    def variance(self) -> float:
        return self.hi**2 / 12.0

    def quantile(self, u):
        return self.hi * np.asarray(u, dtype=float)

    def cdf(self, x):
        return np.clip(np.asarray(x, dtype=float) / self.hi, 0.0, 1.0)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x > 0) & (x <= self.hi), 1.0 / self.hi, 0.0)


@dataclass(frozen=True)
class TruncatedExponential(ClaimDistribution):
    """Exponential claim of mean ``base_mean`` censored at ``cap``: min(xi, cap).

    The law has density e^{-x/m}/m on (0, cap) and an atom of mass
    e^{-cap/m} at ``cap``; it is what capping an :class:`Exponential` yields.
    """

    base_mean: float
    cap: float

    def __post_init__(self):
        if not (self.base_mean > 0 and math.isfinite(self.base_mean)):
            raise ValueError(f"base mean must be positive and finite, got {self.base_mean}")
        if not (self.cap > 0 and math.isfinite(self.cap)):
            raise ValueError(f"cap must be positive and finite, got {self.cap}")

    @property
    def mean(self) -> float:
        return -self.base_mean * math.expm1(-self.cap / self.base_mean)

    @property
    def essential_sup(self) -> float:
        return self.cap

    @property
    def variance(self) -> float:
        m, k = self.base_mean, self.cap
        second = 2.0 * m * m * (1.0 - math.exp(-k / m) * (1.0 + k / m))
        return second - self.mean**2

    def quantile(self, u):
        return np.minimum(-self.base_mean * np.log1p(-np.asarray(u, dtype=float)), self.cap)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        inner = -np.expm1(-np.maximum(x, 0.0) / self.base_mean)
        return np.where(x >= self.cap, 1.0, np.where(x > 0, inner, 0.0))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        dens = np.exp(-np.maximum(x, 0.0) / self.base_mean) / self.base_mean
        return np.where((x > 0) & (x < self.cap), dens, 0.0)

    @property
    def atoms(self):
        return ((self.cap, math.exp(-self.cap / self.base_mean)),)


@dataclass(frozen=True)
class Deterministic(ClaimDistribution):
    size: float

    def __post_init__(self):
        if not (self.size > 0 and math.isfinite(self.size)):
            raise ValueError(f"claim size must be positive and finite, got {self.size}")

    @property
    def mean(self) -> float:
        return self.size

    @property
    def essential_sup(self) -> float:
        return self.size

    @property
    def variance(self) -> float:
        return 0.0

    def quantile(self, u):
        return np.full_like(np.asarray(u, dtype=float), self.size)

    def cdf(self, x):
        return np.where(np.asarray(x, dtype=float) >= self.size, 1.0, 0.0)

    @property
    def atoms(self):
        return ((self.size, 1.0),)


@dataclass(frozen=True)
class Capped(ClaimDistribution):
    """Law of min(xi, cap) for a continuous base law without a closed form."""

    base: ClaimDistribution
    cap: float

    def __post_init__(self):
        if not (self.cap > 0 and math.isfinite(self.cap)):
            raise ValueError(f"cap must be positive and finite, got {self.cap}")
        if self.base.atoms:
            raise ValueError("Capped only wraps laws without atoms")

    @cached_property
    def mean(self) -> float:
        val, _ = integrate.quad(lambda x: 1.0 - float(self.base.cdf(x)), 0.0, self.cap, epsabs=1e-13)
        return val

    @property
    def essential_sup(self) -> float:
        return min(self.cap, self.base.essential_sup)

    @cached_property
    def variance(self) -> float:
        second, _ = integrate.quad(
            lambda x: 2.0 * x * (1.0 - float(self.base.cdf(x))), 0.0, self.cap, epsabs=1e-13
        )
        return second - self.mean**2

    def quantile(self, u):
        return np.minimum(self.base.quantile(u), self.cap)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= self.cap, 1.0, self.base.cdf(x))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < self.cap, self.base.pdf(x), 0.0)

    @property
    def atoms(self):
        return ((self.cap, 1.0 - float(self.base.cdf(self.cap))),)


def cap_claims(dist: ClaimDistribution, M: float) -> ClaimDistribution:
    """Return the law of min(xi, M).

    The result's :meth:`~ClaimDistribution.quantile` equals
    ``min(dist.quantile(u), M)`` bit for bit, so the same uniform draws
    produce coupled (capped, uncapped) claim sequences.
    """
    if not M > 0:
        raise ValueError(f"cap must be positive, got {M}")
    if M >= dist.essential_sup:
        return dist
    if isinstance(dist, Deterministic):
        return Deterministic(M)
    if isinstance(dist, Exponential):
        return TruncatedExponential(dist.mean_size, M)
    if isinstance(dist, TruncatedExponential):
        return TruncatedExponential(dist.base_mean, M)
    if isinstance(dist, Capped):
        return Capped(dist.base, M)
    return Capped(dist, M)


# ---------------------------------------------------------------------------
# model parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelParams:
    """Drift ``a``, volatility ``sigma``, premium rate ``c``, claim rate ``lam``."""

    a: float
    sigma: float
    c: float
    lam: float
    claim: ClaimDistribution

    def __post_init__(self):
        for name in ("a", "sigma", "c", "lam"):
            val = getattr(self, name)
            if not math.isfinite(val):
                raise ValueError(f"{name} must be finite, got {val}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.a > 0:
            raise ValueError(f"a must be positive, got {self.a}")
        if self.lam < 0:
            raise ValueError(f"lam must be nonnegative, got {self.lam}")
        if self.c < 0:
            raise ValueError(f"c must be nonnegative, got {self.c}")

    @property
    def rho(self) -> float:
        return rho(self)

    def with_claim(self, claim: ClaimDistribution) -> "ModelParams":
        return replace(self, claim=claim)


def rho(params: ModelParams) -> float:
    """Regime parameter 2a / sigma^2."""
    return 2.0 * params.a / params.sigma**2


def net_profit_condition(params: ModelParams) -> bool:
    return params.c > params.lam * params.claim.mean


def is_rho_one(params: ModelParams, rtol: float = RHO_ONE_RTOL) -> bool:
    return abs(rho(params) - 1.0) <= rtol


def claim_bound(params: ModelParams) -> float:
    M = params.claim.essential_sup
    if not math.isfinite(M):
        raise RegimeError("claim law must be bounded (finite essential supremum)")
    return M


# ---------------------------------------------------------------------------
# test functions
# ---------------------------------------------------------------------------


class TestFunction(ABC):
    """Smooth function F used in the supermartingale arguments."""

    __test__ = False  # keep pytest from collecting this
    domain_lo: float

    @abstractmethod
    def _f(self, x): ...

    @abstractmethod
    def _d1(self, x): ...

    @abstractmethod
    def _d2(self, x): ...

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(~(x > self.domain_lo)):
            raise DomainError(f"{type(self).__name__} evaluated at x <= {self.domain_lo}")
        return x

    def __call__(self, x):
        return self._f(self._check(x))

    def d1(self, x):
        return self._d1(self._check(x))

    def d2(self, x):
        return self._d2(self._check(x))


@dataclass(frozen=True)
class PowerDecay(TestFunction):
    """x^(1 - rho); decreasing and convex when rho > 1."""

    rho: float
    domain_lo: float = 0.0

    def _f(self, x):
        return x ** (1.0 - self.rho)

    def _d1(self, x):
        return (1.0 - self.rho) * x ** (-self.rho)

    def _d2(self, x):
        return (1.0 - self.rho) * (-self.rho) * x ** (-self.rho - 1.0)


@dataclass(frozen=True)
class PowerGrowth(TestFunction):
    """x^alpha with 0 < alpha < 1 - rho."""

    alpha: float
    rho: float
    domain_lo: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0 - self.rho:
            raise RegimeError(f"PowerGrowth needs 0 < alpha < 1 - rho, got alpha={self.alpha}, rho={self.rho}")

    def _f(self, x):
        return x**self.alpha

    def _d1(self, x):
        return self.alpha * x ** (self.alpha - 1.0)

    def _d2(self, x):
        return self.alpha * (self.alpha - 1.0) * x ** (self.alpha - 2.0)


@dataclass(frozen=True)
class LogLog(TestFunction):
    """ln ln x, defined and increasing above ``domain_lo`` >= e."""

    domain_lo: float = math.e

    def __post_init__(self):
        if not self.domain_lo >= math.e:
            raise DomainError(f"LogLog needs domain_lo >= e, got {self.domain_lo}")

    def _f(self, x):
        return np.log(np.log(x))

    def _d1(self, x):
        return 1.0 / (x * np.log(x))

    def _d2(self, x):
        lx = np.log(x)
        return -(lx + 1.0) / (x * lx) ** 2


# ---------------------------------------------------------------------------
# generator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadConfig:
    tol: float = 1e-9
    limit: int = 200


def diffusion_part(F: TestFunction, params: ModelParams, x: float) -> float:
    return float((params.a * x + params.c) * F.d1(x) + 0.5 * params.sigma**2 * x * x * F.d2(x))


def jump_part(F: TestFunction, params: ModelParams, x: float, quad: QuadConfig = QuadConfig()) -> float:
    """lam * E[F(x - xi) - F(x)], continuous part by adaptive quadrature."""
    if params.lam == 0.0:
        return 0.0
    claim = params.claim
    M = claim_bound(params)
    if not x - M > F.domain_lo:
        raise DomainError(f"x - M = {x - M} must exceed the test function's domain bound {F.domain_lo}")
    fx = float(F(x))
    total = 0.0
    for loc, mass in claim.atoms:
        total += mass * (float(F(x - loc)) - fx)
    if not isinstance(claim, Deterministic):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, err, info = integrate.quad(
                lambda y: (float(F(x - y)) - fx) * float(claim.pdf(y)),
                0.0,
                M,
                epsabs=quad.tol,
                epsrel=0.0,
                limit=quad.limit,
                full_output=True,
            )[:3]
        if not err <= quad.tol:
            raise QuadratureFailure(f"jump integral at x={x}: error estimate {err:.3g} > tol {quad.tol:.3g}")
        total += val
    return params.lam * total


def generator_apply(F: TestFunction, params: ModelParams, x: float, quad: QuadConfig = QuadConfig()) -> float:
    """(a x + c) F'(x) + sigma^2 x^2 F''(x) / 2 + lam * E[F(x - xi) - F(x)]."""
    return diffusion_part(F, params, x) + jump_part(F, params, x, quad)


# ---------------------------------------------------------------------------
# thresholds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ThresholdReport:
    u_star: float
    M: float
    alpha_used: float | None = None
    u_tilde: float | None = None
    descent_levels: tuple[float, ...] = field(default=())
    n_iterations: int = 0


def default_alpha(params: ModelParams) -> float:
    return 0.5 * (1.0 - rho(params))


def threshold_lemma_A(params: ModelParams, alpha: float | None = None) -> float:
    """max(M, 2c / (sigma^2 (1 - rho - alpha))) for rho < 1."""
    r = rho(params)
    if not r < 1.0:
        raise RegimeError(f"threshold for rho < 1 requested with rho = {r}")
    if alpha is None:
        alpha = default_alpha(params)
    if not 0.0 < alpha < 1.0 - r:
        raise RegimeError(f"alpha must lie in (0, 1 - rho) = (0, {1.0 - r}), got {alpha}")
    M = claim_bound(params)
    return max(M, 2.0 * params.c / (params.sigma**2 * (1.0 - r - alpha)))


def solve_u_tilde(params: ModelParams, xtol: float = 1e-10) -> float | None:
    """Largest root of sigma^2 x = 2 c ln x, or None when there is none.

    sigma^2 x - 2c ln x is convex with its minimum at 2c / sigma^2, so the
    largest root (when it exists) is bracketed to the right of the minimum.
    """
    s2, c = params.sigma**2, params.c
    if not c > 0:
        raise ValueError("solve_u_tilde needs c > 0")

    def g(x):
        return s2 * x - 2.0 * c * math.log(x)

    x_min = 2.0 * c / s2
    g_min = g(x_min)
    if g_min > 1e-12 * (1.0 + 2.0 * c):
        return None
    if g_min >= -1e-12 * (1.0 + 2.0 * c):
        root = x_min
    else:
        hi = 2.0 * x_min
        while g(hi) <= 0.0:
            hi *= 2.0
        root = optimize.bisect(g, x_min, hi, xtol=xtol, maxiter=500)
    for k in (1.01, 2.0, 10.0):
        if g(root * k) < 0.0:
            raise ArithmeticError(f"sigma^2 x >= 2c ln x fails at {root * k} past the root {root}")
    return root


def threshold_lemma_B(params: ModelParams) -> float:
    """max(M + 3, u_tilde) for rho = 1, a missing root counting as 0."""
    if not is_rho_one(params):
        raise RegimeError(f"threshold for rho = 1 requested with rho = {rho(params)}")
    M = claim_bound(params)
    u_tilde = solve_u_tilde(params) if params.c > 0 else None
    return max(M + 3.0, u_tilde or 0.0)


def descent_sequence(u_star: float, M: float) -> ThresholdReport:
    """Levels K_j = max(u_star - j M / 2, 0), j = 1..ceil(2 u_star / M)."""
    if not (u_star > 0 and M > 0):
        raise ValueError("descent_sequence needs u_star > 0 and M > 0")
    n = math.ceil(2.0 * u_star / M)
    # guard against 2u*/M landing a hair above an integer
    while n > 1 and u_star - (n - 1) * M / 2.0 <= 0.0:
        n -= 1
    levels = tuple(max(u_star - j * M / 2.0, 0.0) for j in range(1, n + 1))
    return ThresholdReport(u_star=u_star, M=M, descent_levels=levels, n_iterations=n)


def threshold_report(params: ModelParams, alpha: float | None = None) -> ThresholdReport:
    """Entry threshold and descent levels for the rho <= 1 regimes."""
    M = claim_bound(params)
    if is_rho_one(params):
        u_star = threshold_lemma_B(params)
        u_tilde = solve_u_tilde(params) if params.c > 0 else None
        return replace(descent_sequence(u_star, M), u_tilde=u_tilde)
    if alpha is None:
        alpha = default_alpha(params)
    u_star = threshold_lemma_A(params, alpha)
    return replace(descent_sequence(u_star, M), alpha_used=alpha)
