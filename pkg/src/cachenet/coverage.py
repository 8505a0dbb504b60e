"""Analytic success, coverage, and hit probabilities for both cell-selection
policies and both mobility models.

All quantities here are interference-limited (SIR only, Rayleigh fading) and
independent of the base-station density: after normalizing distances by the
serving distance, the density cancels, so every integral below is 1-D.

Notation used throughout:
    T       SIR threshold (linear scale)
    alpha   path-loss exponent, > 2
    rho1    tail interference integral (interferers beyond the serving cell)
    rho2    near-field interference integral (cells nearer than the serving
            file-holder under the cache-aware policy)
    B, C    B = 1 - rho2, C = rho1 + rho2; the cache-aware per-attempt
            success probability is b/(B*b + C)
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from .errors import ValidationError
from .popularity import PlacementVector, ZipfLibrary

# Alternating binomial sums lose roughly n bits to cancellation; beyond this
# cap the static evaluators defer to the Monte Carlo fallback.
STATIC_N_CAP = 30

_QUAD_KW = dict(epsabs=1e-13, epsrel=1e-13, limit=200)


class Policy(enum.Enum):
    """Cell selection: P1 attaches to the nearest cell regardless of its cache,
    P2 attaches to the nearest cell that holds the requested file."""

    P1 = "P1"
    P2 = "P2"


class Mobility(enum.Enum):
    """STATIC keeps one network geometry for all attempts (fresh fading each
    attempt); MOBILE sees an independent geometry every attempt."""

    STATIC = "static"
    MOBILE = "mobile"


@dataclass(frozen=True)
class Scenario:
    policy: Policy
    mobility: Mobility
    n: int

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise ValidationError(f"max transmissions n must be a positive integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))


@dataclass(frozen=True)
class ChannelParams:
    """Physical-layer environment: SIR threshold T (linear), path-loss exponent
    alpha (> 2 for the interference field to converge), cell density lam."""

    T: float
    alpha: float
    lam: float = 1.0

    def __post_init__(self):
        if not self.T > 0.0:
            raise ValidationError(f"SIR threshold T must be > 0, got {self.T!r}")
        if not self.alpha > 2.0:
            raise ValidationError(f"path-loss exponent alpha must be > 2, got {self.alpha!r}")
        if not self.lam > 0.0:
            raise ValidationError(f"density lam must be > 0, got {self.lam!r}")

    @classmethod
    def from_db(cls, T_dB: float, alpha: float, lam: float = 1.0) -> "ChannelParams":
        return cls(T=db_to_linear(T_dB), alpha=alpha, lam=lam)


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (float(x_db) / 10.0)


def linear_to_db(x: float) -> float:
    if not x > 0.0:
        raise ValidationError(f"cannot convert non-positive value {x!r} to dB")
    return 10.0 * math.log10(x)


def _check_Talpha(T: float, alpha: float) -> tuple[float, float]:
    T = float(T)
    alpha = float(alpha)
    if not T > 0.0:
        raise ValidationError(f"SIR threshold T must be > 0, got {T!r}")
    if not alpha > 2.0:
        raise ValidationError(f"path-loss exponent alpha must be > 2, got {alpha!r}")
    return T, alpha


@lru_cache(maxsize=4096)
def _rho1_cached(T: float, alpha: float) -> float:
    lo = T ** (-2.0 / alpha)
    val, _ = quad(lambda u: 1.0 / (1.0 + u ** (alpha / 2.0)), lo, np.inf, **_QUAD_KW)
    return T ** (2.0 / alpha) * val


@lru_cache(maxsize=4096)
def _rho2_cached(T: float, alpha: float) -> float:
    hi = T ** (-2.0 / alpha)
    val, _ = quad(lambda u: 1.0 / (1.0 + u ** (alpha / 2.0)), 0.0, hi, **_QUAD_KW)
    return T ** (2.0 / alpha) * val


def rho1(T: float, alpha: float) -> float:
    """Interference integral over cells farther than the serving one."""
    T, alpha = _check_Talpha(T, alpha)
    return _rho1_cached(T, alpha)


def rho2(T: float, alpha: float) -> float:
    """Interference integral over the region nearer than the serving file-holder."""
    T, alpha = _check_Talpha(T, alpha)
    return _rho2_cached(T, alpha)


@dataclass(frozen=True)
class RhoConstants:
    """The two interference integrals plus the derived constants of the
    cache-aware success probability b/(B*b + C)."""

    rho1: float
    rho2: float
    B: float = field(init=False)
    C: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "B", 1.0 - self.rho2)
        object.__setattr__(self, "C", self.rho1 + self.rho2)

    @classmethod
    def from_channel(cls, params: ChannelParams) -> "RhoConstants":
        return cls(rho1=rho1(params.T, params.alpha), rho2=rho2(params.T, params.alpha))


def success_prob_p1(b_i: float, T: float, alpha: float) -> float:
    """Per-attempt success probability under the cache-agnostic policy:
    b_i / (1 + rho1). Density-independent."""
    b_i = _check_unit(b_i)
    return b_i / (1.0 + rho1(T, alpha))


def success_prob_p2(b_i: float, T: float, alpha: float) -> float:
    """Per-attempt success probability under the cache-aware policy:
    b_i / (b_i + rho1 + (1 - b_i) * rho2). Zero placement means no serving
    cell exists, so the value is 0 by convention (not an error)."""
    b_i = _check_unit(b_i)
    if b_i == 0.0:
        return 0.0
    return b_i / (b_i + rho1(T, alpha) + (1.0 - b_i) * rho2(T, alpha))


def _check_unit(b: float) -> float:
    b = float(b)
    if not 0.0 <= b <= 1.0:
        raise ValidationError(f"caching probability must be in [0, 1], got {b!r}")
    return b


# ---------------------------------------------------------------------------
# Joint coverage over k attempts with a common (static) geometry.
#
# Conditioned on the serving distance r and on the geometry, the k per-attempt
# SIR events share interferer positions but have independent fading, so the
# joint success probability is the product over interferers of
# (u^alpha / (T r^alpha + u^alpha))^k.  Averaging over the point process and
# substituting v = u/r collapses the serving-distance expectation analytically:
#
#   P1: 1 / (1 + 2*I1(k))                    I1 = int_1^inf (1 - (v^a/(T+v^a))^k) v dv
#   P2: b / (b*(1 + 2*I1(k)) + 2*(1-b)*J0(k))  J0 = same integrand from 0
#
# which also exhibits the density invariance directly.  At k = 1 these reduce
# to the single-attempt closed forms (2*I1(1) = rho1, 2*J0(1) = rho1 + rho2).
# ---------------------------------------------------------------------------


def _one_minus_ratio_pow_k(w: float, k: int, T: float, alpha: float) -> float:
    # 1 - (v^alpha/(T+v^alpha))^k evaluated at w = v^2, written via expm1/log1p
    # so the far tail (value -> 0) keeps full relative precision.
    return -math.expm1(-k * math.log1p(T * w ** (-alpha / 2.0)))


@lru_cache(maxsize=16384)
def _tail_integral(k: int, T: float, alpha: float) -> float:
    # I1(k): interferers beyond the serving distance, in the w = v^2 variable.
    val, _ = quad(_one_minus_ratio_pow_k, 1.0, np.inf, args=(k, T, alpha), **_QUAD_KW)
    return 0.5 * val


@lru_cache(maxsize=16384)
def _full_integral(k: int, T: float, alpha: float) -> float:
    # J0(k): the same integrand over the whole plane.  Split at the scale where
    # T * w^(-alpha/2) = 1 so the adaptive rule sees the transition.
    split = max(1.0, T ** (2.0 / alpha))
    lo, _ = quad(_one_minus_ratio_pow_k, 0.0, split, args=(k, T, alpha), **_QUAD_KW)
    hi, _ = quad(_one_minus_ratio_pow_k, split, np.inf, args=(k, T, alpha), **_QUAD_KW)
    return 0.5 * (lo + hi)


def _check_k(k: int) -> int:
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ValidationError(f"attempt count k must be a positive integer, got {k!r}")
    return int(k)


def joint_coverage_p1(k: int, params: ChannelParams) -> float:
    """Probability that all k attempts to the nearest cell clear the SIR
    threshold under a common geometry with independent per-attempt fading."""
    k = _check_k(k)
    return 1.0 / (1.0 + 2.0 * _tail_integral(k, params.T, params.alpha))


def joint_coverage_p2(k: int, b_i: float, params: ChannelParams) -> float:
    """Joint k-attempt coverage when serving from the nearest file-holder.

    Cells holding the file form a thinned process (density b_i * lam) beyond
    the serving distance; all remaining cells interfere from the whole plane.
    b_i = 0 returns 0: no serving cell exists.
    """
    k = _check_k(k)
    b_i = _check_unit(b_i)
    if b_i == 0.0:
        return 0.0
    a_k = 1.0 + 2.0 * _tail_integral(k, params.T, params.alpha)
    d_k = 2.0 * _full_integral(k, params.T, params.alpha)
    return b_i / (b_i * a_k + (1.0 - b_i) * d_k)


# ---------------------------------------------------------------------------
# Hit probability: request-weighted probability of success within n attempts.
# ---------------------------------------------------------------------------


def _ie_coeffs(n: int) -> list[float]:
    # Signed binomial weights of the union-over-attempts expansion, k = 1..n.
    return [((-1) ** (k + 1)) * math.comb(n, k) for k in range(1, n + 1)]


def static_coverage_p1_within_n(n: int, params: ChannelParams) -> float:
    """Probability the nearest cell is in coverage at least once in n attempts
    (file availability factored out).  Alternating binomial sum over the joint
    coverage terms, accumulated exactly with math.fsum."""
    if n > STATIC_N_CAP:
        raise ValidationError(f"static evaluation capped at n = {STATIC_N_CAP}, got n = {n}")
    coeffs = _ie_coeffs(n)
    terms = [c * joint_coverage_p1(k, params) for k, c in enumerate(coeffs, start=1)]
    return math.fsum(terms)


def static_success_p2_within_n(n: int, b_i: float, params: ChannelParams) -> float:
    """Probability of at least one successful attempt in n from the nearest
    file-holder, common geometry."""
    if n > STATIC_N_CAP:
        raise ValidationError(f"static evaluation capped at n = {STATIC_N_CAP}, got n = {n}")
    coeffs = _ie_coeffs(n)
    terms = [c * joint_coverage_p2(k, b_i, params) for k, c in enumerate(coeffs, start=1)]
    return math.fsum(terms)


def file_success_probs(scenario: Scenario, b: np.ndarray, params: ChannelParams) -> np.ndarray:
    """Per-file probability of success within scenario.n attempts, for every
    file's caching probability in b.  Raises past the static stability cap;
    hit_prob() is the entry point that knows how to fall back."""
    b = np.asarray(b, dtype=np.float64)
    n = scenario.n
    if scenario.mobility is Mobility.MOBILE:
        if scenario.policy is Policy.P1:
            ps = b / (1.0 + rho1(params.T, params.alpha))
        else:
            rc = RhoConstants.from_channel(params)
            ps = np.where(b > 0.0, b / (rc.B * b + rc.C), 0.0)
        return 1.0 - (1.0 - ps) ** n
    if scenario.policy is Policy.P1:
        return b * static_coverage_p1_within_n(n, params)
    return np.array([static_success_p2_within_n(n, float(bi), params) for bi in b])


@dataclass(frozen=True)
class HitProbResult:
    """Hit probability plus evaluation metadata (analytic vs simulation fallback)."""

    value: float
    method: str
    flags: tuple[str, ...] = ()

    def __float__(self) -> float:
        return self.value


def hit_prob(
    scenario: Scenario,
    b: PlacementVector,
    lib: ZipfLibrary,
    params: ChannelParams,
    sim_fallback=None,
) -> HitProbResult:
    """Request-weighted probability of receiving the requested file within
    scenario.n attempts.

    Mobile scenarios compose the per-attempt success probability as
    1 - (1 - p)^n; static scenarios use the alternating-sum expansion over
    joint coverage terms.  Static requests beyond the stability cap
    (n > STATIC_N_CAP) are answered by the Monte Carlo simulator and flagged
    as such; pass a SimConfig as sim_fallback to control that run.
    """
    probs = b.probs if isinstance(b, PlacementVector) else np.asarray(b, dtype=np.float64)
    if probs.size != lib.K:
        raise ValidationError(f"placement has {probs.size} entries for a {lib.K}-file library")
    static = scenario.mobility is Mobility.STATIC
    if static and scenario.n > STATIC_N_CAP:
        from . import mcsim  # deferred: mcsim depends on nothing here at import time

        cfg = sim_fallback if sim_fallback is not None else mcsim.SimConfig(trials=200_000, seed=0)
        res = mcsim.simulate_hit(scenario, b, lib, params, cfg)
        return HitProbResult(
            value=res.hit_estimate,
            method="mc-fallback",
            flags=("static-n-above-cap",) + res.flags,
        )
    per_file = file_success_probs(scenario, probs, params)
    value = float(np.dot(lib.request_probs, per_file))
    value = min(max(value, 0.0), 1.0)
    return HitProbResult(value=value, method="analytic")


# ---------------------------------------------------------------------------
# Vectorized evaluation over many candidate placements (rows of Bmat), shared
# by the optimizers and the exhaustive grid oracle so both sides of every
# solver-vs-oracle comparison price placements identically.
# ---------------------------------------------------------------------------


def placement_hit_values(
    scenario: Scenario, Bmat: np.ndarray, lib: ZipfLibrary, params: ChannelParams
) -> np.ndarray:
    """Hit probability for each row of Bmat (shape (N, K))."""
    Bmat = np.atleast_2d(np.asarray(Bmat, dtype=np.float64))
    if Bmat.shape[1] != lib.K:
        raise ValidationError(f"placement rows have {Bmat.shape[1]} entries for K = {lib.K}")
    n = scenario.n
    pr = lib.request_probs
    if scenario.mobility is Mobility.MOBILE:
        if scenario.policy is Policy.P1:
            ps = Bmat / (1.0 + rho1(params.T, params.alpha))
        else:
            rc = RhoConstants.from_channel(params)
            with np.errstate(divide="ignore", invalid="ignore"):
                ps = np.where(Bmat > 0.0, Bmat / (rc.B * Bmat + rc.C), 0.0)
        return (1.0 - (1.0 - ps) ** n) @ pr
    if n > STATIC_N_CAP:
        raise ValidationError(f"static evaluation capped at n = {STATIC_N_CAP}, got n = {n}")
    if scenario.policy is Policy.P1:
        return (Bmat @ pr) * static_coverage_p1_within_n(n, params)
    coeffs = _ie_coeffs(n)
    acc = np.zeros_like(Bmat)
    for k, c in enumerate(coeffs, start=1):
        a_k = 1.0 + 2.0 * _tail_integral(k, params.T, params.alpha)
        d_k = 2.0 * _full_integral(k, params.T, params.alpha)
        with np.errstate(divide="ignore", invalid="ignore"):
            term = np.where(Bmat > 0.0, Bmat / (Bmat * a_k + (1.0 - Bmat) * d_k), 0.0)
        acc += c * term
    return acc @ pr
