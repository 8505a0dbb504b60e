"""Optimal cache-placement solvers.

Mobile solvers invert the first-order conditions directly: each file's
caching probability is a clamped monotone function of the budget multiplier
nu, so a single bisection on sum(b(nu)) = L recovers the optimum.  Static
cache-aware placement has no closed-form stationarity inverse and is solved
by projected gradient ascent on the capped simplex.  Every solution ships
with an executable KKT certificate (duals, complementary slackness,
stationarity residual) and can be cross-checked against the exhaustive grid
oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import coverage
from .coverage import ChannelParams, Mobility, Policy, RhoConstants, Scenario
from .errors import SolverError, ValidationError
from .popularity import PlacementVector, ZipfLibrary, validate_placement

KKT_RESIDUAL_TOL = 1e-7
SUM_TOL = 1e-8
ASCENT_TOL = 1e-6


@dataclass(frozen=True)
class KktSolution:
    """Optimal placement plus the dual variables and residuals that certify it.

    nu_star is the multiplier of the storage budget; mu_star and w_star are
    the multipliers of b_i >= 0 and b_i <= 1.  stationarity_residual is the
    largest violation of grad_i + nu + mu_i - w_i = 0; certified means the
    residual met its tolerance within the iteration budget.
    """

    b_star: PlacementVector
    nu_star: float
    mu_star: np.ndarray
    w_star: np.ndarray
    stationarity_residual: float
    objective: float
    certified: bool = True
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class TwoFileConstants:
    """Constants of the two-file closed form: a = 2**(gamma/(n-1)) and the
    cache-agnostic coverage probability."""

    a: float
    p_c: float


@dataclass(frozen=True)
class WaterfillConstants:
    """Water-filling level sqrt_eps and the active-file count K_star of the
    single-attempt cache-aware closed form."""

    sqrt_eps: float
    K_star: int


def project_capped_simplex(v: np.ndarray, L: float) -> np.ndarray:
    """Euclidean projection onto {b : sum(b) = L, 0 <= b_i <= 1} by bisection
    on the common shift."""
    v = np.asarray(v, dtype=np.float64)
    if not 0 < L <= v.size:
        raise ValidationError(f"budget L={L} infeasible for {v.size} coordinates")
    lo = float(v.min()) - 1.0
    hi = float(v.max())
    for _ in range(100):
        tau = 0.5 * (lo + hi)
        s = np.clip(v - tau, 0.0, 1.0).sum()
        if s > L:
            lo = tau
        else:
            hi = tau
    return np.clip(v - 0.5 * (lo + hi), 0.0, 1.0)


def _kkt_certificate(
    b: np.ndarray, grad: np.ndarray, nu: float | None, boundary_tol: float = 1e-9
) -> tuple[float, np.ndarray, np.ndarray, float]:
    """Duals and stationarity residual for a candidate placement.

    If nu is None it is recovered from the gradient: interior coordinates all
    satisfy grad_i = -nu at an optimum; with no interior coordinate any nu in
    the bracket set by the boundary coordinates certifies.
    """
    at_zero = b <= boundary_tol
    at_one = b >= 1.0 - boundary_tol
    interior = ~(at_zero | at_one)
    if nu is None:
        if interior.any():
            nu = float(-grad[interior].mean())
        else:
            lo = float((-grad[at_one]).max()) if at_one.any() else -np.inf
            hi = float((-grad[at_zero]).min()) if at_zero.any() else np.inf
            if lo == -np.inf and hi == np.inf:
                nu = 0.0
            elif lo == -np.inf:
                nu = hi
            elif hi == np.inf:
                nu = lo
            else:
                nu = 0.5 * (lo + hi)
    mu = np.where(at_zero, np.maximum(0.0, -(grad + nu)), 0.0)
    w = np.where(at_one, np.maximum(0.0, grad + nu), 0.0)
    residual = float(np.abs(grad + nu + mu - w).max())
    return float(nu), mu, w, residual


def _finish(
    scenario: Scenario,
    b: np.ndarray,
    grad: np.ndarray,
    nu: float | None,
    lib: ZipfLibrary,
    params: ChannelParams,
    flags: tuple[str, ...] = (),
    residual_tol: float = KKT_RESIDUAL_TOL,
) -> KktSolution:
    nu_star, mu, w, residual = _kkt_certificate(b, grad, nu)
    objective = float(coverage.placement_hit_values(scenario, b, lib, params)[0])
    return KktSolution(
        b_star=validate_placement(np.clip(b, 0.0, 1.0), lib.L),
        nu_star=nu_star,
        mu_star=mu,
        w_star=w,
        stationarity_residual=residual,
        objective=objective,
        certified=residual <= residual_tol,
        flags=flags,
    )


# ---------------------------------------------------------------------------
# Mobile user, cache-agnostic policy
# ---------------------------------------------------------------------------


def _grad_mobile_p1(b: np.ndarray, pr: np.ndarray, pc: float, n: int) -> np.ndarray:
    return pr * n * pc * (1.0 - b * pc) ** (n - 1)


def optimal_mobile_p1(lib: ZipfLibrary, params: ChannelParams, n: int) -> KktSolution:
    """Optimal placement for a mobile user attaching to the nearest cell.

    For n >= 2 each coordinate of the optimum is the clamped inverse of the
    marginal-gain condition; the budget multiplier is found by bisection on
    the strictly monotone map nu -> sum(b(nu)).  n = 1 makes the objective
    linear, so the optimum caches the L most popular files outright.
    """
    n = _check_n(n)
    pr = lib.request_probs
    pc = 1.0 / (1.0 + coverage.rho1(params.T, params.alpha))
    scenario = Scenario(Policy.P1, Mobility.MOBILE, n)
    if n == 1:
        b = _top_l_indicator(lib.K, lib.L)
        return _finish(scenario, b, _grad_mobile_p1(b, pr, pc, n), None, lib, params)

    t_zero = -pr * n * pc  # below this multiplier the file is dropped
    t_one = -pr * n * pc * (1.0 - pc) ** (n - 1)  # above it the file is pinned

    def b_of(nu: float) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            inner = (nu / t_zero) ** (1.0 / (n - 1))
        b = (1.0 - inner) / pc
        return np.where(nu <= t_zero, 0.0, np.where(nu >= t_one, 1.0, np.clip(b, 0.0, 1.0)))

    lo = float(t_zero.min())
    hi = float(t_one.max())
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if b_of(mid).sum() < lib.L:
            lo = mid
        else:
            hi = mid
    nu = 0.5 * (lo + hi)
    b = b_of(nu)
    return _finish(scenario, b, _grad_mobile_p1(b, pr, pc, n), nu, lib, params)


def two_file_constants(gamma: float, p_c: float, n: int) -> TwoFileConstants:
    if n < 2:
        raise ValidationError("the interior two-file branch needs n >= 2")
    return TwoFileConstants(a=2.0 ** (gamma / (n - 1)), p_c=p_c)


def corollary1_two_file(gamma: float, p_c: float, n: int) -> tuple[float, float]:
    """Closed-form optimum for a two-file library with unit storage (mobile,
    cache-agnostic policy): cache only the top file while
    n < 1 + gamma/log2(1/(1-p_c)), then split per the interior formula."""
    n = _check_n(n)
    gamma = float(gamma)
    p_c = float(p_c)
    if not gamma > 0.0:
        raise ValidationError(f"gamma must be > 0, got {gamma!r}")
    if not 0.0 < p_c < 1.0:
        raise ValidationError(f"coverage probability must be in (0, 1), got {p_c!r}")
    if n == 1:
        return 1.0, 0.0
    threshold = 1.0 + gamma / math.log2(1.0 / (1.0 - p_c))
    if n < threshold:
        return 1.0, 0.0
    a = two_file_constants(gamma, p_c, n).a
    b1 = (a - 1.0 + p_c) / ((a + 1.0) * p_c)
    b1 = min(max(b1, 0.0), 1.0)
    return b1, 1.0 - b1


# ---------------------------------------------------------------------------
# Mobile user, cache-aware policy
# ---------------------------------------------------------------------------


def _log_phi_p2(b: float, rc: RhoConstants, n: int) -> float:
    # log of the per-unit-popularity marginal gain n*C*(C - rho2*b)^(n-1)/(B*b + C)^(n+1)
    return (
        math.log(n * rc.C)
        + (n - 1) * math.log(rc.C - rc.rho2 * b)
        - (n + 1) * math.log(rc.B * b + rc.C)
    )


def _solve_p2_coordinate(p_i: float, nu: float, rc: RhoConstants, n: int) -> float:
    """Root in (0, 1) of the cache-aware stationarity condition for one file,
    solved in log space; callers guarantee a sign change on the bracket."""
    target = math.log(-nu) - math.log(p_i)

    def f(b: float) -> float:
        return _log_phi_p2(b, rc, n) - target

    f0 = f(0.0)
    f1 = f(1.0)
    if f0 <= 0.0:
        return 0.0
    if f1 >= 0.0:
        return 1.0
    return float(brentq(f, 0.0, 1.0, xtol=1e-15, rtol=8.9e-16))


def _phi_p2_monotone(rc: RhoConstants, n: int) -> bool:
    grid = np.linspace(0.0, 1.0, 17)
    vals = [_log_phi_p2(float(x), rc, n) for x in grid]
    return all(v2 <= v1 + 1e-12 for v1, v2 in zip(vals, vals[1:]))


def _scan_p2_coordinate(p_i: float, nu: float, rc: RhoConstants, n: int) -> float:
    # fallback when the marginal gain fails the monotonicity audit: locate the
    # sign change nearest the feasible interval by dense scan, then refine
    target = math.log(-nu) - math.log(p_i)
    grid = np.linspace(0.0, 1.0, 10_001)
    vals = np.array([_log_phi_p2(float(x), rc, n) - target for x in grid])
    sign_change = np.nonzero(np.diff(np.signbit(vals)))[0]
    if sign_change.size == 0:
        return 0.0 if vals[0] <= 0.0 else 1.0
    i = int(sign_change[0])
    return float(
        brentq(
            lambda b: _log_phi_p2(b, rc, n) - target,
            grid[i],
            grid[i + 1],
            xtol=1e-15,
            rtol=8.9e-16,
        )
    )


def optimal_mobile_p2(lib: ZipfLibrary, params: ChannelParams, n: int) -> KktSolution:
    """Optimal placement for a mobile user attaching to the nearest file-holder,
    unit storage.  Outer bisection on the budget multiplier over the union of
    the per-file threshold intervals; each interior coordinate comes from a
    bracketed scalar root-find.  For L > 1 use optimal_placement, which routes
    to the numeric projected-ascent solver."""
    n = _check_n(n)
    if lib.L != 1:
        raise ValidationError(
            f"the closed-form cache-aware solver requires L = 1, got L = {lib.L}; "
            "use optimal_placement() for the numeric general-L solver"
        )
    pr = lib.request_probs
    rc = RhoConstants.from_channel(params)
    scenario = Scenario(Policy.P2, Mobility.MOBILE, n)
    if lib.K == lib.L:
        b = np.ones(lib.K)
        grad = pr * n * rc.C * rc.rho1 ** (n - 1) / (1.0 + rc.rho1) ** (n + 1)
        return _finish(scenario, b, grad, None, lib, params)
    monotone = _phi_p2_monotone(rc, n)
    flags = () if monotone else ("monotonicity-fallback",)
    solve = _solve_p2_coordinate if monotone else _scan_p2_coordinate

    t_zero = -pr * n / rc.C
    t_one = -pr * n * rc.C * rc.rho1 ** (n - 1) / (1.0 + rc.rho1) ** (n + 1)

    def b_of(nu: float) -> np.ndarray:
        out = np.empty(lib.K)
        for i in range(lib.K):
            if nu <= t_zero[i]:
                out[i] = 0.0
            elif nu >= t_one[i]:
                out[i] = 1.0
            else:
                out[i] = solve(float(pr[i]), nu, rc, n)
        return out

    lo = float(t_zero.min())
    hi = float(t_one.max())
    for _ in range(120):
        mid = 0.5 * (lo + hi)
        if b_of(mid).sum() < lib.L:
            lo = mid
        else:
            hi = mid
    nu = 0.5 * (lo + hi)
    b = b_of(nu)
    if abs(b.sum() - lib.L) > SUM_TOL:
        raise SolverError(
            f"budget bisection failed: sum(b) = {b.sum():.12g} != {lib.L} at nu = {nu:.6g} "
            f"(bracket [{float(t_zero.min()):.6g}, {float(t_one.max()):.6g}])"
        )
    grad = pr * n * rc.C * np.exp(
        (n - 1) * np.log(rc.C - rc.rho2 * b) - (n + 1) * np.log(rc.B * b + rc.C)
    )
    return _finish(scenario, b, grad, nu, lib, params, flags=flags)


def waterfill_constants(lib: ZipfLibrary, params: ChannelParams) -> WaterfillConstants:
    """Water-filling level for the single-attempt cache-aware optimum: scan the
    active-file count from K downward and keep the first level whose placement
    is feasible with exactly the top files active."""
    r1 = coverage.rho1(params.T, params.alpha)
    r2 = coverage.rho2(params.T, params.alpha)
    B = 1.0 - r2
    C = r1 + r2
    sqrt_p = np.sqrt(lib.request_probs)
    for k_star in range(lib.K, 0, -1):
        sqrt_eps = sqrt_p[:k_star].sum() / (k_star * r1 + (k_star - 1) * r2 + 1.0)
        raw = (sqrt_p / sqrt_eps - C) / B
        b = np.maximum(raw, 0.0)
        active_ok = b[k_star - 1] > 0.0 and (k_star == lib.K or raw[k_star] <= 1e-12)
        if active_ok and (b <= 1.0 + 1e-12).all():
            return WaterfillConstants(sqrt_eps=float(sqrt_eps), K_star=k_star)
    raise SolverError("no feasible active-file count found (unreachable for valid input)")


def corollary2_single_tx_p2(lib: ZipfLibrary, params: ChannelParams) -> PlacementVector:
    """Closed-form optimum for a mobile user under the cache-aware policy with
    a single attempt and unit storage: b_i = [(sqrt(P_i/eps) - (rho1+rho2)) / (1-rho2)]+."""
    if lib.L != 1:
        raise ValidationError(f"the single-attempt closed form requires L = 1, got L = {lib.L}")
    r1 = coverage.rho1(params.T, params.alpha)
    r2 = coverage.rho2(params.T, params.alpha)
    wf = waterfill_constants(lib, params)
    raw = (np.sqrt(lib.request_probs) / wf.sqrt_eps - (r1 + r2)) / (1.0 - r2)
    b = np.clip(raw, 0.0, 1.0)
    if abs(b.sum() - 1.0) > 1e-9:
        raise SolverError(f"water-filling placement sums to {b.sum():.12g}, expected 1")
    return validate_placement(b, 1)


# ---------------------------------------------------------------------------
# Static user
# ---------------------------------------------------------------------------


def optimal_static_p1(lib: ZipfLibrary, params: ChannelParams, n: int) -> PlacementVector:
    """The static cache-agnostic objective is linear in b with non-increasing
    coefficients, so the optimum caches the L most popular files."""
    n = _check_n(n)
    coverage.static_coverage_p1_within_n(n, params)  # enforces the stability cap
    return validate_placement(_top_l_indicator(lib.K, lib.L), lib.L)


def _grad_static_p2(b: np.ndarray, pr: np.ndarray, ak: np.ndarray, dk: np.ndarray, ck: np.ndarray) -> np.ndarray:
    den = b[:, None] * ak[None, :] + (1.0 - b[:, None]) * dk[None, :]
    terms = ck[None, :] * dk[None, :] / (den * den)
    return pr * np.array([math.fsum(row) for row in terms])


def optimal_static_p2(
    lib: ZipfLibrary,
    params: ChannelParams,
    n: int,
    tol: float = ASCENT_TOL,
    max_iter: int = 20_000,
) -> KktSolution:
    """Numeric optimum for a static user under the cache-aware policy:
    projected gradient ascent on the capped simplex with the analytic gradient
    of the alternating-sum objective.  A result that fails to reach the
    stationarity tolerance is returned flagged as non-certified."""
    n = _check_n(n)
    if n > coverage.STATIC_N_CAP:
        raise ValidationError(f"static evaluation capped at n = {coverage.STATIC_N_CAP}, got n = {n}")
    pr = lib.request_probs
    ak = np.array([1.0 + 2.0 * coverage._tail_integral(k, params.T, params.alpha) for k in range(1, n + 1)])
    dk = np.array([2.0 * coverage._full_integral(k, params.T, params.alpha) for k in range(1, n + 1)])
    ck = np.array(coverage._ie_coeffs(n), dtype=np.float64)
    scenario = Scenario(Policy.P2, Mobility.STATIC, n)

    def value(b: np.ndarray) -> float:
        return float(coverage.placement_hit_values(scenario, b, lib, params)[0])

    def grad(b: np.ndarray) -> np.ndarray:
        return _grad_static_p2(b, pr, ak, dk, ck)

    # warm start from the single-attempt closed form when available
    if lib.L == 1:
        b0 = corollary2_single_tx_p2(lib, params).probs
    else:
        b0 = np.full(lib.K, lib.L / lib.K)
    b, converged, flags = _projected_ascent(value, grad, b0, lib.L, tol, max_iter)
    g = grad(b)
    sol = _finish(scenario, b, g, None, lib, params, flags=flags, residual_tol=tol)
    if not converged:
        sol = KktSolution(
            b_star=sol.b_star,
            nu_star=sol.nu_star,
            mu_star=sol.mu_star,
            w_star=sol.w_star,
            stationarity_residual=sol.stationarity_residual,
            objective=sol.objective,
            certified=False,
            flags=sol.flags + ("ascent-not-converged",),
        )
    return sol


def _projected_ascent(value, grad, b0, L, tol, max_iter):
    b = project_capped_simplex(np.asarray(b0, dtype=np.float64), L)
    f = value(b)
    g = grad(b)
    step = 1.0
    flags: tuple[str, ...] = ()
    for _ in range(max_iter):
        if float(np.abs(project_capped_simplex(b + g, L) - b).max()) <= tol:
            return b, True, flags
        accepted = False
        while step > 1e-14:
            cand = project_capped_simplex(b + step * g, L)
            fc = value(cand)
            if fc >= f + 1e-4 * float(g @ (cand - b)):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        b, f = cand, fc
        g = grad(b)
        step = min(step * 2.0, 1e3)
    converged = float(np.abs(project_capped_simplex(b + g, L) - b).max()) <= tol
    return b, converged, flags


def _mobile_p2_general_l(lib: ZipfLibrary, params: ChannelParams, n: int) -> KktSolution:
    # numeric fallback for cache-aware mobile placement with L > 1
    pr = lib.request_probs
    rc = RhoConstants.from_channel(params)
    scenario = Scenario(Policy.P2, Mobility.MOBILE, n)

    def value(b: np.ndarray) -> float:
        return float(coverage.placement_hit_values(scenario, b, lib, params)[0])

    def grad(b: np.ndarray) -> np.ndarray:
        return pr * n * rc.C * np.exp(
            (n - 1) * np.log(rc.C - rc.rho2 * b) - (n + 1) * np.log(rc.B * b + rc.C)
        )

    b0 = np.full(lib.K, lib.L / lib.K)
    b, converged, flags = _projected_ascent(value, grad, b0, lib.L, ASCENT_TOL, 20_000)
    sol = _finish(scenario, b, grad(b), None, lib, params, flags=flags, residual_tol=ASCENT_TOL)
    if not converged:
        sol = KktSolution(
            b_star=sol.b_star,
            nu_star=sol.nu_star,
            mu_star=sol.mu_star,
            w_star=sol.w_star,
            stationarity_residual=sol.stationarity_residual,
            objective=sol.objective,
            certified=False,
            flags=sol.flags + ("ascent-not-converged",),
        )
    return sol


# ---------------------------------------------------------------------------
# Dispatch and the exhaustive oracle
# ---------------------------------------------------------------------------


def optimal_placement(scenario: Scenario, lib: ZipfLibrary, params: ChannelParams) -> KktSolution:
    """Route to the solver matching the scenario; every branch returns a
    certified KktSolution (or one explicitly flagged otherwise)."""
    if scenario.mobility is Mobility.MOBILE:
        if scenario.policy is Policy.P1:
            return optimal_mobile_p1(lib, params, scenario.n)
        if lib.L == 1:
            return optimal_mobile_p2(lib, params, scenario.n)
        return _mobile_p2_general_l(lib, params, scenario.n)
    if scenario.policy is Policy.P1:
        b = optimal_static_p1(lib, params, scenario.n).probs
        pcn = coverage.static_coverage_p1_within_n(scenario.n, params)
        return _finish(scenario, b, lib.request_probs * pcn, None, lib, params)
    return optimal_static_p2(lib, params, scenario.n)


def grid_search_oracle(
    scenario: Scenario, lib: ZipfLibrary, params: ChannelParams, step: float = 1e-2
) -> PlacementVector:
    """Exhaustive argmax of the hit probability over the capped simplex at the
    given grid resolution.  Verification-only: quadratic-to-cubic cost, so the
    library is capped at four files."""
    if lib.K > 4:
        raise ValidationError(f"grid oracle capped at K = 4 files, got K = {lib.K}")
    if not 0.0 < step <= 1e-2 + 1e-15:
        raise ValidationError(f"grid step must be in (0, 1e-2], got {step!r}")
    pts = np.linspace(0.0, 1.0, round(1.0 / step) + 1)
    L = float(lib.L)
    if lib.K == 1:
        return validate_placement([1.0], 1)

    best_val = -np.inf
    best_row = None
    free = lib.K - 1
    for b1 in pts:
        if free == 1:
            grid = b1 * np.ones((1, 1))
        elif free == 2:
            grid = np.column_stack([np.full(pts.size, b1), pts])
        else:
            g2, g3 = np.meshgrid(pts, pts, indexing="ij")
            grid = np.column_stack([np.full(g2.size, b1), g2.ravel(), g3.ravel()])
        last = L - grid.sum(axis=1)
        mask = (last >= -1e-12) & (last <= 1.0 + 1e-12)
        if not mask.any():
            continue
        rows = np.column_stack([grid[mask], np.clip(last[mask], 0.0, 1.0)])
        vals = coverage.placement_hit_values(scenario, rows, lib, params)
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val = float(vals[i])
            best_row = rows[i]
    return validate_placement(best_row, lib.L)


def _top_l_indicator(K: int, L: int) -> np.ndarray:
    b = np.zeros(K)
    b[:L] = 1.0
    return b


def _check_n(n: int) -> int:
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValidationError(f"max transmissions n must be a positive integer, got {n!r}")
    return int(n)
