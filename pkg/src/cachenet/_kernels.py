"""Compiled Monte Carlo kernels.

Randomness is counter-based: every variate is a pure function of
(seed, trial, attempt, purpose, index), so trials can execute in any order on
any number of threads and still produce bit-identical results.  The mixing
function is the splitmix64 finalizer; per-point exponential fading uses a
256-level ziggurat with the splitmix64 stream as its bit source.

Each trial records the 1-based attempt index at which the terminal event
occurred (first success for hit runs, first failure for joint-coverage runs;
0 if no event within the attempt budget), which lets one pass serve every
n <= n_max at once.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

U64 = np.uint64
GOLD = U64(0x9E3779B97F4A7C15)
MIX1 = U64(0xBF58476D1CE4E5B9)
MIX2 = U64(0x94D049BB133111EB)
INV53 = 1.0 / 9007199254740992.0  # 2**-53

# purpose tags separating the variate streams of one (trial, attempt)
P_REQ = 0
P_COUNT = 1
P_RAD = 2
P_MARK = 3
P_FADE = 4

# fixed work partition: chunk -> scratch row, independent of thread count
NCHUNK = 64


def _make_exp_ziggurat():
    # 256-level ziggurat tables for the unit exponential (Marsaglia & Tsang
    # layout, thresholds rescaled to 53-bit integers).
    m = 2.0**53
    de = 7.697117470131487
    te = de
    ve = 3.949659822581572e-3
    ke = np.zeros(256, dtype=np.uint64)
    we = np.zeros(256)
    fe = np.zeros(256)
    q = ve / math.exp(-de)
    ke[0] = U64((de / q) * m)
    ke[1] = U64(0)
    we[0] = q / m
    we[255] = de / m
    fe[0] = 1.0
    fe[255] = math.exp(-de)
    for i in range(254, 0, -1):
        de = -math.log(ve / de + math.exp(-de))
        ke[i + 1] = U64((de / te) * m)
        te = de
        fe[i] = math.exp(-de)
        we[i] = de / m
    return ke, we, fe


ZIG_KE, ZIG_WE, ZIG_FE = _make_exp_ziggurat()
ZIG_R = 7.697117470131487


@njit(inline="always")
def _mix(z):
    z = (z ^ (z >> U64(30))) * MIX1
    z = (z ^ (z >> U64(27))) * MIX2
    return z ^ (z >> U64(31))


@njit(inline="always")
def _stream_key(seed, trial, attempt, purpose):
    k = _mix(seed + GOLD * (U64(trial) + U64(1)))
    k = _mix(k + GOLD * (U64(attempt) + U64(1)))
    return _mix(k + GOLD * (U64(purpose) + U64(1)))


@njit(inline="always")
def _u64_at(key, i):
    return _mix(key + GOLD * U64(i))


@njit(inline="always")
def _u01(key, i):
    # uniform in [0, 1)
    return (_u64_at(key, i) >> U64(11)) * INV53


@njit(inline="always")
def _u01_open(key, i):
    # uniform in (0, 1]; keeps distances (and path losses) finite
    return ((_u64_at(key, i) >> U64(11)) + U64(1)) * INV53


@njit(inline="always")
def _exp_draw(key, cursor):
    # unit exponential via ziggurat; returns (value, advanced cursor)
    while True:
        u = _u64_at(key, cursor)
        cursor += 1
        idx = int(u & U64(255))
        j = u >> U64(11)
        x = j * ZIG_WE[idx]
        if j < ZIG_KE[idx]:
            return x, cursor
        if idx == 0:
            u2 = _u01(key, cursor)
            cursor += 1
            return ZIG_R - math.log(1.0 - u2), cursor
        u2 = _u01(key, cursor)
        cursor += 1
        if ZIG_FE[idx] + u2 * (ZIG_FE[idx - 1] - ZIG_FE[idx]) < math.exp(-x):
            return x, cursor


@njit
def _poisson(key, mu):
    if mu < 10.0:
        # Knuth product method
        enlam = math.exp(-mu)
        k = 0
        prod = 1.0
        i = 0
        while True:
            prod *= _u01(key, i)
            i += 1
            if prod <= enlam:
                return k
            k += 1
    # Hormann PTRS transformed rejection, exact for mu >= 10
    slam = math.sqrt(mu)
    llam = math.log(mu)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    i = 0
    while True:
        U = _u01(key, i) - 0.5
        V = _u01(key, i + 1)
        i += 2
        us = 0.5 - abs(U)
        k = int(math.floor((2.0 * a / us + b) * U + mu + 0.43))
        if us >= 0.07 and V <= vr:
            return k
        if k < 0:
            continue
        if us < 0.013 and V > us:
            continue
        if math.log(V) + math.log(invalpha) - math.log(a / (us * us) + b) <= (
            k * llam - mu - math.lgamma(k + 1.0)
        ):
            return k


@njit(inline="always")
def _pathloss(r2, half_alpha, fast4, fast3):
    # r2 is the squared distance; returns r^-alpha
    if fast4:
        return 1.0 / (r2 * r2)
    if fast3:
        return 1.0 / (r2 * math.sqrt(r2))
    return r2 ** (-half_alpha)


@njit(parallel=True, cache=True)
def run_trials(
    seed,
    trials,
    n_att,
    mobile,
    policy2,
    require_all,
    mu,
    R2,
    T,
    alpha,
    cum_req,
    bprob,
    scratch,
    out_first,
    out_req,
):
    K = bprob.size
    half_alpha = 0.5 * alpha
    fast4 = alpha == 4.0
    fast3 = alpha == 3.0
    bufN = scratch.shape[1]
    chunk = (trials + NCHUNK - 1) // NCHUNK
    for c in prange(NCHUNK):
        row = scratch[c]
        t_lo = c * chunk
        t_hi = min(trials, t_lo + chunk)
        for t in range(t_lo, t_hi):
            if K == 1:
                req = 0
            else:
                ur = _u01(_stream_key(seed, t, 0, P_REQ), 0)
                req = 0
                while req < K - 1 and ur >= cum_req[req]:
                    req += 1
            br = bprob[req]

            first = 0
            cached = False
            sN = 0
            sj = -1
            sok = False
            for a in range(n_att):
                kf = _stream_key(seed, t, a, P_FADE)
                fcur = 0
                if (not mobile) and cached:
                    # same geometry and marks as attempt 1: fresh fading only
                    if not sok:
                        success = False
                    else:
                        total = 0.0
                        cs = 0.0
                        for j in range(sN):
                            h, fcur = _exp_draw(kf, fcur)
                            cj = h * row[j]
                            total += cj
                            if j == sj:
                                cs = cj
                        success = cs > T * (total - cs)
                else:
                    ga = a if mobile else 0
                    N = _poisson(_stream_key(seed, t, ga, P_COUNT), mu)
                    kr = _stream_key(seed, t, ga, P_RAD)
                    km = _stream_key(seed, t, ga, P_MARK)
                    store = (not mobile) and (N <= bufN)
                    best_r2 = np.inf
                    best_c = 0.0
                    best_j = -1
                    total = 0.0
                    if policy2:
                        # serving cell: nearest one holding the requested file
                        for j in range(N):
                            r2 = R2 * _u01_open(kr, j)
                            pl = _pathloss(r2, half_alpha, fast4, fast3)
                            h, fcur = _exp_draw(kf, fcur)
                            cj = h * pl
                            total += cj
                            if store:
                                row[j] = pl
                            if r2 < best_r2 and _u01(km, j) < br:
                                best_r2 = r2
                                best_c = cj
                                best_j = j
                        ok = best_j >= 0
                    else:
                        # serving cell: nearest, succeeds only if it holds the file
                        for j in range(N):
                            r2 = R2 * _u01_open(kr, j)
                            pl = _pathloss(r2, half_alpha, fast4, fast3)
                            h, fcur = _exp_draw(kf, fcur)
                            cj = h * pl
                            total += cj
                            if store:
                                row[j] = pl
                            if r2 < best_r2:
                                best_r2 = r2
                                best_c = cj
                                best_j = j
                        ok = best_j >= 0 and _u01(km, best_j) < br
                    success = ok and best_c > T * (total - best_c)
                    if not mobile:
                        cached = store
                        sN = N
                        sj = best_j
                        sok = ok

                if require_all:
                    if not success:
                        first = a + 1
                        break
                else:
                    if success:
                        first = a + 1
                        break
                    if (not mobile) and (not sok):
                        break  # static with no serving cell can never succeed

            out_first[t] = first
            out_req[t] = req


@njit(cache=True)
def poisson_sample(seed, count, mu):
    # exposed for distribution tests of the Poisson sampler
    out = np.empty(count, dtype=np.int64)
    for i in range(count):
        out[i] = _poisson(_stream_key(U64(seed), i, 0, P_COUNT), mu)
    return out


@njit(cache=True)
def exponential_sample(seed, count):
    # exposed for distribution tests of the ziggurat sampler
    out = np.empty(count, dtype=np.float64)
    key = _stream_key(U64(seed), 0, 0, P_FADE)
    cur = 0
    for i in range(count):
        out[i], cur = _exp_draw(key, cur)
    return out


@njit(cache=True)
def uniform_sample(seed, count):
    # exposed for distribution tests of the mixing function
    out = np.empty(count, dtype=np.float64)
    key = _stream_key(U64(seed), 0, 0, P_RAD)
    for i in range(count):
        out[i] = _u01(key, i)
    return out
