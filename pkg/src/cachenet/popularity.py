"""Content-library model: Zipf request probabilities and placement bookkeeping.

A library holds K files ranked by popularity (file 1 most requested) with
request probabilities following Zipf's law, and each small cell caches file i
independently with probability b_i subject to the storage budget sum(b) = L.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

# sum(b) == L must hold this tightly for a placement to be accepted
PLACEMENT_SUM_TOL = 1e-9


def zipf_request_probs(K: int, gamma: float) -> np.ndarray:
    """Normalized Zipf mass function over ranks 1..K: p_i = i^-gamma / sum_j j^-gamma.

    The normalizer is computed by direct summation; K is small enough in this
    domain that no zeta-function approximation is warranted.
    """
    if not isinstance(K, (int, np.integer)) or K < 1:
        raise ValidationError(f"library size K must be a positive integer, got {K!r}")
    gamma = float(gamma)
    if not gamma > 0.0:
        raise ValidationError(f"Zipf exponent gamma must be > 0, got {gamma!r}")
    ranks = np.arange(1, K + 1, dtype=np.float64)
    weights = ranks ** (-gamma)
    return weights / weights.sum()


@dataclass(frozen=True)
class PlacementVector:
    """Per-file caching probabilities on the capped simplex {0 <= b_i <= 1, sum b = L}."""

    probs: np.ndarray
    L: int

    def __post_init__(self):
        arr = np.asarray(self.probs, dtype=np.float64).copy()
        arr.flags.writeable = False
        object.__setattr__(self, "probs", arr)

    def __len__(self) -> int:
        return self.probs.size

    def as_array(self) -> np.ndarray:
        return self.probs


def validate_placement(b, L: int) -> PlacementVector:
    """Accept b iff every 0 <= b_i <= 1 and sum(b) = L within tolerance.

    Rejections name the violated constraint and its magnitude so callers can
    tell a box violation from a budget violation.
    """
    arr = np.asarray(b, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValidationError(f"placement must be a non-empty 1-D vector, got shape {arr.shape}")
    if not isinstance(L, (int, np.integer)) or L < 1:
        raise ValidationError(f"cache capacity L must be a positive integer, got {L!r}")
    if L > arr.size:
        raise ValidationError(f"cache capacity L={L} exceeds library size K={arr.size}")
    lo_bad = arr < 0.0
    hi_bad = arr > 1.0
    if lo_bad.any():
        i = int(np.argmin(arr))
        raise ValidationError(f"box violation: b[{i}] = {arr[i]:.6g} is below 0 by {-arr[i]:.3g}")
    if hi_bad.any():
        i = int(np.argmax(arr))
        raise ValidationError(f"box violation: b[{i}] = {arr[i]:.6g} exceeds 1 by {arr[i] - 1.0:.3g}")
    total = float(arr.sum())
    if abs(total - L) > PLACEMENT_SUM_TOL:
        kind = "excess" if total > L else "deficit"
        raise ValidationError(
            f"simplex-sum violation: sum(b) = {total:.12g} != L = {L}, {kind} {abs(total - L):.6g}"
        )
    return PlacementVector(arr, int(L))


@dataclass(frozen=True)
class ZipfLibrary:
    """Content library: size K, Zipf exponent gamma, cache capacity L, request probabilities.

    gamma is None for libraries built from an explicit popularity vector.
    """

    K: int
    gamma: float | None
    L: int
    request_probs: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.request_probs, dtype=np.float64).copy()
        arr.flags.writeable = False
        object.__setattr__(self, "request_probs", arr)

    @classmethod
    def zipf(cls, K: int, gamma: float, L: int) -> "ZipfLibrary":
        probs = zipf_request_probs(K, gamma)
        _check_capacity(K, L)
        return cls(K=int(K), gamma=float(gamma), L=int(L), request_probs=probs)

    @classmethod
    def uniform(cls, K: int, L: int) -> "ZipfLibrary":
        """Equal request probabilities; the explicit alternative to a tiny gamma."""
        if not isinstance(K, (int, np.integer)) or K < 1:
            raise ValidationError(f"library size K must be a positive integer, got {K!r}")
        _check_capacity(K, L)
        return cls(K=int(K), gamma=None, L=int(L), request_probs=np.full(K, 1.0 / K))

    @classmethod
    def from_probs(cls, probs, L: int) -> "ZipfLibrary":
        """Library with a user-supplied popularity vector (must be sorted most-popular first).

        Ties are allowed; solvers break them by lower index.
        """
        arr = np.asarray(probs, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValidationError("popularity vector must be a non-empty 1-D vector")
        if (arr < 0).any():
            raise ValidationError("popularity vector has negative entries")
        if abs(arr.sum() - 1.0) > 1e-9:
            raise ValidationError(f"popularity vector sums to {arr.sum():.12g}, expected 1")
        if (np.diff(arr) > 1e-12).any():
            raise ValidationError("popularity vector must be non-increasing (most popular first)")
        _check_capacity(arr.size, L)
        return cls(K=int(arr.size), gamma=None, L=int(L), request_probs=arr)


def _check_capacity(K: int, L: int) -> None:
    if not isinstance(L, (int, np.integer)) or L < 1:
        raise ValidationError(f"cache capacity L must be a positive integer, got {L!r}")
    if L > K:
        raise ValidationError(f"cache capacity L={L} exceeds library size K={K}")
