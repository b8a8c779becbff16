"""Numeric primitives behind per-user visibility.

Visibility of an item in a user's stream mixes two laws:

- the number ``L`` of newer posts piled on top of the item, geometric with
  success probability ``1 / (1 + rho)`` where ``rho`` is the user's
  information load, and
- the depth a user browses before stopping, inverse Gaussian with mean
  ``mu`` and shape ``lam`` (the "law of surfing").

The visibility of user ``i`` is ``sum_L G(rho_i, L) * P(depth >= L)``.
"""

from __future__ import annotations

import logging
import math
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import log_ndtr

from src.adoption.errors import VisibilityTruncationError
from src.services.config_schema import SurfingParams

logger = logging.getLogger(__name__)

DEFAULT_L_MAX = 100_000
DEFAULT_TAIL_TOL = 1e-4


def _check_rho(rho: float) -> float:
    rho = float(rho)
    if not math.isfinite(rho) or rho < 0:
        raise ValueError(f"load ratio must be finite and >= 0, got {rho}")
    return rho


def geometric_pmf(rho: float, L: ArrayLike) -> float | NDArray[np.float64]:
    """Probability that ``L`` newer posts arrived, ``(rho/(1+rho))**L / (1+rho)``."""
    rho = _check_rho(rho)
    arr = np.asarray(L)
    if np.any(arr < 0):
        raise ValueError(f"L must be >= 0, got {L}")
    p = 1.0 / (1.0 + rho)
    out = np.power(rho * p, arr) * p
    return float(out) if out.ndim == 0 else out


def geometric_tail(rho: float, L_max: int) -> float:
    """Mass of the geometric law beyond ``L_max``: ``(rho/(1+rho))**(L_max+1)``."""
    rho = _check_rho(rho)
    return float((rho / (1.0 + rho)) ** (L_max + 1))


def ig_density(params: SurfingParams, L: ArrayLike) -> float | NDArray[np.float64]:
    arr = np.asarray(L, dtype=float)
    if np.any(arr <= 0):
        raise ValueError("inverse-Gaussian density is defined for L > 0 only")
    mu, lam = params.mu, params.lam
    out = np.sqrt(lam / (2.0 * np.pi * arr**3)) * np.exp(
        -lam * (arr - mu) ** 2 / (2.0 * mu**2 * arr)
    )
    return float(out) if out.ndim == 0 else out


def ig_upper_cdf(params: SurfingParams, L: ArrayLike) -> float | NDArray[np.float64]:
    """``P(X >= L)`` for ``X ~ IG(mu, lam)``; exactly 1 at ``L = 0``.

    Uses ``1 - F(L) = Phi(-a) - exp(2 lam / mu) Phi(-b)`` with
    ``a = sqrt(lam/L) (L/mu - 1)`` and ``b = sqrt(lam/L) (L/mu + 1)``, both
    terms kept in log space so neither the exponential nor the difference
    overflows or cancels to garbage in the tail.
    """
    arr = np.asarray(L, dtype=float)
    if np.any(arr < 0):
        raise ValueError("L must be >= 0")
    mu, lam = params.mu, params.lam
    out = np.ones_like(arr)
    pos = arr > 0
    x = arr[pos]
    root = np.sqrt(lam / x)
    log_first = log_ndtr(-root * (x / mu - 1.0))
    log_second = 2.0 * lam / mu + log_ndtr(-root * (x / mu + 1.0))
    with np.errstate(invalid="ignore", over="ignore"):
        tail = np.exp(log_first) * -np.expm1(log_second - log_first)
    tail = np.where(np.isfinite(log_first), tail, 0.0)
    out[pos] = np.clip(tail, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=16)
def _upper_cdf_grid(mu: float, lam: float, L_max: int) -> NDArray[np.float64]:
    grid = ig_upper_cdf(SurfingParams(mu=mu, lam=lam), np.arange(L_max + 1))
    grid.setflags(write=False)
    return grid


def visibility(
    rho: float,
    params: SurfingParams,
    L_max: int = DEFAULT_L_MAX,
    tail_tol: float = DEFAULT_TAIL_TOL,
) -> float:
    """Probability that a user with load ``rho`` views a given stream item."""
    rho = _check_rho(rho)
    if L_max < 1:
        raise ValueError(f"L_max must be >= 1, got {L_max}")
    tail = geometric_tail(rho, L_max)
    if tail > tail_tol:
        raise VisibilityTruncationError(rho, L_max, tail, tail_tol)
    if rho == 0.0:
        return 1.0
    upper = _upper_cdf_grid(params.mu, params.lam, L_max)
    p = 1.0 / (1.0 + rho)
    q = rho * p
    # terms past this point underflow to zero
    n_terms = min(L_max + 1, int(745.0 / -math.log(q)) + 2)
    L = np.arange(n_terms)
    weights = np.power(q, L) * p
    return float(np.dot(weights, upper[:n_terms]))


def visibility_vector(
    rhos: Iterable[float],
    params: SurfingParams,
    L_max: int = DEFAULT_L_MAX,
    tail_tol: float = DEFAULT_TAIL_TOL,
    user_ids: Optional[Sequence[str]] = None,
) -> NDArray[np.float64]:
    """``visibility`` for every user, in order.

    With ``user_ids`` a truncation error names the user whose load failed.
    """
    out = []
    for k, rho in enumerate(rhos):
        try:
            out.append(visibility(rho, params, L_max, tail_tol))
        except VisibilityTruncationError as e:
            if user_ids is None:
                raise
            raise VisibilityTruncationError(
                e.rho, e.L_max, e.tail_mass, e.tol, user=user_ids[k]
            ) from None
    values = np.array(out, dtype=float)
    if values.size:
        logger.info(
            "visibility over %d users: min %.4g, median %.4g, max %.4g",
            values.size,
            values.min(),
            float(np.median(values)),
            values.max(),
        )
    return values


__all__ = [
    "geometric_pmf",
    "geometric_tail",
    "ig_density",
    "ig_upper_cdf",
    "visibility",
    "visibility_vector",
]
