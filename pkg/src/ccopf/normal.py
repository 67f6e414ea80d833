"""Standard normal CDF and quantile function.

``norm_cdf`` is built on the complementary error function so both tails keep
full relative precision.  ``norm_ppf`` starts from Acklam's rational
approximation (relative error ~1e-9) and polishes the result with Halley
steps against ``norm_cdf``/``norm_sf``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erfc

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)

# Acklam's coefficients
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x) / _SQRT2PI


def norm_cdf(x):
    """Phi(x) = P(Z <= x)."""
    x = np.asarray(x, dtype=float)
    return 0.5 * erfc(-x / _SQRT2)


def norm_sf(x):
    """Survival function 1 - Phi(x), accurate in the upper tail."""
    x = np.asarray(x, dtype=float)
    return 0.5 * erfc(x / _SQRT2)


def _acklam_lower(q):
    # valid for q <= 0.5; returns a negative quantile
    q = np.asarray(q, dtype=float)
    out = np.empty_like(q)
    tail = q < _P_LOW
    if np.any(tail):
        r = np.sqrt(-2.0 * np.log(q[tail]))
        num = ((((_C[0] * r + _C[1]) * r + _C[2]) * r + _C[3]) * r + _C[4]) * r + _C[5]
        den = (((_D[0] * r + _D[1]) * r + _D[2]) * r + _D[3]) * r + 1.0
        out[tail] = num / den
    mid = ~tail
    if np.any(mid):
        s = q[mid] - 0.5
        r = s * s
        num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * s
        den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        out[mid] = num / den
    return out


def _lower_quantile(q, steps=2):
    """Solve Phi(x) = q for q in (0, 0.5]."""
    x = _acklam_lower(q)
    for _ in range(steps):
        # Halley step on f(x) = Phi(x) - q
        err = norm_cdf(x) - q
        u = err / norm_pdf(x)
        x = x - u / (1.0 + 0.5 * x * u)
    return x


def norm_ppf(p):
    """Quantile function Phi^{-1}(p) for p in (0, 1).

    Endpoints map to -inf/+inf; values outside [0, 1] raise ``ValueError``.
    The upper half is evaluated as ``-Phi^{-1}(1 - p)`` so that the lower-tail
    routine always works on the small probability.
    """
    p_arr = np.asarray(p, dtype=float)
    if np.any((p_arr < 0.0) | (p_arr > 1.0)) or np.any(np.isnan(p_arr)):
        raise ValueError("probability outside [0, 1]")
    flat = np.atleast_1d(p_arr).ravel()
    out = np.empty_like(flat)
    out[flat == 0.0] = -np.inf
    out[flat == 1.0] = np.inf
    inner = (flat > 0.0) & (flat < 1.0)
    low = inner & (flat <= 0.5)
    high = inner & (flat > 0.5)
    if np.any(low):
        out[low] = _lower_quantile(flat[low])
    if np.any(high):
        out[high] = -_lower_quantile(1.0 - flat[high])
    out = out.reshape(np.shape(p_arr))
    return float(out) if np.ndim(p_arr) == 0 else out


def norm_isf(q):
    """Upper-tail quantile: x with 1 - Phi(x) = q, precise for tiny q."""
    q_arr = np.asarray(q, dtype=float)
    if np.any((q_arr <= 0.0) | (q_arr >= 1.0)):
        raise ValueError("tail probability outside (0, 1)")
    flat = np.atleast_1d(q_arr).ravel()
    out = np.empty_like(flat)
    small = flat <= 0.5
    if np.any(small):
        out[small] = -_lower_quantile(flat[small])
    if np.any(~small):
        out[~small] = _lower_quantile(1.0 - flat[~small])
    out = out.reshape(np.shape(q_arr))
    return float(out) if np.ndim(q_arr) == 0 else out
