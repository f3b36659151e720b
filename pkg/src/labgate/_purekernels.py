"""Pure NumPy fallback for the hot numerical kernels.

The compiled extension (``labgate._kernels``) implements the same four
functions with identical semantics; :mod:`labgate.backend` picks one at
import time.  Keep the two in sync: the test suite compares them point
by point.
"""

from __future__ import annotations

import numpy as np

# Humlicek's rational approximation of the complex probability function
# w(z) = exp(-z^2) erfc(-iz), ported from the classic CPF12 tables
# (J. Quant. Spectrosc. Radiat. Transfer 21, 309).  Region switching is
# retuned so the worst relative error of Re(w) stays below 1e-6:
#   y == 0          -> exp(-x^2) exactly
#   |z| > 8         -> 15-term asymptotic series in 1/z^2
#   y >= 0.7        -> 12-pole rational sum
#   else            -> exp-corrected variant (keeps relative accuracy of
#                      the real part for arbitrarily small y)
_T = np.array([0.314240376, 0.947788391, 1.59768264, 2.27950708, 3.02063703, 3.8897249])
_U = np.array([1.01172805, -0.75197147, 1.2557727e-2, 1.00220082e-2, -2.42068135e-4, 5.00848061e-7])
_S = np.array([1.393237, 0.231152406, -0.155351466, 6.21836624e-3, 9.19082986e-5, -6.27525958e-7])
_TT = np.arange(15, dtype=np.float64) + 0.5
_ISQRTPI = 0.5641895835477563  # 1/sqrt(pi)

GAUSSIAN = 0
LORENTZIAN = 1
VOIGT = 2

_SQRT2 = 1.4142135623730951


def wofz_re(x: np.ndarray, y: float) -> np.ndarray:
    """Real part of the Faddeeva function w(x + iy) for y >= 0."""
    x = np.asarray(x, dtype=np.float64)
    if y == 0.0:
        return np.exp(-x * x)
    out = np.empty_like(x)
    far = x * x + y * y > 64.0
    if far.any():
        z = x[far] + 1j * y
        zm1 = 1.0 / z
        zm2 = zm1 * zm1
        zsum = np.ones_like(z)
        zterm = np.ones_like(z)
        for t in _TT:
            zterm = zterm * zm2 * t
            zsum = zsum + zterm
        out[far] = (zsum * 1j * zm1 * _ISQRTPI).real
    near = ~far
    if near.any():
        xn = x[near]
        y1 = y + 1.5
        y2 = y1 * y1
        wr = np.zeros_like(xn)
        if y >= 0.7:
            for i in range(6):
                r = xn - _T[i]
                d = 1.0 / (r * r + y2)
                d1 = y1 * d
                d2 = r * d
                r = xn + _T[i]
                d = 1.0 / (r * r + y2)
                d3 = y1 * d
                d4 = r * d
                wr += _U[i] * (d1 + d3) - _S[i] * (d2 - d4)
        else:
            wr = np.exp(-xn * xn)
            y3 = y + 3.0
            for i in range(6):
                r = xn - _T[i]
                r2 = r * r
                d = 1.0 / (r2 + y2)
                d1 = y1 * d
                d2 = r * d
                wr += y * (_U[i] * (r * d2 - 1.5 * d1) + _S[i] * y3 * d2) / (r2 + 2.25)
                r = xn + _T[i]
                r2 = r * r
                d = 1.0 / (r2 + y2)
                d3 = y1 * d
                d4 = r * d
                wr += y * (_U[i] * (r * d4 - 1.5 * d3) - _S[i] * y3 * d4) / (r2 + 2.25)
        out[near] = wr
    return out


def profile_eval(kind: int, amplitude: float, center: float, sigma_g: float,
                 gamma_l: float, offset: float, energies: np.ndarray) -> np.ndarray:
    """Peak-normalized line profile: value at the center is offset + amplitude.

    Widths enter through even powers (or their absolute value), so the
    function is well defined for the negative trial widths a finite
    difference step may produce.
    """
    e = np.asarray(energies, dtype=np.float64)
    sigma_g = abs(sigma_g)
    gamma_l = abs(gamma_l)
    de = e - center
    if kind == GAUSSIAN or (kind == VOIGT and gamma_l == 0.0 and sigma_g > 0.0):
        if sigma_g == 0.0:
            return offset + amplitude * (de == 0.0)
        return offset + amplitude * np.exp(-(de * de) / (2.0 * sigma_g * sigma_g))
    if kind == LORENTZIAN or (kind == VOIGT and sigma_g == 0.0):
        if gamma_l == 0.0:
            return offset + amplitude * (de == 0.0)
        return offset + amplitude * gamma_l * gamma_l / (de * de + gamma_l * gamma_l)
    if kind != VOIGT:
        raise ValueError(f"unknown profile kind code {kind}")
    s = sigma_g * _SQRT2
    y = gamma_l / s
    peak = wofz_re(np.zeros(1), y)[0]
    return offset + amplitude * wofz_re(de / s, y) / peak


def despike(counts: np.ndarray, window: int, k_mad: float) -> np.ndarray:
    """Single left-to-right pass of median/MAD spike replacement.

    Replacements take effect immediately (the local window sees already
    repaired values to its left).  Edge points are never modified.
    """
    out = np.array(counts, dtype=np.float64, copy=True)
    n = out.shape[0]
    half = window // 2
    if n < window:
        return out
    for i in range(half, n - half):
        local = np.sort(out[i - half:i + half + 1])
        med = local[half]
        dev = np.sort(np.abs(out[i - half:i + half + 1] - med))
        mad = dev[half]
        if abs(out[i] - med) > k_mad * 1.4826 * mad:
            out[i] = med
    return out


def sum_sq_diff(a: np.ndarray, b: np.ndarray) -> float:
    """Sum of squared differences accumulated in ascending index order."""
    total = 0.0
    for x, y in zip(a.tolist(), b.tolist()):
        d = x - y
        total += d * d
    return total
