# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of labgate._purekernels.

Same four functions, same semantics, same region switching; the pure
NumPy module is the reference implementation and the parity tests hold
the two together.  Compiled without FP contraction so results stay
reproducible across rebuilds on the same toolchain.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, exp, fabs, sqrt

cnp.import_array()

cdef double[6] T_NODE
cdef double[6] U_COEF
cdef double[6] S_COEF
T_NODE[0] = 0.314240376; T_NODE[1] = 0.947788391; T_NODE[2] = 1.59768264
T_NODE[3] = 2.27950708;  T_NODE[4] = 3.02063703;  T_NODE[5] = 3.8897249
U_COEF[0] = 1.01172805;  U_COEF[1] = -0.75197147; U_COEF[2] = 1.2557727e-2
U_COEF[3] = 1.00220082e-2; U_COEF[4] = -2.42068135e-4; U_COEF[5] = 5.00848061e-7
S_COEF[0] = 1.393237;    S_COEF[1] = 0.231152406; S_COEF[2] = -0.155351466
S_COEF[3] = 6.21836624e-3; S_COEF[4] = 9.19082986e-5; S_COEF[5] = -6.27525958e-7

cdef double ISQRTPI = 0.5641895835477563
cdef double SQRT2 = 1.4142135623730951

GAUSSIAN = 0
LORENTZIAN = 1
VOIGT = 2


cdef double _wofz_re_scalar(double x, double y) nogil:
    cdef double ar, ai, br, bi, sr, si, tr, ti, t
    cdef double y1, y2, y3, wr, r, r2, d, d1, d2, d3, d4
    cdef int i
    if y == 0.0:
        return exp(-x * x)
    if x * x + y * y > 64.0:
        # asymptotic series in 1/z^2, 15 terms; complex ops spelled out
        d = x * x + y * y
        ar = x / d          # zm1 = 1/z
        ai = -y / d
        br = ar * ar - ai * ai   # zm2 = zm1^2
        bi = 2.0 * ar * ai
        sr = 1.0; si = 0.0       # zsum
        tr = 1.0; ti = 0.0       # zterm
        for i in range(15):
            t = i + 0.5
            d = (tr * br - ti * bi) * t
            ti = (tr * bi + ti * br) * t
            tr = d
            sr = sr + tr
            si = si + ti
        # Re( zsum * i * zm1 ) * 1/sqrt(pi)
        return (-sr * ai - si * ar) * ISQRTPI
    y1 = y + 1.5
    y2 = y1 * y1
    if y >= 0.7:
        wr = 0.0
        for i in range(6):
            r = x - T_NODE[i]
            d = 1.0 / (r * r + y2)
            d1 = y1 * d
            d2 = r * d
            r = x + T_NODE[i]
            d = 1.0 / (r * r + y2)
            d3 = y1 * d
            d4 = r * d
            wr += U_COEF[i] * (d1 + d3) - S_COEF[i] * (d2 - d4)
        return wr
    wr = exp(-x * x)
    y3 = y + 3.0
    for i in range(6):
        r = x - T_NODE[i]
        r2 = r * r
        d = 1.0 / (r2 + y2)
        d1 = y1 * d
        d2 = r * d
        wr += y * (U_COEF[i] * (r * d2 - 1.5 * d1) + S_COEF[i] * y3 * d2) / (r2 + 2.25)
        r = x + T_NODE[i]
        r2 = r * r
        d = 1.0 / (r2 + y2)
        d3 = y1 * d
        d4 = r * d
        wr += y * (U_COEF[i] * (r * d4 - 1.5 * d3) - S_COEF[i] * y3 * d4) / (r2 + 2.25)
    return wr


def wofz_re(x, double y):
    """Real part of the Faddeeva function w(x + iy) for y >= 0."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xa = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(xa.shape[0], dtype=np.float64)
    cdef Py_ssize_t i, n = xa.shape[0]
    for i in range(n):
        out[i] = _wofz_re_scalar(xa[i], y)
    return out


def profile_eval(int kind, double amplitude, double center, double sigma_g,
                 double gamma_l, double offset, energies):
    """Peak-normalized profile; see the pure twin for the contract."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] e = np.ascontiguousarray(energies, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(e.shape[0], dtype=np.float64)
    cdef Py_ssize_t i, n = e.shape[0]
    cdef double de, s, y, peak, g2
    sigma_g = fabs(sigma_g)
    gamma_l = fabs(gamma_l)
    if kind == 0 or (kind == 2 and gamma_l == 0.0 and sigma_g > 0.0):
        if sigma_g == 0.0:
            for i in range(n):
                out[i] = offset + (amplitude if e[i] == center else 0.0)
            return out
        s = 2.0 * sigma_g * sigma_g
        for i in range(n):
            de = e[i] - center
            out[i] = offset + amplitude * exp(-(de * de) / s)
        return out
    if kind == 1 or (kind == 2 and sigma_g == 0.0):
        if gamma_l == 0.0:
            for i in range(n):
                out[i] = offset + (amplitude if e[i] == center else 0.0)
            return out
        g2 = gamma_l * gamma_l
        for i in range(n):
            de = e[i] - center
            out[i] = offset + amplitude * g2 / (de * de + g2)
        return out
    if kind != 2:
        raise ValueError(f"unknown profile kind code {kind}")
    s = sigma_g * SQRT2
    y = gamma_l / s
    peak = _wofz_re_scalar(0.0, y)
    for i in range(n):
        out[i] = offset + amplitude * _wofz_re_scalar((e[i] - center) / s, y) / peak
    return out


def despike(counts, int window, double k_mad):
    """Single left-to-right median/MAD pass, replacements in place."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.array(counts, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] buf = np.empty(window, dtype=np.float64)
    cdef Py_ssize_t n = out.shape[0]
    cdef int half = window // 2
    cdef Py_ssize_t i
    cdef int j, k
    cdef double med, mad, v
    if n < window:
        return out
    for i in range(half, n - half):
        for j in range(window):
            buf[j] = out[i - half + j]
        _insertion_sort(&buf[0], window)
        med = buf[half]
        for j in range(window):
            buf[j] = fabs(out[i - half + j] - med)
        _insertion_sort(&buf[0], window)
        mad = buf[half]
        if fabs(out[i] - med) > k_mad * 1.4826 * mad:
            out[i] = med
    return out


cdef void _insertion_sort(double* a, int n) nogil:
    cdef int i, j
    cdef double key
    for i in range(1, n):
        key = a[i]
        j = i - 1
        while j >= 0 and a[j] > key:
            a[j + 1] = a[j]
            j -= 1
        a[j + 1] = key


def sum_sq_diff(a, b):
    """Sum of squared differences accumulated in ascending index order."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] aa = np.ascontiguousarray(a, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] bb = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t i, n = aa.shape[0]
    cdef double total = 0.0, d
    for i in range(n):
        d = aa[i] - bb[i]
        total += d * d
    return total
