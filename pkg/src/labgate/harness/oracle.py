"""Brute-force fitting oracle.

A coarse exhaustive grid over (center x width x amplitude) followed by
golden-section line minimization of the shape parameters, one direction
at a time.  Amplitude and offset enter the model linearly, so the
polish solves them exactly from the 2x2 normal equations at every trial
shape (no iteration, no damping).  The oracle shares the profile
definition with the production fitter but none of its optimization
machinery (no Jacobians, no Levenberg-Marquardt), so the two routes
fail independently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from labgate.spectral import ProfileParams, Spectrum, eval_profile

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0

CENTER_STEPS = 50
WIDTH_STEPS = 30
AMPLITUDE_STEPS = 20
POLISH_CYCLES = 60


@dataclass(frozen=True)
class OracleFit:
    params: ProfileParams
    cost: float
    degenerate: bool


def _golden(fun, lo: float, hi: float, iters: int = 40) -> float:
    """Golden-section minimum of a unimodal 1-D function on [lo, hi]."""
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


def _widths_for(kind: str, w: float) -> tuple[float, float]:
    if kind == "gaussian":
        return w / 2.3548200450309493, 0.0
    if kind == "lorentzian":
        return 0.0, w / 2.0
    return w / 3.6, w / 3.6


def _shape_cost(kind: str, center: float, sigma_g: float, gamma_l: float,
                e: np.ndarray, y: np.ndarray):
    """(cost, amplitude, offset) with the linear pair solved exactly."""
    sigma_g = abs(sigma_g)
    gamma_l = abs(gamma_l)
    if sigma_g + gamma_l == 0.0:
        return math.inf, 0.0, 0.0
    shape = eval_profile(kind, ProfileParams(1.0, center, sigma_g, gamma_l, 0.0), e)
    n = float(e.shape[0])
    s1 = float(shape.sum())
    s2 = float(np.dot(shape, shape))
    sy = float(y.sum())
    sxy = float(np.dot(shape, y))
    det = n * s2 - s1 * s1
    if det <= 0.0:
        return math.inf, 0.0, 0.0
    amp = (n * sxy - s1 * sy) / det
    off = (sy * s2 - s1 * sxy) / det
    r = y - (off + amp * shape)
    return float(np.dot(r, r)), amp, off


def oracle_fit(spectrum: Spectrum, window: tuple[float, float], kind: str) -> OracleFit:
    """Grid search plus bisection-style polish of the shape parameters.

    The Voigt width pair is also polished along its two diagonals
    (sigma+gamma, sigma-gamma); the coordinate axes alone are nearly
    degenerate there and stall.
    """
    sl = spectrum.slice_window(window)
    e = spectrum.energy_eV[sl]
    y = spectrum.counts[sl]
    ymax = float(np.max(y))
    ymin = float(np.min(y))
    if ymax == ymin:
        return OracleFit(ProfileParams(0.0, float(e[0]), 1.0, 0.0, ymin), 0.0, True)

    span = float(e[-1] - e[0])
    amp0 = ymax - ymin
    width_lo = span / 200.0
    width_hi = span

    best = None
    for ic in range(CENTER_STEPS):
        center = float(e[0]) + span * ic / (CENTER_STEPS - 1)
        for iw in range(WIDTH_STEPS):
            w = width_lo * (width_hi / width_lo) ** (iw / (WIDTH_STEPS - 1))
            sg, gl = _widths_for(kind, w)
            shape = eval_profile(kind, ProfileParams(1.0, center, sg, gl, 0.0), e)
            for ia in range(AMPLITUDE_STEPS):
                amp = amp0 * (0.25 + 1.5 * ia / (AMPLITUDE_STEPS - 1))
                r = y - (ymin + amp * shape)
                c = float(np.dot(r, r))
                if best is None or c < best[0]:
                    best = (c, center, sg, gl)
    _, center, sigma_g, gamma_l = best

    vec = {"center": center, "sigma_g": sigma_g, "gamma_l": gamma_l}
    if kind == "gaussian":
        directions = [(("center",), (1.0,)), (("sigma_g",), (1.0,))]
    elif kind == "lorentzian":
        directions = [(("center",), (1.0,)), (("gamma_l",), (1.0,))]
    else:
        directions = [(("center",), (1.0,)), (("sigma_g",), (1.0,)),
                      (("gamma_l",), (1.0,)),
                      (("sigma_g", "gamma_l"), (1.0, 1.0)),
                      (("sigma_g", "gamma_l"), (1.0, -1.0))]

    def cost_along(names, dirs):
        def f(t):
            trial = dict(vec)
            for nm, d in zip(names, dirs):
                trial[nm] = vec[nm] + t * d
            return _shape_cost(kind, trial["center"], trial["sigma_g"],
                               trial["gamma_l"], e, y)[0]
        return f

    # per-direction bracket sizes: halve on small moves, re-expand on
    # large ones so the walk can follow a long curved valley
    scales = [0.05 * span if names == ("center",)
              else max(abs(sigma_g), abs(gamma_l), 0.02 * span)
              for names, _ in directions]
    for _ in range(POLISH_CYCLES):
        moved = 0.0
        for k, (names, dirs) in enumerate(directions):
            t = _golden(cost_along(names, dirs), -scales[k], scales[k])
            for nm, d in zip(names, dirs):
                vec[nm] = vec[nm] + t * d
            scales[k] = max(min(4.0 * abs(t), 0.25 * span), 0.5 * scales[k],
                            1e-14 * span)
            moved = max(moved, abs(t))
        if moved < 1e-13 * span:
            break

    cost, amp, off = _shape_cost(kind, vec["center"], vec["sigma_g"],
                                 vec["gamma_l"], e, y)
    return OracleFit(ProfileParams(amp, vec["center"], abs(vec["sigma_g"]),
                                   abs(vec["gamma_l"]), off), cost, False)
