"""Deterministic spectral primitives.

Axis conversion, despiking, baseline subtraction, line profiles
(Gaussian / Lorentzian / Voigt via the Faddeeva function) and a damped
least-squares fitter.  Every operation is a pure function: identical
inputs give bitwise-identical outputs within one build.  No randomness
anywhere in this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from labgate import backend
from labgate.errors import ToolError

# CODATA-consistent hc in eV*nm
HC_EV_NM = 1239.841984

PROFILE_KINDS = ("gaussian", "lorentzian", "voigt")
_KIND_CODE = {"gaussian": backend.GAUSSIAN,
              "lorentzian": backend.LORENTZIAN,
              "voigt": backend.VOIGT}


@dataclass(frozen=True)
class Spectrum:
    """One emission spectrum: strictly ascending energy axis plus counts."""

    energy_eV: np.ndarray
    counts: np.ndarray
    provenance: str | None = None

    def __post_init__(self):
        e = np.asarray(self.energy_eV, dtype=np.float64)
        c = np.asarray(self.counts, dtype=np.float64)
        object.__setattr__(self, "energy_eV", e)
        object.__setattr__(self, "counts", c)
        if e.ndim != 1 or c.ndim != 1 or e.shape != c.shape:
            raise ValueError("energy and counts must be 1-D and equally long")
        if e.shape[0] < 8:
            raise ValueError("spectrum needs at least 8 samples")
        if not np.all(np.diff(e) > 0):
            raise ValueError("energies must be strictly ascending")
        if not np.all(np.isfinite(c)):
            raise ValueError("counts must be finite")

    def slice_window(self, window: tuple[float, float]) -> slice:
        lo, hi = window
        i = int(np.searchsorted(self.energy_eV, lo, side="left"))
        j = int(np.searchsorted(self.energy_eV, hi, side="right"))
        return slice(i, j)


@dataclass(frozen=True)
class ProfileParams:
    """Peak-normalized line-shape parameters (amplitude = height above offset)."""

    amplitude: float
    center: float
    sigma_g: float
    gamma_l: float
    offset: float

    def validate(self):
        if self.sigma_g < 0 or self.gamma_l < 0:
            raise ValueError("widths must be non-negative")
        if self.sigma_g + self.gamma_l <= 0:
            raise ValueError("at least one width must be positive")


@dataclass(frozen=True)
class FitConfig:
    """Numeric knobs of the fitting workflow (all deterministic)."""

    profile_kind: str = "voigt"
    r2_threshold: float = 0.85
    max_iterations: int = 200
    cost_rel_tol: float = 1e-12
    step_tol: float = 1e-12
    despike_window: int = 5
    despike_k: float = 5.0
    baseline_edge_points: int = 10

    def __post_init__(self):
        if self.profile_kind not in PROFILE_KINDS:
            raise ValueError(f"unknown profile kind {self.profile_kind!r}")
        if self.r2_threshold <= 0 or self.cost_rel_tol <= 0 or self.step_tol <= 0:
            raise ValueError("thresholds must be positive")
        if self.despike_window < 3 or self.despike_window % 2 == 0:
            raise ValueError("despike window must be odd and >= 3")
        if self.despike_k <= 0:
            raise ValueError("despike k must be positive")
        if self.max_iterations < 1 or self.baseline_edge_points < 1:
            raise ValueError("iteration and edge-point counts must be >= 1")


@dataclass(frozen=True)
class ProfileFitResult:
    params: ProfileParams
    r_squared: float
    window: tuple[float, float]
    iterations: int
    converged: bool
    accepted: bool
    profile_kind: str


def convert_axis(wavelength_nm: np.ndarray) -> np.ndarray:
    """Photon energy in eV for each wavelength: E = hc / lambda.

    Input must be strictly ascending and positive; the result is
    descending (the caller reverses data rows in lockstep).
    """
    lam = np.asarray(wavelength_nm, dtype=np.float64)
    if np.any(lam <= 0):
        raise ToolError("NONPOSITIVE_WAVELENGTH", "wavelengths must be > 0")
    if not np.all(np.diff(lam) > 0):
        raise ValueError("wavelengths must be strictly ascending")
    return HC_EV_NM / lam


def despike(counts: np.ndarray, window: int = 5, k_mad: float = 5.0) -> np.ndarray:
    """Median/MAD cosmic-ray removal; see the kernel for the exact pass."""
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be odd and >= 3")
    if k_mad <= 0:
        raise ValueError("k_mad must be positive")
    return backend.despike(np.asarray(counts, dtype=np.float64), window, k_mad)


def subtract_baseline(spectrum: Spectrum, window: tuple[float, float],
                      edge_points: int = 10) -> Spectrum:
    """Subtract a straight line anchored on the window's edge strips.

    The line passes through (mean energy, median counts) of the first
    and of the last ``edge_points`` samples inside the window; counts
    outside the window are untouched.
    """
    sl = spectrum.slice_window(window)
    n = sl.stop - sl.start
    if n < 2 * edge_points:
        raise ToolError("WINDOW_TOO_NARROW",
                        f"window holds {n} samples, needs >= {2 * edge_points}")
    e = spectrum.energy_eV[sl]
    c = spectrum.counts[sl]
    x1 = float(np.mean(e[:edge_points]))
    m1 = float(np.median(c[:edge_points]))
    x2 = float(np.mean(e[-edge_points:]))
    m2 = float(np.median(c[-edge_points:]))
    slope = 0.0 if x2 == x1 else (m2 - m1) / (x2 - x1)
    line = m1 + slope * (e - x1)
    out = spectrum.counts.copy()
    out[sl] = c - line
    return replace(spectrum, counts=out)


def eval_profile(kind: str, params: ProfileParams, energies) -> np.ndarray:
    """Profile value at each energy; the value at the center is
    offset + amplitude for every kind (peak normalization).

    Voigt uses Re w(z) / Re w(z0) with z = ((e-c) + i*gamma) / (sigma*sqrt(2)),
    w the Faddeeva function evaluated by a region-switched rational
    approximation (relative error of the real part <= 1e-6).
    """
    params.validate()
    scalar = np.isscalar(energies)
    e = np.atleast_1d(np.asarray(energies, dtype=np.float64))
    out = backend.profile_eval(_KIND_CODE[kind], params.amplitude, params.center,
                               params.sigma_g, params.gamma_l, params.offset, e)
    return float(out[0]) if scalar else out


def r_squared(observed: np.ndarray, modeled: np.ndarray) -> float:
    """Coefficient of determination; 0.0 when the observed data is flat
    (degenerate: no variance to explain)."""
    obs = np.asarray(observed, dtype=np.float64)
    mod = np.asarray(modeled, dtype=np.float64)
    if obs.shape != mod.shape or obs.ndim != 1:
        raise ToolError("LENGTH_MISMATCH", "observed and modeled lengths differ")
    if obs.shape[0] < 2:
        raise ToolError("LENGTH_MISMATCH", "need at least 2 samples")
    ss_res = backend.sum_sq_diff(obs, mod)
    mean = np.full_like(obs, float(np.mean(obs)))
    ss_tot = backend.sum_sq_diff(obs, mean)
    if ss_tot == 0.0:
        return 0.0
    return 1.0 - ss_res / ss_tot


def initial_guess(spectrum: Spectrum, window: tuple[float, float]) -> ProfileParams:
    """Deterministic starting point for the fitter.

    Center at the window's (leftmost) maximum, amplitude = max - min,
    offset = min, and both widths set to the half-max crossing width
    divided by 3.6 (for sigma_g = gamma_l this makes the Voigt FWHM
    approximately equal that width).  A flat window yields amplitude 0,
    the degenerate-guess marker.
    """
    sl = spectrum.slice_window(window)
    e = spectrum.energy_eV[sl]
    c = spectrum.counts[sl]
    if e.shape[0] == 0:
        raise ToolError("EMPTY_WINDOW", "window contains no samples")
    imax = int(np.argmax(c))  # argmax takes the smallest index on ties
    cmax = float(c[imax])
    cmin = float(np.min(c))
    center = float(e[imax])
    amplitude = cmax - cmin
    if amplitude == 0.0:
        return ProfileParams(0.0, center, 1.0, 0.0, cmin)
    half = cmin + 0.5 * amplitude
    e_l = float(e[0])
    for i in range(imax, 0, -1):
        if c[i - 1] < half:
            f = (half - c[i - 1]) / (c[i] - c[i - 1])
            e_l = float(e[i - 1]) + f * float(e[i] - e[i - 1])
            break
    e_r = float(e[-1])
    for i in range(imax, e.shape[0] - 1):
        if c[i + 1] < half:
            f = (half - c[i + 1]) / (c[i] - c[i + 1])
            e_r = float(e[i + 1]) - f * float(e[i + 1] - e[i])
            break
    width = max(e_r - e_l, float(np.min(np.diff(e))))
    return ProfileParams(amplitude, center, width / 3.6, width / 3.6, cmin)


# --- damped least-squares fitting -------------------------------------------

_ACTIVE = {
    "gaussian": ("amplitude", "center", "sigma_g", "offset"),
    "lorentzian": ("amplitude", "center", "gamma_l", "offset"),
    "voigt": ("amplitude", "center", "sigma_g", "gamma_l", "offset"),
}


def _pack(params: ProfileParams, kind: str) -> np.ndarray:
    return np.array([getattr(params, f) for f in _ACTIVE[kind]], dtype=np.float64)


def _unpack(vec: np.ndarray, kind: str) -> ProfileParams:
    d = {"amplitude": 0.0, "center": 0.0, "sigma_g": 0.0, "gamma_l": 0.0, "offset": 0.0}
    for f, v in zip(_ACTIVE[kind], vec):
        d[f] = float(v)
    d["sigma_g"] = abs(d["sigma_g"])
    d["gamma_l"] = abs(d["gamma_l"])
    return ProfileParams(**d)


def _model(kind_code: int, vec: np.ndarray, kind: str, e: np.ndarray) -> np.ndarray:
    d = dict(zip(_ACTIVE[kind], vec.tolist()))
    return backend.profile_eval(kind_code, d.get("amplitude", 0.0), d.get("center", 0.0),
                                d.get("sigma_g", 0.0), d.get("gamma_l", 0.0),
                                d.get("offset", 0.0), e)


def fit_profile(spectrum: Spectrum, window: tuple[float, float], config: FitConfig,
                init: ProfileParams, trace: list | None = None) -> ProfileFitResult:
    """Levenberg-Marquardt fit of one profile inside the window.

    Damping schedule: lambda starts at 1e-3, x10 on a rejected step,
    /10 on an accepted one.  The Jacobian uses central finite
    differences with per-parameter step 1e-6 * max(1, |p|).  The cost is
    the sum of squared residuals accumulated in ascending sample order.
    Singular normal equations or hitting the iteration cap come back as
    converged = False; nothing is raised mid-run.

    When ``trace`` is a list it receives one (iteration, cost, lam,
    accepted) tuple per trial step.
    """
    kind = config.profile_kind
    kind_code = _KIND_CODE[kind]
    sl = spectrum.slice_window(window)
    e = spectrum.energy_eV[sl]
    y = spectrum.counts[sl]
    nact = len(_ACTIVE[kind])
    if e.shape[0] < nact:
        return ProfileFitResult(init, 0.0, window, 0, False, False, kind)

    p = _pack(init, kind)
    if p[0] == 0.0:  # degenerate guess: keep the fitter away from a flat landscape
        model = _model(kind_code, p, kind, e)
        r2 = r_squared(y, model)
        return ProfileFitResult(_unpack(p, kind), r2, window, 0, False, False, kind)

    lam = 1e-3
    cost = backend.sum_sq_diff(y, _model(kind_code, p, kind, e))
    converged = False
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        # central-difference Jacobian
        J = np.empty((e.shape[0], nact), dtype=np.float64)
        for j in range(nact):
            h = 1e-6 * max(1.0, abs(p[j]))
            pp = p.copy()
            pp[j] = p[j] + h
            f_hi = _model(kind_code, pp, kind, e)
            pp[j] = p[j] - h
            f_lo = _model(kind_code, pp, kind, e)
            J[:, j] = (f_hi - f_lo) / (2.0 * h)
        r = y - _model(kind_code, p, kind, e)
        jtj = J.T @ J
        jtr = J.T @ r
        diag = np.diag(jtj).copy()
        diag[diag <= 0.0] = 1.0

        accepted = False
        while True:
            try:
                delta = np.linalg.solve(jtj + lam * np.diag(diag), jtr)
            except np.linalg.LinAlgError:
                delta = None
            if delta is not None and np.all(np.isfinite(delta)):
                p_try = p + delta
                cost_try = backend.sum_sq_diff(y, _model(kind_code, p_try, kind, e))
                if np.isfinite(cost_try) and cost_try <= cost:
                    if trace is not None:
                        trace.append((iterations, cost_try, lam, True))
                    rel_drop = (cost - cost_try) / cost if cost > 0 else 0.0
                    rel_step = max(abs(d) / max(1.0, abs(pj))
                                   for d, pj in zip(delta.tolist(), p.tolist()))
                    p = p_try
                    cost = cost_try
                    lam = lam / 10.0
                    accepted = True
                    if rel_drop <= config.cost_rel_tol or rel_step <= config.step_tol:
                        converged = True
                    break
                if trace is not None:
                    trace.append((iterations, cost_try, lam, False))
            lam = lam * 10.0
            if lam > 1e12:  # singular or hopeless: give up without raising
                break
        if not accepted or converged:
            break

    params = _unpack(p, kind)
    model = _model(kind_code, p, kind, e)
    r2 = r_squared(y, model)
    accepted_fit = converged and r2 >= config.r2_threshold
    return ProfileFitResult(params, r2, window, iterations, converged, accepted_fit, kind)
