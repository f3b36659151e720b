"""Synthetic campaign generator with known ground truth.

The only randomness in the whole package lives here, and it is a
counter-based SplitMix64 stream: sample k of the campaign is a pure
function of (seed, k), so the CSV bytes are identical for identical
specs no matter how the generator is driven.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from labgate.spectral import HC_EV_NM, ProfileParams, eval_profile

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def splitmix64(seed: int, counter: int) -> int:
    """Output k of the SplitMix64 stream for the given seed."""
    z = (seed + (counter + 1) * _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def uniform01(seed: int, counter: int) -> float:
    """Uniform double in [0, 1) with 53 random bits."""
    return (splitmix64(seed, counter) >> 11) * (1.0 / (1 << 53))


def gaussian_noise(seed: int, counter: int) -> float:
    """Standard normal via Box-Muller on stream slots 2k and 2k+1."""
    u1 = uniform01(seed, 2 * counter)
    u2 = uniform01(seed, 2 * counter + 1)
    r = math.sqrt(-2.0 * math.log(1.0 - u1))
    return r * math.cos(2.0 * math.pi * u2)


@dataclass(frozen=True)
class SyntheticSpec:
    """Shape of a generated campaign (mirrors the deployed one: 21
    levels log-spaced over 0.1..1000 uW, saturation boundary near 10)."""

    n_levels: int = 21
    power_min_uW: float = 0.1
    power_max_uW: float = 1000.0
    b_below: float = 1.0
    b_above: float = 1.0
    boundary_uW: float = 10.0
    a: float = 1000.0
    peak_center_eV: float = 1.9
    fwhm_eV: float = 0.05
    profile_kind: str = "voigt"
    noise_rel: float = 0.0
    rng_seed: int = 0
    # axis layout (artifact knobs, not physics)
    n_samples: int = 401
    axis_halfwidth_fwhm: float = 6.0
    baseline_offset: float = 5.0
    baseline_slope: float = 2.0

    def __post_init__(self):
        if self.noise_rel < 0:
            raise ValueError("noise_rel must be >= 0")
        if self.n_levels < 1 or self.power_min_uW <= 0 or self.power_max_uW <= self.power_min_uW:
            raise ValueError("bad power range")
        if self.n_samples < 8:
            raise ValueError("need at least 8 samples")

    def powers(self) -> list[float]:
        if self.n_levels == 1:
            return [self.power_min_uW]
        lo = math.log10(self.power_min_uW)
        hi = math.log10(self.power_max_uW)
        return [10.0 ** (lo + (hi - lo) * k / (self.n_levels - 1))
                for k in range(self.n_levels)]

    def true_intensity(self, power: float) -> float:
        b = self.b_below if power <= self.boundary_uW else self.b_above
        return self.a * power ** b

    def width_params(self) -> tuple[float, float]:
        """(sigma_g, gamma_l) giving the requested FWHM for the kind."""
        if self.profile_kind == "gaussian":
            return self.fwhm_eV / 2.3548200450309493, 0.0
        if self.profile_kind == "lorentzian":
            return 0.0, self.fwhm_eV / 2.0
        # equal widths at fwhm/3.6 give a Voigt FWHM within 0.1% of fwhm
        return self.fwhm_eV / 3.6, self.fwhm_eV / 3.6


def _fmt(x: float) -> str:
    return repr(float(x))


def generate_campaign(spec: SyntheticSpec) -> tuple[bytes, bytes]:
    """(csv_bytes, truth_bytes) for the campaign described by spec.

    Each level's spectrum is the chosen profile with peak height
    a * P^b over a small linear baseline; noise is multiplicative:
    counts = truth * (1 + noise_rel * g) with g from the SplitMix
    stream (counter = level * n_samples + sample).
    """
    half = spec.axis_halfwidth_fwhm * spec.fwhm_eV
    energy = np.linspace(spec.peak_center_eV - half, spec.peak_center_eV + half,
                         spec.n_samples)
    sigma_g, gamma_l = spec.width_params()
    shape = eval_profile(spec.profile_kind,
                         ProfileParams(1.0, spec.peak_center_eV, sigma_g, gamma_l, 0.0),
                         energy)
    baseline = spec.baseline_offset + spec.baseline_slope * (energy - spec.peak_center_eV)

    powers = spec.powers()
    columns = []
    for li, p in enumerate(powers):
        truth = baseline + spec.true_intensity(p) * shape
        if spec.noise_rel > 0:
            g = np.array([gaussian_noise(spec.rng_seed, li * spec.n_samples + k)
                          for k in range(spec.n_samples)])
            truth = truth * (1.0 + spec.noise_rel * g)
        columns.append(truth)

    # rows are written in ascending wavelength (instrument export order),
    # which is descending energy
    lam = HC_EV_NM / energy
    order = np.argsort(lam)
    header = "wavelength_nm," + ",".join(f"P={_fmt(p)}uW" for p in powers)
    lines = [header]
    for i in order:
        cells = [_fmt(lam[i])] + [_fmt(col[i]) for col in columns]
        lines.append(",".join(cells))
    csv_bytes = ("\n".join(lines) + "\n").encode("utf-8")

    truth_lines = [
        f"n_levels = {spec.n_levels}",
        f"b_below = {_fmt(spec.b_below)}",
        f"b_above = {_fmt(spec.b_above)}",
        f"boundary_uW = {_fmt(spec.boundary_uW)}",
        f"a = {_fmt(spec.a)}",
        f"peak_center_eV = {_fmt(spec.peak_center_eV)}",
        f"fwhm_eV = {_fmt(spec.fwhm_eV)}",
        f"profile_kind = {spec.profile_kind}",
        f"noise_rel = {_fmt(spec.noise_rel)}",
        f"rng_seed = {spec.rng_seed}",
    ]
    for p in powers:
        truth_lines.append(f"intensity[{_fmt(p)}] = {_fmt(spec.true_intensity(p))}")
    truth_bytes = ("\n".join(truth_lines) + "\n").encode("utf-8")
    return csv_bytes, truth_bytes
