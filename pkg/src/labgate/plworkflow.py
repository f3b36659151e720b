"""Photoluminescence campaign pipeline.

CSV ingestion, adaptive per-power fit windows, per-level Voigt fits with
peak extraction, the split allometric power-law fit and a canonical
report serialization whose SHA-256 hash is the determinism witness.
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, replace

import numpy as np

from labgate.errors import ToolError
from labgate.spectral import (FitConfig, ProfileFitResult, ProfileParams, Spectrum,
                              convert_axis, despike, eval_profile, fit_profile,
                              initial_guess, subtract_baseline)

REPORT_EXTENSION = ".plreport.txt"

# reject reasons a level can carry
NO_PEAK = "NO_PEAK"
DEGENERATE_GUESS = "DEGENERATE_GUESS"
NOT_CONVERGED = "NOT_CONVERGED"
R2_BELOW_THRESHOLD = "R2_BELOW_THRESHOLD"
NONPOSITIVE_INTENSITY = "NONPOSITIVE_INTENSITY"


@dataclass(frozen=True)
class PowerLevel:
    power_uW: float
    spectrum: Spectrum


@dataclass(frozen=True)
class PowerSeries:
    """One campaign: ascending unique powers, all sharing one energy axis."""

    levels: tuple[PowerLevel, ...]
    campaign_id: str = "campaign"

    def __post_init__(self):
        powers = [lv.power_uW for lv in self.levels]
        if any(p <= 0 for p in powers):
            raise ValueError("powers must be strictly positive")
        if sorted(set(powers)) != powers:
            raise ValueError("powers must be unique and ascending")
        if self.levels:
            axis = self.levels[0].spectrum.energy_eV
            for lv in self.levels[1:]:
                if not np.array_equal(lv.spectrum.energy_eV, axis):
                    raise ValueError("all levels must share one energy axis")


@dataclass(frozen=True)
class LevelResult:
    power_uW: float
    fit: ProfileFitResult
    peak_intensity_counts: float
    peak_position_eV: float


@dataclass(frozen=True)
class AllometricFit:
    """I = a * P^b by ordinary least squares on (ln P, ln I)."""

    a: float
    b: float
    sigma_b: float
    r_squared: float
    n_points: int


@dataclass(frozen=True)
class SplitPowerFit:
    boundary_uW: float
    below: AllometricFit
    above: AllometricFit
    split_applied: bool


@dataclass(frozen=True)
class CampaignReport:
    campaign_id: str
    levels: tuple[LevelResult, ...]
    rejected: tuple[tuple[float, str], ...]
    intensity_fit: SplitPowerFit | None
    position_vs_power: tuple[tuple[float, float], ...]
    config_echo: FitConfig
    boundary_uW: float
    canonical_hash: str


_HEADER_POWER_RE = re.compile(r"^P=(.+)uW$")


def load_campaign_csv(data: bytes, campaign_id: str = "campaign") -> PowerSeries:
    """Parse a campaign CSV (UTF-8, LF or CRLF).

    Header: ``wavelength_nm,P=<v1>uW,P=<v2>uW,...``; every following row
    is plain comma-separated numerals, one counts column per power.
    Rows are converted to eV and re-sorted ascending in energy.
    """
    text = data.decode("utf-8")
    lines = [ln for ln in text.replace("\r\n", "\n").split("\n") if ln != ""]
    if not lines:
        raise ToolError("BAD_HEADER", "empty file")
    header = lines[0].split(",")
    if header[0] != "wavelength_nm" or len(header) < 2:
        raise ToolError("BAD_HEADER", f"unexpected header {lines[0]!r}")
    powers: list[float] = []
    for cell in header[1:]:
        m = _HEADER_POWER_RE.match(cell)
        if not m:
            raise ToolError("BAD_HEADER", f"unexpected power column {cell!r}")
        try:
            p = float(m.group(1))
        except ValueError:
            raise ToolError("BAD_HEADER", f"bad power literal in {cell!r}") from None
        if p <= 0 or not math.isfinite(p):
            raise ToolError("BAD_HEADER", f"power must be positive in {cell!r}")
        if p in powers:
            raise ToolError("DUPLICATE_POWER", f"power {p!r} appears twice")
        powers.append(p)

    rows = []
    for ln in lines[1:]:
        cells = ln.split(",")
        if len(cells) != len(header):
            raise ToolError("RAGGED_ROWS", f"row has {len(cells)} cells, header {len(header)}")
        try:
            rows.append([float(c) for c in cells])
        except ValueError:
            raise ToolError("NONNUMERIC_CELL", f"non-numeric cell in row {ln!r}") from None
    table = np.array(rows, dtype=np.float64)
    if table.ndim != 2 or table.shape[0] == 0:
        raise ToolError("RAGGED_ROWS", "no data rows")

    lam = table[:, 0]
    order = np.argsort(lam)           # ascending wavelength
    lam = lam[order]
    if np.any(np.diff(lam) <= 0):
        raise ValueError("duplicate wavelength rows")
    energy = convert_axis(lam)[::-1].copy()   # ascending energy
    counts = table[order, 1:][::-1, :]

    levels = []
    for k, p in enumerate(powers):
        levels.append(PowerLevel(p, Spectrum(energy, counts[:, k].copy(),
                                             provenance=f"P={p!r}uW")))
    levels.sort(key=lambda lv: lv.power_uW)
    return PowerSeries(tuple(levels), campaign_id)


def _fwhm_estimate(energy: np.ndarray, counts: np.ndarray) -> tuple[float, float] | None:
    """(center, FWHM) from the argmax and linearly interpolated half-max
    crossings; None when the trace is flat."""
    imax = int(np.argmax(counts))
    cmax = float(counts[imax])
    cmin = float(np.min(counts))
    if cmax == cmin:
        return None
    half = cmin + 0.5 * (cmax - cmin)
    e_l = float(energy[0])
    for i in range(imax, 0, -1):
        if counts[i - 1] < half:
            f = (half - counts[i - 1]) / (counts[i] - counts[i - 1])
            e_l = float(energy[i - 1]) + f * float(energy[i] - energy[i - 1])
            break
    e_r = float(energy[-1])
    for i in range(imax, counts.shape[0] - 1):
        if counts[i + 1] < half:
            f = (half - counts[i + 1]) / (counts[i] - counts[i + 1])
            e_r = float(energy[i + 1]) - f * float(energy[i + 1] - energy[i])
            break
    return float(energy[imax]), e_r - e_l


def adaptive_windows(series: PowerSeries,
                     config: FitConfig = FitConfig()) -> list[tuple[float, float] | None]:
    """Per-level fit window, wider at high excitation power.

    Half-width is c * FWHM_est with c = 2 + 2*rank/(n-1) over the
    ascending-power rank (c = 3 for a single level), clamped to the axis
    extent.  A flat level has no peak and gets None (pre-rejected).
    """
    if not series.levels:
        raise ToolError("EMPTY_CAMPAIGN", "no levels")
    n = len(series.levels)
    out: list[tuple[float, float] | None] = []
    for rank, lv in enumerate(series.levels):
        clean = despike(lv.spectrum.counts, config.despike_window, config.despike_k)
        est = _fwhm_estimate(lv.spectrum.energy_eV, clean)
        if est is None:
            out.append(None)
            continue
        center, fwhm = est
        c = 3.0 if n == 1 else 2.0 + 2.0 * rank / (n - 1)
        hw = c * fwhm
        lo = max(center - hw, float(lv.spectrum.energy_eV[0]))
        hi = min(center + hw, float(lv.spectrum.energy_eV[-1]))
        out.append((lo, hi))
    return out


def analyze_level(spectrum: Spectrum, window: tuple[float, float],
                  config: FitConfig, power_uW: float = float("nan"),
                  init: ProfileParams | None = None) -> LevelResult:
    """Despike, subtract the baseline, fit one profile.

    Peak intensity is the maximum of the despiked, baseline-subtracted
    counts inside the window (a raw read, not the fitted amplitude and
    not an integrated area).  Peak position is the fitted center when
    the fit is accepted, otherwise the energy of the processed maximum.
    """
    clean = despike(spectrum.counts, config.despike_window, config.despike_k)
    prepared = subtract_baseline(replace(spectrum, counts=clean), window,
                                 config.baseline_edge_points)
    if init is None:
        init = initial_guess(prepared, window)
    fit = fit_profile(prepared, window, config, init)
    sl = prepared.slice_window(window)
    seg_e = prepared.energy_eV[sl]
    seg_c = prepared.counts[sl]
    imax = int(np.argmax(seg_c))
    intensity = float(seg_c[imax])
    position = fit.params.center if fit.accepted else float(seg_e[imax])
    return LevelResult(power_uW, fit, intensity, position)


def allometric_fit(points) -> AllometricFit:
    """Closed-form OLS of ln I on ln P.

    sigma_b is the standard error of the slope, defined as 0 for n = 2
    (the OLS estimate is exact there, its error undefined).
    """
    pts = list(points)
    if len(pts) < 2:
        raise ToolError("TOO_FEW_POINTS", f"need >= 2 points, got {len(pts)}")
    for p, i in pts:
        if p <= 0 or i <= 0:
            raise ToolError("NONPOSITIVE_VALUE", "powers and intensities must be > 0")
    x = np.array([math.log(p) for p, _ in pts], dtype=np.float64)
    y = np.array([math.log(i) for _, i in pts], dtype=np.float64)
    n = len(pts)
    xbar = float(np.mean(x))
    ybar = float(np.mean(y))
    sxx = float(np.sum((x - xbar) ** 2))
    if sxx == 0.0:
        raise ToolError("NONPOSITIVE_VALUE", "all powers identical")
    b = float(np.sum((x - xbar) * (y - ybar))) / sxx
    a = math.exp(ybar - b * xbar)
    resid = y - (ybar + b * (x - xbar))
    ss_res = float(np.sum(resid ** 2))
    ss_tot = float(np.sum((y - ybar) ** 2))
    r2 = 0.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    sigma_b = 0.0 if n <= 2 else math.sqrt((ss_res / (n - 2)) / sxx)
    return AllometricFit(a, b, sigma_b, r2, n)


def split_allometric_fit(points, boundary_uW: float = 10.0) -> SplitPowerFit:
    """Two power laws split at the saturation boundary (P <= boundary
    goes below), or a single law in both slots when either side is
    thinner than 3 points."""
    pts = list(points)
    if not pts:
        raise ToolError("TOO_FEW_POINTS", "no points")
    below = [(p, i) for p, i in pts if p <= boundary_uW]
    above = [(p, i) for p, i in pts if p > boundary_uW]
    if len(below) >= 3 and len(above) >= 3:
        return SplitPowerFit(boundary_uW, allometric_fit(below),
                             allometric_fit(above), True)
    single = allometric_fit(pts)
    return SplitPowerFit(boundary_uW, single, single, False)


def run_campaign(series: PowerSeries, config: FitConfig = FitConfig(),
                 boundary_uW: float = 10.0, seed_mode: str = "independent") -> CampaignReport:
    """Full campaign: windows, per-level fits, reject routing, split fit.

    Only accepted fits enter the power law; every input power lands in
    exactly one of levels / rejected.  ``seed_mode='cascade'`` reuses the
    previous accepted level's parameters as the initial guess (a
    convergence shortcut that must not change the result; the default
    fits every spectrum independently from scratch).
    """
    if not series.levels:
        raise ToolError("EMPTY_CAMPAIGN", "no levels")
    if seed_mode not in ("independent", "cascade"):
        raise ValueError(f"unknown seed_mode {seed_mode!r}")
    windows = adaptive_windows(series, config)
    accepted: list[LevelResult] = []
    rejected: list[tuple[float, str]] = []
    prev_params: ProfileParams | None = None
    for lv, window in zip(series.levels, windows):
        if window is None:
            rejected.append((lv.power_uW, NO_PEAK))
            continue
        init = None
        if seed_mode == "cascade" and prev_params is not None:
            init = prev_params
        result = analyze_level(lv.spectrum, window, config, lv.power_uW, init=init)
        if result.fit.accepted:
            prev_params = result.fit.params
            if result.peak_intensity_counts <= 0:
                rejected.append((lv.power_uW, NONPOSITIVE_INTENSITY))
            else:
                accepted.append(result)
        elif result.fit.params.amplitude == 0.0 and result.fit.iterations == 0:
            rejected.append((lv.power_uW, DEGENERATE_GUESS))
        elif not result.fit.converged:
            rejected.append((lv.power_uW, NOT_CONVERGED))
        else:
            rejected.append((lv.power_uW, R2_BELOW_THRESHOLD))

    accepted.sort(key=lambda r: r.power_uW)
    rejected.sort(key=lambda r: r[0])
    intensity_fit = None
    if len(accepted) >= 2:
        intensity_fit = split_allometric_fit(
            [(r.power_uW, r.peak_intensity_counts) for r in accepted], boundary_uW)
    positions = tuple((r.power_uW, r.peak_position_eV) for r in accepted)
    report = CampaignReport(series.campaign_id, tuple(accepted), tuple(rejected),
                            intensity_fit, positions, config, boundary_uW, "")
    body = _render_body(report)
    digest = hashlib.sha256(body).hexdigest()
    return replace(report, canonical_hash=digest)


# --- canonical serialization -------------------------------------------------

def _fmt(x: float) -> str:
    """Shortest decimal string that round-trips to the same binary64."""
    return repr(float(x))


def _fmt_bool(x: bool) -> str:
    return "true" if x else "false"


def _render_allometric(prefix: str, fit: AllometricFit) -> list[str]:
    return [
        f"{prefix}.a = {_fmt(fit.a)}",
        f"{prefix}.b = {_fmt(fit.b)}",
        f"{prefix}.sigma_b = {_fmt(fit.sigma_b)}",
        f"{prefix}.r_squared = {_fmt(fit.r_squared)}",
        f"{prefix}.n_points = {fit.n_points}",
    ]


def _render_body(report: CampaignReport) -> bytes:
    cfg = report.config_echo
    lines = [
        "plreport 1",
        f"campaign = {report.campaign_id}",
        f"config.profile_kind = {cfg.profile_kind}",
        f"config.r2_threshold = {_fmt(cfg.r2_threshold)}",
        f"config.max_iterations = {cfg.max_iterations}",
        f"config.cost_rel_tol = {_fmt(cfg.cost_rel_tol)}",
        f"config.step_tol = {_fmt(cfg.step_tol)}",
        f"config.despike_window = {cfg.despike_window}",
        f"config.despike_k = {_fmt(cfg.despike_k)}",
        f"config.baseline_edge_points = {cfg.baseline_edge_points}",
        f"boundary_uW = {_fmt(report.boundary_uW)}",
        f"n_accepted = {len(report.levels)}",
        f"n_rejected = {len(report.rejected)}",
    ]
    for idx, lv in enumerate(sorted(report.levels, key=lambda r: r.power_uW)):
        pre = f"level.{idx}"
        lines += [
            f"{pre}.power_uW = {_fmt(lv.power_uW)}",
            f"{pre}.peak_intensity_counts = {_fmt(lv.peak_intensity_counts)}",
            f"{pre}.peak_position_eV = {_fmt(lv.peak_position_eV)}",
            f"{pre}.window_lo_eV = {_fmt(lv.fit.window[0])}",
            f"{pre}.window_hi_eV = {_fmt(lv.fit.window[1])}",
            f"{pre}.amplitude = {_fmt(lv.fit.params.amplitude)}",
            f"{pre}.center_eV = {_fmt(lv.fit.params.center)}",
            f"{pre}.sigma_g_eV = {_fmt(lv.fit.params.sigma_g)}",
            f"{pre}.gamma_l_eV = {_fmt(lv.fit.params.gamma_l)}",
            f"{pre}.offset = {_fmt(lv.fit.params.offset)}",
            f"{pre}.r_squared = {_fmt(lv.fit.r_squared)}",
            f"{pre}.iterations = {lv.fit.iterations}",
            f"{pre}.converged = {_fmt_bool(lv.fit.converged)}",
        ]
    for idx, (power, reason) in enumerate(sorted(report.rejected)):
        lines.append(f"rejected.{idx}.power_uW = {_fmt(power)}")
        lines.append(f"rejected.{idx}.reason = {reason}")
    fit = report.intensity_fit
    lines.append(f"intensity_fit.present = {_fmt_bool(fit is not None)}")
    if fit is not None:
        lines.append(f"intensity_fit.split_applied = {_fmt_bool(fit.split_applied)}")
        lines.append(f"intensity_fit.boundary_uW = {_fmt(fit.boundary_uW)}")
        lines += _render_allometric("intensity_fit.below", fit.below)
        lines += _render_allometric("intensity_fit.above", fit.above)
    for idx, (power, pos) in enumerate(sorted(report.position_vs_power)):
        lines.append(f"position.{idx}.power_uW = {_fmt(power)}")
        lines.append(f"position.{idx}.position_eV = {_fmt(pos)}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def serialize_report(report: CampaignReport) -> bytes:
    """Canonical text rendering; the trailing sha256 line covers every
    byte above it and must equal report.canonical_hash."""
    body = _render_body(report)
    digest = hashlib.sha256(body).hexdigest()
    return body + f"sha256 = {digest}\n".encode("utf-8")
