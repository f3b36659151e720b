"""Repeat-run and methodology-contrast experiments.

``run_repeat`` replays one identical tool call against a fresh server
process per run (ruling out in-process caching) and checks byte
identity of the canonical reports.  ``run_contrast`` runs the primary
Voigt pipeline against a deliberately different Lorentzian pipeline to
show that the exponent depends on methodology while each methodology is
individually deterministic.
"""

from __future__ import annotations

import hashlib
import json
import shlex
import subprocess
import time
from dataclasses import dataclass, replace

import numpy as np

from labgate.errors import ToolError
from labgate.plworkflow import (REPORT_EXTENSION, CampaignReport, PowerSeries,
                                analyze_level, load_campaign_csv, run_campaign,
                                serialize_report, split_allometric_fit,
                                _fwhm_estimate)
from labgate.spectral import FitConfig


@dataclass(frozen=True)
class RepeatReport:
    n_runs: int
    hashes: tuple[str, ...]
    identical: bool
    b_values: tuple[float, ...]
    sigma_b_across_runs: float
    intensity_spread_pct: float
    timings_s: tuple[float, ...]


@dataclass(frozen=True)
class ContrastReport:
    b_primary: float
    b_alternate: float
    delta_b: float
    sigma_b_fit: float
    primary_deterministic: bool
    alternate_deterministic: bool


def _spread_pct(values) -> float:
    arr = [float(v) for v in values]
    mean = sum(arr) / len(arr)
    if mean == 0.0:
        return 0.0
    return (max(arr) - min(arr)) / mean * 100.0


def run_repeat(server_cmd, call: dict, n: int = 4, out_dir=None,
               prepare=None, parallel: bool = False) -> RepeatReport:
    """Spawn the server n times, issue the identical call, compare bytes.

    ``server_cmd`` is the full command (string or argv list).  ``prepare``
    is an optional hook called with the run index before each run (used
    by the sensitivity control to perturb the input data; incompatible
    with ``parallel``).  Parallel runs still write to isolated per-run
    directories and are compared only after every run finished.
    """
    if n < 2:
        raise ValueError("need at least 2 runs")
    if parallel and prepare is not None:
        raise ValueError("prepare hook requires sequential runs")
    argv = shlex.split(server_cmd) if isinstance(server_cmd, str) else list(server_cmd)
    request = json.dumps({"id": "repeat", "method": "call_tool",
                          "params": call}, sort_keys=True) + "\n"

    outputs: list[tuple[int, str, str, float]] = []
    if parallel:
        t0 = time.monotonic()
        procs = [subprocess.Popen(argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                  stderr=subprocess.PIPE, text=True)
                 for _ in range(n)]
        for i, proc in enumerate(procs):
            stdout, stderr = proc.communicate(request, timeout=300)
            outputs.append((proc.returncode, stdout, stderr, time.monotonic() - t0))
    else:
        for i in range(n):
            if prepare is not None:
                prepare(i)
            t0 = time.monotonic()
            proc = subprocess.run(argv, input=request, capture_output=True,
                                  text=True, timeout=300)
            outputs.append((proc.returncode, proc.stdout, proc.stderr,
                            time.monotonic() - t0))

    hashes = []
    b_values = []
    intensities = []
    timings = []
    for i, (returncode, stdout, stderr, elapsed) in enumerate(outputs):
        timings.append(elapsed)
        if returncode != 0:
            raise ToolError("SERVER_FAILURE",
                            f"run {i}: exit {returncode}: {stderr[-500:]}")
        lines = stdout.strip().splitlines()
        if not lines:
            raise ToolError("SERVER_FAILURE", f"run {i}: no response")
        try:
            envelope = json.loads(lines[0])
        except json.JSONDecodeError:
            raise ToolError("SERVER_FAILURE", f"run {i}: malformed envelope") from None
        if "result" not in envelope:
            raise ToolError("SERVER_FAILURE", f"run {i}: error response {envelope!r}")
        result = envelope["result"]
        report_bytes = result["report"].encode("utf-8")
        hashes.append(hashlib.sha256(report_bytes).hexdigest())
        if result.get("b_below") is not None:
            b_values.append(float(result["b_below"]))
        if result.get("lowest_power_intensity") is not None:
            intensities.append(float(result["lowest_power_intensity"]))
        if out_dir is not None:
            run_dir = out_dir / f"run{i}"
            run_dir.mkdir(parents=True, exist_ok=True)
            (run_dir / f"report{REPORT_EXTENSION}").write_bytes(report_bytes)
    identical = len(set(hashes)) == 1
    sigma_b = float(np.std(np.array(b_values))) if b_values else 0.0
    spread = _spread_pct(intensities) if intensities else 0.0
    return RepeatReport(n, tuple(hashes), identical, tuple(b_values), sigma_b,
                        spread, tuple(timings))


def _alternate_pipeline(series: PowerSeries, boundary_uW: float) -> CampaignReport:
    """Deliberately different methodology: Lorentzian profile, one fixed
    window (center +- 3 * FWHM of the highest-power raw spectrum), no
    despiking."""
    config = FitConfig(profile_kind="lorentzian", despike_window=3,
                       despike_k=1e30)  # effectively disables despiking
    top = series.levels[-1].spectrum
    est = _fwhm_estimate(top.energy_eV, top.counts)
    if est is None:
        raise ToolError("NO_PEAK", "highest-power spectrum is flat")
    center, fwhm = est
    window = (max(center - 3.0 * fwhm, float(top.energy_eV[0])),
              min(center + 3.0 * fwhm, float(top.energy_eV[-1])))
    accepted = []
    rejected = []
    for lv in series.levels:
        result = analyze_level(lv.spectrum, window, config, lv.power_uW)
        if result.fit.accepted and result.peak_intensity_counts > 0:
            accepted.append(result)
        else:
            rejected.append((lv.power_uW, "REJECTED"))
    fit = None
    if len(accepted) >= 2:
        fit = split_allometric_fit(
            [(r.power_uW, r.peak_intensity_counts) for r in accepted], boundary_uW)
    return CampaignReport(series.campaign_id + "-alternate", tuple(accepted),
                          tuple(rejected), fit, tuple(), config, boundary_uW, "")


def run_contrast(campaign_csv: bytes, boundary_uW: float = 10.0) -> ContrastReport:
    """Voigt pipeline vs the alternate Lorentzian pipeline on one CSV.

    Each pipeline runs twice; its two serialized reports must be
    byte-identical (per-pipeline determinism).  The difference of the
    sub-boundary exponents is recorded, not bounded: the exponent is a
    property of the methodology, the determinism is the guarantee.
    """
    series = load_campaign_csv(campaign_csv, campaign_id="contrast")
    primary_a = run_campaign(series, FitConfig(), boundary_uW=boundary_uW)
    primary_b = run_campaign(series, FitConfig(), boundary_uW=boundary_uW)
    alt_a = _alternate_pipeline(series, boundary_uW)
    alt_b = _alternate_pipeline(series, boundary_uW)
    primary_ok = serialize_report(primary_a) == serialize_report(primary_b)
    alternate_ok = serialize_report(alt_a) == serialize_report(alt_b)
    if primary_a.intensity_fit is None or alt_a.intensity_fit is None:
        raise ToolError("TOO_FEW_POINTS", "a pipeline accepted fewer than 2 levels")
    b_primary = primary_a.intensity_fit.below.b
    b_alternate = alt_a.intensity_fit.below.b
    return ContrastReport(b_primary, b_alternate, abs(b_primary - b_alternate),
                          primary_a.intensity_fit.below.sigma_b,
                          primary_ok, alternate_ok)
