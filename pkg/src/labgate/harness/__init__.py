"""Reproducibility harness: synthetic campaigns, repeat-run byte
identity, methodology contrast, and the brute-force fitting oracle."""

from labgate.harness.oracle import OracleFit, oracle_fit
from labgate.harness.runner import ContrastReport, RepeatReport, run_contrast, run_repeat
from labgate.harness.synth import (SyntheticSpec, gaussian_noise, generate_campaign,
                                   splitmix64, uniform01)

__all__ = [
    "OracleFit", "oracle_fit", "ContrastReport", "RepeatReport",
    "run_contrast", "run_repeat", "SyntheticSpec", "gaussian_noise",
    "generate_campaign", "splitmix64", "uniform01",
]
