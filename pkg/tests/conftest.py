from __future__ import annotations

import pytest

from labgate.harness.synth import SyntheticSpec, generate_campaign
from labgate.plworkflow import load_campaign_csv


@pytest.fixture(scope="session")
def bundled_campaign_csv() -> bytes:
    """The 21-level noisy fixture used by the determinism suite."""
    spec = SyntheticSpec(b_below=1.5, b_above=0.5, noise_rel=0.01, rng_seed=42,
                         profile_kind="voigt", axis_halfwidth_fwhm=6.0)
    return generate_campaign(spec)[0]


@pytest.fixture(scope="session")
def bundled_series(bundled_campaign_csv):
    return load_campaign_csv(bundled_campaign_csv, "bundled")


@pytest.fixture(scope="session")
def cleanroom_campaign_csv() -> bytes:
    """Noise-free fixture whose adaptive windows all clamp to the axis,
    so the per-level wing pickup is identical and the exponents are
    recovered exactly."""
    spec = SyntheticSpec(b_below=1.5, b_above=0.5, noise_rel=0.0, rng_seed=7,
                         profile_kind="voigt", axis_halfwidth_fwhm=1.9,
                         n_samples=301)
    return generate_campaign(spec)[0]
