"""Shared builders for the test suite."""

from __future__ import annotations

import math

import numpy as np

from labgate.semworkflow import GrayImage
from labgate.spectral import ProfileParams, Spectrum, eval_profile

SEM_UUID = "6f1b24a3-9f0c-4f6e-8a4d-1b2c3d4e5f60"
PL_UUID = "0d9a41c2-7e55-4b7a-b8e3-2f6c9d0a1b2c"


def make_peak_spectrum(kind: str, params: ProfileParams, lo: float = 1.7,
                       hi: float = 2.1, n: int = 401) -> Spectrum:
    e = np.linspace(lo, hi, n)
    return Spectrum(e, eval_profile(kind, params, e))


def make_grating(period_px: float, n: int = 256, theta_deg: float = 0.0,
                 amp: float = 100.0) -> GrayImage:
    yy, xx = np.mgrid[0:n, 0:n].astype(np.float64)
    th = math.radians(theta_deg)
    phase = 2.0 * np.pi * (xx * math.cos(th) + yy * math.sin(th)) / period_px
    img = np.clip(np.round(127.5 + amp * np.cos(phase)), 0, 255).astype(np.uint8)
    return GrayImage(img)


def make_speck_image(n: int = 256) -> GrayImage:
    img = np.zeros((n, n), np.uint8)
    img[n // 3, 2 * n // 5] = 255
    return GrayImage(img)
