"""Shared fixtures and small builders for the test suite."""

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hosa.bispectrum import BicoherenceEstimate, principal_domain

settings.register_profile(
    "hosa", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("hosa")

RATE = 16000.0


def grid_estimate(magnitude, phase=None, nfft=64, n_segments=64, mask=None):
    """A BicoherenceEstimate built directly from principal-domain values.

    ``magnitude`` / ``phase`` are scalars or arrays with one value per
    principal-domain bin (row-major order).
    """
    pd = principal_domain(nfft) if mask is None else mask
    h = nfft // 2
    mag = np.full((h, h), np.nan)
    ph = np.full((h, h), np.nan)
    mag[pd] = magnitude
    ph[pd] = 0.0 if phase is None else phase
    cfg = {"frame_len": nfft, "hop": nfft // 2, "window": "hann", "rate_hz": RATE}
    return BicoherenceEstimate(mag**2, mag, ph, pd.copy(), nfft, n_segments, cfg)


def z_estimate(z, n_segments=64):
    """Estimate whose z-values (2 K b**2) are exactly ``z``, padded onto a big enough grid."""
    z = np.asarray(z, dtype=float)
    nfft = 16
    while principal_domain(nfft).sum() < z.size:
        nfft *= 2
    pd = principal_domain(nfft)
    keep = np.zeros(pd.sum(), dtype=bool)
    keep[: z.size] = True
    mask = np.zeros_like(pd)
    mask[pd] = keep
    vals = np.zeros(pd.sum())
    vals[: z.size] = np.sqrt(z / (2.0 * n_segments))
    est = grid_estimate(vals, nfft=nfft, n_segments=n_segments, mask=pd)
    return BicoherenceEstimate(
        est.squared, est.magnitude, est.phase, mask, nfft, n_segments, est.frame_config
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
