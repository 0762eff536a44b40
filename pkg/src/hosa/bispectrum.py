"""Third-order cumulants, bispectrum and bicoherence.

Bin convention: FFT bin ``i`` of an ``nfft``-point transform sits at
``i * rate / nfft`` Hz. Bicoherence grids are ``(nfft // 2, nfft // 2)``
arrays indexed ``[f1_bin, f2_bin]``; the non-redundant principal domain is
``1 <= f2 <= f1`` with ``f1 + f2 < nfft / 2``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from hosa.errors import InsufficientDataError, MaskedEstimateError
from hosa.signal import FrameSet, Signal

# Bins whose normalising power falls below this fraction of the grand mean
# (raised to the triple-product scale) are left undefined.
MASK_EPS = 1e-12

# Frames per FFT batch; summation order is fixed so results are reproducible.
_CHUNK = 64


@dataclass(frozen=True)
class CumulantGrid:
    values: np.ndarray  # (2*maxlag+1, 2*maxlag+1), index [k1+maxlag, k2+maxlag]
    maxlag: int
    n_used: int

    def at(self, k1: int, k2: int) -> float:
        return float(self.values[k1 + self.maxlag, k2 + self.maxlag])


@dataclass(frozen=True)
class BispectrumEstimate:
    grid: np.ndarray  # complex (nfft, nfft); zero where f1 + f2 >= nfft
    nfft: int
    n_segments: int
    frame_config: dict


@dataclass(frozen=True)
class BicoherenceEstimate:
    """Normalised bispectrum over the triangle ``f1 + f2 < nfft/2``.

    ``squared`` and ``magnitude`` hold b**2 and b; ``phase`` is the argument
    of the segment-summed triple product. All three are NaN where the bin
    is outside the triangle or its normalising power vanished. ``mask``
    marks the defined bins of the principal domain.
    """

    squared: np.ndarray
    magnitude: np.ndarray
    phase: np.ndarray
    mask: np.ndarray
    nfft: int
    n_segments: int
    frame_config: dict

    @property
    def n_bins(self) -> int:
        return int(self.mask.sum())

    @property
    def rate_hz(self) -> float:
        return float(self.frame_config.get("rate_hz", 1.0))

    def bin_freqs_hz(self) -> np.ndarray:
        return np.arange(self.nfft // 2) * self.rate_hz / self.nfft

    def z_values(self) -> np.ndarray:
        """``2 K b**2`` at each defined principal-domain bin (row-major order)."""
        return 2.0 * self.n_segments * self.squared[self.mask]

    def to_csv(self, path) -> None:
        f = self.bin_freqs_hz()
        i, j = np.nonzero(self.mask)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["f1_hz", "f2_hz", "magnitude", "phase_rad"])
            for a, b in zip(i, j):
                w.writerow(
                    [repr(float(f[a])), repr(float(f[b])),
                     repr(float(self.magnitude[a, b])), repr(float(self.phase[a, b]))]
                )

    def to_dict(self) -> dict:
        def grid(a):
            out = np.where(self.mask, a, np.nan)
            return [[None if np.isnan(v) else float(v) for v in row] for row in out]

        return {
            "rate": self.rate_hz,
            "nfft": self.nfft,
            "n_segments": self.n_segments,
            "frame_len": self.frame_config.get("frame_len"),
            "hop": self.frame_config.get("hop"),
            "window": self.frame_config.get("window"),
            "bins": self.bin_freqs_hz().tolist(),
            "magnitude": grid(self.magnitude),
            "phase": grid(self.phase),
        }

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")


def third_order_cumulant(x: Signal, maxlag: int) -> CumulantGrid:
    """Biased third-order cumulant estimate, symmetrised in (k1, k2).

    ``c3(k1, k2) = (1/N) sum_n x[n] x[n+k1] x[n+k2]`` over the indices where
    all three samples exist, with ``x`` mean-removed.
    """
    if maxlag < 0:
        raise ValueError(f"maxlag must be >= 0, got {maxlag}")
    s = x.samples - x.samples.mean()
    n = s.size
    if n <= 3 * maxlag:
        raise InsufficientDataError(f"need more than {3 * maxlag} samples, got {n}")
    lags = range(-maxlag, maxlag + 1)
    c = np.empty((2 * maxlag + 1, 2 * maxlag + 1))
    for a, k1 in enumerate(lags):
        for b, k2 in enumerate(lags):
            lo = max(0, -k1, -k2)
            hi = n - max(0, k1, k2)
            c[a, b] = np.dot(s[lo:hi] * s[lo + k1 : hi + k1], s[lo + k2 : hi + k2]) / n
    c = 0.5 * (c + c.T)
    return CumulantGrid(c, maxlag, n)


def _spectra(frames: FrameSet, nfft: int):
    if frames.n_frames < 1:
        raise InsufficientDataError("empty frame set")
    if nfft < frames.frame_len:
        raise ValueError(f"nfft={nfft} is smaller than frame_len={frames.frame_len}")
    if nfft & (nfft - 1):
        raise ValueError(f"nfft must be a power of two, got {nfft}")
    for k in range(0, frames.n_frames, _CHUNK):
        yield np.fft.fft(frames.frames[k : k + _CHUNK], nfft, axis=1)


def estimate_bispectrum(frames: FrameSet, nfft: int) -> BispectrumEstimate:
    """Segment-averaged triple product ``Y(f1) Y(f2) conj(Y(f1 + f2))``."""
    idx = np.arange(nfft)
    s = idx[:, None] + idx[None, :]
    valid = s < nfft
    s = np.where(valid, s, 0)
    acc = np.zeros((nfft, nfft), dtype=np.complex128)
    for Y in _spectra(frames, nfft):
        for y in Y:
            acc += np.outer(y, y) * np.conj(y[s])
    acc[~valid] = 0.0
    acc /= frames.n_frames
    return BispectrumEstimate(acc, nfft, frames.n_frames, frames.config)


def principal_domain(nfft: int) -> np.ndarray:
    """Boolean ``(nfft//2, nfft//2)`` mask of ``{1 <= j <= i, i + j < nfft/2}``.

    The point count is ``mask.sum()``.
    """
    if nfft < 8:
        raise ValueError(f"nfft must be >= 8, got {nfft}")
    h = nfft // 2
    i, j = np.indices((h, h))
    return (j >= 1) & (j <= i) & (2 * (i + j) < nfft)


def estimate_bicoherence(frames: FrameSet, nfft: int) -> BicoherenceEstimate:
    """Power-normalised bicoherence over the principal domain.

    ``b**2 = |sum_k T_k|**2 / (sum_k |Y_k(f1) Y_k(f2)|**2 * sum_k |Y_k(f1+f2)|**2)``
    with ``T_k = Y_k(f1) Y_k(f2) conj(Y_k(f1+f2))``. By Cauchy-Schwarz
    ``0 <= b <= 1``; with a single segment ``b == 1`` wherever defined.
    Values are mirrored onto ``(f2, f1)``.
    """
    pd = principal_domain(nfft)
    I, J = np.nonzero(pd)
    S = I + J
    num = np.zeros(I.size, dtype=np.complex128)
    d12 = np.zeros(I.size)
    d3 = np.zeros(I.size)
    power = 0.0
    h = nfft // 2
    for Y in _spectra(frames, nfft):
        Y = Y[:, :h]
        y12 = Y[:, I] * Y[:, J]
        y3 = Y[:, S]
        num += np.sum(y12 * np.conj(y3), axis=0)
        d12 += np.sum(y12.real**2 + y12.imag**2, axis=0)
        d3 += np.sum(y3.real**2 + y3.imag**2, axis=0)
        power += np.sum(Y.real[:, 1:] ** 2 + Y.imag[:, 1:] ** 2)
    K = frames.n_frames
    mean_power = power / (K * (h - 1))
    floor = MASK_EPS * mean_power**1.5
    ok = (d12 > 0) & (d3 > 0)
    ok &= np.sqrt(d12 * d3) / K >= floor
    ok &= mean_power > 0

    b2 = np.full(I.size, np.nan)
    ph = np.full(I.size, np.nan)
    b2[ok] = (num.real[ok] ** 2 + num.imag[ok] ** 2) / (d12[ok] * d3[ok])
    # guard the last ulp of Cauchy-Schwarz equality (exact when K == 1)
    if K == 1:
        b2[ok] = 1.0
    np.minimum(b2, 1.0, out=b2, where=ok)
    ph[ok] = np.angle(num[ok])

    sq = np.full((h, h), np.nan)
    phase = np.full((h, h), np.nan)
    sq[I, J] = b2
    sq[J, I] = b2
    phase[I, J] = ph
    phase[J, I] = ph
    mask = np.zeros((h, h), dtype=bool)
    mask[I[ok], J[ok]] = True
    return BicoherenceEstimate(sq, np.sqrt(sq), phase, mask, nfft, K, frames.config)


def _defined(b: BicoherenceEstimate, what: str) -> np.ndarray:
    if not b.mask.any():
        raise MaskedEstimateError(f"{what}: every bicoherence bin is undefined")
    return b.magnitude[b.mask]


def mean_bicoherence_magnitude(b: BicoherenceEstimate) -> float:
    return float(np.mean(_defined(b, "mean_bicoherence_magnitude")))


def phase_flatness(b: BicoherenceEstimate) -> float:
    """Circular variance of the bicoherence phase over the stronger bins.

    Only defined principal-domain bins at or above the median magnitude
    are used. 0 means every phase is identical; ~1 means uniform phases.
    """
    mag = _defined(b, "phase_flatness")
    if mag.size < 8:
        raise InsufficientDataError(f"phase_flatness needs >= 8 bins, got {mag.size}")
    ph = b.phase[b.mask]
    strong = mag >= np.median(mag)
    r = np.abs(np.mean(np.exp(1j * ph[strong])))
    return float(min(1.0, max(0.0, 1.0 - r)))
