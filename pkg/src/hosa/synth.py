"""Synthetic signals with known higher-order structure.

Every generator is a pure function of its arguments: the same seed always
yields bit-identical samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.signal import lfilter

from hosa.signal import Signal

DEFAULT_RATE = 16000.0

# Block length (samples) over which QPC phases stay constant; 2x the
# default frame so most frames see a single phase draw.
QPC_PHASE_BLOCK = 512

# Coloured excitation used by the speech-like surrogates: a 9-tap Gaussian
# kernel (sd one sample, DC gain 3). Symmetric with a strictly positive
# response, so a linear process built on it has zero bispectrum phase.
_k = np.arange(-4, 5)
SPEECHLIKE_FILTER = tuple(3.0 * np.exp(-0.5 * _k**2) / np.exp(-0.5 * _k**2).sum())
del _k


def _check_n(n):
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    return int(n)


def generate_gaussian_noise(n, sigma=1.0, seed=0, sample_rate_hz=DEFAULT_RATE) -> Signal:
    """i.i.d. zero-mean Gaussian samples with standard deviation ``sigma``."""
    n = _check_n(n)
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    rng = np.random.default_rng(seed)
    return Signal(sigma * rng.standard_normal(n), sample_rate_hz, f"gaussian(seed={seed})")


def _phase_tracks(draws: np.ndarray, n: int, block: int, coupled: bool) -> np.ndarray:
    """Piecewise-constant phases with raised-cosine transitions between blocks.

    Each change is spread over ``block // 4`` samples around the boundary,
    along the shorter way round the circle, so frames that straddle a
    boundary see a brief glide rather than a broadband click. With
    ``coupled`` the third track equals the sum of the first two throughout.
    """
    tracks = np.repeat(draws, block, axis=0)[:n]
    ramp = block // 4
    if ramp < 2:
        return tracks
    w = 0.5 - 0.5 * np.cos(np.pi * (np.arange(ramp) + 0.5) / ramp)
    for m in range(1, draws.shape[0]):
        lo = m * block - ramp // 2
        if lo >= n:
            break
        d = np.angle(np.exp(1j * (draws[m] - draws[m - 1])))
        if coupled:
            d[2] = d[0] + d[1]
        hi = min(n, lo + ramp)
        tracks[lo:hi] = draws[m - 1] + w[: hi - lo, None] * d
    return tracks


def generate_qpc_triplet(
    n,
    f1,
    f2,
    coupled=True,
    noise_sigma=0.0,
    seed=0,
    phase_block=QPC_PHASE_BLOCK,
    phases: Optional[Sequence[float]] = None,
    sample_rate_hz=DEFAULT_RATE,
) -> Signal:
    """Three unit cosines at ``f1``, ``f2`` and ``f1 + f2`` (cycles/sample).

    Phases are redrawn uniformly every ``phase_block`` samples, with short
    smooth transitions between draws. When ``coupled`` the sum-frequency
    phase is locked to ``theta1 + theta2``; otherwise it is an independent
    draw, so its triple product with the other two components averages out
    across blocks.

    ``phases`` fixes ``(theta1, theta2)`` (or all three) for the whole
    record and bypasses the random draws; with ``coupled`` the third phase
    is still ``theta1 + theta2``. Noise still uses ``seed``.
    """
    n = _check_n(n)
    if not (0 < f1 < 0.5 and 0 < f2 < 0.5 and f1 + f2 < 0.5):
        raise ValueError(f"need 0 < f1, f2, f1 + f2 < 0.5; got f1={f1}, f2={f2}")
    if phase_block < 1:
        raise ValueError("phase_block must be >= 1")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    if phases is not None:
        if len(phases) not in (2, 3) or (not coupled and len(phases) != 3):
            raise ValueError("phases needs (theta1, theta2), or all three when uncoupled")
        th = np.zeros((1, 3))
        th[0, : len(phases)] = phases
        if coupled:
            th[0, 2] = th[0, 0] + th[0, 1]
        th = np.repeat(th, n, axis=0)
    else:
        n_blocks = -(-n // phase_block)
        draws = rng.uniform(-np.pi, np.pi, size=(n_blocks, 3))
        if coupled:
            draws[:, 2] = draws[:, 0] + draws[:, 1]
        th = _phase_tracks(draws, n, phase_block, coupled)
    x = (
        np.cos(2 * np.pi * f1 * t + th[:, 0])
        + np.cos(2 * np.pi * f2 * t + th[:, 1])
        + np.cos(2 * np.pi * (f1 + f2) * t + th[:, 2])
    )
    if noise_sigma > 0:
        x = x + noise_sigma * rng.standard_normal(n)
    tag = "coupled" if coupled else "uncoupled"
    return Signal(x, sample_rate_hz, f"qpc-{tag}(f1={f1},f2={f2},seed={seed})")


def generate_linear_nongaussian(
    n, filter=(1.0,), seed=0, sample_rate_hz=DEFAULT_RATE
) -> Signal:
    """FIR-filtered centered-exponential noise (``e - 1``, ``e ~ Exp(1)``).

    The driving sequence is long enough that all ``n`` outputs are steady
    state; with ``filter=[1]`` the output is the driving noise itself.
    """
    n = _check_n(n)
    h = np.asarray(filter, dtype=np.float64)
    if h.ndim != 1 or h.size == 0:
        raise ValueError("filter must be a non-empty 1-D sequence")
    rng = np.random.default_rng(seed)
    e = rng.exponential(size=n + h.size - 1) - 1.0
    y = np.convolve(e, h, mode="valid")
    return Signal(y, sample_rate_hz, f"linear-nongaussian(seed={seed})")


@dataclass(frozen=True)
class HammersteinModel:
    """Linear branch ``g1`` plus a quadratic branch ``g2`` acting on x**2."""

    g1: np.ndarray
    g2: np.ndarray

    def __post_init__(self):
        for name in ("g1", "g2"):
            v = np.asarray(getattr(self, name), dtype=np.float64)
            if v.ndim != 1 or v.size == 0 or not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must be a finite, non-empty 1-D vector")
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def is_linear(self) -> bool:
        return not np.any(self.g2)


def apply_hammerstein(x: Signal, model: HammersteinModel) -> Signal:
    """``y[n] = sum_k g1[k] x[n-k] + sum_k g2[k] x[n-k]**2`` with zero history."""
    s = x.samples
    y = lfilter(model.g1, [1.0], s)
    if not model.is_linear:
        y = y + lfilter(model.g2, [1.0], s * s)
    return Signal(y, x.sample_rate_hz, x.source_label)


def microphone_model(strength=0.1, taps=64, seed=2020) -> HammersteinModel:
    """A stand-in microphone: identity linear path, dispersive quadratic path.

    The quadratic kernel is a fixed pseudo-random (white) tap sequence, so
    the distortion products it creates carry frequency-dependent phase.
    """
    g2 = np.random.default_rng(seed).standard_normal(taps) * strength / np.sqrt(taps / 32)
    return HammersteinModel(np.array([1.0]), g2)


def phase_randomize(x: Signal, seed=0) -> Signal:
    """Same magnitude spectrum, independent uniform Fourier phases.

    The result is a linear (asymptotically Gaussian) process with the
    power spectrum of ``x``.
    """
    rng = np.random.default_rng(seed)
    X = np.fft.rfft(x.samples)
    ph = rng.uniform(-np.pi, np.pi, X.size)
    ph[0] = 0.0
    if x.samples.size % 2 == 0:
        ph[-1] = 0.0
    y = np.fft.irfft(np.abs(X) * np.exp(1j * ph), n=x.samples.size)
    return Signal(y, x.sample_rate_hz, x.source_label)


def _speechlike_base(n, seed):
    base = generate_linear_nongaussian(n, SPEECHLIKE_FILTER, seed=seed).samples
    return base / base.std()


def bonafide_surrogate(n, seed=0, sample_rate_hz=DEFAULT_RATE) -> Signal:
    """Speech-like stand-in for a natural recording.

    Coloured skewed excitation plus a phase-coupled tone triplet, passed
    through :func:`microphone_model`.
    """
    rng = np.random.default_rng([seed, 1])
    f1, f2 = rng.uniform(0.03, 0.2, size=2)
    tones = generate_qpc_triplet(n, f1, f2, coupled=True, seed=seed).samples
    x = Signal(_speechlike_base(n, seed) + 0.5 * tones, sample_rate_hz)
    y = apply_hammerstein(x, microphone_model())
    return Signal(y.samples, sample_rate_hz, f"bonafide-surrogate(seed={seed})")


def cloned_surrogate(n, seed=0, sample_rate_hz=DEFAULT_RATE) -> Signal:
    """Stand-in for vocoder output: a purely linear, zero-phase synthesis.

    The same coloured skewed excitation as :func:`bonafide_surrogate`
    (independent draw) with no tones and no microphone. Its bicoherence is
    a constant with flat phase.
    """
    x = _speechlike_base(n, [seed, 2])
    return Signal(x, sample_rate_hz, f"cloned-surrogate(seed={seed})")
