"""Signals, WAV I/O, framing and spectrograms."""

from __future__ import annotations

import csv
import json
import wave
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window

from hosa.errors import (
    ContainerError,
    InsufficientDataError,
    UnreadableFileError,
    UnsupportedBitDepthError,
    UnsupportedChannelsError,
    UnsupportedEncodingError,
)

# identifier -> scipy window name (periodic form)
WINDOWS = {
    "hann": "hann",
    "hamming": "hamming",
    "blackman": "blackman",
    "rectangular": "boxcar",
}

PCM16_SCALE = 32768.0


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Signal:
    """Uniformly sampled mono waveform."""

    samples: np.ndarray
    sample_rate_hz: float
    source_label: Optional[str] = None

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1 or s.size < 1:
            raise ValueError("samples must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(s)):
            raise ValueError("samples must be finite")
        if not self.sample_rate_hz > 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        object.__setattr__(self, "samples", _frozen(s))
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))

    def __len__(self):
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def scaled(self, gain: float) -> "Signal":
        return Signal(self.samples * gain, self.sample_rate_hz, self.source_label)


@dataclass(frozen=True)
class FrameSet:
    """Mean-removed, windowed, possibly overlapping segments of a signal."""

    frames: np.ndarray  # (K, frame_len)
    frame_len: int
    hop: int
    window: str
    parent_rate_hz: float

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=np.float64)
        if f.ndim != 2 or f.shape[1] != self.frame_len:
            raise ValueError(f"frames must have shape (K, {self.frame_len})")
        if not 1 <= self.hop <= self.frame_len:
            raise ValueError("hop must satisfy 1 <= hop <= frame_len")
        object.__setattr__(self, "frames", _frozen(f))

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def config(self) -> dict:
        return {
            "frame_len": self.frame_len,
            "hop": self.hop,
            "window": self.window,
            "rate_hz": self.parent_rate_hz,
        }


@dataclass(frozen=True)
class SpectrogramGrid:
    """Magnitude spectrogram; rows are frequency bins, columns frame times."""

    magnitudes: np.ndarray
    freqs_hz: np.ndarray
    times_s: np.ndarray
    frame_len: int
    hop: int
    window: str
    rate_hz: float = field(default=1.0)

    def to_dict(self) -> dict:
        return {
            "rate": self.rate_hz,
            "frame_len": self.frame_len,
            "hop": self.hop,
            "window": self.window,
            "bins": self.freqs_hz.tolist(),
            "times": self.times_s.tolist(),
            "mags": self.magnitudes.tolist(),
        }

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    def to_csv(self, path) -> None:
        """One row per frame: ``time_s`` followed by the magnitude in each bin."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time_s"] + [repr(float(f)) for f in self.freqs_hz])
            for t, col in zip(self.times_s, self.magnitudes.T):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in col])


def window_function(name: str, length: int) -> np.ndarray:
    try:
        return get_window(WINDOWS[name], length)
    except KeyError:
        raise ValueError(f"unknown window {name!r}; choose from {sorted(WINDOWS)}") from None


def load_wav(path) -> Signal:
    """Read a 16-bit PCM WAV file as a mono signal scaled to [-1, 1).

    Stereo files are reduced to mono by averaging the two channels.
    """
    path = Path(path)
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise UnreadableFileError(f"cannot open {path}: {exc.strerror}", path) from exc
    with fh:
        try:
            wf = wave.open(fh, "rb")
        except wave.Error as exc:
            msg = str(exc)
            if msg.startswith("unknown format"):
                raise UnsupportedEncodingError(
                    f"{path}: encoding is not integer PCM ({msg})", path
                ) from exc
            raise ContainerError(f"{path}: not a RIFF/WAVE file ({msg})", path) from exc
        except EOFError as exc:
            raise ContainerError(f"{path}: truncated RIFF header", path) from exc
        with wf:
            width = wf.getsampwidth()
            channels = wf.getnchannels()
            rate = wf.getframerate()
            if width != 2:
                raise UnsupportedBitDepthError(
                    f"{path}: bit depth {8 * width} not supported (need 16)", path
                )
            if channels not in (1, 2):
                raise UnsupportedChannelsError(
                    f"{path}: {channels} channels not supported (need 1 or 2)", path
                )
            raw = wf.readframes(wf.getnframes())
    data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / PCM16_SCALE
    if channels == 2:
        data = data.reshape(-1, 2).mean(axis=1)
    if data.size == 0:
        raise InsufficientDataError(f"{path}: no audio frames")
    return Signal(data, rate, source_label=str(path))


def write_wav(x: Signal, path, normalize: bool = False) -> float:
    """Write ``x`` as mono 16-bit PCM and return the gain that was applied.

    Without ``normalize`` the samples must already lie in [-1, 1); values
    are rounded to the nearest 1/32768 step.
    """
    s = x.samples
    gain = 1.0
    if normalize:
        peak = np.max(np.abs(s))
        gain = 0.9 / peak if peak > 0 else 1.0
        s = s * gain
    elif np.any(s < -1.0) or np.any(s >= 1.0):
        raise ValueError("samples outside [-1, 1); pass normalize=True")
    pcm = np.clip(np.round(s * PCM16_SCALE), -32768, 32767).astype("<i2")
    rate = int(round(x.sample_rate_hz))
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(rate)
        wf.writeframes(pcm.tobytes())
    return gain


def frame_count(n: int, frame_len: int, hop: int) -> int:
    return (n - frame_len) // hop + 1


def segment(
    x: Signal,
    frame_len: int = 256,
    overlap_fraction: float = 0.5,
    window: str = "hann",
) -> FrameSet:
    """Split ``x`` into windowed frames.

    Frames start every ``hop = round(frame_len * (1 - overlap_fraction))``
    samples; a trailing partial frame is dropped. Each frame has its own
    mean subtracted before the window is applied.
    """
    if frame_len < 8:
        raise ValueError(f"frame_len must be >= 8, got {frame_len}")
    if not 0.0 <= overlap_fraction < 1.0:
        raise ValueError(f"overlap_fraction must be in [0, 1), got {overlap_fraction}")
    win = window_function(window, frame_len)
    n = len(x)
    if n < frame_len:
        raise InsufficientDataError(
            f"signal of {n} samples is shorter than one {frame_len}-sample frame"
        )
    hop = max(1, int(round(frame_len * (1.0 - overlap_fraction))))
    frames = sliding_window_view(x.samples, frame_len)[::hop]
    frames = frames - frames.mean(axis=1, keepdims=True)
    return FrameSet(frames * win, frame_len, hop, window, x.sample_rate_hz)


def spectrogram(
    x: Signal,
    frame_len: int = 256,
    overlap_fraction: float = 0.5,
    window: str = "hann",
) -> SpectrogramGrid:
    fs = segment(x, frame_len, overlap_fraction, window)
    mags = np.abs(np.fft.rfft(fs.frames, axis=1)).T
    freqs = np.fft.rfftfreq(frame_len, d=1.0 / x.sample_rate_hz)
    times = (np.arange(fs.n_frames) * fs.hop + frame_len / 2.0) / x.sample_rate_hz
    return SpectrogramGrid(mags, freqs, times, frame_len, fs.hop, window, x.sample_rate_hz)
