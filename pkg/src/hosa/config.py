"""Analysis configuration shared by every stage of the pipeline."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from pathlib import Path

CONFIG_ENV_VAR = "HOSA_CONFIG"
SCHEMA_VERSION = 1


@dataclasses.dataclass(frozen=True)
class AnalysisConfig:
    """Framing, estimation and decision parameters.

    Defaults: 256-sample Hann frames at 50% overlap, 512-point FFT.
    """

    frame_len: int = 256
    overlap: float = 0.5
    nfft: int = 512
    window: str = "hann"
    alpha: float = 0.05
    qpc_rel_threshold: float = 5.0
    linearity_bound: float = 0.5

    def __post_init__(self):
        from hosa.signal import WINDOWS

        if int(self.frame_len) != self.frame_len or self.frame_len < 8:
            raise ValueError(f"frame_len must be an integer >= 8, got {self.frame_len}")
        if not 0.0 <= self.overlap < 1.0:
            raise ValueError(f"overlap must be in [0, 1), got {self.overlap}")
        if self.nfft < self.frame_len or self.nfft & (self.nfft - 1):
            raise ValueError(f"nfft must be a power of two >= frame_len, got {self.nfft}")
        if self.window not in WINDOWS:
            raise ValueError(f"unknown window {self.window!r}; choose from {sorted(WINDOWS)}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.qpc_rel_threshold <= 1.0:
            raise ValueError("qpc_rel_threshold must exceed 1")
        if self.linearity_bound <= 0.0:
            raise ValueError("linearity_bound must be positive")

    @property
    def hop(self) -> int:
        return max(1, int(round(self.frame_len * (1.0 - self.overlap))))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "AnalysisConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known - {"schema_version"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**{k: v for k, v in data.items() if k in known})

    def replace(self, **changes) -> "AnalysisConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        return dataclasses.replace(self, **changes)

    def digest(self) -> str:
        """Short stable hash of the effective parameters."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def save(self, path) -> None:
        doc = {"schema_version": SCHEMA_VERSION, **self.to_dict()}
        Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "AnalysisConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def resolve_config(config_path=None, **overrides) -> AnalysisConfig:
    """Flags > config file > ``$HOSA_CONFIG`` > built-in defaults."""
    if config_path is None:
        config_path = os.environ.get(CONFIG_ENV_VAR) or None
    base = AnalysisConfig.load(config_path) if config_path else AnalysisConfig()
    return base.replace(**overrides)
