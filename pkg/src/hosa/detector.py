"""Bona-fide vs cloned speech detection from higher-order spectral features."""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import maximum_filter

from hosa.bispectrum import (
    BicoherenceEstimate,
    estimate_bicoherence,
    mean_bicoherence_magnitude,
    phase_flatness,
)
from hosa.config import SCHEMA_VERSION, AnalysisConfig
from hosa.errors import (
    AnalysisError,
    CalibrationError,
    HosaError,
    InsufficientDataError,
    MaskedEstimateError,
)
from hosa.signal import Signal, load_wav, segment
from hosa.stats import TestResult, gaussianity_test, linearity_test

BONA_FIDE = "bona_fide"
CLONED = "cloned"
MORPHED = "morphed"

# Features fused by default, with the side that indicates "cloned":
# a linear-looking bispectrum, flat bicoherence phase, weak coupling.
DEFAULT_FUSED = ("linearity_stat", "phase_flatness", "mean_bicoherence")
DEFAULT_POLARITY = {
    "gaussianity_stat": "below",
    "gaussianity_p": "above",
    "linearity_stat": "below",
    "linearity_noncentrality": "below",
    "mean_bicoherence": "below",
    "phase_flatness": "below",
    "qpc_peak_count": "below",
}


@dataclass(frozen=True)
class FeatureVector:
    gaussianity_stat: float
    gaussianity_p: float
    linearity_stat: float
    linearity_noncentrality: float
    mean_bicoherence: float
    phase_flatness: float
    qpc_peak_count: int
    duration_s: float
    sample_rate_hz: float

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not math.isfinite(v):
                raise ValueError(f"feature {k} is not finite")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureVector":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__})


@dataclass(frozen=True)
class QPCPeak:
    f1_bin: int
    f2_bin: int
    magnitude: float


@dataclass(frozen=True)
class Analysis:
    """Everything computed for one signal."""

    bicoherence: BicoherenceEstimate
    gaussianity: TestResult
    linearity: TestResult
    peaks: list
    features: FeatureVector


def detect_qpc_peaks(b: BicoherenceEstimate, rel_threshold: float = 5.0) -> list:
    """Strict local maxima of bicoherence magnitude above ``rel_threshold`` x median.

    Only defined principal-domain bins compete; a peak must exceed all of
    its 8 neighbours. Sorted by descending magnitude.
    """
    if rel_threshold <= 1.0:
        raise ValueError("rel_threshold must exceed 1")
    if not b.mask.any():
        raise MaskedEstimateError("detect_qpc_peaks: every bicoherence bin is undefined")
    grid = np.where(b.mask, b.magnitude, -np.inf)
    footprint = np.ones((3, 3), dtype=bool)
    footprint[1, 1] = False
    neigh = maximum_filter(grid, footprint=footprint, mode="constant", cval=-np.inf)
    level = rel_threshold * float(np.median(b.magnitude[b.mask]))
    hit = b.mask & (grid > neigh) & (grid > level)
    i, j = np.nonzero(hit)
    order = np.argsort(-grid[i, j], kind="stable")
    return [QPCPeak(int(i[k]), int(j[k]), float(grid[i[k], j[k]])) for k in order]


def analyze(x: Signal, cfg: Optional[AnalysisConfig] = None) -> Analysis:
    """Run framing, bicoherence, both tests and peak picking with one config."""
    cfg = cfg or AnalysisConfig()
    if x.duration_s < 1.0:
        raise AnalysisError(
            "input", InsufficientDataError(f"need >= 1 s of audio, got {x.duration_s:.3f} s")
        )

    def stage(name, fn, *args):
        try:
            return fn(*args)
        except HosaError as exc:
            raise AnalysisError(name, exc) from exc

    frames = stage("segment", segment, x, cfg.frame_len, cfg.overlap, cfg.window)
    b = stage("bicoherence", estimate_bicoherence, frames, cfg.nfft)
    g = stage("gaussianity", gaussianity_test, b, cfg.alpha)
    lin = stage("linearity", linearity_test, b, cfg.alpha, cfg.linearity_bound)
    peaks = stage("qpc", detect_qpc_peaks, b, cfg.qpc_rel_threshold)
    fv = FeatureVector(
        gaussianity_stat=float(g.details["normalized"]),
        gaussianity_p=g.p_value,
        linearity_stat=lin.statistic,
        linearity_noncentrality=lin.noncentrality,
        mean_bicoherence=stage("qpc", mean_bicoherence_magnitude, b),
        phase_flatness=stage("qpc", phase_flatness, b),
        qpc_peak_count=len(peaks),
        duration_s=x.duration_s,
        sample_rate_hz=x.sample_rate_hz,
    )
    return Analysis(b, g, lin, peaks, fv)


def extract_features(x: Signal, cfg: Optional[AnalysisConfig] = None) -> FeatureVector:
    return analyze(x, cfg).features


# ---------------------------------------------------------------------------
# thresholds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FeatureRule:
    threshold: float
    polarity: str  # "below" or "above": the side of the threshold voting cloned
    youden_j: float

    @property
    def informative(self) -> bool:
        return self.youden_j > 0

    def votes_cloned(self, value: float) -> bool:
        return value < self.threshold if self.polarity == "below" else value > self.threshold


@dataclass(frozen=True)
class Thresholds:
    rules: dict
    fusion: str = "majority"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.fusion != "majority":
            raise ValueError(f"unknown fusion rule {self.fusion!r}")

    @property
    def fused(self) -> list:
        return [k for k, r in self.rules.items() if r.informative]

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "config_digest": self.metadata.get("config_digest"),
            "fusion": self.fusion,
            "rules": {k: asdict(r) for k, r in self.rules.items()},
            "metadata": self.metadata,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_dict(cls, d: dict) -> "Thresholds":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported thresholds schema {d.get('schema_version')!r}")
        rules = {k: FeatureRule(**v) for k, v in d["rules"].items()}
        return cls(rules, d.get("fusion", "majority"), d.get("metadata", {}))

    @classmethod
    def load(cls, path) -> "Thresholds":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _youden(values, is_cloned, threshold, polarity):
    votes = values < threshold if polarity == "below" else values > threshold
    sens = np.mean(votes[is_cloned])
    spec = np.mean(~votes[~is_cloned])
    return float(sens + spec - 1.0)


def _fit_rule(values: np.ndarray, is_cloned: np.ndarray, default_polarity: str) -> FeatureRule:
    order = np.argsort(values, kind="stable")
    v, lab = values[order], is_cloned[order]
    distinct = np.nonzero(np.diff(v) > 0)[0]
    if distinct.size == 0:
        return FeatureRule(float(v[0]), default_polarity, 0.0)
    best = None
    other = "above" if default_polarity == "below" else "below"
    for k in distinct:
        t = 0.5 * (v[k] + v[k + 1])
        # prefer cuts between opposing labels, then the wider gap
        opposing = lab[k] != lab[k + 1]
        for pol_rank, pol in enumerate((default_polarity, other)):
            j = _youden(values, is_cloned, t, pol)
            key = (round(j, 12), opposing, v[k + 1] - v[k], -pol_rank)
            if best is None or key > best[0]:
                best = (key, t, pol, j)
    _, t, pol, j = best
    if j <= 0:
        return FeatureRule(float(t), default_polarity, 0.0)
    return FeatureRule(float(t), pol, j)


def calibrate(
    labeled: Sequence,
    features: Sequence[str] = DEFAULT_FUSED,
    seed: Optional[int] = None,
    date: Optional[str] = None,
    config: Optional[AnalysisConfig] = None,
) -> Thresholds:
    """Per-feature Youden-optimal thresholds, fused by majority vote.

    ``labeled`` is a sequence of ``(FeatureVector, label)``; ``morphed``
    counts as cloned. Thresholds sit at midpoints between adjacent sorted
    feature values. The polarity is learned, the default side winning ties.
    A feature with J = 0 is kept but flagged non-informative and does not
    vote.
    """
    labels = [_as_binary(lab) for _, lab in labeled]
    n_cloned = sum(labels)
    n_bona = len(labels) - n_cloned
    if n_cloned == 0 or n_bona == 0:
        raise CalibrationError("calibration needs both bona-fide and cloned examples")
    if n_cloned < 2 or n_bona < 2:
        raise CalibrationError("calibration needs >= 2 examples of each label")
    is_cloned = np.array(labels, dtype=bool)
    rules = {}
    for name in features:
        if name not in FeatureVector.__dataclass_fields__:
            raise ValueError(f"unknown feature {name!r}")
        vals = np.array([getattr(fv, name) for fv, _ in labeled], dtype=np.float64)
        rules[name] = _fit_rule(vals, is_cloned, DEFAULT_POLARITY.get(name, "below"))
    if not any(r.informative for r in rules.values()):
        raise CalibrationError("no selected feature separates the classes (all J = 0)")
    meta = {
        "n_examples": len(labels),
        "n_bona_fide": n_bona,
        "n_cloned": n_cloned,
        "seed": seed,
        "date": date,
    }
    if config is not None:
        meta["config"] = config.to_dict()
        meta["config_digest"] = config.digest()
    return Thresholds(rules, "majority", meta)


@dataclass(frozen=True)
class DetectionResult:
    verdict: str
    features: FeatureVector
    fired_rules: list
    config_digest: str

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "fired_rules": list(self.fired_rules),
            "features": self.features.to_dict(),
            "config_digest": self.config_digest,
        }


def classify(f: FeatureVector, t: Thresholds) -> DetectionResult:
    """Majority vote of the informative rules; an exact tie is bona-fide."""
    fused = t.fused
    if not fused:
        raise ValueError("thresholds contain no informative rule")
    fired = [k for k in fused if t.rules[k].votes_cloned(getattr(f, k))]
    verdict = CLONED if 2 * len(fired) > len(fused) else BONA_FIDE
    return DetectionResult(verdict, f, fired, t.metadata.get("config_digest", ""))


# ---------------------------------------------------------------------------
# manifests and evaluation
# ---------------------------------------------------------------------------

MANIFEST_COLUMNS = ("path", "label", "condition", "clone_source_count", "sample_rate_hz")
_LABELS = {
    "bona_fide": BONA_FIDE,
    "bona-fide": BONA_FIDE,
    "bonafide": BONA_FIDE,
    "ground_truth": BONA_FIDE,
    "cloned": CLONED,
    "morphed": MORPHED,
}


def _as_binary(label: str) -> bool:
    """True for cloned (morphed recordings count as cloned)."""
    try:
        return _LABELS[str(label).strip().lower()] != BONA_FIDE
    except KeyError:
        raise ValueError(f"unknown label {label!r}") from None


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: str
    condition: str
    clone_source_count: str
    sample_rate_hz: str


def read_manifest(path) -> list:
    """Parse a manifest CSV; relative paths resolve against its directory."""
    path = Path(path)
    base = path.parent
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(MANIFEST_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"manifest is missing columns: {sorted(missing)}")
        rows = []
        for r in reader:
            label = str(r["label"]).strip().lower()
            if label not in _LABELS:
                raise ValueError(f"unknown label {r['label']!r} in manifest")
            p = Path(r["path"])
            rows.append(
                ManifestEntry(
                    str(p if p.is_absolute() else base / p),
                    _LABELS[label],
                    r["condition"].strip(),
                    str(r["clone_source_count"]).strip(),
                    str(r["sample_rate_hz"]).strip(),
                )
            )
    return rows


def _features_for_path(args):
    path, cfg = args
    try:
        return extract_features(load_wav(path), cfg), None
    except HosaError as exc:
        return None, f"{type(exc).__name__}: {exc}"


def features_for_paths(paths, cfg: AnalysisConfig, jobs: int = 1) -> list:
    """``[(FeatureVector | None, error | None)]`` in input order."""
    work = [(p, cfg) for p in paths]
    if jobs and jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, os.cpu_count() or 1)) as ex:
            return list(ex.map(_features_for_path, work))
    return [_features_for_path(w) for w in work]


@dataclass(frozen=True)
class EvaluationReport:
    rows: list
    confusion: dict
    excluded: list
    config_digest: str = ""

    def grid(self) -> dict:
        """Table-style view: ``{condition: {clone_source_count: rate}}``."""
        out = {}
        for r in self.rows:
            out.setdefault(r["condition"], {})[r["clone_source_count"]] = r["detection_rate"]
        return out

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "config_digest": self.config_digest,
            "rows": self.rows,
            "grid": self.grid(),
            "confusion": self.confusion,
            "excluded": self.excluded,
        }

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def to_csv(self, path) -> None:
        cols = ["condition", "clone_source_count", "total", "correct", "detection_rate",
                "n_bona_fide", "n_cloned", "n_morphed", "n_excluded"]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
            w.writeheader()
            for r in self.rows:
                w.writerow({c: r[c] for c in cols})


def evaluate(
    manifest: Sequence[ManifestEntry],
    t: Thresholds,
    cfg: Optional[AnalysisConfig] = None,
    jobs: int = 1,
) -> EvaluationReport:
    """Classify every manifest entry and tabulate detection rates per condition.

    Rows are keyed by ``(condition, clone_source_count)`` in order of first
    appearance. Unreadable or unanalysable files are listed in ``excluded``
    and left out of every rate.
    """
    cfg = cfg or AnalysisConfig()
    results = features_for_paths([m.path for m in manifest], cfg, jobs)
    rows = {}
    confusion = {"tp": 0, "fn": 0, "tn": 0, "fp": 0}
    excluded = []
    for entry, (fv, err) in zip(manifest, results):
        key = (entry.condition, entry.clone_source_count)
        row = rows.setdefault(
            key,
            {"condition": key[0], "clone_source_count": key[1], "total": 0, "correct": 0,
             "n_bona_fide": 0, "n_cloned": 0, "n_morphed": 0, "n_excluded": 0},
        )
        if fv is None:
            row["n_excluded"] += 1
            excluded.append({"path": entry.path, "error": err})
            continue
        truth_cloned = entry.label != BONA_FIDE
        said_cloned = classify(fv, t).verdict == CLONED
        row["total"] += 1
        row[f"n_{entry.label}"] += 1
        row["correct"] += int(truth_cloned == said_cloned)
        if truth_cloned:
            confusion["tp" if said_cloned else "fn"] += 1
        else:
            confusion["fp" if said_cloned else "tn"] += 1
    out = []
    for row in rows.values():
        row["detection_rate"] = 100.0 * row["correct"] / row["total"] if row["total"] else None
        out.append(row)
    return EvaluationReport(out, confusion, excluded, cfg.digest())
