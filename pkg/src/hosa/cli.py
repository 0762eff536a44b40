"""``hosa`` command-line interface.

Exit codes: 0 success, 1 ``detect`` judged at least one file cloned,
2 bad input (unreadable audio, invalid arguments or manifests),
3 analysis failure. Errors are reported on stderr as one JSON object per line.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from hosa import synth
from hosa.config import SCHEMA_VERSION, AnalysisConfig, resolve_config
from hosa.detector import (
    DEFAULT_FUSED,
    FeatureVector,
    Thresholds,
    analyze,
    calibrate,
    classify,
    evaluate,
    read_manifest,
)
from hosa.errors import AnalysisError, CalibrationError, HosaError, WavError
from hosa.signal import Signal, load_wav, spectrogram, write_wav

EXIT_OK = 0
EXIT_CLONED = 1
EXIT_INPUT = 2
EXIT_ANALYSIS = 3

SYNTH_KINDS = ("gaussian", "qpc-coupled", "qpc-uncoupled", "linear-nongaussian", "hammerstein")


class _Fail(Exception):
    def __init__(self, code, payload):
        super().__init__(payload.get("message", ""))
        self.code = code
        self.payload = payload


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write_json(path, obj) -> None:
    Path(path).write_text(_dump(obj))


def _stamp(obj: dict, cfg: AnalysisConfig) -> dict:
    return {"schema_version": SCHEMA_VERSION, "config_digest": cfg.digest(), **obj}


def _report(payload: dict) -> None:
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")


def _error_payload(exc: Exception, path=None) -> dict:
    out = {"error": type(exc).__name__, "message": str(exc)}
    if path is not None:
        out["path"] = str(path)
    if isinstance(exc, WavError):
        out["field"] = exc.field
    if isinstance(exc, AnalysisError):
        out["stage"] = exc.stage
    return out


def _classify_error(exc: Exception) -> int:
    return EXIT_INPUT if isinstance(exc, WavError) else EXIT_ANALYSIS


def _read(path) -> Signal:
    """Load a WAV; decodable but unusable audio is an analysis failure."""
    try:
        return load_wav(path)
    except WavError:
        raise
    except HosaError as exc:
        raise AnalysisError("input", exc) from exc


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------


def cmd_analyze(args, cfg: AnalysisConfig) -> int:
    try:
        x = _read(args.file)
        result = analyze(x, cfg)
        spec = spectrogram(x, cfg.frame_len, cfg.overlap, cfg.window)
    except HosaError as exc:
        _report(_error_payload(exc, args.file))
        return _classify_error(exc)
    out = Path(args.out) if args.out else Path(Path(args.file).stem + "_hosa")
    out.mkdir(parents=True, exist_ok=True)
    b = result.bicoherence
    freqs = b.bin_freqs_hz()
    peaks = [
        {"f1_bin": p.f1_bin, "f2_bin": p.f2_bin, "f1_hz": float(freqs[p.f1_bin]),
         "f2_hz": float(freqs[p.f2_bin]), "magnitude": p.magnitude}
        for p in result.peaks
    ]
    _write_json(
        out / "features.json",
        _stamp({"config": cfg.to_dict(), "features": result.features.to_dict(), "qpc_peaks": peaks},
               cfg),
    )
    _write_json(out / "gaussianity.json", _stamp(result.gaussianity.to_dict(), cfg))
    _write_json(out / "linearity.json", _stamp(result.linearity.to_dict(), cfg))
    b.to_csv(out / "bicoherence.csv")
    _write_json(out / "bicoherence.json", _stamp(b.to_dict(), cfg))
    spec.to_csv(out / "spectrogram.csv")
    _write_json(out / "spectrogram.json", _stamp(spec.to_dict(), cfg))
    print(str(out))
    return EXIT_OK


# ---------------------------------------------------------------------------
# detect
# ---------------------------------------------------------------------------


def _file_features(job):
    path, cfg = job
    try:
        return analyze(_read(path), cfg).features.to_dict(), None, None
    except HosaError as exc:
        return None, _classify_error(exc), _error_payload(exc, path)


def _batch_features(paths, cfg, jobs):
    work = [(p, cfg) for p in paths]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, os.cpu_count() or 1)) as ex:
            return list(ex.map(_file_features, work))
    return [_file_features(w) for w in work]


def _load_thresholds(path) -> Thresholds:
    try:
        return Thresholds.load(path)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise _Fail(EXIT_INPUT, {"error": "InvalidThresholds", "path": str(path),
                                 "message": str(exc)}) from exc


def cmd_detect(args, cfg: AnalysisConfig) -> int:
    t = _load_thresholds(args.thresholds)
    codes = set()
    for path, (fv, code, err) in zip(args.files, _batch_features(args.files, cfg, args.jobs)):
        if fv is None:
            codes.add(code)
            _report(err)
            continue
        res = classify(FeatureVector.from_dict(fv), t)
        print(f"{path}\t{res.verdict}\t{','.join(res.fired_rules)}", flush=True)
        if res.verdict == "cloned":
            codes.add(EXIT_CLONED)
    for code in (EXIT_INPUT, EXIT_ANALYSIS, EXIT_CLONED):
        if code in codes:
            return code
    return EXIT_OK


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


def _floats(text: str):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("expected at least one number")
    return vals


def cmd_synth(args, cfg: AnalysisConfig, parser) -> int:
    rate = args.rate
    n = args.n if args.n is not None else int(round(args.duration * rate))
    seed = args.seed if args.seed is not None else 0
    params = {"n": n, "sample_rate_hz": rate, "seed": seed}
    try:
        if args.kind == "gaussian":
            x = synth.generate_gaussian_noise(n, args.sigma, seed, rate)
            params["sigma"] = args.sigma
        elif args.kind in ("qpc-coupled", "qpc-uncoupled"):
            coupled = args.kind == "qpc-coupled"
            x = synth.generate_qpc_triplet(n, args.f1, args.f2, coupled, args.noise_sigma, seed,
                                           sample_rate_hz=rate)
            params.update(f1=args.f1, f2=args.f2, noise_sigma=args.noise_sigma,
                          phase_block=synth.QPC_PHASE_BLOCK)
        elif args.kind == "linear-nongaussian":
            x = synth.generate_linear_nongaussian(n, args.filter, seed, rate)
            params["filter"] = list(args.filter)
        else:
            if args.source == "sine":
                t = np.arange(n)
                src = Signal(0.5 * np.sin(2 * np.pi * args.f0 * t), rate)
                params["f0"] = args.f0
            else:
                src = synth.generate_linear_nongaussian(n, args.filter, seed, rate)
                params["filter"] = list(args.filter)
            model = synth.HammersteinModel(args.g1, args.g2)
            x = synth.apply_hammerstein(src, model)
            params.update(source=args.source, g1=list(args.g1), g2=list(args.g2))
    except (ValueError, TypeError) as exc:
        parser.error(str(exc))
    out = Path(args.out) if args.out else Path(f"{args.kind}-{seed}.wav")
    out.parent.mkdir(parents=True, exist_ok=True)
    gain = write_wav(x, out, normalize=True)
    side = out.with_suffix(".json")
    _write_json(side, _stamp({"kind": args.kind, "params": params, "gain": gain}, cfg))
    print(str(out))
    return EXIT_OK


# ---------------------------------------------------------------------------
# calibrate / evaluate
# ---------------------------------------------------------------------------


def _load_manifest(path):
    try:
        entries = read_manifest(path)
    except (OSError, ValueError, KeyError) as exc:
        raise _Fail(EXIT_INPUT, {"error": "InvalidManifest", "path": str(path),
                                 "message": str(exc)}) from exc
    if not entries:
        raise _Fail(EXIT_INPUT, {"error": "EmptyManifest", "path": str(path),
                                 "message": "manifest lists no files"})
    return entries


def cmd_calibrate(args, cfg: AnalysisConfig) -> int:
    entries = _load_manifest(args.manifest)
    features = tuple(f for f in args.features.split(",") if f) if args.features else DEFAULT_FUSED
    labeled = []
    for entry, (fv, _, err) in zip(entries, _batch_features([e.path for e in entries], cfg,
                                                            args.jobs)):
        if fv is None:
            _report(err)
            continue
        labeled.append((FeatureVector.from_dict(fv), entry.label))
    try:
        t = calibrate(labeled, features, seed=args.seed, date=args.date, config=cfg)
    except (CalibrationError, ValueError) as exc:
        raise _Fail(EXIT_INPUT, _error_payload(exc, args.manifest)) from exc
    t.metadata["excluded"] = len(entries) - len(labeled)
    out = Path(args.out) if args.out else Path("thresholds.json")
    t.save(out)
    print(str(out))
    return EXIT_OK


def cmd_evaluate(args, cfg: AnalysisConfig) -> int:
    entries = _load_manifest(args.manifest)
    t = _load_thresholds(args.thresholds)
    report = evaluate(entries, t, cfg, jobs=args.jobs)
    out = Path(args.out) if args.out else Path("report.json")
    doc = report.to_dict()
    doc["config"] = cfg.to_dict()
    _write_json(out, doc)
    if args.csv:
        report.to_csv(args.csv)
    for item in report.excluded:
        _report({"error": "Excluded", "path": item["path"], "message": item["error"]})
    print(str(out))
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("analysis configuration")
    g.add_argument("--frame-len", type=int, help="samples per analysis frame (default 256)")
    g.add_argument("--overlap", type=float, help="frame overlap fraction in [0, 1) (default 0.5)")
    g.add_argument("--nfft", type=int, help="FFT length, power of two >= frame length (default 512)")
    g.add_argument("--window", help="hann, hamming, blackman or rectangular (default hann)")
    g.add_argument("--alpha", type=float, help="significance level (default 0.05)")
    g.add_argument("--qpc-threshold", type=float,
                   help="QPC peak threshold as a multiple of the median magnitude (default 5)")
    g.add_argument("--linearity-bound", type=float,
                   help="two-sided bound on the linearity statistic (default 0.5)")
    g.add_argument("--config", help="JSON config file (default: $HOSA_CONFIG if set)")
    g.add_argument("--seed", type=int, help="random seed (synth, calibrate)")
    g.add_argument("--jobs", type=int, default=1, help="worker processes for batch commands")
    g.add_argument("--out", help="output path")

    p = argparse.ArgumentParser(
        prog="hosa", description="Higher-order spectral analysis for cloned-speech detection."
    )
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", parents=[common], help="features, tests and grids for one WAV")
    a.add_argument("file")

    d = sub.add_parser("detect", parents=[common], help="classify WAV files")
    d.add_argument("files", nargs="*")
    d.add_argument("--thresholds", required=True, help="thresholds JSON from 'calibrate'")

    s = sub.add_parser("synth", parents=[common], help="write a synthetic test signal")
    s.add_argument("kind", choices=SYNTH_KINDS)
    s.add_argument("--n", type=int, help="number of samples (overrides --duration)")
    s.add_argument("--duration", type=float, default=4.0, help="seconds (default 4)")
    s.add_argument("--rate", type=float, default=synth.DEFAULT_RATE, help="sample rate in Hz")
    s.add_argument("--sigma", type=float, default=1.0, help="gaussian: standard deviation")
    s.add_argument("--f1", type=float, default=0.10, help="qpc: first frequency, cycles/sample")
    s.add_argument("--f2", type=float, default=0.15, help="qpc: second frequency, cycles/sample")
    s.add_argument("--noise-sigma", type=float, default=0.0, help="qpc: additive noise sd")
    s.add_argument("--filter", type=_floats, default=[1.0],
                   help="linear-nongaussian: FIR taps, comma separated")
    s.add_argument("--source", choices=("sine", "linear-nongaussian"), default="sine",
                   help="hammerstein: input signal")
    s.add_argument("--f0", type=float, default=0.05, help="hammerstein sine: cycles/sample")
    s.add_argument("--g1", type=_floats, default=[1.0], help="hammerstein: linear branch taps")
    s.add_argument("--g2", type=_floats, default=[0.5], help="hammerstein: quadratic branch taps")

    c = sub.add_parser("calibrate", parents=[common], help="fit thresholds on a labelled manifest")
    c.add_argument("manifest")
    c.add_argument("--features", help="comma-separated features to fuse")
    c.add_argument("--date", help="calibration date recorded in the metadata")

    e = sub.add_parser("evaluate", parents=[common], help="detection rates over a manifest")
    e.add_argument("manifest")
    e.add_argument("--thresholds", required=True)
    e.add_argument("--csv", help="also write the per-row table as CSV")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(
            args.config,
            frame_len=args.frame_len,
            overlap=args.overlap,
            nfft=args.nfft,
            window=args.window,
            alpha=args.alpha,
            qpc_rel_threshold=args.qpc_threshold,
            linearity_bound=args.linearity_bound,
        )
    except (OSError, ValueError, TypeError) as exc:
        _report({"error": "InvalidConfig", "message": str(exc)})
        return EXIT_INPUT
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    try:
        if args.command == "analyze":
            return cmd_analyze(args, cfg)
        if args.command == "detect":
            return cmd_detect(args, cfg)
        if args.command == "synth":
            return cmd_synth(args, cfg, parser)
        if args.command == "calibrate":
            return cmd_calibrate(args, cfg)
        return cmd_evaluate(args, cfg)
    except _Fail as exc:
        _report(exc.payload)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
