"""Feature extraction, QPC peaks, calibration, classification and evaluation."""

import csv
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hosa.bispectrum import estimate_bicoherence, principal_domain
from hosa.config import AnalysisConfig
from hosa.detector import (
    DEFAULT_FUSED,
    FeatureRule,
    FeatureVector,
    Thresholds,
    analyze,
    calibrate,
    classify,
    detect_qpc_peaks,
    evaluate,
    extract_features,
    read_manifest,
)
from hosa.errors import AnalysisError, CalibrationError, MaskedEstimateError
from hosa.signal import Signal, segment, write_wav
from hosa.stats import linearity_test
from hosa.synth import (
    bonafide_surrogate,
    cloned_surrogate,
    generate_gaussian_noise,
    generate_qpc_triplet,
    phase_randomize,
)

from conftest import grid_estimate

RATE = 16000.0
SUITE_N = 24000  # 1.5 s


def fv(**over):
    base = dict(
        gaussianity_stat=1.0, gaussianity_p=0.5, linearity_stat=0.0,
        linearity_noncentrality=0.0, mean_bicoherence=0.1, phase_flatness=0.5,
        qpc_peak_count=0, duration_s=2.0, sample_rate_hz=RATE,
    )
    base.update(over)
    return FeatureVector(**base)


@pytest.fixture(scope="module")
def suite():
    out = []
    for s in range(12):
        out.append((extract_features(bonafide_surrogate(SUITE_N, seed=s)), "bona_fide"))
        out.append((extract_features(cloned_surrogate(SUITE_N, seed=s)), "cloned"))
    return out


# -- QPC peaks --------------------------------------------------------------


def test_qpc_top_peak_at_coupling_bin():
    x = generate_qpc_triplet(63 * 128 + 256, 0.10, 0.15, noise_sigma=0.12, seed=4)
    peaks = detect_qpc_peaks(estimate_bicoherence(segment(x), 512), 5.0)
    assert peaks
    top = peaks[0]
    assert abs(top.f1_bin - round(0.15 * 512)) <= 1 and abs(top.f2_bin - round(0.10 * 512)) <= 1
    mags = [p.magnitude for p in peaks]
    assert mags == sorted(mags, reverse=True)


@pytest.mark.slow
def test_qpc_no_peaks_in_noise():
    n = 127 * 128 + 256
    empty = sum(
        not detect_qpc_peaks(estimate_bicoherence(segment(generate_gaussian_noise(n, seed=s)), 512), 5.0)
        for s in range(100)
    )
    assert empty >= 90


def test_qpc_flat_grid_has_no_peaks():
    assert detect_qpc_peaks(grid_estimate(0.3), 1.5) == []


def test_qpc_peaks_are_strict_and_thresholded():
    nfft = 64
    n = principal_domain(nfft).sum()
    mags = np.full(n, 0.01)
    b = grid_estimate(mags, nfft=nfft)
    b.magnitude[10, 5] = b.magnitude[10, 6] = 0.9  # plateau: not strict
    b.magnitude[20, 3] = 0.9
    b.magnitude[15, 8] = 0.04  # below 5x median
    peaks = detect_qpc_peaks(b, 5.0)
    assert [(p.f1_bin, p.f2_bin) for p in peaks] == [(20, 3)]


def test_qpc_errors():
    with pytest.raises(ValueError):
        detect_qpc_peaks(grid_estimate(0.3), 1.0)
    b = grid_estimate(0.3)
    b.mask[:] = False
    with pytest.raises(MaskedEstimateError):
        detect_qpc_peaks(b, 5.0)


# -- features ---------------------------------------------------------------


def test_features_deterministic_and_valid():
    x = bonafide_surrogate(SUITE_N, seed=3)
    a, b = extract_features(x), extract_features(x)
    assert a == b
    assert 0 <= a.gaussianity_p <= 1
    assert 0 <= a.mean_bicoherence <= 1 and 0 <= a.phase_flatness <= 1
    assert a.duration_s == 1.5 and a.sample_rate_hz == RATE


def test_features_scale_invariant():
    x = bonafide_surrogate(SUITE_N, seed=1)
    a, b = extract_features(x), extract_features(x.scaled(0.5))
    for k in ("gaussianity_stat", "mean_bicoherence", "phase_flatness"):
        assert getattr(a, k) == getattr(b, k)


def test_features_need_one_second():
    with pytest.raises(AnalysisError) as info:
        extract_features(generate_gaussian_noise(15999, seed=0))
    assert info.value.stage == "input"


def test_failures_name_the_stage():
    with pytest.raises(AnalysisError) as info:
        extract_features(Signal(np.zeros(16000), RATE))
    assert info.value.stage == "gaussianity"
    assert isinstance(info.value.cause, MaskedEstimateError)


def test_analysis_shares_one_config():
    cfg = AnalysisConfig(frame_len=128, nfft=256, overlap=0.25)
    res = analyze(bonafide_surrogate(SUITE_N, seed=0), cfg)
    assert res.bicoherence.nfft == 256
    assert res.bicoherence.frame_config["hop"] == cfg.hop
    assert res.features.linearity_stat == res.linearity.statistic


def test_linear_resynthesis_flips_linearity_decision():
    flips = 0
    for s in range(20):
        x = bonafide_surrogate(SUITE_N, seed=s)
        y = phase_randomize(x, seed=[s, 9])
        rx = linearity_test(estimate_bicoherence(segment(x), 512)).reject_h0
        ry = linearity_test(estimate_bicoherence(segment(y), 512)).reject_h0
        flips += rx != ry
    assert flips >= 16


def test_feature_vector_validation():
    with pytest.raises(ValueError):
        fv(mean_bicoherence=float("nan"))
    f = fv(qpc_peak_count=3)
    assert FeatureVector.from_dict(json.loads(json.dumps(f.to_dict()))) == f


# -- calibration ------------------------------------------------------------


def test_calibrate_separable_midpoint():
    data = [(fv(linearity_stat=v), "bona_fide") for v in (0.1, 0.2)]
    data += [(fv(linearity_stat=v), "cloned") for v in (0.8, 0.9)]
    t = calibrate(data, ["linearity_stat"])
    r = t.rules["linearity_stat"]
    assert r.threshold == pytest.approx(0.5)
    assert r.youden_j == 1.0
    assert r.polarity == "above"  # learned: cloned sits above here


def test_calibrate_default_polarity_wins_ties():
    data = [(fv(mean_bicoherence=v), lab) for v, lab in
            [(0.1, "cloned"), (0.2, "cloned"), (0.8, "bona_fide"), (0.9, "bona_fide")]]
    r = calibrate(data, ["mean_bicoherence"]).rules["mean_bicoherence"]
    assert (r.threshold, r.polarity, r.youden_j) == (pytest.approx(0.5), "below", 1.0)


def test_calibrate_degenerate_feature_flagged():
    data = [(fv(phase_flatness=0.4, linearity_stat=v), lab)
            for v, lab in [(0.1, "bona_fide"), (0.2, "bona_fide"), (0.8, "cloned"), (0.9, "cloned")]]
    t = calibrate(data, ["phase_flatness", "linearity_stat"])
    assert not t.rules["phase_flatness"].informative
    assert t.fused == ["linearity_stat"]
    with pytest.raises(CalibrationError):
        calibrate(data, ["phase_flatness"])


@pytest.mark.parametrize(
    "labels",
    [["cloned"] * 4, ["bona_fide"] * 3, ["bona_fide", "cloned", "cloned"], []],
)
def test_calibrate_needs_both_classes(labels):
    with pytest.raises(CalibrationError):
        calibrate([(fv(), lab) for lab in labels])


def test_calibrate_rejects_unknown_feature():
    data = [(fv(), "bona_fide")] * 2 + [(fv(), "cloned")] * 2
    with pytest.raises(ValueError):
        calibrate(data, ["pitch"])


def test_morphed_counts_as_cloned():
    data = [(fv(linearity_stat=v), lab) for v, lab in
            [(0.1, "morphed"), (0.2, "cloned"), (0.8, "bona_fide"), (0.9, "bona_fide")]]
    t = calibrate(data, ["linearity_stat"])
    assert t.metadata["n_cloned"] == 2 and t.rules["linearity_stat"].youden_j == 1.0


def test_suite_calibration(suite):
    t = calibrate(suite, seed=0, date="2020-01-01", config=AnalysisConfig())
    assert set(t.rules) == set(DEFAULT_FUSED)
    assert min(r.youden_j for r in t.rules.values()) >= 0.9
    assert all(r.polarity == "below" for r in t.rules.values())
    assert t.metadata["n_examples"] == len(suite)
    assert t.metadata["config_digest"] == AnalysisConfig().digest()
    correct = sum((classify(f, t).verdict == "cloned") == (lab == "cloned") for f, lab in suite)
    assert correct / len(suite) >= 0.9


def _training_j(t, data, name):
    r = t.rules[name]
    v = np.array([getattr(f, name) for f, _ in data])
    y = np.array([lab != "bona_fide" for _, lab in data])
    votes = v < r.threshold if r.polarity == "below" else v > r.threshold
    return votes[y].mean() + (~votes[~y]).mean() - 1


@given(
    bona=st.lists(st.floats(0, 1), min_size=2, max_size=8),
    cloned=st.lists(st.floats(0, 1), min_size=2, max_size=8),
    extra=st.floats(0, 1),
    extra_cloned=st.booleans(),
)
def test_adding_correct_example_never_lowers_j(bona, cloned, extra, extra_cloned):
    data = [(fv(linearity_stat=v), "bona_fide") for v in bona]
    data += [(fv(linearity_stat=v), "cloned") for v in cloned]
    try:
        t = calibrate(data, ["linearity_stat"])
    except CalibrationError:
        return
    j0 = t.rules["linearity_stat"].youden_j
    new = (fv(linearity_stat=extra), "cloned" if extra_cloned else "bona_fide")
    if t.rules["linearity_stat"].votes_cloned(extra) != extra_cloned:
        return  # only correctly classified additions are covered
    t2 = calibrate(data + [new], ["linearity_stat"])
    assert t2.rules["linearity_stat"].youden_j >= j0 - 1e-12
    assert _training_j(t2, data + [new], "linearity_stat") == pytest.approx(
        t2.rules["linearity_stat"].youden_j)


def test_thresholds_round_trip(tmp_path, suite):
    t = calibrate(suite, seed=7, date="2024-05-01")
    t.save(tmp_path / "t.json")
    doc = json.loads((tmp_path / "t.json").read_text())
    assert doc["schema_version"] == 1 and doc["fusion"] == "majority"
    assert doc["metadata"]["seed"] == 7 and doc["metadata"]["date"] == "2024-05-01"
    assert Thresholds.load(tmp_path / "t.json") == t


# -- classification ---------------------------------------------------------

RULES = {
    "linearity_stat": FeatureRule(0.5, "below", 1.0),
    "phase_flatness": FeatureRule(0.5, "below", 1.0),
    "mean_bicoherence": FeatureRule(0.2, "below", 1.0),
}


def test_classify_all_bona_fide_side():
    r = classify(fv(linearity_stat=1.0, phase_flatness=0.9, mean_bicoherence=0.3), Thresholds(RULES))
    assert r.verdict == "bona_fide" and r.fired_rules == []


def test_classify_all_cloned_side():
    r = classify(fv(linearity_stat=0.0, phase_flatness=0.1, mean_bicoherence=0.1), Thresholds(RULES))
    assert r.verdict == "cloned"
    assert sorted(r.fired_rules) == sorted(RULES)


def test_classify_majority_of_three():
    f = fv(linearity_stat=0.0, phase_flatness=0.1, mean_bicoherence=0.3)
    assert classify(f, Thresholds(RULES)).verdict == "cloned"


def test_classify_tie_is_bona_fide():
    two = {k: RULES[k] for k in ("linearity_stat", "phase_flatness")}
    r = classify(fv(linearity_stat=0.0, phase_flatness=0.9), Thresholds(two))
    assert r.fired_rules == ["linearity_stat"]
    assert r.verdict == "bona_fide"


def test_classify_is_pure():
    f = fv(linearity_stat=0.2)
    t = Thresholds(RULES, metadata={"config_digest": "abc"})
    assert classify(f, t) == classify(f, t)
    assert classify(f, t).config_digest == "abc"


def test_classify_needs_informative_rules():
    with pytest.raises(ValueError):
        classify(fv(), Thresholds({"linearity_stat": FeatureRule(0.5, "below", 0.0)}))
    with pytest.raises(ValueError):
        Thresholds(RULES, fusion="unanimous")


def test_end_to_end_amplitude_invariance(suite):
    t = calibrate(suite)
    for s in range(3):
        for make in (bonafide_surrogate, cloned_surrogate):
            x = make(SUITE_N, seed=100 + s)
            ref = classify(extract_features(x), t)
            for a in (0.25, 0.5, 2.0):
                got = classify(extract_features(x.scaled(a)), t)
                assert got.verdict == ref.verdict and got.fired_rules == ref.fired_rules


# -- manifests and evaluation -----------------------------------------------

HEADER = "path,label,condition,clone_source_count,sample_rate_hz\n"


def _wav(path, x):
    write_wav(x, path, normalize=True)
    return path.name


@pytest.fixture(scope="module")
def wavs(tmp_path_factory):
    d = tmp_path_factory.mktemp("wavs")
    names = {}
    for s in range(3):
        names[f"b{s}"] = _wav(d / f"b{s}.wav", bonafide_surrogate(SUITE_N, seed=200 + s))
        names[f"c{s}"] = _wav(d / f"c{s}.wav", cloned_surrogate(SUITE_N, seed=200 + s))
    return d, names


def test_read_manifest(tmp_path):
    (tmp_path / "m.csv").write_text(HEADER + "a.wav,Bona-Fide,gt,,16000\n/x/b.wav,morphed,m,1,48000\n")
    rows = read_manifest(tmp_path / "m.csv")
    assert rows[0].path == str(tmp_path / "a.wav") and rows[0].label == "bona_fide"
    assert rows[1].path == "/x/b.wav" and rows[1].label == "morphed"


@pytest.mark.parametrize(
    "text", ["path,label\nx.wav,cloned\n", HEADER + "x.wav,synthetic,c,1,16000\n"]
)
def test_read_manifest_errors(tmp_path, text):
    (tmp_path / "m.csv").write_text(text)
    with pytest.raises(ValueError):
        read_manifest(tmp_path / "m.csv")


def test_evaluate_accounting(wavs, suite, tmp_path):
    d, n = wavs
    lines = [
        f"{n['b0']},bona_fide,gt,,16000",
        f"{n['c0']},cloned,SEA,1,16000",
        f"{n['c1']},cloned,SEA,1,16000",
        "missing.wav,cloned,SEA,1,16000",
        f"{n['c2']},morphed,morph,,16000",
        f"{n['b1']},bona_fide,gt,,16000",
    ]
    (d / "m.csv").write_text(HEADER + "\n".join(lines) + "\n")
    manifest = read_manifest(d / "m.csv")
    rep = evaluate(manifest, calibrate(suite))
    assert [(r["condition"], r["clone_source_count"]) for r in rep.rows] == [
        ("gt", ""), ("SEA", "1"), ("morph", "")]
    assert sum(r["total"] for r in rep.rows) == len(manifest) - len(rep.excluded) == 5
    assert rep.excluded[0]["path"].endswith("missing.wav")
    sea = rep.rows[1]
    assert sea["n_excluded"] == 1 and sea["total"] == 2
    for r in rep.rows:
        assert r["detection_rate"] == pytest.approx(100.0 * r["correct"] / r["total"])
    c = rep.confusion
    assert c["tp"] + c["fn"] == 3 and c["tn"] + c["fp"] == 2  # morphed pooled with cloned
    assert rep.grid()["SEA"]["1"] == sea["detection_rate"]

    rep.to_json(tmp_path / "r.json")
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["schema_version"] == 1 and doc["confusion"] == c
    rep.to_csv(tmp_path / "r.csv")
    with open(tmp_path / "r.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 3


def test_evaluate_parallel_matches_serial(wavs, suite):
    d, n = wavs
    (d / "p.csv").write_text(HEADER + "".join(
        f"{n[k]},{'cloned' if k[0] == 'c' else 'bona_fide'},x,1,16000\n" for k in sorted(n)))
    manifest = read_manifest(d / "p.csv")
    t = calibrate(suite)
    assert evaluate(manifest, t, jobs=2).to_dict() == evaluate(manifest, t, jobs=1).to_dict()


TABLE_ONE = (
    [(f"{src}/{mode}", str(c), "cloned")
     for src in ("VCTK_t->VCTK_g", "LibriSpeech_t->VCTK_g") for mode in ("SEA", "WMA")
     for c in (1, 5, 10, 20, 50, 100)]
    + [(f"encoder/{ft}", str(c), "cloned") for ft in ("no_finetune", "finetune") for c in (1, 5, 10)]
)


@pytest.mark.slow
def test_table_one_shaped_manifest(wavs, suite):
    d, n = wavs
    rows = [f"{n['c0']},{lab},{cond},{c},16000" for cond, c, lab in TABLE_ONE for _ in range(4)]
    rows += [f"{n['c1']},morphed,morphed,,16000"] * 4
    rows += [f"{n['b0']},bona_fide,ground_truth,,16000"] * 10
    (d / "t1.csv").write_text(HEADER + "\n".join(rows) + "\n")
    manifest = read_manifest(d / "t1.csv")
    assert len(manifest) == 134
    rep = evaluate(manifest, calibrate(suite))
    grid = rep.grid()
    for src in ("VCTK_t->VCTK_g", "LibriSpeech_t->VCTK_g"):
        for mode in ("SEA", "WMA"):
            assert list(grid[f"{src}/{mode}"]) == ["1", "5", "10", "20", "50", "100"]
    assert sum(r["total"] for r in rep.rows) == 134
    assert all(r["total"] == 4 for r in rep.rows if r["condition"] != "ground_truth")
