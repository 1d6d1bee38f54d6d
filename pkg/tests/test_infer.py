import itertools

import numpy as np
import pytest

from handpd.errors import DataError, ParameterError, ProtocolError, ShapeError, StageError
from handpd.infer import (
    alpha_sweep,
    confusion_at,
    diagnose_sequence,
    majority_vote,
    predict_patches,
    subject_fractions,
)
from handpd.model import ModelConfig, init_params, save_checkpoint
from handpd.numkit import Rng
from handpd.signal import ManifestRow, SegmentationConfig, write_sequence
from handpd.synth import SynthConfig, generate_spiral_sequence
from handpd.train import FoldSplit

CFG = ModelConfig(window=32, lstm_hidden=4, conv1_filters=2, conv2_filters=2, conv_stride=1)
SEG = SegmentationConfig(32, 16)


def test_vote_rule_and_boundary():
    assert majority_vote([1, 1, 0, 0]).predicted == "PD"  # r == alpha votes PD
    assert majority_vote([1, 0, 0]).predicted == "HC"
    assert majority_vote(["PD", "HC", "HC"], alpha=0.3).predicted == "PD"
    v = majority_vote([0, 1, 1, 1], 0.8, "s9")
    assert (v.subject_id, v.n_patches, v.pd_fraction, v.predicted) == ("s9", 4, 0.75, "HC")


def test_vote_validation():
    for a in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(ParameterError):
            majority_vote([1], a)
    with pytest.raises(DataError):
        majority_vote([])
    with pytest.raises(DataError):
        majority_vote(["maybe"])


def test_vote_matches_recount_small():
    for n in range(1, 7):
        for labels in itertools.product((0, 1), repeat=n):
            for a in (0.25, 0.5, 0.75):
                want = "PD" if sum(labels) >= a * n else "HC"
                assert majority_vote(labels, a).predicted == want


def test_predict_patches_width_mismatch():
    params = init_params(CFG, Rng(0))
    with pytest.raises(ShapeError):
        predict_patches(np.zeros((2, 16, 5)), params, CFG)
    labels, probs = predict_patches(np.zeros((0, 32, 5)), params, CFG)
    assert labels.shape == (0,) and probs.shape == (0, 2)


@pytest.fixture
def recording(tmp_path):
    seq = generate_spiral_sequence("PD", SynthConfig(), Rng(1), "pdx", length=500)
    p = tmp_path / "pdx.dwt"
    write_sequence(seq, p)
    ck = tmp_path / "m.lcnn"
    save_checkpoint(init_params(CFG, Rng(0)), CFG, ck)
    return p, ck


def test_diagnose_reports_all_stages(recording):
    path, ck = recording
    d = diagnose_sequence(path, ck, SEG, 0.5)
    assert set(d.timings) == {"loading", "processing", "model", "total"}
    parts = d.timings["loading"] + d.timings["processing"] + d.timings["model"]
    assert d.timings["total"] == pytest.approx(parts, rel=1e-9)
    rec = d.to_record()
    assert rec["subject_id"] == "pdx" and rec["n_patches"] == (500 - 32) // 16 + 1
    assert rec["predicted"] in ("PD", "HC")


def test_diagnose_errors(recording, tmp_path):
    path, ck = recording
    with pytest.raises(ShapeError):
        diagnose_sequence(path, ck, SegmentationConfig(64, 32))
    with pytest.raises(StageError) as e:
        diagnose_sequence(tmp_path / "missing.dwt", ck, SEG)
    assert e.value.stage == "loading"
    bad = tmp_path / "bad.dwt"
    bad.write_text("nonsense\n")
    with pytest.raises(StageError, match="loading"):
        diagnose_sequence(bad, ck, SEG)


def test_fraction_protocol_checks():
    rows = [ManifestRow("a", "PD", "t", None), ManifestRow("b", "HC", "t", None)]
    model = (init_params(CFG, Rng(0)), CFG)
    with pytest.raises(ProtocolError):
        subject_fractions(rows, [model], [FoldSplit(0, ["b"], ["a"]), FoldSplit(1, ["a"], ["b"])], SEG)
    with pytest.raises(ProtocolError, match="folds 0 and 1"):
        subject_fractions(rows, [model, model], [FoldSplit(0, ["b"], ["a"]), FoldSplit(1, [], ["a"])], SEG)
    with pytest.raises(ProtocolError, match="not in any test fold"):
        subject_fractions(rows, [model], [FoldSplit(0, ["b"], ["a"])], SEG)


def test_alpha_sweep_is_monotone():
    r = np.random.default_rng(0)
    fr = {f"s{i}": ("PD" if i % 2 else "HC", float(r.random()), 10) for i in range(30)}
    alphas = np.round(np.arange(0.05, 1.0, 0.05), 2)
    rows = alpha_sweep(fr, alphas)
    n = [row["n_predicted_pd"] for row in rows]
    assert all(a >= b for a, b in zip(n, n[1:]))
    assert rows[0]["alpha"] == alphas[0]
    cm = confusion_at(fr, 0.5)
    assert cm.total == 30
