import json
import math

import numpy as np
import pytest

from handpd.errors import DataError, ParameterError
from handpd.model import ModelConfig, ModelParams, init_params
from handpd.numkit import Rng
from handpd.signal import ManifestRow, SegmentationConfig
from handpd.synth import SynthConfig, generate_sequences
from handpd.train import (
    OptimizerState,
    TrainConfig,
    build_subject_data,
    cross_entropy,
    cross_validate,
    make_subject_folds,
    optimizer_step,
    splits_from_json,
    splits_to_json,
    train_model,
)


def test_cross_entropy_values():
    assert cross_entropy([0.25, 0.75], 1) == pytest.approx(-math.log(0.75), abs=1e-15)
    assert cross_entropy(np.array([[0.5, 0.5], [0.9, 0.1]]), [0, 0]) == pytest.approx(
        0.5 * (math.log(2) - math.log(0.9)), abs=1e-15
    )
    assert cross_entropy([1.0, 0.0], 1) == pytest.approx(-math.log(1e-12))


def test_cross_entropy_rejects_bad_distributions():
    with pytest.raises(DataError):
        cross_entropy([0.7, 0.7], 0)
    with pytest.raises(DataError):
        cross_entropy([1.5, -0.5], 0)


def test_adam_steps_match_hand_computation():
    cfg = TrainConfig(learning_rate=0.1)
    p = ModelParams({"w": np.array([1.0, -2.0])})
    st = OptimizerState()
    g1, g2 = np.array([0.5, -4.0]), np.array([1.0, 2.0])
    optimizer_step(p, ModelParams({"w": g1}), st, cfg)
    # first bias-corrected step moves every weight by lr * g / (|g| + eps)
    np.testing.assert_allclose(p["w"], [1.0 - 0.1 * 0.5 / (0.5 + 1e-8), -2.0 + 0.1 * 4 / (4 + 1e-8)], rtol=1e-14)
    before = p["w"].copy()
    optimizer_step(p, ModelParams({"w": g2}), st, cfg)
    m = 0.9 * 0.1 * g1 + 0.1 * g2
    v = 0.999 * 0.001 * g1**2 + 0.001 * g2**2
    mh, vh = m / (1 - 0.9**2), v / (1 - 0.999**2)
    np.testing.assert_allclose(p["w"], before - 0.1 * mh / (np.sqrt(vh) + 1e-8), rtol=1e-13)
    assert st.step == 2


def test_sgd_step():
    cfg = TrainConfig(optimizer="sgd", learning_rate=0.5)
    p = ModelParams({"w": np.array([1.0])})
    optimizer_step(p, ModelParams({"w": np.array([2.0])}), OptimizerState(), cfg)
    assert p["w"][0] == 0.0


def test_train_config_validation():
    for bad in (dict(epochs=0), dict(batch_size=0), dict(learning_rate=-1), dict(optimizer="rmsprop"), dict(folds=1)):
        with pytest.raises(ParameterError):
            TrainConfig(**bad)


def rows_for(n_pd, n_hc):
    return [ManifestRow(f"pd{i}", "PD", "spiral", None) for i in range(n_pd)] + [
        ManifestRow(f"hc{i}", "HC", "spiral", None) for i in range(n_hc)
    ]


@pytest.mark.parametrize("n_pd,n_hc,k", [(15, 15, 5), (37, 38, 5), (7, 11, 3)])
def test_folds_partition_and_stratify(n_pd, n_hc, k):
    rows = rows_for(n_pd, n_hc)
    splits = make_subject_folds(rows, k, seed=4)
    tests = [s for sp in splits for s in sp.test_subjects]
    assert sorted(tests) == sorted(r.subject_id for r in rows)
    for sp in splits:
        assert not set(sp.train_subjects) & set(sp.test_subjects)
        assert len(sp.train_subjects) + len(sp.test_subjects) == len(rows)
        n_pd_test = sum(s.startswith("pd") for s in sp.test_subjects)
        assert abs(n_pd_test - n_pd / k) < 1
    sizes = [len(sp.test_subjects) for sp in splits]
    assert max(sizes) - min(sizes) <= 1
    assert splits_to_json(make_subject_folds(rows, k, seed=4)) == splits_to_json(splits)
    assert splits_to_json(make_subject_folds(rows, k, seed=5)) != splits_to_json(splits)


def test_folds_need_enough_subjects():
    with pytest.raises(DataError):
        make_subject_folds(rows_for(3, 10), 5, 0)


def test_multi_task_subject_stays_in_one_fold():
    rows = rows_for(5, 5) + [ManifestRow("pd0", "PD", "words", None)]
    splits = make_subject_folds(rows, 5, 0)
    assert sum("pd0" in sp.test_subjects for sp in splits) == 1


def test_split_json_round_trip():
    splits = make_subject_folds(rows_for(5, 5), 5, 1)
    assert splits_from_json(json.loads(json.dumps(splits_to_json(splits)))) == splits


def small_problem(tremor=0.4, n=5, duration=2.0):
    seqs = generate_sequences(SynthConfig(n_subjects_per_class=n, duration=duration, tremor_amp_pd=tremor))
    rows = [ManifestRow(s.subject_id, s.label, s.task, None) for s in seqs]
    return rows, {s.subject_id: s for s in seqs}


MC = ModelConfig(window=32, lstm_hidden=8, conv1_filters=4, conv2_filters=4, kernel=3, conv_stride=1)
SEG = SegmentationConfig(32, 16)


def test_loss_decreases_by_epoch_five():
    rows, seqs = small_problem()
    data = build_subject_data(rows, SEG, seqs)
    split = make_subject_folds(rows, 5, 0)[0]
    _, rec = train_model(data, split, MC, TrainConfig(epochs=5, batch_size=16, learning_rate=3e-3))
    assert rec["epoch_loss"][4] <= rec["epoch_loss"][0]
    assert rec["n_train_patches"] == sum(len(data[s].patches) for s in split.train_subjects)


def test_train_rejects_single_class_training_set():
    rows, seqs = small_problem()
    data = build_subject_data(rows, SEG, seqs)
    from handpd.train import FoldSplit

    bad = FoldSplit(0, [r.subject_id for r in rows if r.label == "PD"], ["hc000"])
    with pytest.raises(DataError):
        train_model(data, bad, MC, TrainConfig(epochs=1))


def test_cross_validate_outputs(tmp_path):
    rows, seqs = small_problem()
    seen = []
    report, params, splits = cross_validate(
        rows, SEG, MC, TrainConfig(epochs=1, batch_size=32), 0.5, tmp_path, lambda k, ids: seen.append(k), seqs
    )
    assert len(params) == 5 and len(report.folds) == 5
    assert {p.name for p in tmp_path.iterdir()} >= {f"fold{k}.lcnn" for k in range(5)} | {"report.json", "timing.json"}
    body = json.loads((tmp_path / "report.json").read_text())
    assert body["config"]["train"]["epochs"] == 1 and body["seed"] == 0
    assert "wall_clock" not in body
    assert set(seen) == set(range(5))
    total = sum(f["metrics"]["tp"] + f["metrics"]["tn"] + f["metrics"]["fp"] + f["metrics"]["fn"] for f in body["folds"])
    assert total == len(rows)


@pytest.mark.parametrize("optimizer", ["adam", "sgd"])
def test_zero_learning_rate_leaves_initial_weights(optimizer):
    rows, seqs = small_problem()
    data = build_subject_data(rows, SEG, seqs)
    split = make_subject_folds(rows, 5, 0)[0]
    tc = TrainConfig(epochs=1, batch_size=16, learning_rate=0.0, optimizer=optimizer)
    params, _ = train_model(data, split, MC, tc, Rng(9))
    start = init_params(MC, Rng(9).spawn(3)[0])
    for name in start.tensors:
        np.testing.assert_array_equal(params[name], start[name])
