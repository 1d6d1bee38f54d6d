"""Loss, optimizers, subject-level folds and the cross-validation loop."""
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import infer, metrics
from .errors import DataError, ParameterError
from .model import init_params, model_backward, model_forward, save_checkpoint
from .numkit import Rng
from .signal import LABELS, load_sequence, sequence_patches

_PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 8
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    folds: int = 5
    class_weighting: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise ParameterError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ParameterError("batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ParameterError("learning_rate must be non-negative")
        if self.optimizer not in ("adam", "sgd"):
            raise ParameterError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.folds < 2:
            raise ParameterError("folds must be >= 2")

    def to_dict(self):
        return asdict(self)


@dataclass
class FoldSplit:
    fold_index: int
    train_subjects: list
    test_subjects: list


@dataclass
class OptimizerState:
    step: int = 0
    m: object = None
    v: object = None


def cross_entropy(probs, target):
    """-log p[target] with p floored at 1e-12; batched inputs give the mean."""
    p = np.asarray(probs, dtype=np.float64)
    pb = p[None] if p.ndim == 1 else p
    if np.any(pb < -1e-12) or np.any(np.abs(pb.sum(axis=1) - 1.0) > 1e-9):
        raise DataError("probabilities must be non-negative and sum to 1")
    t = np.broadcast_to(np.asarray(target, dtype=np.int64), (len(pb),))
    picked = pb[np.arange(len(pb)), t]
    return float(np.mean(-np.log(np.maximum(picked, _PROB_FLOOR))))


def optimizer_step(params, grads, state, cfg):
    """In-place Adam (bias-corrected) or plain SGD update; returns (params, state)."""
    lr = cfg.learning_rate
    if cfg.optimizer == "sgd":
        for k, g in grads.items():
            params[k] -= lr * g
        return params, state
    if state.m is None:
        state.m = params.zeros_like()
        state.v = params.zeros_like()
    state.step += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for k, g in grads.items():
        m = state.m[k]
        v = state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        params[k] -= lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
    return params, state


def make_subject_folds(rows, folds, seed):
    """Stratified, subject-disjoint folds; deterministic in ``seed``.

    ``rows`` need ``subject_id`` and ``label``. Several rows may share a
    subject (several tasks); the subject keeps its first label.
    """
    label_of = {}
    for r in rows:
        label_of.setdefault(r.subject_id, r.label)
    rng = Rng(seed)
    test = [[] for _ in range(folds)]
    start = 0
    for label in ("PD", "HC"):
        subjects = sorted(s for s, lab in label_of.items() if lab == label)
        if len(subjects) < folds:
            raise DataError(f"class {label} has {len(subjects)} subjects, fewer than {folds} folds")
        order = rng.permutation(len(subjects))
        for i, j in enumerate(order):
            # continue the round-robin where the previous class stopped so fold sizes stay level
            test[(start + i) % folds].append(subjects[j])
        start = (start + len(subjects)) % folds
    everyone = sorted(label_of)
    splits = []
    for k in range(folds):
        held = set(test[k])
        splits.append(FoldSplit(k, [s for s in everyone if s not in held], sorted(held)))
    return splits


@dataclass
class SubjectData:
    subject_id: str
    label: str
    patches: np.ndarray  # (N, w, 5)


def build_subject_data(rows, seg_cfg, sequences=None):
    """Preprocess and segment every manifest row, grouped by subject."""
    grouped = {}
    for r in rows:
        seq = sequences[r.subject_id] if sequences is not None else load_sequence(r.path, r.extra.get("format", "dwt"))
        x = sequence_patches(seq, seg_cfg)
        if r.subject_id in grouped:
            prev = grouped[r.subject_id]
            prev.patches = np.concatenate([prev.patches, x])
        else:
            grouped[r.subject_id] = SubjectData(r.subject_id, r.label, x)
    return grouped


def _stack(data, subjects):
    xs, ys, owners = [], [], []
    for sid in subjects:
        d = data[sid]
        xs.append(d.patches)
        ys.append(np.full(len(d.patches), LABELS.index(d.label)))
        owners.extend([sid] * len(d.patches))
    return np.concatenate(xs), np.concatenate(ys), np.array(owners)


def train_model(data, split, mcfg, tcfg, rng=None, observer=None, alpha=0.5):
    """Train on the split's training subjects and vote on its test subjects.

    ``observer(subject_ids)`` is called with the owners of every minibatch
    before its gradient step. Returns ``(params, fold_record)``.
    """
    if not split.train_subjects or not split.test_subjects:
        raise DataError(f"fold {split.fold_index} has an empty train or test set")
    train_labels = {data[s].label for s in split.train_subjects}
    for lab in LABELS:
        if lab not in train_labels:
            raise DataError(f"fold {split.fold_index}: no {lab} subjects in the training set")
    rng = rng if rng is not None else Rng(tcfg.seed)
    init_rng, shuffle_rng, drop_rng = rng.spawn(3)
    params = init_params(mcfg, init_rng)
    x, y, owners = _stack(data, split.train_subjects)
    weights = None
    if tcfg.class_weighting:
        counts = np.bincount(y, minlength=len(LABELS)).astype(float)
        weights = (len(y) / (len(LABELS) * counts))[y]
    state = OptimizerState()
    epoch_loss = []
    n = len(y)
    for _ in range(tcfg.epochs):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for s in range(0, n, tcfg.batch_size):
            idx = order[s : s + tcfg.batch_size]
            if observer is not None:
                observer(owners[idx])
            probs, cache = model_forward(x[idx], params, mcfg, training=True, rng=drop_rng)
            total += cross_entropy(probs, y[idx]) * len(idx)
            grads = model_backward(cache, y[idx], params, None if weights is None else weights[idx])
            optimizer_step(params, grads, state, tcfg)
        epoch_loss.append(total / n)
    test_rows = [_Row(s, data[s].label) for s in split.test_subjects]
    cm = metrics.ConfusionMatrix()
    votes = []
    for r in test_rows:
        labels, _ = infer.predict_patches(data[r.subject_id].patches, params, mcfg)
        v = infer.majority_vote(labels, alpha, r.subject_id)
        votes.append(v)
        cm.add(r.label == "PD", v.predicted == "PD")
    record = {
        "fold": split.fold_index,
        "train_subjects": list(split.train_subjects),
        "test_subjects": list(split.test_subjects),
        "n_train_patches": int(n),
        "epoch_loss": epoch_loss,
        "metrics": metrics.to_jsonable(metrics.summarize(cm)),
        "votes": [infer.vote_to_dict(v) for v in votes],
    }
    return params, record


@dataclass
class _Row:
    subject_id: str
    label: str


@dataclass
class TrainReport:
    config: dict
    seed: int
    folds: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    wall_clock: dict = field(default_factory=dict)

    def to_json(self):
        """Deterministic part of the report (wall-clock lives in timing.json)."""
        body = {"config": self.config, "seed": self.seed, "folds": self.folds, "summary": self.summary}
        return json.dumps(body, indent=2, sort_keys=True) + "\n"


def cross_validate(rows, seg_cfg, mcfg, tcfg, alpha=0.5, out_dir=None, observer=None, sequences=None, log=None):
    """Five-fold (``tcfg.folds``) subject-level training and voting evaluation.

    Writes ``fold{k}.lcnn``, ``report.json`` and ``timing.json`` to
    ``out_dir`` when given. Returns ``(report, fold_params, splits)``.
    """
    t_start = time.perf_counter()
    splits = make_subject_folds(rows, tcfg.folds, tcfg.seed)
    data = build_subject_data(rows, seg_cfg, sequences)
    root = Rng(tcfg.seed)
    fold_rngs = root.spawn(len(splits))
    report = TrainReport(
        config={"segmentation": asdict(seg_cfg), "model": mcfg.to_dict(), "train": tcfg.to_dict(), "alpha": alpha},
        seed=tcfg.seed,
    )
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    fold_params = []
    total_cm = metrics.ConfusionMatrix()
    for split, frng in zip(splits, fold_rngs):
        t0 = time.perf_counter()
        obs = None
        if observer is not None:
            def obs(ids, _k=split.fold_index):
                observer(_k, ids)
        params, rec = train_model(data, split, mcfg, tcfg, frng, obs, alpha)
        fold_params.append(params)
        report.folds.append(rec)
        m = rec["metrics"]
        total_cm += metrics.ConfusionMatrix(m["tp"], m["tn"], m["fp"], m["fn"])
        report.wall_clock[f"fold{split.fold_index}"] = time.perf_counter() - t0
        if out is not None:
            save_checkpoint(params, mcfg, out / f"fold{split.fold_index}.lcnn")
        if log is not None:
            log(f"fold {split.fold_index}: loss {rec['epoch_loss'][0]:.4f} -> {rec['epoch_loss'][-1]:.4f}; "
                + metrics.format_row(metrics.summarize(metrics.ConfusionMatrix(m["tp"], m["tn"], m["fp"], m["fn"]))))
    pooled = metrics.summarize(total_cm)
    fold_acc = [f["metrics"]["accuracy"] for f in report.folds]
    fold_mcc = [f["metrics"]["mcc"] for f in report.folds]
    report.summary = {
        "pooled": metrics.to_jsonable(pooled),
        "mean_fold_accuracy": float(np.mean(fold_acc)),
        "mean_fold_mcc": _mean_defined(fold_mcc),
    }
    report.wall_clock["total"] = time.perf_counter() - t_start
    if out is not None:
        (out / "report.json").write_text(report.to_json(), encoding="utf-8")
        (out / "timing.json").write_text(json.dumps(report.wall_clock, indent=2) + "\n", encoding="utf-8")
    return report, fold_params, splits


def _mean_defined(values):
    vals = [v for v in values if isinstance(v, (int, float))]
    if not vals:
        return "undefined (no fold has a defined value)"
    return float(np.mean(vals))


def splits_to_json(splits):
    return [asdict(s) for s in splits]


def splits_from_json(items):
    return [FoldSplit(d["fold_index"], list(d["train_subjects"]), list(d["test_subjects"])) for d in items]

