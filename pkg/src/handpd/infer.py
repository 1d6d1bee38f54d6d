"""Sequence-level diagnosis by majority vote over patch predictions.

The voting rule counts patches predicted PD: r = (#PD) / N and the sequence
is called PD when r >= alpha. With true labels available this is the same
decision as counting patches that agree with the label (at alpha = 0.5 for
two classes), but it needs no label, so it also works on new recordings.
"""
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import metrics
from .errors import DataError, ParameterError, ProtocolError, ShapeError, StageError
from .model import load_checkpoint, predict_proba
from .signal import LABELS, Patch, load_sequence, sequence_patches

PD = 1
HC = 0


@dataclass
class VoteResult:
    subject_id: str
    n_patches: int
    pd_fraction: float
    threshold: float
    predicted: str


@dataclass
class Diagnosis:
    vote: VoteResult
    timings: dict  # seconds: loading, processing, model, total

    def to_record(self):
        rec = {
            "subject_id": self.vote.subject_id,
            "predicted": self.vote.predicted,
            "r": round(self.vote.pd_fraction, 6),
            "n_patches": self.vote.n_patches,
            "alpha": self.vote.threshold,
        }
        rec.update({k: round(v, 6) for k, v in self.timings.items()})
        return rec


def _as_stack(patches):
    if isinstance(patches, np.ndarray):
        return patches
    if len(patches) == 0:
        return np.zeros((0, 0, 0))
    return np.stack([p.values if isinstance(p, Patch) else np.asarray(p) for p in patches])


def predict_patches(patches, params, cfg):
    """Argmax class per patch (0 = HC, 1 = PD) and the probabilities."""
    x = _as_stack(patches)
    if len(x) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros((0, cfg.num_classes))
    if x.shape[1] != cfg.window:
        raise ShapeError(f"patch width {x.shape[1]} does not match model window {cfg.window}")
    probs = predict_proba(x, params, cfg)
    return probs.argmax(axis=1), probs


def _is_pd(label):
    if isinstance(label, str):
        if label not in LABELS:
            raise DataError(f"unknown label {label!r}")
        return label == "PD"
    return int(label) == PD


def majority_vote(labels, alpha=0.5, subject_id=""):
    if not 0.0 < alpha < 1.0:
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")
    labels = list(labels)
    if not labels:
        raise DataError(f"no patch predictions to vote on for {subject_id or 'sequence'}")
    n_pd = sum(1 for lab in labels if _is_pd(lab))
    r = n_pd / len(labels)
    return VoteResult(subject_id, len(labels), r, alpha, "PD" if r >= alpha else "HC")


def _load_model(checkpoint):
    if isinstance(checkpoint, (str, Path)):
        return load_checkpoint(checkpoint)
    return checkpoint


def diagnose_sequence(path, checkpoint, seg_cfg, alpha=0.5, format="dwt", **meta):
    """Load, preprocess, segment, predict and vote on one recording, timing each stage.

    ``checkpoint`` is a path or a ``(params, ModelConfig)`` pair. Timings
    cover the work done here; a checkpoint given as a path is read before
    the clock starts.
    """
    params, cfg = _load_model(checkpoint)
    if cfg.window != seg_cfg.window_size:
        raise ShapeError(
            f"checkpoint was trained with window {cfg.window}, configured window is {seg_cfg.window_size}"
        )
    t0 = time.perf_counter()
    try:
        seq = load_sequence(path, format, **meta)
    except Exception as exc:
        raise StageError("loading", exc) from exc
    t1 = time.perf_counter()
    try:
        x = sequence_patches(seq, seg_cfg)
    except Exception as exc:
        raise StageError("processing", exc) from exc
    t2 = time.perf_counter()
    try:
        labels, _ = predict_patches(x, params, cfg)
        vote = majority_vote(labels, alpha, seq.subject_id)
    except Exception as exc:
        raise StageError("model", exc) from exc
    t3 = time.perf_counter()
    timings = {"loading": t1 - t0, "processing": t2 - t1, "model": t3 - t2, "total": t3 - t0}
    return Diagnosis(vote, timings)


def subject_fractions(rows, models, splits, seg_cfg, sequences=None):
    """PD-fraction of every subject under the fold model that held it out.

    ``models[k]`` is the ``(params, cfg)`` pair trained for ``splits[k]``;
    ``sequences`` optionally maps subject_id -> RawSequence to skip file IO.
    Returns ``{subject_id: (true_label, r, n_patches)}`` in manifest order.
    """
    if len(models) != len(splits):
        raise ProtocolError(f"{len(models)} fold models for {len(splits)} folds")
    owner = {}
    for k, split in enumerate(splits):
        for sid in split.test_subjects:
            if sid in owner:
                raise ProtocolError(f"subject {sid} is in the test set of folds {owner[sid]} and {k}")
            owner[sid] = k
    missing = [row.subject_id for row in rows if row.subject_id not in owner]
    if missing:
        raise ProtocolError(f"subject {missing[0]} is not in any test fold")
    out = {}
    for row in rows:
        params, cfg = _load_model(models[owner[row.subject_id]])
        if sequences is not None and row.subject_id in sequences:
            seq = sequences[row.subject_id]
        else:
            seq = load_sequence(row.path, row.extra.get("format", "dwt"))
        labels, _ = predict_patches(sequence_patches(seq, seg_cfg), params, cfg)
        out[row.subject_id] = (row.label, float(np.mean(labels == PD)), len(labels))
    return out


def confusion_at(fractions, alpha):
    cm = metrics.ConfusionMatrix()
    for label, r, _ in fractions.values():
        cm.add(label == "PD", r >= alpha)
    return cm


def evaluate_dataset(rows, models, splits, seg_cfg, alpha=0.5, sequences=None):
    """Sequence-level confusion matrix and metrics over all cross-validated subjects."""
    fr = subject_fractions(rows, models, splits, seg_cfg, sequences)
    cm = confusion_at(fr, alpha)
    votes = [
        VoteResult(sid, n, r, alpha, "PD" if r >= alpha else "HC") for sid, (_, r, n) in fr.items()
    ]
    return cm, metrics.summarize(cm), votes


def alpha_sweep(fractions, alphas):
    """Metric rows for each threshold, reusing one set of patch predictions."""
    rows = []
    for a in alphas:
        cm = confusion_at(fractions, a)
        s = metrics.summarize(cm)
        s["alpha"] = a
        s["n_predicted_pd"] = cm.tp + cm.fp
        rows.append(s)
    return rows


def vote_to_dict(v):
    return asdict(v)
