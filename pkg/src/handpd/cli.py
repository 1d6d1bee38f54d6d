"""Command-line entry point: ``handpd {synth,train,eval,infer,count}``.

Settings resolve as built-in defaults < ``--config`` JSON file < flags, and
the effective configuration is written into every report.
"""
import argparse
import csv
import json
import sys
from dataclasses import asdict
from pathlib import Path

from . import infer, metrics
from .errors import HandPDError, UsageError
from .model import ModelConfig, complexity_report, count_params, load_checkpoint
from .signal import DIFF_MODES, SegmentationConfig, read_manifest
from .synth import SynthConfig, generate_dataset
from .train import TrainConfig, cross_validate, splits_from_json, splits_to_json

DEFAULTS = {
    "window": 128,
    "stride": 64,
    "alpha": 0.5,
    "diff_mode": "geometric",
    "epochs": TrainConfig.epochs,
    "lr": TrainConfig.learning_rate,
    "batch": TrainConfig.batch_size,
    "seed": 0,
    "folds": 5,
    "format": "dwt",
    "optimizer": "adam",
    "concat": True,
    "class_weighting": False,
}


def _parse_range(text):
    try:
        lo, hi, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise UsageError(f"--alpha-sweep expects lo:hi:step, got {text!r}") from None
    if step <= 0 or lo > hi:
        raise UsageError(f"--alpha-sweep {text!r}: need lo <= hi and step > 0")
    n = int(round((hi - lo) / step)) + 1
    vals = [round(lo + i * step, 10) for i in range(n)]
    return [v for v in vals if v <= hi + 1e-9]


def _parse_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--window-sweep expects a comma-separated list of integers, got {text!r}") from None


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of settings (flags override it)")
    common.add_argument("--data", help="dataset manifest CSV")
    common.add_argument("--out", help="output directory")
    common.add_argument("--window", type=int)
    common.add_argument("--stride", type=int)
    common.add_argument("--alpha", type=float)
    common.add_argument("--diff-mode", dest="diff_mode", choices=sorted(DIFF_MODES))
    common.add_argument("--epochs", type=int)
    common.add_argument("--lr", type=float)
    common.add_argument("--batch", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--folds", type=int)
    common.add_argument("--checkpoint", help="checkpoint file (infer) or training output directory (eval)")
    common.add_argument("--format", choices=["svc", "dwt"])
    common.add_argument("--optimizer", choices=["adam", "sgd"])
    common.add_argument("--no-concat", dest="concat", action="store_const", const=False)
    common.add_argument("--class-weighting", dest="class_weighting", action="store_const", const=True)
    common.add_argument("--quiet", action="store_true")

    p = argparse.ArgumentParser(prog="handpd", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic spiral dataset")
    s.add_argument("--subjects", type=int, help="subjects per class")
    s.add_argument("--tremor-amp-pd", dest="tremor_amp_pd", type=float)
    s.add_argument("--tremor-amp-hc", dest="tremor_amp_hc", type=float)
    s.add_argument("--duration", type=float)

    sub.add_parser("train", parents=[common], help="subject-level cross-validated training")

    e = sub.add_parser("eval", parents=[common], help="cross-validated metrics and sweeps")
    e.add_argument("--alpha-sweep", dest="alpha_sweep", help="lo:hi:step")
    e.add_argument("--window-sweep", dest="window_sweep", help="comma-separated window sizes (retrains)")

    i = sub.add_parser("infer", parents=[common], help="diagnose recordings with one checkpoint")
    i.add_argument("paths", nargs="*", help="recordings (or use --data)")

    sub.add_parser("count", parents=[common], help="parameter and FLOP report")
    return p


def resolve(args):
    """Merge defaults, config file and flags into one flat settings dict."""
    settings = dict(DEFAULTS)
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise UsageError(f"config file {path} does not exist")
        try:
            file_cfg = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path}: {exc}") from None
        unknown = set(file_cfg) - set(vars(args))
        if unknown:
            raise UsageError(f"config file has unknown keys: {sorted(unknown)}")
        settings.update({k.replace("-", "_"): v for k, v in file_cfg.items()})
    for k, v in vars(args).items():
        if v is not None and k not in ("config", "command", "paths", "quiet"):
            settings[k] = v
    settings["command"] = args.command
    settings["paths"] = getattr(args, "paths", [])
    settings["quiet"] = args.quiet
    return settings


def _seg(st):
    return SegmentationConfig(st["window"], st["stride"], st["diff_mode"])


def _model(st):
    return ModelConfig(window=st["window"], concat=st["concat"])


def _train(st):
    return TrainConfig(
        epochs=st["epochs"],
        batch_size=st["batch"],
        learning_rate=st["lr"],
        optimizer=st["optimizer"],
        seed=st["seed"],
        folds=st["folds"],
        class_weighting=st["class_weighting"],
    )


def _echo(st):
    return {k: v for k, v in st.items() if k not in ("quiet", "paths")}


def _require(st, *keys):
    for k in keys:
        if not st.get(k):
            raise UsageError(f"--{k.replace('_', '-')} is required for '{st['command']}'")


def _log(st):
    return (lambda msg: None) if st["quiet"] else (lambda msg: print(msg, file=sys.stderr))


def cmd_synth(st):
    _require(st, "out")
    overrides = {"seed": st["seed"]}
    for key, field in (("subjects", "n_subjects_per_class"), ("tremor_amp_pd", "tremor_amp_pd"),
                       ("tremor_amp_hc", "tremor_amp_hc"), ("duration", "duration")):
        if st.get(key) is not None:
            overrides[field] = st[key]
    cfg = SynthConfig(**overrides)
    manifest = generate_dataset(cfg, st["out"])
    (Path(st["out"]) / "synth_config.json").write_text(
        json.dumps({"synth": cfg.to_dict(), "run": _echo(st)}, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(manifest)


def cmd_train(st):
    _require(st, "data", "out")
    rows = read_manifest(st["data"])
    if st["format"] != "dwt":
        for r in rows:
            r.extra.setdefault("format", st["format"])
    report, _, splits = cross_validate(
        rows, _seg(st), _model(st), _train(st), st["alpha"], st["out"], log=_log(st)
    )
    out = Path(st["out"])
    (out / "splits.json").write_text(json.dumps(splits_to_json(splits), indent=2) + "\n", encoding="utf-8")
    (out / "run_config.json").write_text(json.dumps(_echo(st), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    pooled = report.summary["pooled"]
    print(f"mean fold accuracy {report.summary['mean_fold_accuracy']:.3f}  "
          f"pooled: {metrics.format_row(_restore(pooled))}")


def _restore(summary):
    return {k: (metrics.Undefined(v) if isinstance(v, str) else v) for k, v in summary.items()}


def _write_csv(path, rows, fields):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (str(v) if isinstance(v, metrics.Undefined) else v) for k, v in r.items()})


METRIC_FIELDS = ["tp", "tn", "fp", "fn", "accuracy", "recall", "f1", "mcc"]


def cmd_eval(st):
    _require(st, "data")
    if not st.get("checkpoint") and not st.get("window_sweep"):
        raise UsageError("eval needs --checkpoint <train output dir> and/or --window-sweep")
    if st.get("alpha_sweep") and not st.get("checkpoint"):
        raise UsageError("--alpha-sweep needs --checkpoint <train output dir>")
    alphas = _parse_range(st["alpha_sweep"]) if st.get("alpha_sweep") else None
    if alphas is not None and any(not 0 < a < 1 for a in alphas):
        raise UsageError("alpha-sweep values must lie in (0, 1)")
    rows = read_manifest(st["data"])
    out = Path(st["out"]) if st.get("out") else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    seg = _seg(st)
    result = {"config": _echo(st), "seed": st["seed"]}
    if st.get("window_sweep"):
        windows = _parse_list(st["window_sweep"])
        sweep = []
        for w in windows:
            st_w = dict(st, window=w)
            report, _, _ = cross_validate(rows, _seg(st_w), _model(st_w), _train(st_w), st["alpha"], log=_log(st))
            sweep.append({"window": w, **report.summary["pooled"]})
        result["window_sweep"] = sweep
        if out is not None:
            _write_csv(out / "window_sweep.csv", sweep, ["window"] + METRIC_FIELDS)
        for r in sweep:
            print(f"w={r['window']:<5d} {metrics.format_row(_restore(r))}")
    if st.get("checkpoint"):
        ckdir = Path(st["checkpoint"])
        split_file = ckdir / "splits.json"
        if not split_file.exists():
            raise UsageError(f"{ckdir} has no splits.json; pass the output directory of 'train'")
        splits = splits_from_json(json.loads(split_file.read_text(encoding="utf-8")))
        models = []
        for s in splits:
            params, cfg = load_checkpoint(ckdir / f"fold{s.fold_index}.lcnn")
            if cfg.window != seg.window_size:
                raise UsageError(f"fold {s.fold_index} checkpoint has window {cfg.window}, --window is {seg.window_size}")
            models.append((params, cfg))
        fractions = infer.subject_fractions(rows, models, splits, seg)
        cm = infer.confusion_at(fractions, st["alpha"])
        summary = metrics.summarize(cm)
        result["metrics"] = metrics.to_jsonable(summary)
        print(f"alpha={st['alpha']}  {metrics.format_row(summary)}")
        if alphas is not None:
            sweep = infer.alpha_sweep(fractions, alphas)
            result["alpha_sweep"] = [metrics.to_jsonable(r) for r in sweep]
            if out is not None:
                _write_csv(out / "alpha_sweep.csv", sweep, ["alpha", "n_predicted_pd"] + METRIC_FIELDS)
            for r in sweep:
                print(f"alpha={r['alpha']:.2f} pd={r['n_predicted_pd']:<3d} {metrics.format_row(r)}")
    if out is not None:
        (out / "eval_report.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_infer(st):
    _require(st, "checkpoint")
    params, cfg = load_checkpoint(st["checkpoint"])
    seg = _seg(st)
    if cfg.window != seg.window_size:
        raise UsageError(f"checkpoint was trained with window {cfg.window}, --window is {seg.window_size}")
    targets = [(Path(p), {}) for p in st["paths"]]
    if st.get("data"):
        targets += [(r.path, {}) for r in read_manifest(st["data"])]
    if not targets:
        raise UsageError("infer needs recordings as arguments or --data")
    records = []
    for path, meta in targets:
        d = infer.diagnose_sequence(path, (params, cfg), seg, st["alpha"], st["format"], **meta)
        rec = d.to_record()
        records.append(rec)
        print(json.dumps(rec))
    if st.get("out"):
        out = Path(st["out"])
        out.mkdir(parents=True, exist_ok=True)
        body = {"config": _echo(st), "seed": st["seed"], "diagnoses": records}
        (out / "diagnoses.json").write_text(json.dumps(body, indent=2) + "\n", encoding="utf-8")


def cmd_count(st):
    cfg = _model(st)
    print(complexity_report(cfg))
    if st.get("out"):
        out = Path(st["out"])
        out.mkdir(parents=True, exist_ok=True)
        body = {"config": _echo(st), "model": asdict(cfg), "params": count_params(cfg)}
        (out / "count.json").write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8")


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "infer": cmd_infer, "count": cmd_count}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        st = resolve(args)
        COMMANDS[st["command"]](st)
    except UsageError as exc:
        print(f"handpd: usage error: {exc}", file=sys.stderr)
        return 2
    except (HandPDError, OSError) as exc:
        print(f"handpd: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
