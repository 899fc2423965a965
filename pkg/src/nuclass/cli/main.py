"""Command-line entry point: gen, train, decode, eval, run, describe."""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from ..autodiff import ConfigError
from ..decode import decode_dataset, format_scores
from ..detsim import CLASSES, DetectorGeometry, GenerationPlan, class_index, generate_dataset, read_dataset
from ..evalx import emit_report, evaluate_model, generalization_eval
from ..fileio import atomic_write_text
from ..model import ModelConfig, build_model, count_parameters, desk_config
from ..trainer import TrainConfig, fit_arrays, load_checkpoint, save_checkpoint, split_dataset
from .config import ConfigValidationError, default_config, load_config

OUTPUT_ROOT_ENV = "NUCLASS_OUTPUT_ROOT"
DEFAULT_ROOT = "runs"


class StageError(RuntimeError):
    def __init__(self, stage, exc):
        super().__init__(f"stage {stage} failed: {type(exc).__name__}: {exc}")
        self.stage = stage


def _floats(text):
    return tuple(float(x) for x in text.split(","))


def _log(msg):
    print(msg, file=sys.stderr, flush=True)


# ---------------------------------------------------------------- stages


def stage_gen(plan: GenerationPlan, out, threads=1):
    t0 = time.perf_counter()
    summary = generate_dataset(plan, out, threads=threads)
    _log(f"gen: {summary['n_events']} events {summary['class_counts']} "
         f"scale={summary['norm_scale']:.6g} in {time.perf_counter() - t0:.1f}s -> {out}")
    return summary


def stage_train(data_dir, model_config: ModelConfig, train_config: TrainConfig, out,
                history_path=None, echo=False):
    ds = read_dataset(data_dir)
    X, y = ds.X, ds.y
    if X.shape[-1] != model_config.input_size:
        raise ConfigError(f"dataset images are {X.shape[-1]} px, model expects "
                          f"{model_config.input_size}")
    tr, va, *_ = split_dataset(y, train_config.fractions, train_config.seed)
    model = build_model(model_config, dtype=np.dtype(train_config.dtype))
    lines = []

    def on_epoch(rec):
        line = json.dumps(rec.__dict__, sort_keys=True)
        lines.append(line)
        if echo:
            print(line, flush=True)
        _log(f"train: epoch {rec.epoch} train_loss={rec.train_loss:.5f} "
             f"val_loss={rec.val_loss:.5f} val_acc={rec.val_accuracy:.4f} ({rec.seconds:.1f}s)")

    model, history = fit_arrays(model, X[tr], y[tr], X[va], y[va], train_config,
                                on_epoch=on_epoch)
    extra = {"train": train_config.to_dict(), "best_epoch": history.best_epoch,
             "stop_epoch": history.stop_epoch, "stop_reason": history.stop_reason}
    save_checkpoint(model, out, extra)
    history_path = history_path or str(out) + ".history.jsonl"
    atomic_write_text(history_path, "\n".join(lines) + ("\n" if lines else ""))
    _log(f"train: stopped at epoch {history.stop_epoch} ({history.stop_reason}), "
         f"best epoch {history.best_epoch} -> {out}")
    return model, history


def _select(ds, which, extra, fractions=None, seed=None):
    if which == "all":
        return np.arange(len(ds))
    tcfg = extra.get("train", {})
    fractions = fractions or tuple(tcfg.get("fractions", (0.9, 0.05, 0.05)))
    seed = tcfg.get("seed", 0) if seed is None else seed
    parts = split_dataset(ds.y, fractions, seed)
    names = ("train", "val", "test")
    return np.asarray(parts[names.index(which)])


def stage_decode(model, ds, idx, temperature, beam, out):
    X = ds.X[idx]
    records = decode_dataset(model, X, ds.y[idx], ds.event_ids[idx], temperature, beam)
    atomic_write_text(out, format_scores(records))
    agree = np.mean([r.predicted == r.truth for r in records])
    _log(f"decode: {len(records)} events, accuracy {agree:.4f} -> {out}")
    return records


def stage_eval(model, ds, idx, factors, mode, out):
    X, y, ids = ds.X[idx], ds.y[idx], ds.event_ids[idx]
    reports = {}
    for f in factors:
        report = (evaluate_model(model, X, y, ids) if f == 1
                  else generalization_eval(model, X, y, f, mode, ids))
        emit_report(report, Path(out) / f"factor{f}")
        reports[f] = report
        _log(f"eval: factor {f}: accuracy {report.accuracy:.4f} macro AUC {report.macro_auc:.4f}")
    if 1 in reports:
        for f, r in reports.items():
            if f != 1:
                _log(f"eval: accuracy delta factor {f} vs 1: {r.accuracy - reports[1].accuracy:+.4f}")
    return reports


# ---------------------------------------------------------------- commands


def cmd_gen(a):
    classes = tuple(CLASSES[class_index(c)] for c in a.classes.split(","))
    priors = _floats(a.priors)
    if len(priors) != len(classes):
        raise ConfigError(f"{len(priors)} priors for {len(classes)} classes")
    plan = GenerationPlan(seed=a.seed, n_events=a.events, classes=classes, priors=priors,
                          geometry=DetectorGeometry(image_size=a.image_size),
                          n_calibration=a.calibration_events)
    stage_gen(plan, a.out, a.threads)


def cmd_train(a):
    if a.arch:
        model_cfg = ModelConfig.from_dict(json.loads(Path(a.arch).read_text()))
    else:
        meta = json.loads((Path(a.data) / "dataset.json").read_text())
        model_cfg = desk_config(input_size=meta["geometry"]["image_size"])
    model_cfg = model_cfg.replace(seed=a.seed)
    tcfg = TrainConfig(lr=a.lr, batch_size=a.batch, max_epochs=a.max_epochs, patience=a.patience,
                       fractions=_floats(a.fractions), seed=a.seed, dtype=a.dtype)
    stage_train(a.data, model_cfg, tcfg, a.out, a.history, echo=True)


def cmd_decode(a):
    model, extra = load_checkpoint(a.model, with_extra=True)
    ds = read_dataset(a.data)
    idx = _select(ds, a.split, extra)
    stage_decode(model, ds, idx, a.temperature, a.beam, a.out)


def cmd_eval(a):
    model, extra = load_checkpoint(a.model, with_extra=True)
    ds = read_dataset(a.data)
    idx = _select(ds, a.split, extra)
    stage_eval(model, ds, idx, [1] + [f for f in a.downsample if f != 1], a.mode, a.out)


def describe_text(cfg):
    from ..detsim import apportion
    mcfg = cfg.model_config()
    n = cfg.dataset.events
    sizes = apportion(n, cfg.train.fractions)
    plan = cfg.generation_plan()
    lines = [
        f"run directory name : {cfg.run_name()}",
        f"seed               : {cfg.seed}",
        f"events             : {n} ({', '.join(plan.classes)}; priors {list(plan.priors)})",
        f"class counts       : {dict(zip(plan.classes, apportion(n, plan.priors).tolist()))}",
        f"split sizes        : train {sizes[0]} / val {sizes[1]} / test {sizes[2]}",
        f"image size         : {cfg.dataset.image_size}",
        f"model input size   : {mcfg.input_size}",
        f"model preset       : {cfg.model.preset} (shared branch: {mcfg.shared_branch})",
        f"parameter count    : {count_parameters(mcfg)}",
        f"train              : lr {cfg.train.lr:g}, batch {cfg.train.batch_size}, "
        f"max epochs {cfg.train.max_epochs}, patience {cfg.train.patience}, dtype {cfg.train.dtype}",
        f"decode             : temperature {cfg.decode.temperature:g}, beam {cfg.decode.beam}",
        f"eval               : downsample {list(cfg.eval.downsample)} ({cfg.eval.mode})",
        "resolved config    :",
        json.dumps(cfg.to_dict(), indent=2, sort_keys=True),
    ]
    return "\n".join(lines)


def cmd_describe(a):
    cfg = load_config(a.config) if a.config else default_config()
    print(describe_text(cfg))


def output_root(arg):
    return Path(arg or os.environ.get(OUTPUT_ROOT_ENV) or DEFAULT_ROOT)


def run_pipeline(cfg, root, threads=1):
    """gen -> train -> decode -> eval under ``root/<run name>``; returns (dir, reports)."""
    out = Path(root) / cfg.run_name()
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "config.json", json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    data = out / "data"
    stages = {}
    try:
        stage_gen(cfg.generation_plan(), data, threads)
    except Exception as exc:
        raise StageError("gen", exc) from exc
    try:
        model, history = stage_train(data, cfg.model_config(), cfg.train, out / "model.ckpt",
                                     out / "history.jsonl")
    except Exception as exc:
        raise StageError("train", exc) from exc
    try:
        ds = read_dataset(data)
        test = np.asarray(split_dataset(ds.y, cfg.train.fractions, cfg.train.seed)[2])
        stage_decode(model, ds, test, cfg.decode.temperature, cfg.decode.beam, out / "scores.txt")
    except Exception as exc:
        raise StageError("decode", exc) from exc
    try:
        factors = [1] + [f for f in cfg.eval.downsample if f != 1]
        reports = stage_eval(model, ds, test, factors, cfg.eval.mode, out / "report")
    except Exception as exc:
        raise StageError("eval", exc) from exc
    summary = {f"factor{f}": r.scalars() for f, r in reports.items()}
    summary["train"] = {"stop_epoch": history.stop_epoch, "best_epoch": history.best_epoch,
                        "stop_reason": history.stop_reason}
    atomic_write_text(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    stages.update(reports)
    return out, stages


def cmd_run(a):
    cfg = load_config(a.config)  # validation happens before any directory is made
    out, _ = run_pipeline(cfg, output_root(a.out_root), a.threads)
    print(out)


def build_parser():
    p = argparse.ArgumentParser(prog="nuclass", description=__doc__,
                                formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--threads", type=int, default=1, help="cap on worker processes and BLAS threads")
    sub = p.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    g = sub.add_parser("gen", help="generate and render a dataset", formatter_class=fmt)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--events", type=int, default=3600)
    g.add_argument("--classes", default="nue_cc,numu_cc,nc")
    g.add_argument("--priors", default="1,1,1")
    g.add_argument("--image-size", type=int, default=64)
    g.add_argument("--calibration-events", type=int, default=1000)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train the classifier on a dataset", formatter_class=fmt)
    t.add_argument("--data", required=True)
    t.add_argument("--arch", help="JSON model config; default: desk architecture")
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--batch", type=int, default=16)
    t.add_argument("--max-epochs", type=int, default=300)
    t.add_argument("--patience", type=int, default=10)
    t.add_argument("--fractions", default="0.9,0.05,0.05")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--dtype", choices=("float64", "float32"), default="float64")
    t.add_argument("--history", help="history JSONL path; default: <out>.history.jsonl")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    split_help = "events to use; train/val/test reuse the checkpoint's split settings"
    d = sub.add_parser("decode", help="constrained decoding with class confidences",
                       formatter_class=fmt)
    d.add_argument("--model", required=True)
    d.add_argument("--data", required=True)
    d.add_argument("--temperature", type=float, default=5.0)
    d.add_argument("--beam", type=int, default=3)
    d.add_argument("--split", choices=("all", "train", "val", "test"), default="all",
                   help=split_help)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_decode)

    e = sub.add_parser("eval", help="metrics, ROC curves and the resolution test",
                       formatter_class=fmt)
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--downsample", type=int, nargs="+", choices=(1, 2, 4), default=[1])
    e.add_argument("--mode", choices=("rerender", "direct"), default="rerender")
    e.add_argument("--split", choices=("all", "train", "val", "test"), default="all",
                   help=split_help)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("run", help="full pipeline from an experiment config", formatter_class=fmt)
    r.add_argument("config")
    r.add_argument("--out-root", help=f"output root; else ${OUTPUT_ROOT_ENV}, else ./{DEFAULT_ROOT}")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("describe", help="print the resolved plan without running it",
                       formatter_class=fmt)
    s.add_argument("config", nargs="?")
    s.set_defaults(func=cmd_describe)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        _log("error: --threads must be >= 1")
        return 2
    try:
        with threadpool_limits(limits=args.threads):
            args.func(args)
    except ConfigValidationError as exc:
        _log(f"error: {exc}")
        return 2
    except StageError as exc:
        _log(f"error: {exc}")
        return 3
    except (ConfigError, ValueError, OSError) as exc:
        _log(f"error: {args.command}: {type(exc).__name__}: {exc}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
