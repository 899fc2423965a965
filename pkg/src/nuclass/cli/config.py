"""Experiment configuration files (JSON) with whole-file validation."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from ..autodiff import ConfigError
from ..detsim import (
    CLASSES,
    DetectorGeometry,
    GenerationPlan,
    GeneratorConfig,
    apportion,
    class_index,
)
from ..model import ModelConfig, desk_config, full_config
from ..trainer import DESK_LR, TrainConfig

DESK_FRACTIONS = (5 / 6, 1 / 12, 1 / 12)


class ConfigValidationError(ConfigError):
    """Every problem found in a config file, each with the line it was found on."""

    def __init__(self, problems, source="<config>"):
        self.problems = list(problems)
        self.source = str(source)
        lines = [f"{self.source}:{ln or '?'}: {where}: {msg}" for where, ln, msg in self.problems]
        super().__init__(f"{len(self.problems)} config problem(s):\n" + "\n".join(lines))


def key_lines(text):
    """Map dotted key paths ("train.lr") to 1-based line numbers in JSON text."""
    out = {}
    stack = []  # one entry per open container: key path (object) or None (array)
    pending = None
    i, line, n = 0, 1, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
        elif ch == '"':
            j = i + 1
            while j < n and text[j] != '"':
                j += 2 if text[j] == "\\" else 1
            s = text[i + 1:j]
            k = j + 1
            while k < n and text[k] in " \t\r\n":
                k += 1
            if k < n and text[k] == ":" and stack and stack[-1] is not None:
                pending = ".".join(p for p in (stack[-1], s) if p)
                out.setdefault(pending, line)
            i = j
        elif ch == "{":
            stack.append(pending if pending is not None else (stack[-1] if stack and stack[-1] else ""))
            pending = None
        elif ch == "[":
            stack.append(None)
            pending = None
        elif ch in "}]":
            if stack:
                stack.pop()
        elif ch == ",":
            pending = None
        i += 1
    return out


@dataclass(frozen=True)
class DatasetSection:
    events: int = 3600
    classes: tuple = ("nue_cc", "numu_cc", "nc")
    priors: tuple = (1.0, 1.0, 1.0)
    image_size: int = 64
    n_calibration: int = 1000
    percentile: float = 99.5
    geometry: dict = field(default_factory=dict)
    generator: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ModelSection:
    preset: str = "desk"
    overrides: dict = field(default_factory=dict)


@dataclass(frozen=True)
class DecodeSection:
    temperature: float = 5.0
    beam: int = 3


@dataclass(frozen=True)
class EvalSection:
    downsample: tuple = (1, 2)
    mode: str = "rerender"


SECTIONS = {"dataset": DatasetSection, "model": ModelSection, "decode": DecodeSection,
            "eval": EvalSection}
TOP_KEYS = ("seed", "dataset", "model", "train", "decode", "eval")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    dataset: DatasetSection
    model: ModelSection
    train: TrainConfig
    decode: DecodeSection
    eval: EvalSection

    def geometry(self):
        return DetectorGeometry(**dict(self.dataset.geometry, image_size=self.dataset.image_size))

    def generation_plan(self, n_events=None):
        return GenerationPlan(
            seed=self.seed,
            n_events=self.dataset.events if n_events is None else n_events,
            classes=tuple(CLASSES[class_index(c)] for c in self.dataset.classes),
            priors=tuple(float(p) for p in self.dataset.priors),
            generator=GeneratorConfig.from_dict(self.dataset.generator),
            geometry=self.geometry(), n_calibration=self.dataset.n_calibration,
            percentile=self.dataset.percentile)

    def model_config(self):
        preset = desk_config if self.model.preset == "desk" else full_config
        over = dict(self.model.overrides)
        over["input_size"] = self.dataset.image_size
        over.setdefault("seed", self.seed)
        return preset(**over)

    def to_dict(self):
        d = {"seed": self.seed}
        for name in ("dataset", "model", "decode", "eval"):
            sec = getattr(self, name)
            d[name] = {f.name: _plain(getattr(sec, f.name)) for f in fields(sec)}
        d["train"] = self.train.to_dict()
        return d

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def run_name(self):
        return f"seed{self.seed}-{self.config_hash()[:12]}"


def _plain(v):
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    return v


def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def build_config(raw: dict, lines=None, source="<config>") -> ExperimentConfig:
    """Validate a parsed config dict; raises ConfigValidationError listing every problem."""
    lines = lines or {}
    problems = []

    def bad(where, msg):
        problems.append((where, lines.get(where) or lines.get(where.rsplit(".", 1)[0]), msg))

    if not isinstance(raw, dict):
        raise ConfigValidationError([("<root>", 1, "config must be a JSON object")], source)
    for k in raw:
        if k not in TOP_KEYS:
            bad(k, f"unknown key {k!r}; allowed: {', '.join(TOP_KEYS)}")
    seed = raw.get("seed", 0)
    if not _is_int(seed) or seed < 0:
        bad("seed", f"must be a nonnegative integer, got {seed!r}")
        seed = 0

    parsed = {}
    for name, cls in SECTIONS.items():
        sec = raw.get(name, {})
        if not isinstance(sec, dict):
            bad(name, "must be an object")
            sec = {}
        known = {f.name for f in fields(cls)}
        for k in sec:
            if k not in known:
                bad(f"{name}.{k}", f"unknown key {k!r}; allowed: {', '.join(sorted(known))}")
        vals = {k: (tuple(v) if isinstance(v, list) else v) for k, v in sec.items() if k in known}
        parsed[name] = cls(**vals)

    ds = parsed["dataset"]
    if not _is_int(ds.events) or ds.events < 1:
        bad("dataset.events", f"must be a positive integer, got {ds.events!r}")
    class_ok = isinstance(ds.classes, tuple) and len(ds.classes) > 0
    if class_ok:
        for c in ds.classes:
            try:
                class_index(c)
            except ValueError as exc:
                bad("dataset.classes", str(exc))
                class_ok = False
        if class_ok and len({class_index(c) for c in ds.classes}) != len(ds.classes):
            bad("dataset.classes", "classes repeat")
    else:
        bad("dataset.classes", "must be a nonempty list of class names")
    if not isinstance(ds.priors, tuple) or not all(_is_num(p) for p in ds.priors):
        bad("dataset.priors", "must be a list of numbers")
    else:
        if class_ok and len(ds.priors) != len(ds.classes):
            bad("dataset.priors", f"{len(ds.priors)} priors for {len(ds.classes)} classes")
        if any(p < 0 for p in ds.priors):
            bad("dataset.priors", "priors must be nonnegative")
        elif sum(ds.priors) <= 0:
            bad("dataset.priors", "priors must have a positive sum")
    if not _is_int(ds.image_size) or ds.image_size < 1:
        bad("dataset.image_size", f"must be a positive integer, got {ds.image_size!r}")
    if not _is_int(ds.n_calibration) or ds.n_calibration < 1:
        bad("dataset.n_calibration", "must be a positive integer")
    if not _is_num(ds.percentile) or not 0 < ds.percentile <= 100:
        bad("dataset.percentile", "must lie in (0, 100]")
    for sub, cls in (("geometry", DetectorGeometry), ("generator", GeneratorConfig)):
        d = getattr(ds, sub)
        if not isinstance(d, dict):
            bad(f"dataset.{sub}", "must be an object")
            continue
        known = {f.name for f in fields(cls)} - {"image_size"}
        for k in d:
            if k not in known:
                bad(f"dataset.{sub}.{k}", f"unknown key {k!r}")
        try:
            if sub == "geometry":
                DetectorGeometry(**{k: v for k, v in d.items() if k in known},
                                 image_size=ds.image_size if _is_int(ds.image_size) else 64)
            else:
                GeneratorConfig.from_dict({k: v for k, v in d.items() if k in known})
        except (ValueError, TypeError) as exc:
            bad(f"dataset.{sub}", str(exc))

    md = parsed["model"]
    if md.preset not in ("desk", "full"):
        bad("model.preset", f"must be 'desk' or 'full', got {md.preset!r}")
    if not isinstance(md.overrides, dict):
        bad("model.overrides", "must be an object")

    tr_raw = raw.get("train", {})
    if not isinstance(tr_raw, dict):
        bad("train", "must be an object")
        tr_raw = {}
    tr_known = {f.name for f in fields(TrainConfig)}
    for k in tr_raw:
        if k not in tr_known:
            bad(f"train.{k}", f"unknown key {k!r}; allowed: {', '.join(sorted(tr_known))}")
    tr_vals = dict({"lr": DESK_LR, "fractions": DESK_FRACTIONS, "seed": seed},
                   **{k: v for k, v in tr_raw.items() if k in tr_known})
    try:
        train = TrainConfig(**tr_vals)
    except (ConfigError, TypeError, ValueError) as exc:
        for msg in str(exc).split("; "):
            key = msg.split(" ", 1)[0].rstrip(":")
            bad(f"train.{key}" if key in tr_known else "train", msg)
        train = TrainConfig.desk()

    dc = parsed["decode"]
    if not _is_num(dc.temperature) or not dc.temperature > 0:
        bad("decode.temperature", f"must be positive, got {dc.temperature!r}")
    if not _is_int(dc.beam) or dc.beam < 1:
        bad("decode.beam", f"must be an integer >= 1, got {dc.beam!r}")

    ev = parsed["eval"]
    if (not isinstance(ev.downsample, tuple) or not ev.downsample
            or not all(_is_int(f) and f >= 1 for f in ev.downsample)):
        bad("eval.downsample", f"must be a nonempty list of positive integers, got {ev.downsample!r}")
    elif _is_int(ds.image_size) and any(ds.image_size % f for f in ev.downsample):
        bad("eval.downsample", f"every factor must divide image_size {ds.image_size}")
    if ev.mode not in ("rerender", "direct"):
        bad("eval.mode", f"must be 'rerender' or 'direct', got {ev.mode!r}")

    cfg = None
    if not problems:
        cfg = ExperimentConfig(seed, ds, md, train, dc, ev)
        try:
            cfg.model_config()
        except (ConfigError, TypeError) as exc:
            bad("model", str(exc))
        if ev.mode == "direct" and any(f != 1 for f in ev.downsample):
            bad("eval.mode", "direct mode needs a model built for the reduced size; "
                             "use rerender with a fixed-size model")
        if not problems:
            n = ds.events
            if min(apportion(n, train.fractions)) == 0:
                bad("dataset.events", f"{n} events leave an empty split at fractions "
                                      f"{list(train.fractions)}")
    if problems:
        raise ConfigValidationError(problems, source)
    return cfg


def parse_config_text(text, source="<config>") -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigValidationError([("<syntax>", exc.lineno, f"{exc.msg} (column {exc.colno})")],
                                    source) from exc
    return build_config(raw, key_lines(text), source)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigValidationError([("<file>", None, str(exc))], path) from exc
    return parse_config_text(text, path)


def default_config() -> ExperimentConfig:
    return build_config({})
