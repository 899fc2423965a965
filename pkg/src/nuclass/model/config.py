from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields

from ..autodiff import ConfigError

ACTIVATION_NAMES = ("relu6", "hard_swish")


@dataclass(frozen=True)
class StageSpec:
    """One inverted residual block: expand -> depthwise -> [SE] -> project."""

    expansion: int
    out_channels: int
    kernel: int
    stride: int
    se: bool = False
    activation: str = "relu6"

    @classmethod
    def from_any(cls, spec):
        if isinstance(spec, StageSpec):
            return spec
        if isinstance(spec, dict):
            unknown = set(spec) - {f.name for f in fields(cls)}
            if unknown:
                raise ConfigError(f"unknown stage keys: {sorted(unknown)}")
            return cls(**spec)
        return cls(*spec)

    def validate(self, where):
        problems = []
        for name in ("expansion", "out_channels", "kernel", "stride"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                problems.append(f"{where}.{name} must be a positive integer, got {value!r}")
        if isinstance(self.kernel, int) and self.kernel % 2 == 0:
            problems.append(f"{where}.kernel must be odd, got {self.kernel}")
        if self.activation not in ACTIVATION_NAMES:
            problems.append(f"{where}.activation must be one of {ACTIVATION_NAMES}, "
                            f"got {self.activation!r}")
        if not isinstance(self.se, bool):
            problems.append(f"{where}.se must be a boolean")
        return problems


@dataclass(frozen=True)
class ModelConfig:
    branch_stages: tuple = ()
    merge_stages: tuple = ()
    head_hidden: tuple = (64,)
    dropout: float = 0.2
    n_classes: int = 3
    input_size: int = 64
    stem_channels: int = 8
    stem_kernel: int = 3
    stem_stride: int = 2
    se_reduction: int = 4
    shared_branch: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "branch_stages",
                           tuple(StageSpec.from_any(s) for s in self.branch_stages))
        object.__setattr__(self, "merge_stages",
                           tuple(StageSpec.from_any(s) for s in self.merge_stages))
        object.__setattr__(self, "head_hidden", tuple(self.head_hidden))
        problems = self.problems()
        if problems:
            raise ConfigError("; ".join(problems))

    def problems(self):
        out = []
        for i, s in enumerate(self.branch_stages):
            out += s.validate(f"branch_stages[{i}]")
        for i, s in enumerate(self.merge_stages):
            out += s.validate(f"merge_stages[{i}]")
        if self.n_classes != 3:
            out.append(f"n_classes must be 3, got {self.n_classes}")
        if not 0.0 <= self.dropout < 1.0:
            out.append(f"dropout must lie in [0, 1), got {self.dropout}")
        for name in ("input_size", "stem_channels", "stem_kernel", "stem_stride", "se_reduction"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                out.append(f"{name} must be a positive integer, got {v!r}")
        if any((not isinstance(h, int)) or h < 1 for h in self.head_hidden):
            out.append(f"head_hidden sizes must be positive integers, got {self.head_hidden}")
        if out:
            return out
        # SE bottlenecks need the expanded width to divide by the reduction ratio
        c = self.stem_channels
        for where, stages, start in (("branch_stages", self.branch_stages, None),
                                     ("merge_stages", self.merge_stages, "merge")):
            if start == "merge":
                c = 2 * c
            for i, s in enumerate(stages):
                hidden = c * s.expansion
                if s.se and hidden % self.se_reduction:
                    out.append(f"{where}[{i}]: SE width {hidden} not divisible by "
                               f"se_reduction {self.se_reduction}")
                c = s.out_channels
        if self.feature_size() < 1:
            out.append(f"input_size {self.input_size} too small for the stride schedule")
        return out

    def feature_size(self):
        size = self.input_size
        size = (size + 2 * (self.stem_kernel // 2) - self.stem_kernel) // self.stem_stride + 1
        for s in self.branch_stages + self.merge_stages:
            size = (size + 2 * (s.kernel // 2) - s.kernel) // s.stride + 1
        return size

    def to_dict(self):
        d = asdict(self)
        d["branch_stages"] = [asdict(s) for s in self.branch_stages]
        d["merge_stages"] = [asdict(s) for s in self.merge_stages]
        d["head_hidden"] = list(self.head_hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def replace(self, **changes):
        d = self.to_dict()
        d.update(changes)
        return ModelConfig.from_dict(d)


def desk_config(**overrides) -> ModelConfig:
    """Small reference architecture for 64x64 inputs."""
    base = dict(
        branch_stages=[(1, 8, 3, 2, False, "relu6"),
                       (4, 16, 3, 2, True, "hard_swish"),
                       (4, 24, 3, 2, True, "hard_swish")],
        merge_stages=[(4, 32, 3, 1, True, "hard_swish")],
        head_hidden=(64,),
        input_size=64,
    )
    base.update(overrides)
    return ModelConfig(**base)


def full_config(**overrides) -> ModelConfig:
    """Larger MobileNet-style stack for 512x512 inputs (not tuned to any count)."""
    base = dict(
        branch_stages=[(1, 16, 3, 1, False, "relu6"),
                       (4, 24, 3, 2, False, "relu6"),
                       (3, 24, 3, 1, False, "relu6"),
                       (3, 40, 5, 2, True, "relu6"),
                       (3, 40, 5, 1, True, "relu6"),
                       (6, 80, 3, 2, False, "hard_swish"),
                       (3, 80, 3, 1, False, "hard_swish"),
                       (6, 112, 3, 1, True, "hard_swish"),
                       (6, 160, 5, 2, True, "hard_swish"),
                       (6, 160, 5, 1, True, "hard_swish")],
        merge_stages=[(4, 256, 3, 1, True, "hard_swish"),
                      (4, 320, 3, 2, True, "hard_swish")],
        head_hidden=(512,),
        input_size=512,
        stem_channels=16,
        stem_stride=2,
        dropout=0.2,
    )
    base.update(overrides)
    return ModelConfig(**base)
