"""Pipeline configuration: nested dataclasses exposed as flat dotted keys.

Precedence is CLI flag > config file > built-in default.  The config file
is JSON with keys such as ``"shot.k"`` or ``"svm.c"``; unknown keys are
rejected.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .shotseg import ShotParams
from .sift import PyramidParams

ENV_VAR = "RITESCENE_CONFIG"


@dataclass(frozen=True)
class SegmentConfig:
    n_frames: int = 30
    eps: float = 1e-3
    rho: float = 0.05
    window: int = 5
    thr: float = 0.2
    channel: str = "I"
    flat_rms: float = 0.02

    def __post_init__(self):
        if self.n_frames < 2:
            raise ValueError("segment.n_frames must be >= 2")
        if self.eps <= 0 or not 0 <= self.rho <= 1:
            raise ValueError("segment.eps must be > 0 and segment.rho in [0, 1]")
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError("segment.window must be odd")
        if self.channel not in ("H", "S", "I"):
            raise ValueError("segment.channel must be H, S or I")
        if self.thr < 0 or self.flat_rms < 0:
            raise ValueError("segment.thr and segment.flat_rms must be >= 0")


@dataclass(frozen=True)
class EncodeConfig:
    atoms: int = 256
    lam: float = 0.15
    iterations: int = 30
    max_descriptors: int = 4000
    learn_sweeps: int = 10

    def __post_init__(self):
        if self.atoms < 1 or self.iterations < 0 or self.lam < 0 or self.max_descriptors < 1 or self.learn_sweeps < 1:
            raise ValueError("invalid encode settings")


@dataclass(frozen=True)
class ClassifierConfig:
    kind: str = "svm"
    knn_k: int = 5
    ann_hidden: int = 64
    ann_rate: float = 0.1
    ann_epochs: int = 500
    svm_c: float = 10.0
    svm_kernel: str = "rbf"
    svm_gamma: float | None = None
    svm_degree: int = 3
    svm_tol: float = 1e-3

    def __post_init__(self):
        if self.kind not in ("knn", "ann", "svm"):
            raise ValueError(f"classifier.kind must be knn, ann or svm, got {self.kind!r}")
        if self.knn_k < 1 or self.ann_hidden < 1 or self.ann_epochs < 0 or self.svm_c <= 0:
            raise ValueError("invalid classifier settings")
        if self.svm_kernel not in ("rbf", "poly", "linear"):
            raise ValueError(f"unknown svm kernel {self.svm_kernel!r}")
        if self.svm_gamma is not None and self.svm_gamma <= 0:
            raise ValueError("svm.gamma must be positive")
        if self.svm_degree < 1:
            raise ValueError("svm.degree must be >= 1")

    def hyperparams(self, kind: str | None = None, seed: int = 0) -> dict:
        kind = kind or self.kind
        if kind == "knn":
            return {"k": self.knn_k}
        if kind == "ann":
            return {"hidden": self.ann_hidden, "rate": self.ann_rate, "epochs": self.ann_epochs, "seed": seed}
        return {"kernel": self.svm_kernel, "gamma": self.svm_gamma, "degree": self.svm_degree,
                "c": self.svm_c, "tol": self.svm_tol, "seed": seed}


@dataclass(frozen=True)
class RunConfig:
    seed: int = 42
    workers: int = field(default_factory=lambda: os.cpu_count() or 1)
    pattern: str = "frame_*.ppm"
    fps: float = 30.0

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("run.workers must be >= 1")


# flat key -> (section attribute, field name)
_SECTIONS = {
    "shot": ("shot", {"k": "k", "motion_threshold": "motion_threshold", "block_threshold": "block_threshold",
                      "block_size": "block_size", "block_change_level": "block_change_level"}),
    "segment": ("segment", {f: f for f in ("n_frames", "eps", "rho", "window", "thr", "channel", "flat_rms")}),
    "sift": ("sift", {f: f for f in ("octaves", "scales", "sigma0", "contrast_threshold", "edge_ratio")}),
    "encode": ("encode", {f: f for f in ("atoms", "lam", "iterations", "max_descriptors", "learn_sweeps")}),
    "classifier": ("classifier", {"kind": "kind"}),
    "knn": ("classifier", {"k": "knn_k"}),
    "ann": ("classifier", {"hidden": "ann_hidden", "rate": "ann_rate", "epochs": "ann_epochs"}),
    "svm": ("classifier", {"c": "svm_c", "kernel": "svm_kernel", "gamma": "svm_gamma",
                           "degree": "svm_degree", "tol": "svm_tol"}),
    "run": ("run", {f: f for f in ("seed", "workers", "pattern", "fps")}),
}

# keys that do not affect results and stay out of bundle snapshots
NON_SEMANTIC = {"run.workers"}


@dataclass(frozen=True)
class PipelineConfig:
    shot: ShotParams = field(default_factory=ShotParams)
    segment: SegmentConfig = field(default_factory=SegmentConfig)
    sift: PyramidParams = field(default_factory=PyramidParams)
    encode: EncodeConfig = field(default_factory=EncodeConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    run: RunConfig = field(default_factory=RunConfig)

    @staticmethod
    def keys() -> list[str]:
        return [f"{prefix}.{key}" for prefix, (_, m) in _SECTIONS.items() for key in m]

    def to_flat(self, semantic_only: bool = False) -> dict[str, Any]:
        out = {}
        for prefix, (section, mapping) in _SECTIONS.items():
            obj = getattr(self, section)
            for key, attr in mapping.items():
                name = f"{prefix}.{key}"
                if semantic_only and name in NON_SEMANTIC:
                    continue
                out[name] = getattr(obj, attr)
        return out

    def with_values(self, values: dict[str, Any]) -> "PipelineConfig":
        updates: dict[str, dict[str, Any]] = {}
        for name, value in values.items():
            prefix, _, key = name.partition(".")
            if prefix not in _SECTIONS or key not in _SECTIONS[prefix][1]:
                raise KeyError(f"unknown config key {name!r}")
            section, mapping = _SECTIONS[prefix]
            attr = mapping[key]
            current = getattr(getattr(self, section), attr)
            updates.setdefault(section, {})[attr] = _coerce(name, value, current)
        cfg = self
        for section, changes in updates.items():
            cfg = replace(cfg, **{section: replace(getattr(cfg, section), **changes)})
        return cfg

    @classmethod
    def from_flat(cls, values: dict[str, Any]) -> "PipelineConfig":
        return cls().with_values(values)


def _coerce(name: str, value: Any, current: Any) -> Any:
    if value is None:
        if name == "svm.gamma":
            return None
        raise ValueError(f"{name} may not be null")
    if name == "svm.gamma" and isinstance(value, str) and value.lower() in ("none", "auto", "null"):
        return None
    kind = type(current) if current is not None else float
    if kind is bool:
        return str(value).lower() in ("1", "true", "yes")
    if kind is int:
        if isinstance(value, float) and not value.is_integer():
            raise ValueError(f"{name} must be an integer, got {value}")
        return int(value)
    if kind is float:
        return float(value)
    return str(value)


def load_config_file(path: str | Path) -> dict[str, Any]:
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise ValueError(f"config file {path} must hold a JSON object")
    return data


def resolve_config(cli_values: dict[str, Any] | None = None, config_path: str | Path | None = None,
                   environ: dict[str, str] | None = None) -> PipelineConfig:
    """Defaults, then the config file (explicit path or $RITESCENE_CONFIG), then CLI values."""
    environ = os.environ if environ is None else environ
    cfg = PipelineConfig()
    path = config_path or environ.get(ENV_VAR)
    if path:
        cfg = cfg.with_values(load_config_file(path))
    if cli_values:
        cfg = cfg.with_values({k: v for k, v in cli_values.items() if v is not None})
    return cfg
