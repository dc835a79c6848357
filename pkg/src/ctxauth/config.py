"""Run configuration: every tunable of the pipeline with its default."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .classifiers import ALGORITHMS, ClassifierParams
from .preprocess import UnattendedThresholds


class ConfigError(ValueError):
    def __init__(self, key: str, message: str = "invalid value"):
        self.key = key
        super().__init__(f"{key}: {message}")


@dataclass(frozen=True)
class PreprocessConfig:
    thresholds: UnattendedThresholds = field(default_factory=UnattendedThresholds)
    median_span: int = 3


@dataclass(frozen=True)
class WindowConfig:
    win_ms: int = 10_000
    step_ms: int = 5_000
    min_samples: int = 8
    max_gap_ms: int = 2_500


@dataclass(frozen=True)
class ContextConfig:
    k: int = 8
    max_iter: int = 300
    tol: float = 1e-6
    prune_min_fraction: float = 0.02
    prune_min_count: int = 30
    cim_trees: int = 100


@dataclass(frozen=True)
class SelectionConfig:
    cfs_width: int = 5
    cfs_patience: int = 5


@dataclass(frozen=True)
class EnrollmentConfig:
    min_windows: int = 20
    train_fraction: float = 0.5
    impostor_cap: int | None = None      # None: match the genuine count of the context
    min_impostor_matches: int = 10


@dataclass(frozen=True)
class EvaluationConfig:
    algorithms: tuple[str, ...] = ALGORITHMS
    fte_fractions: tuple[float, ...] = (0.05, 0.10, 0.15)


@dataclass(frozen=True)
class SynthConfig:
    n_users: int = 8
    distinctiveness: float = 0.8
    n_contexts: int = 3
    attended_minutes: float = 60.0
    unattended_fraction: float = 0.3


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    jobs: int = 1
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    windows: WindowConfig = field(default_factory=WindowConfig)
    context: ContextConfig = field(default_factory=ContextConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    enrollment: EnrollmentConfig = field(default_factory=EnrollmentConfig)
    classifiers: ClassifierParams = field(default_factory=ClassifierParams)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def validate(self) -> "RunConfig":
        th = self.preprocess.thresholds
        for lo, hi in (("lx", "ux"), ("ly", "uy"), ("lz", "uz")):
            if not getattr(th, lo) < getattr(th, hi):
                raise ConfigError(f"preprocess.thresholds.{lo}", f"must be below {hi}")
        if th.segment_len_ms <= 0:
            raise ConfigError("preprocess.thresholds.segment_len_ms", "must be positive")
        if self.preprocess.median_span < 1 or self.preprocess.median_span % 2 == 0:
            raise ConfigError("preprocess.median_span", "must be a positive odd integer")
        w = self.windows
        if w.win_ms <= 0:
            raise ConfigError("windows.win_ms", "must be positive")
        if not 0 < w.step_ms <= w.win_ms:
            raise ConfigError("windows.step_ms", "must lie in (0, win_ms]")
        if w.min_samples < 8:
            raise ConfigError("windows.min_samples", "spectral features need at least 8 samples")
        if w.max_gap_ms <= 0:
            raise ConfigError("windows.max_gap_ms", "must be positive")
        c = self.context
        if c.k < 1:
            raise ConfigError("context.k", "must be at least 1")
        if c.max_iter < 1:
            raise ConfigError("context.max_iter", "must be at least 1")
        if not 0 <= c.prune_min_fraction <= 1:
            raise ConfigError("context.prune_min_fraction", "must lie in [0, 1]")
        if c.prune_min_count < 1:
            raise ConfigError("context.prune_min_count", "must be at least 1")
        if c.cim_trees < 1:
            raise ConfigError("context.cim_trees", "must be at least 1")
        if self.selection.cfs_width < 1:
            raise ConfigError("selection.cfs_width", "must be at least 1")
        if self.selection.cfs_patience < 1:
            raise ConfigError("selection.cfs_patience", "must be at least 1")
        e = self.enrollment
        if e.min_windows < 2:
            raise ConfigError("enrollment.min_windows", "must be at least 2")
        if not 0 < e.train_fraction < 1:
            raise ConfigError("enrollment.train_fraction", "must lie in (0, 1)")
        if e.impostor_cap is not None and e.impostor_cap < 1:
            raise ConfigError("enrollment.impostor_cap", "must be positive or null")
        if e.min_impostor_matches < 1:
            raise ConfigError("enrollment.min_impostor_matches", "must be at least 1")
        p = self.classifiers
        for key in ("logreg_max_iter", "mlp_hidden", "mlp_epochs", "knn_k", "svm_max_iter", "rf_trees"):
            if getattr(p, key) < 1:
                raise ConfigError(f"classifiers.{key}", "must be at least 1")
        for key in ("mlp_lr", "svm_c", "svm_tol", "logreg_tol"):
            if not getattr(p, key) > 0:
                raise ConfigError(f"classifiers.{key}", "must be positive")
        if p.svm_gamma is not None and not p.svm_gamma > 0:
            raise ConfigError("classifiers.svm_gamma", "must be positive or null")
        algs = self.evaluation.algorithms
        if not algs or any(a not in ALGORITHMS for a in algs) or len(set(algs)) != len(algs):
            raise ConfigError("evaluation.algorithms", f"must be distinct names from {ALGORITHMS}")
        if any(not 0 <= f < 1 for f in self.evaluation.fte_fractions):
            raise ConfigError("evaluation.fte_fractions", "fractions must lie in [0, 1)")
        s = self.synth
        if s.n_users < 2:
            raise ConfigError("synth.n_users", "must be at least 2")
        if not 0 <= s.distinctiveness <= 1:
            raise ConfigError("synth.distinctiveness", "must lie in [0, 1]")
        if not 1 <= s.n_contexts <= 3:
            raise ConfigError("synth.n_contexts", "must lie in [1, 3]")
        if not s.attended_minutes > 0:
            raise ConfigError("synth.attended_minutes", "must be positive")
        if not 0 <= s.unattended_fraction < 1:
            raise ConfigError("synth.unattended_fraction", "must lie in [0, 1)")
        if self.jobs < 1:
            raise ConfigError("jobs", "must be at least 1")
        return self

    def to_dict(self) -> dict:
        return _jsonable(dataclasses.asdict(self))

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _build(cls, data, prefix):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(prefix or "<root>", "expected a mapping")
    kwargs = {}
    known = {f.name: f for f in fields(cls)}
    for key, value in data.items():
        path = f"{prefix}.{key}" if prefix else key
        if key not in known:
            raise ConfigError(path, "unknown key")
        default = getattr(cls(), key) if _has_defaults(cls) else None
        if dataclasses.is_dataclass(default):
            kwargs[key] = _build(type(default), value, path)
        elif isinstance(default, tuple):
            if not isinstance(value, (list, tuple)):
                raise ConfigError(path, "expected a list")
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(prefix or "<root>", str(exc)) from None


def _has_defaults(cls) -> bool:
    try:
        cls()
        return True
    except TypeError:
        return False


def config_from_dict(data: dict | None) -> RunConfig:
    cfg = _build(RunConfig, data or {}, "")
    _check_types(cfg, "")
    return cfg.validate()


def _check_types(obj, prefix):
    ref = type(obj)()
    for f in fields(obj):
        path = f"{prefix}.{f.name}" if prefix else f.name
        value, default = getattr(obj, f.name), getattr(ref, f.name)
        if dataclasses.is_dataclass(default):
            _check_types(value, path)
        elif default is None or value is None:
            continue
        elif isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(path, "expected a boolean")
        elif isinstance(default, int) and not isinstance(default, bool):
            if not isinstance(value, int) or isinstance(value, bool):
                raise ConfigError(path, "expected an integer")
        elif isinstance(default, float):
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ConfigError(path, "expected a number")


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Read a YAML (or JSON) config file and apply dotted-key overrides."""
    data = {}
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError("<file>", f"cannot parse {path}: {exc}") from None
    for dotted, value in (overrides or {}).items():
        node = data
        parts = dotted.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(dotted, "override path crosses a scalar")
        node[parts[-1]] = value
    return config_from_dict(data)
