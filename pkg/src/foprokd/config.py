"""Declarative experiment configuration with YAML persistence.

A config file is a nested mapping mirroring the dataclasses below. Loading
validates every field and reports the offending key path; saving round-trips
floats at full precision. The config hash identifies an experiment for
checkpoint compatibility checks and excludes purely environmental fields
(output directory, device).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import yaml

from .exceptions import ConfigError
from .losses import LossWeights

METHODS = ("ce", "rs", "rw", "bsm", "ekd", "fopro_kd", "linear_probe", "fine_tune")
OPTIMIZERS = ("adam", "sgd")
DATASET_KINDS = ("synthetic", "manifest")
ARCHITECTURES = ("tiny_cnn", "resnet18", "resnet50")

# Methods that distill from a frozen teacher into the student.
DISTILLATION_METHODS = ("ekd", "fopro_kd")
# Methods that train the teacher's own classification head instead of a student.
TEACHER_HEAD_METHODS = ("linear_probe", "fine_tune")


@dataclass
class DataConfig:
    kind: str = "synthetic"
    manifest: str | None = None
    root: str | None = None
    resolution: int = 32
    num_classes: int = 8
    class_targets: tuple[int, ...] | None = None
    val_per_class: int = 8
    test_per_class: int = 16
    seed: int = 0
    augment: bool = True
    pad: int = 4


@dataclass
class ModelConfig:
    teacher_arch: str = "tiny_cnn"
    teacher_checkpoint: str | None = None
    teacher_width: int = 16
    teacher_bn_calibration_batches: int = 8
    student_arch: str = "tiny_cnn"
    student_width: int = 8
    noise_dim: int = 128


@dataclass
class OptimConfig:
    optimizer: str = "adam"
    lr: float = 3e-4
    momentum: float = 0.9
    weight_decay: float = 0.0
    cosine_schedule: bool = False
    fpg_lr: float = 1e-3
    batch_size: int = 32
    grad_clip: float = 10.0


@dataclass
class PhaseSchedule:
    exploit_epochs_per_cycle: int = 5
    explore_epochs_per_cycle: int = 1
    max_epochs: int = 100
    early_stop_patience: int = 20

    def __post_init__(self):
        for name in ("exploit_epochs_per_cycle", "explore_epochs_per_cycle",
                     "max_epochs", "early_stop_patience"):
            if getattr(self, name) < 1:
                raise ConfigError(f"schedule.{name}: must be >= 1")
        if self.early_stop_patience > self.max_epochs:
            raise ConfigError("schedule.early_stop_patience: must not exceed max_epochs")


@dataclass
class ExperimentConfig:
    method: str = "ce"
    seed: int = 0
    out_dir: str = "runs/default"
    device: str = "cpu"
    debug_phase_checks: bool = False
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    schedule: PhaseSchedule = field(default_factory=PhaseSchedule)
    loss: LossWeights = field(default_factory=LossWeights)


def _expect(payload: dict, key: str, kinds, path: str, default):
    value = payload.get(key, default)
    if value is None and default is None:
        return None
    if kinds is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}.{key}: expected a boolean, got {value!r}")
        return value
    if kinds is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}.{key}: expected an integer, got {value!r}")
        return value
    if kinds is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}.{key}: expected a number, got {value!r}")
        return float(value)
    if kinds is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}.{key}: expected a string, got {value!r}")
        return value
    raise AssertionError(kinds)


def _check_keys(payload: dict, allowed, path: str) -> None:
    unknown = set(payload) - set(allowed)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")


def _data_from_dict(payload: dict) -> DataConfig:
    defaults = DataConfig()
    _check_keys(payload, vars(defaults), "data")
    cfg = DataConfig(
        kind=_expect(payload, "kind", str, "data", defaults.kind),
        manifest=_expect(payload, "manifest", str, "data", None),
        root=_expect(payload, "root", str, "data", None),
        resolution=_expect(payload, "resolution", int, "data", defaults.resolution),
        num_classes=_expect(payload, "num_classes", int, "data", defaults.num_classes),
        class_targets=None,
        val_per_class=_expect(payload, "val_per_class", int, "data", defaults.val_per_class),
        test_per_class=_expect(payload, "test_per_class", int, "data", defaults.test_per_class),
        seed=_expect(payload, "seed", int, "data", defaults.seed),
        augment=_expect(payload, "augment", bool, "data", defaults.augment),
        pad=_expect(payload, "pad", int, "data", defaults.pad),
    )
    targets = payload.get("class_targets")
    if targets is not None:
        if not isinstance(targets, (list, tuple)) or not all(
            isinstance(t, int) and not isinstance(t, bool) and t >= 1 for t in targets
        ):
            raise ConfigError("data.class_targets: expected a list of integers >= 1")
        cfg.class_targets = tuple(targets)
    if cfg.kind not in DATASET_KINDS:
        raise ConfigError(f"data.kind: '{cfg.kind}' not in {DATASET_KINDS}")
    if cfg.kind == "manifest" and not cfg.manifest:
        raise ConfigError("data.manifest: required when data.kind is 'manifest'")
    if cfg.kind == "synthetic":
        if cfg.class_targets is None:
            raise ConfigError("data.class_targets: required when data.kind is 'synthetic'")
        if len(cfg.class_targets) != cfg.num_classes:
            raise ConfigError(
                "data.class_targets: length must equal data.num_classes"
            )
    if cfg.resolution < 8:
        raise ConfigError("data.resolution: must be >= 8")
    if cfg.num_classes < 2:
        raise ConfigError("data.num_classes: must be >= 2")
    if cfg.val_per_class < 1 or cfg.test_per_class < 1:
        raise ConfigError("data.val_per_class/test_per_class: must be >= 1")
    if cfg.pad < 0:
        raise ConfigError("data.pad: must be >= 0")
    return cfg


def _model_from_dict(payload: dict) -> ModelConfig:
    defaults = ModelConfig()
    _check_keys(payload, vars(defaults), "model")
    cfg = ModelConfig(
        teacher_arch=_expect(payload, "teacher_arch", str, "model", defaults.teacher_arch),
        teacher_checkpoint=_expect(payload, "teacher_checkpoint", str, "model", None),
        teacher_width=_expect(payload, "teacher_width", int, "model", defaults.teacher_width),
        teacher_bn_calibration_batches=_expect(
            payload, "teacher_bn_calibration_batches", int, "model",
            defaults.teacher_bn_calibration_batches),
        student_arch=_expect(payload, "student_arch", str, "model", defaults.student_arch),
        student_width=_expect(payload, "student_width", int, "model", defaults.student_width),
        noise_dim=_expect(payload, "noise_dim", int, "model", defaults.noise_dim),
    )
    for key, arch in (("teacher_arch", cfg.teacher_arch), ("student_arch", cfg.student_arch)):
        if arch not in ARCHITECTURES:
            raise ConfigError(f"model.{key}: '{arch}' not in {ARCHITECTURES}")
    if cfg.noise_dim < 1:
        raise ConfigError("model.noise_dim: must be >= 1")
    if cfg.teacher_width < 1 or cfg.student_width < 1:
        raise ConfigError("model widths must be >= 1")
    if cfg.teacher_bn_calibration_batches < 0:
        raise ConfigError("model.teacher_bn_calibration_batches: must be >= 0")
    return cfg


def _optim_from_dict(payload: dict) -> OptimConfig:
    defaults = OptimConfig()
    _check_keys(payload, vars(defaults), "optim")
    cfg = OptimConfig(
        optimizer=_expect(payload, "optimizer", str, "optim", defaults.optimizer),
        lr=_expect(payload, "lr", float, "optim", defaults.lr),
        momentum=_expect(payload, "momentum", float, "optim", defaults.momentum),
        weight_decay=_expect(payload, "weight_decay", float, "optim", defaults.weight_decay),
        cosine_schedule=_expect(payload, "cosine_schedule", bool, "optim",
                                defaults.cosine_schedule),
        fpg_lr=_expect(payload, "fpg_lr", float, "optim", defaults.fpg_lr),
        batch_size=_expect(payload, "batch_size", int, "optim", defaults.batch_size),
        grad_clip=_expect(payload, "grad_clip", float, "optim", defaults.grad_clip),
    )
    if cfg.optimizer not in OPTIMIZERS:
        raise ConfigError(f"optim.optimizer: '{cfg.optimizer}' not in {OPTIMIZERS}")
    if cfg.lr <= 0 or cfg.fpg_lr <= 0:
        raise ConfigError("optim.lr/fpg_lr: must be positive")
    if cfg.batch_size < 2:
        raise ConfigError("optim.batch_size: must be >= 2 (batch statistics need it)")
    if cfg.grad_clip <= 0:
        raise ConfigError("optim.grad_clip: must be positive")
    if not 0.0 <= cfg.momentum < 1.0:
        raise ConfigError("optim.momentum: must be in [0, 1)")
    if cfg.weight_decay < 0:
        raise ConfigError("optim.weight_decay: must be >= 0")
    return cfg


def _schedule_from_dict(payload: dict) -> PhaseSchedule:
    defaults = PhaseSchedule()
    _check_keys(payload, vars(defaults), "schedule")
    return PhaseSchedule(
        exploit_epochs_per_cycle=_expect(payload, "exploit_epochs_per_cycle", int,
                                         "schedule", defaults.exploit_epochs_per_cycle),
        explore_epochs_per_cycle=_expect(payload, "explore_epochs_per_cycle", int,
                                         "schedule", defaults.explore_epochs_per_cycle),
        max_epochs=_expect(payload, "max_epochs", int, "schedule", defaults.max_epochs),
        early_stop_patience=_expect(payload, "early_stop_patience", int, "schedule",
                                    defaults.early_stop_patience),
    )


def _loss_from_dict(payload: dict) -> LossWeights:
    defaults = LossWeights()
    _check_keys(payload, ("lambda_f", "mu", "gamma"), "loss")
    try:
        return LossWeights(
            lambda_f=_expect(payload, "lambda_f", float, "loss", defaults.lambda_f),
            mu=_expect(payload, "mu", float, "loss", defaults.mu),
            gamma=_expect(payload, "gamma", float, "loss", defaults.gamma),
        )
    except ValueError as exc:
        raise ConfigError(f"loss: {exc}") from exc


def config_from_dict(payload: dict) -> ExperimentConfig:
    if not isinstance(payload, dict):
        raise ConfigError("config root must be a mapping")
    defaults = ExperimentConfig()
    _check_keys(payload, vars(defaults), "config")
    for section in ("data", "model", "optim", "schedule", "loss"):
        if section in payload and not isinstance(payload[section], dict):
            raise ConfigError(f"{section}: must be a mapping")
    cfg = ExperimentConfig(
        method=_expect(payload, "method", str, "config", defaults.method),
        seed=_expect(payload, "seed", int, "config", defaults.seed),
        out_dir=_expect(payload, "out_dir", str, "config", defaults.out_dir),
        device=_expect(payload, "device", str, "config", defaults.device),
        debug_phase_checks=_expect(payload, "debug_phase_checks", bool, "config",
                                   defaults.debug_phase_checks),
        data=_data_from_dict(payload.get("data", {})),
        model=_model_from_dict(payload.get("model", {})),
        optim=_optim_from_dict(payload.get("optim", {})),
        schedule=_schedule_from_dict(payload.get("schedule", {})),
        loss=_loss_from_dict(payload.get("loss", {})),
    )
    if cfg.method not in METHODS:
        raise ConfigError(f"method: '{cfg.method}' not in {METHODS}")
    return cfg


def config_to_dict(cfg: ExperimentConfig) -> dict:
    payload = asdict(cfg)
    targets = payload["data"]["class_targets"]
    if targets is not None:
        payload["data"]["class_targets"] = list(targets)
    return payload


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            payload = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if payload is None:
        payload = {}
    return config_from_dict(payload)


def save_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(config_to_dict(cfg), fh, sort_keys=True)


def config_hash(cfg: ExperimentConfig) -> str:
    """Digest of everything that affects the trajectory; environment excluded."""
    payload = config_to_dict(cfg)
    payload.pop("out_dir")
    payload.pop("device")
    canonical = json.dumps(payload, sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()


def desk_scale_config(method: str = "fopro_kd", seed: int = 0,
                      out_dir: str = "runs/desk") -> ExperimentConfig:
    """A small synthetic long-tailed setup that trains in minutes on a CPU."""
    return ExperimentConfig(
        method=method,
        seed=seed,
        out_dir=out_dir,
        data=DataConfig(
            kind="synthetic",
            resolution=32,
            num_classes=8,
            class_targets=(512, 256, 128, 64, 32, 16, 8, 4),
            val_per_class=16,
            test_per_class=32,
            seed=seed,
        ),
        model=ModelConfig(
            teacher_arch="tiny_cnn",
            teacher_width=16,
            student_arch="tiny_cnn",
            student_width=8,
            noise_dim=128,
        ),
        # Slower prompt lr than the production default: at this scale the
        # inversion objective plateaus within one explore epoch otherwise.
        optim=OptimConfig(optimizer="adam", lr=3e-4, batch_size=32, fpg_lr=3e-4),
        schedule=PhaseSchedule(max_epochs=30, early_stop_patience=30),
    )
