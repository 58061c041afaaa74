"""Alternating exploration/exploitation training with checkpointed resume.

Exploitation epochs update only the student: the target loss on clean-image
logits plus the feature distillation term against the frozen teacher's view
of the prompted image. Exploration epochs update only the prompt generator:
the inversion objective (batch-norm statistics matching plus activation
entropy balancing) minus the weighted distillation term, driving prompts
toward regions the teacher represents well but the student has not absorbed.

Two dedicated RNG streams keep trajectories reproducible: the data stream
drives sampling and augmentation, the prompt stream drives noise vectors and
mixing coefficients. Disabling distillation therefore leaves the data stream
untouched and the run degenerates exactly to plain target-loss training.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import torch
from torch import Tensor, nn
from torch.nn import functional as F

from .config import (
    DISTILLATION_METHODS,
    TEACHER_HEAD_METHODS,
    ExperimentConfig,
    config_hash,
    save_config,
)
from .data import (
    DatasetManifest,
    LongTailSpec,
    ManifestDataset,
    augment_batch,
    class_balanced_sampler,
    reweighting_weights,
    shot_grouping,
    synthetic_dataset_generate,
)
from .exceptions import (
    CheckpointError,
    ConfigError,
    ContractViolationError,
    TrainingDivergedError,
)
from .fpg import FourierPromptGenerator, sample_noise
from .losses import (
    balance_loss,
    balanced_softmax_loss,
    bn_regularization,
    ekd_loss,
    exploitation_loss,
    exploration_loss,
    inversion_loss,
)
from .metrics import MetricsReport, compute_report
from .models import (
    DISTILL_STUDENT,
    FINE_TUNE,
    LINEAR_PROBE,
    StudentHandle,
    TeacherHandle,
    build_student,
    build_teacher,
    set_transfer_mode,
    state_hash,
)
from .spectral import decompose, mix_amplitude, reconstruct

PHASE_EXPLOIT = "exploit"
PHASE_EXPLORE = "explore"

PROMPT_STREAM_OFFSET = 7919
TEACHER_SEED_OFFSET = 101
STUDENT_SEED_OFFSET = 202
FPG_SEED_OFFSET = 303
HEAD_SEED_OFFSET = 404

BOUND_SLACK = 1e-5
CHECKPOINT_NAME = "last.pt"
BEST_NAME = "best.pt"


def _scalar(value) -> float:
    return float(value.detach()) if isinstance(value, Tensor) else float(value)


def phase_sequence(schedule) -> list[str]:
    """Expand the cyclic exploit/explore pattern to max_epochs entries."""
    seq: list[str] = []
    while len(seq) < schedule.max_epochs:
        seq.extend([PHASE_EXPLOIT] * schedule.exploit_epochs_per_cycle)
        seq.extend([PHASE_EXPLORE] * schedule.explore_epochs_per_cycle)
    return seq[:schedule.max_epochs]


@dataclass
class TrainingState:
    epoch: int = 0
    best_val_accuracy: float = -math.inf
    best_epoch: int = -1
    exploit_epochs_since_best: int = 0
    stopped_early: bool = False


@dataclass
class TrainingResult:
    out_dir: str
    epochs_run: int
    best_val_accuracy: float
    best_epoch: int
    stopped_early: bool
    metrics_path: str
    best_checkpoint_path: str


def build_manifest(cfg: ExperimentConfig) -> DatasetManifest:
    if cfg.data.kind == "synthetic":
        spec = LongTailSpec(
            class_names=tuple(f"class_{i}" for i in range(cfg.data.num_classes)),
            full_counts=tuple(
                t + cfg.data.val_per_class + cfg.data.test_per_class
                for t in cfg.data.class_targets
            ),
            train_targets=tuple(cfg.data.class_targets),
            val_per_class=cfg.data.val_per_class,
            test_per_class=cfg.data.test_per_class,
            ratio_label="synthetic",
            seed=cfg.data.seed,
        )
        return synthetic_dataset_generate(spec)
    return DatasetManifest.read_csv(cfg.data.manifest)


def _batched_indices(order: Tensor, batch_size: int) -> list[Tensor]:
    # partial batches below 2 samples are dropped: batch statistics and
    # BN training are undefined there
    chunks = [order[i:i + batch_size] for i in range(0, order.numel(), batch_size)]
    return [c for c in chunks if c.numel() >= 2]


class TrainingRun:
    """Everything owned by one experiment: data, models, optimizers, state."""

    def __init__(self, config: ExperimentConfig):
        self.cfg = config
        self.config_hash = config_hash(config)
        self.out_dir = Path(config.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        (self.out_dir / "checkpoints").mkdir(exist_ok=True)
        self.metrics_path = self.out_dir / "metrics.jsonl"

        self.manifest = build_manifest(config)
        if self.manifest.num_classes != config.data.num_classes:
            raise ConfigError(
                f"data.num_classes: config says {config.data.num_classes}, "
                f"manifest holds {self.manifest.num_classes}"
            )
        res = config.data.resolution
        self.train_set = ManifestDataset(self.manifest, "train", res, root=config.data.root)
        self.val_set = ManifestDataset(self.manifest, "val", res, root=config.data.root)
        self.test_set = ManifestDataset(self.manifest, "test", res, root=config.data.root)
        self.train_counts = self.manifest.train_counts()
        self.grouping = shot_grouping(self.train_counts)

        method = config.method
        self.needs_teacher = method in DISTILLATION_METHODS + TEACHER_HEAD_METHODS
        self.needs_student = method not in TEACHER_HEAD_METHODS
        self.needs_fpg = method == "fopro_kd"

        self.teacher: TeacherHandle | None = None
        self.student: StudentHandle | None = None
        self.fpg: FourierPromptGenerator | None = None

        if self.needs_teacher:
            self.teacher = build_teacher(
                arch=config.model.teacher_arch,
                checkpoint=config.model.teacher_checkpoint,
                seed=config.seed + TEACHER_SEED_OFFSET,
                width=config.model.teacher_width,
                bn_calibration_batches=(
                    0 if config.model.teacher_checkpoint
                    else config.model.teacher_bn_calibration_batches
                ),
                calibration_resolution=res,
            )
            if method in TEACHER_HEAD_METHODS:
                with torch.random.fork_rng():
                    torch.manual_seed(config.seed + HEAD_SEED_OFFSET)
                    self.teacher.attach_classifier(config.data.num_classes)
                set_transfer_mode(
                    self.teacher, LINEAR_PROBE if method == "linear_probe" else FINE_TUNE
                )
            else:
                set_transfer_mode(self.teacher, DISTILL_STUDENT)

        if self.needs_student:
            teacher_dim = self.teacher.feature_dim if self.teacher else 64
            self.student = build_student(
                arch=config.model.student_arch,
                num_classes=config.data.num_classes,
                teacher_dim=teacher_dim,
                seed=config.seed + STUDENT_SEED_OFFSET,
                width=config.model.student_width,
            )

        if self.needs_fpg:
            with torch.random.fork_rng():
                torch.manual_seed(config.seed + FPG_SEED_OFFSET)
                self.fpg = FourierPromptGenerator(
                    noise_dim=config.model.noise_dim, channels=3, height=res, width=res
                )

        self.phases = (
            phase_sequence(config.schedule) if self.needs_fpg
            else [PHASE_EXPLOIT] * config.schedule.max_epochs
        )
        self.exploit_total = sum(1 for p in self.phases if p == PHASE_EXPLOIT)

        params = self._trained_parameters()
        opt = config.optim
        if opt.optimizer == "adam":
            self.optimizer = torch.optim.Adam(
                params, lr=opt.lr, weight_decay=opt.weight_decay
            )
        else:
            self.optimizer = torch.optim.SGD(
                params, lr=opt.lr, momentum=opt.momentum, weight_decay=opt.weight_decay
            )
        self.scheduler = (
            torch.optim.lr_scheduler.CosineAnnealingLR(
                self.optimizer, T_max=max(self.exploit_total, 1)
            )
            if opt.cosine_schedule else None
        )
        self.fpg_optimizer = (
            torch.optim.Adam(self.fpg.parameters(), lr=opt.fpg_lr) if self.fpg else None
        )

        if config.method == "rw":
            self.class_weights = reweighting_weights(self.train_counts)
        else:
            self.class_weights = None
        self.count_tensor = torch.tensor(self.train_counts, dtype=torch.long)

        self.gen_data = torch.Generator().manual_seed(config.seed)
        self.gen_prompt = torch.Generator().manual_seed(config.seed + PROMPT_STREAM_OFFSET)

        self.state = TrainingState()
        self.distill_active = (
            config.method in DISTILLATION_METHODS and config.loss.lambda_f > 0
        )
        self.teacher_hash_baseline = (
            self.teacher.state_hash()
            if self.teacher is not None and method not in TEACHER_HEAD_METHODS
            else None
        )
        self.bal_bound = (
            math.log(self.teacher.feature_dim) if self.teacher is not None else None
        )

    # ---- model plumbing -------------------------------------------------

    def _trained_parameters(self):
        if self.cfg.method == "linear_probe":
            return list(self.teacher.classifier.parameters())
        if self.cfg.method == "fine_tune":
            return [p for p in self.teacher.parameters() if p.requires_grad]
        return list(self.student.parameters())

    def _eval_logits(self, images: Tensor) -> Tensor:
        if self.cfg.method in TEACHER_HEAD_METHODS:
            return self.teacher.classify(images)
        return self.student(images)[0]

    def _eval_module(self) -> nn.Module:
        return self.teacher if self.cfg.method in TEACHER_HEAD_METHODS else self.student

    def _target_loss(self, logits: Tensor, labels: Tensor) -> Tensor:
        method = self.cfg.method
        if method in ("bsm", "fopro_kd"):
            return balanced_softmax_loss(logits, labels, self.count_tensor)
        if method == "rw":
            return F.cross_entropy(logits, labels, weight=self.class_weights)
        return F.cross_entropy(logits, labels)

    def _epoch_order(self) -> Tensor:
        n = len(self.train_set)
        if self.cfg.method == "rs":
            return class_balanced_sampler(self.train_set.labels, n, self.gen_data)
        return torch.randperm(n, generator=self.gen_data)

    def _train_batch(self, indices: Tensor) -> tuple[Tensor, Tensor]:
        images, labels = self.train_set.batch(indices)
        if self.cfg.data.augment:
            images = augment_batch(images, self.gen_data, pad=self.cfg.data.pad)
        return images, labels

    def _prompted_batch(self, images: Tensor) -> Tensor:
        """Eqs. of the amplitude-mixing pipeline: x -> (A, phi) -> x_hat."""
        z = sample_noise(self.cfg.model.noise_dim, generator=self.gen_prompt)
        delta = self.fpg(z)
        alpha = torch.rand(images.shape[0], generator=self.gen_prompt)
        parts = decompose(images)
        mixed = mix_amplitude(parts.amplitude, delta, alpha)
        return reconstruct(mixed, parts.phase)

    def _check_bounds(self, distill=None, bn=None, bal=None) -> None:
        if distill is not None and not -BOUND_SLACK <= distill <= 4 + BOUND_SLACK:
            raise ContractViolationError(f"distillation loss {distill} outside [0, 4]")
        if bn is not None and bn < -BOUND_SLACK:
            raise ContractViolationError(f"statistics loss {bn} below 0")
        if bal is not None and not -self.bal_bound - BOUND_SLACK <= bal <= BOUND_SLACK:
            raise ContractViolationError(
                f"balance loss {bal} outside [-log C, 0] = [{-self.bal_bound}, 0]"
            )

    def _diverged(self, step: int, **components) -> TrainingDivergedError:
        return TrainingDivergedError(
            "non-finite loss",
            batch_index=step,
            components={k: _scalar(v) for k, v in components.items()},
        )

    # ---- epochs ---------------------------------------------------------

    def run_exploit_epoch(self) -> dict:
        module = self._eval_module()
        module.train()
        totals = {"loss": 0.0, "target_loss": 0.0, "distill_loss": 0.0}
        distill_min, distill_max = math.inf, -math.inf
        batches = _batched_indices(self._epoch_order(), self.cfg.optim.batch_size)
        for step, indices in enumerate(batches):
            if self.cfg.debug_phase_checks:
                pre_fpg = state_hash(self.fpg) if self.fpg else None
                pre_teacher = (
                    self.teacher.state_hash()
                    if self.teacher_hash_baseline is not None else None
                )
            images, labels = self._train_batch(indices)
            t = None
            if self.distill_active:
                with torch.no_grad():
                    teacher_view = (
                        self._prompted_batch(images) if self.needs_fpg else images
                    )
                    t, _ = self.teacher(teacher_view)
            if self.cfg.method in TEACHER_HEAD_METHODS:
                logits, projection = self.teacher.classify(images), None
            else:
                logits, projection = self.student(images)
            target_term = self._target_loss(logits, labels)
            if self.distill_active:
                distill_term = ekd_loss(projection, t)
                loss = exploitation_loss(target_term, distill_term, self.cfg.loss)
            else:
                distill_term = None
                loss = target_term
            if not torch.isfinite(loss):
                raise self._diverged(
                    step, loss=loss, target=target_term,
                    distill=distill_term if distill_term is not None else 0.0,
                )
            self.optimizer.zero_grad()
            loss.backward()
            norm = nn.utils.clip_grad_norm_(
                self._trained_parameters(), self.cfg.optim.grad_clip
            )
            if not torch.isfinite(norm):
                raise self._diverged(step, loss=loss, grad_norm=norm)
            self.optimizer.step()

            totals["loss"] += _scalar(loss)
            totals["target_loss"] += _scalar(target_term)
            if distill_term is not None:
                d = _scalar(distill_term)
                self._check_bounds(distill=d)
                totals["distill_loss"] += d
                distill_min, distill_max = min(distill_min, d), max(distill_max, d)
            if self.cfg.debug_phase_checks:
                if pre_fpg is not None and state_hash(self.fpg) != pre_fpg:
                    raise ContractViolationError("prompt generator changed in an exploit step")
                if pre_teacher is not None and self.teacher.state_hash() != pre_teacher:
                    raise ContractViolationError("teacher changed in an exploit step")
        if self.scheduler is not None:
            self.scheduler.step()
        n = len(batches)
        record = {
            "loss": totals["loss"] / n,
            "target_loss": totals["target_loss"] / n,
            "distill_loss": totals["distill_loss"] / n if self.distill_active else None,
            "distill_min": distill_min if self.distill_active else None,
            "distill_max": distill_max if self.distill_active else None,
        }
        return record

    def run_explore_epoch(self) -> dict:
        self.fpg.train()
        running = self.teacher.running_statistics()
        totals = {"loss": 0.0, "bn_loss": 0.0, "bal_loss": 0.0, "inv_loss": 0.0,
                  "distill_loss": 0.0}
        distill_min, distill_max = math.inf, -math.inf
        adversarial = self.cfg.loss.gamma > 0 and self.cfg.loss.lambda_f > 0
        batches = _batched_indices(self._epoch_order(), self.cfg.optim.batch_size)
        for step, indices in enumerate(batches):
            if self.cfg.debug_phase_checks:
                pre_student = self.student.state_hash()
                pre_teacher = self.teacher.state_hash()
            images, _ = self._train_batch(indices)
            x_hat = self._prompted_batch(images)
            t, batch_stats = self.teacher(x_hat, capture_stats=True)
            bn_term = bn_regularization(batch_stats, running)
            bal_term = balance_loss(t)
            inv_term = inversion_loss(bn_term, bal_term, self.cfg.loss)
            if adversarial:
                was_training = self.student.training
                self.student.eval()
                with torch.no_grad():
                    _, projection = self.student(images)
                self.student.train(was_training)
                distill_term = ekd_loss(projection, t)
            else:
                distill_term = torch.zeros(())
            loss = exploration_loss(distill_term, inv_term, self.cfg.loss)
            if not torch.isfinite(loss):
                raise self._diverged(step, loss=loss, bn=bn_term, bal=bal_term,
                                     distill=distill_term)
            self.fpg_optimizer.zero_grad()
            loss.backward()
            norm = nn.utils.clip_grad_norm_(self.fpg.parameters(), self.cfg.optim.grad_clip)
            if not torch.isfinite(norm):
                raise self._diverged(step, loss=loss, grad_norm=norm)
            self.fpg_optimizer.step()

            d = _scalar(distill_term)
            self._check_bounds(distill=d if adversarial else None,
                               bn=_scalar(bn_term), bal=_scalar(bal_term))
            totals["loss"] += _scalar(loss)
            totals["bn_loss"] += _scalar(bn_term)
            totals["bal_loss"] += _scalar(bal_term)
            totals["inv_loss"] += _scalar(inv_term)
            totals["distill_loss"] += d
            if adversarial:
                distill_min, distill_max = min(distill_min, d), max(distill_max, d)
            if self.cfg.debug_phase_checks:
                if self.student.state_hash() != pre_student:
                    raise ContractViolationError("student changed in an explore step")
                if self.teacher.state_hash() != pre_teacher:
                    raise ContractViolationError("teacher changed in an explore step")
        n = len(batches)
        return {
            "loss": totals["loss"] / n,
            "bn_loss": totals["bn_loss"] / n,
            "bal_loss": totals["bal_loss"] / n,
            "inv_loss": totals["inv_loss"] / n,
            "distill_loss": totals["distill_loss"] / n if adversarial else None,
            "distill_min": distill_min if adversarial else None,
            "distill_max": distill_max if adversarial else None,
        }

    # ---- evaluation -----------------------------------------------------

    def predict(self, dataset: ManifestDataset, batch_size: int = 256):
        module = self._eval_module()
        was_training = module.training
        module.eval()
        preds = []
        with torch.no_grad():
            for start in range(0, len(dataset), batch_size):
                indices = range(start, min(start + batch_size, len(dataset)))
                images, _ = dataset.batch(list(indices))
                preds.append(self._eval_logits(images).argmax(dim=1))
        module.train(was_training)
        return dataset.labels.clone(), torch.cat(preds)

    def evaluate_split(self, split: str) -> MetricsReport:
        dataset = {"train": self.train_set, "val": self.val_set, "test": self.test_set}[split]
        true_labels, predicted = self.predict(dataset)
        return compute_report(
            true_labels, predicted, self.cfg.data.num_classes, self.grouping
        )

    def _validation_accuracy(self) -> float:
        true_labels, predicted = self.predict(self.val_set)
        return float((true_labels == predicted).float().mean())

    # ---- persistence ----------------------------------------------------

    @property
    def last_checkpoint_path(self) -> Path:
        return self.out_dir / "checkpoints" / CHECKPOINT_NAME

    @property
    def best_checkpoint_path(self) -> Path:
        return self.out_dir / "checkpoints" / BEST_NAME

    def _save_atomic(self, payload: dict, path: Path) -> None:
        tmp = path.with_suffix(".tmp")
        torch.save(payload, tmp)
        os.replace(tmp, path)

    def save_last(self) -> None:
        payload = {
            "config_hash": self.config_hash,
            "state": asdict(self.state),
            "student": self.student.state_dict() if self.student else None,
            "teacher": self.teacher.state_dict()
            if self.teacher and self.cfg.method in TEACHER_HEAD_METHODS else None,
            "fpg": self.fpg.state_dict() if self.fpg else None,
            "optimizer": self.optimizer.state_dict(),
            "scheduler": self.scheduler.state_dict() if self.scheduler else None,
            "fpg_optimizer": self.fpg_optimizer.state_dict() if self.fpg_optimizer else None,
            "gen_data": self.gen_data.get_state(),
            "gen_prompt": self.gen_prompt.get_state(),
        }
        self._save_atomic(payload, self.last_checkpoint_path)

    def save_best(self, epoch: int, val_accuracy: float) -> None:
        payload = {
            "config_hash": self.config_hash,
            "method": self.cfg.method,
            "epoch": epoch,
            "val_accuracy": val_accuracy,
            "student": self.student.state_dict() if self.student else None,
            "teacher": self.teacher.state_dict()
            if self.teacher and self.cfg.method in TEACHER_HEAD_METHODS else None,
            "fpg": self.fpg.state_dict() if self.fpg else None,
        }
        self._save_atomic(payload, self.best_checkpoint_path)

    def load_resume(self) -> None:
        path = self.last_checkpoint_path
        if not path.exists():
            raise CheckpointError(f"no checkpoint to resume from at {path}")
        try:
            payload = torch.load(path, map_location="cpu", weights_only=False)
        except Exception as exc:
            raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
        if payload.get("config_hash") != self.config_hash:
            raise CheckpointError(
                "checkpoint was produced by a different configuration; refusing to resume"
            )
        self.state = TrainingState(**payload["state"])
        if self.student is not None:
            self.student.load_state_dict(payload["student"])
        if payload.get("teacher") is not None:
            self.teacher.load_state_dict(payload["teacher"])
        if self.fpg is not None:
            self.fpg.load_state_dict(payload["fpg"])
        self.optimizer.load_state_dict(payload["optimizer"])
        if self.scheduler is not None and payload.get("scheduler") is not None:
            self.scheduler.load_state_dict(payload["scheduler"])
        if self.fpg_optimizer is not None and payload.get("fpg_optimizer") is not None:
            self.fpg_optimizer.load_state_dict(payload["fpg_optimizer"])
        self.gen_data.set_state(payload["gen_data"])
        self.gen_prompt.set_state(payload["gen_prompt"])

    def _append_metrics(self, record: dict) -> None:
        with open(self.metrics_path, "a") as fh:
            fh.write(json.dumps(record) + "\n")

    def _check_teacher_immutable(self) -> None:
        if self.teacher_hash_baseline is not None:
            if self.teacher.state_hash() != self.teacher_hash_baseline:
                raise ContractViolationError(
                    "teacher parameters or statistics changed during training"
                )

    # ---- driver ---------------------------------------------------------

    def run(self, stop_after_epoch: int | None = None) -> TrainingResult:
        if self.state.epoch == 0 and not self.metrics_path.exists():
            save_config(self.cfg, self.out_dir / "config.yaml")
        while self.state.epoch < len(self.phases) and not self.state.stopped_early:
            epoch = self.state.epoch
            phase = self.phases[epoch]
            lr = self.optimizer.param_groups[0]["lr"]
            if phase == PHASE_EXPLOIT:
                stats = self.run_exploit_epoch()
                val_accuracy = self._validation_accuracy()
                improved = val_accuracy > self.state.best_val_accuracy
                if improved:
                    self.state.best_val_accuracy = val_accuracy
                    self.state.best_epoch = epoch
                    self.state.exploit_epochs_since_best = 0
                    self.save_best(epoch, val_accuracy)
                else:
                    self.state.exploit_epochs_since_best += 1
                record = {
                    "epoch": epoch, "phase": phase, **stats,
                    "bn_loss": None, "bal_loss": None, "inv_loss": None,
                    "lr": lr, "val_accuracy": val_accuracy,
                    "best_val_accuracy": self.state.best_val_accuracy,
                }
                if self.state.exploit_epochs_since_best >= self.cfg.schedule.early_stop_patience:
                    self.state.stopped_early = True
            else:
                stats = self.run_explore_epoch()
                record = {
                    "epoch": epoch, "phase": phase, **stats,
                    "target_loss": None,
                    "lr": self.cfg.optim.fpg_lr, "val_accuracy": None,
                    "best_val_accuracy": self.state.best_val_accuracy,
                }
            self._check_teacher_immutable()
            self.state.epoch = epoch + 1
            self._append_metrics(record)
            self.save_last()
            if stop_after_epoch is not None and self.state.epoch >= stop_after_epoch:
                break
        return TrainingResult(
            out_dir=str(self.out_dir),
            epochs_run=self.state.epoch,
            best_val_accuracy=self.state.best_val_accuracy,
            best_epoch=self.state.best_epoch,
            stopped_early=self.state.stopped_early,
            metrics_path=str(self.metrics_path),
            best_checkpoint_path=str(self.best_checkpoint_path),
        )


def train(config: ExperimentConfig, resume: bool = False,
          stop_after_epoch: int | None = None) -> TrainingResult:
    """Run (or resume) a full experiment and return its summary."""
    run = TrainingRun(config)
    if resume:
        run.load_resume()
    else:
        # a fresh run must not append to a previous run's artifacts
        for stale in (run.metrics_path, run.last_checkpoint_path, run.best_checkpoint_path):
            if stale.exists():
                stale.unlink()
    return run.run(stop_after_epoch=stop_after_epoch)


def load_best_into_run(run: TrainingRun):
    """Restore the best-validation weights into the run's live models."""
    path = run.best_checkpoint_path
    if not path.exists():
        raise CheckpointError(f"no best checkpoint at {path}")
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("config_hash") != run.config_hash:
        raise CheckpointError("best checkpoint belongs to a different configuration")
    if run.student is not None and payload.get("student") is not None:
        run.student.load_state_dict(payload["student"])
    if payload.get("teacher") is not None:
        run.teacher.load_state_dict(payload["teacher"])
    if run.fpg is not None and payload.get("fpg") is not None:
        run.fpg.load_state_dict(payload["fpg"])
    return payload
