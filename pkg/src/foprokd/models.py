"""Frozen teacher and trainable student wrappers.

The teacher is a frozen feature extractor whose batch-norm layers expose two
kinds of statistics: the stored running moments, and the moments of the
current batch's pre-normalization activations, observed through forward
hooks without ever mutating the network. The student pairs a backbone with a
classification head and a 2-layer MLP projection whose output dimension
matches the teacher's feature dimension.

Desk-scale runs use a small randomly initialized CNN for both roles; the
production path loads ResNet backbones from user-supplied checkpoints.
"""

from __future__ import annotations

import hashlib
import io
from typing import Iterable

import torch
from torch import Tensor, nn

from .exceptions import (
    CheckpointError,
    ContractViolationError,
    InvalidArgumentError,
    InvalidInputError,
)
from .losses import BNStatistics

CHECKPOINT_FORMAT_VERSION = 1

LINEAR_PROBE = "linear_probe"
FINE_TUNE = "fine_tune"
DISTILL_STUDENT = "distill_student"
TRANSFER_MODES = (LINEAR_PROBE, FINE_TUNE, DISTILL_STUDENT)

# Per-channel pixel normalization applied before the network. The ImageNet
# constants match the released ResNet checkpoints; the generic pair centers
# [0, 1] pixels.
IMAGENET_NORMALIZATION = ((0.485, 0.456, 0.406), (0.229, 0.224, 0.225))
GENERIC_NORMALIZATION = ((0.5, 0.5, 0.5), (0.25, 0.25, 0.25))


class TinyConvNet(nn.Module):
    """Small conv-BN-ReLU feature extractor with global average pooling."""

    def __init__(self, width: int = 16, depth: int = 3, in_channels: int = 3):
        super().__init__()
        if depth < 2:
            raise InvalidArgumentError("need depth >= 2 for at least two BN layers")
        blocks = []
        channels = in_channels
        out = width
        for d in range(depth):
            stride = 1 if d == 0 else 2
            blocks += [
                nn.Conv2d(channels, out, kernel_size=3, stride=stride, padding=1, bias=False),
                nn.BatchNorm2d(out),
                nn.ReLU(inplace=True),
            ]
            channels = out
            if d < depth - 1:
                out *= 2
        self.features = nn.Sequential(*blocks)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.feature_dim = channels

    def forward(self, x: Tensor) -> Tensor:
        return self.pool(self.features(x)).flatten(1)


def _resnet_extractor(name: str) -> tuple[nn.Module, int]:
    import torchvision.models as tvm

    factory = {"resnet18": tvm.resnet18, "resnet50": tvm.resnet50}[name]
    net = factory(weights=None)
    dim = net.fc.in_features
    net.fc = nn.Identity()
    return net, dim


def build_feature_extractor(arch: str, width: int = 16) -> tuple[nn.Module, int]:
    """Construct a pooled-feature backbone for a registered architecture id."""
    if arch == "tiny_cnn":
        net = TinyConvNet(width=width)
        return net, net.feature_dim
    if arch in ("resnet18", "resnet50"):
        return _resnet_extractor(arch)
    raise InvalidArgumentError(f"unknown architecture '{arch}'")


def state_hash(module: nn.Module) -> str:
    """SHA-256 over the module's full state dict (parameters and buffers)."""
    digest = hashlib.sha256()
    for key in sorted(module.state_dict()):
        tensor = module.state_dict()[key]
        digest.update(key.encode())
        buf = io.BytesIO()
        torch.save(tensor.detach().cpu(), buf)
        digest.update(buf.getvalue())
    return digest.hexdigest()


def _normalization_buffers(normalization) -> tuple[Tensor, Tensor]:
    mean, std = normalization
    mean_t = torch.tensor(mean, dtype=torch.float32).view(1, -1, 1, 1)
    std_t = torch.tensor(std, dtype=torch.float32).view(1, -1, 1, 1)
    if (std_t <= 0).any():
        raise InvalidArgumentError("normalization std must be positive")
    return mean_t, std_t


class TeacherHandle(nn.Module):
    """Frozen feature extractor with batch-norm statistics capture.

    Parameters and running statistics are immutable for the whole run unless
    a transfer mode explicitly unfreezes them; inside a distillation run the
    teacher is flagged and refuses fine-tuning.
    """

    def __init__(self, network: nn.Module, feature_dim: int, architecture: str,
                 normalization=GENERIC_NORMALIZATION):
        super().__init__()
        self.network = network
        self.feature_dim = feature_dim
        self.architecture = architecture
        self.classifier: nn.Linear | None = None
        self.frozen_run = False
        mean_t, std_t = _normalization_buffers(normalization)
        self.register_buffer("input_mean", mean_t)
        self.register_buffer("input_std", std_t)
        self.bn_layers = [m for m in network.modules() if isinstance(m, nn.BatchNorm2d)]
        self._captured: list | None = None
        for index, bn in enumerate(self.bn_layers):
            bn.register_forward_pre_hook(self._observe(index))
        self.freeze()

    def _observe(self, index: int):
        def hook(module, inputs):
            if self._captured is None:
                return
            activations = inputs[0]
            self._captured[index] = (
                activations.mean(dim=(0, 2, 3)),
                activations.var(dim=(0, 2, 3), unbiased=False),
            )

        return hook

    def freeze(self) -> None:
        for p in self.network.parameters():
            p.requires_grad_(False)
        self.network.eval()

    def train(self, mode: bool = True):
        # Keep BN layers in eval unless fine-tuning was explicitly requested;
        # statistics capture observes batch moments without ever updating the
        # running buffers.
        super().train(mode)
        if mode and not any(p.requires_grad for p in self.network.parameters()):
            self.network.eval()
        return self

    def normalize(self, x: Tensor) -> Tensor:
        return (x - self.input_mean) / self.input_std

    def forward(self, x: Tensor, capture_stats: bool = False):
        """Return pooled features, and batch statistics when capture is on."""
        if not torch.isfinite(x).all():
            raise InvalidInputError("teacher input contains non-finite entries")
        if capture_stats:
            if x.shape[0] < 2:
                raise InvalidArgumentError(
                    "batch variance is undefined for batch size 1; need at least 2 samples"
                )
            self._captured = [None] * len(self.bn_layers)
        try:
            features = self.network(self.normalize(x))
            if not capture_stats:
                return features, None
            if any(entry is None for entry in self._captured):
                raise ContractViolationError("a BN layer was not visited during capture")
            return features, BNStatistics.from_pairs(self._captured)
        finally:
            self._captured = None

    def running_statistics(self) -> BNStatistics:
        return BNStatistics.from_pairs(
            [(bn.running_mean, bn.running_var) for bn in self.bn_layers]
        )

    def attach_classifier(self, num_classes: int) -> nn.Linear:
        """Create a fresh linear head on the pooled features."""
        self.classifier = nn.Linear(self.feature_dim, num_classes)
        return self.classifier

    def classify(self, x: Tensor) -> Tensor:
        if self.classifier is None:
            raise InvalidArgumentError("no classifier head attached to this teacher")
        features, _ = self.forward(x)
        return self.classifier(features)

    def state_hash(self) -> str:
        return state_hash(self)

    def save_checkpoint(self, path, config_hash: str | None = None) -> None:
        torch.save(
            {
                "format_version": CHECKPOINT_FORMAT_VERSION,
                "kind": "teacher",
                "architecture": self.architecture,
                # first BN channel count pins the backbone width on reload
                "width": self.bn_layers[0].num_features,
                "feature_dim": self.feature_dim,
                "frozen_run": self.frozen_run,
                "normalization": (
                    self.input_mean.flatten().tolist(),
                    self.input_std.flatten().tolist(),
                ),
                "state_dict": self.network.state_dict(),
                "head": None if self.classifier is None else {
                    "num_classes": self.classifier.out_features,
                    "state_dict": self.classifier.state_dict(),
                },
                "config_hash": config_hash,
            },
            path,
        )

    @classmethod
    def load_checkpoint(cls, path) -> "TeacherHandle":
        try:
            payload = torch.load(path, map_location="cpu", weights_only=True)
        except Exception as exc:
            raise CheckpointError(f"cannot read teacher checkpoint {path}: {exc}") from exc
        for key in ("kind", "architecture", "state_dict", "normalization"):
            if key not in payload:
                raise CheckpointError(f"teacher checkpoint {path} lacks field '{key}'")
        if payload["kind"] != "teacher":
            raise CheckpointError(f"checkpoint {path} is a '{payload['kind']}', not a teacher")
        network, dim = build_feature_extractor(
            payload["architecture"], width=payload.get("width", 16)
        )
        try:
            network.load_state_dict(payload["state_dict"])
        except RuntimeError as exc:
            raise CheckpointError(f"checkpoint {path} does not fit its architecture: {exc}") from exc
        handle = cls(network, dim, payload["architecture"],
                     normalization=payload["normalization"])
        head = payload.get("head")
        if head is not None:
            handle.attach_classifier(head["num_classes"])
            handle.classifier.load_state_dict(head["state_dict"])
        handle.frozen_run = bool(payload.get("frozen_run", False))
        return handle


class StudentHandle(nn.Module):
    """Trainable backbone with a classifier head and an MLP projection.

    The projection maps backbone features to the teacher's feature dimension
    through one hidden layer of that same dimension; logits and projection
    share a single backbone pass.
    """

    def __init__(self, backbone: nn.Module, feature_dim: int, num_classes: int,
                 teacher_dim: int, architecture: str):
        super().__init__()
        if num_classes < 2:
            raise InvalidArgumentError("need at least 2 classes")
        self.backbone = backbone
        self.feature_dim = feature_dim
        self.num_classes = num_classes
        self.teacher_dim = teacher_dim
        self.architecture = architecture
        self.classifier = nn.Linear(feature_dim, num_classes)
        self.projection = nn.Sequential(
            nn.Linear(feature_dim, teacher_dim),
            nn.ReLU(inplace=True),
            nn.Linear(teacher_dim, teacher_dim),
        )

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        features = self.backbone(x)
        return self.classifier(features), self.projection(features)

    def state_hash(self) -> str:
        return state_hash(self)

    def save_checkpoint(self, path, config_hash: str | None = None) -> None:
        first_bn = next(m for m in self.backbone.modules() if isinstance(m, nn.BatchNorm2d))
        torch.save(
            {
                "format_version": CHECKPOINT_FORMAT_VERSION,
                "kind": "student",
                "architecture": self.architecture,
                "width": first_bn.num_features,
                "feature_dim": self.feature_dim,
                "num_classes": self.num_classes,
                "teacher_dim": self.teacher_dim,
                "state_dict": self.state_dict(),
                "config_hash": config_hash,
            },
            path,
        )

    @classmethod
    def load_checkpoint(cls, path) -> "StudentHandle":
        try:
            payload = torch.load(path, map_location="cpu", weights_only=True)
        except Exception as exc:
            raise CheckpointError(f"cannot read student checkpoint {path}: {exc}") from exc
        if payload.get("kind") != "student":
            raise CheckpointError(f"checkpoint {path} is not a student checkpoint")
        backbone, dim = build_feature_extractor(
            payload["architecture"], width=payload.get("width", 16)
        )
        handle = cls(
            backbone,
            dim,
            payload["num_classes"],
            payload["teacher_dim"],
            payload["architecture"],
        )
        try:
            handle.load_state_dict(payload["state_dict"])
        except RuntimeError as exc:
            raise CheckpointError(f"checkpoint {path} does not fit its architecture: {exc}") from exc
        return handle


def trainable_parameter_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters() if p.requires_grad)


def set_transfer_mode(handle: nn.Module, mode: str) -> nn.Module:
    """Configure which parameters train under a given transfer regime.

    ``linear_probe`` leaves only a fresh linear head trainable on frozen
    features; ``fine_tune`` unfreezes everything; ``distill_student`` makes a
    student fully trainable and marks a teacher as frozen for the run.
    Fine-tuning a teacher that is flagged as frozen for a distillation run is
    a contract violation.
    """
    if mode not in TRANSFER_MODES:
        raise InvalidArgumentError(f"unknown transfer mode '{mode}'")

    if isinstance(handle, TeacherHandle):
        if mode == DISTILL_STUDENT:
            handle.freeze()
            handle.frozen_run = True
            return handle
        if mode == FINE_TUNE:
            if handle.frozen_run:
                raise ContractViolationError(
                    "teacher is frozen for a distillation run and cannot be fine-tuned"
                )
            for p in handle.network.parameters():
                p.requires_grad_(True)
            handle.network.train()
            if handle.classifier is not None:
                for p in handle.classifier.parameters():
                    p.requires_grad_(True)
            return handle
        # linear probe
        handle.freeze()
        if handle.classifier is None:
            raise InvalidArgumentError("attach a classifier head before linear probing")
        for p in handle.classifier.parameters():
            p.requires_grad_(True)
        return handle

    if isinstance(handle, StudentHandle):
        if mode == LINEAR_PROBE:
            for p in handle.parameters():
                p.requires_grad_(False)
            for p in handle.classifier.parameters():
                p.requires_grad_(True)
        else:
            for p in handle.parameters():
                p.requires_grad_(True)
        return handle

    raise InvalidArgumentError(f"cannot set transfer mode on {type(handle).__name__}")


def calibrate_bn_statistics(network: nn.Module, batches: Iterable[Tensor]) -> None:
    """Populate BN running statistics by streaming batches in training mode.

    Uses cumulative averaging so the result is independent of momentum, then
    restores eval mode. Intended for desk-scale teachers whose buffers would
    otherwise hold the (0, 1) defaults.
    """
    bns = [m for m in network.modules() if isinstance(m, nn.BatchNorm2d)]
    saved_momentum = [bn.momentum for bn in bns]
    for bn in bns:
        bn.momentum = None
        bn.reset_running_stats()
    network.train()
    with torch.no_grad():
        for batch in batches:
            network(batch)
    for bn, momentum in zip(bns, saved_momentum):
        bn.momentum = momentum
    network.eval()


def build_teacher(
    arch: str = "tiny_cnn",
    checkpoint=None,
    seed: int = 0,
    width: int = 16,
    normalization=None,
    bn_calibration_batches: int = 0,
    calibration_resolution: int = 32,
) -> TeacherHandle:
    """Create a frozen teacher, from a checkpoint or randomly initialized.

    Random teachers can calibrate their BN running statistics on seeded noise
    so the stored moments correspond to an actual input distribution.
    """
    if checkpoint is not None:
        return TeacherHandle.load_checkpoint(checkpoint)
    if normalization is None:
        normalization = IMAGENET_NORMALIZATION if arch.startswith("resnet") else GENERIC_NORMALIZATION
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        network, dim = build_feature_extractor(arch, width=width)
        handle = TeacherHandle(network, dim, arch, normalization=normalization)
        if bn_calibration_batches > 0:
            gen = torch.Generator().manual_seed(seed + 1)
            batches = [
                handle.normalize(
                    torch.rand(16, 3, calibration_resolution, calibration_resolution, generator=gen)
                )
                for _ in range(bn_calibration_batches)
            ]
            calibrate_bn_statistics(network, batches)
            handle.freeze()
    return handle


def build_student(
    arch: str = "tiny_cnn",
    num_classes: int = 8,
    teacher_dim: int = 64,
    seed: int = 0,
    width: int = 16,
) -> StudentHandle:
    """Create a trainable student with deterministic initialization."""
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        backbone, dim = build_feature_extractor(arch, width=width)
        return StudentHandle(backbone, dim, num_classes, teacher_dim, arch)
