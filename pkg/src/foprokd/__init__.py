"""Fourier-prompted knowledge distillation for long-tailed image classification.

The package trains a small student against a frozen pretrained teacher. A
learned Fourier amplitude prompt, mixed into each image's spectrum, steers
the teacher toward the frequency content it represents best; alternating
exploration (prompt learning by batch-norm statistics inversion) and
exploitation (student distillation) epochs transfer those representations.
"""

from .config import (
    DataConfig,
    ExperimentConfig,
    ModelConfig,
    OptimConfig,
    PhaseSchedule,
    config_hash,
    desk_scale_config,
    load_config,
    save_config,
)
from .data import (
    DatasetManifest,
    LongTailSpec,
    ManifestDataset,
    ShotGrouping,
    build_longtail_split,
    class_balanced_sampler,
    isic_longtail_spec,
    reweighting_weights,
    shot_grouping,
    synthetic_dataset_generate,
)
from .exceptions import FoproKDError
from .fpg import FourierPromptGenerator, sample_noise
from .losses import (
    BNStatistics,
    LossWeights,
    balance_loss,
    balanced_softmax_loss,
    bn_regularization,
    ekd_loss,
    exploitation_loss,
    exploration_loss,
    inversion_loss,
)
from .metrics import MetricsReport, compute_report, confusion_matrix
from .models import (
    StudentHandle,
    TeacherHandle,
    build_student,
    build_teacher,
    set_transfer_mode,
)
from .spectral import (
    SpectralDecomposition,
    decompose,
    hermitian_project,
    mix_amplitude,
    reconstruct,
)
from .training import TrainingRun, phase_sequence, train

__version__ = "0.1.0"

__all__ = [
    "BNStatistics",
    "DataConfig",
    "DatasetManifest",
    "ExperimentConfig",
    "FoproKDError",
    "FourierPromptGenerator",
    "LongTailSpec",
    "LossWeights",
    "ManifestDataset",
    "MetricsReport",
    "ModelConfig",
    "OptimConfig",
    "PhaseSchedule",
    "ShotGrouping",
    "SpectralDecomposition",
    "StudentHandle",
    "TeacherHandle",
    "TrainingRun",
    "balance_loss",
    "balanced_softmax_loss",
    "bn_regularization",
    "build_longtail_split",
    "build_student",
    "build_teacher",
    "class_balanced_sampler",
    "compute_report",
    "config_hash",
    "confusion_matrix",
    "decompose",
    "desk_scale_config",
    "ekd_loss",
    "exploitation_loss",
    "exploration_loss",
    "hermitian_project",
    "inversion_loss",
    "isic_longtail_spec",
    "load_config",
    "mix_amplitude",
    "phase_sequence",
    "reconstruct",
    "reweighting_weights",
    "sample_noise",
    "save_config",
    "set_transfer_mode",
    "shot_grouping",
    "synthetic_dataset_generate",
    "train",
]
