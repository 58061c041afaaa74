"""Imbalance-aware classification metrics over confusion matrices.

All metrics are pure functions of a K x K confusion matrix with rows indexed
by the true class and columns by the predicted class. Multiclass correlation
uses the confusion-matrix form c*s - sum(p_k*t_k) over the geometric mean of
the marginal dispersions, with 0 returned when a marginal is degenerate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import torch
from torch import Tensor

from .data import ShotGrouping
from .exceptions import InvalidInputError


def confusion_matrix(true_labels: Sequence[int] | Tensor,
                     predicted_labels: Sequence[int] | Tensor,
                     num_classes: int) -> Tensor:
    true_t = torch.as_tensor(true_labels, dtype=torch.long)
    pred_t = torch.as_tensor(predicted_labels, dtype=torch.long)
    if true_t.numel() == 0:
        raise InvalidInputError("cannot build a confusion matrix from zero samples")
    if true_t.shape != pred_t.shape:
        raise InvalidInputError("true and predicted label lists differ in length")
    if true_t.min() < 0 or true_t.max() >= num_classes or pred_t.min() < 0 \
            or pred_t.max() >= num_classes:
        raise InvalidInputError("labels out of range")
    cm = torch.zeros(num_classes, num_classes, dtype=torch.long)
    for t, p in zip(true_t.tolist(), pred_t.tolist()):
        cm[t, p] += 1
    return cm


def _check_cm(cm: Tensor) -> Tensor:
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1] or cm.numel() == 0:
        raise InvalidInputError("confusion matrix must be square and nonempty")
    if cm.sum() == 0:
        raise InvalidInputError("confusion matrix holds no samples")
    if (cm < 0).any():
        raise InvalidInputError("confusion matrix entries must be nonnegative")
    return cm.to(torch.float64)


def accuracy(cm: Tensor) -> float:
    m = _check_cm(cm)
    return float(m.diagonal().sum() / m.sum())


def mcc(cm: Tensor) -> float:
    """Multiclass correlation from confusion-matrix marginals; 0 if degenerate."""
    m = _check_cm(cm)
    s = m.sum()
    c = m.diagonal().sum()
    t = m.sum(dim=1)
    p = m.sum(dim=0)
    cov = c * s - (p * t).sum()
    denom_t = s * s - (t * t).sum()
    denom_p = s * s - (p * p).sum()
    if denom_t <= 0 or denom_p <= 0:
        return 0.0
    return float(cov / torch.sqrt(denom_t * denom_p))


def _recalls(cm: Tensor) -> tuple[Tensor, Tensor]:
    m = _check_cm(cm)
    support = m.sum(dim=1)
    present = support > 0
    recalls = torch.zeros_like(support)
    recalls[present] = m.diagonal()[present] / support[present]
    return recalls, present


def balanced_accuracy(cm: Tensor) -> float:
    """Mean per-class recall; classes absent from the true labels are skipped."""
    recalls, present = _recalls(cm)
    if not present.all():
        absent = [i for i, ok in enumerate(present.tolist()) if not ok]
        warnings.warn(
            f"balanced accuracy excludes classes with no true samples: {absent}",
            stacklevel=2,
        )
    return float(recalls[present].mean())


def macro_f1(cm: Tensor) -> float:
    m = _check_cm(cm)
    k = m.shape[0]
    f1s = []
    for i in range(k):
        tp = m[i, i]
        denom = m[i, :].sum() + m[:, i].sum()
        # support + predictions both zero: the class contributes F1 = 0
        f1s.append(0.0 if denom == 0 else float(2 * tp / denom))
    return sum(f1s) / k


def grouped_accuracy(cm: Tensor, grouping: ShotGrouping) -> dict[str, float | None]:
    """Mean per-class recall within each shot group, plus their unweighted mean.

    A group with no evaluable classes reports None and drops out of "all"
    with a warning.
    """
    recalls, present = _recalls(cm)
    if len(grouping.groups) != cm.shape[0]:
        raise InvalidInputError("grouping does not cover the confusion matrix classes")
    out: dict[str, float | None] = {}
    defined = []
    for name in ShotGrouping.GROUP_NAMES:
        members = [i for i in grouping.indices(name) if present[i]]
        skipped = [i for i in grouping.indices(name) if not present[i]]
        if skipped:
            warnings.warn(
                f"group '{name}' excludes classes with no true samples: {skipped}",
                stacklevel=2,
            )
        if members:
            value = float(recalls[torch.tensor(members)].mean())
            out[name] = value
            defined.append(value)
        else:
            warnings.warn(f"group '{name}' has no evaluable classes", stacklevel=2)
            out[name] = None
    out["all"] = sum(defined) / len(defined) if defined else None
    return out


@dataclass
class MetricsReport:
    """Bundle of all scalar metrics for one evaluation pass."""

    mcc: float
    accuracy: float
    balanced_accuracy: float
    macro_f1: float
    grouped: dict[str, float | None] = field(default_factory=dict)
    num_samples: int = 0

    def to_dict(self) -> dict:
        return {
            "mcc": self.mcc,
            "accuracy": self.accuracy,
            "balanced_accuracy": self.balanced_accuracy,
            "macro_f1": self.macro_f1,
            "grouped": dict(self.grouped),
            "num_samples": self.num_samples,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "MetricsReport":
        return cls(
            mcc=payload["mcc"],
            accuracy=payload["accuracy"],
            balanced_accuracy=payload["balanced_accuracy"],
            macro_f1=payload["macro_f1"],
            grouped=dict(payload.get("grouped", {})),
            num_samples=payload.get("num_samples", 0),
        )


def compute_report(true_labels, predicted_labels, num_classes: int,
                   grouping: ShotGrouping | None = None) -> MetricsReport:
    cm = confusion_matrix(true_labels, predicted_labels, num_classes)
    report = MetricsReport(
        mcc=mcc(cm),
        accuracy=accuracy(cm),
        balanced_accuracy=balanced_accuracy(cm),
        macro_f1=macro_f1(cm),
        num_samples=int(cm.sum()),
    )
    if grouping is not None:
        report.grouped = grouped_accuracy(cm, grouping)
    return report
