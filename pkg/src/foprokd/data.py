"""Long-tailed dataset construction, sampling, and synthetic image generation.

A dataset is a manifest of ``(path, label, split)`` rows. Paths are either
real image files or ``synthetic://`` keys that the loader renders
procedurally, so desk-scale experiments need no image files on disk.

Split construction holds out the balanced validation and test sets first and
samples the training set from the remainder, so an uncapped head class
contributes exactly ``full - (val + test)`` training images.
"""

from __future__ import annotations

import csv
import json
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import torch
from torch import Tensor
from torch.nn import functional as F

from .exceptions import (
    DatasetShortfallError,
    InvalidArgumentError,
    InvalidManifestError,
)

SPLITS = ("train", "val", "test")
SYNTHETIC_SCHEME = "synthetic://"
HEAD_MIN = 700
TAIL_MAX = 70


@dataclass(frozen=True)
class LongTailSpec:
    """Per-class counts describing one long-tailed split of a dataset."""

    class_names: tuple[str, ...]
    full_counts: tuple[int, ...]
    train_targets: tuple[int, ...]
    val_per_class: int = 50
    test_per_class: int = 100
    ratio_label: str = ""
    seed: int = 0

    def __post_init__(self):
        k = len(self.class_names)
        if k < 2:
            raise InvalidArgumentError("need at least 2 classes")
        if len(self.full_counts) != k or len(self.train_targets) != k:
            raise InvalidArgumentError("count vectors must match the class list length")
        if self.val_per_class < 1 or self.test_per_class < 1:
            raise InvalidArgumentError("val and test per-class counts must be >= 1")
        holdout = self.val_per_class + self.test_per_class
        for name, full, target in zip(self.class_names, self.full_counts, self.train_targets):
            if target < 1 or full < 1:
                raise InvalidArgumentError(f"class '{name}' has a count below 1")
            if target > full - holdout:
                raise DatasetShortfallError(
                    f"class '{name}': train target {target} exceeds "
                    f"available {full} - {holdout} held out"
                )

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def holdout_per_class(self) -> int:
        return self.val_per_class + self.test_per_class


def isic_longtail_spec(ratio_label: str = "1:100", seed: int = 0) -> LongTailSpec:
    """The published skin-lesion long-tail split for a given imbalance ratio."""
    payload = json.loads(
        resources.files("foprokd").joinpath("fixtures/isic_lt.json").read_text()
    )
    targets = payload["train_targets"]
    if ratio_label not in targets:
        raise InvalidArgumentError(
            f"unknown ratio '{ratio_label}'; available: {sorted(targets)}"
        )
    return LongTailSpec(
        class_names=tuple(payload["classes"]),
        full_counts=tuple(payload["full_counts"]),
        train_targets=tuple(targets[ratio_label]),
        val_per_class=payload["val_per_class"],
        test_per_class=payload["test_per_class"],
        ratio_label=ratio_label,
        seed=seed,
    )


@dataclass(frozen=True)
class ManifestRow:
    path: str
    label: int
    split: str


@dataclass
class DatasetManifest:
    """Ordered rows of (path, label, split) with disjoint split membership."""

    rows: list[ManifestRow] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def num_classes(self) -> int:
        return max(r.label for r in self.rows) + 1 if self.rows else 0

    def split_rows(self, split: str) -> list[ManifestRow]:
        if split not in SPLITS:
            raise InvalidArgumentError(f"unknown split '{split}'")
        return [r for r in self.rows if r.split == split]

    def split_counts(self, split: str) -> list[int]:
        counts = [0] * self.num_classes
        for r in self.split_rows(split):
            counts[r.label] += 1
        return counts

    def train_counts(self) -> list[int]:
        return self.split_counts("train")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["path", "label", "split"])
            for r in self.rows:
                writer.writerow([r.path, r.label, r.split])

    @classmethod
    def read_csv(cls, path) -> "DatasetManifest":
        rows = []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["path", "label", "split"]:
                raise InvalidManifestError(
                    f"{path}: expected header 'path,label,split', got {header}"
                )
            for lineno, rec in enumerate(reader, start=2):
                if len(rec) != 3:
                    raise InvalidManifestError(f"{path}:{lineno}: expected 3 fields")
                p, label_s, split = rec
                try:
                    label = int(label_s)
                except ValueError:
                    raise InvalidManifestError(
                        f"{path}:{lineno}: label '{label_s}' is not an integer"
                    ) from None
                if label < 0:
                    raise InvalidManifestError(f"{path}:{lineno}: negative label")
                if split not in SPLITS:
                    raise InvalidManifestError(f"{path}:{lineno}: unknown split '{split}'")
                rows.append(ManifestRow(p, label, split))
        return cls(rows)


def _paths_by_class(full: "DatasetManifest | Mapping[int, Sequence[str]]",
                    num_classes: int) -> list[list[str]]:
    if isinstance(full, DatasetManifest):
        buckets: list[list[str]] = [[] for _ in range(num_classes)]
        for r in full.rows:
            if r.label >= num_classes:
                raise InvalidManifestError(
                    f"label {r.label} out of range for {num_classes} classes"
                )
            buckets[r.label].append(r.path)
        return buckets
    return [list(full[k]) for k in range(num_classes)]


def build_longtail_split(full, spec: LongTailSpec) -> DatasetManifest:
    """Sample a long-tailed manifest from a pool of per-class paths.

    Holds out val then test per class before drawing the train subset, all
    from one seeded permutation, so identical seeds reproduce the manifest
    exactly.
    """
    buckets = _paths_by_class(full, spec.num_classes)
    rows: list[ManifestRow] = []
    for label, name in enumerate(spec.class_names):
        pool = buckets[label]
        needed = spec.train_targets[label] + spec.holdout_per_class
        if len(pool) < needed:
            raise DatasetShortfallError(
                f"class '{name}': need {needed} samples "
                f"(train {spec.train_targets[label]} + holdout {spec.holdout_per_class}), "
                f"manifest provides {len(pool)}"
            )
        rng = np.random.default_rng([spec.seed, label])
        order = rng.permutation(len(pool))
        cursor = 0
        for split, count in (
            ("val", spec.val_per_class),
            ("test", spec.test_per_class),
            ("train", spec.train_targets[label]),
        ):
            for i in order[cursor:cursor + count]:
                rows.append(ManifestRow(pool[int(i)], label, split))
            cursor += count
    return DatasetManifest(rows)


@dataclass(frozen=True)
class ShotGrouping:
    """Head/medium/tail assignment computed from training counts."""

    groups: tuple[str, ...]
    head_min: int = HEAD_MIN
    tail_max: int = TAIL_MAX

    GROUP_NAMES = ("head", "medium", "tail")

    def indices(self, group: str) -> list[int]:
        if group not in self.GROUP_NAMES:
            raise InvalidArgumentError(f"unknown group '{group}'")
        return [i for i, g in enumerate(self.groups) if g == group]


def shot_grouping(train_counts: Sequence[int], head_min: int = HEAD_MIN,
                  tail_max: int = TAIL_MAX) -> ShotGrouping:
    """Classes with more than head_min samples are head, fewer than tail_max tail."""
    groups = []
    for count in train_counts:
        if count < 1:
            raise InvalidArgumentError("shot grouping requires counts >= 1")
        if count > head_min:
            groups.append("head")
        elif count < tail_max:
            groups.append("tail")
        else:
            groups.append("medium")
    return ShotGrouping(tuple(groups), head_min, tail_max)


def class_balanced_sampler(labels: Sequence[int], num_samples: int,
                           generator: torch.Generator) -> Tensor:
    """Draw indices so every class has equal expected frequency.

    Samples a class uniformly, then an instance uniformly within it, with
    replacement. One call covers one epoch of ``num_samples`` draws.
    """
    labels_t = torch.as_tensor(labels, dtype=torch.long)
    if labels_t.numel() == 0:
        raise InvalidManifestError("cannot sample from an empty train split")
    num_classes = int(labels_t.max().item()) + 1
    per_class = [(labels_t == k).nonzero(as_tuple=True)[0] for k in range(num_classes)]
    for k, members in enumerate(per_class):
        if members.numel() == 0:
            raise InvalidManifestError(f"class {k} has no training samples")
    class_draw = torch.randint(num_classes, (num_samples,), generator=generator)
    out = torch.empty(num_samples, dtype=torch.long)
    for k in range(num_classes):
        slots = (class_draw == k).nonzero(as_tuple=True)[0]
        if slots.numel():
            picks = torch.randint(per_class[k].numel(), (slots.numel(),), generator=generator)
            out[slots] = per_class[k][picks]
    return out


def reweighting_weights(train_counts: Sequence[int]) -> Tensor:
    """Per-class loss weights proportional to 1/n, normalized to sum to K."""
    counts = torch.as_tensor(train_counts, dtype=torch.float64)
    if (counts < 1).any():
        raise InvalidArgumentError("reweighting requires counts >= 1")
    inv = 1.0 / counts
    return (inv * counts.numel() / inv.sum()).to(torch.float32)


def synthetic_key(seed: int, label: int, index: int) -> str:
    return f"{SYNTHETIC_SCHEME}{seed}/{label}/{index}"


def parse_synthetic_key(path: str) -> tuple[int, int, int]:
    body = path[len(SYNTHETIC_SCHEME):]
    try:
        seed_s, label_s, index_s = body.split("/")
        return int(seed_s), int(label_s), int(index_s)
    except ValueError:
        raise InvalidManifestError(f"malformed synthetic key '{path}'") from None


def synthetic_image(seed: int, label: int, index: int, num_classes: int,
                    resolution: int) -> np.ndarray:
    """Render one procedural RGB image as a float32 CHW array in [0, 1].

    Each class owns a hue and an oriented grating frequency; per-image phase,
    small frequency jitter, and pixel noise come from an RNG keyed on
    (seed, label, index), so regeneration is byte-identical.
    """
    rng = np.random.default_rng([seed, label, index])
    h = w = resolution
    hue = 2.0 * np.pi * label / num_classes
    base = 0.5 + 0.32 * np.array(
        [np.cos(hue), np.cos(hue - 2.0 * np.pi / 3.0), np.cos(hue + 2.0 * np.pi / 3.0)]
    )
    theta = np.pi * label / num_classes + rng.normal(0.0, 0.03)
    cycles = 3.0 + 2.0 * (label % 4) + rng.normal(0.0, 0.1)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    ys, xs = np.meshgrid(np.arange(h) / h, np.arange(w) / w, indexing="ij")
    coord = np.cos(theta) * xs + np.sin(theta) * ys
    grating = 0.22 * np.sin(2.0 * np.pi * cycles * coord + phase)
    img = base[:, None, None] + grating[None, :, :] + rng.normal(0.0, 0.05, (3, h, w))
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def synthetic_full_manifest(spec: LongTailSpec) -> DatasetManifest:
    """A pool manifest with exactly target + holdout synthetic keys per class."""
    rows = []
    for label in range(spec.num_classes):
        total = spec.train_targets[label] + spec.holdout_per_class
        for index in range(total):
            rows.append(ManifestRow(synthetic_key(spec.seed, label, index), label, "train"))
    return DatasetManifest(rows)


def synthetic_dataset_generate(spec: LongTailSpec) -> DatasetManifest:
    """Build the long-tailed split over procedurally generated images."""
    return build_longtail_split(synthetic_full_manifest(spec), spec)


class ManifestDataset:
    """Indexable image source over one split of a manifest.

    Synthetic keys are rendered on the fly; file paths are loaded with
    pillow and resized. Loaded tensors are cached in memory when the split
    is small enough to hold.
    """

    CACHE_BUDGET_BYTES = 256 * 1024 * 1024

    def __init__(self, manifest: DatasetManifest, split: str, resolution: int,
                 num_classes: int | None = None, root=None):
        self.rows = manifest.split_rows(split)
        if not self.rows:
            raise InvalidManifestError(f"split '{split}' is empty")
        self.resolution = resolution
        self.num_classes = num_classes or manifest.num_classes
        self.root = Path(root) if root else None
        self.labels = torch.tensor([r.label for r in self.rows], dtype=torch.long)
        nbytes = len(self.rows) * 3 * resolution * resolution * 4
        self._cache: dict[int, Tensor] | None = {} if nbytes <= self.CACHE_BUDGET_BYTES else None

    def __len__(self) -> int:
        return len(self.rows)

    def _load(self, row: ManifestRow) -> Tensor:
        if row.path.startswith(SYNTHETIC_SCHEME):
            seed, label, index = parse_synthetic_key(row.path)
            arr = synthetic_image(seed, label, index, self.num_classes, self.resolution)
            return torch.from_numpy(arr)
        from PIL import Image

        path = Path(row.path)
        if self.root and not path.is_absolute():
            path = self.root / path
        with Image.open(path) as im:
            im = im.convert("RGB").resize((self.resolution, self.resolution), Image.BILINEAR)
            arr = np.asarray(im, dtype=np.float32) / 255.0
        return torch.from_numpy(arr).permute(2, 0, 1).contiguous()

    def __getitem__(self, index: int) -> tuple[Tensor, int]:
        if self._cache is not None and index in self._cache:
            return self._cache[index], self.rows[index].label
        image = self._load(self.rows[index])
        if self._cache is not None:
            self._cache[index] = image
        return image, self.rows[index].label

    def batch(self, indices: Sequence[int] | Tensor) -> tuple[Tensor, Tensor]:
        images = torch.stack([self[int(i)][0] for i in indices])
        labels = self.labels[torch.as_tensor(indices, dtype=torch.long)]
        return images, labels


def augment_batch(images: Tensor, generator: torch.Generator, pad: int = 4) -> Tensor:
    """Random crop after zero padding, then random horizontal flip.

    Consumes the generator in a fixed order (offsets, then flips) so training
    trajectories are reproducible.
    """
    b, _, h, w = images.shape
    offsets = torch.randint(0, 2 * pad + 1, (b, 2), generator=generator)
    flips = torch.rand(b, generator=generator) < 0.5
    padded = F.pad(images, (pad, pad, pad, pad))
    out = torch.empty_like(images)
    for i in range(b):
        dy, dx = int(offsets[i, 0]), int(offsets[i, 1])
        crop = padded[i, :, dy:dy + h, dx:dx + w]
        out[i] = torch.flip(crop, dims=(-1,)) if flips[i] else crop
    return out
