"""Static plot and image-grid emission for run artifacts.

Prompts are spectra indexed with DC at [0, 0]; every rendering helper
shifts DC to the center and log-scales amplitudes for display only. Nothing
here feeds back into training.
"""

from __future__ import annotations

import json

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import torch
from torch import Tensor

from .spectral import decompose, mix_amplitude, reconstruct


def load_metrics(metrics_path) -> list[dict]:
    records = []
    with open(metrics_path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def plot_loss_curves(records: list[dict], path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for phase, key, label, style in (
        ("exploit", "loss", "exploitation loss", "-"),
        ("exploit", "distill_loss", "distillation term", "--"),
        ("explore", "inv_loss", "inversion loss", "-."),
    ):
        xs = [r["epoch"] for r in records if r["phase"] == phase and r.get(key) is not None]
        ys = [r[key] for r in records if r["phase"] == phase and r.get(key) is not None]
        if xs:
            ax.plot(xs, ys, style, label=label)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_validation_curve(records: list[dict], path) -> None:
    xs = [r["epoch"] for r in records if r.get("val_accuracy") is not None]
    ys = [r["val_accuracy"] for r in records if r.get("val_accuracy") is not None]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(xs, ys, marker="o", markersize=3)
    ax.set_xlabel("epoch")
    ax.set_ylabel("validation accuracy")
    ax.set_ylim(0.0, 1.0)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _to_display(img: np.ndarray) -> np.ndarray:
    return np.clip(img, 0.0, 1.0).transpose(1, 2, 0)


def prompt_display(delta: Tensor) -> np.ndarray:
    """Shift DC to the center and log-scale one prompt for viewing."""
    arr = delta.detach().cpu().numpy()
    shifted = np.fft.fftshift(arr, axes=(-2, -1))
    scaled = np.log1p(shifted)
    peak = scaled.max()
    if peak > 0:
        scaled = scaled / peak
    return scaled


def render_prompt_grid(prompts: Tensor, path) -> None:
    """One panel per prompt, channels rendered as RGB."""
    n = prompts.shape[0]
    fig, axes = plt.subplots(1, n, figsize=(2.2 * n, 2.4), squeeze=False)
    for i in range(n):
        axes[0, i].imshow(_to_display(prompt_display(prompts[i])))
        axes[0, i].set_title(f"prompt {i}", fontsize=8)
        axes[0, i].axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def mix_panel(images: Tensor, delta: Tensor, alphas) -> Tensor:
    """Reconstruct each image under every mixing coefficient, in float64.

    Returns a (num_images, num_alphas, 3, H, W) tensor. Float64 keeps the
    alpha=1 column exactly equal to the input images after 8-bit
    quantization.
    """
    images64 = images.to(torch.float64)
    delta64 = delta.detach().to(torch.float64)
    parts = decompose(images64)
    panels = []
    for alpha in alphas:
        mixed = mix_amplitude(parts.amplitude, delta64,
                              torch.full((images.shape[0],), float(alpha),
                                         dtype=torch.float64))
        panels.append(reconstruct(mixed, parts.phase))
    return torch.stack(panels, dim=1)


def image_to_uint8(img: Tensor) -> np.ndarray:
    arr = img.detach().cpu().numpy()
    return (np.clip(arr, 0.0, 1.0) * 255.0).round().astype(np.uint8)


def render_mix_grid(images: Tensor, panel: Tensor, alphas, path) -> None:
    """Rows are samples: the original image, then one column per alpha."""
    rows, cols = panel.shape[0], panel.shape[1] + 1
    fig, axes = plt.subplots(rows, cols, figsize=(1.6 * cols, 1.6 * rows), squeeze=False)
    for r in range(rows):
        axes[r, 0].imshow(image_to_uint8(images[r]).transpose(1, 2, 0))
        axes[r, 0].axis("off")
        if r == 0:
            axes[r, 0].set_title("x", fontsize=8)
        for c in range(panel.shape[1]):
            axes[r, c + 1].imshow(image_to_uint8(panel[r, c]).transpose(1, 2, 0))
            axes[r, c + 1].axis("off")
            if r == 0:
                axes[r, c + 1].set_title(f"a={float(alphas[c]):.2f}", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_confusion(cm: Tensor, class_names, path) -> None:
    arr = cm.detach().cpu().numpy()
    k = arr.shape[0]
    fig, ax = plt.subplots(figsize=(1.0 + 0.6 * k, 0.8 + 0.6 * k))
    im = ax.imshow(arr, cmap="viridis")
    ax.set_xticks(range(k), labels=class_names, rotation=45, ha="right", fontsize=7)
    ax.set_yticks(range(k), labels=class_names, fontsize=7)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    threshold = arr.max() / 2 if arr.max() > 0 else 0
    for i in range(k):
        for j in range(k):
            ax.text(j, i, str(int(arr[i, j])), ha="center", va="center", fontsize=6,
                    color="white" if arr[i, j] < threshold else "black")
    fig.colorbar(im, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
