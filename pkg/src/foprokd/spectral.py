"""Fourier-domain image manipulation.

Images are decomposed into an amplitude/phase pair, the amplitude is blended
with a learned amplitude prompt, and the blend is transformed back to pixel
space. Conventions used throughout:

* unnormalized forward 2-D DFT, ``1/(HW)``-normalized inverse (the torch
  default), so decompose -> reconstruct is an exact roundtrip;
* spectra are indexed in unshifted DFT coordinates with the DC bin at
  ``[0, 0]``; any centering is display-only and lives in :mod:`foprokd.viz`;
* a valid amplitude prompt is nonnegative and Hermitian-symmetric per
  channel, i.e. ``delta[u, v] == delta[(H-u) % H, (W-v) % W]``, which keeps
  reconstructed images real.

Everything here is a pure function of its tensor arguments and participates
in autograd, so gradients flow from reconstructed pixels back to amplitudes,
prompts, and mixing coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import Tensor

from .exceptions import ContractViolationError, InvalidArgumentError, InvalidInputError

# Relative asymmetry above which a claimed-Hermitian amplitude is rejected.
HERMITIAN_TOLERANCE = 1e-4


@dataclass(frozen=True)
class SpectralDecomposition:
    """Amplitude/phase pair of an image batch, both shaped ``B x C x H x W``."""

    amplitude: Tensor
    phase: Tensor


def _require_finite(t: Tensor, name: str) -> None:
    if not torch.isfinite(t).all():
        raise InvalidInputError(f"{name} contains non-finite entries")


def conjugate_mirror(t: Tensor) -> Tensor:
    """Index map ``(u, v) -> ((H-u) mod H, (W-v) mod W)`` over the last two dims."""
    return t.flip(-2, -1).roll(shifts=(1, 1), dims=(-2, -1))


def hermitian_asymmetry(t: Tensor) -> float:
    """Max deviation from Hermitian symmetry, relative to the largest entry."""
    t = t.detach()
    scale = t.abs().max().item()
    if scale == 0.0:
        return 0.0
    return ((t - conjugate_mirror(t)).abs().max() / scale).item()


def decompose(x: Tensor) -> SpectralDecomposition:
    """Split an image batch into Fourier amplitude and phase.

    ``x`` must be a finite real ``B x C x H x W`` tensor. The amplitude is
    ``|F(x)|`` and the phase ``arg F(x)`` under the unnormalized forward DFT.
    """
    if x.dim() != 4:
        raise InvalidArgumentError(f"expected a B x C x H x W batch, got shape {tuple(x.shape)}")
    _require_finite(x, "image batch")
    spectrum = torch.fft.fft2(x)
    return SpectralDecomposition(amplitude=spectrum.abs(), phase=spectrum.angle())


def hermitian_project(raw: Tensor) -> Tensor:
    """Project an arbitrary real array onto valid amplitude prompts.

    Averages the absolute values of the array and its conjugate mirror, which
    yields a nonnegative, Hermitian-symmetric result and is idempotent.
    """
    _require_finite(raw, "raw prompt")
    return 0.5 * (raw.abs() + conjugate_mirror(raw).abs())


def mix_amplitude(amplitude: Tensor, prompt: Tensor, alpha) -> Tensor:
    """Blend image amplitudes with a prompt: ``alpha * A + (1 - alpha) * delta``.

    ``amplitude`` is ``B x C x H x W``, ``prompt`` is ``C x H x W`` and is
    broadcast over the batch. ``alpha`` is a scalar or a length-``B`` tensor
    of per-sample coefficients, each in ``[0, 1]``.
    """
    if prompt.dim() != 3:
        raise InvalidArgumentError(f"prompt must be C x H x W, got shape {tuple(prompt.shape)}")
    if amplitude.dim() != 4 or amplitude.shape[1:] != prompt.shape:
        raise InvalidArgumentError(
            f"amplitude shape {tuple(amplitude.shape)} does not match prompt {tuple(prompt.shape)}"
        )
    if not torch.is_tensor(alpha):
        alpha = torch.as_tensor(alpha, dtype=amplitude.dtype, device=amplitude.device)
    with torch.no_grad():
        lo = float(alpha.min())
        hi = float(alpha.max())
    if lo < 0.0 or hi > 1.0:
        raise InvalidArgumentError(f"alpha must lie in [0, 1], got range [{lo}, {hi}]")
    if alpha.dim() == 1:
        if alpha.shape[0] != amplitude.shape[0]:
            raise InvalidArgumentError(
                f"per-sample alpha has length {alpha.shape[0]}, batch is {amplitude.shape[0]}"
            )
        alpha = alpha.view(-1, 1, 1, 1)
    elif alpha.dim() != 0:
        raise InvalidArgumentError("alpha must be a scalar or a 1-D per-sample tensor")
    return alpha * amplitude + (1.0 - alpha) * prompt.unsqueeze(0)


def reconstruct(amplitude: Tensor, phase: Tensor) -> Tensor:
    """Inverse-transform an amplitude/phase pair back to an image batch.

    ``amplitude`` must be Hermitian-symmetric per channel (checked to
    ``HERMITIAN_TOLERANCE`` relative) and ``phase`` must come from a real
    image, which makes the inverse transform real up to roundoff; the
    imaginary residual is discarded. The output range is left unclamped so
    gradients stay exact.
    """
    if amplitude.shape != phase.shape:
        raise InvalidArgumentError(
            f"amplitude shape {tuple(amplitude.shape)} does not match phase {tuple(phase.shape)}"
        )
    asym = hermitian_asymmetry(amplitude)
    if asym > HERMITIAN_TOLERANCE:
        raise ContractViolationError(
            f"amplitude violates Hermitian symmetry (relative asymmetry {asym:.3e})"
        )
    spectrum = amplitude * torch.exp(1j * phase)
    return torch.fft.ifft2(spectrum).real
