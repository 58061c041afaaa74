"""Fourier prompt generator: one linear layer from noise to an amplitude prompt.

The generator maps a standard-normal noise vector to a full-resolution,
three-channel amplitude spectrum. The raw linear output is pushed through
:func:`foprokd.spectral.hermitian_project`, so every generated prompt is
nonnegative and Hermitian-symmetric by construction and gradients still reach
the linear weights. Weights start near zero with a unit bias, which makes the
initial prompt close to flat.
"""

from __future__ import annotations

import torch
from torch import Tensor, nn

from .exceptions import InvalidArgumentError
from .spectral import hermitian_project

DEFAULT_NOISE_DIM = 128


def sample_noise(noise_dim: int, generator: torch.Generator | None = None) -> Tensor:
    """Draw one i.i.d. standard-normal noise vector of length ``noise_dim``."""
    if noise_dim < 1:
        raise InvalidArgumentError(f"noise_dim must be >= 1, got {noise_dim}")
    return torch.randn(noise_dim, generator=generator)


class FourierPromptGenerator(nn.Module):
    """Single linear map from a noise vector to a ``C x H x W`` amplitude prompt."""

    def __init__(
        self,
        noise_dim: int = DEFAULT_NOISE_DIM,
        channels: int = 3,
        height: int = 32,
        width: int = 32,
        init_weight_std: float = 0.01,
        init_bias: float = 1.0,
    ):
        super().__init__()
        if min(noise_dim, channels, height, width) < 1:
            raise InvalidArgumentError("noise_dim and prompt dimensions must be positive")
        self.noise_dim = noise_dim
        self.prompt_shape = (channels, height, width)
        self.linear = nn.Linear(noise_dim, channels * height * width)
        nn.init.normal_(self.linear.weight, mean=0.0, std=init_weight_std)
        nn.init.constant_(self.linear.bias, init_bias)

    def forward(self, z: Tensor) -> Tensor:
        """Generate the prompt for one noise vector ``z`` of shape ``(noise_dim,)``."""
        if z.dim() != 1 or z.shape[0] != self.noise_dim:
            raise InvalidArgumentError(
                f"noise vector must have shape ({self.noise_dim},), got {tuple(z.shape)}"
            )
        raw = self.linear(z).view(self.prompt_shape)
        return hermitian_project(raw)
