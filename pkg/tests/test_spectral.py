import numpy as np
import pytest
import torch

from foprokd.exceptions import (
    ContractViolationError,
    InvalidArgumentError,
    InvalidInputError,
)
from foprokd.spectral import (
    conjugate_mirror,
    decompose,
    hermitian_asymmetry,
    hermitian_project,
    mix_amplitude,
    reconstruct,
)

from oracles import dft_oracle, idft_oracle, mirror_oracle


def random_batch(gen, b=2, c=3, h=8, w=8):
    return torch.rand(b, c, h, w, generator=gen)


class TestDecompose:
    def test_matches_double_sum_oracle_on_4x4(self):
        gen = torch.Generator().manual_seed(0)
        for _ in range(5):
            x = torch.rand(1, 1, 4, 4, generator=gen)
            parts = decompose(x)
            ref = dft_oracle(x[0, 0].numpy())
            assert np.abs(parts.amplitude[0, 0].numpy() - np.abs(ref)).max() < 1e-6
            # compare phases through the complex plane to dodge branch cuts
            impl = parts.amplitude[0, 0].numpy() * np.exp(1j * parts.phase[0, 0].numpy())
            assert np.abs(impl - ref).max() < 1e-5

    def test_constant_image_is_dc_only(self):
        x = torch.full((1, 1, 6, 6), 0.7)
        amp = decompose(x).amplitude[0, 0]
        assert amp[0, 0].item() == pytest.approx(36 * 0.7, abs=1e-4)
        off_dc = amp.clone()
        off_dc[0, 0] = 0
        assert off_dc.abs().max() < 1e-4

    def test_impulse_has_flat_amplitude(self):
        x = torch.zeros(1, 1, 5, 5)
        x[0, 0, 0, 0] = 1.0
        amp = decompose(x).amplitude
        assert torch.allclose(amp, torch.ones_like(amp), atol=1e-6)

    def test_rejects_bad_rank_and_nonfinite(self):
        with pytest.raises(InvalidArgumentError):
            decompose(torch.rand(3, 8, 8))
        bad = torch.rand(1, 1, 4, 4)
        bad[0, 0, 0, 0] = float("nan")
        with pytest.raises(InvalidInputError):
            decompose(bad)


class TestRoundtrip:
    def test_reconstruct_inverts_decompose(self):
        gen = torch.Generator().manual_seed(1)
        for h, w in [(8, 8), (5, 7), (16, 16), (1, 4)]:
            x = torch.rand(2, 3, h, w, generator=gen)
            parts = decompose(x)
            assert (reconstruct(parts.amplitude, parts.phase) - x).abs().max() < 1e-5

    def test_reconstruct_matches_inverse_oracle(self):
        gen = torch.Generator().manual_seed(2)
        x = torch.rand(1, 1, 4, 4, generator=gen)
        parts = decompose(x)
        delta = hermitian_project(torch.rand(1, 4, 4, generator=gen))
        mixed = mix_amplitude(parts.amplitude, delta, 0.3)
        out = reconstruct(mixed, parts.phase)
        spectrum = mixed[0, 0].numpy() * np.exp(1j * parts.phase[0, 0].numpy())
        ref = idft_oracle(spectrum)
        assert np.abs(ref.imag).max() < 1e-6
        assert np.abs(out[0, 0].numpy() - ref.real).max() < 1e-6

    def test_rejects_shape_mismatch(self):
        parts = decompose(torch.rand(1, 1, 4, 4))
        with pytest.raises(InvalidArgumentError):
            reconstruct(parts.amplitude, parts.phase[..., :2])

    def test_rejects_asymmetric_amplitude(self):
        parts = decompose(torch.rand(1, 1, 8, 8))
        broken = parts.amplitude.clone()
        broken[0, 0, 1, 2] += 5.0
        with pytest.raises(ContractViolationError):
            reconstruct(broken, parts.phase)


class TestMirrorAndProjection:
    def test_mirror_matches_elementwise_oracle(self):
        gen = torch.Generator().manual_seed(3)
        t = torch.rand(3, 6, 5, generator=gen)
        assert torch.equal(conjugate_mirror(t),
                           torch.from_numpy(mirror_oracle(t.numpy())))

    def test_mirror_is_involution(self):
        t = torch.rand(2, 3, 8, 8)
        assert torch.equal(conjugate_mirror(conjugate_mirror(t)), t)

    def test_projection_output_is_valid_and_idempotent(self):
        gen = torch.Generator().manual_seed(4)
        raw = torch.randn(3, 8, 8, generator=gen)
        delta = hermitian_project(raw)
        assert (delta >= 0).all()
        assert hermitian_asymmetry(delta) < 1e-6
        assert torch.allclose(hermitian_project(delta), delta, atol=1e-6)

    def test_projection_matches_hand_mirror_average(self):
        raw = torch.randn(1, 4, 4)
        expected = 0.5 * (raw.abs().numpy() + np.abs(mirror_oracle(raw.numpy())))
        assert np.allclose(hermitian_project(raw).numpy(), expected, atol=1e-7)

    def test_dft_amplitude_is_hermitian(self):
        amp = decompose(torch.rand(2, 3, 8, 8)).amplitude
        assert hermitian_asymmetry(amp) < 1e-5


class TestMixAmplitude:
    def test_scalar_endpoints(self):
        gen = torch.Generator().manual_seed(5)
        amp = decompose(random_batch(gen)).amplitude
        delta = hermitian_project(torch.rand(3, 8, 8, generator=gen))
        assert torch.equal(mix_amplitude(amp, delta, 1.0), amp)
        at_zero = mix_amplitude(amp, delta, 0.0)
        assert torch.allclose(at_zero, delta.unsqueeze(0).expand_as(amp))

    def test_per_sample_alpha(self):
        gen = torch.Generator().manual_seed(6)
        amp = decompose(random_batch(gen, b=3)).amplitude
        delta = hermitian_project(torch.rand(3, 8, 8, generator=gen))
        alpha = torch.tensor([0.0, 0.5, 1.0])
        mixed = mix_amplitude(amp, delta, alpha)
        assert torch.allclose(mixed[0], delta)
        assert torch.allclose(mixed[1], 0.5 * amp[1] + 0.5 * delta)
        assert torch.allclose(mixed[2], amp[2])

    def test_rejects_out_of_range_and_bad_shapes(self):
        amp = decompose(torch.rand(2, 3, 8, 8)).amplitude
        delta = torch.rand(3, 8, 8)
        with pytest.raises(InvalidArgumentError):
            mix_amplitude(amp, delta, 1.5)
        with pytest.raises(InvalidArgumentError):
            mix_amplitude(amp, delta, -0.1)
        with pytest.raises(InvalidArgumentError):
            mix_amplitude(amp, delta, torch.tensor([0.5]))
        with pytest.raises(InvalidArgumentError):
            mix_amplitude(amp, torch.rand(3, 4, 4), 0.5)
        with pytest.raises(InvalidArgumentError):
            mix_amplitude(amp, torch.rand(2, 3, 8, 8), 0.5)


def test_gradients_flow_to_prompt_and_alpha():
    gen = torch.Generator().manual_seed(7)
    x = torch.rand(2, 3, 8, 8, generator=gen)
    raw = torch.randn(3, 8, 8, generator=gen, requires_grad=True)
    alpha = torch.tensor([0.3, 0.6], requires_grad=True)
    parts = decompose(x)
    out = reconstruct(mix_amplitude(parts.amplitude, hermitian_project(raw), alpha),
                      parts.phase)
    out.pow(2).sum().backward()
    assert raw.grad is not None and raw.grad.abs().sum() > 0
    assert alpha.grad is not None and alpha.grad.abs().sum() > 0
