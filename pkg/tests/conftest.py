import numpy as np
import pytest
import torch


@pytest.fixture(autouse=True)
def _single_thread():
    # keeps peak CPU use flat so timing assertions are stable under -n auto
    torch.set_num_threads(max(1, torch.get_num_threads()))
    yield


@pytest.fixture
def announce(capsys):
    """Print one live pass/fail line per acceptance criterion, then assert."""

    def check(criterion: int, ok: bool, detail: str = "") -> None:
        suffix = f"  ({detail})" if detail else ""
        with capsys.disabled():
            print(f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'}{suffix}")
        assert ok, f"acceptance criterion {criterion} failed{suffix}"

    return check


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def tiny_experiment(method: str, out_dir, seed: int = 0, **overrides):
    """A 4-class, 16x16 configuration that trains in about a second."""
    from foprokd.config import (
        DataConfig, ExperimentConfig, ModelConfig, OptimConfig, PhaseSchedule,
    )

    data = DataConfig(
        kind="synthetic",
        resolution=16,
        num_classes=4,
        class_targets=(24, 12, 6, 3),
        val_per_class=4,
        test_per_class=4,
        seed=seed,
    )
    model = ModelConfig(
        teacher_arch="tiny_cnn", teacher_width=8,
        student_arch="tiny_cnn", student_width=4,
        noise_dim=16,
    )
    optim = OptimConfig(optimizer="adam", lr=3e-4, batch_size=16)
    schedule = PhaseSchedule(max_epochs=6, early_stop_patience=6)
    cfg = ExperimentConfig(
        method=method, seed=seed, out_dir=str(out_dir),
        data=data, model=model, optim=optim, schedule=schedule,
    )
    from dataclasses import replace

    loss_overrides = {}
    for key, value in overrides.items():
        path = key.split(".")
        if path[0] == "loss":
            loss_overrides[path[1]] = value
            continue
        owner = cfg
        for part in path[:-1]:
            owner = getattr(owner, part)
        setattr(owner, path[-1], value)
    if loss_overrides:
        cfg.loss = replace(cfg.loss, **loss_overrides)
    return cfg
