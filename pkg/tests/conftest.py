"""Shared fixtures: synthetic audio, reduced model configs, desk dataset."""

import numpy as np
import pytest
import torch

from stereoqa.audio_io import AudioExcerpt, read_manifest
from stereoqa.gammatone import FrontendConfig
from stereoqa.model import BlockConfig, ModelConfig
from stereoqa.synthetic import DegradationSpec, gen_dataset, make_demo_sources

torch.set_num_threads(1)

SR = 48_000


def make_tone(freq_hz: float, duration_s: float, amplitude: float = 0.5, channels: int = 1):
    t = np.arange(int(duration_s * SR)) / SR
    sig = (amplitude * np.sin(2 * np.pi * freq_hz * t)).astype(np.float32)
    return AudioExcerpt(samples=np.tile(sig, (channels, 1)), sample_rate=SR)


def make_noise(duration_s: float, seed: int = 0, amplitude: float = 0.3, channels: int = 2):
    rng = np.random.default_rng(seed)
    n = int(duration_s * SR)
    samples = rng.uniform(-amplitude, amplitude, size=(channels, n)).astype(np.float32)
    return AudioExcerpt(samples=samples, sample_rate=SR)


def reduced_blocks(width: int = 8):
    """Full-size block structure at reduced width and gentler downsampling."""
    return (
        BlockConfig((3, 7), (7, 3), width, 5, width // 2,
                    branch_stride=(2, 2), block_pool_stride=(1, 1)),
        BlockConfig((3, 7), (7, 3), width, 5, width, branch_stride=(1, 2)),
        BlockConfig((3, 5), (5, 3), width, 5, width, branch_stride=(1, 2)),
        BlockConfig((3, 3), (5, 5), width, 3, width,
                    block_pool_stride=(1, 2), block_pool_padded=False),
    )


def reduced_config(in_channels: int = 8, width: int = 8, num_bands: int = 32) -> ModelConfig:
    return ModelConfig(
        in_channels=in_channels,
        num_bands=num_bands,
        blocks=reduced_blocks(width),
        se_reduction=4,
        head_dims=(64, 32),
    )


def tiny_grad_config(in_channels: int = 8) -> ModelConfig:
    """Smallest configuration that still exercises every layer type."""
    blocks = (
        BlockConfig((3, 7), (7, 3), 3, 5, 2, branch_stride=(2, 2), block_pool_stride=(1, 1)),
        BlockConfig((3, 7), (7, 3), 3, 5, 2, branch_stride=(1, 2)),
        BlockConfig((3, 5), (5, 3), 3, 5, 2, branch_stride=(1, 1)),
        BlockConfig((3, 3), (5, 5), 3, 3, 2, block_pool_stride=(1, 2), block_pool_padded=False),
    )
    return ModelConfig(
        in_channels=in_channels, num_bands=8, blocks=blocks, se_reduction=4, head_dims=(10, 6)
    )


DESK_SPECS = (
    DegradationSpec("additive_noise", 30.0, 80.0),
    DegradationSpec("ms_crosstalk", 1.0, 50.0),
    DegradationSpec("additive_noise", 10.0, 35.0),
)


@pytest.fixture(scope="session")
def frontend():
    return FrontendConfig()


@pytest.fixture(scope="session")
def desk_dataset(tmp_path_factory):
    """8 stereo sources x 8 conditions (reference, 2 anchors, 5 degradations)."""
    root = tmp_path_factory.mktemp("desk")
    src = root / "sources"
    make_demo_sources(src, count=8, duration_s=2.0, seed=7)
    manifest = gen_dataset(src, root / "dataset", specs=None, seed=7)
    return manifest, read_manifest(manifest)


@pytest.fixture(scope="session")
def desk_split(desk_dataset):
    """Train on six sources, hold out the last two entirely."""
    _, rows = desk_dataset
    groups = sorted({r.group for r in rows})
    held = set(groups[-2:])
    train_rows = [r for r in rows if r.group not in held]
    held_rows = [r for r in rows if r.group in held]
    return train_rows, held_rows


@pytest.fixture(scope="session")
def trained_desk(desk_split, tmp_path_factory):
    """Reduced-width model trained with the standard recipe on the desk set."""
    from stereoqa.checkpoint import save_checkpoint
    from stereoqa.model import build_model
    from stereoqa.training import TrainConfig, train

    train_rows, held_rows = desk_split
    model = build_model(reduced_config(width=8), seed=0)
    config = TrainConfig(epochs_per_fold=30, folds=5, seed=0)
    history = train(model, train_rows, config)
    ckpt = tmp_path_factory.mktemp("ckpt") / "desk.ckpt"
    save_checkpoint(
        model,
        ckpt,
        frontend=FrontendConfig(),
        metadata={"epochs": config.folds * config.epochs_per_fold,
                  "folds": config.folds, "seed": config.seed},
    )
    return {"model": model, "history": history, "checkpoint": ckpt}


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Eight 0.6 s rows over two sources: ref, anchors, one noise condition."""
    root = tmp_path_factory.mktemp("tinyset")
    make_demo_sources(root / "src", count=2, duration_s=0.6, seed=1)
    manifest = gen_dataset(root / "src", root / "data", specs=DESK_SPECS[:1], seed=1)
    return manifest, read_manifest(manifest)
