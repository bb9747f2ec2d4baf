"""Inception/squeeze-excitation quality network and its weight surgery.

The network maps an input stack of gammatone spectrograms to a single
quality score in [0, 1] units (x100 for the 0-100 listening-test scale).
Backbone: four Inception-style blocks, squeeze-excitation after each block
except the first, adaptive average pooling to 4x4, and a three-layer fully
connected head. Each Inception block runs four parallel branches

    horizontal conv | vertical conv | 1x1 conv | avg-pool -> 1x1 projection

(all conv outputs batch-normalized and ReLU-activated), concatenates them
along channels, and applies a block-level average pool that carries part
of the downsampling. With the default configuration the shape progression
for a (8, 32, 2824) input is:

    block 1: 208 x 16 x 177     block 3: 256 x 16 x 45
    block 2: 224 x 16 x 89      block 4: 256 x 14 x 22

Band counts and channel widths are exact by construction; the final block
reaches 14 bands through its unpadded 3x3 block pool.

Weight transfer from a pretrained 2-channel (mono pair) model copies the
first two blocks. The first block's input convolutions see 2 channels in
the mono model and 2 per signal pair here, so the mono kernel slice is
mapped onto the L, R and M pair positions; the S pair slice is either left
at its fresh random initialization (``replicate_random_S``) or zero-filled
with the copied slices scaled by 1/3 (``mono_preserving``), which makes
the first block's pre-activations reproduce the mono model's exactly on
dual-mono material.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from .conditioning import InputTensor
from .errors import InvalidConfig, NonFiniteLoss, ShapeIncompatible, ShapeMismatch

TRANSFER_MODES = ("replicate_random_S", "mono_preserving")


@dataclass(frozen=True)
class BlockConfig:
    """One Inception block: branch kernels, widths, and stride schedule."""

    kernel_h: tuple[int, int]          # (bands, frames), wide in time
    kernel_v: tuple[int, int]          # tall in bands
    branch_channels: int
    pool_kernel: int
    pool_proj_channels: int
    branch_stride: tuple[int, int] = (1, 1)
    block_pool_stride: tuple[int, int] = (1, 1)
    block_pool_padded: bool = True     # False: unpadded pool (shrinks bands/frames)

    @property
    def out_channels(self) -> int:
        return 3 * self.branch_channels + self.pool_proj_channels

    def validate(self) -> None:
        for k in (*self.kernel_h, *self.kernel_v, self.pool_kernel):
            if k < 1 or k % 2 == 0:
                raise InvalidConfig(f"kernel sizes must be odd and positive, got {k}")
        if self.branch_channels < 1 or self.pool_proj_channels < 1:
            raise InvalidConfig("branch widths must be positive")


def _default_blocks() -> tuple[BlockConfig, ...]:
    return (
        BlockConfig((3, 7), (7, 3), 64, 5, 16, branch_stride=(2, 4), block_pool_stride=(1, 4)),
        BlockConfig((3, 7), (7, 3), 64, 5, 32, branch_stride=(1, 2)),
        BlockConfig((3, 5), (5, 3), 64, 5, 64, branch_stride=(1, 2)),
        BlockConfig((3, 3), (5, 5), 64, 3, 64, block_pool_stride=(1, 2), block_pool_padded=False),
    )


@dataclass(frozen=True)
class ModelConfig:
    """Network hyperparameters. The default reproduces the full-size model."""

    in_channels: int = 8
    num_bands: int = 32
    blocks: tuple[BlockConfig, ...] = field(default_factory=_default_blocks)
    se_reduction: int = 16
    pool_out: tuple[int, int] = (4, 4)
    head_dims: tuple[int, int] = (3200, 512)
    floor_db: float = -100.0

    def validate(self) -> None:
        if self.in_channels < 1 or self.in_channels % 2:
            raise InvalidConfig("in_channels must be a positive even number of (ref, cod) pairs")
        if self.num_bands < 1 or not self.blocks:
            raise InvalidConfig("need at least one band and one block")
        for b in self.blocks:
            b.validate()
        if self.se_reduction < 1:
            raise InvalidConfig("se_reduction must be >= 1")
        bands = self.num_bands
        for i, b in enumerate(self.blocks):
            bands = _pool_out_dim(-(-bands // b.branch_stride[0]), b.pool_kernel,
                                  b.block_pool_stride[0], b.block_pool_padded)
            if bands < 1:
                raise InvalidConfig(f"band dimension collapses to {bands} at block {i + 1}")

    @property
    def signal_pairs(self) -> int:
        return self.in_channels // 2

    def to_dict(self) -> dict:
        return {
            "in_channels": self.in_channels,
            "num_bands": self.num_bands,
            "blocks": [
                {
                    "kernel_h": list(b.kernel_h),
                    "kernel_v": list(b.kernel_v),
                    "branch_channels": b.branch_channels,
                    "pool_kernel": b.pool_kernel,
                    "pool_proj_channels": b.pool_proj_channels,
                    "branch_stride": list(b.branch_stride),
                    "block_pool_stride": list(b.block_pool_stride),
                    "block_pool_padded": b.block_pool_padded,
                }
                for b in self.blocks
            ],
            "se_reduction": self.se_reduction,
            "pool_out": list(self.pool_out),
            "head_dims": list(self.head_dims),
            "floor_db": self.floor_db,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        blocks = tuple(
            BlockConfig(
                kernel_h=tuple(b["kernel_h"]),
                kernel_v=tuple(b["kernel_v"]),
                branch_channels=b["branch_channels"],
                pool_kernel=b["pool_kernel"],
                pool_proj_channels=b["pool_proj_channels"],
                branch_stride=tuple(b["branch_stride"]),
                block_pool_stride=tuple(b["block_pool_stride"]),
                block_pool_padded=b["block_pool_padded"],
            )
            for b in d["blocks"]
        )
        return cls(
            in_channels=d["in_channels"],
            num_bands=d["num_bands"],
            blocks=blocks,
            se_reduction=d["se_reduction"],
            pool_out=tuple(d["pool_out"]),
            head_dims=tuple(d["head_dims"]),
            floor_db=d.get("floor_db", -100.0),
        )


def mono_config(stereo: ModelConfig | None = None) -> ModelConfig:
    """The 2-channel (single ref/cod pair) variant of a configuration."""
    base = stereo or ModelConfig()
    return ModelConfig(
        in_channels=2,
        num_bands=base.num_bands,
        blocks=base.blocks,
        se_reduction=base.se_reduction,
        pool_out=base.pool_out,
        head_dims=base.head_dims,
        floor_db=base.floor_db,
    )


def _pool_out_dim(size: int, kernel: int, stride: int, padded: bool) -> int:
    if padded:
        return (size - 1) // stride + 1
    return (size - kernel) // stride + 1


def _conv_bn(in_ch: int, out_ch: int, kernel: tuple[int, int], stride: tuple[int, int]) -> nn.Sequential:
    pad = (kernel[0] // 2, kernel[1] // 2)
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, kernel, stride=stride, padding=pad),
        nn.BatchNorm2d(out_ch),
        nn.ReLU(inplace=True),
    )


class InceptionBlock(nn.Module):
    """Four-branch Inception block with a block-level average pool."""

    def __init__(self, in_channels: int, cfg: BlockConfig):
        super().__init__()
        self.cfg = cfg
        bc = cfg.branch_channels
        k = cfg.pool_kernel
        self.branch_h = _conv_bn(in_channels, bc, cfg.kernel_h, cfg.branch_stride)
        self.branch_v = _conv_bn(in_channels, bc, cfg.kernel_v, cfg.branch_stride)
        self.branch_n = _conv_bn(in_channels, bc, (1, 1), cfg.branch_stride)
        self.branch_pool = nn.AvgPool2d(
            k, stride=cfg.branch_stride, padding=k // 2, count_include_pad=False
        )
        self.branch_proj = _conv_bn(in_channels, cfg.pool_proj_channels, (1, 1), (1, 1))
        self.block_pool = nn.AvgPool2d(
            k,
            stride=cfg.block_pool_stride,
            padding=k // 2 if cfg.block_pool_padded else 0,
            count_include_pad=False,
        )

    def branches(self, x: torch.Tensor) -> torch.Tensor:
        return torch.cat(
            [
                self.branch_h(x),
                self.branch_v(x),
                self.branch_n(x),
                self.branch_proj(self.branch_pool(x)),
            ],
            dim=1,
        )

    def preactivation(self, x: torch.Tensor) -> torch.Tensor:
        """Branch conv outputs before batch norm and ReLU, concatenated."""
        return torch.cat(
            [
                self.branch_h[0](x),
                self.branch_v[0](x),
                self.branch_n[0](x),
                self.branch_proj[0](self.branch_pool(x)),
            ],
            dim=1,
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.block_pool(self.branches(x))


class SqueezeExcitation(nn.Module):
    """Channel gating from globally pooled channel descriptors."""

    def __init__(self, channels: int, reduction: int):
        super().__init__()
        hidden = max(1, channels // reduction)
        self.fc1 = nn.Linear(channels, hidden)
        self.fc2 = nn.Linear(hidden, channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        gate = x.mean(dim=(2, 3))
        gate = torch.sigmoid(self.fc2(F.relu(self.fc1(gate))))
        return x * gate[:, :, None, None]


class StereoQualityNet(nn.Module):
    """Quality predictor over stacked reference/coded gammatone spectrograms."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        self.register_buffer("band_mean", torch.zeros(config.num_bands))
        self.register_buffer("band_std", torch.ones(config.num_bands))

        blocks: list[nn.Module] = []
        ses: list[nn.Module] = []
        in_ch = config.in_channels
        for i, bc in enumerate(config.blocks):
            blocks.append(InceptionBlock(in_ch, bc))
            in_ch = bc.out_channels
            ses.append(
                SqueezeExcitation(in_ch, config.se_reduction) if i > 0 else nn.Identity()
            )
        self.blocks = nn.ModuleList(blocks)
        self.ses = nn.ModuleList(ses)
        self.adaptive_pool = nn.AdaptiveAvgPool2d(config.pool_out)
        flat = in_ch * config.pool_out[0] * config.pool_out[1]
        d1, d2 = config.head_dims
        self.fc1 = nn.Linear(flat, d1)
        self.fc2 = nn.Linear(d1, d2)
        self.fc3 = nn.Linear(d2, 1)
        self._min_frames = _min_input_frames(config)

    # --- shape bookkeeping ---

    @property
    def min_input_frames(self) -> int:
        """Smallest frame count the block schedule can reduce without collapsing."""
        return self._min_frames

    def normalize(self, x: torch.Tensor) -> torch.Tensor:
        mean = self.band_mean.to(x.dtype)[None, None, :, None]
        std = self.band_std.to(x.dtype)[None, None, :, None]
        return (x - mean) / std

    def set_normalization(self, mean, std) -> None:
        """Install per-band input statistics (dB domain), shared across channels."""
        mean = torch.as_tensor(np.asarray(mean, dtype=np.float32))
        std = torch.as_tensor(np.asarray(std, dtype=np.float32))
        if mean.shape != self.band_mean.shape or std.shape != self.band_std.shape:
            raise ShapeMismatch("normalization stats must have one entry per band")
        if not bool(torch.all(std > 0)):
            raise InvalidConfig("band std must be positive")
        with torch.no_grad():
            self.band_mean.copy_(mean)
            self.band_std.copy_(std)

    def _check_input(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() == 3:
            x = x.unsqueeze(0)
        if x.dim() != 4:
            raise ShapeMismatch(f"expected (channels, bands, frames), got {tuple(x.shape)}")
        if x.shape[1] != self.config.in_channels:
            raise ShapeMismatch(
                f"input has {x.shape[1]} channels, model expects {self.config.in_channels}"
            )
        if x.shape[2] != self.config.num_bands:
            raise ShapeMismatch(
                f"input has {x.shape[2]} bands, model expects {self.config.num_bands}"
            )
        if x.shape[3] < self._min_frames:
            raise ShapeMismatch(
                f"input has {x.shape[3]} frames, model needs >= {self._min_frames}; "
                "pad the signal before analysis"
            )
        return x

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self._check_input(x)
        x = self.normalize(x)
        for block, se in zip(self.blocks, self.ses):
            x = se(block(x))
        x = self.adaptive_pool(x)
        x = torch.flatten(x, 1)
        x = F.relu(self.fc1(x))
        x = F.relu(self.fc2(x))
        return self.fc3(x)

    def first_block_preactivation(self, x: torch.Tensor) -> torch.Tensor:
        """Normalized input through block 1's convolutions, before BN/ReLU."""
        x = self._check_input(x)
        return self.blocks[0].preactivation(self.normalize(x))

    @torch.no_grad()
    def score(self, tensor: InputTensor | np.ndarray | torch.Tensor) -> float:
        """Raw network output (quality in [0, 1] units) for one input stack."""
        was_training = self.training
        self.eval()
        try:
            data = tensor.data if isinstance(tensor, InputTensor) else tensor
            x = torch.as_tensor(np.asarray(data), dtype=self.fc3.weight.dtype)
            return float(self.forward(x).squeeze())
        finally:
            self.train(was_training)

    def score_mushra(self, tensor) -> float:
        """Score mapped to the 0-100 scale and clamped."""
        return float(np.clip(self.score(tensor) * 100.0, 0.0, 100.0))

    @torch.no_grad()
    def block_output_shapes(self, frames: int) -> list[tuple[str, int, int, int]]:
        """Per-stage (name, channels, bands, frames) for a given input length."""
        was_training = self.training
        self.eval()
        try:
            x = torch.zeros(1, self.config.in_channels, self.config.num_bands, frames)
            shapes = []
            for i, (block, se) in enumerate(zip(self.blocks, self.ses)):
                x = block(x)
                shapes.append((f"block{i + 1}", x.shape[1], x.shape[2], x.shape[3]))
                if not isinstance(se, nn.Identity):
                    x = se(x)
                    shapes.append((f"se{i + 1}", x.shape[1], x.shape[2], x.shape[3]))
            x = self.adaptive_pool(x)
            shapes.append(("adaptive_pool", x.shape[1], x.shape[2], x.shape[3]))
            return shapes
        finally:
            self.train(was_training)


def _min_input_frames(config: ModelConfig) -> int:
    """Smallest T for which every block keeps a positive frame dimension."""
    for t in range(1, 100_000):
        cur = t
        ok = True
        for b in config.blocks:
            cur = -(-cur // b.branch_stride[1])
            if not b.block_pool_padded and cur < b.pool_kernel:
                ok = False
                break
            cur = _pool_out_dim(cur, b.pool_kernel, b.block_pool_stride[1], b.block_pool_padded)
            if cur < 1:
                ok = False
                break
        if ok:
            return t
    raise InvalidConfig("block schedule admits no valid input length")


def _init_params(model: nn.Module, seed: int) -> None:
    """He-style uniform fan-in init, deterministic under the seed.

    Conv/linear weights and biases draw from U(-1/sqrt(fan_in), 1/sqrt(fan_in));
    batch norm starts at identity with zeroed running stats.
    """
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for m in model.modules():
            if isinstance(m, nn.Conv2d):
                fan_in = m.in_channels * m.kernel_size[0] * m.kernel_size[1]
            elif isinstance(m, nn.Linear):
                fan_in = m.in_features
            elif isinstance(m, (nn.BatchNorm1d, nn.BatchNorm2d)):
                m.weight.fill_(1.0)
                m.bias.zero_()
                m.running_mean.zero_()
                m.running_var.fill_(1.0)
                m.num_batches_tracked.zero_()
                continue
            else:
                continue
            bound = 1.0 / math.sqrt(fan_in)
            m.weight.uniform_(-bound, bound, generator=gen)
            if m.bias is not None:
                m.bias.uniform_(-bound, bound, generator=gen)


def build_model(config: ModelConfig | None = None, seed: int = 0) -> StereoQualityNet:
    """Construct a network with deterministic seeded initialization."""
    model = StereoQualityNet(config or ModelConfig())
    _init_params(model, seed)
    return model


def count_params(model: nn.Module) -> int:
    """Total trainable parameter count."""
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def count_params_by_tensor(model: nn.Module) -> dict[str, int]:
    return {n: p.numel() for n, p in model.named_parameters() if p.requires_grad}


def gradients(
    model: StereoQualityNet,
    inputs: torch.Tensor,
    targets: torch.Tensor,
    beta: float = 1.0,
) -> dict[str, torch.Tensor]:
    """Reverse-mode gradients of the mean smooth-L1 batch loss.

    Runs the model in training mode (batch statistics); returns a clone of
    each parameter's gradient keyed by its name.
    """
    from .training import smooth_l1_torch

    if inputs.shape[0] != targets.shape[0] or inputs.shape[0] == 0:
        raise ShapeMismatch("batch inputs and targets must align and be non-empty")
    was_training = model.training
    model.train()
    try:
        model.zero_grad(set_to_none=True)
        pred = model(inputs).squeeze(1)
        loss = smooth_l1_torch(pred, targets, beta).mean()
        if not torch.isfinite(loss):
            raise NonFiniteLoss(f"loss is {float(loss)}")
        loss.backward()
        return {n: p.grad.detach().clone() for n, p in model.named_parameters()}
    finally:
        model.train(was_training)


# --- mono -> stereo weight transfer ---

def _input_conv_names(block_index: int) -> list[str]:
    prefix = f"blocks.{block_index}."
    return [
        prefix + "branch_h.0",
        prefix + "branch_v.0",
        prefix + "branch_n.0",
        prefix + "branch_proj.0",
    ]


def transfer_from_mono(
    mono: StereoQualityNet,
    stereo_config: ModelConfig,
    mode: str,
    seed: int = 0,
) -> StereoQualityNet:
    """Initialize a multi-pair model from a pretrained 2-channel model.

    The first two blocks are transferred; everything else keeps its fresh
    seeded initialization. Block 2 onward of the transferred pair copies
    bit-exactly (shapes are channel-count independent past block 1). For
    block 1's input convolutions the mono 2-channel kernel slice maps onto
    every non-side (ref, cod) pair position:

    - ``replicate_random_S``: plain copies; the side-pair slice keeps its
      random initialization.
    - ``mono_preserving``: copies scaled by 1/(number of non-side pairs)
      and a zero side-pair slice, so dual-mono inputs reproduce the mono
      model's block-1 pre-activations.

    Input normalization statistics are copied from the mono model.
    """
    if mode not in TRANSFER_MODES:
        raise ValueError(f"mode must be one of {TRANSFER_MODES}, got {mode!r}")
    if mono.config.in_channels != 2:
        raise ShapeIncompatible(
            f"transfer source must have 2 input channels, got {mono.config.in_channels}"
        )
    if stereo_config.in_channels < 4:
        raise ShapeIncompatible("transfer target must stack more than one signal pair")
    for i in (0, 1):
        if i >= len(mono.config.blocks) or i >= len(stereo_config.blocks):
            raise ShapeIncompatible("both configurations need at least two blocks")
        if mono.config.blocks[i] != stereo_config.blocks[i]:
            raise ShapeIncompatible(f"block {i + 1} configurations differ")
    if mono.config.num_bands != stereo_config.num_bands:
        raise ShapeIncompatible("band counts differ")

    stereo = build_model(stereo_config, seed=seed)
    mono_state = mono.state_dict()
    stereo_state = stereo.state_dict()

    pairs = stereo_config.signal_pairs
    # pair layout is [L, R, (M,) S]; the side pair is always last
    content_pairs = pairs - 1
    scale = 1.0 / content_pairs if mode == "mono_preserving" else 1.0

    input_convs = set(_input_conv_names(0))
    with torch.no_grad():
        for name, tensor in mono_state.items():
            if not (name.startswith("blocks.0.") or name.startswith("blocks.1.")):
                continue
            target = stereo_state[name]
            module_name = name.rsplit(".", 1)[0]
            if module_name in input_convs and name.endswith(".weight") and tensor.dim() == 4:
                for p in range(content_pairs):
                    target[:, 2 * p:2 * p + 2] = tensor * scale
                if mode == "mono_preserving":
                    target[:, 2 * content_pairs:2 * pairs] = 0.0
                # replicate_random_S keeps the fresh slice for the side pair
            else:
                if target.shape != tensor.shape:
                    raise ShapeIncompatible(f"{name}: {tuple(tensor.shape)} vs {tuple(target.shape)}")
                target.copy_(tensor)
        stereo_state["band_mean"].copy_(mono_state["band_mean"])
        stereo_state["band_std"].copy_(mono_state["band_std"])
    stereo.load_state_dict(stereo_state)
    return stereo
