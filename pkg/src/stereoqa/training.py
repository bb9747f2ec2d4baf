"""Training loop: smooth-L1 regression with Adam under k-fold rotation.

The dataset is padded to a common length (its longest excerpt, or an
explicit frame count), converted to input tensors once, and normalized
with per-band statistics that are stored in the resulting checkpoint.
Folds run sequentially on the same model instance: with 5 folds and 10
epochs per fold the model sees 50 epochs in total, each fold validating
on its own held-out 20%. Left/right channel swapping doubles the training
rows per epoch with unchanged labels; since the analysis is sign-invariant
in the side signal, the swapped tensor is an exact plane permutation of
the original and is materialized that way.

Targets are mean listening scores divided by 100; all recorded losses are
in those normalized units.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import torch

from .audio_io import RatedPair, load_pair
from .conditioning import build_input_tensor, swap_channel_permutation
from .errors import DatasetTooSmall, InvalidConfig, NonFiniteLoss, ShapeMismatch
from .gammatone import FrontendConfig, design_filterbank
from .model import StereoQualityNet


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 8
    epochs_per_fold: int = 10
    folds: int = 5
    loss_beta: float = 1.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    lr_swap: bool = True
    fixed_frames: int | None = None  # None: pad to the dataset's longest excerpt

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise InvalidConfig("learning_rate must be positive")
        if self.folds < 1 or self.batch_size < 1 or self.epochs_per_fold < 1:
            raise InvalidConfig("folds, batch_size and epochs_per_fold must be >= 1")
        if self.loss_beta <= 0:
            raise InvalidConfig("loss_beta must be positive")

    @classmethod
    def from_json(cls, path: str | Path) -> "TrainConfig":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise InvalidConfig(f"unknown training config keys: {sorted(unknown)}")
        cfg = cls(**raw)
        cfg.validate()
        return cfg


@dataclass
class StepRecord:
    step: int
    fold: int
    epoch: int
    loss: float


@dataclass
class EpochRecord:
    fold: int
    epoch: int
    train_loss: float
    val_loss: float
    val_mse: float


@dataclass
class TrainHistory:
    """Per-step losses plus per-epoch train/validation summaries."""

    steps: list[StepRecord] = field(default_factory=list)
    epochs: list[EpochRecord] = field(default_factory=list)

    def write_csv(self, path: str | Path) -> None:
        """One row per step; epoch-end rows carry the validation columns."""
        epoch_by_key = {(e.fold, e.epoch): e for e in self.epochs}
        last_step = {}
        for s in self.steps:
            last_step[(s.fold, s.epoch)] = s.step
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "fold", "epoch", "train_loss", "val_loss", "val_mse"])
            for s in self.steps:
                row = [s.step, s.fold, s.epoch, f"{s.loss:.8f}", "", ""]
                if last_step[(s.fold, s.epoch)] == s.step and (s.fold, s.epoch) in epoch_by_key:
                    e = epoch_by_key[(s.fold, s.epoch)]
                    row[4] = f"{e.val_loss:.8f}"
                    row[5] = f"{e.val_mse:.8f}"
                writer.writerow(row)


def smooth_l1(pred, target, beta: float = 1.0):
    """Smooth L1 loss: 0.5 d^2/beta for |d| < beta, else |d| - beta/2."""
    if beta <= 0:
        raise InvalidConfig("beta must be positive")
    d = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    ad = np.abs(d)
    out = np.where(ad < beta, 0.5 * d * d / beta, ad - 0.5 * beta)
    return float(out) if out.ndim == 0 else out


def smooth_l1_torch(pred: torch.Tensor, target: torch.Tensor, beta: float = 1.0) -> torch.Tensor:
    d = pred - target
    ad = d.abs()
    return torch.where(ad < beta, 0.5 * d * d / beta, ad - 0.5 * beta)


def init_adam_state(params: dict[str, torch.Tensor]) -> dict:
    return {
        "step": 0,
        "m": {n: torch.zeros_like(p) for n, p in params.items()},
        "v": {n: torch.zeros_like(p) for n, p in params.items()},
    }


def adam_step(
    params: dict[str, torch.Tensor],
    grads: dict[str, torch.Tensor],
    state: dict,
    *,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> dict:
    """One Adam update with bias correction; parameters update in place."""
    t = state["step"] + 1
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    with torch.no_grad():
        for name, p in params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise ShapeMismatch(f"{name}: grad {tuple(g.shape)} vs param {tuple(p.shape)}")
            m = state["m"][name]
            v = state["v"][name]
            m.mul_(beta1).add_(g, alpha=1.0 - beta1)
            v.mul_(beta2).addcmul_(g, g, value=1.0 - beta2)
            p.sub_((lr / bc1) * m / ((v / bc2).sqrt() + eps))
    state["step"] = t
    return state


def make_folds(num_rows: int, folds: int, seed: int) -> list[np.ndarray]:
    """Disjoint validation index folds of near-equal size (seeded shuffle)."""
    if num_rows < folds:
        raise DatasetTooSmall(f"{num_rows} rows cannot fill {folds} folds")
    perm = np.random.default_rng(seed).permutation(num_rows)
    return [np.sort(part) for part in np.array_split(perm, folds)]


def band_stats(tensors: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Per-band mean/std over all channels and frames of a tensor list."""
    stacked = np.concatenate([t.transpose(1, 0, 2).reshape(t.shape[1], -1) for t in tensors], axis=1)
    mean = stacked.mean(axis=1)
    std = np.maximum(stacked.std(axis=1), 1e-6)
    return mean.astype(np.float32), std.astype(np.float32)


_PLANE_SELECTION = {
    8: [0, 1, 2, 3, 4, 5, 6, 7],   # L, R, M, S pairs
    6: [0, 1, 2, 3, 6, 7],         # mid pair excluded
    2: [4, 5],                     # mid pair only (mono projection)
}


def select_planes(data: np.ndarray, in_channels: int) -> np.ndarray:
    """Reduce a full 8-plane tensor to a model's input channel subset."""
    if in_channels not in _PLANE_SELECTION:
        raise ShapeMismatch(f"no plane selection for {in_channels}-channel models")
    return data[_PLANE_SELECTION[in_channels]]


def _swap_perm_for(in_channels: int) -> list[int]:
    if in_channels == 2:
        return [0, 1]  # mid pair is swap-invariant
    return swap_channel_permutation(use_mid=(in_channels == 8))


def training_units(indices, lr_swap: bool) -> list[tuple[int, bool]]:
    """(row index, swapped?) units for one fold's training set.

    Channel swapping doubles the units; a swapped unit reuses its source
    row's index and therefore its label.
    """
    units = [(int(i), False) for i in indices]
    if lr_swap:
        units += [(int(i), True) for i in indices]
    return units


def prepare_dataset(
    rows: list[RatedPair],
    frontend: FrontendConfig,
    in_channels: int = 8,
    fixed_frames: int | None = None,
    min_frames: int | None = None,
) -> tuple[list[np.ndarray], np.ndarray, int]:
    """Load rows into fixed-length input tensors.

    Returns (tensors, targets in [0,1], frame count). The frame count is
    ``fixed_frames`` or the dataset's longest excerpt rounded up to whole
    hops, and never below ``min_frames``; every pair is zero-padded on
    both sides to that length.
    """
    pairs = [load_pair(row) for row in rows]
    hop = frontend.hop_samples
    if fixed_frames is None:
        longest = max(ref.num_samples for ref, _ in pairs)
        fixed_frames = -(-longest // hop)
    if min_frames is not None:
        fixed_frames = max(fixed_frames, min_frames)
    fb = design_filterbank(frontend)
    tensors = []
    for ref, cod in pairs:
        full = build_input_tensor(ref, cod, frontend, fixed_frames=fixed_frames, filterbank=fb)
        tensors.append(select_planes(full.data, in_channels))
    targets = np.array([row.mos / 100.0 for row in rows], dtype=np.float32)
    return tensors, targets, fixed_frames


def train(
    model: StereoQualityNet,
    rows: list[RatedPair],
    config: TrainConfig,
    *,
    frontend: FrontendConfig | None = None,
    min_frames: int | None = None,
    progress=None,
) -> TrainHistory:
    """Run the full cross-validation training schedule on ``model``.

    ``progress`` is an optional callable receiving per-epoch summary lines.
    With ``folds=1`` the model trains and validates on the whole dataset
    (no held-out rows); that degenerate setting exists for overfitting
    smoke tests.
    """
    config.validate()
    frontend = frontend or FrontendConfig()
    tensors, targets, fixed = prepare_dataset(
        rows,
        frontend,
        in_channels=model.config.in_channels,
        fixed_frames=config.fixed_frames,
        min_frames=min_frames if min_frames is not None else model.min_input_frames,
    )

    mean, std = band_stats(tensors)
    model.set_normalization(mean, std)

    perm = _swap_perm_for(model.config.in_channels)
    folds = make_folds(len(rows), config.folds, config.seed)
    all_idx = np.arange(len(rows))

    params = dict(model.named_parameters())
    state = init_adam_state(params)
    history = TrainHistory()
    rng = np.random.default_rng(config.seed + 1)
    step = 0
    dtype = next(model.parameters()).dtype

    for fold_idx, val_idx in enumerate(folds):
        if config.folds == 1:
            train_idx = all_idx
        else:
            train_idx = np.setdiff1d(all_idx, val_idx)
        units = training_units(train_idx, config.lr_swap)

        for epoch_in_fold in range(config.epochs_per_fold):
            epoch = fold_idx * config.epochs_per_fold + epoch_in_fold
            order = rng.permutation(len(units))
            model.train()
            epoch_losses = []
            for start in range(0, len(order), config.batch_size):
                chosen = [units[j] for j in order[start:start + config.batch_size]]
                batch = np.stack(
                    [tensors[i][perm] if swapped else tensors[i] for i, swapped in chosen]
                )
                x = torch.as_tensor(batch, dtype=dtype)
                y = torch.as_tensor(targets[[i for i, _ in chosen]], dtype=dtype)
                model.zero_grad(set_to_none=True)
                pred = model(x).squeeze(1)
                loss = smooth_l1_torch(pred, y, config.loss_beta).mean()
                if not torch.isfinite(loss):
                    raise NonFiniteLoss(
                        f"non-finite loss at step {step} (fold {fold_idx}, epoch {epoch})"
                    )
                loss.backward()
                grads = {n: p.grad for n, p in params.items()}
                adam_step(
                    params,
                    grads,
                    state,
                    lr=config.learning_rate,
                    beta1=config.adam_beta1,
                    beta2=config.adam_beta2,
                    eps=config.adam_eps,
                )
                step += 1
                value = float(loss.detach())
                epoch_losses.append(value)
                history.steps.append(StepRecord(step=step, fold=fold_idx, epoch=epoch, loss=value))

            val_loss, val_mse = _validate(model, tensors, targets, val_idx, config.loss_beta, dtype)
            record = EpochRecord(
                fold=fold_idx,
                epoch=epoch,
                train_loss=float(np.mean(epoch_losses)),
                val_loss=val_loss,
                val_mse=val_mse,
            )
            history.epochs.append(record)
            if progress is not None:
                progress(
                    f"fold {fold_idx + 1}/{config.folds} epoch {epoch + 1}: "
                    f"train {record.train_loss:.4f} val {record.val_loss:.4f}"
                )
    model.eval()
    return history


@torch.no_grad()
def _validate(model, tensors, targets, val_idx, beta, dtype):
    model.eval()
    losses = []
    sq = []
    for i in val_idx:
        x = torch.as_tensor(tensors[i], dtype=dtype)
        pred = float(model(x).squeeze())
        losses.append(smooth_l1(pred, float(targets[i]), beta))
        sq.append((pred - float(targets[i])) ** 2)
    model.train()
    if not losses:
        return math.nan, math.nan
    return float(np.mean(losses)), float(np.mean(sq))
