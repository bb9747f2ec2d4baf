"""Stereo conditioning: mid/side derivation and network input tensors.

A validated reference/coded stereo pair becomes a (channels, bands, frames)
stack of gammatone spectrograms. The channel order interleaves reference
and coded per signal so each (ref, cod) pair occupies a contiguous slice:

    [ref_L, cod_L, ref_R, cod_R, ref_M, cod_M, ref_S, cod_S]

with M = 0.5(L+R) and S = 0.5(L-R). A ``use_mid=False`` variant drops the
M pair for the 6-channel ablation configuration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio_io import AudioExcerpt
from .errors import LengthMismatch, NotMono, NotStereo, SampleRateMismatch, TooLong
from .gammatone import FilterbankSpec, FrontendConfig, compute_spectrogram, design_filterbank

CHANNEL_ORDER = ("ref_l", "cod_l", "ref_r", "cod_r", "ref_m", "cod_m", "ref_s", "cod_s")
CHANNEL_ORDER_NO_MID = ("ref_l", "cod_l", "ref_r", "cod_r", "ref_s", "cod_s")


@dataclass
class InputTensor:
    """Network input: float32 array of shape (channels, bands, frames)."""

    data: np.ndarray
    channel_names: tuple[str, ...]

    @property
    def num_channels(self) -> int:
        return self.data.shape[0]

    @property
    def num_bands(self) -> int:
        return self.data.shape[1]

    @property
    def num_frames(self) -> int:
        return self.data.shape[2]


def to_mid_side(left: np.ndarray, right: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Elementwise mid/side: M = 0.5(L+R), S = 0.5(L-R).

    Computed in float64 so the reconstruction M+S, M-S reproduces float32
    inputs exactly whenever the two samples are within ~2^29 in magnitude
    (always true for PCM-derived audio); beyond that it is 1-ulp accurate.
    """
    left = np.asarray(left, dtype=np.float64)
    right = np.asarray(right, dtype=np.float64)
    if left.shape != right.shape:
        raise LengthMismatch(f"left {left.shape} vs right {right.shape}")
    mid = 0.5 * (left + right)
    side = 0.5 * (left - right)
    return mid, side


def pad_to_length(excerpt: AudioExcerpt, target_samples: int) -> AudioExcerpt:
    """Zero-pad an excerpt on both sides to exactly target_samples.

    The deficit is split evenly; an odd remainder puts the extra zero at
    the tail. All channels are padded identically.
    """
    n = excerpt.num_samples
    if n > target_samples:
        raise TooLong(f"excerpt has {n} samples, target is {target_samples}")
    if n == target_samples:
        return excerpt
    deficit = target_samples - n
    front = deficit // 2
    padded = np.zeros((excerpt.channels, target_samples), dtype=np.float32)
    padded[:, front:front + n] = excerpt.samples
    return AudioExcerpt(samples=padded, sample_rate=excerpt.sample_rate)


def swap_lr(ref: AudioExcerpt, cod: AudioExcerpt) -> tuple[AudioExcerpt, AudioExcerpt]:
    """Exchange left and right channels of both signals (label unchanged)."""

    def _swap(e: AudioExcerpt) -> AudioExcerpt:
        if e.channels != 2:
            raise NotStereo(f"channel swap requires stereo, got {e.channels} channel(s)")
        return AudioExcerpt(samples=e.samples[::-1].copy(), sample_rate=e.sample_rate)

    return _swap(ref), _swap(cod)


def dual_mono(mono: AudioExcerpt) -> AudioExcerpt:
    """Duplicate a mono excerpt into a stereo excerpt with L = R."""
    if mono.channels != 1:
        raise NotMono(f"dual_mono requires a mono excerpt, got {mono.channels} channels")
    return AudioExcerpt(
        samples=np.vstack([mono.samples, mono.samples]), sample_rate=mono.sample_rate
    )


def swap_channel_permutation(use_mid: bool = True) -> list[int]:
    """Plane permutation equivalent to swapping L/R before analysis.

    L and R planes exchange; M planes are unchanged (L+R is symmetric) and
    S planes are unchanged because the power spectrogram is sign-invariant.
    """
    if use_mid:
        return [2, 3, 0, 1, 4, 5, 6, 7]
    return [2, 3, 0, 1, 4, 5]


def build_input_tensor(
    ref: AudioExcerpt,
    cod: AudioExcerpt,
    config: FrontendConfig,
    fixed_frames: int | None = None,
    *,
    min_frames: int | None = None,
    use_mid: bool = True,
    filterbank: FilterbankSpec | None = None,
) -> InputTensor:
    """Stack gammatone spectrograms of a validated stereo pair.

    With ``fixed_frames`` both signals are zero-padded (split front/back)
    to exactly that many hops before analysis, as used for fixed-shape
    training batches. Otherwise the natural length is kept, except that
    ``min_frames`` (typically the model's structural minimum) forces short
    signals up to a floor the same way.
    """
    if ref.channels != 2 or cod.channels != 2:
        raise NotStereo("input tensors require stereo reference and coded excerpts")
    if ref.num_samples != cod.num_samples:
        raise LengthMismatch("pair must be length-validated before conditioning")
    for e in (ref, cod):
        if e.sample_rate != config.sample_rate_hz:
            raise SampleRateMismatch(
                f"excerpt at {e.sample_rate} Hz, frontend configured for {config.sample_rate_hz} Hz"
            )

    hop = config.hop_samples
    target = None
    if fixed_frames is not None:
        target = fixed_frames * hop
    elif min_frames is not None and ref.num_samples < min_frames * hop:
        target = min_frames * hop
    if target is not None:
        ref = pad_to_length(ref, target)
        cod = pad_to_length(cod, target)

    if filterbank is None:
        filterbank = design_filterbank(config)

    def _signals(e: AudioExcerpt) -> list[np.ndarray]:
        left, right = e.samples[0], e.samples[1]
        mid, side = to_mid_side(left, right)
        if use_mid:
            return [left, right, mid, side]
        return [left, right, side]

    planes = []
    for ref_sig, cod_sig in zip(_signals(ref), _signals(cod)):
        for sig in (ref_sig, cod_sig):
            gram = compute_spectrogram(sig, config, filterbank=filterbank)
            planes.append(gram.values_db.astype(np.float32))
    names = CHANNEL_ORDER if use_mid else CHANNEL_ORDER_NO_MID
    return InputTensor(data=np.stack(planes), channel_names=names)
