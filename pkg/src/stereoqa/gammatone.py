"""Gammatone log-power spectrogram frontend.

The spectrogram is computed as an FFT-weighted short-time power spectrum:
each frame's periodogram is pooled into auditory bands through the squared
magnitude response of a 4th-order gammatone filter, sampled at the FFT bin
frequencies. Band center frequencies are spaced uniformly on the ERB-rate
scale (Glasberg & Moore parameters), starting exactly at ``min_freq_hz``.

With the default configuration (80 ms window, 20 ms hop, 32 bands from
50 Hz to 24 kHz at 48 kHz) a signal of N samples yields ceil(N / 960)
frames of 32 band powers in dB, floored at ``floor_db``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorruptFile, EmptySignal, InvalidConfig, SampleRateMismatch

# Glasberg & Moore ERB parameters
_EAR_Q = 9.26449
_MIN_BW = 24.7
_GT_ORDER = 4
# bandwidth of a 4th-order gammatone relative to the ERB it realizes
_BW_FACTOR = 1.019


@dataclass(frozen=True)
class FrontendConfig:
    """Analysis parameters for the gammatone spectrogram."""

    window_s: float = 0.080
    hop_s: float = 0.020
    num_bands: int = 32
    min_freq_hz: float = 50.0
    max_freq_hz: float = 24_000.0
    sample_rate_hz: int = 48_000
    floor_db: float = -100.0

    def validate(self) -> None:
        if not self.window_s > self.hop_s > 0:
            raise InvalidConfig("require window_s > hop_s > 0")
        if self.num_bands < 1:
            raise InvalidConfig("num_bands must be >= 1")
        if not 0 < self.min_freq_hz < self.max_freq_hz <= self.sample_rate_hz / 2:
            raise InvalidConfig("require 0 < min_freq_hz < max_freq_hz <= Nyquist")

    @property
    def window_samples(self) -> int:
        return int(round(self.window_s * self.sample_rate_hz))

    @property
    def hop_samples(self) -> int:
        return int(round(self.hop_s * self.sample_rate_hz))


@dataclass(frozen=True)
class FilterbankSpec:
    """Band center frequencies and FFT-bin pooling weights (unit row sums)."""

    center_freqs_hz: np.ndarray
    weights: np.ndarray
    n_fft: int

    @property
    def num_bands(self) -> int:
        return self.weights.shape[0]


@dataclass
class GammatoneSpectrogram:
    """Log band powers in dB, shape (num_bands, num_frames)."""

    values_db: np.ndarray
    config: FrontendConfig

    @property
    def num_bands(self) -> int:
        return self.values_db.shape[0]

    @property
    def num_frames(self) -> int:
        return self.values_db.shape[1]


def erb_bandwidth_hz(freq_hz):
    """Equivalent rectangular bandwidth at a given frequency (Glasberg & Moore)."""
    return _MIN_BW + np.asarray(freq_hz, dtype=np.float64) / _EAR_Q


def erb_rate(freq_hz):
    """Map frequency in Hz to the ERB-rate (ERB-number) scale."""
    return _EAR_Q * np.log1p(np.asarray(freq_hz, dtype=np.float64) / (_EAR_Q * _MIN_BW))


def erb_rate_inverse(rate):
    """Inverse of :func:`erb_rate`."""
    return _EAR_Q * _MIN_BW * np.expm1(np.asarray(rate, dtype=np.float64) / _EAR_Q)


def design_filterbank(config: FrontendConfig) -> FilterbankSpec:
    """Build the band weight matrix for a configuration.

    Centers are placed at uniform ERB-rate steps of
    (rate(max) - rate(min)) / num_bands starting at min_freq_hz, so the
    lowest center sits exactly at min_freq_hz and the highest stays one
    step below max_freq_hz. Each weight row is the squared gammatone
    magnitude response at the rFFT bin frequencies, normalized to sum 1.
    """
    config.validate()
    lo = erb_rate(config.min_freq_hz)
    hi = erb_rate(config.max_freq_hz)
    step = (hi - lo) / config.num_bands
    centers = erb_rate_inverse(lo + step * np.arange(config.num_bands))
    centers[0] = config.min_freq_hz

    n_fft = config.window_samples
    bin_freqs = np.arange(n_fft // 2 + 1) * (config.sample_rate_hz / n_fft)
    bw = _BW_FACTOR * erb_bandwidth_hz(centers)
    # squared magnitude of |H(f)| ~ (1 + ((f-fc)/b)^2)^(-order/2)
    rel = (bin_freqs[np.newaxis, :] - centers[:, np.newaxis]) / bw[:, np.newaxis]
    weights = (1.0 + rel**2) ** (-_GT_ORDER)
    weights /= weights.sum(axis=1, keepdims=True)
    return FilterbankSpec(center_freqs_hz=centers, weights=weights, n_fft=n_fft)


def num_frames_for(num_samples: int, config: FrontendConfig) -> int:
    """Frame count produced for a signal length: ceil(N / hop_samples)."""
    hop = config.hop_samples
    return -(-num_samples // hop)


def compute_spectrogram(
    samples,
    config: FrontendConfig,
    *,
    sample_rate: int | None = None,
    filterbank: FilterbankSpec | None = None,
) -> GammatoneSpectrogram:
    """Compute the gammatone log-power spectrogram of one channel.

    The signal is zero-padded at the tail so every hop position gets a
    full analysis window; frames are Hann-tapered before the FFT. Band
    powers are calibrated so a full-scale sine lands near 0 dB and
    converted with 10*log10(max(p, eps)) where eps = 10**(floor_db/10),
    so silence maps exactly to ``floor_db`` and scaling the input scales
    every unclamped dB entry exactly.
    """
    config.validate()
    if sample_rate is not None and sample_rate != config.sample_rate_hz:
        raise SampleRateMismatch(
            f"signal at {sample_rate} Hz, frontend configured for {config.sample_rate_hz} Hz"
        )
    x = np.asarray(samples, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise EmptySignal("cannot compute a spectrogram of an empty signal")
    if filterbank is None:
        filterbank = design_filterbank(config)

    hop = config.hop_samples
    win = config.window_samples
    frames = num_frames_for(x.size, config)
    padded = np.zeros((frames - 1) * hop + win, dtype=np.float64)
    padded[: x.size] = x

    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(win) / win)
    strided = np.lib.stride_tricks.sliding_window_view(padded, win)[::hop]
    spectra = np.fft.rfft(strided * window, n=filterbank.n_fft, axis=1)
    # scale so an amplitude-1 sine at a bin center contributes unit power
    scale = (window.sum() / 2.0) ** 2
    power = (spectra.real**2 + spectra.imag**2) / scale
    band_power = power @ filterbank.weights.T

    eps = 10.0 ** (config.floor_db / 10.0)
    values_db = 10.0 * np.log10(np.maximum(band_power, eps))
    np.maximum(values_db, config.floor_db, out=values_db)
    return GammatoneSpectrogram(values_db=values_db.T, config=config)


# --- spectrogram matrix file (magic, bands, frames, reserved; then f32 row-major) ---

_GTSG_MAGIC = b"GTSG"


def write_gtsg(path: str | Path, spectrogram: GammatoneSpectrogram) -> None:
    header = _GTSG_MAGIC + struct.pack(
        "<III", spectrogram.num_bands, spectrogram.num_frames, 0
    )
    payload = np.ascontiguousarray(spectrogram.values_db, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_gtsg(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != _GTSG_MAGIC:
        raise CorruptFile(f"{path} is not a spectrogram matrix file")
    bands, frames, _ = struct.unpack_from("<III", data, 4)
    expected = bands * frames * 4
    if len(data) - 16 < expected:
        raise CorruptFile(f"{path}: truncated payload")
    return np.frombuffer(data[16:16 + expected], dtype="<f4").reshape(bands, frames).copy()
