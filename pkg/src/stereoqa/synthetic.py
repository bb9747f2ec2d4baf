"""Synthetic degradations and desk-scale labeled dataset generation.

Each generated dataset pairs clean stereo sources with degraded versions
carrying proxy scores: the hidden reference (score 100), the two standard
low-pass anchors (7 kHz and 3.5 kHz), and a configurable set of further
degradations. Proxy scores are training scaffolding whose only guaranteed
property is strict monotonicity in degradation strength within a kind.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .audio_io import AudioExcerpt, load_wav, save_wav, write_manifest
from .conditioning import to_mid_side
from .errors import EmptySource, InvalidConfig, InvalidCutoff, NotStereo
from .gammatone import FrontendConfig, design_filterbank

LOWPASS_TAPS = 511
ANCHORS = ((7000.0, 55.0), (3500.0, 30.0))  # (cutoff_hz, proxy score)


@dataclass(frozen=True)
class DegradationSpec:
    """One degradation condition: kind, strength parameter, proxy score."""

    kind: str                      # lowpass | additive_noise | band_gap | ms_crosstalk
    strength: float | tuple
    proxy_mos: float

    def label(self) -> str:
        if self.kind == "lowpass":
            return f"lowpass_{int(self.strength)}"
        if self.kind == "additive_noise":
            return f"noise_snr{int(self.strength)}"
        if self.kind == "band_gap":
            lo, hi = self.strength
            return f"bandgap_{lo}_{hi}"
        if self.kind == "ms_crosstalk":
            return f"crosstalk_{int(round(self.strength * 100))}"
        raise InvalidConfig(f"unknown degradation kind {self.kind!r}")

    def severity(self) -> float:
        """Comparable strength within a kind; larger means more degraded."""
        if self.kind == "lowpass":
            return -float(self.strength)
        if self.kind == "additive_noise":
            return -float(self.strength)  # lower SNR is stronger
        if self.kind == "band_gap":
            lo, hi = self.strength
            return float(hi - lo + 1)
        if self.kind == "ms_crosstalk":
            return float(self.strength)
        raise InvalidConfig(f"unknown degradation kind {self.kind!r}")


DEFAULT_DEGRADATIONS = (
    DegradationSpec("additive_noise", 30.0, 80.0),
    DegradationSpec("ms_crosstalk", 0.5, 70.0),
    DegradationSpec("additive_noise", 20.0, 60.0),
    DegradationSpec("ms_crosstalk", 1.0, 50.0),
    DegradationSpec("additive_noise", 10.0, 35.0),
)


def lowpass(excerpt: AudioExcerpt, cutoff_hz: float) -> AudioExcerpt:
    """Linear-phase windowed-sinc low-pass, delay-compensated, same length."""
    nyquist = excerpt.sample_rate / 2
    if not 0 < cutoff_hz < nyquist:
        raise InvalidCutoff(f"cutoff {cutoff_hz} Hz outside (0, {nyquist})")
    n = np.arange(LOWPASS_TAPS) - (LOWPASS_TAPS - 1) / 2
    taps = 2 * cutoff_hz / excerpt.sample_rate * np.sinc(2 * cutoff_hz / excerpt.sample_rate * n)
    taps *= 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(LOWPASS_TAPS) / (LOWPASS_TAPS - 1))
    taps /= taps.sum()  # unity DC gain
    out = np.stack(
        [fftconvolve(ch.astype(np.float64), taps, mode="same") for ch in excerpt.samples]
    )
    out = np.clip(out, -1.0, 1.0).astype(np.float32)
    return AudioExcerpt(samples=out, sample_rate=excerpt.sample_rate)


def additive_noise(excerpt: AudioExcerpt, snr_db: float, rng: np.random.Generator) -> AudioExcerpt:
    """Add white noise at the requested SNR; the sum is clipped to [-1, 1]."""
    signal_power = float(np.mean(excerpt.samples.astype(np.float64) ** 2))
    if signal_power == 0.0:
        signal_power = 1e-12
    noise_power = signal_power / (10.0 ** (snr_db / 10.0))
    noise = rng.normal(0.0, np.sqrt(noise_power), size=excerpt.samples.shape)
    out = np.clip(excerpt.samples.astype(np.float64) + noise, -1.0, 1.0).astype(np.float32)
    return AudioExcerpt(samples=out, sample_rate=excerpt.sample_rate)


def band_gap(
    excerpt: AudioExcerpt,
    band_lo: int,
    band_hi: int,
    frontend: FrontendConfig | None = None,
) -> AudioExcerpt:
    """Zero the spectrum between two analysis band centers (inclusive)."""
    frontend = frontend or FrontendConfig()
    centers = design_filterbank(frontend).center_freqs_hz
    if not 0 <= band_lo <= band_hi < centers.size:
        raise InvalidConfig(f"band range [{band_lo}, {band_hi}] outside 0..{centers.size - 1}")
    f_lo, f_hi = centers[band_lo], centers[band_hi]
    spectra = np.fft.rfft(excerpt.samples.astype(np.float64), axis=1)
    freqs = np.fft.rfftfreq(excerpt.num_samples, d=1.0 / excerpt.sample_rate)
    spectra[:, (freqs >= f_lo) & (freqs <= f_hi)] = 0.0
    out = np.fft.irfft(spectra, n=excerpt.num_samples, axis=1)
    out = np.clip(out, -1.0, 1.0).astype(np.float32)
    return AudioExcerpt(samples=out, sample_rate=excerpt.sample_rate)


def ms_crosstalk(excerpt: AudioExcerpt, fraction: float) -> AudioExcerpt:
    """Shrink the side signal by ``fraction``; 1.0 collapses to dual-mono."""
    if excerpt.channels != 2:
        raise NotStereo("ms_crosstalk requires a stereo excerpt")
    if not 0.0 <= fraction <= 1.0:
        raise InvalidConfig(f"fraction {fraction} outside [0, 1]")
    if fraction == 0.0:
        return AudioExcerpt(samples=excerpt.samples.copy(), sample_rate=excerpt.sample_rate)
    mid, side = to_mid_side(excerpt.samples[0], excerpt.samples[1])
    side = (1.0 - fraction) * side
    out = np.stack([mid + side, mid - side])
    return AudioExcerpt(samples=out, sample_rate=excerpt.sample_rate)


def apply_degradation(
    excerpt: AudioExcerpt, spec: DegradationSpec, rng: np.random.Generator
) -> AudioExcerpt:
    if spec.kind == "lowpass":
        return lowpass(excerpt, float(spec.strength))
    if spec.kind == "additive_noise":
        return additive_noise(excerpt, float(spec.strength), rng)
    if spec.kind == "band_gap":
        lo, hi = spec.strength
        return band_gap(excerpt, int(lo), int(hi))
    if spec.kind == "ms_crosstalk":
        return ms_crosstalk(excerpt, float(spec.strength))
    raise InvalidConfig(f"unknown degradation kind {spec.kind!r}")


def _check_monotone(specs) -> None:
    by_kind: dict[str, list[DegradationSpec]] = {}
    for s in specs:
        by_kind.setdefault(s.kind, []).append(s)
    for kind, group in by_kind.items():
        ordered = sorted(group, key=lambda s: s.severity())
        scores = [s.proxy_mos for s in ordered]
        if any(b >= a for a, b in zip(scores, scores[1:])):
            raise InvalidConfig(f"proxy scores for {kind!r} are not strictly decreasing in strength")


def gen_dataset(
    source_dir: str | Path,
    out_dir: str | Path,
    specs=None,
    seed: int = 0,
    threads: int = 1,
) -> Path:
    """Build a labeled dataset from a directory of clean stereo WAVs.

    For every source: a hidden-reference row (coded = reference, score
    100), both low-pass anchors, and one row per degradation spec. Files
    land under ``out_dir`` with a ``dataset.jsonl`` manifest of relative
    paths. Each (source, condition) job carries its own seeded generator,
    so the output is byte-identical for a fixed seed regardless of
    ``threads``. Returns the manifest path.
    """
    source_dir = Path(source_dir)
    out_dir = Path(out_dir)
    sources = sorted(source_dir.glob("*.wav"))
    if not sources:
        raise EmptySource(f"no .wav files in {source_dir}")
    specs = DEFAULT_DEGRADATIONS if specs is None else tuple(specs)
    anchors = tuple(DegradationSpec("lowpass", cutoff, score) for cutoff, score in ANCHORS)
    _check_monotone(anchors + specs)
    conditions = [(a, f"anchor{int(a.strength)}") for a in anchors]
    conditions += [(s, s.label()) for s in specs]

    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    jobs = []
    for src_index, src in enumerate(sources):
        excerpt = load_wav(src)
        stem = src.stem
        ref_name = f"{stem}_ref.wav"
        save_wav(out_dir / ref_name, excerpt)
        rows.append(
            {"ref_path": ref_name, "cod_path": ref_name, "mos": 100.0,
             "codec": "reference", "group": stem}
        )
        for cond_index, (spec, codec_tag) in enumerate(conditions):
            cod_name = f"{stem}_{spec.label()}.wav"
            jobs.append((excerpt, spec, src_index, cond_index, cod_name))
            rows.append(
                {"ref_path": ref_name, "cod_path": cod_name, "mos": spec.proxy_mos,
                 "codec": codec_tag, "group": stem}
            )

    def _run(job):
        excerpt, spec, src_index, cond_index, cod_name = job
        rng = np.random.default_rng(np.random.SeedSequence([seed, src_index, cond_index]))
        save_wav(out_dir / cod_name, apply_degradation(excerpt, spec, rng))

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(_run, jobs))
    else:
        for job in jobs:
            _run(job)

    manifest = out_dir / "dataset.jsonl"
    write_manifest(manifest, rows)
    return manifest


def make_demo_sources(
    out_dir: str | Path,
    count: int = 6,
    duration_s: float = 2.0,
    seed: int = 0,
    sample_rate: int = 48_000,
) -> list[Path]:
    """Synthesize clean wide-band stereo sources for dataset generation.

    Each source mixes a handful of partial tones with independent slow
    amplitude modulation per channel plus a noise floor, giving material
    with energy across the band range and a non-trivial stereo image.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n = int(duration_s * sample_rate)
    t = np.arange(n) / sample_rate
    paths = []
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        channels = []
        freqs = rng.uniform(80.0, 16_000.0, size=6)
        phases = rng.uniform(0, 2 * np.pi, size=(2, 6))
        pans = rng.uniform(0.15, 0.85, size=6)
        for ch in range(2):
            sig = np.zeros(n)
            for k, f in enumerate(freqs):
                gain = pans[k] if ch == 0 else 1.0 - pans[k]
                mod = 1.0 + 0.5 * np.sin(2 * np.pi * rng.uniform(0.3, 2.0) * t)
                sig += gain * mod * np.sin(2 * np.pi * f * t + phases[ch, k])
            sig += 0.02 * rng.normal(size=n)
            channels.append(sig)
        stereo = np.stack(channels)
        stereo = 0.5 * stereo / np.max(np.abs(stereo))
        path = out_dir / f"source_{i:02d}.wav"
        save_wav(path, AudioExcerpt(samples=stereo.astype(np.float32), sample_rate=sample_rate))
        paths.append(path)
    return paths
