"""WAV loading/saving, pair validation, and dataset manifests.

The loader is a self-contained RIFF/WAVE parser so that format errors map
onto the package's error types instead of whatever a third-party backend
would raise. Supported encodings: PCM16, PCM24, PCM32 and IEEE float32,
mono or stereo, little-endian.

Samples are kept as float32 in [-1, 1], shaped (channels, num_samples).
Integer formats are scaled by 2**(bits-1); float payloads are clipped to
[-1, 1]. Writing always produces IEEE float32 WAV, which round-trips the
in-memory representation bit-exactly.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import resample_poly

from .errors import (
    ChannelMismatch,
    CorruptFile,
    LengthMismatch,
    ParseError,
    RangeError,
    SampleRateMismatch,
    UnsupportedFormat,
)

TARGET_RATE = 48_000
# codecs commonly introduce sub-hop delay; anything larger needs external alignment
MAX_LENGTH_DIFF_SAMPLES = 960

_WAVE_FORMAT_PCM = 0x0001
_WAVE_FORMAT_IEEE_FLOAT = 0x0003
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE


@dataclass
class AudioExcerpt:
    """A loaded waveform: float32 samples in [-1, 1], shape (channels, n)."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.samples.ndim == 1:
            self.samples = self.samples[np.newaxis, :]
        if self.samples.ndim != 2:
            raise ValueError("samples must be 1-D or (channels, n)")
        if not np.all(np.isfinite(self.samples)):
            raise CorruptFile("non-finite sample values")

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def num_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.num_samples / self.sample_rate


@dataclass
class RatedPair:
    """One manifest row: a reference/coded pair with its mean listening score."""

    ref_path: str
    cod_path: str
    mos: float
    codec: str | None = None
    bitrate_kbps: float | None = None
    group: str | None = None


def _read_chunks(data: bytes):
    """Yield (chunk_id, payload) for every top-level RIFF chunk."""
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        payload = data[pos + 8:pos + 8 + size]
        if len(payload) < size:
            raise CorruptFile(f"truncated chunk {cid!r}: expected {size} bytes")
        yield cid, payload
        pos += 8 + size + (size & 1)  # chunks are word-aligned


def _decode_pcm24(raw: bytes) -> np.ndarray:
    b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3)
    vals = (
        b[:, 0].astype(np.int32)
        | (b[:, 1].astype(np.int32) << 8)
        | (b[:, 2].astype(np.int8).astype(np.int32) << 16)
    )
    return vals.astype(np.float32) / float(1 << 23)


def load_wav(path: str | Path, *, resample: bool = False) -> AudioExcerpt:
    """Load a WAV file as an AudioExcerpt at 48 kHz.

    Files at other rates raise SampleRateMismatch unless ``resample=True``,
    in which case a polyphase windowed-sinc resampler converts them.
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CorruptFile(f"cannot read {path}: {exc}") from exc
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise CorruptFile(f"{path} is not a RIFF/WAVE file")

    fmt = None
    payload = None
    for cid, chunk in _read_chunks(data):
        if cid == b"fmt ":
            fmt = chunk
        elif cid == b"data":
            payload = chunk
    if fmt is None or payload is None:
        raise CorruptFile(f"{path} lacks fmt/data chunks")
    if len(fmt) < 16:
        raise CorruptFile(f"{path} has a malformed fmt chunk")

    tag, channels, rate, _, block_align, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if tag == _WAVE_FORMAT_EXTENSIBLE:
        if len(fmt) < 40:
            raise CorruptFile(f"{path}: extensible fmt chunk too short")
        (tag,) = struct.unpack_from("<H", fmt, 24)  # first 2 bytes of SubFormat GUID
    if tag not in (_WAVE_FORMAT_PCM, _WAVE_FORMAT_IEEE_FLOAT):
        raise UnsupportedFormat(f"{path}: compressed or unknown format tag 0x{tag:04x}")
    if channels not in (1, 2):
        raise UnsupportedFormat(f"{path}: {channels} channels (only mono/stereo supported)")

    if tag == _WAVE_FORMAT_IEEE_FLOAT:
        if bits != 32:
            raise UnsupportedFormat(f"{path}: float{bits} is not supported")
        flat = np.frombuffer(payload[: len(payload) - len(payload) % 4], dtype="<f4")
        if not np.all(np.isfinite(flat)):
            raise CorruptFile(f"{path}: non-finite float samples")
        flat = np.clip(flat.astype(np.float32), -1.0, 1.0)
    elif bits == 16:
        flat = np.frombuffer(payload[: len(payload) - len(payload) % 2], dtype="<i2")
        flat = flat.astype(np.float32) / 32768.0
    elif bits == 24:
        flat = _decode_pcm24(payload[: len(payload) - len(payload) % 3])
    elif bits == 32:
        flat = np.frombuffer(payload[: len(payload) - len(payload) % 4], dtype="<i4")
        flat = (flat.astype(np.float64) / float(1 << 31)).astype(np.float32)
    else:
        raise UnsupportedFormat(f"{path}: PCM{bits} is not supported")

    if flat.size % channels:
        flat = flat[: flat.size - flat.size % channels]
    if flat.size == 0:
        raise CorruptFile(f"{path}: empty data chunk")
    samples = flat.reshape(-1, channels).T.copy()

    if rate != TARGET_RATE:
        if not resample:
            raise SampleRateMismatch(
                f"{path}: {rate} Hz (expected {TARGET_RATE}; pass resample=True to convert)"
            )
        g = math.gcd(TARGET_RATE, rate)
        samples = resample_poly(samples.astype(np.float64), TARGET_RATE // g, rate // g, axis=1)
        samples = np.clip(samples, -1.0, 1.0).astype(np.float32)
        rate = TARGET_RATE

    return AudioExcerpt(samples=samples, sample_rate=rate)


def save_wav(path: str | Path, excerpt: AudioExcerpt) -> None:
    """Write an excerpt as IEEE float32 WAV (bit-exact round trip with load_wav)."""
    samples = np.ascontiguousarray(excerpt.samples.T, dtype="<f4")
    payload = samples.tobytes()
    channels = excerpt.channels
    rate = excerpt.sample_rate
    byte_rate = rate * channels * 4
    fmt = struct.pack("<HHIIHH", _WAVE_FORMAT_IEEE_FLOAT, channels, rate, byte_rate, channels * 4, 32)
    fact = struct.pack("<I", excerpt.num_samples)
    body = (
        b"WAVE"
        + b"fmt " + struct.pack("<I", len(fmt)) + fmt
        + b"fact" + struct.pack("<I", len(fact)) + fact
        + b"data" + struct.pack("<I", len(payload)) + payload
    )
    Path(path).write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)


def validate_pair(ref: AudioExcerpt, cod: AudioExcerpt) -> tuple[AudioExcerpt, AudioExcerpt]:
    """Check a reference/coded pair and equalize lengths.

    Channel counts must match and lengths may differ by at most one hop
    (960 samples at 48 kHz); the shorter signal is tail-padded with zeros.
    Idempotent: a pair that already matches is returned unchanged.
    """
    if ref.channels != cod.channels:
        raise ChannelMismatch(f"reference has {ref.channels} channels, coded has {cod.channels}")
    diff = abs(ref.num_samples - cod.num_samples)
    if diff > MAX_LENGTH_DIFF_SAMPLES:
        raise LengthMismatch(
            f"lengths differ by {diff} samples (> {MAX_LENGTH_DIFF_SAMPLES}); align externally"
        )
    if diff == 0:
        return ref, cod
    target = max(ref.num_samples, cod.num_samples)

    def _tail_pad(e: AudioExcerpt) -> AudioExcerpt:
        if e.num_samples == target:
            return e
        padded = np.zeros((e.channels, target), dtype=np.float32)
        padded[:, : e.num_samples] = e.samples
        return AudioExcerpt(samples=padded, sample_rate=e.sample_rate)

    return _tail_pad(ref), _tail_pad(cod)


_REQUIRED_KEYS = ("ref_path", "cod_path", "mos")


def read_manifest(path: str | Path) -> list[RatedPair]:
    """Parse a JSON-lines manifest into RatedPair rows.

    Each non-empty line is one JSON object with required keys ref_path,
    cod_path, mos and optional codec, bitrate_kbps, group. Relative paths
    are resolved against the manifest's directory.
    """
    path = Path(path)
    base = path.parent
    rows: list[RatedPair] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from exc
            if not isinstance(obj, dict):
                raise ParseError("expected a JSON object", line=lineno)
            for key in _REQUIRED_KEYS:
                if key not in obj:
                    raise ParseError(f"missing required key {key!r}", line=lineno)
            mos = obj["mos"]
            if not isinstance(mos, (int, float)) or isinstance(mos, bool):
                raise ParseError("mos must be a number", line=lineno)
            if not 0.0 <= float(mos) <= 100.0:
                raise RangeError(f"mos {mos} outside [0, 100]", line=lineno)
            if not isinstance(obj["ref_path"], str) or not isinstance(obj["cod_path"], str):
                raise ParseError("ref_path and cod_path must be strings", line=lineno)

            def _resolve(p: str) -> str:
                return p if Path(p).is_absolute() else str(base / p)

            rows.append(
                RatedPair(
                    ref_path=_resolve(obj["ref_path"]),
                    cod_path=_resolve(obj["cod_path"]),
                    mos=float(mos),
                    codec=obj.get("codec"),
                    bitrate_kbps=obj.get("bitrate_kbps"),
                    group=obj.get("group"),
                )
            )
    return rows


def write_manifest(path: str | Path, rows: list[dict]) -> None:
    """Write manifest rows (plain dicts) as JSON lines with stable key order."""
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def load_pair(row: RatedPair, *, resample: bool = False) -> tuple[AudioExcerpt, AudioExcerpt]:
    """Load and validate the audio behind a manifest row."""
    ref = load_wav(row.ref_path, resample=resample)
    cod = load_wav(row.cod_path, resample=resample)
    return validate_pair(ref, cod)
