"""Binary model checkpoints.

Layout: magic ``ISNT``, u32 format version, u64 header length, UTF-8 JSON
header, then raw little-endian float32 tensor payloads in header index
order. The header carries the model configuration, a tensor index (name,
dtype, shape, byte offset into the payload region), the analysis frontend
parameters, and training metadata. Save -> load -> save is byte-identical.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .errors import CorruptCheckpoint, VersionMismatch
from .gammatone import FrontendConfig
from .model import ModelConfig, StereoQualityNet

MAGIC = b"ISNT"
FORMAT_VERSION = 1


@dataclass
class CheckpointInfo:
    """Header contents of a loaded checkpoint."""

    version: int
    config: ModelConfig
    frontend: FrontendConfig
    metadata: dict


def _frontend_dict(fc: FrontendConfig) -> dict:
    return {
        "window_s": fc.window_s,
        "hop_s": fc.hop_s,
        "num_bands": fc.num_bands,
        "min_freq_hz": fc.min_freq_hz,
        "max_freq_hz": fc.max_freq_hz,
        "sample_rate_hz": fc.sample_rate_hz,
        "floor_db": fc.floor_db,
    }


def save_checkpoint(
    model: StereoQualityNet,
    path: str | Path,
    *,
    frontend: FrontendConfig | None = None,
    metadata: dict | None = None,
) -> None:
    """Serialize model parameters, buffers, and header to ``path``."""
    tensors = []
    payloads = []
    offset = 0
    for name, tensor in model.state_dict().items():
        if name.endswith("num_batches_tracked"):
            continue  # derivable; keeps the payload homogeneous float32
        arr = np.ascontiguousarray(tensor.detach().cpu().numpy(), dtype="<f4")
        tensors.append(
            {"name": name, "dtype": "f4", "shape": list(arr.shape), "offset": offset}
        )
        payloads.append(arr.tobytes())
        offset += len(payloads[-1])

    header = {
        "config": model.config.to_dict(),
        "frontend": _frontend_dict(frontend or FrontendConfig()),
        "metadata": metadata or {},
        "tensors": tensors,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for chunk in payloads:
            fh.write(chunk)


def load_checkpoint(path: str | Path) -> tuple[StereoQualityNet, CheckpointInfo]:
    """Rebuild a model from a checkpoint file.

    Every float tensor in the reconstructed model must be covered by the
    file's tensor index, otherwise the checkpoint is rejected as corrupt.
    """
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != MAGIC:
        raise CorruptCheckpoint(f"{path}: bad magic")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: format version {version}, reader supports {FORMAT_VERSION}")
    (header_len,) = struct.unpack_from("<Q", data, 8)
    header_end = 16 + header_len
    if len(data) < header_end:
        raise CorruptCheckpoint(f"{path}: truncated header")
    try:
        header = json.loads(data[16:header_end].decode("utf-8"))
        config = ModelConfig.from_dict(header["config"])
        frontend = FrontendConfig(**header["frontend"])
        index = header["tensors"]
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptCheckpoint(f"{path}: malformed header ({exc})") from exc

    model = StereoQualityNet(config)
    state = model.state_dict()
    expected = {n for n in state if not n.endswith("num_batches_tracked")}
    payload = data[header_end:]
    with torch.no_grad():
        for entry in index:
            name = entry["name"]
            if name not in expected:
                raise CorruptCheckpoint(f"{path}: unknown tensor {name!r}")
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            start = entry["offset"]
            end = start + 4 * count
            if end > len(payload):
                raise CorruptCheckpoint(f"{path}: tensor {name!r} payload out of range")
            arr = np.frombuffer(payload[start:end], dtype="<f4").reshape(shape)
            if state[name].shape != torch.Size(shape):
                raise CorruptCheckpoint(
                    f"{path}: tensor {name!r} shape {shape} does not match model"
                )
            state[name].copy_(torch.from_numpy(arr.copy()))
            expected.discard(name)
    if expected:
        raise CorruptCheckpoint(f"{path}: missing tensors {sorted(expected)[:3]}...")
    model.load_state_dict(state)
    model.eval()
    return model, CheckpointInfo(
        version=version, config=config, frontend=frontend, metadata=header["metadata"]
    )
