"""
Model Storage Service - binary model files for trained kernel factors

Layout: magic b"DPPM", little-endian u32 format version, u32 header length,
the canonical JSON header (sorted keys, no whitespace), then the M x K factor
as little-endian float64 in row-major order. Nothing time-dependent is
stored, so identical runs write identical files.
"""

import json
import logging
import struct
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from pydantic import ValidationError

from app.core.errors import ModelFileError
from app.core.kernel import KernelFactor
from cli.schemas import ModelHeader

logger = logging.getLogger(__name__)

MAGIC = b"DPPM"
FORMAT_VERSION = 1
_PREAMBLE = struct.Struct("<4sII")
_DTYPE = np.dtype("<f8")


def encode_header(header: ModelHeader) -> bytes:
    return json.dumps(header.model_dump(mode="json"), sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_model(path: Union[str, Path], factor: KernelFactor, header: ModelHeader) -> Path:
    """Write factor and header; the header must describe the factor's shape."""
    if (header.num_items, header.rank) != factor.values.shape:
        raise ModelFileError(
            f"header describes {header.num_items}x{header.rank}, factor is "
            f"{factor.values.shape[0]}x{factor.values.shape[1]}"
        )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header_bytes = encode_header(header)
    payload = np.ascontiguousarray(factor.values, dtype=_DTYPE).tobytes(order="C")
    with path.open("wb") as handle:
        handle.write(_PREAMBLE.pack(MAGIC, header.format_version, len(header_bytes)))
        handle.write(header_bytes)
        handle.write(payload)
    logger.info(f"Saved {header.num_items}x{header.rank} model to {path}")
    return path


def load_model(path: Union[str, Path]) -> Tuple[KernelFactor, ModelHeader]:
    """Read a model file, checking magic, version and payload length."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(2, "No such file or directory", str(path))
    data = path.read_bytes()
    if len(data) < _PREAMBLE.size:
        raise ModelFileError(f"{path} is too short to be a model file")
    magic, version, header_length = _PREAMBLE.unpack_from(data)
    if magic != MAGIC:
        raise ModelFileError(f"{path} is not a model file (bad magic {magic!r})")
    if version != FORMAT_VERSION:
        raise ModelFileError(f"unsupported model format version {version}, expected {FORMAT_VERSION}")

    header_end = _PREAMBLE.size + header_length
    if len(data) < header_end:
        raise ModelFileError(f"{path} is truncated inside the header")
    try:
        header = ModelHeader(**json.loads(data[_PREAMBLE.size:header_end].decode("utf-8")))
    except (ValueError, ValidationError) as exc:
        raise ModelFileError(f"bad model header in {path}: {exc}")

    expected = header.num_items * header.rank * _DTYPE.itemsize
    payload = data[header_end:]
    if len(payload) != expected:
        raise ModelFileError(f"payload is {len(payload)} bytes, expected {expected}")
    values = np.frombuffer(payload, dtype=_DTYPE).reshape(header.num_items, header.rank)
    return KernelFactor(values.astype(float)), header
