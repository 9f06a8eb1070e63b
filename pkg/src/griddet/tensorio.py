"""Binary containers for decoder parameters and feature-grid tensors.

Both files are little-endian and share one tensor encoding:

    tensor := u32 rank, rank * u32 dims, float32 row-major payload

Parameter file:

    magic "GRIDPRM1" (8 bytes), u32 version (1), u32 LSTM layer count L,
    then per layer: w_x, w_h, b; then w_obj, b_obj, w_cls, b_cls,
    w_coord, b_coord.

Tensor file (feature grids and other raw arrays):

    magic "GRIDTNS1" (8 bytes), u32 version (1), u32 tensor count,
    then the tensors.

Payloads are float32, so writing truncates float64 arrays; reading a file
back and rewriting it is byte-identical.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .decoder import DecoderParams, LstmLayerParams

__all__ = [
    "PARAMS_MAGIC",
    "TENSORS_MAGIC",
    "FORMAT_VERSION",
    "save_params",
    "load_params",
    "write_tensors",
    "read_tensors",
]

PARAMS_MAGIC = b"GRIDPRM1"
TENSORS_MAGIC = b"GRIDTNS1"
FORMAT_VERSION = 1


def _write_tensor(fh, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    fh.write(struct.pack("<I", arr.ndim))
    fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_exact(fh, count: int, path, what: str) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise ValueError(f"{path}: truncated file while reading {what}")
    return data


def _read_tensor(fh, path) -> np.ndarray:
    (rank,) = struct.unpack("<I", _read_exact(fh, 4, path, "tensor rank"))
    if rank > 8:
        raise ValueError(f"{path}: implausible tensor rank {rank}")
    dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, path, "tensor dims"))
    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    payload = _read_exact(fh, 4 * count, path, "tensor payload")
    arr = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    return arr.reshape(dims)


def save_params(path: str | Path, params: DecoderParams) -> None:
    """Serialize decoder parameters to the binary parameter container."""
    with open(path, "wb") as fh:
        fh.write(PARAMS_MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(params.layers)))
        for arr in params.tensors():
            _write_tensor(fh, arr)


def load_params(path: str | Path) -> DecoderParams:
    """Read decoder parameters back from the binary parameter container."""
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 8, path, "magic")
        if magic != PARAMS_MAGIC:
            raise ValueError(f"{path}: not a parameter file (magic {magic!r})")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, path, "version"))
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        (num_layers,) = struct.unpack("<I", _read_exact(fh, 4, path, "layer count"))
        layers = []
        for _ in range(num_layers):
            w_x = _read_tensor(fh, path)
            w_h = _read_tensor(fh, path)
            b = _read_tensor(fh, path)
            layers.append(LstmLayerParams(w_x=w_x, w_h=w_h, b=b))
        if not layers:
            raise ValueError(f"{path}: parameter file with no LSTM layers")
        params = DecoderParams(
            layers=layers,
            w_obj=_read_tensor(fh, path),
            b_obj=_read_tensor(fh, path),
            w_cls=_read_tensor(fh, path),
            b_cls=_read_tensor(fh, path),
            w_coord=_read_tensor(fh, path),
            b_coord=_read_tensor(fh, path),
        )
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes after parameters")
    return params


def write_tensors(path: str | Path, arrays: list[np.ndarray]) -> None:
    """Write raw arrays (e.g. feature grids) to the tensor container."""
    with open(path, "wb") as fh:
        fh.write(TENSORS_MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(arrays)))
        for arr in arrays:
            _write_tensor(fh, arr)


def read_tensors(path: str | Path) -> list[np.ndarray]:
    """Read all arrays from a tensor container."""
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 8, path, "magic")
        if magic != TENSORS_MAGIC:
            raise ValueError(f"{path}: not a tensor file (magic {magic!r})")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, path, "version"))
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        (count,) = struct.unpack("<I", _read_exact(fh, 4, path, "tensor count"))
        arrays = [_read_tensor(fh, path) for _ in range(count)]
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes after tensors")
    return arrays
