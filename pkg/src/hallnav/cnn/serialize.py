"""Binary model file: magic "CCNN", version, config, then the parameter
tensors in a fixed order, each as (rank, extents, float64 LE values)."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from hallnav.cnn.network import PARAM_ORDER, ModelConfig

MAGIC = b"CCNN"
VERSION = 1

# magic + version + 8 u32 config ints + f64 dropout + u32 tensor count
_CONFIG_FMT = "<8I d I"


class ModelFileError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def save_model(params: dict, cfg: ModelConfig, path: str | Path) -> None:
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<H", VERSION)
    c, h, w = cfg.in_shape
    blob += struct.pack(
        _CONFIG_FMT,
        c,
        h,
        w,
        cfg.conv1_filters,
        cfg.conv2_filters,
        cfg.kernel,
        cfg.dense_units,
        cfg.classes,
        cfg.dropout,
        len(PARAM_ORDER),
    )
    for name in PARAM_ORDER:
        tensor = np.ascontiguousarray(params[name], dtype="<f8")
        blob += struct.pack("<I", tensor.ndim)
        blob += struct.pack(f"<{tensor.ndim}I", *tensor.shape)
        blob += tensor.tobytes()
    Path(path).write_bytes(bytes(blob))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ModelFileError("truncated", f"file ends {self.pos + n - len(self.data)} bytes early")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_model(path: str | Path) -> tuple[dict, ModelConfig]:
    """Inverse of save_model; bit-exact. Raises ModelFileError with code
    "magic", "version" or "truncated"."""
    r = _Reader(Path(path).read_bytes())
    if r.take(4) != MAGIC:
        raise ModelFileError("magic", "not a model file (bad magic)")
    (version,) = r.unpack("<H")
    if version != VERSION:
        raise ModelFileError("version", f"unsupported model version {version}")
    c, h, w, f1, f2, k, d, classes, dropout, count = r.unpack(_CONFIG_FMT)
    if count != len(PARAM_ORDER):
        raise ModelFileError("truncated", f"expected {len(PARAM_ORDER)} tensors, header says {count}")
    cfg = ModelConfig(
        in_shape=(c, h, w),
        conv1_filters=f1,
        conv2_filters=f2,
        kernel=k,
        dense_units=d,
        dropout=dropout,
        classes=classes,
    )
    params = {}
    for name in PARAM_ORDER:
        (rank,) = r.unpack("<I")
        shape = r.unpack(f"<{rank}I")
        n_elems = int(np.prod(shape)) if rank else 1
        raw = r.take(8 * n_elems)
        params[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    if r.pos != len(r.data):
        raise ModelFileError("truncated", f"{len(r.data) - r.pos} trailing bytes")
    return params, cfg
