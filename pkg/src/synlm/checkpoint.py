"""Binary checkpoint files: versioned header, config block, named tensors.

Layout (all integers little-endian):
  magic            8 bytes  b"SYNLMCK\\0"
  format version   u32
  config length    u32, then ModelConfig as utf-8 key=value lines
  tensor count     u32
  per tensor, in sorted name order:
    name length    u16, then utf-8 name
    dtype code     u8   (4 = float32, 8 = float64)
    ndim           u8, then ndim x u32 dims
    raw data       little-endian floats, C order

Parameters are stored as 32-bit floats unless save_dtype="float64".
"""

from __future__ import annotations

import struct

import numpy as np

from synlm.model import ModelConfig

MAGIC = b"SYNLMCK\x00"
FORMAT_VERSION = 1
_DTYPES = {4: "<f4", 8: "<f8"}


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, cfg: ModelConfig, params: dict[str, np.ndarray],
                    save_dtype: str = "float32") -> None:
    code = 4 if save_dtype == "float32" else 8
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        blob = cfg.to_kv().encode("utf-8")
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(params)))
        for name in sorted(params):
            arr = np.ascontiguousarray(params[name], dtype=_DTYPES[code])
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<BB", code, arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path, expect: ModelConfig | None = None
                    ) -> tuple[ModelConfig, dict[str, np.ndarray]]:
    """Read a checkpoint; reject it if `expect` disagrees on the model config.

    Tensors are returned in the stored config's compute dtype.
    """
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported format version {version}")
        (clen,) = struct.unpack("<I", fh.read(4))
        cfg = ModelConfig.from_kv(fh.read(clen).decode("utf-8"))
        if expect is not None and cfg != expect:
            raise CheckpointError(
                f"{path}: stored config does not match the requested one\n"
                f"  stored:    {cfg}\n  requested: {expect}"
            )
        (count,) = struct.unpack("<I", fh.read(4))
        params: dict[str, np.ndarray] = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<H", fh.read(2))
            name = fh.read(nlen).decode("utf-8")
            code, ndim = struct.unpack("<BB", fh.read(2))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            n_items = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(fh.read(n_items * code), dtype=_DTYPES[code])
            params[name] = data.reshape(shape).astype(cfg.np_dtype)
    return cfg, params
