"""Binary weight container: magic ``FIDS``, version byte, little-endian.

Holds named tensors (optionally with quantization parameters) plus a
string-keyed metadata table, with a trailing CRC32.  Serialization is
deterministic: tensors and metadata are written in sorted key order, so
save -> load -> save is byte-identical.  Full byte layout: docs/format.md.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .compress.quant import QuantParams
from .errors import ContainerError

MAGIC = b"FIDS"
VERSION = 1

_DTYPE_CODES = {"float32": 0, "float64": 1, "int8": 2, "int32": 3}
_DTYPE_BY_CODE = {0: "<f4", 1: "<f8", 2: "i1", 3: "<i4"}
_SCHEME_CODES = {"symmetric_weight": 0, "asymmetric_activation": 1}
_SCHEME_BY_CODE = {v: k for k, v in _SCHEME_CODES.items()}

_FLAG_QPARAMS = 1


def serialize_container(tensors: dict, meta: dict) -> bytes:
    """``tensors``: name -> ndarray or (ndarray, QuantParams|None).
    ``meta``: str -> str."""
    out = bytearray()
    out += MAGIC
    out += struct.pack("<B", VERSION)
    out += struct.pack("<I", len(meta))
    for key in sorted(meta):
        kb = key.encode("utf-8")
        vb = str(meta[key]).encode("utf-8")
        out += struct.pack("<H", len(kb)) + kb
        out += struct.pack("<I", len(vb)) + vb
    out += struct.pack("<I", len(tensors))
    for name in sorted(tensors):
        entry = tensors[name]
        arr, qp = entry if isinstance(entry, tuple) else (entry, None)
        arr = np.asarray(arr)
        dtype_name = arr.dtype.name
        if dtype_name not in _DTYPE_CODES:
            raise ContainerError(f"tensor {name!r}: unsupported dtype {dtype_name}")
        if arr.dtype.kind == "f" and not np.isfinite(arr).all():
            raise ContainerError(f"tensor {name!r} contains non-finite values")
        nb = name.encode("utf-8")
        out += struct.pack("<H", len(nb)) + nb
        out += struct.pack("<BBB", _DTYPE_CODES[dtype_name],
                           _FLAG_QPARAMS if qp is not None else 0, arr.ndim)
        for dim in arr.shape:
            out += struct.pack("<I", dim)
        if qp is not None:
            out += struct.pack("<BBdidd", _SCHEME_CODES[qp.scheme], qp.bits,
                               qp.scale, qp.zero_point, qp.observed_min,
                               qp.observed_max)
        out += np.ascontiguousarray(arr).astype(
            _DTYPE_BY_CODE[_DTYPE_CODES[dtype_name]], copy=False).tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)) & 0xFFFFFFFF)
    return bytes(out)


def deserialize_container(blob: bytes) -> tuple:
    """Return (tensors, meta); tensors maps name -> (ndarray, QuantParams|None)."""
    if len(blob) < 13:
        raise ContainerError("container truncated: shorter than the fixed header")
    if blob[:4] != MAGIC:
        raise ContainerError(f"bad magic {blob[:4]!r}")
    stored_crc = struct.unpack("<I", blob[-4:])[0]
    actual_crc = zlib.crc32(blob[:-4]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise ContainerError(f"checksum mismatch: stored {stored_crc:#010x}, "
                             f"computed {actual_crc:#010x}")
    reader = _Reader(blob[:-4], offset=4)
    version = reader.unpack("<B")[0]
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    meta = {}
    for _ in range(reader.unpack("<I")[0]):
        key = reader.take(reader.unpack("<H")[0]).decode("utf-8")
        val = reader.take(reader.unpack("<I")[0]).decode("utf-8")
        meta[key] = val
    tensors = {}
    for _ in range(reader.unpack("<I")[0]):
        name = reader.take(reader.unpack("<H")[0]).decode("utf-8")
        dtype_code, flags, rank = reader.unpack("<BBB")
        if dtype_code not in _DTYPE_BY_CODE:
            raise ContainerError(f"tensor {name!r}: unknown dtype code {dtype_code}")
        dims = [reader.unpack("<I")[0] for _ in range(rank)]
        qp = None
        if flags & _FLAG_QPARAMS:
            scheme_code, bits, scale, zero, lo, hi = reader.unpack("<BBdidd")
            qp = QuantParams(scale=scale, zero_point=zero, bits=bits,
                             scheme=_SCHEME_BY_CODE[scheme_code],
                             observed_min=lo, observed_max=hi)
        np_dtype = np.dtype(_DTYPE_BY_CODE[dtype_code])
        payload = reader.take(int(np.prod(dims, dtype=np.int64)) * np_dtype.itemsize)
        arr = np.frombuffer(payload, dtype=np_dtype).reshape(dims).copy()
        tensors[name] = (arr, qp)
    if reader.remaining():
        raise ContainerError(f"{reader.remaining()} trailing bytes after the "
                             "tensor table")
    return tensors, meta


class _Reader:
    def __init__(self, blob: bytes, offset: int = 0):
        self.blob = blob
        self.pos = offset

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise ContainerError("container truncated inside the tensor table")
        chunk = self.blob[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def remaining(self) -> int:
        return len(self.blob) - self.pos


def save_container(path, tensors: dict, meta: dict) -> None:
    blob = serialize_container(tensors, meta)
    with open(path, "wb") as fh:
        fh.write(blob)


def load_container(path) -> tuple:
    with open(path, "rb") as fh:
        return deserialize_container(fh.read())
