"""Binary checkpoint (``CKPT``) and dataset (``DSET``) files.

Layout, little-endian throughout::

    CKPT: b"CKPT" | u16 version | u32 count | count x tensor
    DSET: b"DSET" | u16 version | u32 count | count x tensor | u32 split_index
          | u32 meta_len | meta_len bytes of UTF-8 JSON
    tensor: u16 name_len | name (UTF-8) | u8 rank | rank x u32 extent
            | prod(extents) x f32 payload
"""
import json
import struct

import numpy as np

from .errors import FormatError

CKPT_MAGIC = b"CKPT"
DSET_MAGIC = b"DSET"
VERSION = 1


def _encode_tensors(tensors):
    parts = [struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        if not np.issubdtype(arr.dtype, np.floating) and not np.issubdtype(arr.dtype, np.integer):
            raise FormatError(f"tensor {name!r} has non-numeric dtype {arr.dtype}")
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise FormatError(f"tensor name too long: {name[:40]!r}...")
        if arr.ndim > 0xFF:
            raise FormatError(f"tensor {name!r} rank {arr.ndim} exceeds 255")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf, what):
        self.buf, self.pos, self.what = buf, 0, what

    def take(self, n, field):
        if self.pos + n > len(self.buf):
            raise FormatError(f"{self.what}: truncated while reading {field}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, field):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), field))


def _decode_tensors(r):
    (count,) = r.unpack("<I", "tensor count")
    tensors = {}
    for i in range(count):
        (nlen,) = r.unpack("<H", f"tensor {i} name length")
        try:
            name = r.take(nlen, f"tensor {i} name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"{r.what}: tensor {i} name is not UTF-8") from exc
        (rank,) = r.unpack("<B", f"tensor {name!r} rank")
        shape = r.unpack(f"<{rank}I", f"tensor {name!r} extents")
        n = int(np.prod(shape, dtype=np.int64))
        payload = r.take(4 * n, f"tensor {name!r} payload")
        tensors[name] = np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(shape)
    return tensors


def _header(r, magic):
    got = r.take(4, "magic")
    if got != magic:
        raise FormatError(f"{r.what}: bad magic {got!r}, expected {magic!r}")
    (version,) = r.unpack("<H", "version")
    if version != VERSION:
        raise FormatError(f"{r.what}: unsupported version {version}")


def _finish(r):
    if r.pos != len(r.buf):
        raise FormatError(f"{r.what}: {len(r.buf) - r.pos} trailing bytes")


def encode_checkpoint(tensors):
    return CKPT_MAGIC + struct.pack("<H", VERSION) + _encode_tensors(tensors)


def decode_checkpoint(buf, what="checkpoint"):
    r = _Reader(bytes(buf), what)
    _header(r, CKPT_MAGIC)
    tensors = _decode_tensors(r)
    _finish(r)
    return tensors


def encode_dataset(tensors, split_index, metadata):
    meta = json.dumps(metadata, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return b"".join([
        DSET_MAGIC, struct.pack("<H", VERSION), _encode_tensors(tensors),
        struct.pack("<I", split_index), struct.pack("<I", len(meta)), meta,
    ])


def decode_dataset(buf, what="dataset"):
    """Return ``(tensors, split_index, metadata)``."""
    r = _Reader(bytes(buf), what)
    _header(r, DSET_MAGIC)
    tensors = _decode_tensors(r)
    (split,) = r.unpack("<I", "split_index")
    (mlen,) = r.unpack("<I", "metadata length")
    try:
        meta = json.loads(r.take(mlen, "metadata").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{what}: metadata is not valid UTF-8 JSON") from exc
    _finish(r)
    return tensors, split, meta


def _read_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


def _write_bytes(path, data):
    with open(path, "wb") as fh:
        fh.write(data)


def write_checkpoint(path, tensors):
    _write_bytes(path, encode_checkpoint(tensors))


def read_checkpoint(path):
    return decode_checkpoint(_read_bytes(path), what=str(path))


def write_dset(path, tensors, split_index, metadata):
    _write_bytes(path, encode_dataset(tensors, split_index, metadata))


def read_dset(path):
    return decode_dataset(_read_bytes(path), what=str(path))


def save_dataset(path, ds):
    write_dset(path, {"X": ds.X, "Y": ds.Y}, ds.split_index, ds.metadata)


def load_dataset(path):
    from .data import DownscalingDataset

    tensors, split, meta = read_dset(path)
    for key in ("X", "Y"):
        if key not in tensors:
            raise FormatError(f"{path}: dataset file has no {key!r} tensor")
    return DownscalingDataset(tensors["X"], tensors["Y"], split, meta)
