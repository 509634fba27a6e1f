"""Binary file formats: SCLW weights and CLP1 raw clips.

SCLW (little-endian throughout):
    "SCLW" | u32 version | u32 manifest length | manifest (UTF-8 JSON) | payload
    manifest: [{"name", "shape", "dtype": "f32", "byte_offset"}, ...]
    byte_offset is absolute and 64-byte aligned; zero padding between tensors;
    the file ends exactly where the last tensor ends.

CLP1:
    "CLP1" | u32 T | u32 H | u32 W | u32 C | u32 range tag | f32 payload (T·H·W·C)
    range tag 0: values in [0, 1]; 1: values in [−1, 1] (signed frame differences).
"""
from __future__ import annotations

import json
import logging
import struct
from pathlib import Path
from typing import Mapping, Union

import numpy as np

from ..errors import FormatError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

SCLW_MAGIC = b"SCLW"
SCLW_VERSION = 1
CLP1_MAGIC = b"CLP1"
CLP1_VERSION = 1
ALIGNMENT = 64

RANGE_UNIT = 0
RANGE_SIGNED = 1
_RANGES = {RANGE_UNIT: (0.0, 1.0), RANGE_SIGNED: (-1.0, 1.0)}

_F32 = np.dtype("<f4")


def _align(offset: int) -> int:
    return (offset + ALIGNMENT - 1) // ALIGNMENT * ALIGNMENT


def _is_count(value) -> bool:
    # bool is an int subclass; JSON true/false must not pass as 1/0
    return isinstance(value, int) and not isinstance(value, bool) and value >= 0


# ── SCLW ─────────────────────────────────────────────────────────────────────

def encode_sclw(tensors: Mapping[str, np.ndarray]) -> bytes:
    arrays = {name: np.ascontiguousarray(value, dtype=_F32) for name, value in tensors.items()}

    # Offsets depend on the manifest length and the manifest holds the offsets;
    # iterate until the encoded length stops changing.
    manifest_len = 0
    while True:
        offset = 12 + manifest_len
        entries = []
        for name, arr in arrays.items():
            offset = _align(offset)
            entries.append({"name": name, "shape": list(arr.shape), "dtype": "f32", "byte_offset": offset})
            offset += arr.nbytes
        manifest = json.dumps(entries, separators=(",", ":")).encode("utf-8")
        if len(manifest) == manifest_len:
            break
        manifest_len = len(manifest)

    buf = bytearray(struct.pack("<4sII", SCLW_MAGIC, SCLW_VERSION, len(manifest)))
    buf += manifest
    for entry, arr in zip(entries, arrays.values()):
        buf += b"\0" * (entry["byte_offset"] - len(buf))
        buf += arr.tobytes()
    return bytes(buf)


def decode_sclw(data: bytes, path: str = "") -> dict[str, np.ndarray]:
    if len(data) < 12:
        raise FormatError(f"truncated header ({len(data)} bytes)", path, len(data))
    magic, version, manifest_len = struct.unpack_from("<4sII", data, 0)
    if magic != SCLW_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {SCLW_MAGIC!r}", path, 0)
    if version != SCLW_VERSION:
        raise FormatError(f"unsupported version {version}", path, 4)
    if 12 + manifest_len > len(data):
        raise FormatError(f"manifest length {manifest_len} runs past end of file", path, 8)
    try:
        entries = json.loads(data[12 : 12 + manifest_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"manifest is not valid UTF-8 JSON: {e}", path, 12) from e
    if not isinstance(entries, list):
        raise FormatError("manifest must be a JSON array", path, 12)

    tensors: dict[str, np.ndarray] = {}
    cursor = 12 + manifest_len
    for entry in entries:
        try:
            name, shape, dtype, offset = entry["name"], tuple(entry["shape"]), entry["dtype"], entry["byte_offset"]
        except (KeyError, TypeError) as e:
            raise FormatError(f"malformed manifest entry {entry!r}", path, 12) from e
        if not isinstance(name, str):
            raise FormatError(f"tensor name must be a string, got {name!r}", path, 12)
        if not _is_count(offset):
            raise FormatError(f"tensor {name!r}: byte_offset must be a non-negative int, got {offset!r}", path, 12)
        if not all(_is_count(d) for d in shape):
            raise FormatError(f"tensor {name!r}: shape must hold non-negative ints, got {list(shape)!r}", path, offset)
        if dtype != "f32":
            raise FormatError(f"tensor {name!r}: unsupported dtype {dtype!r}", path, 12)
        if name in tensors:
            raise FormatError(f"duplicate tensor name {name!r}", path, 12)
        if offset % ALIGNMENT or offset < cursor:
            raise FormatError(f"tensor {name!r}: offset misaligned or overlapping", path, offset)
        nbytes = int(np.prod(shape, dtype=np.int64)) * _F32.itemsize
        if offset + nbytes > len(data):
            raise FormatError(f"tensor {name!r}: payload truncated ({nbytes} bytes declared)", path, offset)
        tensors[name] = np.frombuffer(data, dtype=_F32, count=nbytes // 4, offset=offset).reshape(shape).astype(np.float32)
        cursor = offset + nbytes
    if cursor != len(data):
        raise FormatError(f"file length {len(data)} disagrees with manifest end {cursor}", path, cursor)
    return tensors


def write_sclw(path: PathLike, tensors: Mapping[str, np.ndarray]) -> None:
    Path(path).write_bytes(encode_sclw(tensors))
    logger.debug("Wrote %d tensors to %s", len(tensors), path)


def read_sclw(path: PathLike) -> dict[str, np.ndarray]:
    return decode_sclw(Path(path).read_bytes(), str(path))


# ── CLP1 ─────────────────────────────────────────────────────────────────────

def encode_clp1(frames: np.ndarray, range_tag: int = RANGE_UNIT) -> bytes:
    arr = np.ascontiguousarray(frames, dtype=_F32)
    if arr.ndim != 4:
        raise FormatError(f"CLP1 holds T×H×W×C tensors, got shape {arr.shape}")
    if range_tag not in _RANGES:
        raise FormatError(f"unknown range tag {range_tag}")
    lo, hi = _RANGES[range_tag]
    if np.isnan(arr).any() or arr.min() < lo or arr.max() > hi:
        raise FormatError(f"values outside [{lo}, {hi}] for range tag {range_tag}")
    return struct.pack("<4s5I", CLP1_MAGIC, *arr.shape, range_tag) + arr.tobytes()


def decode_clp1(data: bytes, path: str = "") -> tuple[np.ndarray, int]:
    """Return (frames, range tag)."""
    header = struct.calcsize("<4s5I")
    if len(data) < 4 or data[:4] != CLP1_MAGIC:
        raise FormatError(f"bad magic {bytes(data[:4])!r}, expected {CLP1_MAGIC!r}", path, 0)
    if len(data) < header:
        raise FormatError(f"truncated header ({len(data)} bytes)", path, len(data))
    _, t, h, w, c, tag = struct.unpack_from("<4s5I", data, 0)
    if tag not in _RANGES:
        raise FormatError(f"unknown range tag {tag}", path, 20)
    count = t * h * w * c
    expected = header + count * _F32.itemsize
    if len(data) != expected:
        raise FormatError(f"payload size {len(data) - header} disagrees with header ({count} values)", path, header)
    frames = np.frombuffer(data, dtype=_F32, count=count, offset=header).reshape(t, h, w, c).astype(np.float32)
    lo, hi = _RANGES[tag]
    bad = np.isnan(frames) | (frames < lo) | (frames > hi)
    if bad.any():
        first = int(np.flatnonzero(bad.reshape(-1))[0])
        raise FormatError(f"value {frames.reshape(-1)[first]!r} outside [{lo}, {hi}]", path, header + 4 * first)
    return frames, tag


def write_clp1(path: PathLike, frames: np.ndarray, range_tag: int = RANGE_UNIT) -> None:
    Path(path).write_bytes(encode_clp1(frames, range_tag))


def read_clp1(path: PathLike) -> tuple[np.ndarray, int]:
    return decode_clp1(Path(path).read_bytes(), str(path))
