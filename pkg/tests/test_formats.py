import json
import struct

import numpy as np
import pytest
from PIL import Image

from vigil.errors import DataError, FormatError
from vigil.tooling import (
    RANGE_SIGNED,
    RANGE_UNIT,
    decode_clp1,
    decode_sclw,
    encode_clp1,
    encode_sclw,
    ingest_image_dir,
    load_clip,
    load_dataset,
    read_clp1,
    read_sclw,
    write_clp1,
    write_dataset,
    write_frames,
    write_sclw,
)
from vigil.train import make_synth


def _manifest(data: bytes) -> list[dict]:
    _, _, length = struct.unpack_from("<4sII", data, 0)
    return json.loads(data[12 : 12 + length])


# ── SCLW ─────────────────────────────────────────────────────────────────────

def test_sclw_round_trip_preserves_names_order_and_bits(tmp_path, rng):
    tensors = {
        "b.kernel": rng.standard_normal((3, 3, 4)).astype(np.float32),
        "a.bias": np.array([0.0, -0.0, np.float32(1e-38)], dtype=np.float32),
        "scalarish": np.array([7.5], dtype=np.float32),
    }
    path = tmp_path / "w.sclw"
    write_sclw(path, tensors)
    back = read_sclw(path)
    assert list(back) == list(tensors)
    for name, value in tensors.items():
        assert back[name].dtype == np.float32
        assert back[name].tobytes() == value.tobytes()


def test_sclw_layout(rng):
    data = encode_sclw({"x": rng.standard_normal(5), "y": rng.standard_normal((2, 3))})
    assert data[:4] == b"SCLW"
    assert struct.unpack_from("<I", data, 4)[0] == 1
    entries = _manifest(data)
    assert [e["byte_offset"] % 64 for e in entries] == [0, 0]
    assert entries[1]["byte_offset"] >= entries[0]["byte_offset"] + 20
    assert len(data) == entries[1]["byte_offset"] + 24
    assert entries[0] == {"name": "x", "shape": [5], "dtype": "f32", "byte_offset": entries[0]["byte_offset"]}


def test_sclw_empty_store():
    assert decode_sclw(encode_sclw({})) == {}


def test_sclw_bad_magic_reports_offset_zero():
    data = bytearray(encode_sclw({"x": np.zeros(2)}))
    data[:4] = b"SCLX"
    with pytest.raises(FormatError, match="@ byte 0") as err:
        decode_sclw(bytes(data), "w.sclw")
    assert err.value.offset == 0


def test_sclw_unsupported_version():
    data = bytearray(encode_sclw({"x": np.zeros(2)}))
    data[4:8] = struct.pack("<I", 2)
    with pytest.raises(FormatError, match="version"):
        decode_sclw(bytes(data))


@pytest.mark.parametrize("cut", [4, 20, 1])
def test_sclw_truncation(cut):
    data = encode_sclw({"x": np.ones(16)})
    with pytest.raises(FormatError):
        decode_sclw(data[:-cut] if cut != 20 else data[:20])


def test_sclw_trailing_bytes():
    with pytest.raises(FormatError, match="file length"):
        decode_sclw(encode_sclw({"x": np.ones(3)}) + b"\0")


def test_sclw_misaligned_offset():
    header_free = {"x": np.ones(2)}
    data = encode_sclw(header_free)
    entries = _manifest(data)
    entries[0]["byte_offset"] += 4
    manifest = json.dumps(entries, separators=(",", ":")).encode()
    forged = struct.pack("<4sII", b"SCLW", 1, len(manifest)) + manifest
    forged += b"\0" * (entries[0]["byte_offset"] - len(forged)) + np.ones(2, dtype="<f4").tobytes()
    with pytest.raises(FormatError, match="misaligned"):
        decode_sclw(forged)


def _forge(entries: list[dict], payload: bytes = b"") -> bytes:
    manifest = json.dumps(entries, separators=(",", ":")).encode()
    return struct.pack("<4sII", b"SCLW", 1, len(manifest)) + manifest + payload


@pytest.mark.parametrize("byte_offset", ["64", -64, 64.0, True, None])
def test_sclw_rejects_non_integer_offset(byte_offset):
    entries = _manifest(encode_sclw({"x": np.ones(2)}))
    entries[0]["byte_offset"] = byte_offset
    with pytest.raises(FormatError, match="byte_offset") as err:
        decode_sclw(_forge(entries, b"\0" * 128))
    assert err.value.offset == 12


@pytest.mark.parametrize("shape", [[-2, -4], [2, -1], [2.0], ["2"], [False, 2]])
def test_sclw_rejects_bad_shape_dims(shape):
    data = encode_sclw({"x": np.ones(8)})
    entries = _manifest(data)
    entries[0]["shape"] = shape
    with pytest.raises(FormatError, match="shape") as err:
        decode_sclw(_forge(entries))
    assert err.value.offset == entries[0]["byte_offset"]


def test_sclw_rejects_non_string_name():
    entries = _manifest(encode_sclw({"x": np.ones(2)}))
    entries[0]["name"] = ["x"]
    with pytest.raises(FormatError, match="name"):
        decode_sclw(_forge(entries, b"\0" * 128))


# ── CLP1 ─────────────────────────────────────────────────────────────────────

def test_clp1_round_trip(tmp_path, rng):
    frames = rng.uniform(0, 1, size=(3, 4, 5, 3)).astype(np.float32)
    path = tmp_path / "c.clp1"
    write_clp1(path, frames)
    back, tag = read_clp1(path)
    assert tag == RANGE_UNIT
    assert back.tobytes() == frames.tobytes()


def test_clp1_header_fields(rng):
    diffs = rng.uniform(-1, 1, size=(2, 3, 4, 3))
    data = encode_clp1(diffs, RANGE_SIGNED)
    assert data[:4] == b"CLP1"
    assert struct.unpack_from("<5I", data, 4) == (2, 3, 4, 3, RANGE_SIGNED)
    assert len(data) == 24 + 4 * diffs.size


def test_clp1_range_enforced_on_write():
    with pytest.raises(FormatError, match="outside"):
        encode_clp1(np.full((1, 1, 1, 3), -0.5), RANGE_UNIT)
    with pytest.raises(FormatError, match="range tag"):
        encode_clp1(np.zeros((1, 1, 1, 3)), 7)


def test_clp1_out_of_range_value_reports_offset():
    data = bytearray(encode_clp1(np.zeros((1, 1, 2, 3))))
    struct.pack_into("<f", data, 24 + 4 * 4, 1.5)
    with pytest.raises(FormatError) as err:
        decode_clp1(bytes(data))
    assert err.value.offset == 24 + 16


def test_clp1_bad_magic_and_size():
    data = encode_clp1(np.zeros((1, 1, 1, 3)))
    with pytest.raises(FormatError) as err:
        decode_clp1(b"XLP1" + data[4:])
    assert err.value.offset == 0
    with pytest.raises(FormatError, match="payload size"):
        decode_clp1(data[:-4])
    with pytest.raises(FormatError, match="truncated"):
        decode_clp1(data[:10])


# ── Frame directories and datasets ───────────────────────────────────────────

def test_ingest_solid_ppm_frames(tmp_path):
    for t, colour in enumerate([(255, 0, 0), (0, 255, 0), (0, 0, 255)]):
        Image.new("RGB", (4, 3), colour).save(tmp_path / f"frame_{t:05d}.ppm", format="PPM")
    clip = ingest_image_dir(tmp_path)
    assert clip.frames.shape == (3, 3, 4, 3)
    np.testing.assert_array_equal(clip.frames[:, 0, 0], np.eye(3))


def test_ingest_raw_p6_bytes(tmp_path):
    header = b"P6\n2 1\n255\n"
    for t in range(2):
        (tmp_path / f"f{t}.ppm").write_bytes(header + bytes([0, 51, 102, 153, 204, 255]))
    clip = ingest_image_dir(tmp_path)
    np.testing.assert_allclose(clip.frames[0, 0], [[0, 0.2, 0.4], [0.6, 0.8, 1.0]], rtol=1e-6)


def test_ingest_orders_lexicographically(tmp_path):
    for name, value in [("b.ppm", 200), ("a.ppm", 100), ("c.ppm", 0)]:
        Image.new("RGB", (1, 1), (value,) * 3).save(tmp_path / name, format="PPM")
    frames = ingest_image_dir(tmp_path).frames
    np.testing.assert_allclose(frames[:, 0, 0, 0], [100 / 255, 200 / 255, 0.0])


def test_ingest_rejects_mixed_sizes_and_empty_dirs(tmp_path):
    with pytest.raises(DataError, match="no .ppm"):
        ingest_image_dir(tmp_path)
    Image.new("RGB", (2, 2)).save(tmp_path / "a.ppm", format="PPM")
    Image.new("RGB", (3, 2)).save(tmp_path / "b.ppm", format="PPM")
    with pytest.raises(DataError, match="differs"):
        ingest_image_dir(tmp_path)


def test_write_frames_round_trip_at_8_bits(tmp_path, rng):
    frames = rng.integers(0, 256, size=(2, 3, 5, 3)) / 255.0
    write_frames(frames, tmp_path / "clip")
    np.testing.assert_allclose(ingest_image_dir(tmp_path / "clip").frames, frames, atol=1e-7)


def test_load_clip_rejects_derived_stream(tmp_path, rng):
    path = tmp_path / "d.clp1"
    write_clp1(path, rng.uniform(-1, 1, size=(2, 2, 2, 3)), RANGE_SIGNED)
    with pytest.raises(DataError, match="derived stream"):
        load_clip(path)


def test_dataset_write_then_load(tmp_path):
    data = make_synth(4, seed=0, frames=3, size=8)
    write_dataset(data, tmp_path)
    assert (tmp_path / "violent").is_dir() and (tmp_path / "nonviolent").is_dir()
    assert len((tmp_path / "metadata.jsonl").read_text().splitlines()) == 4
    back = load_dataset(tmp_path)
    assert back.counts() == data.counts()
    for clip in back.clips:
        assert clip.frames.shape == (3, 8, 8, 3)


def test_dataset_accepts_clp1_clips(tmp_path, rng):
    (tmp_path / "violent").mkdir()
    write_clp1(tmp_path / "violent" / "x.clp1", rng.uniform(0, 1, size=(2, 4, 4, 3)))
    data = load_dataset(tmp_path)
    assert len(data) == 1 and data.labels[0] == 1


def test_empty_dataset_root(tmp_path):
    with pytest.raises(DataError):
        load_dataset(tmp_path)
