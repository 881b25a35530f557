import json

import numpy as np
import pytest

from pseudo3d import io
from pseudo3d.errors import DataError


@pytest.mark.parametrize("dtype,tag", [(np.float32, "f32"), (np.float64, "f64")])
def test_raw_header_round_trip_bit_exact(tmp_path, rng, dtype, tag):
    x = rng.standard_normal((3, 4, 5)).astype(dtype)
    bin_path, json_path = io.save_tensor(tmp_path / "vol", x)
    header = json.loads(json_path.read_text())
    assert header == {"dtype": tag, "shape": [3, 4, 5], "layout": "row-major"}
    assert bin_path.read_bytes() == x.astype(x.dtype.newbyteorder("<")).tobytes()
    y = io.load_tensor(tmp_path / "vol.bin")
    assert y.dtype == dtype and y.tobytes() == x.tobytes()


def test_load_by_stem_or_json(tmp_path):
    io.save_tensor(tmp_path / "a", np.ones((2, 2)))
    assert io.load_tensor(tmp_path / "a").shape == (2, 2)
    assert io.load_tensor(tmp_path / "a.json").shape == (2, 2)


def test_truncated_data_is_data_error(tmp_path):
    io.save_tensor(tmp_path / "a", np.ones((2, 2)))
    (tmp_path / "a.bin").write_bytes(b"\0" * 5)
    with pytest.raises(DataError, match="expected 32 bytes"):
        io.load_tensor(tmp_path / "a")


def test_bad_header(tmp_path):
    (tmp_path / "b.json").write_text('{"dtype": "i8", "shape": [2]}')
    (tmp_path / "b.bin").write_bytes(b"")
    with pytest.raises(DataError):
        io.load_tensor(tmp_path / "b")


@pytest.mark.parametrize("bits", [8, 16])
def test_pgm_round_trip(tmp_path, bits):
    counts = np.arange(12).reshape(3, 4) * (20 if bits == 8 else 5000)
    io.save_pgm(tmp_path / "x.pgm", counts, bits=bits)
    img = io.load_image(tmp_path / "x.pgm")
    assert img.dtype == np.float64
    assert np.array_equal(img, counts)


def test_corrupt_image(tmp_path):
    (tmp_path / "bad.pgm").write_bytes(b"P5 nonsense")
    with pytest.raises(DataError):
        io.load_image(tmp_path / "bad.pgm")
