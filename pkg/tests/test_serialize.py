import json

import numpy as np
import pytest

from ikno.serialize import (
    FORMAT_VERSION,
    load_arrays,
    read_blob,
    save_arrays,
    write_blob,
)


class TestBlob:
    def test_round_trip(self, tmp_path):
        arr = np.arange(12, dtype=np.float64).reshape(3, 4) / 7.0
        write_blob(tmp_path / "a.f64le", arr)
        back = read_blob(tmp_path / "a.f64le", (3, 4))
        assert np.array_equal(back, arr)

    def test_little_endian_layout(self, tmp_path):
        write_blob(tmp_path / "one.f64le", np.array([1.0]))
        raw = (tmp_path / "one.f64le").read_bytes()
        assert raw == b"\x00\x00\x00\x00\x00\x00\xf0\x3f"


class TestManifest:
    def test_save_load_round_trip(self, tmp_path):
        arrays = {
            "x": np.linspace(0, 1, 5),
            "y": np.eye(3),
        }
        save_arrays(tmp_path / "d", arrays, {"note": "hi"})
        back, meta = load_arrays(tmp_path / "d")
        assert meta["note"] == "hi"
        for k in arrays:
            assert np.array_equal(back[k], arrays[k])

    def test_manifest_fields(self, tmp_path):
        save_arrays(tmp_path / "d", {"x": np.zeros((2, 3))})
        m = json.loads((tmp_path / "d" / "manifest.json").read_text())
        assert m["format_version"] == FORMAT_VERSION
        info = m["arrays"]["x"]
        assert info["file"] == "x.f64le"
        assert info["shape"] == [2, 3]
        assert info["dtype"] == "f64le"
        assert len(info["sha256"]) == 64

    def test_checksum_mismatch_raises(self, tmp_path):
        save_arrays(tmp_path / "d", {"x": np.ones(4)})
        blob = tmp_path / "d" / "x.f64le"
        data = bytearray(blob.read_bytes())
        data[0] ^= 0xFF
        blob.write_bytes(bytes(data))
        with pytest.raises(ValueError, match="checksum"):
            load_arrays(tmp_path / "d")
