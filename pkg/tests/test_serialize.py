import numpy as np
import pytest

from fema import numeric, serialize
from fema.errors import SerializationError


class TestMlpRoundTrip:
    def test_bytes_round_trip(self):
        m = numeric.mlp_init([4, 8, 8, 2], seed=5)
        blob = serialize.mlp_to_bytes(m)
        back = serialize.mlp_from_bytes(blob)
        assert [l.act for l in back.layers] == [l.act for l in m.layers]
        for pa, pb in zip(m.params(), back.params()):
            np.testing.assert_array_equal(pa, pb)

    def test_file_round_trip(self, tmp_path):
        m = numeric.mlp_init([3, 6, 1], seed=9, acts=["relu", "identity"])
        path = tmp_path / "net.fnet"
        serialize.save_mlp(path, m)
        back = serialize.load_mlp(path)
        out_a, _ = numeric.forward(m, np.ones(3))
        out_b, _ = numeric.forward(back, np.ones(3))
        np.testing.assert_array_equal(out_a, out_b)

    def test_deterministic_bytes(self):
        m = numeric.mlp_init([2, 4, 2], seed=1)
        assert serialize.mlp_to_bytes(m) == serialize.mlp_to_bytes(m)

    def test_bad_magic(self):
        m = numeric.mlp_init([2, 3, 1], seed=0)
        blob = bytearray(serialize.mlp_to_bytes(m))
        blob[0] = ord(b"X")
        with pytest.raises(SerializationError):
            serialize.mlp_from_bytes(bytes(blob))

    def test_truncated(self):
        m = numeric.mlp_init([2, 3, 1], seed=0)
        blob = serialize.mlp_to_bytes(m)
        with pytest.raises(SerializationError):
            serialize.mlp_from_bytes(blob[: len(blob) - 7])

    def test_trailing_garbage(self):
        m = numeric.mlp_init([2, 3, 1], seed=0)
        blob = serialize.mlp_to_bytes(m) + b"\x00\x01"
        with pytest.raises(SerializationError):
            serialize.mlp_from_bytes(blob)

    def test_bad_version(self):
        m = numeric.mlp_init([2, 3, 1], seed=0)
        blob = bytearray(serialize.mlp_to_bytes(m))
        blob[4] = 99
        with pytest.raises(SerializationError):
            serialize.mlp_from_bytes(bytes(blob))


class TestBlobContainer:
    def test_round_trip(self):
        blobs = {"policy": b"\x01\x02", "meta": b"{}", "empty": b""}
        data = serialize.blobs_to_bytes(blobs)
        back = serialize.blobs_from_bytes(data)
        assert back == blobs

    def test_order_preserved(self):
        blobs = {"b": b"1", "a": b"2"}
        back = serialize.blobs_from_bytes(serialize.blobs_to_bytes(blobs))
        assert list(back) == ["b", "a"]

    def test_file_round_trip(self, tmp_path):
        path = tmp_path / "bundle.femc"
        serialize.save_blobs(path, {"x": b"abc"})
        assert serialize.load_blobs(path) == {"x": b"abc"}

    def test_rejects_duplicate_names(self):
        data = serialize.blobs_to_bytes({"x": b"1"})
        # Splice the single entry in twice.
        head, body = data[:10], data[10:]
        forged = head[:6] + (2).to_bytes(4, "little") + body + body
        with pytest.raises(SerializationError):
            serialize.blobs_from_bytes(forged)

    def test_truncated(self):
        data = serialize.blobs_to_bytes({"x": b"abcdef"})
        with pytest.raises(SerializationError):
            serialize.blobs_from_bytes(data[:-3])
