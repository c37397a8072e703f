"""Weight archives: byte layout, save/load round trips, and the full set
of mismatch errors."""

import json
import struct

import numpy as np
import pytest

from wwdet import archive, zoo
from wwdet import tensor as T


def make_scored_model(name, seed=0):
    """A model whose running stats are initialized by one training batch."""
    model = zoo.build_model(name, seed)
    rng = np.random.default_rng(seed + 100)
    x = T.Tensor(rng.standard_normal((2, 1, 40, 32)).astype(np.float32))
    with T.no_grad():
        model(x)                        # train mode fills running stats
    return model.eval()


def forward(model, seed=3):
    x = T.Tensor(np.random.default_rng(seed).standard_normal(
        (2, 1, 40, 32)).astype(np.float32))
    with T.no_grad():
        return model(x).data


class TestRoundTrip:
    def test_reload_is_bit_exact(self, tmp_path):
        model = make_scored_model("se-res2net50-ii")
        path = tmp_path / "m.wwa"
        archive.save_weights(model, path)
        clone = archive.load_weights(path, "se-res2net50-ii", seed=9)
        assert np.array_equal(forward(model), forward(clone))

    def test_architecture_read_from_header_when_cfg_omitted(self, tmp_path):
        model = make_scored_model("resnet50-i")
        path = tmp_path / "m.wwa"
        archive.save_weights(model, path)
        clone = archive.load_weights(path)
        assert np.array_equal(forward(model), forward(clone))

    def test_running_stats_survive(self, tmp_path):
        model = make_scored_model("resnet50-ii")
        path = tmp_path / "m.wwa"
        archive.save_weights(model, path)
        clone = archive.load_weights(path, "resnet50-ii")
        for (_, a), (_, b) in zip(model.named_stats(), clone.named_stats()):
            assert np.array_equal(a.mean, b.mean)
            assert np.array_equal(a.var, b.var)
            assert a.count == b.count

    def test_header_layout(self, tmp_path):
        model = make_scored_model("res2net50-ii")
        path = tmp_path / "m.wwa"
        archive.save_weights(model, path)
        blob = path.read_bytes()
        assert blob[:4] == b"WWA1"
        (length,) = struct.unpack("<Q", blob[4:12])
        header = json.loads(blob[12:12 + length])
        assert header["meta"] == {"format": "WWA1", "arch": "res2net50-ii"}
        names = [t["name"] for t in header["tensors"]]
        assert len(names) == len(set(names))
        total = sum(int(np.prod(t["shape"])) if t["shape"] else 1
                    for t in header["tensors"])
        assert len(blob) == 12 + length + 4 * total

    def test_read_archive_returns_payload(self, tmp_path):
        model = make_scored_model("res2net50-ii")
        path = tmp_path / "m.wwa"
        archive.save_weights(model, path)
        meta, tensors = archive.read_archive(path)
        assert meta["arch"] == "res2net50-ii"
        w = dict(model.named_parameters())["head.weight"]
        assert np.array_equal(tensors["head.weight"], w.data)


class TestErrors:
    def _saved(self, tmp_path, name="se-res2net50-ii"):
        path = tmp_path / "m.wwa"
        archive.save_weights(make_scored_model(name), path)
        return path

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.wwa"
        path.write_bytes(b"ZIP!" + b"\0" * 32)
        with pytest.raises(ValueError, match="bad magic"):
            archive.read_archive(path)

    def test_wrong_architecture(self, tmp_path):
        path = self._saved(tmp_path)
        with pytest.raises(ValueError, match="archive holds"):
            archive.load_weights(path, "resnet50-ii")

    def test_cfg_required_when_header_lacks_arch(self, tmp_path):
        path = self._saved(tmp_path)
        self._rewrite_header(
            path, lambda h: h["meta"].pop("arch"))
        with pytest.raises(ValueError, match="does not record"):
            archive.load_weights(path)

    def test_truncated_payload(self, tmp_path):
        path = self._saved(tmp_path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-8])
        with pytest.raises(ValueError, match="truncated payload"):
            archive.read_archive(path)

    def _rewrite_header(self, path, mutate):
        blob = path.read_bytes()
        (length,) = struct.unpack("<Q", blob[4:12])
        header = json.loads(blob[12:12 + length])
        mutate(header)
        new = json.dumps(header).encode()
        path.write_bytes(b"WWA1" + struct.pack("<Q", len(new)) + new
                         + blob[12 + length:])

    def test_missing_tensor(self, tmp_path):
        path = self._saved(tmp_path)
        self._rewrite_header(
            path, lambda h: h["tensors"].pop())
        with pytest.raises(ValueError, match="missing tensor"):
            archive.load_weights(path, "se-res2net50-ii")

    def test_unexpected_tensor(self, tmp_path):
        path = self._saved(tmp_path)

        def add_stranger(header):
            header["tensors"].append(
                {"name": "stowaway", "shape": [], "offset": 0})

        self._rewrite_header(path, add_stranger)
        with pytest.raises(ValueError, match="unexpected tensor"):
            archive.load_weights(path, "se-res2net50-ii")

    def test_shape_mismatch(self, tmp_path):
        path = self._saved(tmp_path)

        def squash(header):
            entry = next(t for t in header["tensors"]
                         if t["name"] == "head.weight")
            entry["shape"] = [2, 64]

        self._rewrite_header(path, squash)
        with pytest.raises(ValueError, match="head.weight.*shape"):
            archive.load_weights(path, "se-res2net50-ii")

    def test_duplicate_tensor(self, tmp_path):
        path = self._saved(tmp_path)
        self._rewrite_header(
            path, lambda h: h["tensors"].append(dict(h["tensors"][0])))
        with pytest.raises(ValueError, match="duplicate tensor"):
            archive.read_archive(path)
