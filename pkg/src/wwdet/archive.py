"""Weight archive serialization (format "WWA1").

Layout: 4 magic bytes ``WWA1``; an 8-byte little-endian unsigned header
length L; L bytes of UTF-8 JSON ``{"tensors": [{"name", "shape",
"offset"}], "meta": {...}}``; then the tensor payload as raw 32-bit
little-endian floats.  Offsets are in bytes from the start of the
payload.  Running batch-norm statistics are stored alongside trainable
weights so a reloaded model evaluates bit-exactly.
"""

import json
import struct

import numpy as np

from . import zoo

MAGIC = b"WWA1"


def _named_arrays(model):
    """Deterministic (name, array) pairs: parameters then norm statistics."""
    pairs = [(name, p.data) for name, p in model.named_parameters()]
    for name, rs in model.named_stats():
        pairs.append((f"{name}.mean", rs.mean))
        pairs.append((f"{name}.var", rs.var))
        pairs.append((f"{name}.count", np.asarray([rs.count], dtype=np.float32)))
    return pairs


def save_weights(model, path):
    entries, payload, offset = [], [], 0
    for name, arr in _named_arrays(model):
        raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        payload.append(raw)
        offset += len(raw)
    header = json.dumps({
        "tensors": entries,
        "meta": {"format": "WWA1", "arch": model.cfg.name},
    }).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        f.write(b"".join(payload))


def read_archive(path):
    """Parse an archive -> (meta dict, {name: float32 array})."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise ValueError(f"{path}: not a WWA1 archive (bad magic {blob[:4]!r})")
    (length,) = struct.unpack("<Q", blob[4:12])
    header = json.loads(blob[12:12 + length].decode("utf-8"))
    data = blob[12 + length:]
    tensors = {}
    seen = set()
    for entry in header["tensors"]:
        name, shape, offset = entry["name"], tuple(entry["shape"]), entry["offset"]
        if name in seen:
            raise ValueError(f"{path}: duplicate tensor {name!r}")
        seen.add(name)
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        raw = data[offset:offset + 4 * n]
        if len(raw) != 4 * n:
            raise ValueError(f"{path}: truncated payload for tensor {name!r}")
        tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    return header.get("meta", {}), tensors


def load_weights(path, cfg=None, seed=0):
    """Rebuild the archived model and fill it from the archive, in eval mode.

    ``cfg`` (an architecture name or config) is only needed for archives
    whose header does not record the architecture.
    """
    meta, tensors = read_archive(path)
    arch = meta.get("arch")
    if cfg is None:
        if arch is None:
            raise ValueError(
                f"{path}: archive does not record its architecture; pass cfg")
        cfg = arch
    if isinstance(cfg, str):
        cfg = zoo.get_config(cfg)
    if arch is not None and arch != cfg.name:
        raise ValueError(f"{path}: archive holds {arch!r}, requested {cfg.name!r}")
    model = zoo.build_model(cfg, seed)
    expected = _named_arrays(model)
    for name, arr in expected:
        if name not in tensors:
            raise ValueError(f"{path}: missing tensor {name!r}")
        if tensors[name].shape != arr.shape:
            raise ValueError(
                f"{path}: tensor {name!r} has shape {tensors[name].shape}, "
                f"model expects {arr.shape}")
    known = {name for name, _ in expected}
    for name in tensors:
        if name not in known:
            raise ValueError(f"{path}: unexpected tensor {name!r}")
    for name, p in model.named_parameters():
        p.data = tensors[name]
    for name, rs in model.named_stats():
        rs.mean = tensors[f"{name}.mean"]
        rs.var = tensors[f"{name}.var"]
        rs.count = int(tensors[f"{name}.count"][0])
    return model.eval()
