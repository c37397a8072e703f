"""Training for the two classifiers.

M0 learns whole utterances resized to a fixed frame count; M1 learns
sliding-window slices that inherit their utterance's label.  Both are
binary cross-entropy problems optimized with Adam under a
reduce-on-plateau learning-rate schedule.
"""

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import dsp, zoo
from . import tensor as T
from .augment import AugmentPolicy, augment_batch
from .data import load_manifest


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def init(cls, params):
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params])


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update, in place; returns (params, state)."""
    state.t += 1
    correct1 = 1.0 - beta1 ** state.t
    correct2 = 1.0 - beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / correct1) / (np.sqrt(v / correct2) + eps)
    return params, state


class Adam:
    """Optimizer wrapper binding adam_step to a model's parameters."""

    def __init__(self, params, lr):
        self.params = list(params)
        self.lr = lr
        self.state = AdamState.init([p.data for p in self.params])

    def step(self):
        datas = [p.data for p in self.params]
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data)
                 for p in self.params]
        adam_step(datas, grads, self.state, self.lr)


@dataclass(frozen=True)
class TrainConfig:
    target: str = "m0"                 # m0 | m1
    arch: str = "se-res2net50-ii"
    lr0: float = 2e-4
    batch_size: int = 32
    min_epochs: int = 20               # no stopping before this many epochs
    max_epochs: int = 40
    plateau_factor: float = 0.5
    plateau_patience: int = 2
    lr_stop_ratio: float = 1.0 / 16.0  # stop once lr < lr0 * ratio
    dev_fraction: float = 0.1
    seed: int = 0
    resize_frames: int = 200
    window_frames: int = 100
    step_fraction: float = 0.3
    step_mode: str = "fraction"
    n_bands: int = dsp.DEFAULT_BANDS
    max_slices_per_utt: int = 0        # 0 = keep all slices
    augment: AugmentPolicy = field(default_factory=AugmentPolicy)

    def __post_init__(self):
        if self.target not in ("m0", "m1"):
            raise ValueError(f"target must be m0|m1, got {self.target!r}")
        if self.lr0 <= 0:
            raise ValueError(f"lr0 must be positive, got {self.lr0}")
        if self.min_epochs < 1 or self.max_epochs < self.min_epochs:
            raise ValueError(
                f"bad epoch bounds min={self.min_epochs} max={self.max_epochs}")

    def slice_config(self):
        return dsp.SliceConfig(self.window_frames, self.step_fraction, self.step_mode)


def load_features(entries, n_bands):
    """Manifest entries -> list of (Spectrogram, label)."""
    out = []
    for e in entries:
        pcm, rate = dsp.read_wav(e.path)
        out.append((dsp.stft_logmel(pcm, rate, n_bands), e.label))
    return out


def _split_dev(examples, dev_fraction, rng):
    """Stratified utterance-level split -> (train, dev)."""
    by_label = {0: [], 1: []}
    for ex in examples:
        by_label[ex[1]].append(ex)
    if not by_label[0] or not by_label[1]:
        raise ValueError("training data must contain both classes")
    train, dev = [], []
    for label in (0, 1):
        group = by_label[label]
        order = rng.permutation(len(group))
        n_dev = max(1, int(round(dev_fraction * len(group))))
        n_dev = min(n_dev, len(group) - 1)   # never empty the train side
        dev.extend(group[i] for i in order[:n_dev])
        train.extend(group[i] for i in order[n_dev:])
    return train, dev


def spec_to_plane(values):
    """Spectrogram values [bands, frames] -> model plane [frames, bands]."""
    return np.ascontiguousarray(values.T, dtype=np.float32)


def _m0_arrays(spec_label_pairs, resize_frames):
    planes = [spec_to_plane(dsp.bilinear_resize(s, resize_frames).values)
              for s, _ in spec_label_pairs]
    x = np.stack(planes)[:, None]
    y = np.array([label for _, label in spec_label_pairs], dtype=np.int64)
    return x, y


def _m1_arrays(spec_label_pairs, cfg, rng=None):
    slice_cfg = cfg.slice_config()
    planes, labels = [], []
    for spec, label in spec_label_pairs:
        padded = dsp.pad_to_window(spec, slice_cfg.window_frames)
        slices = dsp.slice_spectrogram(padded, slice_cfg, label)
        if cfg.max_slices_per_utt and len(slices) > cfg.max_slices_per_utt:
            if rng is not None:
                keep = sorted(rng.choice(len(slices), cfg.max_slices_per_utt,
                                         replace=False))
            else:
                keep = np.linspace(0, len(slices) - 1,
                                   cfg.max_slices_per_utt).astype(int)
            slices = [slices[i] for i in keep]
        planes.extend(spec_to_plane(s.values) for s in slices)
        labels.extend(s.label for s in slices)
    x = np.stack(planes)[:, None]
    return x, np.asarray(labels, dtype=np.int64)


def _epoch_arrays(examples, cfg, epoch, rng, training):
    """Assemble (x, y) model arrays for one epoch, with augmentation."""
    if training:
        # reshuffle so the thirds masking rule rotates across utterances
        examples = [examples[i] for i in rng.permutation(len(examples))]
        if epoch <= cfg.augment.active_epochs:
            specs = augment_batch([s for s, _ in examples], epoch, cfg.augment)
            examples = list(zip(specs, [label for _, label in examples]))
    if cfg.target == "m0":
        return _m0_arrays(examples, cfg.resize_frames)
    return _m1_arrays(examples, cfg, rng if training else None)


def _run_epoch(model, opt, x, y, batch_size, rng):
    """One optimization pass; returns mean per-sample loss."""
    order = rng.permutation(len(x))
    total = 0.0
    for lo in range(0, len(order), batch_size):
        idx = order[lo:lo + batch_size]
        xb, yb = T.Tensor(x[idx]), y[idx]
        loss = T.softmax_cross_entropy(model.logits(xb), yb)
        value = loss.item()
        if not np.isfinite(value):
            raise RuntimeError(
                f"non-finite training loss {value} on a batch of {len(idx)}")
        model.zero_grad()
        loss.backward()
        opt.step()
        total += value * len(idx)
    return total / len(order)


def eval_loss(model, x, y, batch_size):
    model.eval()
    total = 0.0
    with T.no_grad():
        for lo in range(0, len(x), batch_size):
            xb, yb = T.Tensor(x[lo:lo + batch_size]), y[lo:lo + batch_size]
            loss = T.softmax_cross_entropy(model.logits(xb), yb)
            total += loss.item() * len(yb)
    model.train()
    return total / len(x)


def _snapshot(model):
    params = [p.data.copy() for p in model.parameters()]
    stats = [(rs.mean.copy(), rs.var.copy(), rs.count) for _, rs in model.named_stats()]
    return params, stats


def _restore(model, snapshot):
    params, stats = snapshot
    for p, data in zip(model.parameters(), params):
        p.data = data.copy()
    for (_, rs), (mean, var, count) in zip(model.named_stats(), stats):
        rs.mean, rs.var, rs.count = mean.copy(), var.copy(), count


def train(manifest, cfg, log_path=None):
    """Train a classifier per ``cfg``; returns (model, history).

    History is one dict per epoch with keys {epoch, train_loss, dev_loss,
    lr, seconds}; the same records go to ``log_path`` as JSON lines.  The
    returned model carries the best-dev-loss weights seen.
    """
    entries = load_manifest(manifest) if not isinstance(manifest, list) else manifest
    examples = load_features(entries, cfg.n_bands)
    rng = np.random.default_rng(cfg.seed)
    train_set, dev_set = _split_dev(examples, cfg.dev_fraction, rng)

    model = zoo.build_model(cfg.arch, cfg.seed)
    opt = Adam(model.parameters(), cfg.lr0)
    dev_x, dev_y = _epoch_arrays(dev_set, cfg, epoch=0, rng=None, training=False)

    history = []
    best_loss, best_snap = np.inf, None
    since_best = 0
    log_file = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        for epoch in range(1, cfg.max_epochs + 1):
            started = time.time()
            x, y = _epoch_arrays(train_set, cfg, epoch, rng, training=True)
            train_loss = _run_epoch(model, opt, x, y, cfg.batch_size, rng)
            dev_loss = eval_loss(model, dev_x, dev_y, cfg.batch_size)

            if dev_loss < best_loss:
                best_loss, best_snap, since_best = dev_loss, _snapshot(model), 0
            else:
                since_best += 1
                if since_best >= cfg.plateau_patience:
                    opt.lr *= cfg.plateau_factor
                    since_best = 0

            record = {"epoch": epoch, "train_loss": round(train_loss, 6),
                      "dev_loss": round(dev_loss, 6), "lr": opt.lr,
                      "seconds": round(time.time() - started, 3)}
            history.append(record)
            if log_file:
                log_file.write(json.dumps(record) + "\n")
                log_file.flush()

            if epoch >= cfg.min_epochs and opt.lr < cfg.lr0 * cfg.lr_stop_ratio:
                break
    finally:
        if log_file:
            log_file.close()

    if best_snap is not None:
        _restore(model, best_snap)
    model.eval()
    return model, history


def quick_config(target, **overrides):
    """A small-budget TrainConfig for desk-scale runs and tests."""
    base = dict(target=target, n_bands=64, batch_size=32,
                min_epochs=4, max_epochs=8)
    base.update(overrides)
    return TrainConfig(**base)
