"""The six reduced-width classifier architectures.

Variant I keeps all four residual stages (Conv2..Conv5); variant II drops
Conv5.  Stage brackets 4/8/16/32 follow the reduced table; repeats are
3/4/6/3.  Every model ends in global average pooling, a 2-unit fully
connected layer, and a softmax.
"""

from dataclasses import dataclass, field

import numpy as np

from . import nn
from . import tensor as T

STEM_CHANNELS = 16
STAGE_WIDTHS = (4, 8, 16, 32)
STAGE_REPEATS = (3, 4, 6, 3)
NUM_CLASSES = 2


@dataclass(frozen=True)
class BlockSpec:
    """One residual block: kind, bracket width, and layout knobs."""

    kind: str                 # basic | bottleneck | res2net | se_res2net
    width: int
    scale: int = 4
    stride: int = 1
    se_reduction: int = 4

    def __post_init__(self):
        if self.kind not in ("basic", "bottleneck", "res2net", "se_res2net"):
            raise ValueError(f"unknown block kind {self.kind!r}")
        if self.scale < 1 or self.width < 1 or self.stride < 1:
            raise ValueError(f"invalid block spec {self}")
        if self.kind in ("res2net", "se_res2net"):
            if self.scale < 2:
                raise ValueError(f"{self.kind} blocks need scale >= 2, got {self.scale}")
            if self.width % self.scale != 0:
                raise ValueError(
                    f"width {self.width} not divisible by scale {self.scale}")


@dataclass(frozen=True)
class StageSpec:
    repeat: int
    block: BlockSpec


@dataclass(frozen=True)
class ModelConfig:
    name: str
    variant: str              # "I" | "II"
    stem: str                 # "resnet" | "stacked"
    stages: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.variant not in ("I", "II"):
            raise ValueError(f"variant must be 'I' or 'II', got {self.variant!r}")
        if self.stem not in ("resnet", "stacked"):
            raise ValueError(f"unknown stem {self.stem!r}")
        if not self.stages or any(s.repeat < 1 for s in self.stages):
            raise ValueError("config needs at least one stage with repeat >= 1")


def _make_stages(kind, variant):
    n = 4 if variant == "I" else 3
    stages = []
    for i in range(n):
        stride = 1 if i == 0 else 2
        stages.append(StageSpec(STAGE_REPEATS[i],
                                BlockSpec(kind, STAGE_WIDTHS[i], stride=stride)))
    return tuple(stages)


def _make_config(family, kind, stem, variant):
    return ModelConfig(name=f"{family}-{variant.lower()}", variant=variant,
                       stem=stem, stages=_make_stages(kind, variant))


MODEL_CONFIGS = {}
for _variant in ("I", "II"):
    for _family, _kind, _stem in (("resnet50", "basic", "resnet"),
                                  ("res2net50", "res2net", "stacked"),
                                  ("se-res2net50", "se_res2net", "stacked")):
        _cfg = _make_config(_family, _kind, _stem, _variant)
        MODEL_CONFIGS[_cfg.name] = _cfg


def get_config(name):
    try:
        return MODEL_CONFIGS[name]
    except KeyError:
        raise ValueError(
            f"unknown model {name!r}; choose from {sorted(MODEL_CONFIGS)}") from None


def _make_block(spec, in_channels, stride, rng):
    if spec.kind == "basic":
        return nn.BasicBlock(in_channels, spec.width, rng, stride=stride)
    if spec.kind == "bottleneck":
        return nn.BottleneckBlock(in_channels, spec.width, rng, stride=stride)
    se = spec.se_reduction if spec.kind == "se_res2net" else None
    return nn.Res2NetBlock(in_channels, spec.width, rng, stride=stride,
                           scale=spec.scale, se_reduction=se)


class Model(nn.Module):
    """Stem, residual stages, and the pooled two-class head."""

    def __init__(self, cfg, seed):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        if cfg.stem == "resnet":
            self.stem = nn.ResNetStem(rng, STEM_CHANNELS)
        else:
            self.stem = nn.StackedStem(rng, STEM_CHANNELS,
                                       final_stride=2 if cfg.variant == "II" else 1)
        channels = STEM_CHANNELS
        self.blocks = []
        for stage in cfg.stages:
            for i in range(stage.repeat):
                stride = stage.block.stride if i == 0 else 1
                block = _make_block(stage.block, channels, stride, rng)
                self.blocks.append(block)
                channels = stage.block.width * block.out_expansion
        self.head = nn.Linear(channels, NUM_CLASSES, rng)

    def logits(self, x):
        if x.data.ndim != 4 or x.data.shape[1] != 1:
            raise T.ShapeError(
                f"model input: expected [N,1,T,F] spectrograms, got {x.data.shape}")
        h = self.stem(x)
        for block in self.blocks:
            h = block(h)
        return self.head(T.global_avg_pool(h))

    def forward(self, x):
        return T.softmax(self.logits(x))


def build_model(cfg, seed=0):
    """Construct a randomly initialized Model from a config or its name."""
    if isinstance(cfg, str):
        cfg = get_config(cfg)
    return Model(cfg, seed)


def count_params(model):
    """Number of trainable parameters (running statistics excluded)."""
    return sum(p.size for p in model.parameters())


def _params_under(model, prefix):
    return sum(p.size for name, p in model.named_parameters()
               if name.startswith(prefix))


def summary(model):
    """Human-readable per-stage table: description and parameter count."""
    cfg = model.cfg
    if cfg.stem == "resnet":
        stem_desc = "conv 7x7/16 s2, max pool 3x3 s2"
    else:
        tail = "s2" if cfg.variant == "II" else "s1"
        stem_desc = f"conv 3x3/16 s1 x2, conv 3x3/16 {tail}"
    rows = [("stem", stem_desc, _params_under(model, "stem."))]
    index = 0
    for n, stage in enumerate(cfg.stages):
        total = sum(_params_under(model, f"blocks.{index + i}.")
                    for i in range(stage.repeat))
        index += stage.repeat
        rows.append((f"conv{n + 2}",
                     f"[{stage.block.kind}, {stage.block.width}] x {stage.repeat}",
                     total))
    rows.append(("head", f"global avg pool, {NUM_CLASSES}-d fc, softmax",
                 _params_under(model, "head.")))
    width = max(len(desc) for _, desc, _ in rows)
    lines = [f"{cfg.name}  (variant {cfg.variant})"]
    for stage, desc, count in rows:
        lines.append(f"  {stage:<6} {desc:<{width}}  {count:>8,}")
    lines.append(f"  {'total':<6} {'':<{width}}  {count_params(model):>8,}")
    return "\n".join(lines)
