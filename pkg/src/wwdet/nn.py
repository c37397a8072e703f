"""Modules for the residual spectrogram classifiers.

Blocks follow the reduced-width table of the classifier family: basic
blocks keep the bracket value as their 3x3 width, Res2Net-style blocks
treat it as the bottleneck width that is split into ``scale`` groups,
with a 4x expansion on the block output.
"""

import numpy as np

from . import tensor as T
from .tensor import RunningStats, Tensor


def he_normal(rng, shape, fan_in):
    """He fan-in initialization; keeps activation variance through ReLU."""
    std = np.sqrt(2.0 / fan_in)
    return (rng.standard_normal(shape) * std).astype(np.float32)


class Module:
    """Base class: child discovery, parameter walking, train/eval mode."""

    def __init__(self):
        self._training = True

    @property
    def training(self):
        return self._training

    def train(self, mode=True):
        for m in self.modules():
            m._training = mode
        return self

    def eval(self):
        return self.train(False)

    def modules(self):
        yield self
        for _, child in self.named_children():
            yield from child.modules()

    def named_children(self):
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
        for name, child in self.named_children():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_stats(self, prefix=""):
        """Running batch-norm statistics, in the same naming scheme."""
        for name, value in vars(self).items():
            if isinstance(value, RunningStats):
                yield prefix + name, value
        for name, child in self.named_children():
            yield from child.named_stats(prefix + name + ".")

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Conv2d(Module):
    def __init__(self, in_channels, out_channels, kernel_size, rng,
                 stride=1, padding=0, bias=False):
        super().__init__()
        k = kernel_size
        self.stride = stride
        self.padding = padding
        self.weight = Tensor(
            he_normal(rng, (out_channels, in_channels, k, k), in_channels * k * k),
            requires_grad=True)
        self.bias = Tensor(np.zeros(out_channels, dtype=np.float32),
                           requires_grad=True) if bias else None

    def forward(self, x):
        return T.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class BatchNorm2d(Module):
    def __init__(self, channels, eps=1e-5, momentum=0.1):
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.gamma = Tensor(np.ones(channels, dtype=np.float32), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=np.float32), requires_grad=True)
        self.stats = RunningStats(channels)

    def forward(self, x):
        return T.batch_norm(x, self.gamma, self.beta, self.stats,
                            self._training, self.eps, self.momentum)


class Linear(Module):
    def __init__(self, in_features, out_features, rng, bias=True):
        super().__init__()
        self.weight = Tensor(he_normal(rng, (in_features, out_features), in_features),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(out_features, dtype=np.float32),
                           requires_grad=True) if bias else None

    def forward(self, x):
        return T.fully_connected(x, self.weight, self.bias)


class MaxPool2d(Module):
    def __init__(self, size, stride=None, padding=0):
        super().__init__()
        self.size = size
        self.stride = size if stride is None else stride
        self.padding = padding

    def forward(self, x):
        return T.max_pool2d(x, self.size, self.stride, self.padding)


class SEBlock(Module):
    """Squeeze-and-excitation: global pool -> bottleneck FCs -> channel gates."""

    def __init__(self, channels, rng, reduction=4):
        super().__init__()
        if channels % reduction != 0:
            raise ValueError(
                f"SEBlock: {channels} channels not divisible by reduction {reduction}")
        hidden = channels // reduction
        self.fc1 = Linear(channels, hidden, rng)
        self.fc2 = Linear(hidden, channels, rng)

    def forward(self, x):
        n, c = x.shape[0], x.shape[1]
        s = T.global_avg_pool(x)
        g = T.sigmoid(self.fc2(T.relu(self.fc1(s))))
        return x * g.reshape((n, c, 1, 1))


class BasicBlock(Module):
    """Two 3x3 convs of the bracket width with an additive shortcut."""

    out_expansion = 1

    def __init__(self, in_channels, width, rng, stride=1):
        super().__init__()
        self.conv1 = Conv2d(in_channels, width, 3, rng, stride=stride, padding=1)
        self.bn1 = BatchNorm2d(width)
        self.conv2 = Conv2d(width, width, 3, rng, padding=1)
        self.bn2 = BatchNorm2d(width)
        self.shortcut = _shortcut(in_channels, width, stride, rng)

    def forward(self, x):
        h = T.relu(self.bn1(self.conv1(x)))
        h = self.bn2(self.conv2(h))
        return T.relu(h + _apply_shortcut(self.shortcut, x))


class BottleneckBlock(Module):
    """1x1 down, 3x3, 1x1 up with 4x expansion; the classic bottleneck."""

    out_expansion = 4

    def __init__(self, in_channels, width, rng, stride=1):
        super().__init__()
        out_channels = width * self.out_expansion
        self.conv1 = Conv2d(in_channels, width, 1, rng, stride=stride)
        self.bn1 = BatchNorm2d(width)
        self.conv2 = Conv2d(width, width, 3, rng, padding=1)
        self.bn2 = BatchNorm2d(width)
        self.conv3 = Conv2d(width, out_channels, 1, rng)
        self.bn3 = BatchNorm2d(out_channels)
        self.shortcut = _shortcut(in_channels, out_channels, stride, rng)

    def forward(self, x):
        h = T.relu(self.bn1(self.conv1(x)))
        h = T.relu(self.bn2(self.conv2(h)))
        h = self.bn3(self.conv3(h))
        return T.relu(h + _apply_shortcut(self.shortcut, x))


class Res2NetBlock(Module):
    """Bottleneck block with the hierarchical multi-scale 3x3 stage.

    The mid width is split into ``scale`` groups x_1..x_s.  Group 1 passes
    through untouched; each later group is convolved after receiving the
    previous branch output: y_1 = x_1, y_2 = K_2(x_2), y_i = K_i(x_i + y_{i-1}).
    Branches are concatenated, projected back up by a 1x1 conv, optionally
    gated by squeeze-excitation, then added to the shortcut.
    """

    out_expansion = 4

    def __init__(self, in_channels, width, rng, stride=1, scale=4, se_reduction=None):
        super().__init__()
        if scale < 2:
            raise ValueError(f"Res2NetBlock: scale must be >= 2, got {scale}")
        if width % scale != 0:
            raise ValueError(
                f"Res2NetBlock: width {width} not divisible by scale {scale}")
        group = width // scale
        out_channels = width * self.out_expansion
        self.scale = scale
        self.conv_in = Conv2d(in_channels, width, 1, rng, stride=stride)
        self.bn_in = BatchNorm2d(width)
        self.branch_convs = [Conv2d(group, group, 3, rng, padding=1)
                             for _ in range(scale - 1)]
        self.branch_bns = [BatchNorm2d(group) for _ in range(scale - 1)]
        self.conv_out = Conv2d(width, out_channels, 1, rng)
        self.bn_out = BatchNorm2d(out_channels)
        self.se = SEBlock(out_channels, rng, se_reduction) if se_reduction else None
        self.shortcut = _shortcut(in_channels, out_channels, stride, rng)

    def hierarchy(self, mid):
        xs = T.split_channels(mid, self.scale)
        ys = [xs[0]]
        prev = None
        for i in range(1, self.scale):
            z = xs[i] if prev is None else xs[i] + prev
            prev = T.relu(self.branch_bns[i - 1](self.branch_convs[i - 1](z)))
            ys.append(prev)
        return T.concat_channels(ys)

    def forward(self, x):
        h = T.relu(self.bn_in(self.conv_in(x)))
        h = self.hierarchy(h)
        h = self.bn_out(self.conv_out(h))
        if self.se is not None:
            h = self.se(h)
        return T.relu(h + _apply_shortcut(self.shortcut, x))


class _Projection(Module):
    """1x1 conv + norm used when the shortcut must change shape."""

    def __init__(self, in_channels, out_channels, stride, rng):
        super().__init__()
        self.conv = Conv2d(in_channels, out_channels, 1, rng, stride=stride)
        self.bn = BatchNorm2d(out_channels)

    def forward(self, x):
        return self.bn(self.conv(x))


def _shortcut(in_channels, out_channels, stride, rng):
    if in_channels == out_channels and stride == 1:
        return None
    return _Projection(in_channels, out_channels, stride, rng)


def _apply_shortcut(shortcut, x):
    return x if shortcut is None else shortcut(x)


class ConvBnRelu(Module):
    def __init__(self, in_channels, out_channels, kernel_size, rng,
                 stride=1, padding=0):
        super().__init__()
        self.conv = Conv2d(in_channels, out_channels, kernel_size, rng,
                           stride=stride, padding=padding)
        self.bn = BatchNorm2d(out_channels)

    def forward(self, x):
        return T.relu(self.bn(self.conv(x)))


class ResNetStem(Module):
    """7x7 stride-2 conv into a 3x3 stride-2 max pool."""

    def __init__(self, rng, channels=16):
        super().__init__()
        self.conv = ConvBnRelu(1, channels, 7, rng, stride=2, padding=3)
        self.pool = MaxPool2d(3, stride=2, padding=1)

    def forward(self, x):
        return self.pool(self.conv(x))


class StackedStem(Module):
    """Stack of 3x3 convs; the variant-II form strides the last one."""

    def __init__(self, rng, channels=16, final_stride=1):
        super().__init__()
        self.layers = [ConvBnRelu(1, channels, 3, rng, padding=1),
                       ConvBnRelu(channels, channels, 3, rng, padding=1),
                       ConvBnRelu(channels, channels, 3, rng,
                                  stride=final_stride, padding=1)]

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x
