"""Residual CNN frontend: maps a 1 x mels x L feature map to a
channels x (L/8) frame-level representation.

Three of the four residual stages downsample both the frequency and time
axes by 2 (stride-2 first conv + 1x1 projection shortcut), so 64 mel rows
collapse to 8 and the time axis shrinks by 8; average pooling over the
remaining frequency rows then yields one feature vector per output frame.
Downsampling-free stage sizes follow ``blocks_per_stage``.

3x3 convolutions pad the frequency axis symmetrically but the time axis
causally (left only), so every output frame depends only on current and
past input frames: appending audio never changes the columns already
computed for a shorter input.
"""

from dataclasses import dataclass

import numpy as np

from .autograd import ShapeError, Tensor


@dataclass
class FrontendConfig:
    base_channels: int = 16
    blocks_per_stage: tuple = (3, 4, 6, 3)
    input_mels: int = 64
    width_multiplier: float = 1.0

    def __post_init__(self):
        if self.input_mels % 8 != 0:
            raise ValueError("input_mels must be divisible by 8")
        if len(self.blocks_per_stage) != 4 or any(
            b < 1 for b in self.blocks_per_stage
        ):
            raise ValueError("blocks_per_stage must be 4 counts, all >= 1")
        if self.width_multiplier <= 0:
            raise ValueError("width_multiplier must be positive")

    def stage_channels(self):
        return [
            max(1, int(round(self.base_channels * self.width_multiplier * 2**i)))
            for i in range(4)
        ]

    @property
    def out_channels(self):
        return self.stage_channels()[-1]


def he_normal(rng, shape, fan_in, dtype):
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


# symmetric on the frequency axis, causal (left-only) on the time axis
PAD_3X3 = ((1, 1), (2, 0))


class Conv2d:
    """3x3/1x1 convolution layer, bias-free (a norm layer follows)."""

    def __init__(self, c_in, c_out, kernel, stride, padding, rng, dtype=np.float32):
        self.stride = stride
        self.padding = padding
        self.w = Tensor(
            he_normal(rng, (c_out, c_in, kernel, kernel), c_in * kernel * kernel, dtype),
            requires_grad=True,
        )
        self.w.decay = True

    def forward(self, x, train=False):
        return x.conv2d(self.w, stride=self.stride, padding=self.padding)

    def named_params(self):
        yield "w", self.w


class BatchNorm2d:
    """Per-channel batch normalization with running statistics.

    Train mode normalizes by batch moments (biased variance) and updates
    the running buffers with the configured momentum; eval mode applies
    the running buffers as constants.
    """

    def __init__(self, channels, eps=1e-5, momentum=0.1, dtype=np.float32):
        self.eps = eps
        self.momentum = momentum
        self.gamma = Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    def forward(self, x, train=False):
        c = self.gamma.shape[0]
        if train:
            if x.shape[0] < 2:
                raise ValueError("batch-norm train mode needs batch size >= 2")
            mean = x.mean(axis=(0, 2, 3), keepdims=True)
            var = (x - mean).square().mean(axis=(0, 2, 3), keepdims=True)
            m = self.momentum
            self.running_mean = (1 - m) * self.running_mean + m * mean.data.reshape(c)
            self.running_var = (1 - m) * self.running_var + m * var.data.reshape(c)
            norm = (x - mean) / (var + self.eps).sqrt()
        else:
            rm = Tensor(self.running_mean.reshape(1, c, 1, 1))
            rv = Tensor(self.running_var.reshape(1, c, 1, 1))
            norm = (x - rm) / (rv + self.eps).sqrt()
        return norm * self.gamma.reshape(1, c, 1, 1) + self.beta.reshape(1, c, 1, 1)

    def named_params(self):
        yield "gamma", self.gamma
        yield "beta", self.beta


class Linear:
    """Affine layer y = x W + b."""

    def __init__(self, d_in, d_out, rng, dtype=np.float32):
        self.w = Tensor(he_normal(rng, (d_in, d_out), d_in, dtype), requires_grad=True)
        self.w.decay = True
        self.b = Tensor(np.zeros(d_out, dtype=dtype), requires_grad=True)

    def forward(self, x, train=False):
        return x @ self.w + self.b

    def named_params(self):
        yield "w", self.w
        yield "b", self.b


class ResidualBlock:
    """Two 3x3 conv+norm steps with an identity (or projected) shortcut."""

    def __init__(self, c_in, c_out, stride, rng, dtype=np.float32):
        self.conv1 = Conv2d(c_in, c_out, 3, stride, PAD_3X3, rng, dtype)
        self.bn1 = BatchNorm2d(c_out, dtype=dtype)
        self.conv2 = Conv2d(c_out, c_out, 3, 1, PAD_3X3, rng, dtype)
        self.bn2 = BatchNorm2d(c_out, dtype=dtype)
        if stride != 1 or c_in != c_out:
            self.proj = Conv2d(c_in, c_out, 1, stride, 0, rng, dtype)
            self.proj_bn = BatchNorm2d(c_out, dtype=dtype)
        else:
            self.proj = None
            self.proj_bn = None

    def forward(self, x, train=False):
        out = self.bn1.forward(self.conv1.forward(x), train).relu()
        out = self.bn2.forward(self.conv2.forward(out), train)
        shortcut = x
        if self.proj is not None:
            shortcut = self.proj_bn.forward(self.proj.forward(x), train)
        return (out + shortcut).relu()

    def named_params(self):
        parts = [("conv1", self.conv1), ("bn1", self.bn1), ("conv2", self.conv2), ("bn2", self.bn2)]
        if self.proj is not None:
            parts += [("proj", self.proj), ("proj_bn", self.proj_bn)]
        for prefix, layer in parts:
            for name, p in layer.named_params():
                yield f"{prefix}.{name}", p


class Frontend:
    """Stacked residual stages ending in frequency-axis average pooling."""

    def __init__(self, config, rng, dtype=np.float32):
        self.config = config
        channels = config.stage_channels()
        self.conv1 = Conv2d(1, channels[0], 3, 1, PAD_3X3, rng, dtype)
        self.bn1 = BatchNorm2d(channels[0], dtype=dtype)
        self.stages = []
        c_prev = channels[0]
        for s, (c, n_blocks) in enumerate(zip(channels, config.blocks_per_stage)):
            blocks = []
            for b in range(n_blocks):
                stride = 2 if (s > 0 and b == 0) else 1
                blocks.append(ResidualBlock(c_prev, c, stride, rng, dtype))
                c_prev = c
            self.stages.append(blocks)

    def forward(self, x, train=False):
        """1 x mels x L map batch (N,1,mels,L) -> (N, out_channels, L/8)."""
        if x.ndim != 4 or x.shape[1] != 1 or x.shape[2] != self.config.input_mels:
            raise ShapeError(
                f"expected (N, 1, {self.config.input_mels}, L) input, got {x.shape}"
            )
        if x.shape[3] < 8:
            raise ShapeError(f"need at least 8 input frames, got {x.shape[3]}")
        out = self.bn1.forward(self.conv1.forward(x), train).relu()
        for blocks in self.stages:
            for block in blocks:
                out = block.forward(out, train)
        return out.mean(axis=2)  # average over remaining frequency rows

    def named_params(self):
        for name, p in self.conv1.named_params():
            yield f"conv1.{name}", p
        for name, p in self.bn1.named_params():
            yield f"bn1.{name}", p
        for s, blocks in enumerate(self.stages):
            for b, block in enumerate(blocks):
                for name, p in block.named_params():
                    yield f"res{s + 1}.{b}.{name}", p

    def param_count(self):
        return sum(p.size for _, p in self.named_params())
