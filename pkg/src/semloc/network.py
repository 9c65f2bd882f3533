"""Student network: shared encoder, detection decoder, description decoder.

The encoder is a stack of 3x3 stride-2 convolution stages followed by
residual blocks; the detection head upsamples a 1x1 projection back to full
resolution through a sigmoid, while the description head emits a D-channel
map at 1/f resolution.  The outputs of encoder stages 2 and 3 are exposed as
taps for feature-consistency distillation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ShapeError


@dataclass(frozen=True)
class NetworkConfig:
    base_channels: int = 16
    descriptor_dim: int = 32
    downsample_factor: int = 4
    resblock_count: int = 3

    def __post_init__(self):
        if self.descriptor_dim < 8:
            raise ValueError(f"descriptor_dim must be >= 8, got {self.descriptor_dim}")
        if self.downsample_factor not in (4, 8):
            raise ValueError(f"downsample_factor must be 4 or 8, got {self.downsample_factor}")
        if self.base_channels < 1 or self.resblock_count < 0:
            raise ValueError("base_channels must be >= 1 and resblock_count >= 0")

    @property
    def stage_channels(self) -> list[tuple[int, int]]:
        b = self.base_channels
        stages = [(1, b), (b, 2 * b), (2 * b, 4 * b)]
        if self.downsample_factor == 8:
            stages.append((4 * b, 4 * b))
        return stages

    @property
    def final_channels(self) -> int:
        return 4 * self.base_channels

    def tap_shapes(self, height: int, width: int) -> list[tuple[int, int, int]]:
        b = self.base_channels
        return [(2 * b, height // 2, width // 2), (4 * b, height // 4, width // 4)]


@dataclass
class ForwardOutput:
    s: T.Tensor  # [H, W], sigmoid range
    desc_map: T.Tensor  # [D, H/f, W/f], not yet row-normalized
    taps: list[T.Tensor] = field(default_factory=list)


def _fan_in_uniform(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else int(shape[0])
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_weights(config: NetworkConfig, seed: int) -> dict[str, T.Tensor]:
    """Fan-in-scaled uniform kernels, zero biases; deterministic per seed."""
    rng = np.random.default_rng(seed)
    weights: dict[str, T.Tensor] = {}

    def conv(name: str, c_in: int, c_out: int, k: int):
        weights[f"{name}.w"] = T.Tensor(_fan_in_uniform(rng, (c_out, c_in, k, k)), requires_grad=True)
        weights[f"{name}.b"] = T.Tensor(np.zeros(c_out), requires_grad=True)

    for i, (c_in, c_out) in enumerate(config.stage_channels, start=1):
        conv(f"enc{i}", c_in, c_out, 3)
    cf = config.final_channels
    for r in range(1, config.resblock_count + 1):
        conv(f"res{r}.c1", cf, cf, 3)
        conv(f"res{r}.c2", cf, cf, 3)
    conv("det", cf, 1, 1)
    conv("desc", cf, config.descriptor_dim, 1)
    return weights


def _conv_block(x: T.Tensor, weights: dict[str, T.Tensor], name: str, stride: int) -> T.Tensor:
    y = T.conv2d(x, weights[f"{name}.w"], stride=stride, padding=1)
    return T.relu(T.add_bias(y, weights[f"{name}.b"]))


def forward(image: np.ndarray, weights: dict[str, T.Tensor], config: NetworkConfig) -> ForwardOutput:
    """Full forward pass over one grayscale image."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ShapeError(f"forward expects a 2-d grayscale image, got {image.shape}")
    h, w = image.shape
    f = config.downsample_factor
    if h % f != 0 or w % f != 0:
        raise ShapeError(f"image dims {h}x{w} not divisible by downsample factor {f}")

    x = T.Tensor(image[None, :, :])
    stages = config.stage_channels
    taps: list[T.Tensor] = []
    for i in range(len(stages)):
        stride = 1 if i == 0 else 2
        x = _conv_block(x, weights, f"enc{i + 1}", stride)
        if i in (1, 2):
            taps.append(x)

    for r in range(1, config.resblock_count + 1):
        y = _conv_block(x, weights, f"res{r}.c1", 1)
        y = T.conv2d(y, weights[f"res{r}.c2.w"], stride=1, padding=1)
        y = T.add_bias(y, weights[f"res{r}.c2.b"])
        x = T.relu(T.add(x, y))

    det = T.add_bias(T.conv2d(x, weights["det.w"], stride=1, padding=0), weights["det.b"])
    s = T.sigmoid(T.reshape(T.upsample_bilinear(det, f), (h, w)))

    desc = T.add_bias(T.conv2d(x, weights["desc.w"], stride=1, padding=0), weights["desc.b"])
    return ForwardOutput(s=s, desc_map=desc, taps=taps)


def weight_names(config: NetworkConfig) -> list[str]:
    return list(init_weights(config, seed=0).keys())
