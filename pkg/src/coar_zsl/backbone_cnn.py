"""Small convolutional backbone with multi-scale attribute attention.

Stages are conv3x3 -> relu, with a stride-2 max pool after every stage but
the last, so a 64px input with the default four stages lands on an 8x8
grid.  Each stage output additionally passes through a 1x1 projection to
K attention channels; the per-stage maps are bilinearly resized to the
final grid and summed into one raw attention tensor.  The class-level
feature is the global average pool of the last stage.

All convolutions are biasless: zero (background) pixels then map to
exactly zero through every stage, so global pooling sees only object
responses instead of being swamped by a learned constant over the
background area.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nnops
from .autodiff import Tensor
from .features import FeatureBundle, attribute_pool
from .prototype_net import _uniform_fan_in


@dataclass
class CNNConfig:
    num_attributes: int
    image_size: int = 64
    in_channels: int = 3
    stage_channels: tuple = (16, 32, 48, 64)

    def __post_init__(self):
        self.stage_channels = tuple(self.stage_channels)
        pools = len(self.stage_channels) - 1
        if self.image_size % (2 ** pools) != 0:
            raise ValueError(
                f"image_size {self.image_size} not divisible by 2^{pools}")

    @property
    def grid_size(self) -> int:
        return self.image_size // (2 ** (len(self.stage_channels) - 1))

    @property
    def embed_dim(self) -> int:
        return self.stage_channels[-1]


def init_cnn(config: CNNConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    params: dict[str, Tensor] = {}
    c_in = config.in_channels
    for s, c_out in enumerate(config.stage_channels):
        params[f"stage{s}.w"] = Tensor(
            _uniform_fan_in(rng, 9 * c_in, (3, 3, c_in, c_out)), requires_grad=True)
        params[f"attn{s}.w"] = Tensor(
            _uniform_fan_in(rng, c_out, (1, 1, c_out, config.num_attributes)),
            requires_grad=True)
        c_in = c_out
    return params


def extract_cnn(params: dict[str, Tensor], config: CNNConfig,
                images) -> FeatureBundle:
    """Run a batch (N, H, W, C) or single image (H, W, C) through the CNN."""
    x = images if isinstance(images, Tensor) else Tensor(images)
    if x.ndim == 3:
        x = x.reshape(1, *x.shape)
    n, h, w, c = x.shape
    if (h, w, c) != (config.image_size, config.image_size, config.in_channels):
        raise ValueError(
            f"image batch {x.shape[1:]} does not match config "
            f"({config.image_size}, {config.image_size}, {config.in_channels})")

    n_stages = len(config.stage_channels)
    grid = config.grid_size
    attention = None
    for s in range(n_stages):
        x = nnops.conv2d(x, params[f"stage{s}.w"], None, pad=1).relu()
        if s < n_stages - 1:
            x = nnops.maxpool2x2(x)
        stage_attn = nnops.conv2d(x, params[f"attn{s}.w"], None, pad=0)
        stage_attn = nnops.bilinear_resize(stage_attn, grid, grid)
        attention = stage_attn if attention is None else attention + stage_attn

    class_feature = x.reshape(n, grid * grid, config.embed_dim).mean(axis=1)
    return FeatureBundle(
        features=x,
        attention=attention,
        class_feature=class_feature,
        attribute_features=attribute_pool(x, attention),
    )
