"""Small vision transformer backbone.

The image is sliced into square patches, linearly embedded, joined by a
learnable classification token plus positional embeddings, and run through
pre-norm encoder blocks.  The class-level feature is the final
classification token; the patch tokens reshape back into a spatial grid
from which a 1x1 projection produces the K attention channels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import nnops
from .autodiff import Tensor, concat
from .features import FeatureBundle, attribute_pool
from .prototype_net import _init_linear, _uniform_fan_in


@dataclass
class ViTConfig:
    num_attributes: int
    image_size: int = 64
    patch_size: int = 8
    in_channels: int = 3
    embed_dim: int = 64
    depth: int = 2
    num_heads: int = 4
    mlp_ratio: int = 4

    def __post_init__(self):
        if self.image_size % self.patch_size != 0:
            raise ValueError(
                f"image_size {self.image_size} not divisible by patch size "
                f"{self.patch_size}")
        if self.embed_dim % self.num_heads != 0:
            raise ValueError("embed_dim must be divisible by num_heads")

    @property
    def grid_size(self) -> int:
        return self.image_size // self.patch_size

    @property
    def num_patches(self) -> int:
        return self.grid_size ** 2


def init_vit(config: ViTConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    c = config.embed_dim
    params: dict[str, Tensor] = {}
    patch_dim = config.patch_size ** 2 * config.in_channels
    _init_linear(params, "patch_embed", rng, patch_dim, c)
    params["cls_token"] = Tensor(rng.normal(0.0, 0.02, size=c), requires_grad=True)
    params["pos_embed"] = Tensor(
        rng.normal(0.0, 0.02, size=(config.num_patches + 1, c)), requires_grad=True)
    for d in range(config.depth):
        pre = f"block{d}"
        for ln in ("ln1", "ln2"):
            params[f"{pre}.{ln}.g"] = Tensor(np.ones(c), requires_grad=True)
            params[f"{pre}.{ln}.b"] = Tensor(np.zeros(c), requires_grad=True)
        _init_linear(params, f"{pre}.attn.qkv", rng, c, 3 * c)
        _init_linear(params, f"{pre}.attn.out", rng, c, c)
        _init_linear(params, f"{pre}.mlp.fc1", rng, c, config.mlp_ratio * c)
        _init_linear(params, f"{pre}.mlp.fc2", rng, config.mlp_ratio * c, c)
    params["ln_f.g"] = Tensor(np.ones(c), requires_grad=True)
    params["ln_f.b"] = Tensor(np.zeros(c), requires_grad=True)
    params["attn_proj.w"] = Tensor(
        _uniform_fan_in(rng, c, (1, 1, c, config.num_attributes)), requires_grad=True)
    params["attn_proj.b"] = Tensor(np.zeros(config.num_attributes),
                                   requires_grad=True)
    return params


def _self_attention(x: Tensor, params, pre: str, config: ViTConfig) -> Tensor:
    n, t, c = x.shape
    heads = config.num_heads
    dh = c // heads
    qkv = x @ params[f"{pre}.attn.qkv.w"] + params[f"{pre}.attn.qkv.b"]

    def split_heads(part):
        return part.reshape(n, t, heads, dh).transpose(0, 2, 1, 3)

    q = split_heads(qkv[:, :, :c])
    k = split_heads(qkv[:, :, c:2 * c])
    v = split_heads(qkv[:, :, 2 * c:])
    scores = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(dh))
    from .autodiff import softmax

    attn = softmax(scores, axis=-1)
    out = (attn @ v).transpose(0, 2, 1, 3).reshape(n, t, c)
    return out @ params[f"{pre}.attn.out.w"] + params[f"{pre}.attn.out.b"]


def _encoder_block(x: Tensor, params, pre: str, config: ViTConfig) -> Tensor:
    h = nnops.layer_norm(x, params[f"{pre}.ln1.g"], params[f"{pre}.ln1.b"])
    x = x + _self_attention(h, params, pre, config)
    h = nnops.layer_norm(x, params[f"{pre}.ln2.g"], params[f"{pre}.ln2.b"])
    h = nnops.gelu(h @ params[f"{pre}.mlp.fc1.w"] + params[f"{pre}.mlp.fc1.b"])
    return x + (h @ params[f"{pre}.mlp.fc2.w"] + params[f"{pre}.mlp.fc2.b"])


def patchify(images: Tensor, patch: int) -> Tensor:
    """(N, H, W, C) -> (N, P, patch*patch*C) in row-major patch order."""
    n, h, w, c = images.shape
    gh, gw = h // patch, w // patch
    x = images.reshape(n, gh, patch, gw, patch, c)
    return x.transpose(0, 1, 3, 2, 4, 5).reshape(n, gh * gw, patch * patch * c)


def extract_vit(params: dict[str, Tensor], config: ViTConfig,
                images) -> FeatureBundle:
    """Run a batch (N, H, W, C) or single image (H, W, C) through the ViT."""
    x = images if isinstance(images, Tensor) else Tensor(images)
    if x.ndim == 3:
        x = x.reshape(1, *x.shape)
    n, h, w, c = x.shape
    if h != w or h != config.image_size or c != config.in_channels:
        raise ValueError(
            f"image batch {x.shape[1:]} does not match config "
            f"({config.image_size}, {config.image_size}, {config.in_channels})")

    tokens = patchify(x, config.patch_size) @ params["patch_embed.w"] \
        + params["patch_embed.b"]
    cls = params["cls_token"].reshape(1, 1, config.embed_dim) \
        + Tensor(np.zeros((n, 1, 1)))
    tokens = concat([cls, tokens], axis=1) + params["pos_embed"]
    for d in range(config.depth):
        tokens = _encoder_block(tokens, params, f"block{d}", config)
    tokens = nnops.layer_norm(tokens, params["ln_f.g"], params["ln_f.b"])

    grid = config.grid_size
    class_feature = tokens[:, 0, :]
    feats = tokens[:, 1:, :].reshape(n, grid, grid, config.embed_dim)
    attention = nnops.conv2d(feats, params["attn_proj.w"], params["attn_proj.b"],
                             pad=0)
    return FeatureBundle(
        features=feats,
        attention=attention,
        class_feature=class_feature,
        attribute_features=attribute_pool(feats, attention),
    )
