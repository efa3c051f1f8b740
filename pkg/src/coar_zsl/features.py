"""Attention-based attribute localization shared by both backbones.

Each attention channel, softmax-normalized over its H x W positions, acts
as a soft mask that pools the feature tensor into one attribute-level
feature vector per attribute.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, softmax


@dataclass
class FeatureBundle:
    """Per-batch backbone output (leading batch axis on every field)."""

    features: Tensor            # (N, H, W, C)
    attention: Tensor           # (N, H, W, K), raw pre-softmax
    class_feature: Tensor       # (N, C)
    attribute_features: Tensor  # (N, K, C)

    def __post_init__(self):
        if self.features.shape[1:3] != self.attention.shape[1:3]:
            raise ValueError("feature and attention grids disagree")


def softmax2d(attention: Tensor) -> Tensor:
    """Softmax over the H*W positions of each (image, channel) map."""
    n, h, w, k = attention.shape
    flat = attention.reshape(n, h * w, k)
    return softmax(flat, axis=1).reshape(n, h, w, k)


def attribute_pool(features: Tensor, attention: Tensor) -> Tensor:
    """Soft-mask pooling: af_j = mean over positions of softmax2d(am_j) * F.

    features: (N, H, W, C); attention: (N, H, W, K) raw.  Returns (N, K, C).
    The mean keeps the 1/(H*W) factor, matching plain global average
    pooling of the masked tensor.
    """
    n, h, w, c = features.shape
    if attention.shape[1:3] != (h, w):
        raise ValueError("feature and attention grids disagree")
    k = attention.shape[3]
    weights = softmax2d(attention).reshape(n, h * w, k)
    flat = features.reshape(n, h * w, c)
    return (weights.transpose(0, 2, 1) @ flat) * (1.0 / (h * w))


def semantic_readout(attention: Tensor) -> Tensor:
    """Per-channel peak of the softmaxed attention, a (N, K) semantic vector.

    Entries live in [1/(H*W), 1]: 1/(H*W) for a uniform map, approaching 1
    for a single spike.
    """
    n, h, w, k = attention.shape
    weights = softmax(attention.reshape(n, h * w, k), axis=1)
    return weights.max(axis=1)


def attention_peaks(attention: np.ndarray) -> np.ndarray:
    """Raw (pre-softmax) per-channel maxima, shape (N, K)."""
    n, h, w, k = attention.shape
    return attention.reshape(n, h * w, k).max(axis=1)
