"""Model facade: one parameter dict spanning backbone and prototype net."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .backbone_cnn import CNNConfig, extract_cnn, init_cnn
from .backbone_vit import ViTConfig, extract_vit, init_vit
from .features import FeatureBundle
from .prototype_net import (PrototypeNetConfig, PrototypeSet,
                            forward_prototypes, init_prototype_net)

BACKBONES = ("cnn", "vit")


@dataclass
class ModelConfig:
    backbone: str
    cnn: CNNConfig | None
    vit: ViTConfig | None
    proto: PrototypeNetConfig

    def __post_init__(self):
        if self.backbone not in BACKBONES:
            raise ValueError(f"unknown backbone {self.backbone!r}")
        active = self.cnn if self.backbone == "cnn" else self.vit
        if active is None:
            raise ValueError(f"missing {self.backbone} config")
        if active.num_attributes != self.proto.num_attributes:
            raise ValueError("backbone and prototype net disagree on K")
        if active.embed_dim != self.proto.embed_dim:
            raise ValueError("backbone and prototype net disagree on C")

    @property
    def backbone_config(self):
        return self.cnn if self.backbone == "cnn" else self.vit

    def to_dict(self) -> dict:
        out = {"backbone": self.backbone, "proto": vars(self.proto).copy()}
        if self.cnn is not None:
            d = vars(self.cnn).copy()
            d["stage_channels"] = list(d["stage_channels"])
            out["cnn"] = d
        if self.vit is not None:
            out["vit"] = vars(self.vit).copy()
        return out

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        return ModelConfig(
            backbone=d["backbone"],
            cnn=CNNConfig(**d["cnn"]) if d.get("cnn") else None,
            vit=ViTConfig(**d["vit"]) if d.get("vit") else None,
            proto=PrototypeNetConfig(**d["proto"]),
        )


def _prefixed(params: dict[str, Tensor], prefix: str) -> dict[str, Tensor]:
    return {name[len(prefix):]: p for name, p in params.items()
            if name.startswith(prefix)}


def normalize_images(images: np.ndarray) -> np.ndarray:
    """Map unit-range pixels to [-1, 1].

    From-scratch relu stacks on all-positive inputs collapse towards the
    brightness direction; signed inputs keep global-average features
    discriminative.
    """
    return np.asarray(images, dtype=np.float64) * 2.0 - 1.0


@dataclass
class Model:
    config: ModelConfig
    params: dict[str, Tensor]

    def extract(self, images, grad: bool = True,
                normalize: bool = True) -> FeatureBundle:
        """Feature bundle for a [0, 1]-range image batch.

        ``normalize=False`` feeds the pixels through unchanged (for inputs
        that are already signed or for raw backbone tests).
        """
        if normalize:
            data = images.data if isinstance(images, Tensor) else images
            images = normalize_images(data)
        sub = _prefixed(self.params, "backbone.")
        if not grad:
            sub = {k: p.detach() for k, p in sub.items()}
        if self.config.backbone == "cnn":
            return extract_cnn(sub, self.config.cnn, images)
        return extract_vit(sub, self.config.vit, images)

    def prototypes(self, class_semantics, attribute_semantics,
                   grad: bool = True) -> PrototypeSet:
        sub = _prefixed(self.params, "proto.")
        if not grad:
            sub = {k: p.detach() for k, p in sub.items()}
        return forward_prototypes(sub, self.config.proto, class_semantics,
                                  attribute_semantics)


def init_model(config: ModelConfig, rng: np.random.Generator) -> Model:
    if config.backbone == "cnn":
        backbone = init_cnn(config.cnn, rng)
    else:
        backbone = init_vit(config.vit, rng)
    proto = init_prototype_net(config.proto, rng)
    params = {f"backbone.{k}": v for k, v in backbone.items()}
    params.update({f"proto.{k}": v for k, v in proto.items()})
    return Model(config=config, params=params)
