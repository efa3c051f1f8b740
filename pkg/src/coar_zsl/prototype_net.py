"""Semantic-to-visual prototype generation.

A shared two-layer MLP trunk feeds two identical branches (independent
weights): one maps class semantics to class prototypes, the other maps
attribute semantics to attribute prototypes.  Each branch is
relu -> class-norm -> class-norm -> linear -> relu.  Class normalization
standardizes every column over the rows currently in the batch and keeps
no running statistics, so prototypes are re-normalized whenever the class
set changes at inference time.

Structural variants used by ablations:
  "default"  - shared trunk, separate branches
  "separate" - two fully independent trunk+branch stacks
  "shared"   - shared trunk, one branch reused for both outputs
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor

VARIANTS = ("default", "separate", "shared")

CN_EPS = 1e-5


@dataclass
class PrototypeNetConfig:
    num_attributes: int
    embed_dim: int
    hidden_size: int = 1024
    variant: str = "default"
    use_class_norm: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown prototype-net variant {self.variant!r}")
        if min(self.num_attributes, self.embed_dim, self.hidden_size) < 1:
            raise ValueError("prototype-net dimensions must be positive")


@dataclass
class PrototypeSet:
    class_prototypes: Tensor  # (M, C)
    attribute_prototypes: Tensor  # (K, C)

    def __post_init__(self):
        if not (np.all(np.isfinite(self.class_prototypes.data))
                and np.all(np.isfinite(self.attribute_prototypes.data))):
            raise ValueError("prototypes must be finite")


def class_normalize(x, eps: float = CN_EPS):
    """Standardize each column over the rows of the current batch.

    No learned affine transform and no running statistics; population
    variance (divide by N).  Accepts a Tensor or a plain array.
    """
    if not isinstance(x, Tensor):
        return class_normalize(Tensor(x), eps).data
    mu = x.mean(axis=0, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=0, keepdims=True)
    return (x - mu) / (var + eps).sqrt()


def _uniform_fan_in(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _init_linear(params, name, rng, n_in, n_out):
    params[f"{name}.w"] = Tensor(_uniform_fan_in(rng, n_in, (n_in, n_out)),
                                 requires_grad=True)
    params[f"{name}.b"] = Tensor(np.zeros(n_out), requires_grad=True)


def init_prototype_net(config: PrototypeNetConfig,
                       rng: np.random.Generator) -> dict[str, Tensor]:
    k, h, c = config.num_attributes, config.hidden_size, config.embed_dim
    params: dict[str, Tensor] = {}
    if config.variant == "separate":
        for side in ("class", "attr"):
            _init_linear(params, f"{side}_trunk.fc1", rng, k, h)
            _init_linear(params, f"{side}_trunk.fc2", rng, h, h)
            _init_linear(params, f"{side}_branch.fc", rng, h, c)
    else:
        _init_linear(params, "shared.fc1", rng, k, h)
        _init_linear(params, "shared.fc2", rng, h, h)
        if config.variant == "shared":
            _init_linear(params, "branch.fc", rng, h, c)
        else:
            _init_linear(params, "class_branch.fc", rng, h, c)
            _init_linear(params, "attr_branch.fc", rng, h, c)
    return params

INIT_DESCRIPTOR = "uniform(+-1/sqrt(fan_in)) weights, zero biases"


def _trunk(params, prefix, x):
    h = (x @ params[f"{prefix}.fc1.w"] + params[f"{prefix}.fc1.b"]).relu()
    return h @ params[f"{prefix}.fc2.w"] + params[f"{prefix}.fc2.b"]


def _branch(params, prefix, x, use_cn):
    h = x.relu()
    if use_cn:
        h = class_normalize(class_normalize(h))
    h = h @ params[f"{prefix}.fc.w"] + params[f"{prefix}.fc.b"]
    return h.relu()


def forward_prototypes(params: dict[str, Tensor], config: PrototypeNetConfig,
                       class_semantics, attribute_semantics) -> PrototypeSet:
    """Map class (M x K) and attribute (K x K) semantics to prototypes."""
    cs = class_semantics if isinstance(class_semantics, Tensor) else Tensor(class_semantics)
    am = (attribute_semantics if isinstance(attribute_semantics, Tensor)
          else Tensor(attribute_semantics))
    k = config.num_attributes
    if cs.shape[1] != k or am.shape[1] != k:
        raise ValueError(
            f"semantics have {cs.shape[1]}/{am.shape[1]} columns, expected {k}")
    cn = config.use_class_norm
    if config.variant == "separate":
        cp = _branch(params, "class_branch", _trunk(params, "class_trunk", cs), cn)
        ap = _branch(params, "attr_branch", _trunk(params, "attr_trunk", am), cn)
    elif config.variant == "shared":
        cp = _branch(params, "branch", _trunk(params, "shared", cs), cn)
        ap = _branch(params, "branch", _trunk(params, "shared", am), cn)
    else:
        cp = _branch(params, "class_branch", _trunk(params, "shared", cs), cn)
        ap = _branch(params, "attr_branch", _trunk(params, "shared", am), cn)
    return PrototypeSet(class_prototypes=cp, attribute_prototypes=ap)


def prototype_grads(params: dict[str, Tensor], config: PrototypeNetConfig,
                    class_semantics, attribute_semantics,
                    upstream_class: np.ndarray,
                    upstream_attr: np.ndarray) -> dict[str, np.ndarray]:
    """Vector-Jacobian products of both prototype outputs w.r.t. all params."""
    for p in params.values():
        p.grad = None
    protos = forward_prototypes(params, config, class_semantics, attribute_semantics)
    seeded = ((protos.class_prototypes * Tensor(upstream_class)).sum()
              + (protos.attribute_prototypes * Tensor(upstream_attr)).sum())
    seeded.backward()
    return {name: (np.zeros_like(p.data) if p.grad is None else p.grad)
            for name, p in params.items()}
