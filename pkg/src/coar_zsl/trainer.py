"""Seeded episodic SGD training with per-epoch checkpoints.

Every step draws a class-balanced episode from the seen training split,
rebuilds prototypes from the seen-class semantics (their weights are
training), evaluates the weighted objective, and applies classical
momentum SGD.  All randomness flows from one root seed through a fixed
SeedSequence split, and checkpoints carry the generator state, so a
resumed run is bitwise identical to an uninterrupted one.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor_io
from .autodiff import Tensor
from .backbone_cnn import CNNConfig
from .backbone_vit import ViTConfig
from .dataset import Dataset
from .episodes import EpisodeBatch, sample_episode
from .features import attention_peaks, semantic_readout
from .losses import (LossConfig, LossParts, attribute_feature_loss,
                     attribute_prototype_loss, classification_loss,
                     filter_by_peak, rescale_semantic_targets, semantic_loss,
                     total_loss)
from .model import Model, ModelConfig, init_model
from .prototype_net import INIT_DESCRIPTOR, PrototypeNetConfig


class NonFiniteLossError(RuntimeError):
    """Raised when the objective degenerates; carries the loss parts."""

    def __init__(self, parts: dict):
        super().__init__(f"non-finite training loss: {parts}")
        self.parts = parts


@dataclass
class TrainConfig:
    epochs: int = 20
    episodes_per_epoch: int | None = None  # None: about one pass over the data
    n_way: int = 16
    k_shot: int = 2
    base_lr: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 0.0001
    lr_decay_every: int = 10
    lr_decay_factor: float = 0.5
    seed: int = 0
    backbone: str = "cnn"
    prototype_variant: str = "default"
    use_class_norm: bool = True
    hidden_size: int = 1024
    cnn_channels: tuple = (16, 32, 48, 64)
    vit_patch: int = 8
    vit_dim: int = 64
    vit_depth: int = 2
    vit_heads: int = 4
    freeze_backbone: bool = False
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        self.cnn_channels = tuple(self.cnn_channels)
        if isinstance(self.loss, dict):
            self.loss = LossConfig(**self.loss)
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if min(self.base_lr, self.lr_decay_factor) <= 0 or self.momentum < 0:
            raise ValueError("rates must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if min(self.n_way, self.k_shot, self.lr_decay_every) < 1:
            raise ValueError("n_way, k_shot and lr_decay_every must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["cnn_channels"] = list(self.cnn_channels)
        return d


def lr_at(epoch: int, config: TrainConfig) -> float:
    """Stepwise decay: base_lr * factor^floor(epoch / decay_every)."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return config.base_lr * config.lr_decay_factor ** (epoch // config.lr_decay_every)


def build_model_config(config: TrainConfig, dataset: Dataset) -> ModelConfig:
    k = dataset.num_attributes
    h, w, c = dataset.samples[0].image.shape
    cnn = vit = None
    if config.backbone == "cnn":
        cnn = CNNConfig(num_attributes=k, image_size=h, in_channels=c,
                        stage_channels=config.cnn_channels)
        embed = cnn.embed_dim
    else:
        vit = ViTConfig(num_attributes=k, image_size=h,
                        patch_size=config.vit_patch, in_channels=c,
                        embed_dim=config.vit_dim, depth=config.vit_depth,
                        num_heads=config.vit_heads)
        embed = vit.embed_dim
    proto = PrototypeNetConfig(num_attributes=k, embed_dim=embed,
                               hidden_size=config.hidden_size,
                               variant=config.prototype_variant,
                               use_class_norm=config.use_class_norm)
    return ModelConfig(backbone=config.backbone, cnn=cnn, vit=vit, proto=proto)


@dataclass
class TrainState:
    model: Model
    momentum: dict[str, np.ndarray]
    rng: np.random.Generator
    epoch: int                       # completed epochs
    step: int
    loss_history: list[dict]
    resolved_t_peak: float | None
    config: TrainConfig
    seen_classes: list[int]
    class_semantics_seen: np.ndarray
    attribute_semantics: np.ndarray
    semantic_targets: np.ndarray     # (M, K), indexed by raw label
    label_pos: dict[int, int]
    trainable: list[str]
    pending_peaks: list = field(default_factory=list)


def _data_context(config: TrainConfig, dataset: Dataset) -> dict:
    seen = sorted(dataset.seen_classes)
    cs = dataset.semantics.class_semantics
    return {
        "seen_classes": seen,
        "class_semantics_seen": cs[seen],
        "attribute_semantics": dataset.semantics.attribute_semantics,
        "semantic_targets": rescale_semantic_targets(cs, seen),
        "label_pos": {label: i for i, label in enumerate(seen)},
    }


def init_state(config: TrainConfig, dataset: Dataset) -> TrainState:
    param_seq, episode_seq = np.random.SeedSequence(config.seed).spawn(2)
    model = init_model(build_model_config(config, dataset),
                       np.random.default_rng(param_seq))
    trainable = sorted(
        name for name in model.params
        if not (config.freeze_backbone and name.startswith("backbone.")))
    return TrainState(
        model=model,
        momentum={name: np.zeros_like(model.params[name].data)
                  for name in trainable},
        rng=np.random.default_rng(episode_seq),
        epoch=0,
        step=0,
        loss_history=[],
        resolved_t_peak=config.loss.t_peak,
        config=config,
        trainable=trainable,
        **_data_context(config, dataset),
    )


def train_step(state: TrainState, episode: EpisodeBatch) -> dict:
    """One forward/backward/update; returns the log entry."""
    cfg = state.config
    lcfg = cfg.loss
    labels = np.asarray([state.label_pos[int(y)] for y in episode.labels])

    bundle = state.model.extract(episode.images, grad=not cfg.freeze_backbone)
    protos = state.model.prototypes(state.class_semantics_seen,
                                    state.attribute_semantics)
    loss_cls = classification_loss(bundle.class_feature,
                                   protos.class_prototypes, labels, lcfg.alpha)

    if state.resolved_t_peak is None:
        # calibration warm-up: record peak statistics; the contrastive
        # terms stay inactive until a threshold exists
        state.pending_peaks.append(attention_peaks(bundle.attention.data).ravel())
        threshold = np.inf
    else:
        threshold = state.resolved_t_peak

    need_attention_losses = lcfg.lambda_attp > 0 or lcfg.lambda_attf > 0
    eligible = (filter_by_peak(bundle.attention, bundle.attribute_features,
                               threshold)
                if need_attention_losses else [])
    loss_attp = (attribute_prototype_loss(eligible, protos.attribute_prototypes,
                                          lcfg.beta)
                 if lcfg.lambda_attp > 0 else Tensor(0.0))
    loss_attf = (attribute_feature_loss(eligible, lcfg.t_hard, lcfg.tau,
                                        lcfg.hard_selection)
                 if lcfg.lambda_attf > 0 else Tensor(0.0))
    loss_sem = (semantic_loss(semantic_readout(bundle.attention),
                              state.semantic_targets[episode.labels])
                if lcfg.lambda_sem > 0 else Tensor(0.0))

    loss = total_loss(LossParts(loss_cls, loss_attp, loss_attf, loss_sem), lcfg)
    parts = {"L_cls": float(loss_cls.data), "L_attp": float(loss_attp.data),
             "L_attf": float(loss_attf.data), "L_sem": float(loss_sem.data),
             "total": float(loss.data)}
    if not math.isfinite(parts["total"]):
        raise NonFiniteLossError(parts)

    for name in state.trainable:
        state.model.params[name].grad = None
    loss.backward()

    lr = lr_at(state.epoch, cfg)
    for name in state.trainable:
        p = state.model.params[name]
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if cfg.weight_decay > 0 and p.data.ndim >= 2:  # skip bias-like params
            g = g + cfg.weight_decay * p.data
        buf = state.momentum[name]
        buf *= cfg.momentum
        buf += g
        p.data = p.data - lr * buf
        p.grad = None

    entry = {"step": state.step, "epoch": state.epoch, **parts, "lr": lr}
    state.loss_history.append(entry)
    state.step += 1
    return entry


def resolve_episodes_per_epoch(config: TrainConfig, dataset: Dataset) -> int:
    if config.episodes_per_epoch is not None:
        return config.episodes_per_epoch
    n_train = len(dataset.indices(split="train"))
    return max(1, math.ceil(n_train / (config.n_way * config.k_shot)))


def train(config: TrainConfig | None, dataset: Dataset, outdir,
          resume_from=None) -> Path:
    """Run (or continue) training; returns the final checkpoint directory.

    When resuming, ``config`` may be None (adopt the checkpoint's) or must
    match it in everything but ``epochs``; the resumed trajectory is then
    bitwise identical to an uninterrupted run of the same length.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    if resume_from is None:
        if config is None:
            raise ValueError("config is required when not resuming")
        state = init_state(config, dataset)
    else:
        state = load_checkpoint(resume_from, dataset)
        if config is not None:
            want = {k: v for k, v in config.to_dict().items() if k != "epochs"}
            have = {k: v for k, v in state.config.to_dict().items()
                    if k != "epochs"}
            if want != have:
                raise ValueError(
                    "resume config differs from checkpoint in more than epochs")
            state.config = config

    episodes_per_epoch = resolve_episodes_per_epoch(state.config, dataset)
    with open(outdir / "config.json", "w") as fh:
        json.dump({"train": state.config.to_dict(),
                   "episodes_per_epoch": episodes_per_epoch,
                   "seed_split": "SeedSequence(seed).spawn(2) -> [params, episodes]"},
                  fh, indent=1, sort_keys=True)
        fh.write("\n")

    if state.epoch == 0:
        save_checkpoint(outdir / "ckpt_epoch_0", state)

    log_path = outdir / "log.jsonl"
    with open(log_path, "a") as log:
        for epoch in range(state.epoch, state.config.epochs):
            for _ in range(episodes_per_epoch):
                ep = sample_episode(dataset, state.config.n_way,
                                    state.config.k_shot, state.rng)
                entry = train_step(state, ep)
                log.write(json.dumps(entry) + "\n")
            if state.resolved_t_peak is None:
                peaks = np.concatenate(state.pending_peaks)
                state.resolved_t_peak = float(np.quantile(peaks, 0.9))
                state.pending_peaks = []
            state.epoch = epoch + 1
            save_checkpoint(outdir / f"ckpt_epoch_{state.epoch}", state)
    return outdir / f"ckpt_epoch_{state.epoch}"


# -- checkpoint serialization -------------------------------------------------

def _tensor_file(name: str) -> str:
    return name.replace(".", "__") + ".coar"


def save_checkpoint(ckpt_dir, state: TrainState) -> None:
    ckpt_dir = Path(ckpt_dir)
    (ckpt_dir / "params").mkdir(parents=True, exist_ok=True)
    (ckpt_dir / "momentum").mkdir(exist_ok=True)
    for name, p in state.model.params.items():
        tensor_io.write_tensor(ckpt_dir / "params" / _tensor_file(name), p.data)
    for name, buf in state.momentum.items():
        tensor_io.write_tensor(ckpt_dir / "momentum" / _tensor_file(name), buf)
    meta = {
        "epoch": state.epoch,
        "step": state.step,
        "train_config": state.config.to_dict(),
        "model_config": state.model.config.to_dict(),
        "param_names": sorted(state.model.params),
        "trainable": state.trainable,
        "rng_state": state.rng.bit_generator.state,
        "resolved_t_peak": state.resolved_t_peak,
        "loss_history": state.loss_history,
        "init": INIT_DESCRIPTOR,
    }
    with open(ckpt_dir / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(ckpt_dir) -> tuple[Model, dict]:
    """Load just the model (for evaluation/export); returns (model, meta)."""
    ckpt_dir = Path(ckpt_dir)
    with open(ckpt_dir / "meta.json") as fh:
        meta = json.load(fh)
    config = ModelConfig.from_dict(meta["model_config"])
    params = {
        name: Tensor(tensor_io.read_tensor(
            ckpt_dir / "params" / _tensor_file(name)), requires_grad=True)
        for name in meta["param_names"]
    }
    return Model(config=config, params=params), meta


def load_checkpoint(ckpt_dir, dataset: Dataset) -> TrainState:
    model, meta = load_model(ckpt_dir)
    config = TrainConfig(**meta["train_config"])
    momentum = {
        name: tensor_io.read_tensor(
            Path(ckpt_dir) / "momentum" / _tensor_file(name)).astype(np.float64)
        for name in meta["trainable"]
    }
    rng = np.random.default_rng()
    rng.bit_generator.state = meta["rng_state"]
    return TrainState(
        model=model,
        momentum=momentum,
        rng=rng,
        epoch=meta["epoch"],
        step=meta["step"],
        loss_history=meta["loss_history"],
        resolved_t_peak=meta["resolved_t_peak"],
        config=config,
        trainable=meta["trainable"],
        **_data_context(config, dataset),
    )
