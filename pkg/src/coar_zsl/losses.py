"""Training objectives: cosine classification, prototype triplet loss,
hard-example contrastive loss over attribute features, and the semantic
regression on attention peaks.

All losses consume autodiff tensors and return scalar tensors, so one
backward pass covers the whole weighted objective.  Pair selection (peak
filtering, hard mining) is data-dependent and deliberately gradient-free;
gradients flow only through the selected cosines.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .autodiff import Tensor, stack
from .features import attention_peaks

NORM_FLOOR = 1e-12


class ZeroNormError(ValueError):
    """Cosine similarity is undefined for an exactly-zero vector."""


@dataclass
class LossConfig:
    alpha: float = 25.0          # cosine logit scale
    beta: float = 0.5            # triplet margin ratio
    tau: float = 0.4             # contrastive temperature
    t_peak: float | None = 9.0   # attention peak threshold; None = calibrate
    t_hard: float = 0.8          # hard-example cosine threshold
    lambda_attp: float = 0.1
    lambda_attf: float = 1.0
    lambda_sem: float = 1.0
    hard_selection: bool = True  # False reproduces the "no hard mining" ablation

    def __post_init__(self):
        if self.alpha <= 0 or self.tau <= 0:
            raise ValueError("alpha and tau must be positive")
        if not 0 < self.t_hard < 1:
            raise ValueError("t_hard must lie strictly inside (0, 1)")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if min(self.lambda_attp, self.lambda_attf, self.lambda_sem) < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class EligibleAttributeFeature:
    """An attribute-level feature whose attention peak cleared the filter."""

    feature: Tensor       # (C,)
    attribute_index: int
    source_image: int
    peak: float


def _as_2d(x) -> Tensor:
    t = x if isinstance(x, Tensor) else Tensor(x)
    return t.reshape(1, t.shape[0]) if t.ndim == 1 else t


def _check_nonzero_rows(data: np.ndarray, what: str) -> None:
    norms = np.linalg.norm(data, axis=-1)
    if np.any(norms == 0.0):
        raise ZeroNormError(f"{what} contains an exactly-zero vector")


def cosine_matrix(a: Tensor, b: Tensor) -> Tensor:
    """Pairwise cosine similarities, (n, d) x (m, d) -> (n, m)."""
    na = ((a * a).sum(axis=1, keepdims=True)).sqrt().clip_min(NORM_FLOOR)
    nb = ((b * b).sum(axis=1, keepdims=True)).sqrt().clip_min(NORM_FLOOR)
    return (a @ b.transpose(1, 0)) / na / nb.transpose(1, 0)


def classification_loss(class_feature, class_prototypes, labels,
                        alpha: float) -> Tensor:
    """Mean cross entropy of alpha-scaled cosine logits over the batch."""
    cf = _as_2d(class_feature)
    cp = class_prototypes if isinstance(class_prototypes, Tensor) \
        else Tensor(class_prototypes)
    _check_nonzero_rows(cf.data, "class features")
    _check_nonzero_rows(cp.data, "class prototypes")
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if labels.max() >= cp.shape[0]:
        raise ValueError("label outside prototype set")
    logits = cosine_matrix(cf, cp) * alpha
    shifted = logits - Tensor(logits.data.max(axis=1, keepdims=True))
    log_norm = shifted.exp().sum(axis=1).log()
    picked = shifted[np.arange(len(labels)), labels]
    return (log_norm - picked).mean()


def class_probabilities(class_feature, class_prototypes, alpha: float) -> np.ndarray:
    """Softmax of alpha-scaled cosines (rows sum to one)."""
    cf = _as_2d(class_feature)
    cp = class_prototypes if isinstance(class_prototypes, Tensor) \
        else Tensor(class_prototypes)
    logits = alpha * cosine_matrix(cf, cp).data
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def filter_by_peak(attention, attribute_features, t_peak: float
                   ) -> list[EligibleAttributeFeature]:
    """Keep (image, attribute) features whose raw attention peak >= t_peak.

    attention: (N, H, W, K) raw maps (array or tensor); attribute_features:
    (N, K, C) tensor.  Pairs with peak strictly below the threshold are
    dropped; equality is kept.
    """
    raw = attention.data if isinstance(attention, Tensor) else np.asarray(attention)
    af = attribute_features if isinstance(attribute_features, Tensor) \
        else Tensor(attribute_features)
    peaks = attention_peaks(raw)
    eligible = []
    for image in range(raw.shape[0]):
        for j in range(raw.shape[3]):
            if peaks[image, j] >= t_peak:
                eligible.append(EligibleAttributeFeature(
                    feature=af[image, j], attribute_index=j,
                    source_image=image, peak=float(peaks[image, j])))
    return eligible


def attribute_prototype_loss(eligible: Sequence[EligibleAttributeFeature],
                             attribute_prototypes, beta: float) -> Tensor:
    """Triplet loss pulling each eligible feature onto its own prototype.

    Sum over eligible features of relu(d_own - beta * min d_other), with
    d the cosine distance.  Empty input gives 0.
    """
    ap = attribute_prototypes if isinstance(attribute_prototypes, Tensor) \
        else Tensor(attribute_prototypes)
    if not eligible:
        return Tensor(0.0)
    _check_nonzero_rows(ap.data, "attribute prototypes")
    feats = stack([e.feature for e in eligible], axis=0)
    _check_nonzero_rows(feats.data, "attribute features")
    dist = 1.0 - cosine_matrix(feats, ap)
    own = np.asarray([e.attribute_index for e in eligible])
    rows = np.arange(len(eligible))
    d_own = dist[rows, own]
    if ap.shape[0] == 1:
        # no other prototypes to contrast against; only the pull term remains
        return d_own.relu().sum() if beta == 0 else Tensor(0.0)
    mask = np.zeros(dist.shape)
    mask[rows, own] = 1e30  # excludes the own prototype from the min
    d_min_other = -((-(dist + Tensor(mask))).max(axis=1))
    return (d_own - beta * d_min_other).relu().sum()


def mine_hard_examples(eligible: Sequence[EligibleAttributeFeature],
                       anchor_index: int, t_hard: float,
                       hard_selection: bool = True
                       ) -> tuple[list[int], list[int]]:
    """Hard positives/negatives of one anchor, as indices into ``eligible``.

    Positives: same attribute, cosine < t_hard.  Negatives: different
    attribute, cosine > 1 - t_hard.  With hard_selection=False all
    same/different-attribute features are used instead.
    """
    anchor = eligible[anchor_index]
    av = anchor.feature.data
    an = max(float(np.linalg.norm(av)), NORM_FLOOR)
    positives, negatives = [], []
    for i, other in enumerate(eligible):
        if i == anchor_index:
            continue
        same = other.attribute_index == anchor.attribute_index
        if hard_selection:
            ov = other.feature.data
            cos = float(av @ ov) / (an * max(float(np.linalg.norm(ov)), NORM_FLOOR))
            if same and cos < t_hard:
                positives.append(i)
            elif not same and cos > 1.0 - t_hard:
                negatives.append(i)
        else:
            (positives if same else negatives).append(i)
    return positives, negatives


def attribute_feature_loss(eligible: Sequence[EligibleAttributeFeature],
                           t_hard: float, tau: float,
                           hard_selection: bool = True) -> Tensor:
    """Temperature-scaled contrastive loss over hard example sets.

    Every eligible feature anchors one term; anchors without hard
    positives are skipped and do not enter the average.  An anchor with
    positives but no negatives contributes 0.
    """
    if not eligible:
        return Tensor(0.0)
    feats = stack([e.feature for e in eligible], axis=0)
    sims = cosine_matrix(feats, feats)
    terms = []
    for i in range(len(eligible)):
        positives, negatives = mine_hard_examples(eligible, i, t_hard,
                                                  hard_selection)
        if not positives:
            continue
        pos = (sims[i, positives] * (1.0 / tau)).exp().sum()
        if negatives:
            neg = (sims[i, negatives] * (1.0 / tau)).exp().sum()
            terms.append(-(pos / (pos + neg)).log())
        else:
            terms.append(pos * 0.0)  # probability 1, zero loss
    if not terms:
        return Tensor(0.0)
    return stack(terms, axis=0).mean()


def semantic_loss(readout, target) -> Tensor:
    """Squared L2 distance between attention readout and class semantics.

    1-D inputs give one squared distance; 2-D batches are averaged.
    """
    a = readout if isinstance(readout, Tensor) else Tensor(readout)
    b = target if isinstance(target, Tensor) else Tensor(target)
    if a.shape != b.shape:
        raise ValueError(f"semantic vectors disagree: {a.shape} vs {b.shape}")
    sq = (a - b) ** 2
    if a.ndim == 1:
        return sq.sum()
    return sq.sum(axis=1).mean()


def rescale_semantic_targets(class_semantics: np.ndarray,
                             seen_classes: Sequence[int]) -> np.ndarray:
    """Min-max rescale each attribute column to [0, 1] over the seen classes.

    Keeps the regression target commensurate with the softmax-peak readout.
    Constant columns map to 1 where positive, else 0.
    """
    cs = np.asarray(class_semantics, dtype=np.float64)
    seen = cs[list(seen_classes)]
    lo = seen.min(axis=0)
    hi = seen.max(axis=0)
    span = hi - lo
    out = np.zeros_like(cs)
    varying = span > 1e-12
    out[:, varying] = (cs[:, varying] - lo[varying]) / span[varying]
    out[:, ~varying] = (cs[:, ~varying] > 0).astype(np.float64)
    return np.clip(out, 0.0, 1.0)


@dataclass
class LossParts:
    classification: Tensor | float
    attribute_prototype: Tensor | float
    attribute_feature: Tensor | float
    semantic: Tensor | float


def total_loss(parts: LossParts, config: LossConfig):
    """Weighted sum of the four objectives."""
    return (parts.classification
            + config.lambda_attp * parts.attribute_prototype
            + config.lambda_attf * parts.attribute_feature
            + config.lambda_sem * parts.semantic)
