"""Inference by prototype swap and the per-class-averaged accuracy metrics.

At test time the prototype net re-embeds whichever class set is being
scored (unseen-only for the zero-shot setting, seen plus unseen for the
generalized setting); class normalization runs over exactly that set, so
the same class can map to different prototypes in the two settings.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import Dataset
from .losses import NORM_FLOOR, ZeroNormError
from .model import Model

EVAL_BATCH = 64


def harmonic_mean(acc_unseen: float, acc_seen: float) -> float:
    """2uv/(u+v); zero when both accuracies vanish."""
    if acc_unseen == 0 and acc_seen == 0:
        return 0.0
    return 2.0 * acc_unseen * acc_seen / (acc_unseen + acc_seen)


@dataclass
class MetricsReport:
    mode: str
    t1: float | None = None
    acc_unseen: float | None = None
    acc_seen: float | None = None
    acc_harmonic: float | None = None
    per_class: dict[int, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "T1": self.t1,
            "Acc_U": self.acc_unseen,
            "Acc_S": self.acc_seen,
            "Acc_H": self.acc_harmonic,
            "per_class": {str(k): v for k, v in sorted(self.per_class.items())},
        }


def predict(class_feature: np.ndarray, class_prototypes: np.ndarray) -> int:
    """Nearest prototype by cosine; ties break to the lowest index."""
    cf = np.asarray(class_feature, dtype=np.float64)
    cp = np.asarray(class_prototypes, dtype=np.float64)
    if cp.size == 0:
        raise ValueError("empty prototype set")
    n = np.linalg.norm(cf)
    if n == 0.0:
        raise ZeroNormError("class feature has zero norm")
    pn = np.linalg.norm(cp, axis=1)
    if np.any(pn == 0.0):
        raise ZeroNormError("class prototypes contain an exactly-zero vector")
    cos = cp @ cf / (np.maximum(pn, NORM_FLOOR) * max(n, NORM_FLOOR))
    return int(np.argmax(cos))


def build_eval_prototypes(model: Model, dataset: Dataset,
                          class_set: Sequence[int]) -> np.ndarray:
    """Prototypes for exactly ``class_set`` (normalization over that set)."""
    classes = list(class_set)
    if not classes:
        raise ValueError("empty class set")
    cs = dataset.semantics.class_semantics[classes]
    protos = model.prototypes(cs, dataset.semantics.attribute_semantics,
                              grad=False)
    return protos.class_prototypes.data


def _class_features(model: Model, dataset: Dataset,
                    sample_indices: Sequence[int]) -> np.ndarray:
    feats = []
    for start in range(0, len(sample_indices), EVAL_BATCH):
        chunk = sample_indices[start:start + EVAL_BATCH]
        images = np.stack([dataset.samples[i].image for i in chunk]).astype(np.float64)
        feats.append(model.extract(images, grad=False).class_feature.data)
    return np.concatenate(feats, axis=0)


def _per_class_accuracy(dataset: Dataset, classes: list[int],
                        prototypes: np.ndarray, model: Model
                        ) -> dict[int, float]:
    accs: dict[int, float] = {}
    for label in classes:
        idxs = dataset.indices(split="test", label=label)
        if not idxs:
            warnings.warn(f"class {label} has no test samples; excluded")
            continue
        feats = _class_features(model, dataset, idxs)
        hits = sum(classes[predict(f, prototypes)] == label for f in feats)
        accs[label] = hits / len(idxs)
    return accs


def evaluate(model: Model, dataset: Dataset, mode: str) -> MetricsReport:
    """Score the test split; accuracies are averaged per class, not per sample."""
    if mode not in ("zsl", "gzsl"):
        raise ValueError(f"unknown evaluation mode {mode!r}")
    unseen = sorted(dataset.unseen_classes)
    if mode == "zsl":
        prototypes = build_eval_prototypes(model, dataset, unseen)
        per_class = _per_class_accuracy(dataset, unseen, prototypes, model)
        t1 = float(np.mean(list(per_class.values()))) if per_class else 0.0
        return MetricsReport(mode="zsl", t1=t1, per_class=per_class)

    seen = sorted(dataset.seen_classes)
    joint = seen + unseen
    prototypes = build_eval_prototypes(model, dataset, joint)
    per_class = _per_class_accuracy(dataset, joint, prototypes, model)
    seen_accs = [per_class[c] for c in seen if c in per_class]
    unseen_accs = [per_class[c] for c in unseen if c in per_class]
    acc_s = float(np.mean(seen_accs)) if seen_accs else 0.0
    acc_u = float(np.mean(unseen_accs)) if unseen_accs else 0.0
    return MetricsReport(
        mode="gzsl",
        acc_unseen=acc_u,
        acc_seen=acc_s,
        acc_harmonic=harmonic_mean(acc_u, acc_s),
        per_class=per_class,
    )
