"""Class-balanced episodic batch sampling from the seen training split."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset


class EpisodeError(ValueError):
    pass


@dataclass
class EpisodeBatch:
    images: np.ndarray  # (B, H, W, C)
    labels: np.ndarray  # (B,)
    n_way: int
    k_shot: int

    def __post_init__(self):
        b = self.images.shape[0]
        if b != self.n_way * self.k_shot or b != self.labels.shape[0]:
            raise EpisodeError("batch size must equal n_way * k_shot")
        values, counts = np.unique(self.labels, return_counts=True)
        if len(values) != self.n_way or np.any(counts != self.k_shot):
            raise EpisodeError("episode must hold n_way labels, k_shot each")


def sample_episode(dataset: Dataset, n_way: int, k_shot: int,
                   rng: np.random.Generator) -> EpisodeBatch:
    """Draw n_way seen classes without replacement, k_shot images each.

    Classes are drawn without replacement within the episode; across
    episodes draws are independent.  The caller owns ``rng`` and its state
    advances with every call.
    """
    seen = dataset.seen_classes
    if n_way > len(seen):
        raise EpisodeError(f"n_way={n_way} exceeds {len(seen)} seen classes")
    class_pick = rng.choice(len(seen), size=n_way, replace=False)
    images, labels = [], []
    for ci in class_pick:
        label = seen[ci]
        pool = dataset.indices(split="train", label=label)
        if len(pool) < k_shot:
            raise EpisodeError(
                f"class {label} has {len(pool)} training samples, "
                f"needs {k_shot}")
        for idx in rng.choice(len(pool), size=k_shot, replace=False):
            images.append(dataset.samples[pool[idx]].image)
            labels.append(label)
    return EpisodeBatch(
        images=np.stack(images).astype(np.float64),
        labels=np.asarray(labels, dtype=np.int64),
        n_way=n_way,
        k_shot=k_shot,
    )
