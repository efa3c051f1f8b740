"""Dataset model and the synthetic compositional-attribute generator.

A synthetic class is a distinct subset of K shared attributes.  Every
active attribute is rendered as a fixed per-attribute texture glyph in a
fixed image cell, so attribute localization has exact ground truth and a
decoder script can recover each image's attribute set from pixels alone.
"""

from __future__ import annotations

import colorsys
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor_io

SEMANTICS_MODES = ("one-hot", "random", "random-orthogonal")


class DatasetError(ValueError):
    pass


def make_attribute_semantics(num_attributes: int, mode: str,
                             rng: np.random.Generator | None = None) -> np.ndarray:
    """Build the K x K attribute-semantics basis for the given mode."""
    k = num_attributes
    if mode == "one-hot":
        return np.eye(k)
    if rng is None:
        raise DatasetError(f"mode {mode!r} needs an rng")
    raw = rng.normal(0.0, 0.1, size=(k, k))
    if mode == "random":
        return raw
    if mode == "random-orthogonal":
        return _gram_schmidt_rows(raw)
    raise DatasetError(f"unknown attribute-semantics mode {mode!r}")


def _gram_schmidt_rows(a: np.ndarray) -> np.ndarray:
    out = a.astype(np.float64).copy()
    for i in range(out.shape[0]):
        for j in range(i):
            denom = out[j] @ out[j]
            out[i] -= (out[j] @ out[i]) / denom * out[j]
    return out


@dataclass
class SemanticsTable:
    """Class semantics (M x K, continuous >= 0) and attribute semantics (K x K)."""

    class_semantics: np.ndarray
    attribute_semantics: np.ndarray
    mode: str = "one-hot"

    def __post_init__(self):
        cs = np.asarray(self.class_semantics, dtype=np.float64)
        am = np.asarray(self.attribute_semantics, dtype=np.float64)
        if cs.ndim != 2 or am.ndim != 2 or am.shape[0] != am.shape[1]:
            raise DatasetError("semantics matrices must be 2-D, attribute one square")
        if cs.shape[1] != am.shape[0]:
            raise DatasetError("class and attribute semantics disagree on K")
        if np.any(cs < 0):
            raise DatasetError("class semantics must be non-negative")
        if np.any(~cs.any(axis=1)):
            raise DatasetError("every class must exhibit at least one attribute")
        if self.mode not in SEMANTICS_MODES:
            raise DatasetError(f"unknown semantics mode {self.mode!r}")
        if self.mode == "one-hot":
            off = am - np.diag(np.diag(am))
            if np.any(off != 0) or np.any(np.diag(am) == 0):
                raise DatasetError("one-hot attribute semantics must be diagonal")
        if self.mode == "random-orthogonal":
            gram = am @ am.T
            if np.max(np.abs(gram - np.diag(np.diag(gram)))) > 1e-6:
                raise DatasetError("random-orthogonal attribute semantics not orthogonal")
        self.class_semantics = cs
        self.attribute_semantics = am

    @property
    def num_classes(self) -> int:
        return self.class_semantics.shape[0]

    @property
    def num_attributes(self) -> int:
        return self.class_semantics.shape[1]


@dataclass
class Sample:
    image: np.ndarray  # (H, W, C) float32 in [0, 1], channels-last
    label: int
    split: str  # "train" | "test"


@dataclass
class Dataset:
    samples: list[Sample]
    seen_classes: list[int]
    unseen_classes: list[int]
    semantics: SemanticsTable
    glyph_grid: int = 0  # 0 when the glyph layout is unknown (external data)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        seen = set(self.seen_classes)
        unseen = set(self.unseen_classes)
        if seen & unseen:
            raise DatasetError("seen and unseen classes overlap")
        labels = {s.label for s in self.samples}
        if not labels <= (seen | unseen):
            raise DatasetError("sample labels outside the declared class sets")
        for s in self.samples:
            if s.split == "train" and s.label not in seen:
                raise DatasetError("training split contains an unseen-class sample")

    @property
    def num_classes(self) -> int:
        return self.semantics.num_classes

    @property
    def num_attributes(self) -> int:
        return self.semantics.num_attributes

    def indices(self, split: str | None = None, label: int | None = None) -> list[int]:
        return [i for i, s in enumerate(self.samples)
                if (split is None or s.split == split)
                and (label is None or s.label == label)]

    def glyph_region(self, attribute: int) -> tuple[int, int, int, int]:
        """(y0, y1, x0, x1) pixel bounds of an attribute's rendering cell."""
        if self.glyph_grid <= 0:
            raise DatasetError("dataset carries no glyph layout")
        size = self.samples[0].image.shape[0]
        cell = size // self.glyph_grid
        row, col = divmod(attribute, self.glyph_grid)
        return row * cell, (row + 1) * cell, col * cell, (col + 1) * cell


@dataclass
class SynthSpec:
    """Parameters of the synthetic generator; deterministic given seed."""

    n_seen: int
    n_unseen: int
    num_attributes: int
    images_per_class: int
    image_size: int = 64
    noise_std: float = 0.0
    seed: int = 0
    channels: int = 3
    seen_test_fraction: float = 0.2
    semantics_jitter: float = 0.0
    semantics_mode: str = "one-hot"


def _attribute_colors(k: int, channels: int) -> np.ndarray:
    """K well-separated base colors in [0, 1]^channels, away from the
    0.5 background level."""
    if channels >= 3:
        out = np.zeros((k, channels))
        for j in range(k):
            hue = j / k
            sat = 0.9 if j % 2 == 0 else 0.6
            val = 0.95 if j % 3 != 1 else 0.65
            out[j, :3] = colorsys.hsv_to_rgb(hue, sat, val)
            if channels > 3:
                out[j, 3:] = (j + 1) / (k + 1)
        return out
    # gray levels spread over both sides of the background
    low = np.linspace(0.05, 0.38, (k + 1) // 2)
    high = np.linspace(0.62, 0.95, k // 2)
    levels = np.empty(k)
    levels[0::2] = low
    levels[1::2] = high
    return np.repeat(levels[:, None], channels, axis=1)


def _draw_subsets(rng: np.random.Generator, k: int, count: int) -> list[frozenset]:
    """Distinct non-empty attribute subsets, one per class."""
    if 2 ** k < count:
        raise DatasetError(
            f"cannot construct {count} distinct attribute subsets from "
            f"{k} attributes (2^{k} < {count})")
    chosen: list[frozenset] = []
    taken: set[frozenset] = set()
    attempts = 0
    while len(chosen) < count and attempts < 200 * count:
        attempts += 1
        mask = rng.random(k) < 0.35
        if not mask.any():
            continue
        subset = frozenset(np.flatnonzero(mask).tolist())
        if subset in taken:
            continue
        taken.add(subset)
        chosen.append(subset)
    if len(chosen) < count:
        # dense regime: enumerate all non-empty subsets in a seeded order
        if k > 20:
            raise DatasetError("subset sampling failed to converge")
        universe = [frozenset(np.flatnonzero([(m >> b) & 1 for b in range(k)]).tolist())
                    for m in range(1, 2 ** k)]
        order = rng.permutation(len(universe))
        chosen = []
        taken = set()
        for idx in order:
            if universe[idx] not in taken:
                taken.add(universe[idx])
                chosen.append(universe[idx])
            if len(chosen) == count:
                break
        if len(chosen) < count:
            raise DatasetError(
                f"only {len(chosen)} distinct non-empty subsets exist for "
                f"{k} attributes, {count} classes requested")
    return chosen


def generate_synthetic(spec: SynthSpec) -> Dataset:
    """Render a compositional-attribute dataset; bit-identical given a seed."""
    total = spec.n_seen + spec.n_unseen
    if total < 2:
        raise DatasetError("need at least two classes")
    if spec.num_attributes < 4:
        raise DatasetError("need at least four attributes")
    grid = math.ceil(math.sqrt(spec.num_attributes))
    cell = spec.image_size // grid
    if cell < 4:
        raise DatasetError(
            f"image_size {spec.image_size} too small to place "
            f"{spec.num_attributes} glyph cells (cell would be {cell}px)")

    rng = np.random.default_rng(spec.seed)
    subsets = _draw_subsets(rng, spec.num_attributes, total)

    class_semantics = np.zeros((total, spec.num_attributes))
    for i, subset in enumerate(subsets):
        class_semantics[i, sorted(subset)] = 1.0
    if spec.semantics_jitter > 0:
        class_semantics += rng.uniform(-spec.semantics_jitter, spec.semantics_jitter,
                                       class_semantics.shape)
        class_semantics = np.clip(class_semantics, 0.0, None)
        class_semantics[~class_semantics.any(axis=1), 0] = spec.semantics_jitter

    attribute_semantics = make_attribute_semantics(
        spec.num_attributes, spec.semantics_mode, rng)
    semantics = SemanticsTable(class_semantics, attribute_semantics,
                               spec.semantics_mode)

    # One fixed glyph per attribute: a distinct base color (evenly spread
    # hues, or spread gray levels for non-RGB data) plus a fixed texture,
    # rendered on a 0.5 background.  A model that centers its inputs sees
    # signed glyph signatures on an exactly-zero background.
    colors = _attribute_colors(spec.num_attributes, spec.channels)
    glyphs = [np.clip(colors[j] + rng.uniform(-0.1, 0.1,
                                              size=(cell - 2, cell - 2,
                                                    spec.channels)),
                      0.0, 1.0)
              for j in range(spec.num_attributes)]

    n_test_seen = int(spec.images_per_class * spec.seen_test_fraction)
    samples: list[Sample] = []
    for label, subset in enumerate(subsets):
        is_seen = label < spec.n_seen
        for r in range(spec.images_per_class):
            img = np.full((spec.image_size, spec.image_size, spec.channels), 0.5)
            for j in sorted(subset):
                row, col = divmod(j, grid)
                y0, x0 = row * cell + 1, col * cell + 1
                img[y0:y0 + cell - 2, x0:x0 + cell - 2, :] = glyphs[j]
            if spec.noise_std > 0:
                img += rng.normal(0.0, spec.noise_std, img.shape)
                img = np.clip(img, 0.0, 1.0)
            if is_seen:
                split = "test" if r >= spec.images_per_class - n_test_seen else "train"
            else:
                split = "test"
            samples.append(Sample(img.astype(np.float32), label, split))

    return Dataset(
        samples=samples,
        seen_classes=list(range(spec.n_seen)),
        unseen_classes=list(range(spec.n_seen, total)),
        semantics=semantics,
        glyph_grid=grid,
        meta={"spec": vars(spec).copy()},
    )


# -- on-disk layout: manifest.json + semantics CSVs + per-sample tensors ------

def _save_csv(path: Path, matrix: np.ndarray) -> None:
    with open(path, "w") as fh:
        for row in matrix:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")


def _load_csv(path: Path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(v) for v in line.split(",")])
    return np.asarray(rows, dtype=np.float64)


def write_dataset(dataset: Dataset, outdir) -> None:
    outdir = Path(outdir)
    (outdir / "samples").mkdir(parents=True, exist_ok=True)
    _save_csv(outdir / "class_semantics.csv", dataset.semantics.class_semantics)
    _save_csv(outdir / "attribute_semantics.csv",
              dataset.semantics.attribute_semantics)
    entries = []
    for i, s in enumerate(dataset.samples):
        rel = f"samples/sample_{i:05d}.coar"
        tensor_io.write_tensor(outdir / rel, s.image)
        entries.append({"path": rel, "label": int(s.label), "split": s.split})
    manifest = {
        "num_classes": dataset.num_classes,
        "num_attributes": dataset.num_attributes,
        "seen_classes": [int(c) for c in dataset.seen_classes],
        "unseen_classes": [int(c) for c in dataset.unseen_classes],
        "semantics_mode": dataset.semantics.mode,
        "class_semantics": "class_semantics.csv",
        "attribute_semantics": "attribute_semantics.csv",
        "glyph_grid": dataset.glyph_grid,
        "meta": dataset.meta,
        "samples": entries,
    }
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_dataset(path) -> Dataset:
    root = Path(path)
    try:
        with open(root / "manifest.json") as fh:
            manifest = json.load(fh)
    except FileNotFoundError:
        raise DatasetError(f"{path}: not a dataset directory (no manifest.json)")
    semantics = SemanticsTable(
        _load_csv(root / manifest["class_semantics"]),
        _load_csv(root / manifest["attribute_semantics"]),
        manifest["semantics_mode"],
    )
    samples = [
        Sample(tensor_io.read_tensor(root / e["path"]), int(e["label"]), e["split"])
        for e in manifest["samples"]
    ]
    return Dataset(
        samples=samples,
        seen_classes=[int(c) for c in manifest["seen_classes"]],
        unseen_classes=[int(c) for c in manifest["unseen_classes"]],
        semantics=semantics,
        glyph_grid=int(manifest.get("glyph_grid", 0)),
        meta=manifest.get("meta", {}),
    )
