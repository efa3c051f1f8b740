"""Attention inspection: per-channel PNG maps plus a peaks sidecar."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from . import kernels
from .dataset import Dataset
from .features import attention_peaks, softmax2d
from .model import Model


def export_attention(model: Model, dataset: Dataset, image_index: int,
                     outdir) -> list[Path]:
    """Write K grayscale attention maps and a JSON of raw channel peaks.

    Each softmaxed channel is bilinearly resized to image resolution and
    min-max rescaled to [0, 255].
    """
    if not 0 <= image_index < len(dataset.samples):
        raise IndexError(f"image index {image_index} out of range "
                         f"[0, {len(dataset.samples)})")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    sample = dataset.samples[image_index]
    image = sample.image.astype(np.float64)[None]
    bundle = model.extract(image, grad=False)
    raw = bundle.attention.data
    soft = softmax2d(bundle.attention).data
    size = image.shape[1:3]

    written = []
    k = raw.shape[3]
    for j in range(k):
        channel = soft[:, :, :, j:j + 1]
        up = kernels.bilinear_resize(channel, size[0], size[1])[0, :, :, 0]
        lo, hi = up.min(), up.max()
        scaled = np.zeros_like(up) if hi == lo else (up - lo) / (hi - lo)
        png = outdir / f"image{image_index:05d}_attr{j:03d}.png"
        Image.fromarray((scaled * 255).round().astype(np.uint8), mode="L").save(png)
        written.append(png)

    peaks = attention_peaks(raw)[0]
    sidecar = outdir / f"image{image_index:05d}_peaks.json"
    with open(sidecar, "w") as fh:
        json.dump({"image_index": image_index, "label": int(sample.label),
                   "peaks": [float(p) for p in peaks]}, fh, indent=1,
                  sort_keys=True)
        fh.write("\n")
    written.append(sidecar)
    return written
