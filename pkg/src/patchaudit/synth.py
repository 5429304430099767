"""Synthetic labeled corpora with controllable, known defects.

Each image is a per-class mean color plus i.i.d. clamped Gaussian noise.
Optional per-class defects mirror the failure modes the detectors hunt:
JPEG compression at a chosen quality, and forcing the blue channel of a
chosen fraction of pixels to 255. Generation is bit-reproducible from
(spec, seed): image (class c, split s, index i) draws from
PCG64(SeedSequence([seed, c, s, i])) with s = 0 for train, 1 for test.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .corpus import CorpusManifest, ManifestEntry, write_manifest
from .errors import PatchAuditError
from .parallel import ordered_map
from .perturb import encode_jpeg, jpeg_recompress
from .corpus import LabeledImage

SPLIT_CODES = {"train": 0, "test": 1}


@dataclass
class SynthSpec:
    n_classes: int
    train_per_class: int
    test_per_class: int
    class_means: list[tuple[int, int, int]]
    width: int = 224
    height: int = 224
    noise_sigma: float = 20.0
    jpeg_quality: list[int | None] | None = None  # per class
    blue_clip_fraction: list[float] | None = None  # per class
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 1:
            raise ValueError("n_classes must be >= 1")
        if len(self.class_means) != self.n_classes:
            raise ValueError("class_means must have one RGB triple per class")
        for mean in self.class_means:
            if len(mean) != 3 or any(not 0 <= v <= 255 for v in mean):
                raise ValueError(f"class mean {mean!r} must be three bytes")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.jpeg_quality is not None:
            if len(self.jpeg_quality) != self.n_classes:
                raise ValueError("jpeg_quality must have one entry per class")
            for q in self.jpeg_quality:
                if q is not None and not 1 <= q <= 100:
                    raise ValueError(f"jpeg quality must be in [1, 100], got {q}")
        if self.blue_clip_fraction is not None:
            if len(self.blue_clip_fraction) != self.n_classes:
                raise ValueError("blue_clip_fraction must have one entry per class")
            for f in self.blue_clip_fraction:
                if not 0.0 <= f <= 1.0:
                    raise ValueError(f"clip fraction must be in [0, 1], got {f}")

    @property
    def class_names(self) -> list[str]:
        # zero-padded so lexicographic order equals index order
        return [f"class{i:02d}" for i in range(self.n_classes)]

    @classmethod
    def from_json(cls, path) -> "SynthSpec":
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise PatchAuditError(f"{path}: invalid JSON: {exc}") from None
        known = {
            "n_classes", "train_per_class", "test_per_class", "class_means",
            "width", "height", "noise_sigma", "jpeg_quality",
            "blue_clip_fraction", "seed",
        }
        unknown = set(doc) - known
        if unknown:
            raise PatchAuditError(f"{path}: unknown fields {sorted(unknown)}")
        try:
            return cls(**doc)
        except (TypeError, ValueError) as exc:
            raise PatchAuditError(f"{path}: {exc}") from None


def noise_patch(rng: np.random.Generator, mean_rgb, sigma: float,
                width: int, height: int) -> np.ndarray:
    """Mean color plus clamped Gaussian pixel noise, as (h, w, 3) uint8."""
    base = np.asarray(mean_rgb, dtype=np.float64)[None, None, :]
    noisy = base + rng.normal(0.0, sigma, (height, width, 3))
    return np.clip(np.rint(noisy), 0, 255).astype(np.uint8)


def _render(spec: SynthSpec, class_index: int, split: str, index: int):
    """Pixels and file extension for one image.

    A class's JPEG quality is realized as a plain JPEG file; when the class
    also injects clipping, the compression is baked in by an in-memory
    round-trip first so the clipped blue values survive exactly, and the
    file is written losslessly.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(
        [spec.seed, class_index, SPLIT_CODES[split], index])))
    px = noise_patch(rng, spec.class_means[class_index], spec.noise_sigma,
                     spec.width, spec.height)
    quality = spec.jpeg_quality[class_index] if spec.jpeg_quality else None
    clip = spec.blue_clip_fraction[class_index] if spec.blue_clip_fraction else None
    if quality is not None and clip is not None:
        stub = LabeledImage(pixels=px, label=class_index, split=split, source="synth")
        px = jpeg_recompress(stub, quality).pixels.copy()
    if clip is not None:
        n_pixels = spec.width * spec.height
        n_clip = int(round(clip * n_pixels))
        chosen = rng.choice(n_pixels, n_clip, replace=False)
        flat = px.reshape(-1, 3)
        flat[chosen, 2] = 255
    if quality is not None and clip is None:
        return px, ".jpg", quality
    return px, ".png", None


def generate_corpus(spec: SynthSpec, out_root, threads: int = 1) -> CorpusManifest:
    """Write the corpus tree under out_root and return its manifest.

    Layout: out_root/{train,test}/<class>/<split>_<index>.{png,jpg}, plus
    out_root/manifest.csv covering both splits. Deterministic given
    (spec, seed); regenerating into a fresh directory yields byte-identical
    files.
    """
    out_root = Path(out_root)
    try:
        out_root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise PatchAuditError(f"cannot create output root {out_root}: {exc}") from None
    jobs = []
    for split, per_class in (("train", spec.train_per_class),
                             ("test", spec.test_per_class)):
        for c in range(spec.n_classes):
            (out_root / split / spec.class_names[c]).mkdir(parents=True, exist_ok=True)
            for i in range(per_class):
                jobs.append((c, split, i))

    def render(job):
        c, split, i = job
        px, ext, quality = _render(spec, c, split, i)
        rel = f"{split}/{spec.class_names[c]}/{split}_{i:05d}{ext}"
        path = out_root / rel
        if ext == ".jpg":
            path.write_bytes(encode_jpeg(px, quality))
        else:
            Image.fromarray(px).save(path, format="PNG")
        return rel, c, split

    rendered = ordered_map(render, jobs, threads)
    entries = [ManifestEntry(path=rel, label=c, split=split)
               for rel, c, split in sorted(rendered, key=lambda r: (r[1], r[0]))]
    manifest = CorpusManifest(class_names=spec.class_names, entries=entries,
                              root=out_root)
    write_manifest(manifest, out_root / "manifest.csv")
    return manifest
