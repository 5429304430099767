"""Robustness perturbations: JPEG re-encoding sweeps and hue rotation.

Perturbations act on decoded pixels and never touch source files. The JPEG
codec is pinned to baseline encoding with 4:2:0 chroma subsampling so
sweeps are reproducible. Hue deltas are degrees on the 0-360 circle.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .corpus import CorpusManifest, LabeledImage, load_image
from .errors import ImageDecodeError, PatchAuditError
from .features import FeatureTable, make_extractor
from .parallel import ordered_map

log = logging.getLogger(__name__)

DEFAULT_JPEG_QUALITIES = (80, 60, 40, 20)
DEFAULT_HUE_DELTAS = (-10.0, 10.0, -20.0, 20.0)


@dataclass
class PerturbationSpec:
    jpeg_qualities: tuple[int, ...] = DEFAULT_JPEG_QUALITIES
    hue_deltas: tuple[float, ...] = DEFAULT_HUE_DELTAS

    def __post_init__(self):
        for q in self.jpeg_qualities:
            if not 1 <= q <= 100:
                raise ValueError(f"jpeg quality must be in [1, 100], got {q}")
        for d in self.hue_deltas:
            if not np.isfinite(d):
                raise ValueError(f"hue delta must be finite, got {d}")

    def ids(self) -> list[str]:
        return [f"jpeg_q{q}" for q in self.jpeg_qualities] + [
            f"hue{d:+g}" for d in self.hue_deltas
        ]


def encode_jpeg(pixels: np.ndarray, quality: int) -> bytes:
    """Encode 8-bit RGB pixels as a baseline 4:2:0 JPEG byte string."""
    if not 1 <= quality <= 100:
        raise ValueError(f"jpeg quality must be in [1, 100], got {quality}")
    buf = io.BytesIO()
    Image.fromarray(pixels).save(buf, format="JPEG", quality=quality, subsampling=2)
    return buf.getvalue()


def jpeg_recompress(image: LabeledImage, quality: int) -> LabeledImage:
    """Round-trip the image through the pinned JPEG codec at the given quality."""
    try:
        data = encode_jpeg(image.pixels, quality)
        with Image.open(io.BytesIO(data)) as im:
            out = np.asarray(im.convert("RGB"))
    except ValueError:
        raise
    except Exception as exc:
        raise ImageDecodeError(image.source, f"jpeg round-trip failed: {exc}") from None
    return LabeledImage(pixels=np.ascontiguousarray(out), label=image.label,
                        split=image.split, source=image.source)


def _rgb_to_hue_sv(px: np.ndarray):
    """Hexcone RGB -> (hue degrees in [0, 360), saturation, value), float64."""
    r, g, b = px[..., 0], px[..., 1], px[..., 2]
    maxc = np.max(px, axis=-1)
    minc = np.min(px, axis=-1)
    vrange = maxc - minc
    sat = np.divide(vrange, maxc, out=np.zeros_like(maxc), where=maxc > 0)
    safe = np.where(vrange > 0, vrange, 1.0)
    rc = (maxc - r) / safe
    gc = (maxc - g) / safe
    bc = (maxc - b) / safe
    hue = np.select(
        [r == maxc, g == maxc],
        [bc - gc, 2.0 + rc - bc],
        default=4.0 + gc - rc,
    )
    hue = (hue / 6.0) % 1.0 * 360.0
    return hue, sat, maxc


def _hue_sv_to_rgb(hue: np.ndarray, sat: np.ndarray, val: np.ndarray) -> np.ndarray:
    h6 = (hue % 360.0) / 60.0
    i = np.floor(h6).astype(np.int64) % 6  # guard h6 == 6.0 after float mod
    f = h6 - np.floor(h6)
    p = val * (1.0 - sat)
    q = val * (1.0 - sat * f)
    t = val * (1.0 - sat * (1.0 - f))
    r = np.choose(i, [val, q, p, p, t, val])
    g = np.choose(i, [t, val, val, q, p, p])
    b = np.choose(i, [p, p, t, val, val, q])
    return np.stack([r, g, b], axis=-1)


def hue_shift(image: LabeledImage, delta_degrees: float) -> LabeledImage:
    """Rotate every pixel's hue by delta degrees, keeping saturation and value.

    Zero-saturation pixels have no defined hue and keep their RGB bytes
    unchanged. Output channels are rounded to nearest and clamped to [0, 255].
    """
    if not np.isfinite(delta_degrees):
        raise ValueError(f"hue delta must be finite, got {delta_degrees}")
    px = image.pixels.astype(np.float64) / 255.0
    hue, sat, val = _rgb_to_hue_sv(px)
    rgb = _hue_sv_to_rgb(hue + delta_degrees, sat, val)
    out = np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)
    gray = sat == 0.0
    out[gray] = image.pixels[gray]
    return LabeledImage(pixels=out, label=image.label, split=image.split,
                        source=image.source)


def make_perturbation(perturbation_id: str):
    """Resolve a perturbation id to an image transform."""
    if perturbation_id == "base":
        return lambda img: img
    if perturbation_id.startswith("jpeg_q"):
        quality = int(perturbation_id[len("jpeg_q"):])
        return lambda img: jpeg_recompress(img, quality)
    if perturbation_id.startswith("hue"):
        delta = float(perturbation_id[len("hue"):])
        return lambda img: hue_shift(img, delta)
    raise ValueError(f"unknown perturbation id {perturbation_id!r}")


@dataclass
class RobustnessRow:
    perturbation: str
    accuracy: float
    balanced_accuracy: float
    delta_accuracy: float
    failures: int


@dataclass
class RobustnessTable:
    rows: list[RobustnessRow]

    @property
    def base(self) -> RobustnessRow:
        return self.rows[0]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write("perturbation,accuracy,balanced_accuracy,delta_accuracy\n")
            for r in self.rows:
                fh.write(
                    f"{r.perturbation},{repr(r.accuracy)},"
                    f"{repr(r.balanced_accuracy)},{repr(r.delta_accuracy)}\n"
                )

    def to_dict(self) -> dict:
        return {
            "rows": [
                {
                    "perturbation": r.perturbation,
                    "accuracy": r.accuracy,
                    "balanced_accuracy": r.balanced_accuracy,
                    "delta_accuracy": r.delta_accuracy,
                    "failures": r.failures,
                }
                for r in self.rows
            ]
        }


def robustness_sweep(
    model,
    manifest: CorpusManifest,
    extractor: str,
    spec: PerturbationSpec | None = None,
    bins: int = 16,
    threads: int = 1,
) -> RobustnessTable:
    """Accuracy of the model on perturbed copies of the manifest's images.

    The base row evaluates unperturbed images; every other row perturbs
    each image, re-extracts features with the same extractor, and
    re-evaluates. Deltas are exactly accuracy minus base accuracy.
    Per-image failures are counted per row, not fatal.
    """
    from .classify.metrics import evaluate

    spec = spec or PerturbationSpec()
    schema, fn = make_extractor(extractor, bins)
    if model.schema != schema:
        raise ValueError(
            f"model schema {model.schema!r} does not match extractor schema {schema!r}"
        )

    def run(perturbation_id: str) -> RobustnessRow:
        transform = make_perturbation(perturbation_id)

        def worker(entry):
            try:
                return fn(transform(load_image(manifest, entry))), None
            except PatchAuditError as exc:
                return None, str(exc)

        results = ordered_map(worker, manifest.entries, threads)
        rows, labels, splits = [], [], []
        failures = 0
        for entry, (vec, err) in zip(manifest.entries, results):
            if err is not None:
                failures += 1
                log.warning("perturbation %s failed on %s: %s",
                            perturbation_id, entry.path, err)
                continue
            rows.append(vec)
            labels.append(entry.label)
            splits.append(entry.split)
        table = FeatureTable(
            schema=schema,
            class_names=list(manifest.class_names),
            labels=np.asarray(labels, dtype=np.int64),
            splits=splits,
            values=np.asarray(rows, dtype=np.float64),
        )
        result = evaluate(model, table)
        return RobustnessRow(
            perturbation=perturbation_id,
            accuracy=result.accuracy,
            balanced_accuracy=result.balanced_accuracy,
            delta_accuracy=0.0,
            failures=failures,
        )

    rows = [run("base")]
    for pid in spec.ids():
        rows.append(run(pid))
    base_acc = rows[0].accuracy
    for r in rows:
        r.delta_accuracy = r.accuracy - base_acc
    return RobustnessTable(rows=rows)
