"""Dataset-defect detectors: color signatures, JPEG blockiness, clipping.

Three independent probes, each answering one question about a corpus:

* color_audit - do classes occupy distinct color distributions, and do the
  train and test distributions of a class disagree?
* blockiness / quality_band - does an image carry an 8x8 grid signature of
  heavy JPEG compression, and roughly how heavy?
* clipping_stats - what fraction of pixels saturate at 0 or 255, the
  footprint of mishandled dynamic range?

audit_corpus runs all three across a manifest and aggregates per class.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .corpus import CorpusManifest, LabeledImage, load_image
from .errors import ImageDecodeError
from .features import FeatureTable, color_histogram, mean_rgb
from .parallel import ordered_map

log = logging.getLogger(__name__)

BANDS = ("severe", "moderate", "minor", "none")
CALIBRATION_QUALITIES = (30, 60, 85)
BLOCKINESS_EPS = 1e-6


def blockiness(image: LabeledImage, grid: int = 8) -> float:
    """Grid-boundary vs interior luminance gradient ratio.

    On Y = 0.299 R + 0.587 G + 0.114 B, compares mean absolute differences
    across pixel pairs that straddle the grid (column pairs (x, x+1) with
    x = grid-1 mod grid, plus the symmetric row pairs) against the mean
    over all remaining adjacent pairs. A score near 1 means no grid
    signature; well above 1 means block boundaries are discontinuous
    relative to block interiors. Flat images score 0.
    """
    if grid < 1:
        raise ValueError(f"grid must be >= 1, got {grid}")
    if image.width < 2 * grid or image.height < 2 * grid:
        raise ValueError(
            f"image {image.width}x{image.height} is smaller than twice the "
            f"grid ({grid}) in some dimension"
        )
    px = image.pixels.astype(np.float64)
    lum = 0.299 * px[:, :, 0] + 0.587 * px[:, :, 1] + 0.114 * px[:, :, 2]
    dcol = np.abs(np.diff(lum, axis=1))  # index x holds the (x, x+1) pair
    drow = np.abs(np.diff(lum, axis=0))
    col_edge = (np.arange(image.width - 1) % grid) == grid - 1
    row_edge = (np.arange(image.height - 1) % grid) == grid - 1
    edge = dcol[:, col_edge].mean() + drow[row_edge, :].mean()
    interior = dcol[:, ~col_edge].mean() + drow[~row_edge, :].mean()
    return float(edge / (interior + BLOCKINESS_EPS))


@dataclass
class QualityCalibration:
    """Band boundaries fitted once to a synthetic recompression curve.

    The calibration corpus is recompressed at the reference qualities; band
    boundaries are midpoints between the median scores of adjacent arms
    (lossless and quality 85/60/30), ordered none < minor < moderate <
    severe. The constants travel with every report for auditability.
    """

    median_scores: dict[str, float]  # arm name -> median blockiness
    boundaries: dict[str, float]  # "minor", "moderate", "severe" lower bounds
    corpus: dict  # generation parameters of the calibration corpus

    def band_for_score(self, score: float) -> str:
        if score >= self.boundaries["severe"]:
            return "severe"
        if score >= self.boundaries["moderate"]:
            return "moderate"
        if score >= self.boundaries["minor"]:
            return "minor"
        return "none"

    def to_dict(self) -> dict:
        return {
            "median_scores": dict(self.median_scores),
            "boundaries": dict(self.boundaries),
            "corpus": dict(self.corpus),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "QualityCalibration":
        return cls(
            median_scores=dict(doc["median_scores"]),
            boundaries=dict(doc["boundaries"]),
            corpus=dict(doc["corpus"]),
        )


def calibrate_quality_bands(
    seed: int = 0,
    n_images: int = 48,
    size: int = 64,
    sigma: float = 8.0,
    grid: int = 8,
) -> QualityCalibration:
    """Fit quality-band boundaries on a synthetic recompression curve.

    Generates noisy solid-color patches, scores them lossless and after
    JPEG round-trips at the reference qualities, and places each band
    boundary at the midpoint of adjacent median scores.
    """
    from .perturb import jpeg_recompress
    from .synth import noise_patch

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed])))
    images = []
    for _ in range(n_images):
        mean = rng.integers(60, 200, 3)
        px = noise_patch(rng, mean, sigma, size, size)
        images.append(LabeledImage(pixels=px, label=0, split="train", source="calibration"))
    medians = {"lossless": float(np.median([blockiness(im, grid) for im in images]))}
    for q in CALIBRATION_QUALITIES:
        scores = [blockiness(jpeg_recompress(im, q), grid) for im in images]
        medians[f"q{q}"] = float(np.median(scores))
    q30, q60, q85 = (medians[f"q{q}"] for q in CALIBRATION_QUALITIES)
    boundaries = {
        "minor": (medians["lossless"] + q85) / 2.0,
        "moderate": (q85 + q60) / 2.0,
        "severe": (q60 + q30) / 2.0,
    }
    return QualityCalibration(
        median_scores=medians,
        boundaries=boundaries,
        corpus={
            "seed": seed,
            "n_images": n_images,
            "size": size,
            "noise_sigma": sigma,
            "grid": grid,
            "qualities": list(CALIBRATION_QUALITIES),
        },
    )


def quality_band(
    image: LabeledImage,
    calibration: QualityCalibration | None = None,
    grid: int = 8,
) -> str:
    """Band estimate of the image's JPEG compression severity."""
    if calibration is None:
        calibration = calibrate_quality_bands(grid=grid)
    return calibration.band_for_score(blockiness(image, grid))


@dataclass
class ClippingStats:
    """Per-channel saturation fractions for one image."""

    at_zero: np.ndarray  # (3,) fractions of pixels at value 0
    at_max: np.ndarray  # (3,) fractions of pixels at value 255
    corrupted: bool

    def to_dict(self) -> dict:
        return {
            "at_zero": [float(v) for v in self.at_zero],
            "at_max": [float(v) for v in self.at_max],
            "corrupted": self.corrupted,
        }


def clipping_stats(image: LabeledImage, saturation_threshold: float = 0.05) -> ClippingStats:
    """Exact fractions of pixels at 0 and 255 per channel.

    The corrupted flag is set when any channel's at-255 fraction reaches
    the threshold; saturation at the top of the range is the signature of
    an overflowed dynamic range clipped at save time.
    """
    if not 0.0 <= saturation_threshold <= 1.0:
        raise ValueError(f"saturation threshold must be in [0, 1], got {saturation_threshold}")
    px = image.pixels.reshape(-1, 3)
    n = px.shape[0]
    at_zero = (px == 0).sum(axis=0) / n
    at_max = (px == 255).sum(axis=0) / n
    return ClippingStats(
        at_zero=at_zero,
        at_max=at_max,
        corrupted=bool((at_max >= saturation_threshold).any()),
    )


@dataclass
class ColorAuditEntry:
    """Color summary of one class: centroid, average histogram, count."""

    class_index: int
    class_name: str
    centroid: np.ndarray  # (3,) mean-RGB in [0, 255]
    average_histogram: np.ndarray  # (3 * bins,) frequencies, each block sums to 1
    count: int

    def to_dict(self) -> dict:
        return {
            "class": self.class_name,
            "count": self.count,
            "centroid": [float(v) for v in self.centroid],
            "average_histogram": [float(v) for v in self.average_histogram],
        }


def histogram_l1(a: np.ndarray, b: np.ndarray) -> float:
    """L1 distance between concatenated channel histograms; range [0, 6]."""
    return float(np.abs(np.asarray(a) - np.asarray(b)).sum())


def _hist_bins(table: FeatureTable) -> int:
    if not table.schema.startswith("hist-3x"):
        raise ValueError(f"expected a histogram feature table, got schema {table.schema!r}")
    return table.dim // 3


def _bin_centers(bins: int) -> np.ndarray:
    # bin b covers [256b/bins, 256(b+1)/bins); midpoint capped into [0, 255]
    edges = 256.0 * np.arange(bins + 1) / bins
    return np.minimum((edges[:-1] + edges[1:]) / 2.0, 255.0)


def average_histograms(table: FeatureTable) -> dict[int, tuple[np.ndarray, int]]:
    """Per-class mean histogram and row count, for classes with rows."""
    out = {}
    for c in range(len(table.class_names)):
        mask = table.labels == c
        count = int(mask.sum())
        if count:
            out[c] = (table.values[mask].mean(axis=0), count)
    return out


@dataclass
class ColorAudit:
    entries: list[ColorAuditEntry]
    pairwise_distances: list[tuple[str, str, float]]
    train_test_shift: dict[str, float] | None

    def to_dict(self) -> dict:
        return {
            "classes": [e.to_dict() for e in self.entries],
            "pairwise_distances": [
                {"a": a, "b": b, "l1": d} for a, b, d in self.pairwise_distances
            ],
            "train_test_shift": self.train_test_shift,
        }


def color_audit(train: FeatureTable, test: FeatureTable | None = None) -> ColorAudit:
    """Class color signatures from histogram feature tables.

    Centroids here are estimated from histogram bin centers since the
    tables carry no raw pixels. Pairwise distances are L1 between class
    average histograms; with a test table, each class's train/test shift
    is the L1 between its two average histograms. Classes without rows are
    omitted with a warning.
    """
    bins = _hist_bins(train)
    if test is not None:
        if test.schema != train.schema:
            raise ValueError(
                f"train schema {train.schema!r} does not match test schema {test.schema!r}"
            )
        if list(test.class_names) != list(train.class_names):
            raise ValueError("train and test tables disagree on class names")
    centers = _bin_centers(bins)
    averages = average_histograms(train)
    entries = []
    for c in range(len(train.class_names)):
        if c not in averages:
            log.warning("class %s has no rows; omitted from color audit",
                        train.class_names[c])
            continue
        avg, count = averages[c]
        centroid = np.array([avg[ch * bins:(ch + 1) * bins] @ centers for ch in range(3)])
        entries.append(ColorAuditEntry(
            class_index=c,
            class_name=train.class_names[c],
            centroid=centroid,
            average_histogram=avg,
            count=count,
        ))
    pairwise = [
        (a.class_name, b.class_name,
         histogram_l1(a.average_histogram, b.average_histogram))
        for i, a in enumerate(entries)
        for b in entries[i + 1:]
    ]
    shift = None
    if test is not None:
        test_averages = average_histograms(test)
        shift = {}
        for e in entries:
            if e.class_index in test_averages:
                shift[e.class_name] = histogram_l1(
                    e.average_histogram, test_averages[e.class_index][0]
                )
    return ColorAudit(entries=entries, pairwise_distances=pairwise,
                      train_test_shift=shift)


@dataclass
class ClassBlockiness:
    class_name: str
    count: int
    min: float
    median: float
    max: float
    iqr: float
    band_counts: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "class": self.class_name,
            "count": self.count,
            "min": self.min,
            "median": self.median,
            "max": self.max,
            "iqr": self.iqr,
            "band_counts": dict(self.band_counts),
        }


@dataclass
class ClassClipping:
    class_name: str
    count: int
    flagged: int
    max_blue_at_max: float

    def to_dict(self) -> dict:
        return {
            "class": self.class_name,
            "count": self.count,
            "flagged": self.flagged,
            "max_blue_at_max": self.max_blue_at_max,
        }


@dataclass
class AuditReport:
    """Everything audit_corpus learned about one corpus."""

    class_names: list[str]
    n_images: int
    bins: int
    color: ColorAudit
    blockiness: list[ClassBlockiness]
    clipping: list[ClassClipping]
    blue_tail_mass: dict[str, float]
    calibration: QualityCalibration
    warnings: list[str]
    mean_features: FeatureTable | None = None  # per-image mean-RGB, for plotting

    def to_dict(self) -> dict:
        return {
            "summary": {
                "classes": list(self.class_names),
                "n_images": self.n_images,
                "histogram_bins": self.bins,
            },
            "color_audit": self.color.to_dict(),
            "blockiness": {
                "per_class": [b.to_dict() for b in self.blockiness],
                "calibration": self.calibration.to_dict(),
            },
            "clipping": {"per_class": [c.to_dict() for c in self.clipping]},
            "blue_tail_mass": dict(self.blue_tail_mass),
            "warnings": list(self.warnings),
        }


def audit_corpus(
    manifest: CorpusManifest,
    bins: int = 16,
    calibration: QualityCalibration | None = None,
    grid: int = 8,
    saturation_threshold: float = 0.05,
    threads: int = 1,
    strict: bool = False,
) -> AuditReport:
    """Run every detector over a manifest and aggregate per class.

    Centroids are exact per-class means of per-image mean-RGB features.
    The blue tail mass of a class is the fraction of its average blue
    histogram sitting in the top bin, the footprint of mass piled up at
    255 by clipping. Decode failures and too-small images are recorded as
    warnings unless strict.
    """
    if calibration is None:
        calibration = calibrate_quality_bands(grid=grid)

    def worker(entry):
        try:
            image = load_image(manifest, entry)
        except ImageDecodeError as exc:
            if strict:
                raise
            return None, f"skipping {entry.path}: {exc}"
        try:
            score = blockiness(image, grid)
        except ValueError as exc:
            score = None
            note = f"no blockiness for {entry.path}: {exc}"
        else:
            note = None
        return (
            mean_rgb(image),
            color_histogram(image, bins),
            score,
            clipping_stats(image, saturation_threshold),
        ), note

    results = ordered_map(worker, manifest.entries, threads)
    warnings = list(manifest.warnings)
    per_class: dict[int, dict] = {}
    kept = 0
    mean_rows, mean_labels, mean_splits = [], [], []
    for entry, (payload, note) in zip(manifest.entries, results):
        if note is not None:
            warnings.append(note)
            log.warning("%s", note)
        if payload is None:
            continue
        kept += 1
        mean_vec, hist_vec, score, clip = payload
        mean_rows.append(mean_vec)
        mean_labels.append(entry.label)
        mean_splits.append(entry.split)
        bucket = per_class.setdefault(entry.label, {
            "means": [], "hists": [], "scores": [], "flagged": 0, "blue_max": 0.0,
        })
        bucket["means"].append(mean_vec)
        bucket["hists"].append(hist_vec)
        if score is not None:
            bucket["scores"].append(score)
        if clip.corrupted:
            bucket["flagged"] += 1
        bucket["blue_max"] = max(bucket["blue_max"], float(clip.at_max[2]))

    entries: list[ColorAuditEntry] = []
    block_rows: list[ClassBlockiness] = []
    clip_rows: list[ClassClipping] = []
    tail_mass: dict[str, float] = {}
    for c, name in enumerate(manifest.class_names):
        if c not in per_class:
            warnings.append(f"class {name!r} has no decodable images")
            continue
        bucket = per_class[c]
        count = len(bucket["means"])
        avg_hist = np.mean(bucket["hists"], axis=0)
        entries.append(ColorAuditEntry(
            class_index=c,
            class_name=name,
            centroid=np.mean(bucket["means"], axis=0),
            average_histogram=avg_hist,
            count=count,
        ))
        tail_mass[name] = float(avg_hist[3 * bins - 1])
        scores = np.asarray(bucket["scores"])
        if scores.size:
            q1, q3 = np.percentile(scores, [25, 75])
            bands = [calibration.band_for_score(s) for s in scores]
            block_rows.append(ClassBlockiness(
                class_name=name,
                count=int(scores.size),
                min=float(scores.min()),
                median=float(np.median(scores)),
                max=float(scores.max()),
                iqr=float(q3 - q1),
                band_counts={b: bands.count(b) for b in BANDS},
            ))
        clip_rows.append(ClassClipping(
            class_name=name,
            count=count,
            flagged=bucket["flagged"],
            max_blue_at_max=bucket["blue_max"],
        ))

    pairwise = [
        (a.class_name, b.class_name,
         histogram_l1(a.average_histogram, b.average_histogram))
        for i, a in enumerate(entries)
        for b in entries[i + 1:]
    ]
    color = ColorAudit(entries=entries, pairwise_distances=pairwise,
                       train_test_shift=None)
    mean_table = FeatureTable(
        schema="mean-rgb-3",
        class_names=list(manifest.class_names),
        labels=np.asarray(mean_labels, dtype=np.int64),
        splits=mean_splits,
        values=np.asarray(mean_rows, dtype=np.float64) if mean_rows
        else np.empty((0, 3)),
    )
    return AuditReport(
        class_names=list(manifest.class_names),
        n_images=kept,
        bins=bins,
        color=color,
        blockiness=block_rows,
        clipping=clip_rows,
        blue_tail_mass=tail_mass,
        calibration=calibration,
        warnings=warnings,
        mean_features=mean_table,
    )


def train_test_shift(train_report: AuditReport, test_report: AuditReport) -> dict[str, float]:
    """Per-class L1 between train and test average histograms."""
    test_by_name = {e.class_name: e for e in test_report.color.entries}
    shift = {}
    for e in train_report.color.entries:
        other = test_by_name.get(e.class_name)
        if other is not None:
            shift[e.class_name] = histogram_l1(e.average_histogram,
                                               other.average_histogram)
    return shift


def write_histogram_csv(report: AuditReport, path) -> None:
    """Per-class average histograms as `class,channel,bin,frequency` rows."""
    bins = report.bins
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("class,channel,bin,frequency\n")
        for e in report.color.entries:
            for ch, channel in enumerate("RGB"):
                block = e.average_histogram[ch * bins:(ch + 1) * bins]
                for b, freq in enumerate(block):
                    fh.write(f"{e.class_name},{channel},{b},{repr(float(freq))}\n")
