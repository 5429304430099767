"""Shallow image descriptors and feature-table plumbing.

Two built-in extractors: per-channel mean intensity (3 features) and
per-channel color histograms (3 x bins features, normalized frequencies).
Externally computed descriptors of any dimension can be ingested from CSV
into the same table structure.
"""

from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass, field

import numpy as np

from .corpus import CorpusManifest, LabeledImage, load_image
from .errors import FeatureError, ImageDecodeError
from .parallel import ordered_map

log = logging.getLogger(__name__)

MEAN_RGB_SCHEMA = "mean-rgb-3"
EXTRACTORS = ("mean-rgb", "hist")

_HIST_RE = re.compile(r"^hist-3x(\d+)$")
_EXTERNAL_RE = re.compile(r"^external-(\d+)$")


def hist_schema(bins: int) -> str:
    return f"hist-3x{bins}"


def external_schema(dim: int) -> str:
    return f"external-{dim}"


def schema_dim(schema: str) -> int:
    """Feature dimension implied by a schema name."""
    if schema == MEAN_RGB_SCHEMA:
        return 3
    m = _HIST_RE.match(schema)
    if m:
        return 3 * int(m.group(1))
    m = _EXTERNAL_RE.match(schema)
    if m:
        return int(m.group(1))
    raise FeatureError(f"unknown feature schema {schema!r}")


@dataclass
class FeatureTable:
    """Rows of (label, split, feature vector) under one schema."""

    schema: str
    class_names: list[str]
    labels: np.ndarray  # (n,) int64
    splits: list[str]
    values: np.ndarray  # (n, dim) float64

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        n = self.labels.shape[0]
        if self.values.shape != (n, schema_dim(self.schema)):
            raise FeatureError(
                f"values shape {self.values.shape} does not match schema "
                f"{self.schema!r} over {n} rows"
            )
        if len(self.splits) != n:
            raise FeatureError("splits length does not match row count")
        if n and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise FeatureError("labels do not index the class list")
        if not np.all(np.isfinite(self.values)):
            raise FeatureError("feature values must be finite")

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def filter_split(self, split: str) -> FeatureTable:
        keep = [i for i, s in enumerate(self.splits) if s == split]
        return FeatureTable(
            schema=self.schema,
            class_names=list(self.class_names),
            labels=self.labels[keep],
            splits=[self.splits[i] for i in keep],
            values=self.values[keep],
        )


def mean_rgb(image: LabeledImage) -> np.ndarray:
    """Per-channel mean intensity in [0, 255].

    Channel sums are accumulated exactly in int64 and divided once, so the
    result is the true rational mean of the 8-bit samples.
    """
    px = image.pixels
    n = px.shape[0] * px.shape[1]
    sums = px.reshape(-1, 3).sum(axis=0, dtype=np.int64)
    return sums / float(n)


def color_histogram(image: LabeledImage, bins: int = 16) -> np.ndarray:
    """Concatenated R, G, B histograms of normalized frequencies.

    Value v lands in bin floor(v * bins / 256), so 255 always maps to the
    last bin. Each channel block sums to 1, making the descriptor invariant
    to patch size.
    """
    if bins < 1:
        raise ValueError(f"bins must be a positive integer, got {bins}")
    px = image.pixels.reshape(-1, 3).astype(np.int64)
    idx = (px * bins) >> 8  # exact floor(v * bins / 256)
    n = px.shape[0]
    out = np.empty(3 * bins, dtype=np.float64)
    for c in range(3):
        counts = np.bincount(idx[:, c], minlength=bins)
        out[c * bins:(c + 1) * bins] = counts / n
    return out


def make_extractor(extractor: str, bins: int = 16):
    """Resolve an extractor name to (schema, image -> vector function)."""
    if extractor == "mean-rgb":
        return MEAN_RGB_SCHEMA, mean_rgb
    if extractor == "hist":
        if bins < 1:
            raise ValueError(f"bins must be a positive integer, got {bins}")
        return hist_schema(bins), lambda img: color_histogram(img, bins)
    raise ValueError(f"extractor must be one of {EXTRACTORS}, got {extractor!r}")


def featurize_corpus(
    manifest: CorpusManifest,
    extractor: str = "mean-rgb",
    bins: int = 16,
    threads: int = 1,
    strict: bool = False,
) -> FeatureTable:
    """One feature row per manifest entry, in manifest order.

    Undecodable entries are skipped with a warning unless strict is set;
    the output is identical regardless of thread count.
    """
    schema, fn = make_extractor(extractor, bins)

    def worker(entry):
        try:
            return fn(load_image(manifest, entry)), None
        except ImageDecodeError as exc:
            if strict:
                raise
            return None, str(exc)

    results = ordered_map(worker, manifest.entries, threads)
    rows, labels, splits = [], [], []
    for entry, (vec, err) in zip(manifest.entries, results):
        if err is not None:
            log.warning("skipping %s: %s", entry.path, err)
            continue
        rows.append(vec)
        labels.append(entry.label)
        splits.append(entry.split)
    values = np.asarray(rows, dtype=np.float64) if rows else np.empty((0, schema_dim(schema)))
    return FeatureTable(
        schema=schema,
        class_names=list(manifest.class_names),
        labels=np.asarray(labels, dtype=np.int64),
        splits=splits,
        values=values,
    )


def write_feature_csv(table: FeatureTable, path) -> None:
    """Write a feature table as CSV with schema and class-list comments.

    Floats are rendered with shortest round-trip precision, so reading the
    file back reproduces every value bit-exactly.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# schema: {table.schema}\n")
        fh.write(f"# classes: {','.join(table.class_names)}\n")
        header = ["label", "split"] + [f"f{i}" for i in range(table.dim)]
        fh.write(",".join(header) + "\n")
        for i in range(len(table)):
            name = table.class_names[table.labels[i]]
            vals = ",".join(repr(float(v)) for v in table.values[i])
            fh.write(f"{name},{table.splits[i]},{vals}\n")


def _parse_feature_rows(path, class_names: list[str], dim: int, reader) -> tuple:
    labels, splits, rows = [], [], []
    for lineno, row in reader:
        if len(row) != dim + 2:
            raise FeatureError(
                f"{path}:{lineno}: expected {dim + 2} fields, got {len(row)}"
            )
        name, split = row[0], row[1]
        try:
            label = class_names.index(name)
        except ValueError:
            raise FeatureError(f"{path}:{lineno}: unknown label {name!r}") from None
        try:
            vec = np.array([float(v) for v in row[2:]], dtype=np.float64)
        except ValueError:
            raise FeatureError(f"{path}:{lineno}: non-numeric feature value") from None
        if not np.all(np.isfinite(vec)):
            raise FeatureError(f"{path}:{lineno}: non-finite feature value")
        labels.append(label)
        splits.append(split)
        rows.append(vec)
    return labels, splits, rows


def _read_csv_body(path):
    """Yield (lineno, row) for non-comment lines; return comments separately."""
    comments = {}
    body = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.rstrip("\n")
            if stripped.startswith("#"):
                text = stripped[1:].strip()
                key, _, value = text.partition(":")
                comments[key.strip()] = value.strip()
                continue
            if stripped:
                body.append((lineno, next(csv.reader([stripped]))))
    return comments, body


def read_feature_csv(path) -> FeatureTable:
    """Read a feature CSV written by write_feature_csv."""
    comments, body = _read_csv_body(path)
    if "schema" not in comments or "classes" not in comments:
        raise FeatureError(f"{path}: missing '# schema:' or '# classes:' comment")
    schema = comments["schema"]
    class_names = comments["classes"].split(",") if comments["classes"] else []
    dim = schema_dim(schema)
    if not body:
        raise FeatureError(f"{path}: missing header row")
    _, header = body[0]
    if header[:2] != ["label", "split"]:
        raise FeatureError(f"{path}: header must start with label,split")
    labels, splits, rows = _parse_feature_rows(path, class_names, dim, iter(body[1:]))
    values = np.asarray(rows) if rows else np.empty((0, dim))
    return FeatureTable(schema=schema, class_names=class_names,
                        labels=np.asarray(labels, dtype=np.int64),
                        splits=splits, values=values)


def load_external_features(csv_path, class_names: list[str]) -> FeatureTable:
    """Ingest an externally produced feature CSV of any dimension.

    The dimension is inferred from the f0..f{D-1} header columns; the
    schema and class comments are optional, but when a class comment is
    present it must match the expected class list. Ragged rows, non-finite
    values, and unknown labels raise with the offending row number.
    """
    comments, body = _read_csv_body(csv_path)
    if "classes" in comments:
        listed = comments["classes"].split(",")
        if listed != list(class_names):
            raise FeatureError(
                f"{csv_path}: class list {listed} does not match expected {list(class_names)}"
            )
    if not body:
        raise FeatureError(f"{csv_path}: missing header row")
    _, header = body[0]
    if len(header) < 3 or header[:2] != ["label", "split"]:
        raise FeatureError(f"{csv_path}: header must be label,split,f0,...")
    dim = len(header) - 2
    expected = [f"f{i}" for i in range(dim)]
    if header[2:] != expected:
        raise FeatureError(f"{csv_path}: feature columns must be named f0..f{dim - 1}")
    labels, splits, rows = _parse_feature_rows(csv_path, list(class_names), dim,
                                               iter(body[1:]))
    values = np.asarray(rows) if rows else np.empty((0, dim))
    return FeatureTable(schema=external_schema(dim), class_names=list(class_names),
                        labels=np.asarray(labels, dtype=np.int64),
                        splits=splits, values=values)
