"""Corpus ingestion: directory-per-class scanning, manifests, image decoding.

A corpus is a directory whose immediate subdirectories are class names and
whose files are image patches (TIFF, JPEG, or PNG). Scanning produces a
manifest, the unit every other module consumes. Decoding normalizes all
sources to 8-bit RGB so downstream statistics are always defined over the
0-255 range: grayscale is replicated across channels, alpha is dropped, and
16-bit samples are right-shifted to 8 bits.
"""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import CorpusError, ImageDecodeError

log = logging.getLogger(__name__)

IMAGE_EXTENSIONS = {".tif", ".tiff", ".jpg", ".jpeg", ".png"}
SPLITS = ("train", "test")

MANIFEST_HEADER = ["path", "label", "split"]


@dataclass
class LabeledImage:
    """An 8-bit RGB patch with its class label, split tag, and origin."""

    pixels: np.ndarray  # (height, width, 3) uint8, row-major
    label: int
    split: str
    source: str

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3 or px.dtype != np.uint8:
            raise ValueError(
                f"pixels must be (height, width, 3) uint8, got shape "
                f"{px.shape} dtype {px.dtype}"
            )
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image must have positive width and height")
        self.pixels = px

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class ManifestEntry:
    path: str  # POSIX-style, relative to the manifest root
    label: int
    split: str


@dataclass
class CorpusManifest:
    """Ordered class list plus one (path, label, split) row per image.

    Class order is lexicographic over directory names so label indices are
    reproducible across machines. Entries are sorted by (label, path).
    """

    class_names: list[str]
    entries: list[ManifestEntry]
    root: Path
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.root = Path(self.root)
        if len(set(self.class_names)) != len(self.class_names):
            raise CorpusError("duplicate class names in manifest")
        for name in self.class_names:
            if "," in name or "\n" in name:
                raise CorpusError(f"class name {name!r} may not contain ',' or newline")
        seen = set()
        for e in self.entries:
            if not 0 <= e.label < len(self.class_names):
                raise CorpusError(
                    f"label {e.label} out of range for {len(self.class_names)} classes"
                )
            if e.split not in SPLITS:
                raise CorpusError(f"unknown split {e.split!r} for {e.path}")
            if e.path in seen:
                raise CorpusError(f"duplicate path in manifest: {e.path}")
            seen.add(e.path)

    def __len__(self) -> int:
        return len(self.entries)

    def absolute_path(self, entry: ManifestEntry) -> Path:
        return self.root / Path(entry.path)


def scan_corpus(root: str | Path, split: str = "train") -> CorpusManifest:
    """Scan a directory-per-class tree into a manifest.

    Immediate subdirectories of root become classes, ordered
    lexicographically; recognized image files inside each become entries,
    all tagged with the given split. Empty class directories are recorded
    as warnings, not errors. Identical directory contents always produce
    identical manifests.
    """
    root = Path(root)
    if not root.is_dir():
        raise CorpusError(f"corpus root does not exist: {root}")
    if split not in SPLITS:
        raise CorpusError(f"split must be one of {SPLITS}, got {split!r}")
    class_names = sorted(p.name for p in root.iterdir() if p.is_dir())
    entries: list[ManifestEntry] = []
    warnings: list[str] = []
    for label, name in enumerate(class_names):
        files = sorted(
            p.name
            for p in (root / name).iterdir()
            if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
        )
        if not files:
            warnings.append(f"class directory {name!r} contains no image files")
        entries.extend(
            ManifestEntry(path=f"{name}/{f}", label=label, split=split) for f in files
        )
    return CorpusManifest(class_names=class_names, entries=entries, root=root,
                          warnings=warnings)


def decode_pixels(path: str | Path) -> np.ndarray:
    """Decode an image file to a (height, width, 3) uint8 RGB array."""
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("I;16", "I;16B", "I;16L", "I;16N", "I"):
                wide = np.asarray(im, dtype=np.uint32)
                arr = np.clip(wide >> 8, 0, 255).astype(np.uint8)
            elif mode == "L":
                arr = np.asarray(im)
            elif mode == "LA":
                arr = np.asarray(im)[:, :, 0]
            elif mode == "RGB":
                arr = np.asarray(im)
            elif mode == "RGBA":
                arr = np.asarray(im)[:, :, :3]
            else:
                arr = np.asarray(im.convert("RGB"))
    except ImageDecodeError:
        raise
    except Exception as exc:  # PIL raises a zoo of types for corrupt files
        raise ImageDecodeError(path, str(exc)) from None
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
        raise ImageDecodeError(path, f"unsupported decoded shape {arr.shape} {arr.dtype}")
    return np.ascontiguousarray(arr)


def load_image(manifest: CorpusManifest, entry: ManifestEntry) -> LabeledImage:
    """Decode one manifest entry. Pure per entry; safe to call from many
    threads, and results do not depend on load order."""
    path = manifest.absolute_path(entry)
    return LabeledImage(
        pixels=decode_pixels(path),
        label=entry.label,
        split=entry.split,
        source=str(path),
    )


def write_manifest(manifest: CorpusManifest, out_path: str | Path) -> None:
    """Write the manifest CSV.

    Format: a `# classes:` comment naming the sorted class list, optional
    `# warning:` comments, a `path,label,split` header, then one row per
    entry with label spelled as the class NAME and path relative to the
    manifest file's directory.
    """
    out_path = Path(out_path)
    out_dir = out_path.parent.resolve()
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# classes: {','.join(manifest.class_names)}\n")
        for w in manifest.warnings:
            fh.write(f"# warning: {w}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        root = manifest.root.resolve()
        for e in manifest.entries:
            rel = os.path.relpath(root / e.path, start=out_dir)
            writer.writerow([rel.replace(os.sep, "/"), manifest.class_names[e.label], e.split])


def read_manifest(path: str | Path) -> CorpusManifest:
    """Read a manifest CSV written by write_manifest.

    The manifest root becomes the CSV file's directory. Malformed rows
    raise CorpusError naming the line number.
    """
    path = Path(path)
    class_names: list[str] | None = None
    warnings: list[str] = []
    entries: list[ManifestEntry] = []
    header_seen = False
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.rstrip("\n")
            if stripped.startswith("#"):
                body = stripped[1:].strip()
                if body.startswith("classes:"):
                    listing = body[len("classes:"):].strip()
                    class_names = listing.split(",") if listing else []
                elif body.startswith("warning:"):
                    warnings.append(body[len("warning:"):].strip())
                continue
            if not stripped:
                continue
            row = next(csv.reader([stripped]))
            if not header_seen:
                if row != MANIFEST_HEADER:
                    raise CorpusError(
                        f"{path}:{lineno}: expected header {','.join(MANIFEST_HEADER)}"
                    )
                header_seen = True
                continue
            if class_names is None:
                raise CorpusError(f"{path}: missing '# classes:' line before rows")
            if len(row) != 3:
                raise CorpusError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            rel, label_name, split = row
            try:
                label = class_names.index(label_name)
            except ValueError:
                raise CorpusError(
                    f"{path}:{lineno}: unknown class name {label_name!r}"
                ) from None
            if split not in SPLITS:
                raise CorpusError(f"{path}:{lineno}: unknown split {split!r}")
            entries.append(ManifestEntry(path=rel, label=label, split=split))
    if class_names is None:
        raise CorpusError(f"{path}: missing '# classes:' line")
    if not header_seen:
        raise CorpusError(f"{path}: missing header row")
    return CorpusManifest(class_names=class_names, entries=entries,
                          root=path.parent, warnings=warnings)
