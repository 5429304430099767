import numpy as np
import pytest
from PIL import Image

from patchaudit.corpus import LabeledImage


def make_image(pixels, label=0, split="train", source="test") -> LabeledImage:
    return LabeledImage(pixels=np.asarray(pixels, dtype=np.uint8), label=label,
                        split=split, source=source)


def solid_image(rgb, width=16, height=16, **kw) -> LabeledImage:
    px = np.empty((height, width, 3), dtype=np.uint8)
    px[:, :] = rgb
    return make_image(px, **kw)


def random_image(rng, width=16, height=16, **kw) -> LabeledImage:
    return make_image(rng.integers(0, 256, (height, width, 3), dtype=np.uint8), **kw)


def write_png(path, pixels) -> None:
    Image.fromarray(np.asarray(pixels, dtype=np.uint8)).save(path, format="PNG")


@pytest.fixture
def tiny_corpus(tmp_path):
    """Two-class directory tree with two solid-color PNGs per class."""
    rows = {
        "ADI": [(200, 150, 150), (210, 160, 160)],
        "BACK": [(40, 40, 90), (45, 45, 95)],
    }
    root = tmp_path / "corpus"
    for name, colors in rows.items():
        (root / name).mkdir(parents=True)
        for i, rgb in enumerate(colors):
            px = np.empty((8, 8, 3), dtype=np.uint8)
            px[:, :] = rgb
            write_png(root / name / f"img{i}.png", px)
    return root
