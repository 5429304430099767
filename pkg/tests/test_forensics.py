import numpy as np
import pytest

from patchaudit.corpus import scan_corpus
from patchaudit.features import FeatureTable, color_histogram, featurize_corpus, hist_schema
from patchaudit.forensics import (
    audit_corpus,
    blockiness,
    calibrate_quality_bands,
    clipping_stats,
    color_audit,
    histogram_l1,
    quality_band,
    train_test_shift,
    write_histogram_csv,
)
from patchaudit.perturb import jpeg_recompress
from patchaudit.synth import SynthSpec, generate_corpus, noise_patch

from conftest import make_image, random_image, solid_image


@pytest.fixture(scope="module")
def calibration():
    return calibrate_quality_bands(seed=0, n_images=24)


def hist_table(images, class_names, bins=16, split="train"):
    return FeatureTable(
        schema=hist_schema(bins),
        class_names=class_names,
        labels=np.array([img.label for img in images]),
        splits=[split] * len(images),
        values=np.array([color_histogram(img, bins) for img in images]),
    )


# ---------------------------------------------------------------- color audit

def test_color_audit_solid_red_vs_blue_l1():
    reds = [solid_image((255, 0, 0), label=0) for _ in range(3)]
    blues = [solid_image((0, 0, 255), label=1) for _ in range(3)]
    audit = color_audit(hist_table(reds + blues, ["red", "blue"]))
    assert len(audit.entries) == 2
    (a, b, dist), = audit.pairwise_distances
    assert (a, b) == ("red", "blue")
    # R and B blocks each contribute 2.0; G blocks agree (all mass in bin 0)
    assert dist == 4.0


def test_color_audit_identical_tables_zero_shift():
    rng = np.random.default_rng(20)
    images = [random_image(rng, label=i % 2) for i in range(6)]
    table = hist_table(images, ["a", "b"])
    audit = color_audit(table, table)
    assert set(audit.train_test_shift) == {"a", "b"}
    assert all(v == 0.0 for v in audit.train_test_shift.values())


def test_color_audit_single_class_no_pairs():
    images = [solid_image((9, 9, 9), label=0)]
    audit = color_audit(hist_table(images, ["only"]))
    assert audit.pairwise_distances == []


def test_color_audit_empty_class_omitted():
    images = [solid_image((9, 9, 9), label=0)]
    audit = color_audit(hist_table(images, ["present", "absent"]))
    assert [e.class_name for e in audit.entries] == ["present"]


def test_color_audit_l1_metric_properties():
    rng = np.random.default_rng(21)
    hists = [color_histogram(random_image(rng)) for _ in range(3)]
    a, b, c = hists
    assert histogram_l1(a, a) == 0.0
    assert histogram_l1(a, b) == histogram_l1(b, a)
    assert histogram_l1(a, b) > 0.0
    assert histogram_l1(a, c) <= histogram_l1(a, b) + histogram_l1(b, c) + 1e-12


def test_color_audit_schema_mismatch():
    imgs = [solid_image((1, 2, 3), label=0), solid_image((3, 2, 1), label=1)]
    with pytest.raises(ValueError, match="schema"):
        color_audit(hist_table(imgs, ["a", "b"], bins=16),
                    hist_table(imgs, ["a", "b"], bins=8))


# ----------------------------------------------------------------- blockiness

def test_blockiness_solid_is_zero():
    assert blockiness(solid_image((80, 90, 100), 32, 32)) == 0.0


def test_blockiness_constant_tiles_huge():
    # distinct constant 8x8 tiles: all gradient sits on grid lines
    rng = np.random.default_rng(22)
    tiles = rng.integers(0, 256, (4, 4), dtype=np.uint8)
    px = np.repeat(np.repeat(tiles, 8, axis=0), 8, axis=1)
    img = make_image(np.stack([px] * 3, axis=-1))
    score = blockiness(img)
    assert score > 1e4  # B_in == 0, so the score is B_edge / eps


def test_blockiness_rejects_small_images():
    with pytest.raises(ValueError, match="smaller than twice the"):
        blockiness(solid_image((0, 0, 0), 15, 32))
    with pytest.raises(ValueError, match="smaller than twice the"):
        blockiness(solid_image((0, 0, 0), 32, 15))


def test_blockiness_recompression_orders_scores():
    rng = np.random.default_rng(23)
    img = make_image(noise_patch(rng, (120, 100, 140), 12.0, 48, 48))
    q20 = blockiness(jpeg_recompress(img, 20))
    q90 = blockiness(jpeg_recompress(img, 90))
    assert q20 > q90


def test_blockiness_luminance_offset_invariant():
    rng = np.random.default_rng(24)
    px = rng.integers(40, 160, (32, 32, 3), dtype=np.uint8)
    shifted = px + np.uint8(30)  # stays below 255, no clipping
    a = blockiness(make_image(px))
    b = blockiness(make_image(shifted))
    assert a == pytest.approx(b, rel=1e-9)


def test_blockiness_transpose_symmetric():
    rng = np.random.default_rng(25)
    px = rng.integers(0, 256, (48, 32, 3), dtype=np.uint8)
    a = blockiness(make_image(px))
    b = blockiness(make_image(px.transpose(1, 0, 2).copy()))
    assert a == pytest.approx(b, rel=1e-12)


# -------------------------------------------------------------- quality bands

def test_calibration_boundaries_ordered(calibration):
    b = calibration.boundaries
    assert b["minor"] < b["moderate"] < b["severe"]
    m = calibration.median_scores
    assert m["lossless"] < m["q85"] < m["q60"] < m["q30"]


def test_quality_band_q30_is_severe(calibration):
    rng = np.random.default_rng(26)
    for _ in range(5):
        img = make_image(noise_patch(rng, rng.integers(60, 200, 3), 8.0, 64, 64))
        assert quality_band(jpeg_recompress(img, 30), calibration) == "severe"


def test_quality_band_lossless_gradient_is_none(calibration):
    ramp = np.linspace(60, 200, 64)
    px = np.stack([np.add.outer(ramp, ramp) / 2.0] * 3, axis=-1)
    img = make_image(np.clip(np.rint(px), 0, 255).astype(np.uint8))
    assert quality_band(img, calibration) == "none"


def test_quality_band_solid_is_none(calibration):
    assert quality_band(solid_image((128, 128, 128), 32, 32), calibration) == "none"


def test_calibration_round_trips_through_dict(calibration):
    from patchaudit.forensics import QualityCalibration

    back = QualityCalibration.from_dict(calibration.to_dict())
    assert back.boundaries == calibration.boundaries
    assert back.median_scores == calibration.median_scores


# ------------------------------------------------------------------- clipping

def test_clipping_solid_red():
    stats = clipping_stats(solid_image((255, 0, 0)))
    assert stats.at_max.tolist() == [1.0, 0.0, 0.0]
    assert stats.at_zero.tolist() == [0.0, 1.0, 1.0]
    assert stats.corrupted


def test_clipping_six_percent_blue_flagged():
    px = np.full((10, 10, 3), 128, dtype=np.uint8)
    px.reshape(-1, 3)[:6, 2] = 255  # exactly 6 of 100 pixels
    stats = clipping_stats(make_image(px), saturation_threshold=0.05)
    assert stats.at_max[2] == 0.06
    assert stats.corrupted


def test_clipping_mid_gray_clean():
    stats = clipping_stats(solid_image((128, 128, 128)))
    assert stats.at_max.sum() == 0.0 and stats.at_zero.sum() == 0.0
    assert not stats.corrupted


def test_clipping_matches_brute_force():
    rng = np.random.default_rng(27)
    px = rng.choice([0, 1, 254, 255, 128], size=(7, 5, 3)).astype(np.uint8)
    stats = clipping_stats(make_image(px))
    n = 35
    for c in range(3):
        zero = sum(1 for v in px[:, :, c].flat if v == 0)
        top = sum(1 for v in px[:, :, c].flat if v == 255)
        assert stats.at_zero[c] == zero / n
        assert stats.at_max[c] == top / n


# ------------------------------------------------------------------ audit_corpus

@pytest.fixture(scope="module")
def defect_corpus(tmp_path_factory):
    """Three classes: clean, heavily compressed, and blue-clipped."""
    spec = SynthSpec(
        n_classes=3, train_per_class=6, test_per_class=2,
        class_means=[(90, 120, 150), (150, 120, 90), (120, 150, 90)],
        width=32, height=32, noise_sigma=8.0,
        jpeg_quality=[None, 25, None],
        blue_clip_fraction=[0.0, 0.0, 0.08],
        seed=5,
    )
    root = tmp_path_factory.mktemp("defects") / "corpus"
    generate_corpus(spec, root)
    return root


def test_audit_corpus_flags_defective_classes(defect_corpus, calibration):
    manifest = scan_corpus(defect_corpus / "train", split="train")
    report = audit_corpus(manifest, calibration=calibration)
    assert report.n_images == 18
    by_name = {c.class_name: c for c in report.clipping}
    assert by_name["class02"].flagged == 6
    assert by_name["class00"].flagged == 0
    assert by_name["class01"].flagged == 0
    blocks = {b.class_name: b for b in report.blockiness}
    assert blocks["class01"].median > blocks["class00"].median
    assert blocks["class01"].band_counts["severe"] == 6
    # clipped blue mass shows up in the top histogram bin
    assert report.blue_tail_mass["class02"] > 0.06
    assert report.blue_tail_mass["class00"] < 0.01


def test_audit_corpus_thread_invariant(defect_corpus, calibration):
    manifest = scan_corpus(defect_corpus / "train", split="train")
    a = audit_corpus(manifest, calibration=calibration, threads=1)
    b = audit_corpus(manifest, calibration=calibration, threads=4)
    assert a.to_dict() == b.to_dict()


def test_train_test_shift_and_histogram_csv(defect_corpus, calibration, tmp_path):
    train = audit_corpus(scan_corpus(defect_corpus / "train", split="train"),
                         calibration=calibration)
    test = audit_corpus(scan_corpus(defect_corpus / "test", split="test"),
                        calibration=calibration)
    shift = train_test_shift(train, test)
    assert set(shift) == {"class00", "class01", "class02"}
    assert all(0.0 <= v <= 6.0 for v in shift.values())
    out = tmp_path / "hist.csv"
    write_histogram_csv(train, out)
    lines = out.read_text().splitlines()
    assert lines[0] == "class,channel,bin,frequency"
    assert len(lines) == 1 + 3 * 3 * 16  # classes x channels x bins


def test_audit_corpus_small_images_warn(tmp_path, calibration):
    from conftest import write_png

    (tmp_path / "A").mkdir()
    write_png(tmp_path / "A" / "tiny.png", np.zeros((4, 4, 3), dtype=np.uint8))
    report = audit_corpus(scan_corpus(tmp_path), calibration=calibration)
    assert report.n_images == 1
    assert report.blockiness == []  # too small for an 8x8 grid score
    assert any("no blockiness" in w for w in report.warnings)
