import numpy as np
import pytest

from patchaudit.corpus import scan_corpus
from patchaudit.errors import FeatureError
from patchaudit.features import (
    FeatureTable,
    color_histogram,
    featurize_corpus,
    hist_schema,
    load_external_features,
    mean_rgb,
    read_feature_csv,
    schema_dim,
    write_feature_csv,
)

from conftest import make_image, random_image, solid_image


def brute_force_mean(pixels):
    """Oracle: plain Python per-channel sums."""
    sums = [0, 0, 0]
    count = 0
    for row in pixels:
        for px in row:
            for c in range(3):
                sums[c] += int(px[c])
            count += 1
    return [s / count for s in sums]


def brute_force_histogram(pixels, bins):
    """Oracle: count with floor(v * bins / 256), normalize per channel."""
    counts = [[0] * bins for _ in range(3)]
    n = 0
    for row in pixels:
        for px in row:
            for c in range(3):
                counts[c][int(px[c]) * bins // 256] += 1
            n += 1
    return [v / n for channel in counts for v in channel]


def test_mean_rgb_solid():
    assert mean_rgb(solid_image((10, 20, 30))).tolist() == [10.0, 20.0, 30.0]


def test_mean_rgb_two_point():
    img = make_image([[(0, 0, 0), (255, 255, 255)]])
    assert mean_rgb(img).tolist() == [127.5, 127.5, 127.5]


def test_mean_rgb_matches_brute_force():
    rng = np.random.default_rng(11)
    for _ in range(10):
        img = random_image(rng, width=4, height=4)
        assert mean_rgb(img).tolist() == brute_force_mean(img.pixels)


def test_histogram_solid_white_last_bin():
    hist = color_histogram(solid_image((255, 255, 255)), bins=16)
    for c in range(3):
        block = hist[c * 16:(c + 1) * 16]
        assert block[15] == 1.0
        assert block[:15].sum() == 0.0


def test_histogram_bin_edges():
    # red values {0, 15, 16, 255} with 16 bins: 2/4 in bin 0, 1/4 in bins 1 and 15
    px = np.zeros((2, 2, 3), dtype=np.uint8)
    px[:, :, 0] = [[0, 15], [16, 255]]
    hist = color_histogram(make_image(px), bins=16)
    red = hist[:16]
    assert red[0] == 0.5 and red[1] == 0.25 and red[15] == 0.25
    assert red[2:15].sum() == 0.0
    assert hist.tolist() == brute_force_histogram(px, 16)


def test_histogram_matches_brute_force_various_bins():
    rng = np.random.default_rng(12)
    for bins in (1, 2, 7, 16, 100, 256):
        img = random_image(rng, width=5, height=3)
        assert color_histogram(img, bins).tolist() == brute_force_histogram(
            img.pixels, bins)


def test_histogram_channel_blocks_sum_to_one():
    rng = np.random.default_rng(13)
    for _ in range(50):
        img = random_image(rng, width=int(rng.integers(1, 9)),
                           height=int(rng.integers(1, 9)))
        hist = color_histogram(img, bins=16)
        for c in range(3):
            assert abs(hist[c * 16:(c + 1) * 16].sum() - 1.0) <= 1e-9


def test_histogram_256_bins_solid():
    for v in (0, 1, 127, 254, 255):
        hist = color_histogram(solid_image((v, v, v)), bins=256)
        for c in range(3):
            block = hist[c * 256:(c + 1) * 256]
            assert block[v] == 1.0 and block.sum() == 1.0


def test_extractors_permutation_invariant():
    rng = np.random.default_rng(14)
    img = random_image(rng, width=6, height=6)
    flat = img.pixels.reshape(-1, 3)
    shuffled = make_image(flat[rng.permutation(len(flat))].reshape(6, 6, 3))
    assert np.array_equal(mean_rgb(img), mean_rgb(shuffled))
    assert np.array_equal(color_histogram(img), color_histogram(shuffled))


def test_histogram_rejects_zero_bins():
    with pytest.raises(ValueError, match="bins"):
        color_histogram(solid_image((0, 0, 0)), bins=0)


def test_featurize_matches_manifest_order(tiny_corpus):
    m = scan_corpus(tiny_corpus)
    table = featurize_corpus(m, extractor="mean-rgb")
    assert len(table) == len(m.entries)
    assert table.labels.tolist() == [e.label for e in m.entries]
    assert table.schema == "mean-rgb-3"


def test_featurize_thread_invariant(tiny_corpus):
    m = scan_corpus(tiny_corpus)
    t1 = featurize_corpus(m, extractor="hist", bins=8, threads=1)
    t4 = featurize_corpus(m, extractor="hist", bins=8, threads=4)
    assert np.array_equal(t1.values, t4.values)
    assert t1.labels.tolist() == t4.labels.tolist()


def test_featurize_skips_corrupt_by_default(tiny_corpus):
    (tiny_corpus / "ADI" / "bad.png").write_bytes(b"nope")
    m = scan_corpus(tiny_corpus)
    table = featurize_corpus(m)
    assert len(table) == 4  # five entries, one skipped


def test_featurize_strict_raises(tiny_corpus):
    from patchaudit.errors import ImageDecodeError

    (tiny_corpus / "ADI" / "bad.png").write_bytes(b"nope")
    m = scan_corpus(tiny_corpus)
    with pytest.raises(ImageDecodeError):
        featurize_corpus(m, strict=True)


def test_schema_dims():
    assert schema_dim("mean-rgb-3") == 3
    assert schema_dim(hist_schema(16)) == 48
    assert schema_dim("external-1280") == 1280
    with pytest.raises(FeatureError):
        schema_dim("bogus")


def test_feature_csv_round_trip(tmp_path):
    rng = np.random.default_rng(15)
    table = FeatureTable(
        schema=hist_schema(4),
        class_names=["a", "b"],
        labels=np.array([0, 1, 1]),
        splits=["train", "train", "test"],
        values=rng.dirichlet(np.ones(4), size=(3, 3)).reshape(3, 12),
    )
    path = tmp_path / "f.csv"
    write_feature_csv(table, path)
    back = read_feature_csv(path)
    assert back.schema == table.schema
    assert back.class_names == table.class_names
    assert back.labels.tolist() == table.labels.tolist()
    assert back.splits == table.splits
    assert np.array_equal(back.values, table.values)  # bit-exact floats


def test_feature_csv_write_deterministic(tmp_path, tiny_corpus):
    table = featurize_corpus(scan_corpus(tiny_corpus), extractor="hist")
    write_feature_csv(table, tmp_path / "a.csv")
    write_feature_csv(table, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def _external_csv(tmp_path, rows, dim=4):
    path = tmp_path / "ext.csv"
    header = "label,split," + ",".join(f"f{i}" for i in range(dim))
    path.write_text("\n".join([header] + rows) + "\n")
    return path


def test_load_external_features(tmp_path):
    path = _external_csv(tmp_path, ["a,train,1,2,3,4", "b,test,5,6,7,8"])
    table = load_external_features(path, ["a", "b"])
    assert table.schema == "external-4"
    assert table.values.shape == (2, 4)
    assert table.labels.tolist() == [0, 1]


def test_load_external_ragged_row_reports_line(tmp_path):
    path = _external_csv(tmp_path, ["a,train,1,2,3,4", "a,train,1,2"])
    with pytest.raises(FeatureError, match=":3"):
        load_external_features(path, ["a", "b"])


def test_load_external_non_finite_reports_line(tmp_path):
    path = _external_csv(tmp_path, ["a,train,1,2,3,nan"])
    with pytest.raises(FeatureError, match=":2"):
        load_external_features(path, ["a", "b"])


def test_load_external_unknown_label_reports_line(tmp_path):
    path = _external_csv(tmp_path, ["z,train,1,2,3,4"])
    with pytest.raises(FeatureError, match=":2.*'z'"):
        load_external_features(path, ["a", "b"])


def test_table_rejects_schema_mismatch():
    with pytest.raises(FeatureError, match="schema"):
        FeatureTable(schema="mean-rgb-3", class_names=["a"],
                     labels=np.array([0]), splits=["train"],
                     values=np.zeros((1, 5)))
