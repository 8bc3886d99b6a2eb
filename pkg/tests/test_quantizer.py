import numpy as np
import pytest

from nadetopic.errors import BoundsError, FormatError, ShapeMismatchError, ValidationError
from nadetopic.quantizer import (
    Codebook,
    DescriptorSet,
    assign_region,
    descriptors_to_tokens,
    kmeans_fit,
    load_codebook,
    load_descriptors,
    quantize,
    save_codebook,
    save_descriptors,
)


def brute_nearest(centroids, x):
    best, best_d = 0, np.inf
    for k, c in enumerate(centroids):
        d = sum((float(a) - float(b)) ** 2 for a, b in zip(x, c))
        if d < best_d:
            best, best_d = k, d
    return best


def test_one_point_per_cluster():
    data = np.random.default_rng(0).normal(size=(6, 3))
    book = kmeans_fit(data, 6, seed=1)
    assert book.objective == 0.0
    assert sorted(map(tuple, book.centroids)) == sorted(map(tuple, data))


def test_single_cluster_is_mean():
    data = np.random.default_rng(1).normal(size=(200, 4))
    book = kmeans_fit(data, 1, seed=0)
    np.testing.assert_allclose(book.centroids[0], data.mean(axis=0), rtol=0, atol=1e-12)
    np.testing.assert_allclose(book.objective, data.var(axis=0).sum() * len(data), rtol=1e-10)


def test_two_blobs():
    rng = np.random.default_rng(2)
    means = np.array([[0.0, 0.0], [20.0, 20.0]])
    truth = rng.integers(2, size=300)
    data = means[truth] + rng.normal(size=(300, 2))
    book = kmeans_fit(data, 2, seed=3)
    labels = np.array([quantize(book, x) for x in data])
    oracle = np.array([brute_nearest(means, x) for x in data])
    assert np.array_equal(oracle, truth)
    # cluster ids are arbitrary; the partition must match
    assert np.array_equal(labels, oracle) or np.array_equal(labels, 1 - oracle)


@pytest.mark.parametrize("seed", range(5))
def test_objective_non_increasing(seed):
    rng = np.random.default_rng(seed)
    data = rng.normal(size=(400, 5)) * rng.uniform(0.5, 3, size=5)
    book = kmeans_fit(data, 12, seed=seed, max_iters=50, rel_tol=0.0)
    hist = np.array(book.history)
    assert np.all(np.diff(hist) <= 0)
    assert book.objective == hist[-1]


def test_empty_cluster_reseeded():
    # many duplicate points: k-means++ can only pick distinct locations, but
    # centroids remain exactly K and finite
    data = np.vstack([np.zeros((50, 2)), np.ones((3, 2)) * 5, [[9.0, 9.0]]])
    book = kmeans_fit(data, 3, seed=0)
    assert book.centroids.shape == (3, 2) and np.all(np.isfinite(book.centroids))
    assert book.objective == pytest.approx(0.0, abs=1e-12)


def test_kmeans_errors():
    with pytest.raises(ValidationError):
        kmeans_fit(np.zeros((2, 2)), 3)
    with pytest.raises(ValidationError):
        kmeans_fit(np.array([[0.0, np.nan], [1.0, 1.0]]), 1)


def test_quantize_examples():
    centroids = np.arange(30, dtype=float).reshape(10, 3)
    book = Codebook(centroids=centroids, objective=0.0)
    assert quantize(book, centroids[7]) == 7
    tie = Codebook(centroids=np.array([[9.0], [9.0], [0.0], [9.0], [9.0], [2.0]]), objective=0)
    assert quantize(tie, [1.0]) == 2
    with pytest.raises(ShapeMismatchError):
        quantize(book, [1.0, 2.0])


def test_quantize_matches_exhaustive_scan():
    rng = np.random.default_rng(4)
    book = Codebook(centroids=rng.normal(size=(40, 8)), objective=0.0)
    for x in rng.normal(size=(1000, 8)):
        assert quantize(book, x) == brute_nearest(book.centroids, x)


def test_assign_region_examples():
    assert assign_region(0, 0, 256, 256, 2, 2) == 0
    assert assign_region(255, 255, 256, 256, 2, 2) == 3
    assert assign_region(128, 0, 256, 256, 2, 2) == 1
    assert assign_region(0, 0, 640, 480, 3, 5) == 0
    with pytest.raises(BoundsError):
        assign_region(256, 0, 256, 256)


@pytest.mark.parametrize("w,h,gx,gy", [(256, 256, 2, 2), (301, 199, 3, 2), (17, 40, 4, 4)])
def test_region_partition(w, h, gx, gy):
    ys, xs = np.mgrid[0:h, 0:w]
    regions = np.array([assign_region(x, y, w, h, gx, gy)
                        for x, y in zip(xs.ravel(), ys.ravel())])
    counts = np.bincount(regions, minlength=gx * gy)
    assert counts.sum() == w * h and len(counts) == gx * gy
    col_widths = np.bincount([assign_region(x, 0, w, h, gx, gy) for x in range(w)],
                             minlength=gx)
    row_heights = np.bincount([assign_region(0, y, w, h, gx, gy) // gx for y in range(h)],
                              minlength=gy)
    assert col_widths.max() - col_widths.min() <= 1
    assert row_heights.max() - row_heights.min() <= 1
    assert np.array_equal(counts.reshape(gy, gx), np.outer(row_heights, col_widths))


def test_descriptor_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    n = 20
    ds = DescriptorSet(data=rng.normal(size=(n, 4)).astype(np.float32).astype(float),
                       x=rng.integers(0, 100, n).astype(float),
                       y=rng.integers(0, 50, n).astype(float),
                       width=np.full(n, 100.0), height=np.full(n, 50.0))
    save_descriptors(ds, tmp_path / "d.ntde")
    back = load_descriptors(tmp_path / "d.ntde")
    assert np.array_equal(back.data, ds.data) and np.array_equal(back.x, ds.x)
    book = Codebook(centroids=rng.normal(size=(3, 4)), objective=1.5)
    save_codebook(book, tmp_path / "c.ntcb")
    book2 = load_codebook(tmp_path / "c.ntcb")
    assert np.array_equal(book2.centroids, book.centroids) and book2.objective == 1.5
    tokens = descriptors_to_tokens(book2, back)
    assert len(tokens) == n and all(0 <= r < 4 for _, r in tokens)
    (tmp_path / "bad").write_bytes(b"NTCB" + b"\x01\x00")
    with pytest.raises(FormatError):
        load_codebook(tmp_path / "bad")
