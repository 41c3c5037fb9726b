"""Unit tests for SVM, metrics, PCA and exact t-SNE."""

import numpy as np
import pytest

from noclab import evaluate as ev
from noclab.errors import InvalidValue, SizeMismatch

RNG = np.random.default_rng(3)


def blobs(n_per=20, centers=((0, 0), (6, 6), (0, 6)), spread=0.3, seed=0):
    rng = np.random.default_rng(seed)
    X, y = [], []
    for ci, c in enumerate(centers):
        X.append(rng.normal(c, spread, size=(n_per, 2)))
        y.extend([ci] * n_per)
    return np.concatenate(X), np.array(y)


# ---------------------------------------------------------------------------
# SVM


def test_svm_separable_blobs_perfect():
    X, y = blobs()
    model = ev.svm_train(X, y, epochs=20, seed=0)
    assert (ev.svm_predict(model, X) == y).all()


def test_svm_objective_tracking_decreases():
    X, y = blobs()
    _, obj = ev.svm_train(X, y, epochs=8, seed=0, track_objective=True)
    assert len(obj) == 8
    assert obj[-1] < obj[0]


def test_svm_validation():
    X, y = blobs()
    with pytest.raises(InvalidValue):
        ev.svm_train(X, np.zeros(len(y)))  # single class
    with pytest.raises(InvalidValue):
        ev.svm_train(X, y, c_reg=0.0)
    model = ev.svm_train(X, y, epochs=2)
    with pytest.raises(SizeMismatch):
        ev.svm_predict(model, np.zeros((3, 5)))


def test_svm_predict_tie_goes_to_lowest_class():
    model = ev.SvmModel(weights=np.zeros((3, 2)), biases=np.zeros(3),
                        classes=np.array([4, 7, 9]))
    assert ev.svm_predict(model, np.ones((2, 2))).tolist() == [4, 4]


def test_svm_labels_preserved():
    X, y = blobs()
    model = ev.svm_train(X, y + 10, epochs=10, seed=0)
    pred = ev.svm_predict(model, X)
    assert set(pred) <= {10, 11, 12}


# ---------------------------------------------------------------------------
# metrics


def test_compute_metrics_counts():
    truth = np.array([0, 0, 1, 1, 2, 2])
    pred = np.array([0, 1, 1, 1, 2, 0])
    m = ev.compute_metrics(pred, truth, background_class=0, num_classes=3)
    assert np.isclose(m.accuracy, 100 * 4 / 6)
    assert m.confusion.sum() == 6
    assert m.confusion[0, 1] == 1
    # one background sample misread + one non-background read as background
    assert m.false_alarms == 2
    prec = dict((c, p) for c, p, _ in m.per_class)
    assert np.isclose(prec[1], 2 / 3)


def test_compute_metrics_validation():
    with pytest.raises(SizeMismatch):
        ev.compute_metrics(np.zeros(3, dtype=int), np.zeros(4, dtype=int))


def test_l2_normalize_rows():
    X = np.array([[3.0, 4.0], [0.0, 0.0]])
    out = ev.l2_normalize_rows(X)
    assert np.allclose(out[0], [0.6, 0.8])
    assert np.allclose(out[1], 0.0)  # zero row survives


# ---------------------------------------------------------------------------
# PCA


def test_pca_recovers_line():
    t = RNG.normal(size=200)
    d = np.array([3.0, 4.0]) / 5.0
    X = np.outer(t, d) + np.array([1.0, -2.0])
    coords, comps, mean = ev.pca_project(X, 1)
    assert np.allclose(np.abs(comps[0] @ d), 1.0, atol=1e-6)
    recon = coords @ comps + mean
    assert np.max(np.abs(recon - X)) < 1e-9


def test_pca_components_orthonormal():
    X = RNG.normal(size=(50, 6))
    _, comps, _ = ev.pca_project(X, 3)
    assert np.allclose(comps @ comps.T, np.eye(3), atol=1e-6)


def test_pca_validation():
    with pytest.raises(InvalidValue):
        ev.pca_project(RNG.normal(size=(5, 3)), 4)
    with pytest.raises(InvalidValue):
        ev.pca_project(RNG.normal(size=(2, 3)), 2)


# ---------------------------------------------------------------------------
# t-SNE


def test_tsne_separates_clusters_and_kl_nonincreasing():
    X, y = blobs(n_per=20, spread=0.2, seed=1)
    Y, kl = ev.tsne_embed(X, perplexity=8.0, iters=300, seed=0)
    assert Y.shape == (60, 2)
    post = kl[100:]  # after early exaggeration
    assert all(b <= a + 1e-12 for a, b in zip(post, post[1:]))
    # clusters separated: mean intra distance well below inter distance
    intra = np.mean([np.linalg.norm(Y[y == c] - Y[y == c].mean(axis=0), axis=1).mean()
                     for c in range(3)])
    centers = np.stack([Y[y == c].mean(axis=0) for c in range(3)])
    inter = np.mean([np.linalg.norm(centers[i] - centers[j])
                     for i in range(3) for j in range(i + 1, 3)])
    assert inter > 2 * intra


def test_tsne_validation():
    X = RNG.normal(size=(30, 3))
    with pytest.raises(InvalidValue):
        ev.tsne_embed(X, perplexity=4.0)
    with pytest.raises(InvalidValue):
        ev.tsne_embed(X, perplexity=20.0)  # > (n-1)/3
    with pytest.raises(InvalidValue):
        ev.tsne_embed(RNG.normal(size=(2001, 2)), perplexity=30.0)
