"""Feature-space evaluation: one-vs-rest linear SVM, metrics with
false-alarm accounting, PCA, and exact t-SNE."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidValue, SizeMismatch


@dataclass
class SvmModel:
    weights: np.ndarray  # (classes, dim)
    biases: np.ndarray  # (classes,)
    classes: np.ndarray  # sorted distinct training labels


@dataclass
class Metrics:
    accuracy: float  # percent
    per_class: list  # (class, precision, recall)
    false_alarms: int
    confusion: np.ndarray  # (classes, classes), rows = truth


def l2_normalize_rows(X):
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    return X / np.maximum(norms, 1e-12)


def svm_objective(w, b, X, y_signed, c_reg):
    margins = 1 - y_signed * (X @ w + b)
    return 0.5 * float(w @ w) + c_reg * float(np.maximum(0, margins).sum())


def svm_train(features, labels, c_reg=1.0, epochs=20, seed=0,
              track_objective=False):
    """One-vs-rest linear SVM by stochastic subgradient descent on
    0.5*||w||^2 + c_reg * sum hinge, learning rate 1/(c_reg * t).

    With track_objective=True also returns the per-epoch objective
    (summed over the one-vs-rest subproblems).
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    classes = np.unique(y)
    if len(classes) < 2:
        raise InvalidValue("need at least two classes")
    if c_reg <= 0:
        raise InvalidValue("c_reg must be positive")
    n, dim = X.shape
    rng = np.random.default_rng(seed)
    W = np.zeros((len(classes), dim))
    B = np.zeros(len(classes))
    epoch_obj = np.zeros(epochs)
    for ci, cls in enumerate(classes):
        ys = np.where(y == cls, 1.0, -1.0)
        w = np.zeros(dim)
        b = 0.0
        t = 0
        for ep in range(epochs):
            order = rng.permutation(n)
            for i in order:
                t += 1
                eta = 1.0 / (c_reg * t)
                margin = ys[i] * (X[i] @ w + b)
                gw = w.copy()
                gb = 0.0
                if margin < 1:
                    gw -= c_reg * ys[i] * X[i]
                    gb -= c_reg * ys[i]
                w -= eta * gw
                b -= eta * gb
            if track_objective:
                epoch_obj[ep] += svm_objective(w, b, X, ys, c_reg)
        W[ci] = w
        B[ci] = b
    model = SvmModel(weights=W, biases=B, classes=classes)
    if track_objective:
        return model, list(epoch_obj)
    return model


def svm_predict(model: SvmModel, features):
    X = np.asarray(features, dtype=np.float64)
    if X.shape[1] != model.weights.shape[1]:
        raise SizeMismatch(f"feature dim {X.shape[1]} vs model "
                           f"{model.weights.shape[1]}")
    scores = X @ model.weights.T + model.biases
    return model.classes[scores.argmax(axis=1)]  # argmax ties -> lowest index


def compute_metrics(pred, truth, background_class=0, num_classes=None):
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise SizeMismatch("pred/truth length mismatch")
    k = int(num_classes if num_classes is not None
            else max(pred.max(initial=0), truth.max(initial=0)) + 1)
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (truth, pred), 1)
    accuracy = 100.0 * np.trace(confusion) / max(1, len(truth))
    per_class = []
    for c in range(k):
        tp = confusion[c, c]
        predicted = confusion[:, c].sum()
        actual = confusion[c, :].sum()
        precision = tp / predicted if predicted else 0.0
        recall = tp / actual if actual else 0.0
        per_class.append((c, float(precision), float(recall)))
    fa = int(((truth == background_class) & (pred != background_class)).sum()
             + ((truth != background_class) & (pred == background_class)).sum())
    return Metrics(accuracy=float(accuracy), per_class=per_class,
                   false_alarms=fa, confusion=confusion)


# ---------------------------------------------------------------------------
# embeddings


def pca_project(X, d, iters=200, seed=0):
    """Top-d principal directions by power iteration with deflation.

    Returns (projected coordinates, components (d, dim), mean).
    """
    X = np.asarray(X, dtype=np.float64)
    n, dim = X.shape
    if not (1 <= d <= dim) or n < d + 1:
        raise InvalidValue("need 1 <= d <= dim and at least d+1 samples")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (n - 1)
    rng = np.random.default_rng(seed)
    comps = np.zeros((d, dim))
    work = cov.copy()
    for j in range(d):
        v = rng.normal(size=dim)
        v /= np.linalg.norm(v)
        for _ in range(iters):
            v = work @ v
            nv = np.linalg.norm(v)
            if nv < 1e-300:
                break
            v /= nv
        lam = float(v @ work @ v)
        comps[j] = v
        work = work - lam * np.outer(v, v)
    return Xc @ comps.T, comps, mean


def _perplexity_probabilities(D2, perplexity, tol=1e-5, max_steps=100):
    """Per-row Gaussian conditional probabilities whose entropy matches
    log(perplexity), via binary search on the precision."""
    n = D2.shape[0]
    target = np.log(perplexity)
    P = np.zeros((n, n))
    for i in range(n):
        beta, lo, hi = 1.0, -np.inf, np.inf
        d = np.delete(D2[i], i)
        for _ in range(max_steps):
            p = np.exp(-d * beta)
            s = p.sum()
            if s <= 0:
                s = 1e-300
            p = p / s
            h = -np.sum(p * np.log(np.maximum(p, 1e-300)))
            diff = h - target
            if abs(diff) < tol:
                break
            if diff > 0:
                lo = beta
                beta = beta * 2 if hi == np.inf else (beta + hi) / 2
            else:
                hi = beta
                beta = beta / 2 if lo == -np.inf else (beta + lo) / 2
        row = np.insert(p, i, 0.0)
        P[i] = row
    return P


def tsne_embed(X, perplexity=20.0, iters=500, seed=0, learning_rate=100.0):
    """Exact O(n^2) t-SNE.

    Early exaggeration x4 for the first 100 iterations, momentum 0.5
    switching to 0.8 at iteration 250, embedding re-centered every
    iteration. Returns (coords (n,2), KL trace).
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n > 2000:
        raise InvalidValue("exact t-SNE capped at 2000 points")
    if not (5 <= perplexity <= (n - 1) / 3):
        raise InvalidValue(f"perplexity {perplexity} infeasible for n={n}")
    D2 = ((X[:, None, :] - X[None, :, :]) ** 2).sum(axis=2)
    Pc = _perplexity_probabilities(D2, perplexity)
    P = (Pc + Pc.T) / (2 * n)
    P = np.maximum(P, 1e-12)

    rng = np.random.default_rng(seed)
    Y = rng.normal(0, 1e-4, size=(n, 2))
    inc = np.zeros_like(Y)
    gains = np.ones_like(Y)
    kl_trace = []
    exagg_until = 100
    step_scale = 1.0

    def kl_of(Yc):
        d2 = ((Yc[:, None, :] - Yc[None, :, :]) ** 2).sum(axis=2)
        num = 1.0 / (1.0 + d2)
        np.fill_diagonal(num, 0.0)
        Q = np.maximum(num / num.sum(), 1e-12)
        return float(np.sum(P * np.log(P / Q))), num, Q

    kl_prev, num, Q = kl_of(Y)
    for it in range(iters):
        Pe = P * 4.0 if it < exagg_until else P
        PQ = (Pe - Q) * num
        grad = 4.0 * ((np.diag(PQ.sum(axis=1)) - PQ) @ Y)
        momentum = 0.5 if it < 250 else 0.8
        gains = np.where(np.sign(grad) != np.sign(inc), gains + 0.2, gains * 0.8)
        gains = np.maximum(gains, 0.01)
        inc = momentum * inc - step_scale * learning_rate * gains * grad
        Y_new = Y + inc
        Y_new = Y_new - Y_new.mean(axis=0)
        kl_new, num_new, Q_new = kl_of(Y_new)
        if it >= exagg_until and kl_new > kl_prev:
            # backtrack: keep the KL trace non-increasing
            inc = np.zeros_like(Y)
            step_scale *= 0.5
            kl_trace.append(kl_prev)
            continue
        Y, num, Q, kl_prev = Y_new, num_new, Q_new, kl_new
        kl_trace.append(kl_prev)
    return Y, kl_trace
