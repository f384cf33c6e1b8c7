"""Attack features: aggregate per-node GNN outputs into one vector per graph,
then bring train and test vectors to a common length."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import AffinityDegenerateError, AlignmentInfeasibleError, ShapeError, UsageError
from .optim import Adam

POSTERIOR_METHODS = ("posterior-concat", "posterior-ewd")
EMBEDDING_METHODS = ("embed-concat", "embed-maxpool", "embed-meanpool")
ALIGN_METHODS = ("sampling", "tsne", "pca", "autoencoder")


@dataclass(eq=False)
class FeatureVector:
    values: np.ndarray
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if self.values.size == 0:
            raise ShapeError("feature vector is empty")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature vector holds non-finite values")

    def __len__(self):
        return self.values.size

    @property
    def width(self) -> int:
        """Number of consecutive entries contributed by each node."""
        return int(self.source.get("width", 1))


@dataclass(frozen=True)
class AlignmentMethod:
    tag: str = "tsne"
    perplexity: float = 30.0
    iters: int = 1000
    variance: float = 0.95
    k: int | None = None
    target_dim: int | None = None
    epochs: int = 500

    def __post_init__(self):
        if self.tag not in ALIGN_METHODS:
            raise UsageError(f"unknown alignment {self.tag!r}; expected one of {ALIGN_METHODS}")
        if not 0.0 < self.variance <= 1.0:
            raise ValueError("variance must lie in (0, 1]")
        if self.target_dim is not None and self.target_dim < 1:
            raise ValueError("target_dim must be >= 1")
        if self.k is not None and self.k < 1:
            raise ValueError("k must be >= 1")
        if self.perplexity <= 0 or self.iters < 1:
            raise ValueError("perplexity and iters must be positive")


# ---------------------------------------------------------------------------
# aggregation


def ewd_per_node(p) -> float:
    """Average absolute pairwise difference among one node's posterior entries."""
    p = np.asarray(p, dtype=np.float64).ravel()
    ell = p.size
    if ell < 2:
        raise ValueError("element-wise difference needs at least two classes")
    return float(np.abs(p[:, None] - p[None, :]).sum() / (ell * (ell - 1)))


def _ewd_rows(o: np.ndarray) -> np.ndarray:
    ell = o.shape[1]
    if ell < 2:
        raise ValueError("element-wise difference needs at least two classes")
    return np.abs(o[:, :, None] - o[:, None, :]).sum(axis=(1, 2)) / (ell * (ell - 1))


def aggregate_posteriors(O, method: str, sample_id=None) -> FeatureVector:
    if method not in POSTERIOR_METHODS:
        raise UsageError(f"{method!r} is not a posterior aggregation")
    o = np.asarray(O, dtype=np.float64)
    if o.ndim != 2 or o.size == 0:
        raise UsageError("posterior matrix must be a non-empty n x l array")
    if method == "posterior-concat":
        return FeatureVector(o.ravel(), {"method": method, "sample": sample_id, "width": o.shape[1]})
    return FeatureVector(_ewd_rows(o), {"method": method, "sample": sample_id, "width": 1})


def aggregate_embeddings(Zs: Sequence, method: str, layers=None, sample_id=None) -> FeatureVector:
    if method not in EMBEDDING_METHODS:
        raise UsageError(f"{method!r} is not an embedding aggregation")
    mats = [np.asarray(z, dtype=np.float64) for z in Zs]
    if not mats:
        raise UsageError("no embedding matrices given")
    rows = {z.shape[0] for z in mats}
    if len(rows) != 1:
        raise ShapeError(f"embedding matrices disagree on node count: {sorted(rows)}")
    z = np.hstack(mats)
    src = {"method": method, "layers": list(layers) if layers is not None else None, "sample": sample_id}
    if method == "embed-concat":
        return FeatureVector(z.ravel(), {**src, "width": z.shape[1]})
    if method == "embed-maxpool":
        return FeatureVector(z.max(axis=1), {**src, "width": 1})
    return FeatureVector(z.mean(axis=1), {**src, "width": 1})


def stack(vectors: Sequence[FeatureVector]) -> np.ndarray:
    lengths = {len(v) for v in vectors}
    if len(lengths) != 1:
        raise ShapeError(f"vectors have differing lengths {sorted(lengths)}")
    return np.vstack([v.values for v in vectors])


def write_feature_csv(path, vectors: Sequence[FeatureVector], labels) -> None:
    X = stack(vectors)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"v{j}" for j in range(X.shape[1])] + ["label"])
        for row, y in zip(X, labels):
            w.writerow([repr(float(x)) for x in row] + [int(y)])


# ---------------------------------------------------------------------------
# PCA


class PCA:
    """Principal components fitted on rows of ``X``.

    Components are sign-fixed so each one's largest-magnitude loading is positive.
    """

    def __init__(self, k=None, variance=0.95):
        self.k = k
        self.variance = variance

    def fit(self, X):
        X = np.asarray(X, dtype=np.float64)
        self.mean_ = X.mean(axis=0)
        _, s, vt = np.linalg.svd(X - self.mean_, full_matrices=False)
        var = s**2
        total = var.sum()
        ratio = var / total if total > 0 else np.zeros_like(var)
        if self.k is not None:
            k = min(self.k, vt.shape[0])
        elif total == 0:
            k = 1
        else:
            k = int(np.searchsorted(np.cumsum(ratio), self.variance - 1e-12) + 1)
            k = min(k, vt.shape[0])
        comps = vt[:k].copy()
        flip = np.sign(comps[np.arange(k), np.abs(comps).argmax(axis=1)])
        flip[flip == 0] = 1.0
        self.components_ = comps * flip[:, None]
        self.explained_variance_ratio_ = ratio[:k]
        return self

    def transform(self, X):
        return (np.asarray(X, dtype=np.float64) - self.mean_) @ self.components_.T

    def inverse_transform(self, Y):
        return np.asarray(Y) @ self.components_ + self.mean_

    def fit_transform(self, X):
        return self.fit(X).transform(X)


# ---------------------------------------------------------------------------
# t-SNE


def _binary_search_affinities(D, perplexity, tol=1e-5, max_iter=100):
    m = D.shape[0]
    target = np.log(perplexity)
    P = np.zeros((m, m))
    for i in range(m):
        d = np.delete(D[i], i)
        d = d - d.min()
        lo, hi, beta = 0.0, np.inf, 1.0
        for _ in range(max_iter):
            w = np.exp(-d * beta)
            sw = w.sum()
            h = np.log(sw) + beta * np.sum(d * w) / sw
            if abs(h - target) < tol:
                break
            if h > target:
                lo = beta
                beta = beta * 2 if hi == np.inf else (beta + hi) / 2
            else:
                hi = beta
                beta = (beta + lo) / 2
        P[i, np.arange(m) != i] = w / sw
    return P


def tsne(X, perplexity=30.0, iters=1000, seed=0, learning_rate=200.0) -> np.ndarray:
    """Exact t-SNE into two dimensions, initialised from the top two principal components.

    Uses early exaggeration (x4 for the first 100 iterations), per-coordinate
    gains, and momentum 0.5 switching to 0.8 at iteration 250.
    """
    X = np.asarray(X, dtype=np.float64)
    m = X.shape[0]
    if m < 4:
        raise ValueError("t-SNE needs at least 4 points")
    if not 0 < perplexity < m / 3:
        raise ValueError(f"perplexity must lie in (0, {m / 3:.3g}) for {m} points")
    sq = np.sum(X * X, axis=1)
    D = np.maximum(sq[:, None] + sq[None, :] - 2 * X @ X.T, 0.0)
    np.fill_diagonal(D, 0.0)
    if not np.any(D > 1e-24):
        raise AffinityDegenerateError("all rows are identical")
    # rescale so the perplexity search is insensitive to feature magnitude
    D /= np.median(D[D > 0])
    P = _binary_search_affinities(D, perplexity)
    P = (P + P.T) / (2 * m)
    P = np.maximum(P, 1e-12)

    rng = np.random.default_rng(seed)
    if X.shape[1] >= 2 and np.linalg.matrix_rank(X - X.mean(0)) >= 2:
        Y = PCA(k=2).fit_transform(X)
    else:
        Y = rng.standard_normal((m, 2))
    Y = Y / (np.std(Y[:, 0]) or 1.0) * 1e-4
    Y = Y + rng.standard_normal(Y.shape) * 1e-8
    velocity = np.zeros_like(Y)
    gains = np.ones_like(Y)
    exaggeration = 4.0
    for it in range(iters):
        Pe = P * exaggeration if it < 100 else P
        sy = np.sum(Y * Y, axis=1)
        num = 1.0 / (1.0 + np.maximum(sy[:, None] + sy[None, :] - 2 * Y @ Y.T, 0.0))
        np.fill_diagonal(num, 0.0)
        Q = np.maximum(num / num.sum(), 1e-12)
        PQ = (Pe - Q) * num
        grad = 4.0 * (np.diag(PQ.sum(axis=1)) - PQ) @ Y
        momentum = 0.5 if it < 250 else 0.8
        inc = np.sign(grad) != np.sign(velocity)
        gains = np.where(inc, gains + 0.2, gains * 0.8)
        gains = np.maximum(gains, 0.01)
        velocity = momentum * velocity - learning_rate * gains * grad
        Y = Y + velocity
        Y = Y - Y.mean(axis=0)
    if not np.all(np.isfinite(Y)):
        raise AffinityDegenerateError("t-SNE produced non-finite coordinates")
    return Y


def default_perplexity(m: int, requested: float = 30.0) -> float:
    return min(requested, m / 4)


# ---------------------------------------------------------------------------
# autoencoder


class Autoencoder:
    """Single code layer: ReLU encoder, linear decoder, mean-squared-error loss."""

    def __init__(self, code_dim, epochs=500, lr=1e-3, seed=0):
        self.code_dim = code_dim
        self.epochs = epochs
        self.lr = lr
        self.seed = seed

    def fit(self, X):
        X = np.asarray(X, dtype=np.float64)
        m, d = X.shape
        rng = np.random.default_rng(self.seed)
        lim = np.sqrt(6.0 / (d + self.code_dim))
        self.W1 = rng.uniform(-lim, lim, (d, self.code_dim))
        self.b1 = np.zeros(self.code_dim)
        self.W2 = rng.uniform(-lim, lim, (self.code_dim, d))
        self.b2 = X.mean(axis=0)
        shapes = [self.W1.shape, self.b1.shape, self.W2.shape, self.b2.shape]
        vec = np.concatenate([self.W1.ravel(), self.b1, self.W2.ravel(), self.b2])
        opt = Adam(lr=self.lr)
        self.loss_ = []
        for _ in range(self.epochs):
            self._unpack(vec, shapes)
            pre = X @ self.W1 + self.b1
            h = np.maximum(pre, 0.0)
            out = h @ self.W2 + self.b2
            err = out - X
            self.loss_.append(float(np.mean(err**2)))
            dout = 2.0 * err / err.size
            dW2 = h.T @ dout
            db2 = dout.sum(axis=0)
            dh = dout @ self.W2.T * (pre > 0)
            dW1 = X.T @ dh
            db1 = dh.sum(axis=0)
            vec = opt.step(vec, np.concatenate([dW1.ravel(), db1, dW2.ravel(), db2]))
        self._unpack(vec, shapes)
        return self

    def _unpack(self, vec, shapes):
        out, pos = [], 0
        for s in shapes:
            size = int(np.prod(s))
            out.append(vec[pos : pos + size].reshape(s))
            pos += size
        self.W1, self.b1, self.W2, self.b2 = out

    def encode(self, X):
        return np.maximum(np.asarray(X) @ self.W1 + self.b1, 0.0)

    def reconstruct(self, X):
        return self.encode(X) @ self.W2 + self.b2


# ---------------------------------------------------------------------------
# alignment


def node_profile(v: FeatureVector, n_nodes: int) -> np.ndarray:
    """Node-order-free resampling of ``v`` onto ``n_nodes`` node slots.

    The vector is viewed as one row per node (``v.width`` entries each), rows
    are sorted lexicographically, and each column is linearly interpolated at
    ``n_nodes`` evenly spaced quantile positions.
    """
    w = v.width
    if len(v) % w:
        raise ShapeError(f"vector length {len(v)} is not a multiple of its node width {w}")
    rows = v.values.reshape(-1, w)
    order = np.lexsort(rows.T[::-1])
    rows = rows[order]
    src = np.linspace(0.0, 1.0, rows.shape[0]) if rows.shape[0] > 1 else np.zeros(1)
    dst = np.linspace(0.0, 1.0, n_nodes)
    if rows.shape[0] == 1:
        return np.repeat(rows, n_nodes, axis=0).ravel()
    return np.column_stack([np.interp(dst, src, rows[:, j]) for j in range(w)]).ravel()


def _common_length_matrices(train, test):
    a, b = len(train[0]), len(test[0])
    if a == b:
        return stack(train), stack(test)
    wa, wb = train[0].width, test[0].width
    if wa != wb:
        raise AlignmentInfeasibleError(f"node widths differ ({wa} vs {wb})")
    n_nodes = min(a, b) // wa
    return (
        np.vstack([node_profile(v, n_nodes) for v in train]),
        np.vstack([node_profile(v, n_nodes) for v in test]),
    )


def _wrap(X, like, method):
    return [FeatureVector(row, {**v.source, "alignment": method, "width": 1}) for row, v in zip(X, like)]


def align(train: Sequence[FeatureVector], test: Sequence[FeatureVector], m: AlignmentMethod, seed: int = 0):
    """Return ``(train', test')`` whose vectors share one length, order preserved.

    sampling: only the attack-training side may be shortened (by one seeded
    index subset applied to every training vector); a longer test side is
    infeasible. tsne / pca: when lengths differ, every vector is first
    resampled to a node-order-free profile of the shorter length; tsne then
    embeds all rows jointly, pca fits on training rows and projects both.
    autoencoder: an autoencoder trained on the longer side compresses it to
    the shorter length (or both sides to ``target_dim`` when lengths match).
    """
    train, test = list(train), list(test)
    if not train or not test:
        raise UsageError("align needs non-empty train and test sets")
    for side, name in ((train, "train"), (test, "test")):
        if len({len(v) for v in side}) != 1:
            raise ShapeError(f"{name} vectors do not share one length")
    a, b = len(train[0]), len(test[0])

    if m.tag == "sampling":
        if a == b:
            return train, test
        if a < b:
            raise AlignmentInfeasibleError(
                f"sampling can only shorten training vectors ({a}) to the test length ({b})"
            )
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(a, size=b, replace=False))
        return [FeatureVector(v.values[keep], {**v.source, "alignment": "sampling", "width": 1}) for v in train], test

    if m.tag == "tsne":
        Xa, Xb = _common_length_matrices(train, test)
        X = np.vstack([Xa, Xb])
        Y = tsne(X, perplexity=default_perplexity(X.shape[0], m.perplexity), iters=m.iters, seed=seed)
        return _wrap(Y[: len(train)], train, "tsne"), _wrap(Y[len(train) :], test, "tsne")

    if m.tag == "pca":
        Xa, Xb = _common_length_matrices(train, test)
        pca = PCA(k=m.k, variance=m.variance).fit(Xa)
        return _wrap(pca.transform(Xa), train, "pca"), _wrap(pca.transform(Xb), test, "pca")

    # autoencoder
    Xa, Xb = stack(train), stack(test)
    if a == b:
        if m.target_dim is None:
            return train, test
        ae = Autoencoder(m.target_dim, epochs=m.epochs, seed=seed).fit(Xa)
        return _wrap(ae.encode(Xa), train, "autoencoder"), _wrap(ae.encode(Xb), test, "autoencoder")
    if a > b:
        ae = Autoencoder(b, epochs=m.epochs, seed=seed).fit(Xa)
        return _wrap(ae.encode(Xa), train, "autoencoder"), test
    ae = Autoencoder(a, epochs=m.epochs, seed=seed).fit(Xb)
    return train, _wrap(ae.encode(Xb), test, "autoencoder")
