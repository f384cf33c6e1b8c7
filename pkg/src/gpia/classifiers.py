"""GPIA attack classifiers: MLP, random forest and logistic regression."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DegenerateLabelError, ShapeError, UsageError
from .optim import Adam

KINDS = ("mlp", "rf", "lr")


@dataclass(frozen=True)
class ClassifierKind:
    tag: str = "mlp"
    layers: tuple = (64, 32, 16)
    epochs: int = 1000
    lr: float = 0.001
    alpha: float = 1e-4
    max_depth: int = 150
    min_leaf: int = 1
    n_trees: int = 100
    C: float = 1.0
    max_iter: int = 100
    tol: float = 1e-4

    def __post_init__(self):
        if self.tag not in KINDS:
            raise UsageError(f"unknown classifier {self.tag!r}; expected one of {KINDS}")
        object.__setattr__(self, "layers", tuple(int(x) for x in self.layers))
        if any(x < 1 for x in self.layers) or not self.layers:
            raise ValueError("mlp layers must be positive")
        for name in ("epochs", "max_depth", "min_leaf", "n_trees", "max_iter"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.lr <= 0 or self.C <= 0 or self.tol <= 0:
            raise ValueError("lr, C and tol must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")

    def to_json(self) -> dict:
        d = asdict(self)
        d["layers"] = list(self.layers)
        return d


@dataclass(eq=False)
class AttackModel:
    kind: ClassifierKind
    params: object
    in_dim: int


def _check_xy(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64).ravel()
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ShapeError(f"X has shape {X.shape} but y has {y.size} labels")
    if X.shape[0] < 2:
        raise ValueError("need at least two training rows")
    if not np.all(np.isin(y, (0, 1))):
        raise ValueError("labels must be binary")
    if np.unique(y).size < 2:
        raise DegenerateLabelError("training labels contain a single class")
    if not np.all(np.isfinite(X)):
        raise ValueError("X holds non-finite values")
    return X, y


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


# ---------------------------------------------------------------------------
# MLP


def _standardizer(X):
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    return mu, sd


def _fit_mlp(X, y, kind, seed):
    """Inputs are standardized with training statistics, which are stored as the
    first two parameter arrays. ``alpha`` is an L2 penalty on the weights."""
    rng = np.random.default_rng(seed)
    mu, sd = _standardizer(X)
    X = (X - mu) / sd
    dims = [X.shape[1], *kind.layers, 1]
    Ws = []
    for a, b in zip(dims[:-1], dims[1:]):
        lim = np.sqrt(6.0 / (a + b))
        Ws.append(rng.uniform(-lim, lim, (a, b)))
        Ws.append(np.zeros(b))
    shapes = [w.shape for w in Ws]
    vec = np.concatenate([w.ravel() for w in Ws])
    opt = Adam(lr=kind.lr)
    yf = y.astype(np.float64)[:, None]
    m = X.shape[0]
    for _ in range(kind.epochs):
        ps = _unpack(vec, shapes)
        acts = [X]
        h = X
        for i in range(0, len(ps) - 2, 2):
            h = np.maximum(h @ ps[i] + ps[i + 1], 0.0)
            acts.append(h)
        logit = h @ ps[-2] + ps[-1]
        d = (_sigmoid(logit) - yf) / m
        grads = [None] * len(ps)
        grads[-2] = acts[-1].T @ d
        grads[-1] = d.sum(axis=0)
        for i in range(len(ps) - 4, -1, -2):
            d = (d @ ps[i + 2].T) * (acts[i // 2 + 1] > 0)
            grads[i] = acts[i // 2].T @ d
            grads[i + 1] = d.sum(axis=0)
        for i in range(0, len(ps), 2):
            grads[i] = grads[i] + kind.alpha * ps[i] / m
        vec = opt.step(vec, np.concatenate([gr.ravel() for gr in grads]))
    return [mu, sd] + [p.copy() for p in _unpack(vec, shapes)]


def _unpack(vec, shapes):
    out, pos = [], 0
    for s in shapes:
        size = int(np.prod(s))
        out.append(vec[pos : pos + size].reshape(s))
        pos += size
    return out


def _mlp_scores(ps, X):
    mu, sd, ps = ps[0], ps[1], ps[2:]
    h = (X - mu) / sd
    for i in range(0, len(ps) - 2, 2):
        h = np.maximum(h @ ps[i] + ps[i + 1], 0.0)
    return _sigmoid(h @ ps[-2] + ps[-1]).ravel()


# ---------------------------------------------------------------------------
# random forest
#
# A tree is a preorder list of nodes. Split node: [feature, threshold, left_size];
# leaf: [-1, p_positive, 0]. The left subtree starts right after its parent and
# spans left_size entries.


def _gini(pos, tot):
    p = pos / tot
    return 2.0 * p * (1.0 - p)


def _best_split(Xs, ys, feats, min_leaf):
    n = ys.size
    parent = _gini(ys.sum(), n)
    best = (0.0, None, None)
    for f in feats:
        col = Xs[:, f]
        order = np.argsort(col, kind="stable")
        c = col[order]
        yy = ys[order]
        cum = np.cumsum(yy)[:-1]
        left_n = np.arange(1, n)
        valid = (c[1:] > c[:-1]) & (left_n >= min_leaf) & (n - left_n >= min_leaf)
        if not valid.any():
            continue
        ln = left_n[valid]
        lp = cum[valid]
        rn = n - ln
        rp = ys.sum() - lp
        child = (ln * _gini(lp, ln) + rn * _gini(rp, rn)) / n
        j = int(np.argmin(child))
        gain = parent - child[j]
        if gain > best[0] + 1e-15:
            # threshold sits on the last left value so order-preserving
            # transforms of a column leave every split unchanged
            best = (gain, int(f), float(c[np.flatnonzero(valid)[j]]))
    return best


def _grow(Xs, ys, depth, kind, rng, n_feat, out):
    n = ys.size
    pos = ys.sum()
    if depth >= kind.max_depth or pos == 0 or pos == n or n < 2 * kind.min_leaf:
        out.append([-1, pos / n, 0])
        return
    feats = rng.choice(Xs.shape[1], size=n_feat, replace=False)
    gain, f, thr = _best_split(Xs, ys, feats, kind.min_leaf)
    if f is None:
        out.append([-1, pos / n, 0])
        return
    node = [f, thr, 0]
    out.append(node)
    left = Xs[:, f] <= thr
    start = len(out)
    _grow(Xs[left], ys[left], depth + 1, kind, rng, n_feat, out)
    node[2] = len(out) - start
    _grow(Xs[~left], ys[~left], depth + 1, kind, rng, n_feat, out)


def _fit_rf(X, y, kind, seed):
    rng = np.random.default_rng(seed)
    n_feat = max(1, int(np.sqrt(X.shape[1])))
    trees = []
    for _ in range(kind.n_trees):
        idx = rng.integers(0, X.shape[0], X.shape[0])
        nodes = []
        _grow(X[idx], y[idx], 0, kind, rng, n_feat, nodes)
        trees.append(nodes)
    return trees


def _tree_predict(nodes, x):
    i = 0
    while nodes[i][0] != -1:
        f, thr, left = nodes[i]
        i = i + 1 if x[int(f)] <= thr else i + 1 + int(left)
    return nodes[i][1]


def _rf_scores(trees, X):
    return np.array([np.mean([_tree_predict(t, x) for t in trees]) for x in X])


# ---------------------------------------------------------------------------
# logistic regression


def _fit_lr(X, y, kind):
    """L2 logistic regression by gradient descent on standardized inputs.

    Step size is 1/L for the loss's Lipschitz bound; stops when the gradient's
    max-norm falls below ``tol`` or after ``max_iter`` steps.
    """
    m, d = X.shape
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    Xs = np.hstack([(X - mu) / sd, np.ones((m, 1))])
    lam = 1.0 / (kind.C * m)
    L = np.linalg.norm(Xs, 2) ** 2 / (4.0 * m) + lam
    w = np.zeros(d + 1)
    yf = y.astype(np.float64)
    reg = np.ones(d + 1)
    reg[-1] = 0.0
    for _ in range(kind.max_iter):
        g = Xs.T @ (_sigmoid(Xs @ w) - yf) / m + lam * reg * w
        if np.max(np.abs(g)) < kind.tol:
            break
        w = w - g / L
    # fold the standardization back into raw-space coefficients
    coef = w[:-1] / sd
    return np.concatenate([coef, [w[-1] - coef @ mu]])


def _lr_scores(w, X):
    return _sigmoid(X @ w[:-1] + w[-1])


# ---------------------------------------------------------------------------


def fit(X, y, kind: ClassifierKind, seed: int = 0) -> AttackModel:
    X, y = _check_xy(X, y)
    if kind.tag == "mlp":
        params = _fit_mlp(X, y, kind, seed)
    elif kind.tag == "rf":
        params = _fit_rf(X, y, kind, seed)
    else:
        params = _fit_lr(X, y, kind)
    return AttackModel(kind, params, X.shape[1])


def scores(model: AttackModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.size == 0:
        return np.zeros(0)
    if X.ndim != 2 or X.shape[1] != model.in_dim:
        raise ShapeError(f"model expects {model.in_dim} features, got shape {X.shape}")
    tag = model.kind.tag
    if tag == "mlp":
        return _mlp_scores(model.params, X)
    if tag == "rf":
        return _rf_scores(model.params, X)
    return _lr_scores(model.params, X)


def predict(model: AttackModel, X):
    """Return ``(labels, scores)``; a score of exactly 0.5 counts as positive."""
    s = scores(model, X)
    return (s >= 0.5).astype(np.int64), s


def attack_accuracy(pred, truth) -> float:
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel()
    if pred.size != truth.size:
        raise ShapeError(f"{pred.size} predictions for {truth.size} labels")
    if pred.size == 0:
        raise ValueError("accuracy of an empty prediction set is undefined")
    return float(np.mean(pred.astype(np.int64) == truth.astype(np.int64)))


# ---------------------------------------------------------------------------
# serialization


def dumps_classifier(model: AttackModel) -> str:
    tag = model.kind.tag
    if tag == "rf":
        body = [[[int(f), float(t), int(l)] for f, t, l in tree] for tree in model.params]
    elif tag == "mlp":
        body = [{"shape": list(p.shape), "data": [float(x) for x in p.ravel()]} for p in model.params]
    else:
        body = [float(x) for x in model.params]
    return json.dumps({"format_version": 1, "kind": model.kind.to_json(), "in_dim": model.in_dim, "params": body})


def loads_classifier(text: str) -> AttackModel:
    obj = json.loads(text)
    kind = ClassifierKind(**obj["kind"])
    body = obj["params"]
    if kind.tag == "rf":
        params = [[list(n) for n in tree] for tree in body]
    elif kind.tag == "mlp":
        params = [np.asarray(p["data"], dtype=np.float64).reshape(p["shape"]) for p in body]
    else:
        params = np.asarray(body, dtype=np.float64)
    return AttackModel(kind, params, int(obj["in_dim"]))
