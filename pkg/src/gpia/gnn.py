"""GCN, GraphSAGE (mean aggregator) and GAT node classifiers in plain numpy.

Every architecture has a hand-written backward pass; ``gradient_vector`` and
the finite-difference tests keep them honest. Parameters are flattened in a
fixed order: layer by layer from the input, and within a layer ``W`` first,
then (GAT only) ``a_src`` and ``a_dst``. All arrays are row-major.

A network with ``hidden_layers = L`` has ``L`` hidden layers producing the
embeddings ``Z^1..Z^L`` (each ``n x hidden_dim``) and one output layer whose
logits go through a row-wise softmax.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DivergenceError
from .graph import Graph
from .optim import Adam

ARCHS = ("gcn", "sage", "gat")
_ARCH_ALIASES = {"graphsage": "sage", "gcn": "gcn", "sage": "sage", "gat": "gat"}
FORMAT_VERSION = 1
LEAKY_SLOPE = 0.2
_INFER_STREAM = 0x5A6E  # sub-seed tag for frozen inference-time neighbour samples


@dataclass(frozen=True)
class GnnConfig:
    arch: str = "gcn"
    hidden_layers: int = 2
    hidden_dim: int = 64
    classes: int = 2
    sage_neighbors: int = 10
    gat_heads: int = 4
    lr: float = 0.01
    max_epochs: int = 1500
    patience: int = 50
    seed: int = 0

    def __post_init__(self):
        arch = _ARCH_ALIASES.get(str(self.arch).lower())
        if arch is None:
            raise ConfigurationError(f"unknown architecture {self.arch!r}")
        object.__setattr__(self, "arch", arch)
        if not 1 <= self.hidden_layers <= 8:
            raise ConfigurationError("hidden_layers must lie in [1, 8]")
        if self.hidden_dim <= 0:
            raise ConfigurationError("hidden_dim must be > 0")
        if self.classes < 2:
            raise ConfigurationError("classes must be >= 2")
        if self.max_epochs < 1 or self.patience < 1:
            raise ConfigurationError("max_epochs and patience must be >= 1")
        if self.sage_neighbors < 1 or self.gat_heads < 1:
            raise ConfigurationError("sage_neighbors and gat_heads must be >= 1")
        if arch == "gat" and self.hidden_dim % self.gat_heads:
            raise ConfigurationError("hidden_dim must be divisible by gat_heads")
        if self.lr <= 0:
            raise ConfigurationError("lr must be > 0")


@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)
    test_loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    test_acc: list = field(default_factory=list)
    best_epoch: int = 0
    stop_reason: str = "max_epochs"

    @property
    def epochs(self) -> int:
        return len(self.train_loss)


@dataclass(eq=False)
class GnnModel:
    config: GnnConfig
    params: list
    in_dim: int
    epochs_trained: int = 0

    def flat(self) -> np.ndarray:
        return flatten(self.params)

    def with_flat(self, vec) -> "GnnModel":
        return replace(self, params=unflatten(vec, self.params))


@dataclass(eq=False)
class EmbeddingSet:
    Z: list
    O: np.ndarray


# ---------------------------------------------------------------------------
# parameters


def _glorot(rng, fan_in, fan_out, shape):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(cfg: GnnConfig, in_dim: int) -> list:
    rng = np.random.default_rng(cfg.seed)
    dims = [in_dim] + [cfg.hidden_dim] * cfg.hidden_layers + [cfg.classes]
    layers = []
    for li in range(len(dims) - 1):
        fi, fo = dims[li], dims[li + 1]
        if cfg.arch == "gcn":
            layers.append({"W": _glorot(rng, fi, fo, (fi, fo))})
        elif cfg.arch == "sage":
            layers.append({"W": _glorot(rng, 2 * fi, fo, (2 * fi, fo))})
        else:
            heads = cfg.gat_heads
            out_layer = li == len(dims) - 2
            f = fo if out_layer else fo // heads
            layers.append(
                {
                    "W": _glorot(rng, fi, f, (heads, fi, f)),
                    "a_src": _glorot(rng, f, 1, (heads, f)),
                    "a_dst": _glorot(rng, f, 1, (heads, f)),
                }
            )
    return layers


_KEYS = ("W", "a_src", "a_dst")


def flatten(params) -> np.ndarray:
    return np.concatenate([layer[k].ravel() for layer in params for k in _KEYS if k in layer])


def unflatten(vec, like) -> list:
    vec = np.asarray(vec, dtype=np.float64)
    out, pos = [], 0
    for layer in like:
        new = {}
        for k in _KEYS:
            if k in layer:
                size = layer[k].size
                new[k] = vec[pos : pos + size].reshape(layer[k].shape).copy()
                pos += size
        out.append(new)
    if pos != vec.size:
        raise ConfigurationError(f"flat vector has {vec.size} entries, expected {pos}")
    return out


# ---------------------------------------------------------------------------
# graph-side preprocessing


def normalize_adjacency(g: Graph) -> np.ndarray:
    """Symmetric normalisation of ``A + I``."""
    a = g.adjacency() + np.eye(g.n)
    inv_sqrt = 1.0 / np.sqrt(a.sum(axis=1))
    return a * inv_sqrt[:, None] * inv_sqrt[None, :]


def _neighbors(g: Graph) -> list:
    nb = [[] for _ in range(g.n)]
    for u, v in g.edges.tolist():
        nb[u].append(v)
        nb[v].append(u)
    return [np.array(x, dtype=np.int64) for x in nb]


def sage_sample_matrices(g: Graph, k: int, n_layers: int, rng) -> list:
    """Row-stochastic neighbour-mean operators, one per layer.

    Nodes with at least ``k`` neighbours draw ``k`` without replacement; nodes
    with fewer draw ``k`` with replacement; isolated nodes aggregate to zero.
    """
    nb = _neighbors(g)
    mats = []
    for _ in range(n_layers):
        m = np.zeros((g.n, g.n))
        for i, ns in enumerate(nb):
            if len(ns) == 0:
                continue
            pick = rng.choice(ns, size=k, replace=len(ns) < k)
            np.add.at(m[i], pick, 1.0 / k)
        mats.append(m)
    return mats


class _Context:
    """Per-graph tensors reused across epochs."""

    def __init__(self, g: Graph, cfg: GnnConfig):
        self.g = g
        self.cfg = cfg
        self.n_layers = cfg.hidden_layers + 1
        if cfg.arch == "gcn":
            self.a_hat = normalize_adjacency(g)
        elif cfg.arch == "gat":
            self.mask = g.adjacency().astype(bool) | np.eye(g.n, dtype=bool)

    def sage_mats(self, seed):
        rng = np.random.default_rng(seed)
        return sage_sample_matrices(self.g, self.cfg.sage_neighbors, self.n_layers, rng)


# ---------------------------------------------------------------------------
# layers


def _gcn_fwd(layer, z, ctx, hidden):
    az = ctx.a_hat @ z
    pre = az @ layer["W"]
    return (np.maximum(pre, 0.0) if hidden else pre), (az, pre)


def _gcn_bwd(layer, cache, dout, ctx, hidden):
    az, pre = cache
    dpre = dout * (pre > 0) if hidden else dout
    grads = {"W": az.T @ dpre}
    return grads, ctx.a_hat.T @ (dpre @ layer["W"].T)


def _sage_fwd(layer, z, m, hidden):
    h = np.hstack([z, m @ z])
    pre = h @ layer["W"]
    return (np.maximum(pre, 0.0) if hidden else pre), (h, pre)


def _sage_bwd(layer, cache, dout, m, hidden):
    h, pre = cache
    dpre = dout * (pre > 0) if hidden else dout
    grads = {"W": h.T @ dpre}
    dh = dpre @ layer["W"].T
    d_in = h.shape[1] // 2
    return grads, dh[:, :d_in] + m.T @ dh[:, d_in:]


def _gat_fwd(layer, z, ctx, hidden):
    heads = layer["W"].shape[0]
    outs, caches = [], []
    for t in range(heads):
        wh = z @ layer["W"][t]
        s = wh @ layer["a_src"][t]
        r = wh @ layer["a_dst"][t]
        e = s[:, None] + r[None, :]
        lr = np.where(e > 0, e, LEAKY_SLOPE * e)
        lr = np.where(ctx.mask, lr, -np.inf)
        lr -= lr.max(axis=1, keepdims=True)
        w = np.exp(lr)
        alpha = w / w.sum(axis=1, keepdims=True)
        agg = alpha @ wh
        outs.append(agg)
        caches.append((wh, e, alpha, agg))
    if hidden:
        out = np.hstack([np.maximum(o, 0.0) for o in outs])
    else:
        out = np.mean(outs, axis=0)
    return out, (z, caches)


def _gat_bwd(layer, cache, dout, ctx, hidden):
    z, caches = cache
    heads = layer["W"].shape[0]
    f = layer["W"].shape[2]
    dW = np.zeros_like(layer["W"])
    da_s = np.zeros_like(layer["a_src"])
    da_d = np.zeros_like(layer["a_dst"])
    dz = np.zeros_like(z)
    for t in range(heads):
        wh, e, alpha, agg = caches[t]
        if hidden:
            dagg = dout[:, t * f : (t + 1) * f] * (agg > 0)
        else:
            dagg = dout / heads
        dalpha = dagg @ wh.T
        dwh = alpha.T @ dagg
        dlr = alpha * (dalpha - np.sum(alpha * dalpha, axis=1, keepdims=True))
        de = np.where(e > 0, dlr, LEAKY_SLOPE * dlr)
        de = np.where(ctx.mask, de, 0.0)
        ds = de.sum(axis=1)
        dr = de.sum(axis=0)
        da_s[t] = wh.T @ ds
        da_d[t] = wh.T @ dr
        dwh += np.outer(ds, layer["a_src"][t]) + np.outer(dr, layer["a_dst"][t])
        dW[t] = z.T @ dwh
        dz += dwh @ layer["W"][t].T
    return {"W": dW, "a_src": da_s, "a_dst": da_d}, dz


# ---------------------------------------------------------------------------
# network


def _check_input(params, cfg, x):
    layer0 = params[0]["W"]
    expected = layer0.shape[0] // 2 if cfg.arch == "sage" else layer0.shape[-2]
    if x.shape[1] != expected:
        raise ConfigurationError(f"input has {x.shape[1]} features, model expects {expected}")


def _forward(params, x, ctx, mats=None):
    cfg = ctx.cfg
    _check_input(params, cfg, x)
    z = x
    zs, caches = [], []
    last = len(params) - 1
    for li, layer in enumerate(params):
        hidden = li < last
        if cfg.arch == "gcn":
            z, c = _gcn_fwd(layer, z, ctx, hidden)
        elif cfg.arch == "sage":
            z, c = _sage_fwd(layer, z, mats[li], hidden)
        else:
            z, c = _gat_fwd(layer, z, ctx, hidden)
        caches.append(c)
        if hidden:
            zs.append(z)
    return z, zs, caches


def _backward(params, caches, dlogits, ctx, mats=None):
    cfg = ctx.cfg
    grads = [None] * len(params)
    d = dlogits
    last = len(params) - 1
    for li in range(last, -1, -1):
        hidden = li < last
        if cfg.arch == "gcn":
            grads[li], d = _gcn_bwd(params[li], caches[li], d, ctx, hidden)
        elif cfg.arch == "sage":
            grads[li], d = _sage_bwd(params[li], caches[li], d, mats[li], hidden)
        else:
            grads[li], d = _gat_bwd(params[li], caches[li], d, ctx, hidden)
    return grads


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _as_index(mask, n):
    m = np.asarray(mask)
    if m.dtype == bool:
        if m.shape != (n,):
            raise ValueError("boolean mask must have one entry per node")
        return np.flatnonzero(m)
    return np.asarray(m, dtype=np.int64).ravel()


def _ce(probs, labels, idx):
    p = probs[idx, labels[idx]]
    return float(-np.mean(np.log(np.maximum(p, 1e-300))))


def _loss_and_grad(params, g, ctx, idx, mats=None):
    logits, _, caches = _forward(params, g.features, ctx, mats)
    probs = softmax(logits)
    loss = _ce(probs, g.labels, idx)
    dlog = np.zeros_like(probs)
    dlog[idx] = probs[idx]
    dlog[idx, g.labels[idx]] -= 1.0
    dlog /= len(idx)
    return loss, _backward(params, caches, dlog, ctx, mats), probs


def _inference_mats(m: GnnModel, ctx, sage_seed):
    if m.config.arch != "sage":
        return None
    seed = [m.config.seed, _INFER_STREAM] if sage_seed is None else sage_seed
    return ctx.sage_mats(seed)


def forward(m: GnnModel, g: Graph, sage_seed=None) -> EmbeddingSet:
    ctx = _Context(g, m.config)
    logits, zs, _ = _forward(m.params, g.features, ctx, _inference_mats(m, ctx, sage_seed))
    return EmbeddingSet(Z=zs, O=softmax(logits))


def masked_loss(m: GnnModel, g: Graph, mask, sage_seed=None) -> float:
    idx = _as_index(mask, g.n)
    if len(idx) == 0:
        raise ValueError("mask is empty")
    return _ce(forward(m, g, sage_seed).O, g.labels, idx)


def gradient_vector(m: GnnModel, g: Graph, mask, sage_seed=None) -> np.ndarray:
    """Gradient of the masked mean cross-entropy, flattened in parameter order."""
    idx = _as_index(mask, g.n)
    if len(idx) == 0:
        raise ValueError("mask is empty")
    ctx = _Context(g, m.config)
    _, grads, _ = _loss_and_grad(m.params, g, ctx, idx, _inference_mats(m, ctx, sage_seed))
    return flatten(grads)


def loss_from_flat(m: GnnModel, g: Graph, mask, vec, sage_seed=None) -> float:
    return masked_loss(m.with_flat(vec), g, mask, sage_seed)


def train(g: Graph, cfg: GnnConfig, train_mask, test_mask, grad_hook=None):
    """Full-batch Adam on the train-mask cross-entropy with test-loss early stopping.

    ``grad_hook(flat_grad, epoch)`` may replace the flat gradient before each
    optimiser step (used by the noisy-gradient defence).
    """
    tr = _as_index(train_mask, g.n)
    te = _as_index(test_mask, g.n)
    if len(tr) == 0 or len(te) == 0:
        raise ValueError("train and test masks must be non-empty")
    if np.intersect1d(tr, te).size:
        raise ValueError("train and test masks must be disjoint")
    if g.num_classes > cfg.classes:
        raise ConfigurationError(f"graph has {g.num_classes} classes, config allows {cfg.classes}")
    params = init_params(cfg, g.d)
    ctx = _Context(g, cfg)
    opt = Adam(lr=cfg.lr)
    vec = flatten(params)
    report = TrainReport()
    best_loss, best_vec, wait = np.inf, vec.copy(), 0
    for epoch in range(1, cfg.max_epochs + 1):
        mats = ctx.sage_mats([cfg.seed, epoch]) if cfg.arch == "sage" else None
        loss, grads, probs = _loss_and_grad(params, g, ctx, tr, mats)
        test_loss = _ce(probs, g.labels, te)
        if not (np.isfinite(loss) and np.isfinite(test_loss)):
            raise DivergenceError(epoch, loss if not np.isfinite(loss) else test_loss)
        pred = probs.argmax(axis=1)
        report.train_loss.append(loss)
        report.test_loss.append(test_loss)
        report.train_acc.append(float(np.mean(pred[tr] == g.labels[tr])))
        report.test_acc.append(float(np.mean(pred[te] == g.labels[te])))
        if test_loss < best_loss:
            best_loss, best_vec, wait = test_loss, vec.copy(), 0
            report.best_epoch = epoch
        else:
            wait += 1
            if wait >= cfg.patience:
                report.stop_reason = "patience"
                break
        flat_grad = flatten(grads)
        if grad_hook is not None:
            flat_grad = grad_hook(flat_grad, epoch)
        vec = opt.step(vec, flat_grad)
        if not np.all(np.isfinite(vec)):
            raise DivergenceError(epoch, float("nan"))
        params = unflatten(vec, params)
    model = GnnModel(config=cfg, params=unflatten(best_vec, params), in_dim=g.d, epochs_trained=report.epochs)
    return model, report


def accuracy(m: GnnModel, g: Graph, mask=None) -> float:
    pred = forward(m, g).O.argmax(axis=1)
    idx = np.arange(g.n) if mask is None else _as_index(mask, g.n)
    return float(np.mean(pred[idx] == g.labels[idx]))


# ---------------------------------------------------------------------------
# serialisation


def _fmt_matrix(a: np.ndarray) -> str:
    return "[" + ",".join(format(float(x), ".17g") for x in a.ravel()) + "]"


def dumps_model(m: GnnModel) -> str:
    layers = []
    for layer in m.params:
        parts = []
        for k in _KEYS:
            if k in layer:
                parts.append(f'"{k}":{{"shape":{json.dumps(list(layer[k].shape))},"data":{_fmt_matrix(layer[k])}}}')
        layers.append("{" + ",".join(parts) + "}")
    head = json.dumps(
        {"format_version": FORMAT_VERSION, "config": asdict(m.config), "in_dim": m.in_dim, "epochs_trained": m.epochs_trained},
        sort_keys=True,
    )
    return head[:-1] + ',"layers":[' + ",".join(layers) + "]}\n"


def loads_model(text: str) -> GnnModel:
    obj = json.loads(text)
    if obj.get("format_version") != FORMAT_VERSION:
        raise ConfigurationError(f"unsupported model format {obj.get('format_version')!r}")
    params = [
        {k: np.array(v["data"], dtype=np.float64).reshape(v["shape"]) for k, v in layer.items()}
        for layer in obj["layers"]
    ]
    return GnnModel(GnnConfig(**obj["config"]), params, obj["in_dim"], obj["epochs_trained"])


def save_model(m: GnnModel, path) -> None:
    Path(path).write_text(dumps_model(m))


def load_model(path) -> GnnModel:
    return loads_model(Path(path).read_text())
