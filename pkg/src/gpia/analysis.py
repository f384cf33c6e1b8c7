"""Diagnostics that explain why GPIA works: gradient influence of nodes and
links, per-group loss disparity, loss gaps, correlation, and exports."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .attacks import sub_seed
from .errors import GroupEmptyError, UndefinedCorrelationError, UsageError
from .features import FeatureVector, default_perplexity, stack, tsne
from .gnn import GnnConfig, GnnModel, _as_index, _ce, forward, gradient_vector, train
from .graph import Graph, PropertySpec

BUCKET_NAMES = ("Top-25%", "25-50%", "50-75%", "Last 25%")


# ---------------------------------------------------------------------------
# influence


def cosine_distance(a, b) -> float:
    """1 - cos(a, b), in [0, 2].

    Two zero vectors are at distance 0; a zero vector against a non-zero one
    has no direction to compare and scores 1.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise UsageError(f"gradient lengths differ: {a.size} vs {b.size}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 and nb == 0.0:
        return 0.0
    if na == 0.0 or nb == 0.0:
        return 1.0
    cos = float(a @ b) / (na * nb)
    return float(min(2.0, max(0.0, 1.0 - cos)))


def default_split(g: Graph, seed: int, frac: float = 0.8):
    perm = np.random.default_rng(sub_seed(seed, 0x1F1)).permutation(g.n)
    n_tr = min(max(int(round(frac * g.n)), 1), g.n - 1)
    return np.sort(perm[:n_tr]), np.sort(perm[n_tr:])


@dataclass
class InfluenceReport:
    kind: str
    elements: list
    scores: np.ndarray
    group_means: dict = field(default_factory=dict)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.size and (self.scores.min() < 0 or self.scores.max() > 2):
            raise ValueError("influence scores must lie in [0, 2]")

    def rows(self) -> list:
        if self.kind == "node":
            return [[int(e), repr(float(s))] for e, s in zip(self.elements, self.scores)]
        return [[int(e[0]), int(e[1]), repr(float(s))] for e, s in zip(self.elements, self.scores)]

    def header(self) -> list:
        return ["node", "influence"] if self.kind == "node" else ["u", "v", "influence"]


def fit_reference(g: Graph, cfg: GnnConfig, seed: int, train_mask=None, test_mask=None) -> tuple:
    """The full-graph model whose parameters every influence score is measured at."""
    if train_mask is None or test_mask is None:
        train_mask, test_mask = default_split(g, seed)
    model = train(g, cfg, train_mask, test_mask)[0]
    return model, _as_index(train_mask, g.n)


def _node_influence(model, g, tr, v):
    full = gradient_vector(model, g, tr)
    keep = np.setdiff1d(np.arange(g.n), [v])
    pos = np.full(g.n, -1)
    pos[keep] = np.arange(len(keep))
    tr_v = pos[tr[tr != v]]
    if len(tr_v) == 0:
        raise ValueError("removing the node empties the training mask")
    return cosine_distance(gradient_vector(model, g.without_node(v), tr_v), full)


def influence_node(g: Graph, v: int, cfg: GnnConfig, seed: int, train_mask=None, test_mask=None, model=None) -> float:
    """Distance between the training-loss gradient with and without node ``v``.

    Both gradients are taken at the parameters of the model trained on the
    full graph, so only the data differs between them.
    """
    if not 0 <= v < g.n:
        raise UsageError(f"node {v} outside [0, {g.n})")
    if model is None:
        model, tr = fit_reference(g, cfg, seed, train_mask, test_mask)
    else:
        tr = _as_index(train_mask if train_mask is not None else default_split(g, seed)[0], g.n)
    return _node_influence(model, g, tr, v)


def influence_edge(g: Graph, e, cfg: GnnConfig, seed: int, train_mask=None, test_mask=None, model=None) -> float:
    u, v = int(e[0]), int(e[1])
    if model is None:
        model, tr = fit_reference(g, cfg, seed, train_mask, test_mask)
    else:
        tr = _as_index(train_mask if train_mask is not None else default_split(g, seed)[0], g.n)
    full = gradient_vector(model, g, tr)
    return cosine_distance(gradient_vector(model, g.without_edge(u, v), tr), full)


def _edge_group(codes, e):
    a, b = sorted((int(codes[e[0]]), int(codes[e[1]])))
    return f"{a}-{b}"


def influence_scores(g: Graph, cfg: GnnConfig, seed: int, kind: str = "node", elements=None, train_mask=None, test_mask=None) -> InfluenceReport:
    """Scores for many nodes or links against one shared full-graph model."""
    if kind not in ("node", "edge"):
        raise UsageError("kind must be 'node' or 'edge'")
    if train_mask is None or test_mask is None:
        train_mask, test_mask = default_split(g, seed)
    model, tr = fit_reference(g, cfg, seed, train_mask, test_mask)
    full = gradient_vector(model, g, tr)
    codes = g.property_codes
    if kind == "node":
        elements = list(range(g.n)) if elements is None else [int(v) for v in elements]
        scores = [_node_influence(model, g, tr, v) for v in elements]
        groups = [int(codes[v]) for v in elements]
    else:
        elements = [tuple(int(x) for x in e) for e in (g.edges if elements is None else elements)]
        scores = [cosine_distance(gradient_vector(model, g.without_edge(*e), tr), full) for e in elements]
        groups = [_edge_group(codes, e) for e in elements]
    scores = np.asarray(scores)
    means = {}
    for key in sorted(set(groups), key=str):
        sel = np.array([x == key for x in groups])
        means[key] = float(scores[sel].mean())
    return InfluenceReport(kind, elements, scores, means)


# ---------------------------------------------------------------------------
# group disparity


@dataclass
class DisparityReport:
    lhs: object
    rhs: object
    loss_lhs: float
    loss_rhs: float
    acc_lhs: float
    acc_rhs: float
    n_lhs: int
    n_rhs: int

    def __post_init__(self):
        if self.loss_lhs < 0 or self.loss_rhs < 0:
            raise ValueError("losses must be >= 0")

    @property
    def loss_gap(self) -> float:
        return self.loss_lhs - self.loss_rhs

    def rows(self) -> list:
        return [
            [str(self.lhs), self.n_lhs, repr(self.loss_lhs), repr(self.acc_lhs)],
            [str(self.rhs), self.n_rhs, repr(self.loss_rhs), repr(self.acc_rhs)],
        ]


def group_metrics(m: GnnModel, g: Graph, p: PropertySpec, mask=None) -> DisparityReport:
    """Per-group mean cross-entropy and accuracy over ``mask`` (all nodes if omitted)."""
    if p.level != "node":
        raise UsageError("group metrics are defined for node-level groups")
    idx = np.arange(g.n) if mask is None else _as_index(mask, g.n)
    O = forward(m, g).O
    codes = g.property_codes
    stats = []
    for code in (p.lhs, p.rhs):
        sel = idx[codes[idx] == code]
        if len(sel) == 0:
            raise GroupEmptyError(f"no node with property value {code} in the mask")
        stats.append((_ce(O, g.labels, sel), float(np.mean(O[sel].argmax(axis=1) == g.labels[sel])), len(sel)))
    (l1, a1, n1), (l2, a2, n2) = stats
    return DisparityReport(p.lhs, p.rhs, l1, l2, a1, a2, n1, n2)


def _mean_loss(graphs, cfg, seed, tag):
    losses = []
    for i, g in enumerate(graphs):
        tr, te = default_split(g, sub_seed(seed, tag, i))
        model = train(g, cfg, tr, te)[0]
        losses.append(_ce(forward(model, g).O, g.labels, tr))
    return float(np.mean(losses))


def loss_gap_pos_neg(pos: Sequence[Graph], neg: Sequence[Graph], cfg: GnnConfig, seed: int) -> float:
    """|mean training loss over positive-graph models - same over negative ones|.

    Graphs are trained in order with split seeds that depend only on the
    position within their list, so identical lists give a gap of exactly 0.
    """
    if not pos or not neg:
        raise ValueError("both graph sets must be non-empty")
    return abs(_mean_loss(pos, cfg, seed, 1) - _mean_loss(neg, cfg, seed, 1))


def loss_gap_outputs(outputs) -> float:
    """The same gap read off already trained sample outputs (their training losses)."""
    pos = [o.train_loss for o in outputs if o.flag]
    neg = [o.train_loss for o in outputs if not o.flag]
    if not pos or not neg:
        raise ValueError("need both positive and negative outputs")
    return abs(float(np.mean(pos)) - float(np.mean(neg)))


# ---------------------------------------------------------------------------
# statistics


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise UsageError("x and y must have equal length")
    if x.size < 2:
        raise ValueError("need at least two pairs")
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt(dx @ dx), np.sqrt(dy @ dy)
    if sx == 0 or sy == 0:
        raise UndefinedCorrelationError("correlation with a constant sequence is undefined")
    return float(np.clip((dx @ dy) / (sx * sy), -1.0, 1.0))


def property_label_correlation(g: Graph) -> float:
    return pearson(g.property_codes, g.labels)


@dataclass
class Bucket:
    name: str
    size: int
    mean_gap: float
    accuracy: float


def gap_buckets(gaps, correct) -> list:
    """Sort by loss gap ascending and cut into four near-equal quartile buckets."""
    gaps = np.asarray(gaps, dtype=np.float64).ravel()
    correct = np.asarray(correct, dtype=np.float64).ravel()
    if gaps.size != correct.size:
        raise UsageError("gaps and correctness flags differ in length")
    if gaps.size < 4:
        raise ValueError("need at least 4 samples for quartile buckets")
    order = np.argsort(gaps, kind="stable")
    out = []
    for name, part in zip(BUCKET_NAMES, np.array_split(order, 4)):
        out.append(Bucket(name, len(part), float(gaps[part].mean()), float(correct[part].mean())))
    return out


def export_distribution(features: Sequence[FeatureVector], flags, seed: int, perplexity: float = 30.0) -> np.ndarray:
    """Rows ``(x, y, flag)`` from a joint 2-d t-SNE of the feature vectors."""
    if len(features) < 4:
        raise ValueError("need at least 4 feature vectors")
    X = stack(features)
    flags = np.asarray(flags, dtype=np.float64).ravel()
    if flags.size != X.shape[0]:
        raise UsageError("one flag per feature vector is required")
    Y = tsne(X, perplexity=default_perplexity(X.shape[0], perplexity), seed=seed)
    return np.column_stack([Y, flags])


# ---------------------------------------------------------------------------
# CSV output


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def bucket_rows(buckets) -> list:
    return [[b.name, b.size, repr(b.mean_gap), repr(b.accuracy)] for b in buckets]


def distribution_rows(coords) -> list:
    return [[repr(float(x)), repr(float(y)), int(f)] for x, y, f in coords]
