"""Graphs, group properties, constrained subgraph sampling and synthetic graphs.

Graphs are undirected and simple. Edges are stored as an ``(m, 2)`` integer
array with ``u < v`` in each row and rows sorted lexicographically, so two
graphs with the same edge set always compare equal array-wise.

Every graph also carries ``node_ids``: the identity of each row in the graph it
was cut from. Subgraph samples and overlap bookkeeping work on these ids so
that samples drawn from a partial graph and from its parent share one id space.
"""
from __future__ import annotations

import csv
import json
import math
import operator
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    ConsistencyError,
    DensifyFailedError,
    DuplicateEdgeError,
    GraphRangeError,
    ParseError,
    PropertySpecError,
    SamplingExhaustedError,
    SelfLoopError,
    SplitInfeasibleError,
)

ATTEMPTS_PER_SAMPLE = 50


def canonical_edges(edges) -> np.ndarray:
    arr = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if len(arr) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    arr = np.sort(arr, axis=1)
    order = np.lexsort((arr[:, 1], arr[:, 0]))
    return arr[order]


@dataclass(eq=False)
class Graph:
    n: int
    edges: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    property_col: int
    property_values: tuple = ()
    node_ids: np.ndarray | None = None
    name: str = "graph"

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim == 1:
            self.features = self.features.reshape(-1, 1)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        raw = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if len(raw):
            if raw.min() < 0 or raw.max() >= self.n:
                bad = raw[(raw < 0).any(axis=1) | (raw >= self.n).any(axis=1)][0]
                raise GraphRangeError(f"edge ({bad[0]}, {bad[1]}) outside [0, {self.n})")
            loops = raw[:, 0] == raw[:, 1]
            if loops.any():
                u = int(raw[loops][0, 0])
                raise SelfLoopError(f"self-loop on node {u}")
        edges = canonical_edges(raw)
        if len(edges) > 1:
            dup = (np.diff(edges, axis=0) == 0).all(axis=1)
            if dup.any():
                u, v = edges[1:][dup][0]
                raise DuplicateEdgeError(f"duplicate edge ({u}, {v})")
        self.edges = edges
        if self.features.shape[0] != self.n:
            raise ConsistencyError(f"features have {self.features.shape[0]} rows, expected {self.n}")
        if self.labels.shape != (self.n,):
            raise ConsistencyError(f"labels have {self.labels.shape[0]} entries, expected {self.n}")
        if not 0 <= self.property_col < self.features.shape[1]:
            raise ConsistencyError(
                f"property_col {self.property_col} outside feature width {self.features.shape[1]}"
            )
        col = self.features[:, self.property_col]
        if not np.all(col == np.round(col)):
            raise ConsistencyError("property column must hold integer codes")
        present = tuple(sorted(int(v) for v in np.unique(col)))
        if self.property_values:
            self.property_values = tuple(sorted(int(v) for v in self.property_values))
            extra = set(present) - set(self.property_values)
            if extra:
                raise ConsistencyError(f"property column holds undeclared values {sorted(extra)}")
        else:
            self.property_values = present
        if self.node_ids is None:
            self.node_ids = np.arange(self.n, dtype=np.int64)
        else:
            self.node_ids = np.asarray(self.node_ids, dtype=np.int64)
            if self.node_ids.shape != (self.n,):
                raise ConsistencyError("node_ids must have one entry per node")

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.n else 0

    @property
    def property_codes(self) -> np.ndarray:
        return self.features[:, self.property_col].astype(np.int64)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        if len(self.edges):
            a[self.edges[:, 0], self.edges[:, 1]] = 1.0
            a[self.edges[:, 1], self.edges[:, 0]] = 1.0
        return a

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(u), int(v)) for u, v in self.edges}

    def induced(self, local_nodes, extra_edges=None, name=None) -> "Graph":
        """Induced subgraph on ``local_nodes`` (row indices of this graph).

        ``extra_edges`` are additional pairs given in this graph's row indices.
        """
        local_nodes = np.asarray(local_nodes, dtype=np.int64)
        pos = np.full(self.n, -1, dtype=np.int64)
        pos[local_nodes] = np.arange(len(local_nodes))
        keep = (pos[self.edges[:, 0]] >= 0) & (pos[self.edges[:, 1]] >= 0) if len(self.edges) else np.zeros(0, bool)
        sub = pos[self.edges[keep]] if len(self.edges) else np.zeros((0, 2), np.int64)
        if extra_edges is not None and len(extra_edges):
            sub = np.vstack([sub, pos[np.asarray(extra_edges, dtype=np.int64)]])
        return Graph(
            n=len(local_nodes),
            edges=sub,
            features=self.features[local_nodes],
            labels=self.labels[local_nodes],
            property_col=self.property_col,
            property_values=self.property_values,
            node_ids=self.node_ids[local_nodes],
            name=name or f"{self.name}[sub]",
        )

    def without_node(self, v: int) -> "Graph":
        keep = np.setdiff1d(np.arange(self.n), [v])
        return self.induced(keep, name=f"{self.name}-node{v}")

    def without_edge(self, u: int, v: int) -> "Graph":
        u, v = min(u, v), max(u, v)
        mask = ~((self.edges[:, 0] == u) & (self.edges[:, 1] == v))
        if mask.all():
            raise GraphRangeError(f"edge ({u}, {v}) not in graph")
        return Graph(
            n=self.n,
            edges=self.edges[mask],
            features=self.features,
            labels=self.labels,
            property_col=self.property_col,
            property_values=self.property_values,
            node_ids=self.node_ids,
            name=f"{self.name}-edge{u}_{v}",
        )


# ---------------------------------------------------------------------------
# loading


def _parse_int(tok, path, line_no):
    try:
        return int(tok)
    except ValueError:
        raise ParseError(path, line_no, f"expected an integer, got {tok!r}") from None


def load_graph(edge_path, feature_path, property_col: int, property_values=()) -> Graph:
    """Read an edge list and a feature CSV into a validated :class:`Graph`."""
    edge_path, feature_path = Path(edge_path), Path(feature_path)
    rows = []
    labels = []
    with open(feature_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0].strip() != "node_id" or header[-1].strip() != "label":
            raise ParseError(feature_path, 1, "header must be node_id,f0,...,label")
        width = len(header) - 2
        for line_no, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != width + 2:
                raise ParseError(feature_path, line_no, f"expected {width + 2} fields, got {len(rec)}")
            node = _parse_int(rec[0], feature_path, line_no)
            if node != len(rows):
                raise ParseError(feature_path, line_no, f"rows must be sorted by node_id; expected {len(rows)}, got {node}")
            try:
                rows.append([float(c) for c in rec[1:-1]])
            except ValueError:
                raise ParseError(feature_path, line_no, "non-numeric feature value") from None
            labels.append(_parse_int(rec[-1], feature_path, line_no))
    n = len(rows)
    edges = []
    with open(edge_path) as fh:
        for line_no, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            if len(parts) != 2:
                raise ParseError(edge_path, line_no, f"expected 'u<TAB>v', got {s!r}")
            u, v = (_parse_int(t, edge_path, line_no) for t in parts)
            if u == v:
                raise SelfLoopError(f"{edge_path}:{line_no}: self-loop on node {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise GraphRangeError(
                    f"{edge_path}:{line_no}: node id out of range [0, {n}) in edge ({u}, {v})"
                )
            edges.append((u, v))
    return Graph(
        n=n,
        edges=np.array(edges, dtype=np.int64).reshape(-1, 2),
        features=np.array(rows, dtype=np.float64).reshape(n, -1),
        labels=np.array(labels, dtype=np.int64),
        property_col=property_col,
        property_values=property_values,
        name=edge_path.stem,
    )


def save_graph(g: Graph, edge_path, feature_path) -> None:
    with open(edge_path, "w") as fh:
        fh.write(f"# {g.name}: {g.n} nodes, {len(g.edges)} edges\n")
        for u, v in g.edges:
            fh.write(f"{u}\t{v}\n")
    with open(feature_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_id", *(f"f{j}" for j in range(g.d)), "label"])
        for i in range(g.n):
            w.writerow([i, *(repr(float(x)) for x in g.features[i]), int(g.labels[i])])


# ---------------------------------------------------------------------------
# properties

_COMPARATORS = {
    "<": operator.lt,
    "<=": operator.le,
    "≤": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
    "≥": operator.ge,
    "=": operator.eq,
    "==": operator.eq,
    "!=": operator.ne,
    "≠": operator.ne,
}
_CANONICAL = {"≤": "<=", "≥": ">=", "=": "==", "≠": "!="}
_REVERSED = {"<": ">", ">": "<", "<=": ">=", ">=": "<=", "==": "==", "!=": "!="}
_COMPLEMENT = {"<": ">=", ">=": "<", ">": "<=", "<=": ">", "==": "!=", "!=": "=="}


def _norm_group(level, group):
    if level == "node":
        if isinstance(group, bool) or not isinstance(group, (int, np.integer)):
            raise PropertySpecError(f"node-level group must be an integer code, got {group!r}")
        return int(group)
    if group in ("same", "diff"):
        return group
    if isinstance(group, (list, tuple)) and len(group) == 2:
        a, b = sorted(int(x) for x in group)
        return (a, b)
    raise PropertySpecError(f"link-level group must be 'same', 'diff' or a value pair, got {group!r}")


@dataclass(frozen=True)
class PropertySpec:
    """``COUNT(lhs) <comparator> COUNT(rhs)`` over node or link groups."""

    level: str
    lhs: object
    rhs: object
    comparator: str = ">"
    property_col: int | None = None

    def __post_init__(self):
        if self.level not in ("node", "link"):
            raise PropertySpecError(f"level must be 'node' or 'link', got {self.level!r}")
        if self.comparator not in _COMPARATORS:
            raise PropertySpecError(f"unknown comparator {self.comparator!r}")
        object.__setattr__(self, "comparator", _CANONICAL.get(self.comparator, self.comparator))
        object.__setattr__(self, "lhs", _norm_group(self.level, self.lhs))
        object.__setattr__(self, "rhs", _norm_group(self.level, self.rhs))
        if self.lhs == self.rhs:
            raise PropertySpecError("lhs and rhs groups must differ")

    def swapped(self) -> "PropertySpec":
        return PropertySpec(self.level, self.rhs, self.lhs, _REVERSED[self.comparator], self.property_col)

    def with_comparator(self, comparator: str) -> "PropertySpec":
        return PropertySpec(self.level, self.lhs, self.rhs, comparator, self.property_col)

    def complement(self) -> "PropertySpec":
        return self.with_comparator(_COMPLEMENT[self.comparator])

    def groups(self):
        return (self.lhs, self.rhs)

    def to_json(self) -> dict:
        enc = lambda g: list(g) if isinstance(g, tuple) else g  # noqa: E731
        return {
            "level": self.level,
            "lhs": enc(self.lhs),
            "rhs": enc(self.rhs),
            "comparator": self.comparator,
            "property_col": self.property_col,
        }

    @classmethod
    def from_json(cls, obj) -> "PropertySpec":
        if isinstance(obj, (str, bytes)):
            obj = json.loads(obj)
        allowed = {"level", "lhs", "rhs", "comparator", "property_col"}
        unknown = set(obj) - allowed
        if unknown:
            raise PropertySpecError(f"unknown property fields {sorted(unknown)}")
        return cls(obj["level"], obj["lhs"], obj["rhs"], obj.get("comparator", ">"), obj.get("property_col"))


def _check_groups(values, p: PropertySpec):
    declared = set(values)
    for grp in p.groups():
        codes = [grp] if isinstance(grp, int) else (list(grp) if isinstance(grp, tuple) else [])
        for c in codes:
            if c not in declared:
                raise PropertySpecError(f"group value {c} not in declared values {sorted(declared)}")


def _link_member(group, cu, cv):
    if group == "same":
        return cu == cv
    if group == "diff":
        return cu != cv
    a, b = group
    return ((cu == a) & (cv == b)) | ((cu == b) & (cv == a))


def group_counts(codes: np.ndarray, edges: np.ndarray, p: PropertySpec) -> tuple[int, int]:
    """COUNT(lhs), COUNT(rhs) for property codes ``codes`` and edge array ``edges``."""
    if p.level == "node":
        return int(np.sum(codes == p.lhs)), int(np.sum(codes == p.rhs))
    if len(edges) == 0:
        return 0, 0
    cu, cv = codes[edges[:, 0]], codes[edges[:, 1]]
    return int(np.sum(_link_member(p.lhs, cu, cv))), int(np.sum(_link_member(p.rhs, cu, cv)))


def _resolve_col(g: Graph, p: PropertySpec) -> np.ndarray:
    if p.property_col is None or p.property_col == g.property_col:
        return g.property_codes
    return g.features[:, p.property_col].astype(np.int64)


def evaluate_property(g: Graph, p: PropertySpec) -> bool:
    _check_groups(g.property_values, p)
    lhs, rhs = group_counts(_resolve_col(g, p), g.edges, p)
    return bool(_COMPARATORS[p.comparator](lhs, rhs))


def group_size_ratio(g: Graph, p: PropertySpec) -> float:
    _check_groups(g.property_values, p)
    lhs, rhs = group_counts(_resolve_col(g, p), g.edges, p)
    if rhs == 0:
        raise ZeroDivisionError("rhs group is empty; group size ratio undefined")
    return lhs / rhs


# ---------------------------------------------------------------------------
# subgraph samples


@dataclass(eq=False)
class SubgraphSample:
    """A node subset of a parent graph plus its induced (and densified) edges.

    ``local`` indexes rows of the parent graph; ``node_ids`` are the matching
    global ids. ``edges`` hold global-id pairs.
    """

    node_ids: np.ndarray
    local: np.ndarray
    edges: np.ndarray
    parent_id: str
    flag: bool
    extra_edges: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), np.int64))
    index: int = 0

    def graph(self, parent: Graph) -> Graph:
        extra = None
        if len(self.extra_edges):
            # translate global extra edges to parent rows
            order = np.argsort(parent.node_ids)
            rows = order[np.searchsorted(parent.node_ids, self.extra_edges, sorter=order)]
            extra = rows
        return parent.induced(self.local, extra_edges=extra, name=f"{self.parent_id}#{self.index}")


def _sample_edges(g: Graph, local: np.ndarray):
    """Induced edges of ``local`` in local-row ids of ``g``."""
    if len(g.edges) == 0:
        return np.zeros((0, 2), np.int64)
    inside = np.zeros(g.n, dtype=bool)
    inside[local] = True
    keep = inside[g.edges[:, 0]] & inside[g.edges[:, 1]]
    return g.edges[keep]


def _draw_nodes(rng, size, pool, lhs_pool, rest_pool, group_fraction):
    if group_fraction is None:
        return np.sort(rng.choice(pool, size=size, replace=False))
    k = int(rng.binomial(size, group_fraction))
    k = min(max(k, size - len(rest_pool)), len(lhs_pool))
    a = rng.choice(lhs_pool, size=k, replace=False)
    b = rng.choice(rest_pool, size=size - k, replace=False)
    return np.sort(np.concatenate([a, b]))


def sample_subgraphs(
    g: Graph,
    count: int,
    size: int,
    want_flag: bool,
    p: PropertySpec,
    seed: int,
    *,
    group_fraction: float | None = None,
    pool: Sequence[int] | None = None,
    start_index: int = 0,
) -> list[SubgraphSample]:
    """Rejection-sample ``count`` induced subgraphs whose property flag is ``want_flag``.

    Each sample has its own random stream derived from ``(seed, index)`` and at
    most ``ATTEMPTS_PER_SAMPLE`` draws, so the overall budget is 50 x count and
    the output does not depend on the order samples are produced in.

    ``group_fraction``, when given, draws every node slot from the lhs node
    group with that probability (uniformly within each group) instead of
    drawing a uniform subset; it is how group-prevalence sweeps are built.
    ``pool`` restricts sampling to a subset of node rows.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    pool_arr = np.arange(g.n) if pool is None else np.asarray(sorted(set(int(x) for x in pool)), dtype=np.int64)
    if not 1 <= size <= len(pool_arr):
        raise ValueError(f"size must be in [1, {len(pool_arr)}], got {size}")
    _check_groups(g.property_values, p)
    codes = _resolve_col(g, p)
    lhs_pool = rest_pool = None
    if group_fraction is not None:
        if not 0.0 <= group_fraction <= 1.0:
            raise ValueError("group_fraction must lie in [0, 1]")
        grp = p.lhs if p.level == "node" else None
        if grp is None:
            # link properties: bias toward the first declared value
            grp = g.property_values[0]
        lhs_pool = pool_arr[codes[pool_arr] == grp]
        rest_pool = pool_arr[codes[pool_arr] != grp]
    cmp = _COMPARATORS[p.comparator]
    out = []
    for i in range(start_index, start_index + count):
        rng = np.random.default_rng([seed, i])
        for _ in range(ATTEMPTS_PER_SAMPLE):
            local = _draw_nodes(rng, size, pool_arr, lhs_pool, rest_pool, group_fraction)
            sub = _sample_edges(g, local)
            lhs, rhs = group_counts(codes, sub, p) if p.level == "link" else group_counts(codes[local], sub, p)
            if bool(cmp(lhs, rhs)) == bool(want_flag):
                out.append(
                    SubgraphSample(
                        node_ids=g.node_ids[local],
                        local=local,
                        edges=canonical_edges(g.node_ids[sub]),
                        parent_id=g.name,
                        flag=bool(want_flag),
                        index=i,
                    )
                )
                break
        else:
            raise SamplingExhaustedError(
                f"no {'positive' if want_flag else 'negative'} sample of size {size} found in "
                f"{ATTEMPTS_PER_SAMPLE} attempts (sample {i}); consider densify() or a larger graph"
            )
    return out


def sample_flag(s: SubgraphSample, parent: Graph, p: PropertySpec) -> bool:
    return evaluate_property(s.graph(parent), p)


# ---------------------------------------------------------------------------
# train/test split


@dataclass
class OverlapReport:
    node_overlap: float
    shared_edges: int
    n_train: int
    n_test: int
    attempts: int


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def measure_overlap(train, test, key=lambda s: s.node_ids):
    """Fraction of test nodes seen in training samples, and the shared-edge count."""
    train_nodes = set()
    for s in train:
        train_nodes.update(int(x) for x in key(s))
    test_nodes = set()
    for s in test:
        test_nodes.update(int(x) for x in key(s))
    node_ov = len(test_nodes & train_nodes) / len(test_nodes) if test_nodes else 0.0
    train_edges = set()
    for s in train:
        train_edges.update(map(tuple, s.edges.tolist()))
        train_edges.update(map(tuple, s.extra_edges.tolist()))
    shared = set()
    for s in test:
        for e in map(tuple, s.edges.tolist()):
            if e in train_edges:
                shared.add(e)
        for e in map(tuple, s.extra_edges.tolist()):
            if e in train_edges:
                shared.add(e)
    return node_ov, len(shared)


def split_train_test(
    samples: Sequence[SubgraphSample],
    train_frac: float,
    max_node_overlap: float,
    forbid_link_overlap: bool,
    seed: int,
):
    """Class-balanced split that respects node- and link-overlap budgets.

    Each attempt grows the test set greedily from a random seed sample, always
    taking the candidate of a still-needed class that shares the most nodes
    with the test set so far. Samples drawn from nearby regions therefore end
    up on the same side. The first attempt meeting both budgets wins.
    """
    if not 0.0 < train_frac < 1.0:
        raise ValueError("train_frac must lie in (0, 1)")
    samples = list(samples)
    total = len(samples)
    if total < 2:
        raise SplitInfeasibleError("need at least two samples to split")
    flags = np.array([s.flag for s in samples], dtype=bool)
    n_train = _round_half_up(train_frac * total)
    n_train = min(max(n_train, 1), total - 1)
    n_pos = int(flags.sum())
    n_train_pos = min(_round_half_up(n_train * n_pos / total), n_pos)
    need_test = {True: n_pos - n_train_pos, False: (total - n_pos) - (n_train - n_train_pos)}

    universe = sorted({int(x) for s in samples for x in s.node_ids})
    index = {v: i for i, v in enumerate(universe)}
    member = np.zeros((total, len(universe)), dtype=np.float64)
    for r, s in enumerate(samples):
        member[r, [index[int(x)] for x in s.node_ids]] = 1.0

    rng = np.random.default_rng(seed)
    best = None
    attempts = 2 * ATTEMPTS_PER_SAMPLE if total > 2 else 1
    for attempt in range(1, attempts + 1):
        remaining = dict(need_test)
        in_test = np.zeros(total, dtype=bool)
        test_nodes = np.zeros(len(universe))
        jitter = rng.random(total) * 1e-3
        while remaining[True] + remaining[False] > 0:
            eligible = ~in_test & np.array([remaining[bool(f)] > 0 for f in flags])
            if not test_nodes.any():
                cand = np.flatnonzero(eligible)
                pick = int(cand[rng.integers(len(cand))])
            else:
                score = member @ test_nodes + jitter
                score[~eligible] = -np.inf
                pick = int(np.argmax(score))
            in_test[pick] = True
            remaining[bool(flags[pick])] -= 1
            test_nodes = np.maximum(test_nodes, member[pick])
        train = [samples[i] for i in range(total) if not in_test[i]]
        test = [samples[i] for i in range(total) if in_test[i]]
        node_ov, shared = measure_overlap(train, test)
        ok = node_ov <= max_node_overlap + 1e-12 and (shared == 0 or not forbid_link_overlap)
        if ok:
            return train, test, OverlapReport(node_ov, shared, len(train), len(test), attempt)
        if best is None or node_ov < best[0]:
            best = (node_ov, shared)
    raise SplitInfeasibleError(
        f"no split met max_node_overlap={max_node_overlap} "
        f"(best {best[0]:.3f}, shared edges {best[1]}) in {attempts} attempts"
    )


# ---------------------------------------------------------------------------
# densify


def densify(
    s: SubgraphSample,
    extra_edges: int,
    p: PropertySpec,
    target_flag: bool,
    seed: int,
    parent: Graph,
) -> SubgraphSample:
    """Add random absent edges among the sample's nodes until ``target_flag`` holds."""
    if extra_edges < 1:
        raise ValueError("extra_edges must be >= 1")
    ids = np.asarray(s.node_ids)
    present = {tuple(e) for e in s.edges.tolist()} | {tuple(e) for e in s.extra_edges.tolist()}
    absent = [
        (int(ids[i]), int(ids[j]))
        for i in range(len(ids))
        for j in range(i + 1, len(ids))
        if (int(ids[i]), int(ids[j])) not in present
    ]
    if not absent:
        raise DensifyFailedError("sample is complete; no edge can be added")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(absent))
    codes = _resolve_col(parent, p)
    row_of = {int(v): i for i, v in enumerate(parent.node_ids)}
    local_codes = {int(v): int(codes[row_of[int(v)]]) for v in ids}
    all_edges = [tuple(e) for e in s.edges.tolist()] + [tuple(e) for e in s.extra_edges.tolist()]
    added = []
    cmp = _COMPARATORS[p.comparator]

    def flag_now():
        e = np.array(all_edges + added, dtype=np.int64).reshape(-1, 2)
        if p.level == "node":
            c = np.array([local_codes[int(v)] for v in ids])
            return bool(cmp(*group_counts(c, e, p)))
        remap = {int(v): i for i, v in enumerate(ids)}
        c = np.array([local_codes[int(v)] for v in ids])
        le = np.array([[remap[u], remap[v]] for u, v in e], dtype=np.int64).reshape(-1, 2)
        return bool(cmp(*group_counts(c, le, p)))

    flag = flag_now()
    for k in order[:extra_edges]:
        if flag == bool(target_flag):
            break
        added.append(absent[int(k)])
        flag = flag_now()
    if flag != bool(target_flag):
        raise DensifyFailedError(
            f"target flag not reached after adding {len(added)} edge(s) (budget {extra_edges})"
        )
    new_extra = canonical_edges(list(map(tuple, s.extra_edges.tolist())) + added)
    return SubgraphSample(
        node_ids=s.node_ids,
        local=s.local,
        edges=s.edges,
        parent_id=s.parent_id,
        flag=flag,
        extra_edges=new_extra,
        index=s.index,
    )


# ---------------------------------------------------------------------------
# synthetic graphs


@dataclass(frozen=True)
class SyntheticConfig:
    n: int = 2000
    group_ratio: float = 0.5
    rho: float = 0.8
    homophily: float = 0.7
    avg_degree: float = 10.0
    label_noise: float = 0.05
    classes: int = 2
    seed: int = 0
    n_features: int = 8
    label_skew: float = 0.9
    feature_shift: float = 2.0
    noise_disparity: float = 0.0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if not 0.0 < self.group_ratio < 1.0:
            raise ValueError("group_ratio must lie in (0, 1)")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        if not 0.0 <= self.homophily <= 1.0:
            raise ValueError("homophily must lie in [0, 1]")
        if not self.avg_degree > 0:
            raise ValueError("avg_degree must be > 0")
        if not 0.0 <= self.label_noise < 0.5:
            raise ValueError("label_noise must lie in [0, 0.5)")
        if self.classes < 2:
            raise ValueError("classes must be >= 2")
        if self.n_features < 5:
            raise ValueError("n_features must be >= 5")
        if not 0.0 <= self.label_skew <= 1.0:
            raise ValueError("label_skew must lie in [0, 1]")
        if not np.isfinite(self.feature_shift):
            raise ValueError("feature_shift must be finite")
        if not 0.0 <= self.noise_disparity <= 0.5 - self.label_noise:
            raise ValueError("noise_disparity must lie in [0, 0.5 - label_noise]")
        if self.avg_degree >= self.n - 1:
            raise ValueError("avg_degree must be below n - 1")


def _synthetic_edges(rng, groups, m, homophily):
    n = len(groups)
    members = [np.flatnonzero(groups == 0), np.flatnonzero(groups == 1)]
    seen = set()
    out = []
    while len(out) < m:
        batch = max(2 * (m - len(out)), 64)
        u = rng.integers(0, n, size=batch)
        same = rng.random(batch) < homophily
        target = np.where(same, groups[u], 1 - groups[u])
        pick = rng.random(batch)
        for uu, tt, pp in zip(u.tolist(), target.tolist(), pick.tolist()):
            pool = members[tt]
            if len(pool) == 0:
                continue
            vv = int(pool[int(pp * len(pool))])
            if uu == vv:
                continue
            key = (uu, vv) if uu < vv else (vv, uu)
            if key in seen:
                continue
            seen.add(key)
            out.append(key)
            if len(out) == m:
                break
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def generate_synthetic(cfg: SyntheticConfig) -> Graph:
    """Planted-disparity graph: a pure function of ``cfg``.

    Column 0 is the binary property feature (1 with probability
    ``group_ratio``). Column 1 copies it with probability ``(1 + rho) / 2`` and
    holds its complement otherwise. Remaining columns are standard normal,
    shifted by ``feature_shift`` for property value 1.

    The clean label cuts the first noise column (before the shift) into
    ``classes`` equal-mass bins, so the rule is the same for both groups.
    Labels are then replaced by a different class with probability
    ``label_noise`` for property value 1 and ``label_noise + noise_disparity``
    for property value 0. Finally each property-0 node is relabelled to class
    0 with probability ``label_skew``. What a trained model learns, and so
    what its outputs look like, depends on the group mix of its training
    graph.
    """
    rng = np.random.default_rng(cfg.seed)
    n, d = cfg.n, cfg.n_features
    prop = (rng.random(n) < cfg.group_ratio).astype(np.int64)
    agree = rng.random(n) < (1.0 + cfg.rho) / 2.0
    corr = np.where(agree, prop, 1 - prop)
    noise = rng.standard_normal((n, d - 2))
    x = np.column_stack([prop.astype(float), corr.astype(float), noise])

    score = noise[:, 0]
    cuts = np.quantile(score, np.linspace(0, 1, cfg.classes + 1)[1:-1])
    labels = np.searchsorted(cuts, score, side="right").astype(np.int64)
    rate = np.where(prop == 1, cfg.label_noise, cfg.label_noise + cfg.noise_disparity)
    flip = rng.random(n) < rate
    shift = rng.integers(1, cfg.classes, size=n)
    labels = np.where(flip, (labels + shift) % cfg.classes, labels)
    skew = (prop == 0) & (rng.random(n) < cfg.label_skew)
    labels = np.where(skew, 0, labels)
    x[:, 2:] += cfg.feature_shift * prop[:, None]

    m = int(round(n * cfg.avg_degree / 2.0))
    edges = _synthetic_edges(rng, prop, m, cfg.homophily)
    return Graph(
        n=n,
        edges=edges,
        features=x,
        labels=labels,
        property_col=0,
        property_values=(0, 1),
        name=f"synth-{cfg.seed}",
    )
