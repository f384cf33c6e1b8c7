"""The six GPIA pipelines and the five baselines.

A run has three stages. ``collect_outputs`` samples positive and negative
subgraphs, trains one GNN per subgraph and records its embeddings and
posteriors. ``assemble_dataset`` turns those outputs into aligned feature
matrices. ``fit_and_score`` trains the attack classifier and scores it on the
target-side samples. ``run_attack`` chains the three.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.cluster.vq import kmeans2

from . import classifiers as clf
from .classifiers import ClassifierKind
from .errors import (
    DegenerateClusterError,
    DegenerateLabelError,
    GpiaError,
    KnowledgeError,
    StageError,
    UsageError,
)
from .features import (
    EMBEDDING_METHODS,
    POSTERIOR_METHODS,
    AlignmentMethod,
    FeatureVector,
    aggregate_embeddings,
    aggregate_posteriors,
    align,
    stack,
)
from .gnn import GnnConfig, _ce, forward, train
from .graph import (
    _COMPARATORS,
    Graph,
    OverlapReport,
    PropertySpec,
    SubgraphSample,
    group_counts,
    group_size_ratio,
    measure_overlap,
    sample_subgraphs,
)

ATTACK_IDS = ("A1", "A2", "A3", "A4", "A5", "A6")
# id -> (access, graphs the adversary must hold)
TAXONOMY = {
    "A1": ("white", ("partial",)),
    "A2": ("black", ("partial",)),
    "A3": ("white", ("shadow",)),
    "A4": ("black", ("shadow",)),
    "A5": ("white", ("partial", "shadow")),
    "A6": ("black", ("partial", "shadow")),
}
MIX_RATIOS = ("1:10", "1:4", "1:2", "1:1", "2:1", "4:1", "10:1")
_SOURCE_TAG = {"partial": 1, "shadow": 2, "target": 3}


def sub_seed(*parts) -> int:
    """Deterministic 63-bit seed derived from integer parts."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(2, np.uint64)[0] >> np.uint64(1))


def fingerprint(obj) -> str:
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class AdversaryKnowledge:
    partial_graph: Graph | None = None
    shadow_graph: Graph | None = None
    access: str = "black"
    mix_ratio: str = "1:1"

    def __post_init__(self):
        if self.partial_graph is None and self.shadow_graph is None:
            raise KnowledgeError("the adversary needs a partial graph, a shadow graph, or both")
        if self.access not in ("white", "black"):
            raise UsageError(f"access must be 'white' or 'black', got {self.access!r}")
        parse_mix(self.mix_ratio)


def parse_mix(ratio: str) -> tuple[int, int]:
    try:
        a, b = (int(x) for x in str(ratio).split(":"))
    except ValueError:
        raise UsageError(f"mix ratio must look like 'a:b', got {ratio!r}") from None
    if a < 1 or b < 1:
        raise UsageError("mix ratio parts must be >= 1")
    return a, b


@dataclass(frozen=True)
class AttackSpec:
    """One GPIA configuration.

    ``layers`` are 1-based hidden-layer indices (white-box only).
    ``group_fractions`` optionally fixes the expected share of lhs-group nodes
    in (positive, negative) samples; without it samples are uniform subsets.
    """

    id: str
    property: PropertySpec
    layers: tuple = ()
    aggregation: str | None = None
    alignment: AlignmentMethod = AlignmentMethod("tsne")
    classifier: ClassifierKind = ClassifierKind()
    n_train: int = 700
    n_test: int = 300
    sample_size: int = 100
    test_sample_size: int | None = None
    group_fractions: tuple | None = None
    max_node_overlap: float = 0.05
    node_train_frac: float = 0.8

    def __post_init__(self):
        if self.id not in ATTACK_IDS:
            raise UsageError(f"unknown attack id {self.id!r}")
        object.__setattr__(self, "layers", tuple(int(x) for x in self.layers))
        if self.aggregation is None:
            object.__setattr__(self, "aggregation", "embed-maxpool" if self.white_box else "posterior-concat")
        if self.white_box:
            if not self.layers:
                raise UsageError(f"{self.id} is white-box and needs at least one layer index")
            if any(x < 1 for x in self.layers):
                raise UsageError("layer indices are 1-based")
            if self.aggregation not in EMBEDDING_METHODS:
                raise UsageError(f"{self.id} needs an embedding aggregation, got {self.aggregation!r}")
        else:
            if self.layers:
                raise UsageError(f"{self.id} is black-box; layers must be empty")
            if self.aggregation not in POSTERIOR_METHODS:
                raise UsageError(f"{self.id} needs a posterior aggregation, got {self.aggregation!r}")
        if self.n_train < 2 or self.n_test < 2 or self.n_train % 2 or self.n_test % 2:
            raise UsageError("n_train and n_test must be even and >= 2 (classes are balanced)")
        if self.sample_size < 2 or (self.test_sample_size is not None and self.test_sample_size < 2):
            raise UsageError("sample sizes must be >= 2")
        if self.group_fractions is not None:
            gf = tuple(float(x) for x in self.group_fractions)
            if len(gf) != 2 or not all(0.0 <= x <= 1.0 for x in gf):
                raise UsageError("group_fractions must be two values in [0, 1]")
            object.__setattr__(self, "group_fractions", gf)
        if not 0.0 <= self.max_node_overlap <= 1.0:
            raise UsageError("max_node_overlap must lie in [0, 1]")
        if not 0.0 < self.node_train_frac < 1.0:
            raise UsageError("node_train_frac must lie in (0, 1)")

    @property
    def access(self) -> str:
        return TAXONOMY[self.id][0]

    @property
    def white_box(self) -> bool:
        return self.access == "white"

    @property
    def sources(self) -> tuple:
        return TAXONOMY[self.id][1]

    def check(self, k: AdversaryKnowledge) -> None:
        """Table-4 gating; raises before any training happens."""
        for src in self.sources:
            if getattr(k, f"{src}_graph") is None:
                raise KnowledgeError(f"{self.id} requires a {src} graph")
        if k.access != self.access:
            raise KnowledgeError(f"{self.id} is {self.access}-box but the knowledge grants {k.access}-box access")

    def to_json(self) -> dict:
        a = self.alignment
        return {
            "id": self.id,
            "property": self.property.to_json(),
            "layers": list(self.layers),
            "aggregation": self.aggregation,
            "alignment": {
                "tag": a.tag,
                "perplexity": a.perplexity,
                "iters": a.iters,
                "variance": a.variance,
                "k": a.k,
                "target_dim": a.target_dim,
                "epochs": a.epochs,
            },
            "classifier": self.classifier.to_json(),
            "n_train": self.n_train,
            "n_test": self.n_test,
            "sample_size": self.sample_size,
            "test_sample_size": self.test_sample_size,
            "group_fractions": list(self.group_fractions) if self.group_fractions else None,
            "max_node_overlap": self.max_node_overlap,
            "node_train_frac": self.node_train_frac,
        }

    def fingerprint(self) -> str:
        return fingerprint(self.to_json())


# ---------------------------------------------------------------------------
# per-sample outputs


@dataclass(eq=False)
class SampleOutput:
    """What one trained model reveals about one sampled subgraph."""

    sample: SubgraphSample
    source: str
    Z: list
    O: np.ndarray
    labels: np.ndarray
    codes: np.ndarray
    edges: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray
    train_loss: float
    test_loss: float

    @property
    def flag(self) -> bool:
        return self.sample.flag

    @property
    def gap(self) -> float:
        """Train minus held-out loss of this sample's model."""
        return self.train_loss - self.test_loss


Trainer = Callable[[Graph, GnnConfig, np.ndarray, np.ndarray, int], object]


def _default_trainer(g, cfg, tr, te, seed):
    return train(g, cfg, tr, te)[0]


def train_sample(
    parent: Graph, s: SubgraphSample, cfg: GnnConfig, source: str, seed: int,
    trainer: Trainer | None = None, node_train_frac: float = 0.8,
):
    g = s.graph(parent)
    rng = np.random.default_rng(sub_seed(seed, _SOURCE_TAG[source], s.index, 0x7A11))
    perm = rng.permutation(g.n)
    n_tr = min(max(int(round(node_train_frac * g.n)), 1), g.n - 1)
    tr, te = np.sort(perm[:n_tr]), np.sort(perm[n_tr:])
    model = (trainer or _default_trainer)(g, cfg, tr, te, sub_seed(seed, _SOURCE_TAG[source], s.index))
    emb = forward(model, g)
    return SampleOutput(
        sample=s,
        source=source,
        Z=emb.Z,
        O=emb.O,
        labels=g.labels.copy(),
        codes=g.property_codes.copy(),
        edges=g.edges.copy(),
        train_idx=tr,
        test_idx=te,
        train_loss=_ce(emb.O, g.labels, tr),
        test_loss=_ce(emb.O, g.labels, te),
    )


def _sample_balanced(g, count, size, spec, seed, source, pool=None):
    half = count // 2
    gf = spec.group_fractions
    s0 = sub_seed(seed, _SOURCE_TAG[source])
    pos = sample_subgraphs(g, half, size, True, spec.property, s0, group_fraction=gf[0] if gf else None, pool=pool)
    neg = sample_subgraphs(
        g, count - half, size, False, spec.property, s0,
        group_fraction=gf[1] if gf else None, pool=pool, start_index=half,
    )
    return pos + neg


def _train_all(g, samples, cfg, source, seed, trainer, frac):
    return [train_sample(g, s, cfg, source, seed, trainer, frac) for s in samples]


def mix_counts(n_train: int, ratio: str) -> tuple[int, int]:
    """Split ``n_train`` samples into (partial, shadow) counts, both even."""
    a, b = parse_mix(ratio)
    n_part = 2 * int(round(n_train * a / (a + b) / 2))
    n_part = min(max(n_part, 2), n_train - 2)
    return n_part, n_train - n_part


def build_shadow_outputs(k: AdversaryKnowledge, spec: AttackSpec, target_cfg: GnnConfig, seed: int, trainer=None):
    """Train one shadow model per balanced sample drawn from the attack's knowledge sources."""
    spec.check(k)
    if spec.sources == ("partial",):
        plan = [("partial", k.partial_graph, spec.n_train)]
    elif spec.sources == ("shadow",):
        plan = [("shadow", k.shadow_graph, spec.n_train)]
    else:
        n_part, n_shadow = mix_counts(spec.n_train, k.mix_ratio)
        plan = [("partial", k.partial_graph, n_part), ("shadow", k.shadow_graph, n_shadow)]
    out = []
    for source, g, count in plan:
        samples = _sample_balanced(g, count, spec.sample_size, spec, seed, source)
        out.extend(_train_all(g, samples, target_cfg, source, seed, trainer, spec.node_train_frac))
    return out


def _target_pool(spec, k, target):
    """Target rows usable for test samples: those the partial graph does not hold."""
    if k.partial_graph is None or "partial" not in spec.sources:
        return None
    held = np.isin(target.node_ids, k.partial_graph.node_ids)
    free = np.flatnonzero(~held)
    size = spec.test_sample_size or spec.sample_size
    return free if len(free) >= size else None


def build_target_outputs(spec: AttackSpec, k: AdversaryKnowledge, target: Graph, target_cfg: GnnConfig, seed: int, trainer=None):
    """Balanced target graphs (subgraphs of ``target``), each with its own target model."""
    size = spec.test_sample_size or spec.sample_size
    samples = _sample_balanced(target, spec.n_test, size, spec, seed, "target", pool=_target_pool(spec, k, target))
    return _train_all(target, samples, target_cfg, "target", seed, trainer, spec.node_train_frac)


@dataclass(eq=False)
class AttackOutputs:
    train: list
    test: list
    overlap: OverlapReport


def outputs_overlap(train: Sequence[SampleOutput], test: Sequence[SampleOutput]) -> OverlapReport:
    """Overlap between target-side samples and training samples from the same world.

    Shadow-graph samples come from a different graph and never overlap.
    """
    same_world = [o.sample for o in train if o.source != "shadow"]
    if not same_world:
        return OverlapReport(0.0, 0, len(train), len(test), 1)
    node_ov, shared = measure_overlap(same_world, [o.sample for o in test])
    return OverlapReport(node_ov, shared, len(train), len(test), 1)


def collect_outputs(spec, k, target, target_cfg, seed, trainer=None) -> AttackOutputs:
    spec.check(k)
    try:
        tr = build_shadow_outputs(k, spec, target_cfg, seed, trainer)
    except GpiaError as e:
        raise StageError("shadow", e) from e
    try:
        te = build_target_outputs(spec, k, target, target_cfg, seed, trainer)
    except GpiaError as e:
        raise StageError("target", e) from e
    report = outputs_overlap(tr, te)
    if report.shared_edges or report.node_overlap > spec.max_node_overlap + 1e-12:
        raise StageError(
            "split",
            GpiaError(f"train/test overlap {report.node_overlap:.3f} nodes, {report.shared_edges} edges exceeds budget"),
        )
    return AttackOutputs(tr, te, report)


# ---------------------------------------------------------------------------
# dataset


@dataclass(eq=False)
class AttackDataset:
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    overlap: OverlapReport
    lengths: dict = field(default_factory=dict)


# (role, index, output) -> (Z list, O)
Transform = Callable[[str, int, SampleOutput], tuple]


def output_vector(o: SampleOutput, spec: AttackSpec, Z=None, O=None) -> FeatureVector:
    Z = o.Z if Z is None else Z
    O = o.O if O is None else O
    sid = f"{o.source}:{o.sample.index}"
    if spec.white_box:
        if max(spec.layers) > len(Z):
            raise UsageError(f"layer {max(spec.layers)} requested but the model has {len(Z)} hidden layers")
        return aggregate_embeddings([Z[j - 1] for j in spec.layers], spec.aggregation, spec.layers, sid)
    return aggregate_posteriors(O, spec.aggregation, sid)


def _vectors(outputs, spec, role, transform):
    vecs = []
    for i, o in enumerate(outputs):
        if transform is None:
            vecs.append(output_vector(o, spec))
        else:
            Z, O = transform(role, i, o)
            vecs.append(output_vector(o, spec, Z, O))
    return vecs


def assemble_dataset(outputs: AttackOutputs, spec: AttackSpec, seed: int, transform: Transform | None = None) -> AttackDataset:
    if not outputs.train or not outputs.test:
        raise UsageError("outputs are empty")
    tr = _vectors(outputs.train, spec, "train", transform)
    te = _vectors(outputs.test, spec, "test", transform)
    a, b = len(tr[0]), len(te[0])
    if a != b:
        tr, te = align(tr, te, spec.alignment, sub_seed(seed, 0xA119))
    lengths = {"train": a, "test": b, "aligned": len(tr[0])}
    return AttackDataset(
        X_train=stack(tr),
        y_train=np.array([o.flag for o in outputs.train], dtype=np.int64),
        X_test=stack(te),
        y_test=np.array([o.flag for o in outputs.test], dtype=np.int64),
        overlap=outputs.overlap,
        lengths=lengths,
    )


# ---------------------------------------------------------------------------
# results


@dataclass
class AttackResult:
    attack_id: str
    accuracy: float
    truth: np.ndarray
    predictions: np.ndarray
    scores: np.ndarray
    seed: int
    layers: tuple = ()
    aggregation: str = ""
    alignment: str | None = None
    classifier: str = ""
    config_hash: str = ""

    @property
    def n_test(self) -> int:
        return int(len(self.truth))

    def to_json(self) -> dict:
        return {
            "attack_id": self.attack_id,
            "layers": list(self.layers),
            "aggregation": self.aggregation,
            "alignment": self.alignment,
            "classifier": self.classifier,
            "accuracy": self.accuracy,
            "n_test": self.n_test,
            "seed": self.seed,
            "config_hash": self.config_hash,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2) + "\n"

    def predictions_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "truth", "pred", "score"])
        for i, (t, p, s) in enumerate(zip(self.truth, self.predictions, self.scores)):
            w.writerow([i, int(t), int(p), repr(float(s))])
        return buf.getvalue()


def _result(attack_id, truth, pred, scores, seed, spec=None, classifier="", alignment=None, config_hash=""):
    truth = np.asarray(truth, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    return AttackResult(
        attack_id=attack_id,
        accuracy=clf.attack_accuracy(pred, truth),
        truth=truth,
        predictions=pred,
        scores=np.asarray(scores, dtype=np.float64),
        seed=seed,
        layers=spec.layers if spec else (),
        aggregation=spec.aggregation if spec else "",
        alignment=alignment,
        classifier=classifier,
        config_hash=config_hash or (spec.fingerprint() if spec else ""),
    )


def fit_and_score(ds: AttackDataset, spec: AttackSpec, seed: int, config_hash: str = "") -> AttackResult:
    try:
        model = clf.fit(ds.X_train, ds.y_train, spec.classifier, sub_seed(seed, 0xC1F))
        pred, scores = clf.predict(model, ds.X_test)
    except GpiaError as e:
        raise StageError("classifier", e) from e
    aligned = ds.lengths.get("train") != ds.lengths.get("test")
    return _result(
        spec.id, ds.y_test, pred, scores, seed, spec,
        classifier=spec.classifier.tag,
        alignment=spec.alignment.tag if aligned else None,
        config_hash=config_hash,
    )


def run_attack(spec: AttackSpec, k: AdversaryKnowledge, target_graph: Graph, target_cfg: GnnConfig, seed: int, config_hash: str = "") -> AttackResult:
    outputs = collect_outputs(spec, k, target_graph, target_cfg, seed)
    try:
        ds = assemble_dataset(outputs, spec, seed)
    except GpiaError as e:
        raise StageError("features", e) from e
    return fit_and_score(ds, spec, seed, config_hash)


# ---------------------------------------------------------------------------
# baselines


def _node_rows(o: SampleOutput, spec: AttackSpec) -> np.ndarray:
    if spec.white_box:
        return np.hstack([o.Z[j - 1] for j in spec.layers])
    return o.O


def _binary_codes(p: PropertySpec, values) -> tuple:
    """(positive code, negative code) the node-level AIA classifier separates."""
    if p.level == "node":
        return p.lhs, p.rhs
    vals = tuple(values)
    if len(vals) != 2:
        raise UsageError("attribute inference on link properties needs exactly two property values")
    return vals


def predict_flag_from_codes(codes, edges, p: PropertySpec) -> bool:
    lhs, rhs = group_counts(np.asarray(codes), np.asarray(edges).reshape(-1, 2), p)
    return bool(_COMPARATORS[p.comparator](lhs, rhs))


def knowledge_output(g: Graph, cfg: GnnConfig, seed: int, node_train_frac: float = 0.8, trainer=None) -> SampleOutput:
    """One model trained on a whole knowledge graph, with its outputs on that graph."""
    whole = SubgraphSample(
        node_ids=g.node_ids.copy(), local=np.arange(g.n), edges=g.edges.copy(), parent_id=g.name, flag=False, index=0
    )
    return train_sample(g, whole, cfg, "partial", sub_seed(seed, 0xA1A0), trainer, node_train_frac)


def baseline_aia(reference: SampleOutput, test_outputs, spec: AttackSpec, property_values, seed: int, node_classifier=None) -> AttackResult:
    """Baseline 1: infer every node's property value, then evaluate the property on the counts.

    The node classifier is fitted on ``reference``: the outputs of one model
    trained on the adversary's own graph, with that graph's true property
    values. ``node_classifier(rows) -> predicted codes`` overrides it.
    """
    p = spec.property
    pos_code, neg_code = _binary_codes(p, property_values)
    if node_classifier is None:
        X = _node_rows(reference, spec)
        codes = reference.codes
        keep = np.flatnonzero(np.isin(codes, (pos_code, neg_code)))
        y = (codes[keep] == pos_code).astype(np.int64)
        model = clf.fit(X[keep], y, ClassifierKind("mlp"), sub_seed(seed, 0xA1B))

        def node_classifier(rows):
            return np.where(clf.predict(model, rows)[0] == 1, pos_code, neg_code)

    preds = []
    for o in test_outputs:
        codes = node_classifier(_node_rows(o, spec))
        preds.append(int(predict_flag_from_codes(codes, o.edges, p)))
    truth = [int(o.flag) for o in test_outputs]
    return _result("baseline-aia", truth, preds, preds, seed, spec, classifier="mlp")


def _kmeans(X, seed, restarts=10):
    best = None
    for r in range(restarts):
        cent, lab = kmeans2(X, 2, minit="++", seed=np.random.default_rng(sub_seed(seed, r)))
        if len(np.unique(lab)) < 2:
            continue
        inertia = float(np.sum((X - cent[lab]) ** 2))
        if best is None or inertia < best[0] - 1e-12:
            best = (inertia, cent, lab)
    if best is None:
        raise DegenerateClusterError("k-means could not form two non-empty clusters")
    return best[1], best[2]


def baseline_kmeans(X_train, y_train, X_test, y_test, seed: int, spec=None) -> AttackResult:
    """Baseline 2: two-means clusters labelled by training majority; nearest centroid decides."""
    X_train = np.asarray(X_train, dtype=np.float64)
    if np.unique(X_train, axis=0).shape[0] < 2:
        raise DegenerateClusterError("need at least two distinct rows for k=2 clustering")
    cent, lab = _kmeans(X_train, seed)
    y_train = np.asarray(y_train, dtype=np.int64)
    cl_label = []
    for c in range(2):
        ys = y_train[lab == c]
        # ties go to the positive label, matching the classifiers' >= 0.5 rule
        cl_label.append(int(ys.mean() >= 0.5) if ys.size else 1)
    d = ((np.asarray(X_test)[:, None, :] - cent[None]) ** 2).sum(axis=2)
    near = d.argmin(axis=1)
    pred = np.array([cl_label[c] for c in near])
    return _result("baseline-kmeans", y_test, pred, pred, seed, spec, classifier="kmeans")


def baseline_meta(X_train, y_train, X_test, y_test, seed: int, spec=None, kinds=None) -> AttackResult:
    """Baseline 3: stacked MLP, RF and LR with a logistic meta-model on a 50/50 split."""
    X_train = np.asarray(X_train, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.int64)
    if np.unique(y_train).size < 2:
        raise DegenerateLabelError("training labels contain a single class")
    rng = np.random.default_rng(sub_seed(seed, 0x3E7A))
    base_idx, meta_idx = [], []
    for c in (0, 1):
        idx = rng.permutation(np.flatnonzero(y_train == c))
        h = (len(idx) + 1) // 2
        base_idx.extend(idx[:h])
        meta_idx.extend(idx[h:])
    base_idx, meta_idx = np.sort(base_idx), np.sort(meta_idx)
    kinds = kinds or [ClassifierKind("mlp"), ClassifierKind("rf"), ClassifierKind("lr")]
    models = [clf.fit(X_train[base_idx], y_train[base_idx], k, sub_seed(seed, 0x3E7B, i)) for i, k in enumerate(kinds)]
    meta_X = np.column_stack([clf.predict(m, X_train[meta_idx])[1] for m in models])
    test_X = np.column_stack([clf.predict(m, np.asarray(X_test))[1] for m in models])
    y_meta = y_train[meta_idx]
    if np.unique(y_meta).size < 2:
        raise DegenerateLabelError("meta split holds a single class")
    meta = clf.fit(meta_X, y_meta, ClassifierKind("lr"), seed)
    pred, scores = clf.predict(meta, test_X)
    return _result("baseline-meta", y_test, pred, scores, seed, spec, classifier="meta")


def best_threshold(values, flags) -> float:
    """Threshold t maximising accuracy of the rule ``value > t`` on known flags.

    Candidates are -inf, midpoints between consecutive distinct values, and
    +inf; among equally good candidates the smallest wins.
    """
    v = np.asarray(values, dtype=np.float64)
    f = np.asarray(flags).astype(bool)
    if v.size == 0:
        raise ValueError("need at least one flagged value")
    u = np.unique(v)
    cands = np.concatenate([[-np.inf], (u[:-1] + u[1:]) / 2, [np.inf]])
    accs = [np.mean((v > t) == f) for t in cands]
    return float(cands[int(np.argmax(accs))])


def threshold_attack(known_values, known_flags, target_values, target_flags, name, seed=0, spec=None) -> AttackResult:
    t = best_threshold(known_values, known_flags)
    tv = np.asarray(target_values, dtype=np.float64)
    pred = (tv > t).astype(np.int64)
    return _result(name, target_flags, pred, pred, seed, spec, classifier="threshold")


def baseline_dsad(knowledge_graphs: Sequence[Graph], flags, target_ratios, target_flags, p: PropertySpec, seed=0, spec=None) -> AttackResult:
    """Baseline 4: threshold the lhs/rhs group-size ratio learned from flagged knowledge graphs.

    ``target_ratios`` holds the ratio the adversary attributes to each target;
    without access to the targets this is the summary of its own knowledge.
    """
    ratios = [group_size_ratio(g, p) for g in knowledge_graphs]
    return threshold_attack(ratios, flags, target_ratios, target_flags, "baseline-dsad", seed, spec)


def baseline_lossgap(train_outputs, test_outputs, seed=0, spec=None) -> AttackResult:
    """Baseline 5: threshold each model's train-minus-held-out loss gap."""
    return threshold_attack(
        [o.gap for o in train_outputs],
        [o.flag for o in train_outputs],
        [o.gap for o in test_outputs],
        [o.flag for o in test_outputs],
        "baseline-lossgap",
        seed,
        spec,
    )


def run_baselines(outputs: AttackOutputs, ds: AttackDataset, spec: AttackSpec, k: AdversaryKnowledge, cfg: GnnConfig, seed: int) -> dict:
    """All five baselines on an already collected run."""
    out = {}
    values = None
    for g in (k.partial_graph, k.shadow_graph):
        if g is not None:
            values = g.property_values
            break
    ref_graph = k.partial_graph if k.partial_graph is not None else k.shadow_graph
    ref = knowledge_output(ref_graph, cfg, seed, spec.node_train_frac)
    out["aia"] = baseline_aia(ref, outputs.test, spec, values, seed)
    out["kmeans"] = baseline_kmeans(ds.X_train, ds.y_train, ds.X_test, ds.y_test, seed, spec)
    out["meta"] = baseline_meta(ds.X_train, ds.y_train, ds.X_test, ds.y_test, seed, spec)
    parents = {"partial": k.partial_graph, "shadow": k.shadow_graph}
    known = [o.sample.graph(parents[o.source]) for o in outputs.train]
    summary_graph = k.partial_graph if k.partial_graph is not None else k.shadow_graph
    summary = group_size_ratio(summary_graph, spec.property)
    out["dsad"] = baseline_dsad(
        known, [o.flag for o in outputs.train], [summary] * len(outputs.test),
        [o.flag for o in outputs.test], spec.property, seed, spec,
    )
    out["lossgap"] = baseline_lossgap(outputs.train, outputs.test, seed, spec)
    return out


def with_classifier(spec: AttackSpec, tag: str) -> AttackSpec:
    return replace(spec, classifier=ClassifierKind(tag))


def partial_graph(g: Graph, fraction: float, seed: int) -> Graph:
    """The adversary's partial view: the subgraph induced by a seeded random node fraction."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    rng = np.random.default_rng(sub_seed(seed, 0x9A27))
    size = max(1, int(round(fraction * g.n)))
    local = np.sort(rng.choice(g.n, size=size, replace=False))
    return g.induced(local, name=f"{g.name}/partial")
