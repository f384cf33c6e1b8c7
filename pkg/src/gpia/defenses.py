"""Output perturbation defences, truncation and a noisy-gradient baseline.

Each defence changes what the adversary observes. ``evaluate_defense`` reruns
an attack with the defence applied to every observed output, shadow and target
side alike unless ``target_only`` is set, and reports the attack accuracy
next to the accuracy the defended target models still reach.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .attacks import (
    AdversaryKnowledge,
    AttackOutputs,
    AttackSpec,
    assemble_dataset,
    collect_outputs,
    fingerprint,
    fit_and_score,
    sub_seed,
)
from .errors import GpiaError, StageError, UsageError
from .gnn import GnnConfig, train
from .graph import Graph

METHODS = ("noisy-posterior", "noisy-embedding", "truncation", "dp-gradient", "topk-posterior", "label-only")
EMBEDDING_DEFENSES = ("noisy-embedding", "truncation")
POSTERIOR_DEFENSES = ("noisy-posterior", "topk-posterior", "label-only")
SWEEP_B = (0.1, 0.5, 1.0, 5.0, 10.0)
SWEEP_R = (0.01, 0.05, 0.1, 0.2, 0.3)
CSV_HEADER = ("method", "param", "attack_id", "attack_acc", "target_acc", "seed")

# which optional fields each method takes
_FIELDS = {
    "noisy-posterior": {"b"},
    "noisy-embedding": {"b", "target_layers"},
    "truncation": {"r", "target_layers"},
    "dp-gradient": {"b", "clip"},
    "topk-posterior": {"k"},
    "label-only": set(),
}
_REQUIRED = {
    "noisy-posterior": {"b"},
    "noisy-embedding": {"b"},
    "truncation": {"r"},
    "dp-gradient": {"b"},
    "topk-posterior": {"k"},
    "label-only": set(),
}


# ---------------------------------------------------------------------------
# primitives


def laplace_noise(M, b: float, seed) -> np.ndarray:
    """``M`` plus i.i.d. Laplace(0, b) noise. Nothing is clipped or renormalised."""
    if not b > 0:
        raise ValueError("Laplace scale b must be > 0")
    M = np.asarray(M, dtype=np.float64)
    rng = np.random.default_rng(seed)
    return M + rng.laplace(0.0, b, size=M.shape)


def truncated_length(d: int, r: float) -> int:
    if not 0.0 < r < 1.0:
        raise ValueError("truncation ratio must lie in (0, 1)")
    keep = int(np.floor(d * (1.0 - r)))
    if keep < 1:
        raise ValueError(f"truncating {d} dims at r={r} leaves nothing")
    return keep


def truncate_embeddings(Z, r: float, seed) -> np.ndarray:
    """Each row keeps its own random subset of floor(d(1-r)) columns, in order."""
    Z = np.asarray(Z, dtype=np.float64)
    n, d = Z.shape
    keep = truncated_length(d, r)
    rng = np.random.default_rng(seed)
    # argsort of uniform keys gives an independent random subset per row
    cols = np.sort(np.argsort(rng.random((n, d)), axis=1)[:, :keep], axis=1)
    return np.take_along_axis(Z, cols, axis=1)


def topk_posteriors(O, k: int) -> np.ndarray:
    """Zero all but the k largest entries of each row; ties keep the lower index."""
    O = np.asarray(O, dtype=np.float64)
    ell = O.shape[1]
    if not 1 <= k <= ell:
        raise ValueError(f"k must lie in [1, {ell}]")
    order = np.argsort(-O, axis=1, kind="stable")[:, :k]
    out = np.zeros_like(O)
    np.put_along_axis(out, order, np.take_along_axis(O, order, axis=1), axis=1)
    return out


def label_only(O) -> np.ndarray:
    return np.asarray(O).argmax(axis=1)


def one_hot(labels, ell: int) -> np.ndarray:
    out = np.zeros((len(labels), ell))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def dp_hook(epsilon: float, clip: float, seed):
    """Gradient hook: clip to norm ``clip``, then add Laplace(clip/epsilon) per coordinate."""
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    if not clip > 0:
        raise ValueError("clip must be > 0")
    rng = np.random.default_rng(seed)
    scale = clip / epsilon

    def hook(grad, epoch):
        norm = np.linalg.norm(grad)
        if norm > clip:
            grad = grad * (clip / norm)
        return grad + rng.laplace(0.0, scale, size=grad.shape)

    return hook


def dp_train(g: Graph, cfg: GnnConfig, epsilon: float, clip: float = 1.0, seed: int = 0, train_mask=None, test_mask=None):
    """Train with noisy clipped gradients. Without masks, a seeded 80/20 node split is used."""
    hook = dp_hook(epsilon, clip, seed)
    if train_mask is None or test_mask is None:
        perm = np.random.default_rng(sub_seed(seed, 0xD9)).permutation(g.n)
        n_tr = min(max(int(round(0.8 * g.n)), 1), g.n - 1)
        train_mask, test_mask = np.sort(perm[:n_tr]), np.sort(perm[n_tr:])
    return train(g, cfg, train_mask, test_mask, grad_hook=hook)


# ---------------------------------------------------------------------------
# specs and results


@dataclass(frozen=True)
class DefenseSpec:
    method: str
    b: float | None = None
    target_layers: tuple | None = None
    r: float | None = None
    k: int | None = None
    clip: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise UsageError(f"unknown defence {self.method!r}; expected one of {METHODS}")
        given = {f for f in ("b", "target_layers", "r", "k", "clip") if getattr(self, f) is not None}
        extra = given - _FIELDS[self.method]
        if extra:
            raise UsageError(f"{self.method} does not take {sorted(extra)}")
        missing = _REQUIRED[self.method] - given
        if missing:
            raise UsageError(f"{self.method} needs {sorted(missing)}")
        if self.b is not None and not self.b > 0:
            raise ValueError("b must be > 0")
        if self.r is not None and not 0.0 < self.r < 1.0:
            raise ValueError("r must lie in (0, 1)")
        if self.k is not None and self.k < 1:
            raise ValueError("k must be >= 1")
        if self.clip is not None and not self.clip > 0:
            raise ValueError("clip must be > 0")
        if self.target_layers is not None:
            layers = tuple(int(x) for x in self.target_layers)
            if not layers or min(layers) < 1:
                raise UsageError("target_layers are 1-based and non-empty")
            object.__setattr__(self, "target_layers", layers)

    @property
    def epsilon(self) -> float:
        if self.method != "dp-gradient":
            raise UsageError("epsilon only applies to dp-gradient")
        return 1.0 / self.b

    @property
    def param(self):
        """The swept value: b, r, k, or None for label-only."""
        return {"truncation": self.r, "topk-posterior": self.k}.get(self.method, self.b)

    def compatible(self, access: str) -> bool:
        if self.method in EMBEDDING_DEFENSES:
            return access == "white"
        if self.method in POSTERIOR_DEFENSES:
            return access == "black"
        return True

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "b": self.b,
            "target_layers": list(self.target_layers) if self.target_layers else None,
            "r": self.r,
            "k": self.k,
            "clip": self.clip,
            "seed": self.seed,
        }


@dataclass
class DefenseResult:
    method: str
    param: object
    attack_id: str
    attack_accuracy: float
    target_accuracy: float
    seed: int
    fingerprint: str

    def __post_init__(self):
        for v in (self.attack_accuracy, self.target_accuracy):
            if not 0.0 <= v <= 1.0:
                raise ValueError("accuracies must lie in [0, 1]")

    def row(self) -> list:
        param = "" if self.param is None else repr(self.param)
        return [self.method, param, self.attack_id, repr(self.attack_accuracy), repr(self.target_accuracy), self.seed]


def write_defense_csv(path, results: Sequence[DefenseResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in results:
            w.writerow(r.row())


# ---------------------------------------------------------------------------
# evaluation

_ROLE_TAG = {"train": 1, "test": 2}


def defended_view(dspec: DefenseSpec, o, role: str, index: int, run_seed: int, spec: AttackSpec):
    """The (Z list, O) one defended model shows the adversary."""
    s = sub_seed(dspec.seed, run_seed, _ROLE_TAG[role], index)
    Z, O = list(o.Z), o.O
    m = dspec.method
    if m == "noisy-posterior":
        O = laplace_noise(O, dspec.b, s)
    elif m == "topk-posterior":
        O = topk_posteriors(O, dspec.k)
    elif m == "label-only":
        # labels are released as one-hot rows so every posterior aggregation still applies
        O = one_hot(label_only(O), O.shape[1])
    elif m in EMBEDDING_DEFENSES:
        layers = dspec.target_layers or spec.layers
        for j in layers:
            if j > len(Z):
                raise UsageError(f"layer {j} requested but the model has {len(Z)} hidden layers")
            ls = sub_seed(s, j)
            Z[j - 1] = laplace_noise(Z[j - 1], dspec.b, ls) if m == "noisy-embedding" else truncate_embeddings(Z[j - 1], dspec.r, ls)
    return Z, O


def _target_accuracy(dspec, outputs, run_seed, spec):
    """Mean held-out node accuracy of the target models behind a posterior defence."""
    accs = []
    for i, o in enumerate(outputs.test):
        O = defended_view(dspec, o, "test", i, run_seed, spec)[1]
        idx = o.test_idx
        accs.append(np.mean(O[idx].argmax(axis=1) == o.labels[idx]))
    return float(np.mean(accs))


def _dp_trainer(dspec: DefenseSpec):
    def trainer(g, cfg, tr, te, seed):
        hook = dp_hook(dspec.epsilon, dspec.clip or 1.0, sub_seed(dspec.seed, seed))
        return train(g, cfg, tr, te, grad_hook=hook)[0]

    return trainer


def evaluate_defense(
    dspec: DefenseSpec,
    spec: AttackSpec,
    k: AdversaryKnowledge,
    target: Graph,
    cfg: GnnConfig,
    seed: int,
    outputs: AttackOutputs | None = None,
    target_only: bool = False,
) -> DefenseResult:
    """Attack accuracy and target accuracy with ``dspec`` deployed.

    ``outputs`` lets callers reuse undefended outputs across a sweep; the
    noisy-gradient defence always retrains. With ``target_only`` the adversary
    trains on clean shadow outputs and only target-side outputs are defended.
    """
    if not dspec.compatible(spec.access):
        raise UsageError(f"{dspec.method} does not apply to {spec.access}-box attack {spec.id}")
    if dspec.method == "dp-gradient":
        trainer = _dp_trainer(dspec)
        if target_only:
            clean = outputs or collect_outputs(spec, k, target, cfg, seed)
            noisy = collect_outputs(spec, k, target, cfg, seed, trainer=trainer)
            outputs = AttackOutputs(clean.train, noisy.test, noisy.overlap)
        else:
            outputs = collect_outputs(spec, k, target, cfg, seed, trainer=trainer)
        transform = None
    else:
        if outputs is None:
            outputs = collect_outputs(spec, k, target, cfg, seed)

        def transform(role, i, o):
            if target_only and role == "train":
                return o.Z, o.O
            return defended_view(dspec, o, role, i, seed, spec)

    try:
        ds = assemble_dataset(outputs, spec, seed, transform)
    except GpiaError as e:
        raise StageError("features", e) from e
    res = fit_and_score(ds, spec, seed)
    if dspec.method in POSTERIOR_DEFENSES:
        tacc = _target_accuracy(dspec, outputs, seed, spec)
    else:
        # embedding defences leave posteriors alone; dp outputs are already the noisy models'
        tacc = _plain_accuracy(outputs)
    fp = fingerprint({"defense": dspec.to_json(), "attack": spec.to_json(), "seed": seed, "target_only": target_only})
    return DefenseResult(dspec.method, dspec.param, spec.id, res.accuracy, tacc, seed, fp)


def _plain_accuracy(outputs) -> float:
    return float(np.mean([np.mean(o.O[o.test_idx].argmax(axis=1) == o.labels[o.test_idx]) for o in outputs.test]))
