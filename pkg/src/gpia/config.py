"""Experiment configuration: one strict JSON file per run."""
from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .attacks import ATTACK_IDS, MIX_RATIOS, TAXONOMY, AttackSpec, fingerprint, parse_mix
from .classifiers import ClassifierKind
from .defenses import METHODS as DEFENSE_METHODS, DefenseSpec
from .errors import GpiaError, KnowledgeError
from .features import AlignmentMethod
from .gnn import GnnConfig
from .graph import PropertySpec, SyntheticConfig

OUTPUT_ENV = "GPIA_OUTPUT_DIR"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SyntheticSection(_Strict):
    n: int = 2000
    group_ratio: float = 0.5
    rho: float = 0.8
    homophily: float = 0.7
    avg_degree: float = 10.0
    label_noise: float = 0.05
    classes: int = 2
    seed: Optional[int] = None
    n_features: int = 8
    label_skew: float = 0.9
    feature_shift: float = 2.0
    noise_disparity: float = 0.0

    def build(self, default_seed: int) -> SyntheticConfig:
        d = self.model_dump()
        d["seed"] = default_seed if self.seed is None else self.seed
        return SyntheticConfig(**d)


class FileSection(_Strict):
    edges: str
    features: str
    property_col: int = 0
    property_values: list = Field(default_factory=list)


class GraphSection(_Strict):
    synthetic: Optional[SyntheticSection] = None
    files: Optional[FileSection] = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.synthetic is None) == (self.files is None):
            raise ValueError("a graph needs exactly one of 'synthetic' or 'files'")
        return self


class GnnSection(_Strict):
    arch: str = "gcn"
    hidden_layers: int = 2
    hidden_dim: int = 64
    classes: int = 2
    sage_neighbors: int = 10
    gat_heads: int = 4
    lr: float = 0.01
    max_epochs: int = 1500
    patience: int = 50
    seed: Optional[int] = None

    def build(self, default_seed: int, **override) -> GnnConfig:
        d = self.model_dump()
        d["seed"] = default_seed if self.seed is None else self.seed
        d.update(override)
        return GnnConfig(**d)


class PropertySection(_Strict):
    level: Literal["node", "link"] = "node"
    lhs: object = 1
    rhs: object = 0
    comparator: str = ">"
    property_col: Optional[int] = None

    def build(self) -> PropertySpec:
        return PropertySpec.from_json(self.model_dump())


class AlignmentSection(_Strict):
    tag: Literal["sampling", "tsne", "pca", "autoencoder"] = "tsne"
    perplexity: float = 30.0
    iters: int = 1000
    variance: float = 0.95
    k: Optional[int] = None
    target_dim: Optional[int] = None
    epochs: int = 500


class ClassifierSection(_Strict):
    tag: Literal["mlp", "rf", "lr"] = "mlp"
    layers: list[int] = Field(default_factory=lambda: [64, 32, 16])
    epochs: int = 1000
    lr: float = 0.001
    alpha: float = 1e-4
    max_depth: int = 150
    min_leaf: int = 1
    n_trees: int = 100
    C: float = 1.0
    max_iter: int = 100
    tol: float = 1e-4


class AttackSection(_Strict):
    id: str
    layers: list[int] = Field(default_factory=list)
    aggregation: Optional[str] = None
    alignment: AlignmentSection = AlignmentSection()
    classifier: ClassifierSection = ClassifierSection()
    n_train: int = 700
    n_test: int = 300
    sample_size: int = 100
    test_sample_size: Optional[int] = None
    group_fractions: Optional[list[float]] = None
    max_node_overlap: float = 0.05
    node_train_frac: float = 0.8
    mix_ratio: str = "1:1"
    baselines: bool = False

    @field_validator("id")
    @classmethod
    def _known(cls, v):
        if v not in ATTACK_IDS:
            raise ValueError(f"unknown attack id {v!r}")
        return v

    @field_validator("mix_ratio")
    @classmethod
    def _mix(cls, v):
        parse_mix(v)
        return v

    def build(self, prop: PropertySpec, **override) -> AttackSpec:
        d = self.model_dump(exclude={"mix_ratio", "baselines"})
        d.update(override)
        d["alignment"] = AlignmentMethod(**d["alignment"])
        d["classifier"] = ClassifierKind(**d["classifier"])
        d["group_fractions"] = tuple(d["group_fractions"]) if d["group_fractions"] else None
        return AttackSpec(property=prop, **d)


class DefenseSection(_Strict):
    method: str
    b: Optional[float] = None
    target_layers: Optional[list[int]] = None
    r: Optional[float] = None
    k: Optional[int] = None
    clip: Optional[float] = None
    seed: int = 0
    target_only: bool = False

    @field_validator("method")
    @classmethod
    def _known(cls, v):
        if v not in DEFENSE_METHODS:
            raise ValueError(f"unknown defence {v!r}")
        return v

    def build(self, **override) -> DefenseSpec:
        d = self.model_dump(exclude={"target_only"})
        d.update(override)
        return DefenseSpec(**d)


class SweepSection(_Strict):
    """Axes left unset do not vary. ``seeds`` defaults to the global seed."""

    noise_scales: Optional[list[float]] = None
    truncation_ratios: Optional[list[float]] = None
    mix_ratios: Optional[list[str]] = None
    depths: Optional[list[int]] = None
    group_ratios: Optional[list[float]] = None
    seeds: Optional[list[int]] = None

    @model_validator(mode="after")
    def _axes(self):
        for name in ("noise_scales", "truncation_ratios", "mix_ratios", "depths", "group_ratios", "seeds"):
            v = getattr(self, name)
            if v is not None and len(v) == 0:
                raise ValueError(f"sweep axis {name} is empty")
        for b in self.noise_scales or ():
            if not b > 0:
                raise ValueError(f"noise scale must be > 0, got {b}")
        for r in self.truncation_ratios or ():
            if not 0 < r < 1:
                raise ValueError(f"truncation ratio must lie in (0, 1), got {r}")
        for m in self.mix_ratios or ():
            if m not in MIX_RATIOS:
                parse_mix(m)
        for d in self.depths or ():
            if not 1 <= d <= 8:
                raise ValueError(f"depth must lie in [1, 8], got {d}")
        for g in self.group_ratios or ():
            if not 0 <= g <= 1:
                raise ValueError(f"group ratio must lie in [0, 1], got {g}")
        return self


class AnalysisSection(_Strict):
    influence_kind: Literal["node", "edge"] = "node"
    influence_elements: Optional[list] = None
    max_elements: int = 50
    gap_attack: int = 0


class ExperimentConfig(_Strict):
    seed: int = 0
    output_dir: str = "gpia-out"
    graph: GraphSection
    partial_fraction: Optional[float] = 0.5
    shadow: Optional[GraphSection] = None
    gnn: GnnSection = GnnSection()
    property: PropertySection = PropertySection()
    attacks: list[AttackSection] = Field(default_factory=list)
    defenses: list[DefenseSection] = Field(default_factory=list)
    sweep: Optional[SweepSection] = None
    analysis: AnalysisSection = AnalysisSection()

    @model_validator(mode="after")
    def _consistent(self):
        prop = self.property.build()
        for a in self.attacks:
            srcs = TAXONOMY[a.id][1]
            if "shadow" in srcs and self.shadow is None:
                raise KnowledgeError(f"{a.id} requires a shadow graph")
            if "partial" in srcs and self.partial_fraction is None:
                raise KnowledgeError(f"{a.id} requires a partial graph")
            a.build(prop)
        for d in self.defenses:
            d.build()
        return self

    def resolved_output(self) -> Path:
        return Path(os.environ.get(OUTPUT_ENV) or self.output_dir)

    def hash(self) -> str:
        return config_hash(self)


def config_hash(cfg: ExperimentConfig) -> str:
    """sha256 of the canonical JSON form; key order in the file does not matter.

    ``output_dir`` is left out: where results land does not change them.
    """
    return fingerprint(cfg.model_dump(mode="json", exclude={"output_dir"}))


class ConfigError(GpiaError):
    """Every violated constraint of a configuration file, one per line."""

    def __init__(self, problems: list):
        super().__init__("\n".join(problems))
        self.problems = problems


def _file_checks(cfg: ExperimentConfig, base: Path) -> list:
    problems = []
    for label, section in (("graph", cfg.graph), ("shadow", cfg.shadow)):
        if section is None or section.files is None:
            continue
        for key in ("edges", "features"):
            p = base / getattr(section.files, key)
            if not p.exists():
                problems.append(f"{label}.files.{key}: {p} does not exist")
    return problems


def validate(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError([f"{path}: {e}"]) from None
    try:
        cfg = ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        problems = [f"{'.'.join(str(x) for x in err['loc']) or '<root>'}: {err['msg']}" for err in e.errors()]
        raise ConfigError(problems) from None
    except GpiaError as e:
        raise ConfigError([f"{type(e).__name__}: {e}"]) from None
    problems = _file_checks(cfg, path.parent)
    if problems:
        raise ConfigError(problems)
    return cfg
