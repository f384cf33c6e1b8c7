"""Seeded synthetic worlds with a planted group-prevalence signal."""
from __future__ import annotations

from dataclasses import dataclass

from .attacks import AdversaryKnowledge, AttackSpec, partial_graph
from .classifiers import ClassifierKind
from .features import AlignmentMethod
from .gnn import GnnConfig
from .graph import Graph, PropertySpec, SyntheticConfig, generate_synthetic

# lhs group = property code 1; positive graphs hold more of it than of code 0
PLANTED_PROPERTY = PropertySpec("node", 1, 0, ">", property_col=0)


@dataclass
class World:
    target: Graph
    partial: Graph
    shadow: Graph | None = None

    def knowledge(self, access: str, mix_ratio: str = "1:1", use_partial=True, use_shadow=False) -> AdversaryKnowledge:
        return AdversaryKnowledge(
            partial_graph=self.partial if use_partial else None,
            shadow_graph=self.shadow if use_shadow else None,
            access=access,
            mix_ratio=mix_ratio,
        )


def planted_world(seed: int = 0, n: int = 2000, rho: float = 0.8, partial_fraction: float = 0.5, shadow: bool = False, **synth) -> World:
    target = generate_synthetic(SyntheticConfig(n=n, group_ratio=0.5, rho=rho, seed=seed, **synth))
    part = partial_graph(target, partial_fraction, seed)
    sh = None
    if shadow:
        # same planted mechanism, different size and wiring
        sh = generate_synthetic(
            SyntheticConfig(n=int(n * 0.75), group_ratio=0.5, rho=rho, homophily=0.55, avg_degree=6, seed=seed + 7919, **synth)
        )
    return World(target, part, sh)


def fixture_config(seed: int = 0, arch: str = "gcn", layers: int = 2, max_epochs: int = 300) -> GnnConfig:
    return GnnConfig(arch=arch, hidden_layers=layers, hidden_dim=64, classes=2, max_epochs=max_epochs, seed=seed)


def fixture_spec(attack_id: str, classifier: str = "mlp", aggregation=None, layers=(2,), pos=0.7, neg=0.3, n_train=200, n_test=100, sample_size=300, test_sample_size=None, alignment="tsne") -> AttackSpec:
    white = attack_id in ("A1", "A3", "A5")
    return AttackSpec(
        id=attack_id,
        property=PLANTED_PROPERTY,
        layers=tuple(layers) if white else (),
        aggregation=aggregation,
        alignment=AlignmentMethod(alignment),
        classifier=ClassifierKind(classifier),
        n_train=n_train,
        n_test=n_test,
        sample_size=sample_size,
        test_sample_size=test_sample_size,
        group_fractions=(pos, neg),
    )
