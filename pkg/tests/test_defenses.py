import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gpia.attacks import AttackSpec, collect_outputs, fit_and_score, assemble_dataset
from gpia.classifiers import ClassifierKind
from gpia.defenses import (
    CSV_HEADER,
    DefenseResult,
    DefenseSpec,
    dp_train,
    evaluate_defense,
    label_only,
    laplace_noise,
    topk_posteriors,
    truncate_embeddings,
    truncated_length,
    write_defense_csv,
)
from gpia.errors import UsageError
from gpia.fixtures import PLANTED_PROPERTY, planted_world
from gpia.gnn import GnnConfig, train
from gpia.graph import SyntheticConfig, generate_synthetic

TINY = GnnConfig(hidden_layers=2, hidden_dim=8, max_epochs=15)


class TestLaplace:
    def test_seeded(self):
        M = np.zeros((3, 4))
        assert np.array_equal(laplace_noise(M, 1.0, 5), laplace_noise(M, 1.0, 5))

    def test_variance(self):
        x = laplace_noise(np.zeros(100_000), 1.0, 0)
        assert abs(x.var() - 2.0) / 2.0 < 0.05

    def test_tiny_scale(self):
        M = np.random.default_rng(1).random((100, 1000))
        assert np.max(np.abs(laplace_noise(M, 1e-12, 2) - M)) < 1e-9

    @pytest.mark.parametrize("b", [0.0, -1.0])
    def test_bad_scale(self, b):
        with pytest.raises(ValueError):
            laplace_noise(np.zeros(2), b, 0)


class TestTruncation:
    def test_length(self):
        assert truncated_length(64, 0.1) == 57
        assert truncate_embeddings(np.zeros((5, 64)), 0.1, 0).shape == (5, 57)

    def test_identity_when_nothing_dropped(self):
        # floor(d(1-r)) only reaches d once 1-r rounds to 1.0
        Z = np.arange(20.0).reshape(4, 5)
        assert np.array_equal(truncate_embeddings(Z, 1e-17, 0), Z)
        assert truncate_embeddings(Z, 1e-9, 0).shape == (4, 4)

    def test_rows_differ(self):
        Z = np.tile(np.arange(64.0), (50, 1))
        out = truncate_embeddings(Z, 0.3, 0)
        assert len({tuple(r) for r in out}) > 1
        # original order preserved within each row
        assert (np.diff(out, axis=1) > 0).all()

    def test_empty_result(self):
        with pytest.raises(ValueError):
            truncate_embeddings(np.zeros((2, 3)), 0.9, 0)

    @given(st.integers(1, 80), st.floats(0.001, 0.999), st.integers(1, 5))
    def test_floor_length(self, d, r, n):
        keep = int(np.floor(d * (1 - r)))
        if keep < 1:
            return
        assert truncate_embeddings(np.ones((n, d)), r, 0).shape == (n, keep)


class TestPosteriorDefences:
    def test_topk_identity(self):
        O = np.array([[0.2, 0.5, 0.3]])
        assert np.array_equal(topk_posteriors(O, 3), O)

    def test_topk_one(self):
        assert topk_posteriors(np.array([[0.2, 0.5, 0.3]]), 1).tolist() == [[0, 0.5, 0]]

    def test_topk_ties_lower_index(self):
        assert topk_posteriors(np.array([[0.4, 0.4, 0.2]]), 1).tolist() == [[0.4, 0, 0]]

    @pytest.mark.parametrize("k", [0, 4])
    def test_topk_range(self, k):
        with pytest.raises(ValueError):
            topk_posteriors(np.ones((1, 3)) / 3, k)

    def test_label_only(self):
        assert label_only([[0.2, 0.5, 0.3]]).tolist() == [1]

    @given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(2, 5)), elements=st.floats(0, 1)), st.data())
    def test_topk_keeps_argmax(self, O, data):
        k = data.draw(st.integers(1, O.shape[1]))
        assert np.array_equal(topk_posteriors(O, k).argmax(1), O.argmax(1))
        assert np.array_equal(label_only(O), O.argmax(1))


class TestSpec:
    def test_fields_per_method(self):
        with pytest.raises(UsageError):
            DefenseSpec("noisy-posterior", b=1.0, r=0.1)
        with pytest.raises(UsageError):
            DefenseSpec("truncation")
        with pytest.raises(ValueError):
            DefenseSpec("noisy-posterior", b=0.0)
        with pytest.raises(ValueError):
            DefenseSpec("dp-gradient", b=1.0, clip=0.0)

    def test_epsilon(self):
        assert DefenseSpec("dp-gradient", b=4.0).epsilon == 0.25

    def test_compatibility(self):
        assert DefenseSpec("truncation", r=0.1).compatible("white")
        assert not DefenseSpec("truncation", r=0.1).compatible("black")
        assert DefenseSpec("label-only").compatible("black")
        assert DefenseSpec("dp-gradient", b=1.0).compatible("white")

    def test_result_bounds(self):
        with pytest.raises(ValueError):
            DefenseResult("label-only", None, "A2", 1.2, 0.5, 0, "x")

    def test_csv(self, tmp_path):
        write_defense_csv(tmp_path / "d.csv", [DefenseResult("noisy-posterior", 0.5, "A2", 0.5, 0.75, 3, "f")])
        lines = (tmp_path / "d.csv").read_text().splitlines()
        assert lines[0] == ",".join(CSV_HEADER)
        assert lines[1] == "noisy-posterior,0.5,A2,0.5,0.75,3"


class TestDpTrain:
    @pytest.fixture(scope="class")
    @staticmethod
    def g():
        return generate_synthetic(SyntheticConfig(n=120, avg_degree=4, seed=2))

    def test_vanishing_noise_matches_plain(self, g):
        cfg = GnnConfig(hidden_dim=8, max_epochs=40, patience=40)
        perm = np.random.default_rng(0).permutation(g.n)
        tr, te = np.sort(perm[:96]), np.sort(perm[96:])
        plain = train(g, cfg, tr, te)[0]
        # a clip far above any gradient norm and epsilon huge: noise scale 1e-10
        noisy = dp_train(g, cfg, epsilon=1e12, clip=100.0, seed=0, train_mask=tr, test_mask=te)[0]
        assert np.max(np.abs(plain.flat() - noisy.flat())) < 1e-3

    def test_strong_noise_hurts(self, g):
        cfg = GnnConfig(hidden_dim=16, max_epochs=150)
        perm = np.random.default_rng(0).permutation(g.n)
        tr, te = np.sort(perm[:96]), np.sort(perm[96:])
        m, rep = train(g, cfg, tr, te)
        _, noisy = dp_train(g, cfg, epsilon=0.1, clip=1.0, seed=0, train_mask=tr, test_mask=te)
        assert noisy.test_loss[noisy.best_epoch - 1] >= rep.test_loss[rep.best_epoch - 1]

    def test_bad_clip(self, g):
        with pytest.raises(ValueError):
            dp_train(g, GnnConfig(hidden_dim=4, max_epochs=2), epsilon=1.0, clip=0.0)


@pytest.fixture(scope="module")
def world():
    return planted_world(seed=3, n=400)


def spec(aid, **kw):
    base = dict(id=aid, property=PLANTED_PROPERTY, n_train=8, n_test=4, sample_size=20,
                classifier=ClassifierKind("lr"), group_fractions=(0.7, 0.3))
    if aid == "A1":
        base["layers"] = (2,)
    base.update(kw)
    return AttackSpec(**base)


class TestEvaluate:
    def test_incompatible(self, world):
        with pytest.raises(UsageError):
            evaluate_defense(DefenseSpec("truncation", r=0.1), spec("A2"), world.knowledge("black"), world.target, TINY, 0)

    def test_vanishing_noise_is_continuous(self, world):
        sp, k = spec("A2"), world.knowledge("black")
        outs = collect_outputs(sp, k, world.target, TINY, 0)
        plain = fit_and_score(assemble_dataset(outs, sp, 0), sp, 0)
        res = evaluate_defense(DefenseSpec("noisy-posterior", b=1e-12), sp, k, world.target, TINY, 0, outputs=outs)
        assert res.attack_accuracy == plain.accuracy

    def test_reproducible(self, world):
        sp, k = spec("A1"), world.knowledge("white")
        outs = collect_outputs(sp, k, world.target, TINY, 0)
        d = DefenseSpec("noisy-embedding", b=1.0, seed=4)
        a = evaluate_defense(d, sp, k, world.target, TINY, 0, outputs=outs)
        b = evaluate_defense(d, sp, k, world.target, TINY, 0, outputs=outs)
        assert a == b

    def test_label_only_and_topk_keep_target_accuracy(self, world):
        sp, k = spec("A2"), world.knowledge("black")
        outs = collect_outputs(sp, k, world.target, TINY, 0)
        accs = {evaluate_defense(d, sp, k, world.target, TINY, 0, outputs=outs).target_accuracy
                for d in (DefenseSpec("label-only"), DefenseSpec("topk-posterior", k=1), DefenseSpec("topk-posterior", k=2))}
        plain = float(np.mean([np.mean(o.O[o.test_idx].argmax(1) == o.labels[o.test_idx]) for o in outs.test]))
        assert accs == {plain}

    def test_target_only_mode(self, world):
        sp, k = spec("A2"), world.knowledge("black")
        outs = collect_outputs(sp, k, world.target, TINY, 0)
        r = evaluate_defense(DefenseSpec("noisy-posterior", b=1.0), sp, k, world.target, TINY, 0, outputs=outs, target_only=True)
        assert 0 <= r.attack_accuracy <= 1
