import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gpia.errors import AffinityDegenerateError, AlignmentInfeasibleError, ShapeError, UsageError
from gpia.features import (
    PCA,
    AlignmentMethod,
    FeatureVector,
    aggregate_embeddings,
    aggregate_posteriors,
    align,
    ewd_per_node,
    tsne,
    write_feature_csv,
)

finite = st.floats(-50, 50, allow_nan=False)


class TestEwd:
    @pytest.mark.parametrize("p,want", [([0.5, 0.5], 0.0), ([1.0, 0.0], 1.0), ([0.6, 0.3, 0.1], 1 / 3)])
    def test_examples(self, p, want):
        assert ewd_per_node(p) == pytest.approx(want, abs=1e-12)

    def test_single_class(self):
        with pytest.raises(ValueError):
            ewd_per_node([1.0])

    @given(st.lists(st.floats(0, 1), min_size=2, max_size=6), st.floats(0, 10), st.randoms())
    def test_permutation_and_scale(self, p, c, rnd):
        q = list(p)
        rnd.shuffle(q)
        assert ewd_per_node(q) == pytest.approx(ewd_per_node(p), abs=1e-12)
        assert ewd_per_node([c * x for x in p]) == pytest.approx(c * ewd_per_node(p), rel=1e-9, abs=1e-12)

    @given(st.lists(st.floats(0, 1), min_size=2, max_size=6))
    def test_range(self, p):
        v = ewd_per_node(p)
        assert 0 <= v <= 1 + 1e-12
        assert (v == 0) == (len(set(p)) == 1)


class TestAggregation:
    O = np.array([[0.7, 0.3], [0.2, 0.8]])
    Z = np.array([[1.0, 5.0], [2.0, 3.0]])

    def test_posterior_concat(self):
        assert aggregate_posteriors(self.O, "posterior-concat").values.tolist() == [0.7, 0.3, 0.2, 0.8]

    def test_posterior_ewd(self):
        assert np.allclose(aggregate_posteriors(self.O, "posterior-ewd").values, [0.4, 0.6])

    def test_empty(self):
        with pytest.raises(UsageError):
            aggregate_posteriors(np.zeros((0, 2)), "posterior-concat")

    def test_wrong_family(self):
        with pytest.raises(UsageError):
            aggregate_posteriors(self.O, "embed-maxpool")
        with pytest.raises(UsageError):
            aggregate_embeddings([self.Z], "posterior-ewd")

    def test_pooling(self):
        assert aggregate_embeddings([self.Z], "embed-maxpool").values.tolist() == [5, 3]
        assert aggregate_embeddings([self.Z], "embed-meanpool").values.tolist() == [3.0, 2.5]

    def test_layer_concat(self):
        v = aggregate_embeddings([np.array([[1.0], [2.0]]), np.array([[3.0], [4.0]])], "embed-concat")
        assert v.values.tolist() == [1, 3, 2, 4]

    def test_row_mismatch(self):
        with pytest.raises(ShapeError):
            aggregate_embeddings([np.zeros((2, 1)), np.zeros((3, 1))], "embed-concat")

    @given(arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 5)), elements=finite))
    def test_max_dominates_mean(self, z):
        mx = aggregate_embeddings([z], "embed-maxpool").values
        mn = aggregate_embeddings([z], "embed-meanpool").values
        assert (mx >= mn - 1e-12).all()

    @given(arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(2, 4)), elements=finite), st.randoms())
    def test_permutation_covariant(self, z, rnd):
        perm = list(range(z.shape[0]))
        rnd.shuffle(perm)
        for m in ("embed-maxpool", "embed-meanpool"):
            assert np.array_equal(aggregate_embeddings([z[perm]], m).values, aggregate_embeddings([z], m).values[perm])
        o = np.abs(z) / (np.abs(z).sum(1, keepdims=True) + 1)
        a = aggregate_posteriors(o[perm], "posterior-ewd").values
        assert np.allclose(a, aggregate_posteriors(o, "posterior-ewd").values[perm])

    def test_csv(self, tmp_path):
        vs = [FeatureVector([1.0, 2.0]), FeatureVector([3.0, 4.0])]
        write_feature_csv(tmp_path / "f.csv", vs, [1, 0])
        lines = (tmp_path / "f.csv").read_text().strip().splitlines()
        assert lines[-1].split(",")[-1] == "0" and len(lines) == 3


def vecs(rows):
    return [FeatureVector(r) for r in np.asarray(rows, float)]


class TestAlign:
    def test_equal_length_sampling_is_identity(self):
        tr, te = vecs(np.arange(12).reshape(3, 4)), vecs(np.arange(8).reshape(2, 4))
        a, b = align(tr, te, AlignmentMethod("sampling"))
        assert a is tr or all(np.array_equal(x.values, y.values) for x, y in zip(a, tr))
        assert all(np.array_equal(x.values, y.values) for x, y in zip(b, te))

    def test_sampling_shortens_train(self):
        rng = np.random.default_rng(0)
        tr, te = vecs(rng.normal(size=(5, 128))), vecs(rng.normal(size=(4, 64)))
        a, b = align(tr, te, AlignmentMethod("sampling"), seed=1)
        assert {len(v) for v in a} == {64} and {len(v) for v in b} == {64}
        assert all(np.array_equal(x.values, y.values) for x, y in zip(b, te))
        # one index subset for every training vector
        keep = [np.flatnonzero(np.isin(t.values, s.values)) for t, s in zip(tr, a)]
        assert all(np.array_equal(keep[0], k) for k in keep)

    def test_sampling_cannot_lengthen(self):
        with pytest.raises(AlignmentInfeasibleError):
            align(vecs(np.ones((3, 4))), vecs(np.ones((3, 8))), AlignmentMethod("sampling"))

    def test_pca_exact_low_rank(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(30, 2)) @ rng.normal(size=(2, 6))
        p = PCA(k=2).fit(X)
        assert np.allclose(p.inverse_transform(p.transform(X)), X, atol=1e-10)

    @given(st.integers(0, 1000))
    def test_pca_error_monotone(self, seed):
        X = np.random.default_rng(seed).normal(size=(12, 6))
        errs = []
        for k in range(1, 7):
            p = PCA(k=k).fit(X)
            errs.append(np.sum((p.inverse_transform(p.transform(X)) - X) ** 2))
        assert all(b <= a + 1e-9 for a, b in zip(errs, errs[1:]))

    @pytest.mark.parametrize("tag", ["tsne", "pca", "autoencoder"])
    def test_common_length_and_order(self, tag):
        rng = np.random.default_rng(3)
        tr = [FeatureVector(r, {"sample": i}) for i, r in enumerate(rng.normal(size=(12, 40)))]
        te = [FeatureVector(r, {"sample": 100 + i}) for i, r in enumerate(rng.normal(size=(8, 20)))]
        a, b = align(tr, te, AlignmentMethod(tag, iters=200, epochs=50), seed=0)
        assert len({len(v) for v in a + b}) == 1
        assert [v.source["sample"] for v in a] == list(range(12))
        assert [v.source["sample"] for v in b] == list(range(100, 108))


class TestTsne:
    def clusters(self):
        rng = np.random.default_rng(0)
        return np.vstack([rng.normal(0, 0.1, (10, 5)), rng.normal(5, 0.1, (10, 5))])

    def test_separates_clusters(self):
        Y = tsne(self.clusters(), perplexity=5, iters=500, seed=0)
        a, b = Y[:10], Y[10:]
        spread = max(np.linalg.norm(a - a.mean(0), axis=1).max(), np.linalg.norm(b - b.mean(0), axis=1).max())
        assert np.linalg.norm(a.mean(0) - b.mean(0)) > spread

    def test_deterministic(self):
        X = self.clusters()
        assert np.array_equal(tsne(X, 5, 200, seed=3), tsne(X, 5, 200, seed=3))

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            tsne(np.eye(3), perplexity=0.5)

    def test_identical_rows(self):
        with pytest.raises(AffinityDegenerateError):
            tsne(np.ones((8, 3)), perplexity=2)

    def test_perplexity_bound(self):
        with pytest.raises(ValueError):
            tsne(self.clusters(), perplexity=10)


def test_alignment_params_validated():
    with pytest.raises(ValueError):
        AlignmentMethod("pca", variance=0.0)
    with pytest.raises(ValueError):
        AlignmentMethod("autoencoder", target_dim=0)
    with pytest.raises(UsageError):
        AlignmentMethod("umap")
