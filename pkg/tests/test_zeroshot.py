import numpy as np
import pytest
from hypothesis import given, strategies as st

from orthocal.interchange import EmbeddingMatrix, GroupedEvalSet
from orthocal.projection import SpuriousBasis, orthogonal_projection
from orthocal.zeroshot import bias_probe, build_classifier, group_report, predict


def matrix(cols):
    return EmbeddingMatrix(np.asarray(cols, dtype=float).T)


class TestBuildClassifier:
    def test_renormalized_rows_are_unit_inputs(self):
        m = matrix([[3.0, 0.0], [0.0, 2.0]])
        weights = build_classifier(m, renormalize=True)
        np.testing.assert_allclose(weights.beta, np.eye(2), atol=1e-14)
        assert weights.provenance["renormalized"] is True

    def test_identity_projection_transposes_input(self):
        m = matrix([[1.0, 0.0], [0.0, 1.0]])
        weights = build_classifier(m, proj=np.eye(2), renormalize=False)
        np.testing.assert_array_equal(weights.beta, m.data.T)

    def test_annihilated_class_raises(self):
        p0 = orthogonal_projection(SpuriousBasis.from_columns(np.array([[1.0, 0.0]]).T))
        m = matrix([[1.0, 0.0], [0.0, 1.0]])
        with pytest.raises(ValueError, match="annihilated.*class_0"):
            build_classifier(m, proj=p0, renormalize=True)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError, match="at least 2"):
            build_classifier(matrix([[1.0, 0.0]]))


class TestPredict:
    def test_matches_class_prompt(self):
        weights = build_classifier(matrix([[1.0, 0.0], [0.0, 1.0]]))
        preds = predict(weights, matrix([[1.0, 0.0]]))
        assert preds.tolist() == [0]

    def test_tie_breaks_to_smallest_index(self):
        weights = build_classifier(matrix([[1.0, 0.0], [0.0, 1.0]]))
        preds = predict(weights, matrix([[1.0, 1.0]]))
        assert preds.tolist() == [0]

    def test_scale_invariance(self):
        rng = np.random.default_rng(0)
        weights = build_classifier(matrix(rng.normal(size=(3, 4))))
        images = rng.normal(size=(4, 10))
        p1 = predict(weights, EmbeddingMatrix(images))
        p2 = predict(weights, EmbeddingMatrix(5.0 * images))
        np.testing.assert_array_equal(p1, p2)

    def test_zero_norm_image_flagged(self):
        weights = build_classifier(matrix([[1.0, 0.0], [0.0, 1.0]]))
        preds = predict(weights, matrix([[0.0, 0.0], [1.0, 0.0]]))
        assert preds.tolist() == [-1, 0]


def tiny_eval_set(images, y, a, k=2, na=2):
    return GroupedEvalSet(
        embeddings=matrix(images),
        y=np.array(y),
        a=np.array(a),
        class_names=tuple(f"c{i}" for i in range(k)),
        attribute_names=tuple(f"a{i}" for i in range(na)),
    )


class TestGroupReport:
    def setup_method(self):
        self.weights = build_classifier(matrix([[1.0, 0.0], [0.0, 1.0]]))

    def test_all_correct(self):
        es = tiny_eval_set([[1, 0], [1, 0], [0, 1], [0, 1]], [0, 0, 1, 1], [0, 1, 0, 1])
        rep = group_report(self.weights, es)
        assert rep.average == 1.0 and rep.worst_group == 1.0 and rep.gap == 0.0

    def test_quarter_group_half_right(self):
        # 4 equal-size groups of 2; one group half right -> worst .5, avg .875
        images, y, a = [], [], []
        for yy in range(2):
            for aa in range(2):
                for i in range(2):
                    correct = not (yy == 1 and aa == 0 and i == 0)
                    images.append([1, 0] if (yy == 0) == correct else [0, 1])
                    y.append(yy)
                    a.append(aa)
        rep = group_report(self.weights, tiny_eval_set(images, y, a))
        assert rep.worst_group == pytest.approx(0.5)
        assert rep.average == pytest.approx(0.875)
        assert rep.gap == pytest.approx(0.375)

    def test_single_group_degenerate(self):
        es = tiny_eval_set([[1, 0], [0.9, 0.1]], [0, 0], [0, 0], k=1, na=1)
        rep = group_report(self.weights, es)
        assert rep.worst_group == rep.average
        assert rep.gap == 0.0

    def test_missing_group_error_names_combination(self):
        es = tiny_eval_set([[1, 0], [0, 1]], [0, 1], [0, 1])
        with pytest.raises(ValueError, match=r"\(y=0, a=1\)"):
            group_report(self.weights, es)

    def test_excluded_items_counted(self):
        es = tiny_eval_set(
            [[1, 0], [0, 0], [1, 0], [0, 1], [0, 1]],
            [0, 0, 0, 1, 1],
            [0, 0, 1, 0, 1],
        )
        rep = group_report(self.weights, es)
        assert rep.excluded_count == 1
        assert rep.average == 1.0

    @given(st.integers(0, 2**32 - 1))
    def test_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        n = 24
        images = rng.normal(size=(2, n))
        y = rng.integers(0, 2, size=n)
        a = rng.integers(0, 2, size=n)
        # force every group non-empty
        y[:4] = [0, 0, 1, 1]
        a[:4] = [0, 1, 0, 1]
        es = GroupedEvalSet(EmbeddingMatrix(images), y, a, ("c0", "c1"), ("a0", "a1"))
        perm = rng.permutation(n)
        es2 = GroupedEvalSet(EmbeddingMatrix(images[:, perm]), y[perm], a[perm],
                             ("c0", "c1"), ("a0", "a1"))
        r1 = group_report(self.weights, es)
        r2 = group_report(self.weights, es2)
        assert r1.per_group == r2.per_group
        assert r1.average == r2.average

    @given(st.integers(0, 2**32 - 1))
    def test_gap_never_negative(self, seed):
        rng = np.random.default_rng(seed)
        n = 20
        images = rng.normal(size=(2, n))
        y = np.concatenate([[0, 0, 1, 1], rng.integers(0, 2, size=n - 4)])
        a = np.concatenate([[0, 1, 0, 1], rng.integers(0, 2, size=n - 4)])
        es = GroupedEvalSet(EmbeddingMatrix(images), y, a, ("c0", "c1"), ("a0", "a1"))
        assert group_report(self.weights, es).gap >= 0.0


class TestBiasProbe:
    def test_identical_and_orthogonal(self):
        weights = build_classifier(matrix([[1.0, 0.0], [0.0, 1.0]]))
        table = bias_probe(weights, matrix([[1.0, 0.0]]))
        assert table[0, 0] == pytest.approx(1.0)
        assert table[1, 0] == pytest.approx(0.0, abs=1e-14)

    def test_debiased_weights_probe_near_zero(self):
        rng = np.random.default_rng(4)
        d = 16
        spurious = rng.normal(size=(d, 3))
        p0 = orthogonal_projection(SpuriousBasis.from_columns(spurious))
        classes = EmbeddingMatrix(rng.normal(size=(d, 2)))
        weights = build_classifier(classes, proj=p0, renormalize=True)
        table = bias_probe(weights, EmbeddingMatrix(spurious))
        assert np.abs(table).max() <= 1e-8

    def test_zero_norm_rejected(self):
        weights = build_classifier(matrix([[1.0, 0.0], [0.0, 1.0]]))
        with pytest.raises(ValueError, match="zero-norm"):
            bias_probe(weights, matrix([[0.0, 0.0]]))
