import numpy as np
import pytest
import sklearn.metrics as skm
from hypothesis import given, settings
from hypothesis import strategies as st

from diagc.metrics import (
    MetricsReport,
    accuracy,
    aggregate,
    ari,
    contingency,
    evaluate,
    f1_score,
    nmi,
    rand_index,
)
from diagc.verify import exhaustive_accuracy, pair_counting_ari

labels = st.lists(st.integers(0, 4), min_size=2, max_size=30)


def pair(draw_len=st.integers(2, 30)):
    return draw_len.flatmap(
        lambda n: st.tuples(
            st.lists(st.integers(0, 4), min_size=n, max_size=n),
            st.lists(st.integers(0, 4), min_size=n, max_size=n),
        )
    )


Y_T, Y_P = [0, 0, 1, 1], [0, 1, 1, 1]


class TestExamples:
    def test_accuracy(self):
        assert accuracy(Y_T, Y_P) == 0.75
        assert accuracy(Y_T, Y_T) == 1.0
        assert accuracy(Y_T, [1, 1, 0, 0]) == 1.0

    def test_f1(self):
        assert f1_score(Y_T, Y_P) == pytest.approx(11 / 15, abs=1e-15)
        assert f1_score(Y_T, Y_T) == 1.0
        assert f1_score(Y_T, [0, 0, 0, 0]) == pytest.approx(1 / 3, abs=1e-15)

    def test_nmi(self):
        assert nmi(Y_T, Y_T) == 1.0
        assert nmi(Y_T, [0, 0, 0, 0]) == 0.0
        assert nmi(Y_T, [0, 1, 0, 1]) == pytest.approx(0.0, abs=1e-15)

    def test_ari(self):
        assert ari(Y_T, Y_T) == 1.0
        assert ari(Y_T, [0, 0, 0, 0]) == pytest.approx(0.0, abs=1e-15)
        assert abs(ari(Y_T, Y_P) - pair_counting_ari(Y_T, Y_P)) < 1e-12

    def test_contingency(self):
        assert contingency(Y_T, Y_P).tolist() == [[1, 1], [0, 2]]

    def test_rand_index(self):
        # pairs: 6; agreements: (0,1)? no. (2,3) yes, (0,2),(0,3) yes, (1,2),(1,3) no
        assert rand_index(Y_T, Y_P) == pytest.approx(3 / 6)

    def test_pairwise_f1(self):
        # tp=1 (pair 2,3), fp=2, fn=1
        assert f1_score(Y_T, Y_P, average="pairwise") == pytest.approx(2 * (1 / 3) * 0.5 / (1 / 3 + 0.5))


class TestErrors:
    @pytest.mark.parametrize("fn", [accuracy, f1_score, nmi, ari])
    def test_length_mismatch(self, fn):
        with pytest.raises(ValueError, match="length"):
            fn([0, 1], [0])

    @pytest.mark.parametrize("fn", [accuracy, f1_score, nmi, ari])
    def test_empty(self, fn):
        with pytest.raises(ValueError):
            fn([], [])

    def test_ari_single_sample(self):
        with pytest.raises(ValueError):
            ari([0], [0])

    def test_unknown_average(self):
        with pytest.raises(ValueError):
            f1_score(Y_T, Y_P, average="micro")


class TestProperties:
    @settings(max_examples=200, deadline=None)
    @given(pair())
    def test_ranges(self, yy):
        yt, yp = yy
        assert 0 <= accuracy(yt, yp) <= 1
        assert 0 <= f1_score(yt, yp) <= 1
        assert 0 <= nmi(yt, yp) <= 1
        assert -1 <= ari(yt, yp) <= 1

    @settings(max_examples=100, deadline=None)
    @given(pair(), st.permutations(range(5)))
    def test_relabel_invariance(self, yy, perm):
        yt, yp = yy
        relabeled = [perm[y] for y in yp]
        assert accuracy(yt, yp) == accuracy(yt, relabeled)
        assert f1_score(yt, yp) == pytest.approx(f1_score(yt, relabeled), abs=1e-12)
        assert nmi(yt, yp) == pytest.approx(nmi(yt, relabeled), abs=1e-12)
        assert ari(yt, yp) == pytest.approx(ari(yt, relabeled), abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(pair())
    def test_symmetry(self, yy):
        yt, yp = yy
        assert nmi(yt, yp) == pytest.approx(nmi(yp, yt), abs=1e-12)
        assert ari(yt, yp) == pytest.approx(ari(yp, yt), abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(pair())
    def test_oracles(self, yy):
        yt, yp = yy
        assert accuracy(yt, yp) == exhaustive_accuracy(yt, yp)
        assert abs(ari(yt, yp) - pair_counting_ari(yt, yp)) < 1e-12

    def test_against_sklearn(self, rng):
        for _ in range(50):
            n = int(rng.integers(2, 200))
            yt, yp = rng.integers(0, 4, n), rng.integers(0, 5, n)
            assert nmi(yt, yp) == pytest.approx(skm.normalized_mutual_info_score(yt, yp), abs=1e-10)
            assert ari(yt, yp) == pytest.approx(skm.adjusted_rand_score(yt, yp), abs=1e-10)

    def test_accuracy_bounds_f1_identity(self, rng):
        y = rng.integers(0, 3, 50)
        assert f1_score(y, y) == 1.0 and accuracy(y, y) == 1.0


class TestEvaluate:
    def test_perfect(self):
        r = evaluate(Y_T, [1, 1, 0, 0])
        assert (r.acc, r.f1, r.nmi, r.ari) == (1.0, 1.0, 1.0, 1.0)
        assert (r.n, r.c) == (4, 2)

    def test_random_labels_monte_carlo(self):
        accs, aris = [], []
        for seed in range(20):
            r = np.random.default_rng(seed)
            rep = evaluate(r.integers(0, 3, 300), r.integers(0, 3, 300))
            accs.append(rep.acc)
            aris.append(rep.ari)
        assert abs(np.mean(accs) - 1 / 3) <= 0.1
        assert abs(np.mean(aris)) <= 0.05

    def test_round_trip(self, tmp_path):
        r = evaluate(Y_T, Y_P, seed=3, variant="no_sir", config={"alpha": 0.1}, notes={"x": 1})
        path = tmp_path / "report.json"
        r.save(path)
        assert MetricsReport.load(path) == r

    def test_aggregate(self):
        reps = [evaluate(Y_T, Y_T), evaluate(Y_T, Y_P)]
        agg = aggregate(reps)
        assert agg["runs"] == 2 and agg["acc"] == pytest.approx(0.875)
        with pytest.raises(ValueError):
            aggregate([])


def test_f1_tie_break_independent_of_numbering():
    yt = [0] * 13 + [1, 1]
    yp = [0] * 12 + [3, 3, 4]
    swapped = [0] * 12 + [4, 4, 3]
    assert f1_score(yt, yp) == f1_score(yt, swapped)
    # class 1 ties between clusters 3 and 4 on matched count; cluster 4
    # (pr=1, re=1/2, F1=2/3) beats cluster 3 (F1=1/2). class 0: F1=24/25
    assert f1_score(yt, yp) == pytest.approx((24 / 25 + 2 / 3) / 2, abs=1e-12)
