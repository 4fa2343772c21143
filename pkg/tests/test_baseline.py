import numpy as np
import pytest
from scipy.stats import ttest_ind

from qfabayes.baseline import (
    DegenerateScreenError,
    benjamini_hochberg,
    compare_screens,
    gene_test,
    scale_fitnesses,
)


class TestScaleFitnesses:
    def test_constant_screen_maps_to_one(self):
        out = scale_fitnesses({"a": np.array([2.0, 2.0]), "b": np.array([2.0])})
        assert np.allclose(np.concatenate(list(out.values())), 1.0)

    def test_two_point_screen(self):
        out = scale_fitnesses({"a": np.array([1.0]), "b": np.array([3.0])})
        assert out["a"][0] == pytest.approx(0.5)
        assert out["b"][0] == pytest.approx(1.5)

    def test_idempotent_unit_mean(self):
        rng = np.random.default_rng(1)
        fits = {f"g{i}": rng.uniform(10, 50, 4) for i in range(5)}
        once = scale_fitnesses(fits)
        assert np.mean(np.concatenate(list(once.values()))) == pytest.approx(1.0)
        twice = scale_fitnesses(once)
        for g in fits:
            assert np.allclose(once[g], twice[g])

    def test_zero_mean_error(self):
        with pytest.raises(DegenerateScreenError):
            scale_fitnesses({"a": np.array([1.0, -1.0])})


class TestGeneTest:
    def test_identical_groups(self):
        gamma, p = gene_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert gamma == 0.0
        assert p == pytest.approx(1.0)

    def test_degenerate_separation(self):
        gamma, p = gene_test([1.0, 1.0, 1.0, 1.0], [2.0, 2.0, 2.0, 2.0])
        assert gamma == pytest.approx(1.0)
        assert p == 0.0

    def test_matches_textbook_t_test(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            c = rng.normal(0, 1, 8)
            q = rng.normal(0.3, 1, 8)
            gamma, p = gene_test(c, q)
            ref = ttest_ind(q, c, equal_var=True)
            assert gamma == pytest.approx(q.mean() - c.mean(), rel=1e-12)
            assert p == pytest.approx(ref.pvalue, abs=1e-10)

    def test_insufficient_repeats(self):
        with pytest.raises(ValueError):
            gene_test([1.0], [1.0, 2.0])


class TestBenjaminiHochberg:
    def test_hand_computed_stepup(self):
        q = benjamini_hochberg([0.01, 0.02, 0.03, 0.04])
        assert np.allclose(q, [0.04, 0.04, 0.04, 0.04])

    def test_single_p(self):
        assert benjamini_hochberg([0.37])[0] == pytest.approx(0.37)

    def test_all_ones(self):
        assert np.allclose(benjamini_hochberg([1.0, 1.0, 1.0]), 1.0)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(4)
        p = rng.uniform(0, 1, 40)
        q = benjamini_hochberg(p)
        perm = rng.permutation(40)
        q_perm = benjamini_hochberg(p[perm])
        assert np.allclose(q_perm, q[perm])

    def test_monotone_and_dominates_p(self):
        rng = np.random.default_rng(5)
        p = rng.uniform(0, 1, 100)
        q = benjamini_hochberg(p)
        assert np.all(q >= p - 1e-15)
        order = np.argsort(p)
        assert np.all(np.diff(q[order]) >= -1e-15)
        assert np.all(q <= 1.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            benjamini_hochberg([0.5, 1.2])


class TestCompareScreens:
    def test_skips_underreplicated_genes(self):
        rng = np.random.default_rng(6)
        ctrl = {"a": rng.uniform(1, 2, 4), "b": rng.uniform(1, 2, 4),
                "c": np.array([1.0])}
        qry = {"a": rng.uniform(1, 2, 4), "b": rng.uniform(1, 2, 4),
               "c": np.array([1.5])}
        results, skipped = compare_screens(ctrl, qry)
        assert [g for g, _ in skipped] == ["c"]
        assert sorted(r.gene for r in results) == ["a", "b"]
        for r in results:
            assert 0.0 <= r.p_value <= 1.0
            assert r.q_value >= r.p_value - 1e-15

    def test_planted_shift_detected(self):
        rng = np.random.default_rng(7)
        ctrl = {f"g{i}": 30 + rng.normal(0, 0.5, 6) for i in range(10)}
        qry = {f"g{i}": 30 + rng.normal(0, 0.5, 6) for i in range(10)}
        qry["g4"] = qry["g4"] * 2.0
        results, _ = compare_screens(ctrl, qry)
        sig = {r.gene for r in results if r.significant}
        assert "g4" in sig
