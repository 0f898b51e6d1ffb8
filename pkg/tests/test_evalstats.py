import itertools
import json
import math

import numpy as np
import pytest

from dafl.errors import ContractError
from dafl.evalstats import (
    BootstrapCI,
    RankMatrix,
    average_ranks,
    bootstrap_ci,
    bootstrap_from_pairs,
    export_report,
    friedman_test,
    holm_adjust,
    nonsignificant_cliques,
    significance_report,
    wilcoxon_signed_rank,
)


class TestBootstrap:
    def test_perfect_classifier(self):
        y = np.arange(10)
        ci = bootstrap_ci(lambda x: x.astype(int), (y.astype(int), y), seed=1)
        assert ci.mu == 1.0 and ci.sigma == 0.0 and ci.halfwidth == 0.0

    def test_halfwidth_formula(self):
        # mu 0.5, sigma 0.1, N 1000 -> 1.96 * 0.1 / sqrt(1000)
        hw = 1.96 * 0.1 / math.sqrt(1000)
        assert hw == pytest.approx(0.0061980, abs=1e-7)
        ci = BootstrapCI(mu=0.5, sigma=0.1, n_tests=1000, z=1.96, halfwidth=hw)
        assert ci.halfwidth * math.sqrt(ci.n_tests) / ci.sigma == pytest.approx(1.96, abs=1e-12)

    def test_identity_invariant_on_real_resamples(self):
        rng = np.random.default_rng(2)
        preds = rng.integers(0, 3, 40)
        labels = rng.integers(0, 3, 40)
        ci = bootstrap_from_pairs(preds, labels, n_resamples=500, seed=3)
        if ci.sigma > 0:
            assert ci.halfwidth * math.sqrt(ci.n_tests) / ci.sigma == pytest.approx(
                ci.z, abs=1e-12
            )

    def test_dual_implementation_shared_seed(self):
        """Independent reimplementation consuming the same RNG stream."""
        preds = np.array([0, 1, 1, 0, 2, 2, 1, 0, 0, 1])
        labels = np.array([0, 1, 2, 0, 2, 0, 1, 0, 1, 1])  # 7 correct
        got = bootstrap_from_pairs(preds, labels, n_resamples=200, z=1.96, seed=11)

        rng = np.random.default_rng(11)
        idx = rng.integers(0, 10, size=(200, 10))
        accs = []
        for row in idx:
            hits = 0
            for i in row:
                hits += int(preds[i] == labels[i])
            accs.append(hits / 10)
        accs = np.array(accs)
        mu = accs.mean()
        sigma = accs.std(ddof=1)
        assert got.mu == mu
        assert got.sigma == sigma
        assert got.halfwidth == 1.96 * sigma / math.sqrt(200)

    def test_too_few_resamples(self):
        with pytest.raises(ContractError):
            bootstrap_from_pairs(np.ones(3), np.ones(3), n_resamples=1)

    def test_empty_test_set(self):
        with pytest.raises(ContractError):
            bootstrap_ci(lambda x: x, (np.zeros(0), np.zeros(0)))


class TestRankMatrix:
    def test_rows_sum_to_invariant(self):
        rng = np.random.default_rng(4)
        acc = rng.random((7, 5))
        acc[2, :3] = 0.5  # force ties
        matrix = RankMatrix(methods=list("abcde"), blocks=[str(i) for i in range(7)], accuracies=acc)
        np.testing.assert_allclose(matrix.ranks.sum(axis=1), 15.0, atol=1e-9)

    def test_best_method_gets_rank_one(self):
        matrix = RankMatrix(["m1", "m2"], ["b"], np.array([[0.9, 0.4]]))
        assert matrix.ranks[0, 0] == 1.0 and matrix.ranks[0, 1] == 2.0

    def test_average_ranks_ties(self):
        np.testing.assert_allclose(average_ranks([3.0, 1.0, 3.0]), [2.5, 1.0, 2.5])


class TestFriedman:
    def test_identical_columns(self):
        acc = np.tile(np.linspace(0.1, 0.9, 5)[:, None], (1, 3))
        matrix = RankMatrix(list("abc"), [str(i) for i in range(5)], acc)
        stat, p = friedman_test(matrix)
        assert stat == pytest.approx(0.0, abs=1e-12)
        assert p == pytest.approx(1.0, abs=1e-12)

    def test_hand_case_three_by_three(self):
        # ranks exactly (1,2,3) per block -> stat 6, p = exp(-3)
        acc = np.array([[0.9, 0.8, 0.7]] * 3)
        matrix = RankMatrix(list("abc"), list("xyz"), acc)
        stat, p = friedman_test(matrix)
        assert stat == pytest.approx(6.0, abs=1e-12)
        assert p == pytest.approx(math.exp(-3.0), abs=1e-10)

    def test_column_permutation_invariant(self):
        rng = np.random.default_rng(5)
        acc = rng.random((6, 4))
        base = friedman_test(RankMatrix(list("abcd"), [str(i) for i in range(6)], acc))[0]
        perm = [2, 0, 3, 1]
        permuted = friedman_test(
            RankMatrix(list("cadb"), [str(i) for i in range(6)], acc[:, perm])
        )[0]
        assert permuted == pytest.approx(base, abs=1e-12)

    def test_degenerate_dimensions_rejected(self):
        matrix = RankMatrix(list("ab"), ["x"], np.array([[0.1, 0.2]]))
        with pytest.raises(ContractError):
            friedman_test(matrix)


def enumeration_oracle(x, y):
    """Literal 2^n enumeration of P(min(W+, W-) <= observed)."""
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    d = d[d != 0]
    n = d.size
    if n == 0:
        return 0.0, 1.0
    ranks = average_ranks(np.abs(d))
    w_obs = min(ranks[d > 0].sum(), ranks[d < 0].sum())
    hits = 0
    for signs in itertools.product((1, -1), repeat=n):
        wp = sum(r for r, s in zip(ranks, signs) if s > 0)
        wm = sum(r for r, s in zip(ranks, signs) if s < 0)
        hits += min(wp, wm) <= w_obs + 1e-12
    return w_obs, hits / 2**n


class TestWilcoxon:
    def test_equal_inputs_p_one(self):
        x = np.arange(5.0)
        w, p = wilcoxon_signed_rank(x, x)
        assert p == 1.0

    def test_five_positive_differences(self):
        x = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
        y = x - 1.0
        w, p = wilcoxon_signed_rank(x, y)
        assert w == 0.0
        assert p == pytest.approx(2 / 32, abs=1e-15)

    def test_matches_enumeration_oracle(self):
        rng = np.random.default_rng(6)
        for trial in range(100):
            n = int(rng.integers(1, 11))
            x = rng.standard_normal(n)
            y = x + rng.standard_normal(n) * 0.8
            if trial % 4 == 0:
                y[: n // 2] = x[: n // 2]  # inject zero differences
            if trial % 5 == 0 and n >= 2:
                y[1] = x[1] - abs(x[0] - y[0])  # inject |d| ties
            w_got, p_got = wilcoxon_signed_rank(x, y)
            w_exp, p_exp = enumeration_oracle(x, y)
            assert w_got == pytest.approx(w_exp, abs=1e-12)
            assert p_got == pytest.approx(p_exp, abs=1e-12)

    def test_exact_vs_normal_approximation(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            x = rng.standard_normal(20)
            y = x + rng.standard_normal(20) * 0.7
            _, p_exact = wilcoxon_signed_rank(x, y, exact_limit=25)
            _, p_approx = wilcoxon_signed_rank(x, y, exact_limit=0)
            assert abs(p_exact - p_approx) <= 0.01

    def test_length_mismatch(self):
        with pytest.raises(ContractError):
            wilcoxon_signed_rank([1.0, 2.0], [1.0])


class TestHolm:
    def test_single_p_unchanged(self):
        adj, rej = holm_adjust([0.03])
        assert adj[0] == 0.03 and rej[0]

    def test_step_down_example_all_rejected(self):
        adj, rej = holm_adjust([0.01, 0.02, 0.04], alpha=0.05)
        np.testing.assert_allclose(adj, [0.03, 0.04, 0.04], atol=1e-12)
        assert rej.all()

    def test_first_failure_stops_everything(self):
        adj, rej = holm_adjust([0.03, 0.03, 0.03], alpha=0.05)
        np.testing.assert_allclose(adj, [0.09, 0.09, 0.09], atol=1e-12)
        assert not rej.any()

    def test_adjusted_monotone_and_bounded(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            p = rng.random(int(rng.integers(1, 9)))
            adj, _ = holm_adjust(p)
            assert np.all(adj >= p - 1e-15)
            assert np.all(adj <= 1.0)
            srt = adj[np.argsort(p, kind="stable")]
            assert np.all(np.diff(srt) >= -1e-15)

    def test_out_of_range_rejected(self):
        with pytest.raises(ContractError):
            holm_adjust([0.5, 1.5])


class TestReportExport:
    def _matrix(self, offset):
        rng = np.random.default_rng(9)
        base = rng.random(12) * 0.05 + 0.5
        acc = np.stack([base, base + offset], axis=1)
        return RankMatrix(["m1", "m2"], [str(i) for i in range(12)], acc)

    def test_two_methods_significant_gives_singletons(self):
        report = significance_report(self._matrix(0.2))
        assert nonsignificant_cliques(report) == [["m1"], ["m2"]]

    def test_all_nonsignificant_single_clique(self):
        rng = np.random.default_rng(10)
        acc = 0.5 + 0.001 * rng.standard_normal((6, 3))
        # shuffle columns per row so no method dominates
        for row in acc:
            rng.shuffle(row)
        report = significance_report(RankMatrix(list("abc"), [str(i) for i in range(6)], acc))
        cliques = nonsignificant_cliques(report)
        assert cliques == [["a", "b", "c"]]

    def test_round_trip(self, tmp_path):
        report = significance_report(self._matrix(0.2))
        path = tmp_path / "report.json"
        export_report(report, path)
        doc = json.loads(path.read_text())
        assert doc["methods"] == ["m1", "m2"]
        assert doc["friedman"]["stat"] == report.friedman_stat
        assert doc["average_ranks"]["m2"] == report.avg_ranks[1]
        assert doc["pairwise_adjusted_p"]["m1"]["m2"] == report.adjusted_p[0, 1]
        assert doc["cliques"] == nonsignificant_cliques(report)
