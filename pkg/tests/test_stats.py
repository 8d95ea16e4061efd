import math

import numpy as np
import pytest
from scipy.stats import mannwhitneyu

from cmoforge.stats import (
    ComparisonCell,
    format_cell,
    format_results_table,
    friedman_ranks,
    mark_summary,
    midranks,
    sci,
    summarize,
    wilcoxon_rank_sum,
)


class TestWilcoxon:
    def test_identical(self):
        r = wilcoxon_rank_sum([1, 2, 3], [1, 2, 3])
        assert r.p == 1.0 and r.mark == "="

    def test_separated_four(self):
        r = wilcoxon_rank_sum([1, 2, 3, 4], [5, 6, 7, 8])
        assert r.p == pytest.approx(2 / 70, abs=1e-15) and r.mark == "+"
        assert wilcoxon_rank_sum([5, 6, 7, 8], [1, 2, 3, 4]).mark == "-"

    def test_separated_three(self):
        r = wilcoxon_rank_sum([1, 2, 3], [4, 5, 6])
        assert r.p == pytest.approx(0.1, abs=1e-15) and r.mark == "="

    def test_larger_is_better(self):
        assert wilcoxon_rank_sum([5, 6, 7, 8], [1, 2, 3, 4], smaller_is_better=False).mark == "+"

    def test_nan_is_worst(self):
        r = wilcoxon_rank_sum([1, 2, 3, 4], [math.nan] * 4)
        assert r.mark == "+" and r.p == pytest.approx(2 / 70)

    def test_normal_approximation_matches_scipy(self):
        rng = np.random.default_rng(4)
        a, b = rng.normal(0, 1, 15), rng.normal(0.8, 1, 15)
        ours = wilcoxon_rank_sum(a, b).p
        ref = mannwhitneyu(a, b, alternative="two-sided", method="asymptotic", use_continuity=True).pvalue
        assert ours == pytest.approx(ref, rel=1e-10)

    def test_ten_vs_ten_is_exact(self):
        a, b = list(range(10)), list(range(10, 20))
        assert wilcoxon_rank_sum(a, b).p == pytest.approx(2 / math.comb(20, 10))

    def test_empty(self):
        with pytest.raises(ValueError):
            wilcoxon_rank_sum([], [1])


class TestFriedman:
    def test_example(self):
        r = friedman_ranks([[0.1, 0.2], [0.2, 0.3], [0.3, 0.1]])
        assert np.allclose(r.mean_ranks, [1.5, 2.5, 2.0])

    def test_dominant(self):
        r = friedman_ranks([[0.1, 0.1, 0.1], [0.5, 0.6, 0.7], [0.4, 0.9, 0.2]])
        assert r.mean_ranks[0] == 1.0

    def test_identical_algorithms(self):
        r = friedman_ranks([[0.1, 0.5], [0.1, 0.5]])
        assert r.mean_ranks[0] == r.mean_ranks[1] == 1.5 and r.p == 1.0

    def test_matches_scipy_statistic(self):
        from scipy.stats import friedmanchisquare

        rng = np.random.default_rng(1)
        vals = rng.random((4, 6))
        ours = friedman_ranks(vals)
        ref = friedmanchisquare(*vals)
        assert ours.chi2 == pytest.approx(ref.statistic) and ours.p == pytest.approx(ref.pvalue)

    def test_shape(self):
        with pytest.raises(ValueError):
            friedman_ranks([[0.1, 0.2]])


def test_midranks():
    assert midranks([3, 1, 3, 2]).tolist() == [3.5, 1.0, 3.5, 2.0]


class TestFormatting:
    def test_sci(self):
        assert sci(0.73863, 4) == "7.3863e-1"
        assert sci(0.0372, 2) == "3.72e-2"
        assert sci(12345.0, 2) == "1.23e+4"
        assert sci(0.0, 2) == "0.00e+0"

    def test_cell(self):
        assert format_cell(ComparisonCell(0.73863, 0.0372, "=")) == "7.3863e-1 (3.72e-2) ="
        assert format_cell(ComparisonCell(math.nan, math.nan)) == "NaN (NaN)"
        assert format_cell(ComparisonCell(math.nan, math.nan, "-")) == "NaN (NaN)"

    def test_summarize(self):
        c = summarize([1.0, 2.0, 3.0, math.nan])
        assert c.mean == 2.0 and c.std == 1.0
        assert summarize([4.0]).std == 0.0
        assert summarize([math.nan] * 3).is_nan

    def test_mark_summary(self):
        assert mark_summary(["+", "-", "-", "="]) == "1/2/1"

    def test_table(self):
        cells = {
            "TRIC1": {"A": ComparisonCell(0.73863, 0.0372, "="), "B": ComparisonCell(0.5, 0.01)},
            "TRIC2": {"A": ComparisonCell(math.nan, math.nan, "-"), "B": ComparisonCell(0.2, 0.01)},
        }
        t = format_results_table(cells, ["A", "B"], baseline="B")
        rows = t.csv.splitlines()
        assert rows[0] == "Problem,A,B"
        assert rows[1] == "TRIC1,7.3863e-1 (3.72e-2) =,5.0000e-1 (1.00e-2)"
        assert rows[2] == "TRIC2,NaN (NaN),2.0000e-1 (1.00e-2)"
        assert rows[3] == "+/-/=,0/1/1,"
        assert "**5.0000e-1 (1.00e-2)**" in t.text and "NaN: no feasible" in t.text
