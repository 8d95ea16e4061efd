"""Wilcoxon rank-sum marks, Friedman ranks and results-table formatting.

Runs that found no feasible solution carry NaN indicator values. For ranking
and testing, NaN counts as worse than every number; for mean/std it is
dropped, and a cell prints ``NaN (NaN)`` only when every run is NaN.
"""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np
from scipy import stats as _sps

EXACT_LIMIT = 20
NAN_FOOTNOTE = (
    "NaN: no feasible solution in the run. NaN runs rank worst in the Wilcoxon and Friedman "
    "tests and are excluded from mean/std; a cell reads NaN (NaN) only if every run was NaN, "
    "and its significance mark is then omitted from the cell but counted in the +/-/= row."
)


@dataclass(frozen=True)
class WilcoxonResult:
    mark: str
    p: float
    statistic: float


@dataclass(frozen=True)
class FriedmanResult:
    mean_ranks: np.ndarray
    chi2: float
    p: float


@dataclass(frozen=True)
class ComparisonCell:
    mean: float
    std: float
    mark: str | None = None

    @property
    def is_nan(self) -> bool:
        return math.isnan(self.mean)


def midranks(values: Sequence[float]) -> np.ndarray:
    """1-based ranks with ties sharing the average of their positions."""
    values = np.asarray(values, dtype=float)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _worst_filled(values: Sequence[float], smaller_is_better: bool) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    return np.where(np.isnan(arr), np.inf if smaller_is_better else -np.inf, arr)


def _subset_sum_counts(weights: Sequence[int], size: int) -> np.ndarray:
    """``counts[s]`` = number of ``size``-subsets of ``weights`` summing to ``s``."""
    total = int(sum(weights))
    counts = np.zeros((size + 1, total + 1), dtype=np.int64)
    counts[0, 0] = 1
    for w in weights:
        shifted = np.zeros_like(counts)
        shifted[1:, w:] = counts[:-1, : total + 1 - w]
        counts += shifted
    return counts[size]


def _exact_p(ranks: np.ndarray, n1: int, w: float) -> float:
    doubled = np.rint(2 * ranks).astype(int)
    counts = _subset_sum_counts(doubled.tolist(), n1)
    center2 = n1 * (len(ranks) + 1)
    observed = abs(int(round(2 * w)) - center2)
    sums = np.arange(len(counts))
    extreme = np.abs(sums - center2) >= observed
    return float(counts[extreme].sum() / counts.sum())


def _normal_p(ranks: np.ndarray, values: np.ndarray, n1: int, n2: int, w: float) -> float:
    N = n1 + n2
    _, tie_counts = np.unique(values, return_counts=True)
    tie_term = float(np.sum(tie_counts**3 - tie_counts))
    var = n1 * n2 / 12.0 * ((N + 1) - tie_term / (N * (N - 1)))
    if var <= 0:
        return 1.0
    diff = abs(w - n1 * (N + 1) / 2.0)
    z = max(diff - 0.5, 0.0) / math.sqrt(var)
    return min(1.0, math.erfc(z / math.sqrt(2.0)))


def wilcoxon_rank_sum(
    a: Sequence[float],
    b: Sequence[float],
    alpha: float = 0.05,
    smaller_is_better: bool = True,
    exact_limit: int = EXACT_LIMIT,
) -> WilcoxonResult:
    """Two-sided Wilcoxon rank-sum test of ``a`` against ``b``.

    The null distribution is enumerated exactly (midranks included) when
    ``len(a) + len(b) <= exact_limit``; otherwise the tie-corrected normal
    approximation with continuity correction is used. The mark is ``+`` when
    ``a`` is significantly better, ``-`` when significantly worse, ``=``
    otherwise.
    """
    if len(a) == 0 or len(b) == 0:
        raise ValueError("both samples must be nonempty")
    x = _worst_filled(a, smaller_is_better)
    y = _worst_filled(b, smaller_is_better)
    pooled = np.concatenate([x, y])
    ranks = midranks(pooled)
    n1, n2 = len(x), len(y)
    w = float(ranks[:n1].sum())
    if n1 + n2 <= exact_limit:
        p = _exact_p(ranks, n1, w)
    else:
        p = _normal_p(ranks, pooled, n1, n2, w)
    if p >= alpha:
        mark = "="
    else:
        med_a, med_b = np.median(x), np.median(y)
        if med_a != med_b:
            a_better = med_a < med_b if smaller_is_better else med_a > med_b
        else:
            mean_a, mean_b = ranks[:n1].mean(), ranks[n1:].mean()
            a_better = mean_a < mean_b if smaller_is_better else mean_a > mean_b
        mark = "+" if a_better else "-"
    return WilcoxonResult(mark=mark, p=p, statistic=w)


def friedman_ranks(values: Sequence[Sequence[float]], smaller_is_better: bool = True) -> FriedmanResult:
    """Average Friedman rank per algorithm.

    ``values[i][j]`` is algorithm i's result on problem j. Ranks are computed
    per problem with midranks; the chi-square statistic is tie-corrected.
    """
    mat = np.asarray(values, dtype=float)
    if mat.ndim != 2 or mat.shape[0] < 2 or mat.shape[1] < 2:
        raise ValueError("need at least two algorithms and two problems")
    k, n = mat.shape
    filled = _worst_filled(mat, smaller_is_better)
    if not smaller_is_better:
        filled = -filled
    ranks = np.column_stack([midranks(filled[:, j]) for j in range(n)])
    mean_ranks = ranks.mean(axis=1)
    chi2 = 12.0 * n / (k * (k + 1)) * float(np.sum((mean_ranks - (k + 1) / 2.0) ** 2))
    ties = 0.0
    for j in range(n):
        _, t = np.unique(filled[:, j], return_counts=True)
        ties += float(np.sum(t**3 - t))
    correction = 1.0 - ties / (n * k * (k * k - 1))
    if correction > 0:
        chi2 /= correction
        p = float(_sps.chi2.sf(chi2, k - 1))
    else:
        chi2, p = 0.0, 1.0
    return FriedmanResult(mean_ranks=mean_ranks, chi2=chi2, p=p)


def sci(value: float, digits: int) -> str:
    """Scientific notation with an unpadded signed exponent, e.g. ``7.3863e-1``."""
    mantissa, exponent = f"{value:.{digits}e}".split("e")
    return f"{mantissa}e{int(exponent):+d}"


def summarize(samples: Sequence[float], mark: str | None = None) -> ComparisonCell:
    arr = np.asarray(samples, dtype=float)
    arr = arr[~np.isnan(arr)]
    if arr.size == 0:
        return ComparisonCell(math.nan, math.nan, mark)
    std = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
    return ComparisonCell(float(np.mean(arr)), std, mark)


def format_cell(cell: ComparisonCell) -> str:
    """``mean (std) mark``; all-NaN cells print bare ``NaN (NaN)``.

    The mark of an all-NaN cell still counts in the summary row.
    """
    if cell.is_nan:
        return "NaN (NaN)"
    text = f"{sci(cell.mean, 4)} ({sci(cell.std, 2)})"
    return f"{text} {cell.mark}" if cell.mark else text


def mark_summary(marks: Sequence[str | None]) -> str:
    return f"{sum(m == '+' for m in marks)}/{sum(m == '-' for m in marks)}/{sum(m == '=' for m in marks)}"


@dataclass(frozen=True)
class ResultsTable:
    csv: str
    text: str


def format_results_table(
    cells: Mapping[str, Mapping[str, ComparisonCell]],
    columns: Sequence[str],
    baseline: str | None = None,
    smaller_is_better: bool = True,
    row_header: str = "Problem",
) -> ResultsTable:
    """CSV and aligned Markdown renderings of a results table.

    ``cells[row][column]``. The best mean of each row is bolded in the
    Markdown rendering. A final ``+/-/=`` row counts marks for every
    non-baseline column.
    """
    rows = list(cells)
    header = [row_header, *columns]
    body = [[row] + [format_cell(cells[row][col]) for col in columns] for row in rows]
    summary = ["+/-/="] + ["" if col == baseline else mark_summary([cells[r][col].mark for r in rows]) for col in columns]

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(body)
    writer.writerow(summary)

    pretty = []
    for row, line in zip(rows, body):
        means = [cells[row][col].mean for col in columns]
        finite = [m for m in means if not math.isnan(m)]
        best = (min(finite) if smaller_is_better else max(finite)) if finite else None
        pretty.append([line[0]] + [f"**{text}**" if best is not None and m == best else text for text, m in zip(line[1:], means)])
    table = [header, *pretty, summary]
    widths = [max(len(r[i]) for r in table) for i in range(len(header))]

    def fmt_row(r: Sequence[str]) -> str:
        return "| " + " | ".join(c.ljust(w) for c, w in zip(r, widths)) + " |"

    lines = [fmt_row(header), "|" + "|".join("-" * (w + 2) for w in widths) + "|"]
    lines += [fmt_row(r) for r in pretty]
    lines.append(fmt_row(summary))
    lines += ["", NAN_FOOTNOTE]
    return ResultsTable(csv=buf.getvalue(), text="\n".join(lines) + "\n")
