# -*- test-case-name: qfces.test_correlation -*-
"""
Rank correlations, permutation p-values and summary-level correlation.

Summary-level correlation compares two metrics that both score every
candidate summary of every query: per query, the two vectors over that
query's summaries are correlated, and the per-query correlations are
averaged. Queries on which either metric is constant have no defined rank
correlation and are skipped (and counted).

Permutation tests are vectorised with numpy: a :obj:`Measure` pairs a
correlation function with a batch form that scores many permutations of
``y`` against ``x`` at once.
"""

import logging
from collections import OrderedDict

import attr
import numpy as np
from scipy import stats

from ._errors import StatisticsError
from .tables import fmt_decimal, render_table

log = logging.getLogger(__name__)

DEFAULT_ITERATIONS = 10000
MIN_ITERATIONS = 100
SIGNIFICANCE = 0.05
_TIE_TOLERANCE = 1e-12
#: Cap on the number of cells in one block of permuted vectors.
_BLOCK_CELLS = 2000000


def _vectors(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or y.ndim != 1:
        raise StatisticsError("expected one-dimensional score vectors")
    if len(x) != len(y):
        raise StatisticsError("length mismatch: %d != %d" % (len(x), len(y)))
    if len(x) < 2:
        raise StatisticsError("need at least 2 observations, got %d" % (len(x),))
    if is_constant(x) or is_constant(y):
        raise StatisticsError("rank correlation is undefined for a constant vector")
    return x, y


def is_constant(values):
    values = np.asarray(values, dtype=float)
    return bool(np.all(values == values[0]))


def _clip(value):
    return float(min(1.0, max(-1.0, value)))


def spearman(x, y):
    """
    Spearman's rho: Pearson correlation of the ranks, ties sharing their mean
    rank.

    :raises StatisticsError: on a length mismatch, fewer than two
        observations, or a constant vector.
    """
    x, y = _vectors(x, y)
    return _clip(stats.spearmanr(x, y)[0])


def kendall_tau_b(x, y):
    """
    Kendall's tau-b, which corrects for ties in either vector.

    :raises StatisticsError: as :func:`spearman`.
    """
    x, y = _vectors(x, y)
    return _clip(stats.kendalltau(x, y)[0])


def _spearman_batch(x, ys):
    rx = stats.rankdata(x)
    rx = rx - rx.mean()
    ry = np.apply_along_axis(stats.rankdata, 1, ys)
    ry = ry - ry.mean(axis=1, keepdims=True)
    denominator = np.sqrt((rx * rx).sum() * (ry * ry).sum(axis=1))
    return np.clip(ry.dot(rx) / denominator, -1.0, 1.0)


def _kendall_batch(x, ys):
    n = len(x)
    upper = np.triu_indices(n, k=1)
    sx = np.sign(x[:, None] - x[None, :])[upper]
    sy = np.sign(ys[:, :, None] - ys[:, None, :])[:, upper[0], upper[1]]
    numerator = (sy * sx).sum(axis=1)
    denominator = np.sqrt(np.count_nonzero(sx) * np.count_nonzero(sy, axis=1))
    return np.clip(numerator / denominator, -1.0, 1.0)


@attr.s(frozen=True)
class Measure(object):
    """
    A correlation measure.

    :ivar func: ``(x, y) -> float``.
    :ivar batch: ``(x, ys) -> array``, the measure of ``x`` against every row
        of the 2-D array ``ys``.
    """

    name = attr.ib()
    symbol = attr.ib()
    func = attr.ib()
    batch = attr.ib()

    def __call__(self, x, y):
        return self.func(x, y)


SPEARMAN = Measure(name="spearman", symbol="rho", func=spearman, batch=_spearman_batch)
KENDALL = Measure(name="kendall", symbol="tau", func=kendall_tau_b, batch=_kendall_batch)
MEASURES = OrderedDict([(SPEARMAN.name, SPEARMAN), (KENDALL.name, KENDALL)])


def get_measure(name):
    try:
        return MEASURES[name]
    except KeyError:
        raise StatisticsError("unknown measure %r" % (name,))


def _permutation_blocks(y, iterations, rng):
    """Yield 2-D arrays whose rows are seeded permutations of ``y``."""
    y = np.asarray(y, dtype=float)
    size = max(1, _BLOCK_CELLS // (len(y) * len(y)))
    done = 0
    while done < iterations:
        k = min(size, iterations - done)
        yield y[np.argsort(rng.random((k, len(y))), axis=1)]
        done += k


def permutation_stats(stat, x, y, iterations, rng):
    """``stat`` of ``x`` against ``iterations`` permutations of ``y``."""
    x = np.asarray(x, dtype=float)
    out = []
    for block in _permutation_blocks(y, iterations, rng):
        if isinstance(stat, Measure):
            out.append(stat.batch(x, block))
        else:
            out.append(np.array([stat(x, row) for row in block]))
    return np.concatenate(out)


def _pvalue(observed, null):
    extreme = np.count_nonzero(np.abs(null) >= abs(observed) - _TIE_TOLERANCE)
    return (1.0 + extreme) / (1.0 + len(null))


def perm_pvalue(stat, x, y, iterations=DEFAULT_ITERATIONS, seed=0):
    """
    Two-sided permutation p-value of ``stat(x, y)``.

    ``y`` is shuffled ``iterations`` times with a generator seeded by
    ``seed``; the p-value is ``(1 + k) / (1 + iterations)`` where ``k``
    counts shuffles at least as extreme as the observed value.

    :param stat: A :obj:`Measure` (vectorised) or any ``(x, y) -> float``.
    """
    if iterations < MIN_ITERATIONS:
        raise StatisticsError(
            "permutation test needs at least %d iterations, got %r" % (MIN_ITERATIONS, iterations)
        )
    observed = stat(x, y)
    rng = np.random.default_rng(seed)
    return _pvalue(observed, permutation_stats(stat, x, y, iterations, rng))


@attr.s(frozen=True)
class CorrelationResult(object):
    """
    Summary-level correlation of two metrics. The p-values are None when no
    permutation test was requested.
    """

    rho = attr.ib()
    tau = attr.ib()
    p_rho = attr.ib()
    p_tau = attr.ib()
    n_queries_used = attr.ib()
    n_queries_skipped_constant = attr.ib()

    def get(self, measure):
        return self.rho if measure.name == "spearman" else self.tau

    def pvalue(self, measure):
        return self.p_rho if measure.name == "spearman" else self.p_tau

    def to_dict(self):
        return attr.asdict(self)


def group_by_query(metric_a, metric_b):
    """
    Pair two ``{(query_id, summary_id): score}`` metrics into
    ``[(query_id, xs, ys)]``, queries and summaries in sorted order.

    :raises StatisticsError: if the key sets differ.
    """
    keys = set(metric_a)
    if keys != set(metric_b):
        raise StatisticsError(
            "metrics cover different items (%d only in the first, %d only in the second)"
            % (len(keys - set(metric_b)), len(set(metric_b) - keys))
        )
    grouped = OrderedDict()
    for query_id, summary_id in sorted(keys):
        xs, ys = grouped.setdefault(query_id, ([], []))
        xs.append(metric_a[query_id, summary_id])
        ys.append(metric_b[query_id, summary_id])
    return [(q, np.array(xs, dtype=float), np.array(ys, dtype=float)) for q, (xs, ys) in grouped.items()]


def _usable(groups):
    used = []
    for query_id, xs, ys in groups:
        if len(xs) < 2 or is_constant(xs) or is_constant(ys):
            log.debug("query %s: constant or single-summary vector, skipped", query_id)
            continue
        used.append((query_id, xs, ys))
    return used


def summary_level_corr(metric_a, metric_b, iterations=None, seed=0):
    """
    Summary-level rho and tau of two metrics over the same (query, summary)
    items.

    :param iterations: Permutations for the p-values (shuffling each query's
        summaries independently and re-averaging); None for no test.
    :raises StatisticsError: on a key mismatch, or when every query is
        skipped.
    """
    groups = group_by_query(metric_a, metric_b)
    used = _usable(groups)
    if not used:
        raise StatisticsError(
            "every one of the %d queries has a constant vector; no correlation" % (len(groups),)
        )
    values = {}
    pvalues = {}
    for measure in (SPEARMAN, KENDALL):
        per_query = [measure(xs, ys) for _, xs, ys in used]
        values[measure.name] = float(np.mean(per_query))
        pvalues[measure.name] = None
        if iterations:
            if iterations < MIN_ITERATIONS:
                raise StatisticsError(
                    "permutation test needs at least %d iterations" % (MIN_ITERATIONS,)
                )
            rng = np.random.default_rng(seed)
            null = np.mean(
                [permutation_stats(measure, xs, ys, iterations, rng) for _, xs, ys in used],
                axis=0,
            )
            pvalues[measure.name] = _pvalue(values[measure.name], null)
    return CorrelationResult(
        rho=_clip(values["spearman"]),
        tau=_clip(values["kendall"]),
        p_rho=pvalues["spearman"],
        p_tau=pvalues["kendall"],
        n_queries_used=len(used),
        n_queries_skipped_constant=len(groups) - len(used),
    )


def summary_level(measure, metric_a, metric_b):
    """The summary-level value of a single measure, without p-values."""
    if isinstance(measure, str):
        measure = get_measure(measure)
    return summary_level_corr(metric_a, metric_b).get(measure)


def stars(pvalue):
    if pvalue is not None and pvalue < SIGNIFICANCE:
        return "*"
    return ""


def render_correlation_table(results, judges, dimensions, codes=None, footer=None):
    """
    Judges as rows; a rho and a tau column per dimension.

    :param results: ``{(judge, dimension): CorrelationResult}``; missing
        cells render as "-".
    :param codes: ``{dimension: column label}``.
    """
    codes = codes or {}
    header = ["Judge"]
    for d in dimensions:
        label = codes.get(d, d)
        header.extend([label + " rho", label + " tau"])
    rows = []
    for judge in judges:
        row = [judge]
        for d in dimensions:
            result = results.get((judge, d))
            if result is None:
                row.extend(["-", "-"])
                continue
            row.append(fmt_decimal(result.rho) + stars(result.p_rho))
            row.append(fmt_decimal(result.tau) + stars(result.p_tau))
        rows.append(row)
    return render_table(header, rows, footer=footer)
