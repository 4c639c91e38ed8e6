# -*- test-case-name: qfces.test_agreement -*-
"""
Inter-rater agreement over an :obj:`~qfces.annotation.AnnotationSet`.

:func:`krippendorff_alpha` measures chance-corrected agreement per dimension
and round; :func:`rater_tables` correlates raters with each other and with
the per-item mean rating, at summary level.
"""

import itertools
import logging
from collections import OrderedDict

import attr
import krippendorff
import numpy as np

from ._errors import StatisticsError
from .annotation import DEFAULT_DISCREPANCY_THRESHOLD
from .correlation import summary_level_corr
from .tables import fmt_decimal, render_table

log = logging.getLogger(__name__)

DIFFERENCES = ("ordinal", "interval", "nominal")
ROUND_LABELS = {1: "Round-I", 2: "Round-II"}


def reliability_matrix(ratings, dimension):
    """
    Raters x items array of one dimension's scores, NaN where a rater did
    not score an item.

    :return: ``(raters, items, matrix)``; items are ``(query_id, summary_id)``.
    """
    scores = OrderedDict(
        ((q, s), by_rater) for (q, s, d), by_rater in ratings.scores().items() if d == dimension
    )
    raters = ratings.raters
    items = list(scores)
    matrix = np.full((len(raters), len(items)), np.nan)
    for j, item in enumerate(items):
        for i, rater in enumerate(raters):
            if rater in scores[item]:
                matrix[i, j] = scores[item][rater]
    return raters, items, matrix


def alpha_from_matrix(matrix, difference="ordinal"):
    """
    Krippendorff's alpha of a raters x items matrix (NaN for missing).

    :raises StatisticsError: when no item is rated by two raters, or when
        all pairable ratings are equal (no expected disagreement).
    """
    if difference not in DIFFERENCES:
        raise StatisticsError("unknown difference function %r" % (difference,))
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] < 2:
        raise StatisticsError("need ratings from at least 2 raters")
    pairable = np.count_nonzero(~np.isnan(matrix), axis=0) >= 2
    if not pairable.any():
        raise StatisticsError("no item is rated by two raters")
    values = matrix[:, pairable]
    values = values[~np.isnan(values)]
    if len(np.unique(values)) < 2:
        raise StatisticsError("zero expected disagreement: every pairable rating is the same")
    return float(krippendorff.alpha(reliability_data=matrix, level_of_measurement=difference))


def krippendorff_alpha(
    annotations, dimension, round=1, difference="ordinal", threshold=DEFAULT_DISCREPANCY_THRESHOLD
):
    """Alpha for one dimension, on the ratings in force after ``round``."""
    ratings = annotations.for_round(round, threshold)
    _, items, matrix = reliability_matrix(ratings, dimension)
    if not items:
        raise StatisticsError("no %s ratings in round %d" % (dimension, round))
    return alpha_from_matrix(matrix, difference)


@attr.s(frozen=True)
class AgreementReport(object):
    """
    :ivar alphas: ``{(dimension, round): alpha}``.
    :ivar averages: ``{round: mean alpha over dimensions}``.
    """

    dimensions = attr.ib(converter=tuple)
    rounds = attr.ib(converter=tuple)
    alphas = attr.ib()
    averages = attr.ib()
    difference = attr.ib(default="ordinal")

    def to_dict(self):
        return {
            "difference": self.difference,
            "rows": [
                dict(
                    [("dimension", d)]
                    + [("round%d" % r, self.alphas[d, r]) for r in self.rounds]
                )
                for d in self.dimensions
            ],
            "average": dict(("round%d" % r, self.averages[r]) for r in self.rounds),
        }


def agreement_report(
    annotations,
    dimensions=None,
    rounds=(1, 2),
    difference="ordinal",
    threshold=DEFAULT_DISCREPANCY_THRESHOLD,
):
    dimensions = list(dimensions or annotations.dimensions)
    alphas = {}
    for round in rounds:
        for dimension in dimensions:
            alphas[dimension, round] = krippendorff_alpha(
                annotations, dimension, round, difference, threshold
            )
    averages = dict(
        (r, float(np.mean([alphas[d, r] for d in dimensions]))) for r in rounds
    )
    return AgreementReport(
        dimensions=dimensions,
        rounds=rounds,
        alphas=alphas,
        averages=averages,
        difference=difference,
    )


def render_agreement(report, codes=None, footer=None):
    codes = codes or {}
    header = ["Dimension"] + ["%s alpha" % (ROUND_LABELS[r],) for r in report.rounds]
    rows = [
        [codes.get(d, d)] + [fmt_decimal(report.alphas[d, r]) for r in report.rounds]
        for d in report.dimensions
    ]
    rows.append(None)
    rows.append(["Average"] + [fmt_decimal(report.averages[r]) for r in report.rounds])
    return render_table(header, rows, footer=footer)


@attr.s(frozen=True)
class RaterRow(object):
    label = attr.ib()
    rho = attr.ib()
    tau = attr.ib()


@attr.s(frozen=True)
class RaterTables(object):
    """
    :ivar pairs: ``{dimension: [RaterRow]}`` for every rater pair, then
        their average.
    :ivar versus_average: ``{dimension: [RaterRow]}`` for every rater against
        the per-item mean of all raters, then their average.
    """

    dimensions = attr.ib(converter=tuple)
    pairs = attr.ib()
    versus_average = attr.ib()

    def to_dict(self):
        def rows(table):
            return dict(
                (d, [attr.asdict(r) for r in table[d]]) for d in self.dimensions
            )

        return {"pairs": rows(self.pairs), "versus_average": rows(self.versus_average)}


def _metric(scores, rater):
    return dict((item, by_rater[rater]) for item, by_rater in scores.items() if rater in by_rater)


def _corr(label, metric_a, metric_b):
    common = set(metric_a) & set(metric_b)
    if len(common) < 2:
        raise StatisticsError("%s: fewer than 2 co-rated items" % (label,))
    result = summary_level_corr(
        dict((k, metric_a[k]) for k in common), dict((k, metric_b[k]) for k in common)
    )
    return RaterRow(label=label, rho=result.rho, tau=result.tau)


def _average_row(label, rows):
    return RaterRow(
        label=label,
        rho=float(np.mean([r.rho for r in rows])),
        tau=float(np.mean([r.tau for r in rows])),
    )


def rater_tables(annotations, round=1, dimensions=None, threshold=DEFAULT_DISCREPANCY_THRESHOLD):
    """
    Summary-level rho and tau between every pair of raters and between every
    rater and the mean rating of all raters (the rater included), per
    dimension.

    :raises StatisticsError: when a pair co-rates fewer than two items, or
        every query is constant for some pair.
    """
    ratings = annotations.for_round(round, threshold)
    raters = ratings.raters
    if len(raters) < 2:
        raise StatisticsError("rater tables need at least 2 raters")
    dimensions = list(dimensions or ratings.dimensions)
    pairs = {}
    versus = {}
    for dimension in dimensions:
        scores = OrderedDict(
            ((q, s), by_rater)
            for (q, s, d), by_rater in ratings.scores().items()
            if d == dimension
        )
        metrics = dict((r, _metric(scores, r)) for r in raters)
        mean = dict((item, float(np.mean(list(by.values())))) for item, by in scores.items())
        rows = [
            _corr("%s-%s" % (a, b), metrics[a], metrics[b])
            for a, b in itertools.combinations(raters, 2)
        ]
        pairs[dimension] = rows + [_average_row("Average", rows)]
        rows = [_corr("%s-Avg" % (r,), metrics[r], mean) for r in raters]
        versus[dimension] = rows + [_average_row("Average", rows)]
    return RaterTables(dimensions=dimensions, pairs=pairs, versus_average=versus)


def render_rater_tables(tables, codes=None, footer=None):
    """Two stacked blocks, rater pairs then raters against the average."""
    codes = codes or {}
    header = ["Raters"]
    for d in tables.dimensions:
        label = codes.get(d, d)
        header.extend([label + " rho", label + " tau"])

    def block(table):
        labels = [row.label for row in table[tables.dimensions[0]]]
        out = []
        for i, label in enumerate(labels):
            if label == "Average":
                out.append(None)
            line = [label]
            for d in tables.dimensions:
                row = table[d][i]
                line.extend([fmt_decimal(row.rho), fmt_decimal(row.tau)])
            out.append(line)
        return out

    rows = block(tables.pairs) + [None] + block(tables.versus_average)
    return render_table(header, rows, footer=footer)


def rating_distribution(annotations, round=1, threshold=DEFAULT_DISCREPANCY_THRESHOLD):
    """``{dimension: [count of 1s, ..., count of 5s]}`` across all raters."""
    ratings = annotations.for_round(round, threshold)
    out = OrderedDict((d, [0] * 5) for d in ratings.dimensions)
    for record in ratings:
        out[record.dimension][record.score - 1] += 1
    return out


def render_rating_distribution(distribution, codes=None, footer=None):
    codes = codes or {}
    header = ["Dimension", "1", "2", "3", "4", "5", "n"]
    rows = [
        [codes.get(d, d)] + [str(c) for c in counts] + [str(sum(counts))]
        for d, counts in distribution.items()
    ]
    return render_table(header, rows, footer=footer)
