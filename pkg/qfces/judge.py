# -*- test-case-name: qfces.test_judge -*-
"""
LLM-as-judge scoring.

For every dimension a judge prompt is sampled ``n`` times, a score is
extracted from each reply, and the dimension's score is the expectation of
the empirical score distribution: ``sum(p(k) * k)`` with ``p(k)`` the share
of valid samples that scored ``k``. That is exactly the mean of the valid
scores; it is computed with :class:`fractions.Fraction` so the two agree to
the last bit.
"""

import logging
import re
from fractions import Fraction

import attr

from effect.fold import sequence

from ._errors import BackendError, StatisticsError, unwrap
from .gateway import DEFAULT_MAX_FAILURE_FRACTION, DEFAULT_RETRY, sample_n
from .io import iter_json_lines
from .promptkit import CANONICAL_ORDER, get_dimension, render_evaluation
from .tables import fmt_decimal, render_table

log = logging.getLogger(__name__)

#: What :func:`extract_score` returns for a reply without a usable score.
INVALID = None
SCORES = (1, 2, 3, 4, 5)
DEFAULT_THRESHOLD = 0.5

_SCORE_WORD = re.compile(r"score", re.I)
_DIGIT = re.compile(r"(?<![\d.])(?<!\d-)([1-5])(?!\d|\.\d|-\d)")


class ScoreValidityError(BackendError):
    """Too few judge replies for a dimension carried a parseable score."""


def extract_score(text):
    """
    Extract a 1-5 score from a judge reply.

    The last occurrence of "score" (any case) followed within 10 characters
    by a standalone digit 1-5 wins. Failing that, the last standalone digit
    1-5 anywhere in the text. Digits forming a range such as "1-5" are never
    standalone. Otherwise :data:`INVALID`.
    """
    text = text or ""
    found = INVALID
    for match in _SCORE_WORD.finditer(text):
        window = text[match.end():match.end() + 10]
        digit = _DIGIT.search(window)
        if digit is not None and digit.start() < 10:
            found = int(digit.group(1))
    if found is not INVALID:
        return found
    digits = _DIGIT.findall(text)
    if digits:
        return int(digits[-1])
    return INVALID


@attr.s(frozen=True)
class ScoreSample(object):
    raw_text = attr.ib()
    extracted = attr.ib()

    @classmethod
    def from_text(cls, text):
        return cls(raw_text=text, extracted=extract_score(text))


def _five_counts(instance, attribute, value):
    if len(value) != len(SCORES) or any(c < 0 for c in value):
        raise ValueError("counts must be five non-negative integers, got %r" % (value,))


@attr.s(frozen=True)
class ScoreDistribution(object):
    """
    :ivar counts: How many valid samples scored 1, 2, 3, 4 and 5.
    :ivar n_invalid: Samples without a score, failed requests included.
    """

    counts = attr.ib(converter=tuple, validator=_five_counts)
    n_invalid = attr.ib(default=0)

    @classmethod
    def from_scores(cls, scores):
        counts = [0] * len(SCORES)
        invalid = 0
        for score in scores:
            if score is INVALID:
                invalid += 1
            else:
                counts[score - 1] += 1
        return cls(counts=counts, n_invalid=invalid)

    @classmethod
    def from_mapping(cls, counts, n_invalid=0):
        """From ``{score: count}``; keys may be ints or their strings."""
        normal = dict((int(k), v) for k, v in counts.items())
        return cls(counts=[normal.get(k, 0) for k in SCORES], n_invalid=n_invalid)

    @property
    def n_valid(self):
        return sum(self.counts)

    def probabilities(self):
        """``{score: Fraction}`` over valid samples."""
        if not self.n_valid:
            raise StatisticsError("no valid samples")
        return dict((k, Fraction(c, self.n_valid)) for k, c in zip(SCORES, self.counts))

    def scores(self):
        """The multiset of valid scores, ascending."""
        return [k for k, c in zip(SCORES, self.counts) for _ in range(c)]

    def to_dict(self):
        return dict((str(k), c) for k, c in zip(SCORES, self.counts))


def weighted_score(distribution):
    """
    The probability-weighted score of ``distribution``.

    :raises StatisticsError: if there are no valid samples.
    """
    if not distribution.n_valid:
        raise StatisticsError("cannot score a distribution without valid samples")
    probabilities = distribution.probabilities()
    return float(sum(p * k for k, p in probabilities.items()))


@attr.s(frozen=True)
class DimensionScore(object):
    dimension = attr.ib()
    o = attr.ib()
    distribution = attr.ib()
    n_requested = attr.ib()

    @classmethod
    def from_distribution(cls, dimension, distribution, n_requested=None):
        if n_requested is None:
            n_requested = distribution.n_valid + distribution.n_invalid
        return cls(
            dimension=dimension,
            o=weighted_score(distribution),
            distribution=distribution,
            n_requested=n_requested,
        )


def score_results(dimension, results, threshold=DEFAULT_THRESHOLD):
    """
    Turn the completion results of one dimension into a :obj:`DimensionScore`.

    :raises ScoreValidityError: if the share of valid scores is below
        ``threshold``.
    """
    scores = [extract_score(r.text) if r.ok else INVALID for r in results]
    distribution = ScoreDistribution.from_scores(scores)
    n = len(results)
    if not distribution.n_valid or distribution.n_valid < threshold * n:
        log.error(
            "dimension %s: %d of %d judge samples had no valid score",
            dimension,
            distribution.n_invalid,
            n,
        )
        raise ScoreValidityError(
            "dimension %s: only %d of %d samples yielded a valid score (%d invalid, threshold %s)"
            % (dimension, distribution.n_valid, n, distribution.n_invalid, threshold)
        )
    return DimensionScore.from_distribution(dimension, distribution, n_requested=n)


def evaluate_dimension(
    summary,
    context,
    dimension,
    backend_id,
    params,
    threshold=DEFAULT_THRESHOLD,
    templates=None,
    max_failure_fraction=DEFAULT_MAX_FAILURE_FRACTION,
    policy=DEFAULT_RETRY,
):
    """Return an Effect of the :obj:`DimensionScore` of one dimension."""
    dimension = get_dimension(dimension)
    prompt = render_evaluation(dimension, summary, context, templates=templates)
    request = prompt.request(backend_id, params)
    return sample_n(
        request, params.n_samples, max_failure_fraction=max_failure_fraction, policy=policy
    ).on(success=lambda results: score_results(dimension.id, results, threshold))


def evaluate_summary(
    summary,
    context,
    dimensions,
    backend_id,
    params,
    threshold=DEFAULT_THRESHOLD,
    templates=None,
    max_failure_fraction=DEFAULT_MAX_FAILURE_FRACTION,
    policy=DEFAULT_RETRY,
):
    """
    Return an Effect of ``{dimension_id: DimensionScore}`` for ``summary``.

    Dimensions are judged one after the other; the ``n`` samples of each
    run in parallel.
    """
    if not summary or not summary.strip():
        raise ValueError("summary must not be empty")
    if params.n_samples < 1:
        raise ValueError("n must be >= 1")
    ids = [get_dimension(d).id for d in dimensions]
    effects = [
        evaluate_dimension(
            summary,
            context,
            d,
            backend_id,
            params,
            threshold=threshold,
            templates=templates,
            max_failure_fraction=max_failure_fraction,
            policy=policy,
        )
        for d in ids
    ]

    def reraise(error):
        raise unwrap(error)

    return sequence(effects).on(success=lambda scores: dict(zip(ids, scores)), error=reraise)


def score_record(instance_id, model, score):
    """The persisted form of one judged (instance, model, dimension)."""
    return {
        "instance_id": instance_id,
        "model": model,
        "dimension": score.dimension,
        "counts": score.distribution.to_dict(),
        "n_invalid": score.distribution.n_invalid,
        "n_requested": score.n_requested,
        "o": score.o,
    }


def parse_score_records(text, source="<string>"):
    """
    Read persisted score records back as ``(instance_id, model, DimensionScore)``.
    The weighted score is recomputed from the counts.
    """
    out = []
    for number, obj in iter_json_lines(text, source):
        try:
            distribution = ScoreDistribution.from_mapping(obj["counts"], obj.get("n_invalid", 0))
            score = DimensionScore.from_distribution(
                obj["dimension"], distribution, n_requested=obj.get("n_requested")
            )
        except (KeyError, TypeError, ValueError) as e:
            raise StatisticsError("%s:%d: bad score record (%s)" % (source, number, e))
        out.append((obj["instance_id"], obj["model"], score))
    return out


@attr.s(frozen=True)
class EvalMatrix(object):
    """
    Model x dimension means.

    :ivar cells: ``{(model, dimension): mean score}``.
    :ivar averages: ``{model: mean of that model's cells}``.
    """

    models = attr.ib(converter=tuple)
    dimensions = attr.ib(converter=tuple)
    cells = attr.ib()
    averages = attr.ib()

    def to_dict(self):
        return {
            "dimensions": list(self.dimensions),
            "rows": [
                {
                    "model": m,
                    "scores": dict((d, self.cells[m, d]) for d in self.dimensions),
                    "average": self.averages[m],
                }
                for m in self.models
            ],
        }


def _value(score):
    return score.o if isinstance(score, DimensionScore) else float(score)


def _mean(values):
    return sum(values) / len(values)


def aggregate_matrix(results, dimensions=None):
    """
    Average per-instance scores into an :obj:`EvalMatrix`.

    :param results: ``{model: [{dimension: DimensionScore or number}, ...]}``,
        one mapping per judged instance.
    :param dimensions: Columns to report; by default every dimension seen,
        in canonical order.
    :raises StatisticsError: if some (model, dimension) has no score.
    """
    if not results:
        raise StatisticsError("nothing to aggregate")
    if dimensions is None:
        seen = set(d for per_instance in results.values() for scores in per_instance for d in scores)
        dimensions = [d for d in CANONICAL_ORDER if d in seen] + sorted(seen - set(CANONICAL_ORDER))
    models = sorted(results)
    cells = {}
    for model in models:
        for dimension in dimensions:
            values = [_value(s[dimension]) for s in results[model] if dimension in s]
            if not values:
                raise StatisticsError("no %s scores for model %s" % (dimension, model))
            cells[model, dimension] = _mean(values)
    averages = dict((m, _mean([cells[m, d] for d in dimensions])) for m in models)
    return EvalMatrix(models=models, dimensions=dimensions, cells=cells, averages=averages)


def render_matrix(matrix, footer=None):
    header = ["Model"] + [get_dimension(d).code for d in matrix.dimensions] + ["Avg"]
    rows = [
        [m] + [fmt_decimal(matrix.cells[m, d]) for d in matrix.dimensions]
        + [fmt_decimal(matrix.averages[m])]
        for m in matrix.models
    ]
    return render_table(header, rows, footer=footer)


def render_distribution(distribution):
    """One line: counts per score and the weighted score."""
    counts = " ".join("%d:%d" % (k, c) for k, c in zip(SCORES, distribution.counts))
    if not distribution.n_valid:
        return "%s  invalid=%d" % (counts, distribution.n_invalid)
    return "%s  invalid=%d  o=%s" % (
        counts, distribution.n_invalid, fmt_decimal(weighted_score(distribution))
    )

