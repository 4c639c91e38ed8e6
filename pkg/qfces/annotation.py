# -*- test-case-name: qfces.test_annotation -*-
"""
Human rating records and the two-round annotation protocol.

In round 1 every rater scores every (query, summary, dimension) item on a
1-5 scale. Items where the raters' scores spread by ``threshold`` points or
more are flagged and re-rated in round 2. :func:`merge_rounds` then builds
the final set: round-2 scores for flagged items, round-1 scores elsewhere.
"""

import logging
from collections import OrderedDict

import attr

from effect import Effect
from effect.fold import fold_effect

from ._errors import ValidationError, unwrap
from .io import ReadText, iter_json_lines

log = logging.getLogger(__name__)

DEFAULT_DISCREPANCY_THRESHOLD = 2
RECORD_KEYS = frozenset(["rater_id", "query_id", "summary_id", "dimension", "round", "score"])


class AnnotationError(ValidationError):
    pass


def _likert(instance, attribute, value):
    if isinstance(value, bool) or not isinstance(value, int) or not 1 <= value <= 5:
        raise AnnotationError("score must be an integer 1-5, got %r" % (value,))


def _round(instance, attribute, value):
    if value not in (1, 2):
        raise AnnotationError("round must be 1 or 2, got %r" % (value,))


@attr.s(frozen=True)
class RatingRecord(object):
    rater_id = attr.ib()
    query_id = attr.ib()
    summary_id = attr.ib()
    dimension = attr.ib()
    round = attr.ib(validator=_round)
    score = attr.ib(validator=_likert)

    @property
    def item(self):
        """The rated item: ``(query_id, summary_id, dimension)``."""
        return (self.query_id, self.summary_id, self.dimension)

    @property
    def key(self):
        return (self.rater_id,) + self.item + (self.round,)


class AnnotationSet(object):
    """
    A collection of :obj:`RatingRecord`, unique per (rater, query, summary,
    dimension, round). Missing ratings are reported by :meth:`missing`, never
    imputed.
    """

    def __init__(self, records=()):
        by_key = OrderedDict()
        for record in records:
            if record.key in by_key:
                raise AnnotationError("duplicate rating %r" % (record.key,))
            by_key[record.key] = record
        self.records = tuple(by_key.values())

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __eq__(self, other):
        if not isinstance(other, AnnotationSet):
            return NotImplemented
        return sorted(r.key + (r.score,) for r in self) == sorted(
            r.key + (r.score,) for r in other
        )

    def __ne__(self, other):
        result = self.__eq__(other)
        return result if result is NotImplemented else not result

    def __repr__(self):
        return "<AnnotationSet of %d records>" % (len(self.records),)

    @property
    def raters(self):
        return sorted(set(r.rater_id for r in self.records))

    @property
    def dimensions(self):
        return sorted(set(r.dimension for r in self.records))

    def items(self, dimension=None):
        return sorted(
            set(r.item for r in self.records if dimension is None or r.dimension == dimension)
        )

    def round_view(self, round):
        return AnnotationSet(r for r in self.records if r.round == round)

    def scores(self):
        """
        ``{item: {rater_id: score}}``. Only meaningful on a set holding at
        most one record per rater and item (a single round, or a merged set).
        """
        out = OrderedDict()
        for record in sorted(self.records, key=lambda r: (r.item, r.rater_id)):
            out.setdefault(record.item, OrderedDict())[record.rater_id] = record.score
        return out

    def missing(self):
        """``[(rater_id, item)]`` for every item a rater did not score."""
        raters = self.raters
        return [
            (rater, item)
            for item, scores in self.scores().items()
            for rater in raters
            if rater not in scores
        ]

    def for_round(self, round, threshold=DEFAULT_DISCREPANCY_THRESHOLD):
        """
        The ratings in force after ``round``: round 1 as rated, or the
        merged set after round 2.
        """
        if round == 1:
            return self.round_view(1)
        if round == 2:
            return merge_rounds(self.round_view(1), self.round_view(2), threshold)
        raise AnnotationError("round must be 1 or 2, got %r" % (round,))


def record_from_dict(obj, where="record"):
    if not isinstance(obj, dict) or set(obj) != RECORD_KEYS:
        raise AnnotationError(
            "%s: a rating needs exactly the keys %s" % (where, ", ".join(sorted(RECORD_KEYS)))
        )
    try:
        return RatingRecord(
            rater_id=str(obj["rater_id"]),
            query_id=str(obj["query_id"]),
            summary_id=str(obj["summary_id"]),
            dimension=obj["dimension"],
            round=obj["round"],
            score=obj["score"],
        )
    except AnnotationError as e:
        raise AnnotationError("%s: %s" % (where, e))


def record_to_dict(record):
    return attr.asdict(record)


def parse_annotations(text, source="<string>"):
    """Parse line-delimited rating records into an :obj:`AnnotationSet`."""
    try:
        lines = list(iter_json_lines(text, source))
    except ValueError as e:
        raise AnnotationError(str(e))
    return AnnotationSet(
        record_from_dict(obj, "%s:%d" % (source, number)) for number, obj in lines
    )


def load_annotations(*paths):
    """
    Return an Effect of the :obj:`AnnotationSet` holding the ratings of every
    file in ``paths``.
    """

    def read(path):
        def missing(error):
            if isinstance(error, FileNotFoundError):
                raise AnnotationError("annotations not found: %s" % (path,))
            raise error

        return Effect(ReadText(path=path)).on(
            success=lambda text: parse_annotations(text, path).records, error=missing
        )

    def reraise(error):
        raise unwrap(error)

    return fold_effect(lambda acc, records: acc + list(records), [], [read(p) for p in paths]).on(
        success=AnnotationSet, error=reraise
    )


def spread(scores):
    scores = list(scores)
    return max(scores) - min(scores)


def flag_discrepancies(round1, threshold=DEFAULT_DISCREPANCY_THRESHOLD):
    """
    Find round-1 items whose scores spread by ``threshold`` points or more.

    :return: ``(flagged, incomplete)``: the flagged items, and the items some
        rater did not score (reported and never flagged).
    """
    view = round1.round_view(1)
    raters = set(view.raters)
    flagged = []
    incomplete = []
    for item, scores in view.scores().items():
        if set(scores) != raters:
            log.warning("item %r: rated by %d of %d raters", item, len(scores), len(raters))
            incomplete.append(item)
            continue
        if spread(scores.values()) >= threshold:
            flagged.append(item)
    return flagged, incomplete


def merge_rounds(round1, round2, threshold=DEFAULT_DISCREPANCY_THRESHOLD):
    """
    Replace the round-1 scores of flagged items with their round-2 scores.

    A flagged item's rater without a round-2 score keeps the round-1 score.

    :raises AnnotationError: on a round-2 record for an item that was not
        flagged.
    """
    flagged, _ = flag_discrepancies(round1, threshold)
    flagged = set(flagged)
    second = {}
    for record in round2:
        if record.round != 2:
            raise AnnotationError("record %r is not a round-2 rating" % (record.key,))
        if record.item not in flagged:
            raise AnnotationError(
                "round-2 rating by %s for unflagged item %r" % (record.rater_id, record.item)
            )
        second[record.rater_id, record.item] = record
    merged = []
    for record in round1.round_view(1):
        merged.append(second.pop((record.rater_id, record.item), record))
    merged.extend(second.values())
    return AnnotationSet(merged)
