import itertools

from testtools import TestCase

from ._errors import StatisticsError
from .agreement import (
    agreement_report,
    alpha_from_matrix,
    krippendorff_alpha,
    rater_tables,
    rating_distribution,
    reliability_matrix,
    render_agreement,
    render_rater_tables,
    render_rating_distribution,
)
from .annotation import AnnotationSet, RatingRecord

NAN = float("nan")

#: Three raters by four items, one item unrated by r3.
CANONICAL = [
    [1, 2, 3, 3],
    [2, 2, 3, 4],
    [1, 3, 3, NAN],
]


def pairwise_alpha(matrix, difference):
    """Alpha by enumerating every ordered pair of pairable values."""
    units = [[row[j] for row in matrix if row[j] == row[j]] for j in range(len(matrix[0]))]
    units = [u for u in units if len(u) >= 2]
    pooled = [v for u in units for v in u]
    counts = dict((v, pooled.count(v)) for v in set(pooled))

    def delta(a, b):
        if difference == "nominal":
            return float(a != b)
        if difference == "interval":
            return (a - b) ** 2
        low, high = min(a, b), max(a, b)
        between = sum(c for v, c in counts.items() if low <= v <= high)
        return (between - (counts[a] + counts[b]) / 2.0) ** 2

    n = len(pooled)
    observed = sum(
        delta(u[i], u[j]) / (len(u) - 1.0)
        for u in units
        for i, j in itertools.permutations(range(len(u)), 2)
    ) / n
    expected = sum(
        delta(pooled[i], pooled[j]) for i, j in itertools.permutations(range(n), 2)
    ) / (n * (n - 1.0))
    return 1.0 - observed / expected


def annotation_set(table, dimension="clarity", round=1):
    """``{rater: {query_id: [scores of s1, s2, ...]}}`` as an AnnotationSet."""
    return AnnotationSet(
        RatingRecord(rater, q, "s%d" % (i,), dimension, round, score)
        for rater, by_query in sorted(table.items())
        for q, scores in sorted(by_query.items())
        for i, score in enumerate(scores, start=1)
    )


#: r1 and r2 rank every query's summaries alike; r3 ranks them the other way.
RATINGS = {
    "r1": {"q1": [1, 3, 5], "q2": [2, 3, 4]},
    "r2": {"q1": [2, 3, 4], "q2": [1, 3, 5]},
    "r3": {"q1": [5, 3, 1], "q2": [4, 3, 2]},
}


class AlphaTests(TestCase):
    def test_perfect_agreement(self):
        self.assertAlmostEqual(alpha_from_matrix([[1, 2, 3], [1, 2, 3]]), 1.0)

    def test_two_category_example(self):
        """
        Two raters agree on two items and split on a third: observed
        disagreement 1/3 against expected 3/5.
        """
        for difference in ("nominal", "interval", "ordinal"):
            self.assertAlmostEqual(
                alpha_from_matrix([[1, 2, 1], [1, 2, 2]], difference), 4.0 / 9.0
            )

    def test_missing_ratings_ignored(self):
        self.assertAlmostEqual(
            alpha_from_matrix([[1, 2, 1, 5], [1, 2, 2, NAN]], "nominal"), 4.0 / 9.0
        )

    def test_matches_pairwise_enumeration(self):
        for difference in ("nominal", "interval", "ordinal"):
            self.assertAlmostEqual(
                alpha_from_matrix(CANONICAL, difference), pairwise_alpha(CANONICAL, difference), places=9
            )

    def test_rater_order_irrelevant(self):
        for difference in ("nominal", "interval", "ordinal"):
            expected = alpha_from_matrix(CANONICAL, difference)
            for order in itertools.permutations(range(len(CANONICAL))):
                relabelled = [CANONICAL[i] for i in order]
                self.assertAlmostEqual(alpha_from_matrix(relabelled, difference), expected, places=12)

    def test_undefined(self):
        self.assertRaises(StatisticsError, alpha_from_matrix, [[1, 2, 3]])
        self.assertRaises(StatisticsError, alpha_from_matrix, [[1, NAN], [NAN, 2]])
        self.assertRaises(StatisticsError, alpha_from_matrix, [[3, 3], [3, 3]])
        self.assertRaises(StatisticsError, alpha_from_matrix, [[1, 2], [1, 2]], "ratio")

    def test_reliability_matrix(self):
        ratings = annotation_set({"r1": {"q1": [1, 2]}, "r2": {"q1": [3]}})
        raters, items, matrix = reliability_matrix(ratings, "clarity")
        self.assertEqual(raters, ["r1", "r2"])
        self.assertEqual(items, [("q1", "s1"), ("q1", "s2")])
        self.assertEqual(matrix[0].tolist(), [1.0, 2.0])
        self.assertEqual(matrix[1, 0], 3.0)
        self.assertNotEqual(matrix[1, 1], matrix[1, 1])


class AgreementReportTests(TestCase):
    def test_rounds_without_round2_agree(self):
        """With no round-2 ratings the merged set equals round 1."""
        annotations = annotation_set(RATINGS)
        report = agreement_report(annotations)
        self.assertEqual(report.alphas["clarity", 1], report.alphas["clarity", 2])
        self.assertEqual(report.averages[1], report.alphas["clarity", 1])
        self.assertEqual(krippendorff_alpha(annotations, "clarity"), report.alphas["clarity", 1])
        self.assertTrue(-1.0 <= report.averages[1] <= 1.0)

    def test_round2_resolves_disagreement(self):
        annotations = annotation_set(RATINGS)
        # r3 re-rates the flagged items (every s1 and s3) in line with r1.
        flagged = [
            RatingRecord("r3", q, s, "clarity", 2, score)
            for q, s, score in [("q1", "s1", 1), ("q1", "s3", 5), ("q2", "s1", 2), ("q2", "s3", 4)]
        ]
        merged = AnnotationSet(list(annotations) + flagged)
        report = agreement_report(merged)
        self.assertGreater(report.alphas["clarity", 2], report.alphas["clarity", 1])

    def test_render(self):
        report = agreement_report(annotation_set(RATINGS))
        text = render_agreement(report, codes={"clarity": "CLA"})
        self.assertIn("Round-I alpha", text)
        self.assertIn("Round-II alpha", text)
        self.assertIn("CLA", text)
        self.assertIn("Average", text)
        self.assertEqual(report.to_dict()["rows"][0]["dimension"], "clarity")


class RaterTablesTests(TestCase):
    def test_labels_and_values(self):
        tables = rater_tables(annotation_set(RATINGS))
        pairs = tables.pairs["clarity"]
        self.assertEqual([r.label for r in pairs], ["r1-r2", "r1-r3", "r2-r3", "Average"])
        self.assertEqual([round(r.rho, 6) for r in pairs], [1.0, -1.0, -1.0, round(-1.0 / 3, 6)])
        self.assertEqual([round(r.tau, 6) for r in pairs], [1.0, -1.0, -1.0, round(-1.0 / 3, 6)])
        versus = tables.versus_average["clarity"]
        self.assertEqual([r.label for r in versus], ["r1-Avg", "r2-Avg", "r3-Avg", "Average"])
        self.assertEqual([round(r.rho, 6) for r in versus], [1.0, 1.0, -1.0, round(1.0 / 3, 6)])

    def test_too_few_raters(self):
        self.assertRaises(
            StatisticsError, rater_tables, annotation_set({"r1": RATINGS["r1"]})
        )

    def test_too_few_corated_items(self):
        ratings = annotation_set({"r1": {"q1": [1, 2]}, "r2": {"q2": [1, 2]}})
        self.assertRaises(StatisticsError, rater_tables, ratings)

    def test_render(self):
        text = render_rater_tables(rater_tables(annotation_set(RATINGS)))
        self.assertIn("clarity rho", text)
        self.assertIn("r2-Avg", text)
        self.assertIn("-1.00", text)


def test_rating_distribution():
    distribution = rating_distribution(annotation_set(RATINGS))
    assert distribution == {"clarity": [3, 3, 6, 3, 3]}
    text = render_rating_distribution(distribution)
    assert "18" in text
