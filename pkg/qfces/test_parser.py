from testtools import TestCase
from testtools.matchers import raises

from ._test_utils import GOLDEN_CES, GOLDEN_TABLE, MUTATIONS
from .parser import (
    CHECK_CODES,
    NA,
    ComparativeTable,
    ParsedCES,
    Row,
    TableParseError,
    check_format,
    is_placeholder,
    parse,
    serialize,
)


class ParseTests(TestCase):
    def test_golden(self):
        parsed = parse(GOLDEN_CES)
        self.assertEqual(parsed.table.product_columns, ("Alpha Phone", "Beta Phone", "Gamma Phone"))
        self.assertEqual(
            parsed.table.row_names(),
            ["Base Price", "Final Price", "Average Rating", "Battery Life", "Pros", "Cons"],
        )
        self.assertEqual(parsed.table.get("battery  LIFE").cells, ("2 days", "1 day", NA))
        self.assertTrue(parsed.verdict.startswith("Alpha Phone is the best choice"))

    def test_na_spellings(self):
        text = GOLDEN_CES.replace("| 1 day | NA |", "| n/a | N/A |")
        self.assertEqual(parse(text).table.get("Battery Life").cells, ("2 days", NA, NA))

    def test_text_around_table(self):
        """Prose before the table is ignored; a verdict heading is stripped."""
        text = "Here is the comparison.\n\n" + GOLDEN_TABLE + "\n\n## **Final Verdict:** Pick Alpha.\n"
        parsed = parse(text)
        self.assertEqual(parsed.verdict, "Pick Alpha.")
        self.assertEqual(len(parsed.table.rows), 6)

    def test_no_table(self):
        self.assertThat(lambda: parse("Just prose."), raises(TableParseError("no table found")))

    def test_strict_column_count(self):
        self.assertRaises(TableParseError, parse, MUTATIONS["THREE_PRODUCT_COLUMNS"])
        lenient = parse(MUTATIONS["THREE_PRODUCT_COLUMNS"], strict=False)
        self.assertEqual(len(lenient.table.product_columns), 2)

    def test_ragged_row(self):
        text = GOLDEN_CES.replace(
            "| Pros | Long battery | Low price | Best camera |", "| Pros | Long battery |"
        )
        self.assertRaises(TableParseError, parse, text)
        row = parse(text, strict=False).table.get("Pros")
        self.assertEqual(row.cells, ("Long battery", "", ""))

    def test_strict_needs_verdict(self):
        self.assertRaises(TableParseError, parse, GOLDEN_TABLE)
        self.assertEqual(parse(GOLDEN_TABLE, strict=False).verdict, "")


def test_serialize_round_trip():
    """parse(serialize(x)) == x for a parsed summary."""
    parsed = parse(GOLDEN_CES)
    assert parse(serialize(parsed)) == parsed


def test_serialize_constructed():
    parsed = ParsedCES(
        table=ComparativeTable(
            product_columns=["A", "B", "C"],
            rows=[Row("Base Price", ["1 USD", "2 USD", NA]), Row("Weight", ["1 kg", "2 kg", "3 kg"])],
        ),
        verdict="Choose B for its balance of price and weight.",
    )
    assert serialize(parsed) == (
        "| Attribute | A | B | C |\n"
        "|---|---|---|---|\n"
        "| Base Price | 1 USD | 2 USD | NA |\n"
        "| Weight | 1 kg | 2 kg | 3 kg |\n"
        "\n"
        "Final Verdict: Choose B for its balance of price and weight.\n"
    )
    assert parse(serialize(parsed)) == parsed


def test_placeholders():
    for name in ["Attribute 1", "feature 2", "Key Attribute", "Dynamic Feature 3", "<attribute>"]:
        assert is_placeholder(name), name
    for name in ["Battery Life", "Key Features Count", "Weight"]:
        assert not is_placeholder(name), name


class CheckFormatTests(TestCase):
    def test_golden_passes(self):
        report = check_format(GOLDEN_CES)
        self.assertTrue(report.passed_all)
        self.assertEqual([c.code for c in report.checks], list(CHECK_CODES))

    def test_each_mutation_fails_one_check(self):
        """A single defect fails exactly the check that names it."""
        self.assertEqual(sorted(MUTATIONS), sorted(CHECK_CODES))
        for code, text in MUTATIONS.items():
            self.assertEqual(check_format(text).failed(), [code], code)

    def test_never_raises(self):
        for text in ["", None, "|", "| a |\n|---|\n", "Final Verdict:"]:
            report = check_format(text)
            self.assertEqual(len(report.checks), len(CHECK_CODES))

    def test_to_dict(self):
        report = check_format(MUTATIONS["MISSING_MARKED_NA"]).to_dict()
        self.assertFalse(report["passed_all"])
        check = [c for c in report["checks"] if c["code"] == "MISSING_MARKED_NA"][0]
        self.assertEqual(check["detail"], "empty cells: Battery Life/Gamma Phone")
