# -*- test-case-name: qfces.test_parser -*-
"""
Structure of a generated comparative summary, and the deterministic part of
format-adherence checking.

A comparative summary is a pipe-delimited table (products as columns,
attributes as rows) followed by a final verdict. :func:`parse` extracts both;
:func:`check_format` reports every structural requirement as a named check
and never raises.
"""

import re

import attr

from ._errors import ValidationError
from .catalog import TOP_K

#: Canonical sentinel for a value the inputs do not provide.
NA = "NA"
_NA_FORMS = frozenset(["na", "n/a"])

REQUIRED_ROWS = ("Base Price", "Final Price", "Average Rating", "Pros", "Cons")
#: Rows that are neither required nor dynamic.
_TITLE_ROWS = frozenset(["title", "product", "product name", "product title"])

DEFAULT_PLACEHOLDER_PATTERNS = (
    r"^(attribute|feature|aspect)\s*#?\s*\d+$",
    r"^(key|dynamic|selected|additional)\s+(attribute|feature)(\s*#?\s*\d+)?$",
    r"^<[^>]*>$",
)

MIN_VERDICT_WORDS = 15

CHECK_CODES = (
    "TABLE_PRESENT",
    "THREE_PRODUCT_COLUMNS",
    "REQUIRED_ROWS_PRESENT",
    "DYNAMIC_ROW_PRESENT",
    "NO_PLACEHOLDER_ATTRIBUTES",
    "MISSING_MARKED_NA",
    "VERDICT_PRESENT",
    "VERDICT_NONTRIVIAL",
)

_SEPARATOR = re.compile(r"^\|?\s*:?-{3,}:?\s*(\|\s*:?-{3,}:?\s*)*\|?$")
_VERDICT_HEADING = re.compile(
    r"^\s*(#+\s*)?[*_]*\s*final\s+verdict\s*[*_]*\s*:?\s*[*_]*\s*", re.I
)
_VERDICT_ANYWHERE = re.compile(r"^\s*(#+\s*)?[*_]*\s*final\s+verdict\b", re.I | re.M)


class TableParseError(ValidationError):
    pass


def normalize_name(name):
    """Case-folded, whitespace-collapsed attribute name."""
    return " ".join(name.split()).casefold()


def canonical_cell(value):
    value = value.strip()
    if value.casefold() in _NA_FORMS:
        return NA
    return value


@attr.s(frozen=True)
class Row(object):
    attribute = attr.ib()
    cells = attr.ib(converter=tuple)


@attr.s(frozen=True)
class ComparativeTable(object):
    """
    :ivar product_columns: Column headers after the attribute column, i.e.
        the product titles.
    :ivar rows: :obj:`Row` in table order.
    """

    product_columns = attr.ib(converter=tuple)
    rows = attr.ib(converter=tuple)

    def row_names(self):
        return [r.attribute for r in self.rows]

    def get(self, attribute):
        wanted = normalize_name(attribute)
        for row in self.rows:
            if normalize_name(row.attribute) == wanted:
                return row
        return None


@attr.s(frozen=True)
class ParsedCES(object):
    """A parsed comparative summary. ``raw`` is not part of equality."""

    table = attr.ib()
    verdict = attr.ib()
    raw = attr.ib(default="", eq=False, repr=False)


def _is_row(line):
    return "|" in line and not _SEPARATOR.match(line.strip())


def _cells(line):
    line = line.strip()
    if line.startswith("|"):
        line = line[1:]
    if line.endswith("|"):
        line = line[:-1]
    return [c.strip() for c in line.split("|")]


def _find_table(lines):
    """Return ``(header_index, end_index)`` of the first table block, or None."""
    for i in range(len(lines) - 2):
        if _is_row(lines[i]) and _SEPARATOR.match(lines[i + 1].strip()) and _is_row(lines[i + 2]):
            end = i + 2
            while end < len(lines) and _is_row(lines[end]):
                end += 1
            return i, end
    return None


def strip_verdict_heading(text):
    return _VERDICT_HEADING.sub("", text.strip(), count=1).strip()


def parse(text, strict=True):
    """
    Parse a comparative summary.

    :param strict: Require exactly three product columns, three cells in
        every row, and a verdict. A lenient parse keeps whatever column count
        the table has and pads short rows with empty cells.
    :raises TableParseError: "no table found", or a strict violation.
    """
    lines = (text or "").splitlines()
    found = _find_table(lines)
    if found is None:
        raise TableParseError("no table found")
    start, end = found
    header = _cells(lines[start])
    columns = header[1:]
    if strict and len(columns) != TOP_K:
        raise TableParseError(
            "table has %d product columns, expected %d" % (len(columns), TOP_K)
        )
    rows = []
    for number, line in enumerate(lines[start + 2:end], start=start + 3):
        cells = _cells(line)
        values = cells[1:]
        if len(values) != len(columns):
            if strict:
                raise TableParseError(
                    "line %d: row %r has %d cells, expected %d"
                    % (number, cells[0], len(values), len(columns))
                )
            values = (values + [""] * len(columns))[: len(columns)]
        rows.append(Row(attribute=cells[0], cells=[canonical_cell(v) for v in values]))
    verdict = strip_verdict_heading("\n".join(lines[end:]))
    if strict and not verdict:
        raise TableParseError("no verdict text after the table")
    return ParsedCES(
        table=ComparativeTable(product_columns=columns, rows=rows), verdict=verdict, raw=text
    )


def serialize(parsed):
    """Canonical text of a :obj:`ParsedCES`; :func:`parse` reads it back unchanged."""
    table = parsed.table
    width = len(table.product_columns) + 1
    lines = [
        "| Attribute | %s |" % (" | ".join(table.product_columns),),
        "|" + "---|" * width,
    ]
    for row in table.rows:
        lines.append("| %s | %s |" % (row.attribute, " | ".join(row.cells)))
    return "\n".join(lines) + "\n\nFinal Verdict: " + parsed.verdict + "\n"


@attr.s(frozen=True)
class Check(object):
    code = attr.ib()
    passed = attr.ib()
    detail = attr.ib(default="")


@attr.s(frozen=True)
class FormatReport(object):
    checks = attr.ib(converter=tuple)

    @property
    def passed_all(self):
        return all(c.passed for c in self.checks)

    def failed(self):
        return [c.code for c in self.checks if not c.passed]

    def get(self, code):
        for check in self.checks:
            if check.code == code:
                return check
        raise KeyError(code)

    def to_dict(self):
        return {
            "passed_all": self.passed_all,
            "checks": [attr.asdict(c) for c in self.checks],
        }


def is_placeholder(name, patterns=DEFAULT_PLACEHOLDER_PATTERNS):
    name = normalize_name(name)
    return any(re.match(p, name, re.I) for p in patterns)


def _verdict_without_table(text):
    match = _VERDICT_ANYWHERE.search(text)
    if match is None:
        return ""
    return strip_verdict_heading(text[match.start():])


def check_format(text, placeholder_patterns=DEFAULT_PLACEHOLDER_PATTERNS):
    """
    Run every structural check on ``text`` and return a :obj:`FormatReport`
    holding all of :data:`CHECK_CODES`, in that order.

    A defect is reported once, at its root: when there is no table the checks
    on the table's contents are skipped (reported as passed with a "skipped"
    detail), and so is the length check when there is no verdict.
    """
    try:
        parsed = parse(text, strict=False)
    except TableParseError:
        parsed = None

    checks = []
    if parsed is None:
        checks.append(Check("TABLE_PRESENT", False, "no pipe-delimited table found"))
        for code in CHECK_CODES[1:6]:
            checks.append(Check(code, True, "skipped: no table"))
        verdict = _verdict_without_table(text or "")
    else:
        table = parsed.table
        checks.append(Check("TABLE_PRESENT", True, "%d rows" % (len(table.rows),)))
        checks.extend(_table_checks(table, placeholder_patterns))
        verdict = parsed.verdict

    if verdict:
        checks.append(Check("VERDICT_PRESENT", True))
        words = len(verdict.split())
        checks.append(
            Check(
                "VERDICT_NONTRIVIAL",
                words >= MIN_VERDICT_WORDS,
                "%d words (minimum %d)" % (words, MIN_VERDICT_WORDS),
            )
        )
    else:
        checks.append(Check("VERDICT_PRESENT", False, "no verdict after the table"))
        checks.append(Check("VERDICT_NONTRIVIAL", True, "skipped: no verdict"))
    return FormatReport(checks=checks)


def _table_checks(table, placeholder_patterns):
    n_columns = len(table.product_columns)
    yield Check(
        "THREE_PRODUCT_COLUMNS",
        n_columns == TOP_K,
        "%d product columns: %s" % (n_columns, ", ".join(table.product_columns)),
    )

    names = set(normalize_name(n) for n in table.row_names())
    missing = [r for r in REQUIRED_ROWS if normalize_name(r) not in names]
    yield Check(
        "REQUIRED_ROWS_PRESENT",
        not missing,
        "missing: %s" % (", ".join(missing),) if missing else "",
    )

    fixed = set(normalize_name(r) for r in REQUIRED_ROWS) | _TITLE_ROWS
    dynamic = [n for n in table.row_names() if normalize_name(n) not in fixed]
    yield Check(
        "DYNAMIC_ROW_PRESENT",
        bool(dynamic),
        ", ".join(dynamic) if dynamic else "no attribute beyond the required rows",
    )

    placeholders = [n for n in dynamic if is_placeholder(n, placeholder_patterns)]
    yield Check(
        "NO_PLACEHOLDER_ATTRIBUTES",
        not placeholders,
        "placeholder names: %s" % (", ".join(placeholders),) if placeholders else "",
    )

    empty = [
        "%s/%s" % (row.attribute, column)
        for row in table.rows
        for column, cell in zip(table.product_columns, row.cells)
        if not cell
    ]
    yield Check(
        "MISSING_MARKED_NA",
        not empty,
        "empty cells: %s" % (", ".join(empty),) if empty else "",
    )
