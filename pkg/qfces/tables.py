"""Plain-text report tables."""

from decimal import ROUND_HALF_EVEN, Decimal


def fmt_decimal(value, places=2):
    """
    Format a number with half-even rounding to ``places`` decimals.

    Rounding happens on the shortest decimal representation of the float, so
    a mean that prints as ``4.49`` renders as ``4.49`` and not as the binary
    neighbour below it.
    """
    if value is None:
        return "-"
    quantum = Decimal(1).scaleb(-places)
    return str(Decimal(repr(float(value))).quantize(quantum, rounding=ROUND_HALF_EVEN))


def render_table(header, rows, footer=None):
    """
    Render rows as aligned columns. The first column is left-aligned, the
    others right-aligned.

    :param header: sequence of column titles.
    :param rows: sequence of sequences of cells (already strings); a row that
        is ``None`` renders as a separator line.
    :param footer: optional line appended under the table.
    """
    cells = [list(map(str, header))] + [list(map(str, r)) for r in rows if r is not None]
    widths = [max(len(row[i]) for row in cells) for i in range(len(header))]

    def line(row):
        parts = [row[0].ljust(widths[0])]
        parts.extend(cell.rjust(width) for cell, width in zip(row[1:], widths[1:]))
        return "  ".join(parts).rstrip()

    rule = "  ".join("-" * w for w in widths)
    out = [line(cells[0]), rule]
    for row in rows:
        out.append(rule if row is None else line(list(map(str, row))))
    if footer:
        out.append("")
        out.append(footer)
    return "\n".join(out) + "\n"
