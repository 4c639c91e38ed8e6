"""Builders and matchers shared by the test modules."""

from decimal import Decimal

import attr

from testtools.matchers import Mismatch

from .catalog import Dataset, Price, ProductRecord, QueryInstance, Review, Specification


@attr.s
class MatchesException(object):
    """Matches an exception of exactly the expected type and arguments."""

    expected = attr.ib()

    def match(self, other):
        expected_type = type(self.expected)
        if type(other) is not expected_type:
            return Mismatch("{} is not a {}".format(other, expected_type))
        if other.args != self.expected.args:
            return Mismatch(
                "{} has different arguments: {}.".format(other.args, self.expected.args)
            )


def make_product(product_id="p1", title="Alpha Phone", **kwargs):
    fields = dict(
        product_id=product_id,
        title=title,
        description="A slim phone with a bright display.",
        key_features=["6.1 inch display", "Two day battery"],
        specifications=[Specification("Weight", "170 g"), Specification("Storage", "128 GB")],
        reviews=[Review("Great battery, lasts all weekend.", 5), Review("Camera is fine.", 4)],
        average_rating=Decimal("4.5"),
        base_price=Price(Decimal("499.00"), "USD"),
        final_price=Price(Decimal("449.00"), "USD"),
    )
    fields.update(kwargs)
    return ProductRecord(**fields)


def make_instance(query_id="q1", query="phone with long battery life", products=None):
    if products is None:
        products = [
            make_product("%s-a" % (query_id,), "Alpha Phone"),
            make_product("%s-b" % (query_id,), "Beta Phone", average_rating=Decimal("4.1")),
            make_product("%s-c" % (query_id,), "Gamma Phone", average_rating=Decimal("4.7")),
        ]
    return QueryInstance(query_id=query_id, query=query, products=products)


def make_dataset(n=2):
    return Dataset(instances=[make_instance("q%d" % (i,)) for i in range(1, n + 1)])


def product_dict(product_id="p1", title="Alpha Phone", **kwargs):
    """A product as it appears in a dataset file."""
    obj = {
        "product_id": product_id,
        "title": title,
        "description": "A slim phone with a bright display.",
        "key_features": ["6.1 inch display", "Two day battery"],
        "specifications": [{"name": "Weight", "value": "170 g"}],
        "reviews": [{"text": "Great battery, lasts all weekend.", "rating": 5}, "Camera is fine."],
        "average_rating": 4.5,
        "base_price": {"amount": "499.00", "currency": "USD"},
        "final_price": {"amount": "449.00", "currency": "USD"},
    }
    obj.update(kwargs)
    return obj


def instance_dict(query_id="q1", query="phone with long battery life", products=None):
    if products is None:
        products = [
            product_dict("%s-a" % (query_id,), "Alpha Phone"),
            product_dict("%s-b" % (query_id,), "Beta Phone"),
            product_dict("%s-c" % (query_id,), "Gamma Phone"),
        ]
    return {"query_id": query_id, "query": query, "products": products}


GOLDEN_TABLE = """\
| Attribute | Alpha Phone | Beta Phone | Gamma Phone |
|---|---|---|---|
| Base Price | 499.00 USD | 399.00 USD | 599.00 USD |
| Final Price | 449.00 USD | 399.00 USD | 549.00 USD |
| Average Rating | 4.5 | 4.1 | 4.7 |
| Battery Life | 2 days | 1 day | NA |
| Pros | Long battery | Low price | Best camera |
| Cons | Heavy | Slow charging | Expensive |"""

GOLDEN_VERDICT = (
    "Final Verdict: Alpha Phone is the best choice for this query because its two day "
    "battery beats both alternatives at a moderate final price."
)

#: A comparative summary that passes every format check.
GOLDEN_CES = GOLDEN_TABLE + "\n\n" + GOLDEN_VERDICT + "\n"


def _drop_last_column(text):
    out = []
    for line in text.splitlines():
        cells = line.split("|")
        # "| a | b | c | d |" splits into ["", a, b, c, d, ""]
        out.append("|".join(cells[:-2] + cells[-1:]))
    return "\n".join(out)


#: ``{check code: golden summary with a single defect that fails that check}``.
MUTATIONS = {
    "TABLE_PRESENT": GOLDEN_VERDICT + "\n",
    "THREE_PRODUCT_COLUMNS": _drop_last_column(GOLDEN_TABLE) + "\n\n" + GOLDEN_VERDICT + "\n",
    "REQUIRED_ROWS_PRESENT": GOLDEN_CES.replace("| Cons | Heavy | Slow charging | Expensive |\n", ""),
    "DYNAMIC_ROW_PRESENT": GOLDEN_CES.replace("| Battery Life | 2 days | 1 day | NA |\n", ""),
    "NO_PLACEHOLDER_ATTRIBUTES": GOLDEN_CES.replace("| Battery Life |", "| Attribute 1 |"),
    "MISSING_MARKED_NA": GOLDEN_CES.replace("| 1 day | NA |", "| 1 day |  |"),
    "VERDICT_PRESENT": GOLDEN_TABLE + "\n",
    "VERDICT_NONTRIVIAL": GOLDEN_TABLE + "\n\nFinal Verdict: Buy the Alpha Phone.\n",
}
