# -*- test-case-name: qfces.test_catalog -*-
"""
Query-to-product records: the data model, line-delimited ingestion with
validation, a canonical writer, and dataset statistics.

A dataset file holds one :obj:`QueryInstance` per line, as a JSON object whose
keys are exactly the field names of :obj:`QueryInstance` and
:obj:`ProductRecord`.
"""

import logging
import re
from decimal import Decimal, InvalidOperation
from fractions import Fraction

import attr

from effect import Effect

from ._errors import ValidationError
from .io import ReadText, dumps_json, iter_json_lines
from .tables import fmt_decimal, render_table

log = logging.getLogger(__name__)

#: Number of ranked products bound to every query.
TOP_K = 3

PRODUCT_KEYS = frozenset(
    [
        "product_id",
        "title",
        "description",
        "key_features",
        "specifications",
        "reviews",
        "average_rating",
        "base_price",
        "final_price",
    ]
)
INSTANCE_KEYS = frozenset(["query_id", "query", "products"])
_CURRENCY = re.compile(r"[A-Z]{3}\Z")


class CatalogError(ValidationError):
    """A dataset file is missing, malformed, or violates an invariant."""


@attr.s(frozen=True)
class Price(object):
    """A money amount. ``amount`` is a :obj:`decimal.Decimal`, never a float."""

    amount = attr.ib()
    currency = attr.ib()

    def __str__(self):
        return "%s %s" % (self.amount, self.currency)


@attr.s(frozen=True)
class Specification(object):
    name = attr.ib()
    value = attr.ib()


@attr.s(frozen=True)
class Review(object):
    text = attr.ib()
    rating = attr.ib(default=None)


@attr.s(frozen=True)
class ProductRecord(object):
    """One recommended product with its multi-source metadata."""

    product_id = attr.ib()
    title = attr.ib()
    description = attr.ib()
    key_features = attr.ib(converter=tuple)
    specifications = attr.ib(converter=tuple)
    reviews = attr.ib(converter=tuple)
    average_rating = attr.ib()
    base_price = attr.ib()
    final_price = attr.ib()


@attr.s(frozen=True)
class QueryInstance(object):
    """A user query bound to its top-3 products, in recommendation order."""

    query_id = attr.ib()
    query = attr.ib()
    products = attr.ib(converter=tuple)


@attr.s(frozen=True)
class Dropped(object):
    """An instance rejected in lenient mode."""

    line = attr.ib()
    query_id = attr.ib()
    reason = attr.ib()


@attr.s(frozen=True)
class Dataset(object):
    """
    Validated instances, in file order.

    :ivar dropped: :obj:`Dropped` entries for instances rejected by a lenient
        load.
    """

    instances = attr.ib(converter=tuple)
    dropped = attr.ib(default=(), converter=tuple)

    @property
    def n_products(self):
        return sum(len(i.products) for i in self.instances)

    def get(self, query_id):
        for instance in self.instances:
            if instance.query_id == query_id:
                return instance
        raise KeyError(query_id)

    def unique_products(self):
        """Products deduplicated by id, in first-seen order."""
        seen = {}
        for instance in self.instances:
            for product in instance.products:
                seen.setdefault(product.product_id, product)
        return list(seen.values())


@attr.s(frozen=True)
class DatasetStats(object):
    n_unique_queries = attr.ib()
    n_total_products = attr.ib()
    avg_reviews_per_product = attr.ib()
    avg_spec_words = attr.ib()
    avg_review_words = attr.ib()
    avg_description_words = attr.ib()
    avg_key_feature_words = attr.ib()

    def to_dict(self):
        return attr.asdict(self)


STATS_ROWS = [
    ("# of unique queries", "n_unique_queries"),
    ("Total # of products", "n_total_products"),
    ("Average # of reviews per product", "avg_reviews_per_product"),
    ("Average length of specifications per product (words)", "avg_spec_words"),
    ("Average length of reviews per product (words)", "avg_review_words"),
    ("Average length of description per product (words)", "avg_description_words"),
    ("Average length of key features per product (words)", "avg_key_feature_words"),
]


def word_count(text):
    """Number of maximal non-whitespace runs. Punctuation stays attached."""
    return len(text.split())


def spec_text(product):
    """Specifications flattened to ``"name value name value ..."``."""
    return " ".join("%s %s" % (s.name, s.value) for s in product.specifications)


def _decimal(value, what):
    if isinstance(value, bool):
        raise CatalogError("%s: expected a number, got %r" % (what, value))
    try:
        return Decimal(str(value))
    except (InvalidOperation, ValueError):
        raise CatalogError("%s: expected a number, got %r" % (what, value))


def _text(obj, key, where):
    value = obj[key]
    if not isinstance(value, str):
        raise CatalogError("%s: %s must be a string" % (where, key))
    return value


def _price(obj, where):
    if not isinstance(obj, dict) or set(obj) != {"amount", "currency"}:
        raise CatalogError("%s: price must have exactly amount and currency" % (where,))
    return Price(amount=_decimal(obj["amount"], where + ".amount"), currency=obj["currency"])


def _specification(item, where):
    if isinstance(item, dict) and set(item) == {"name", "value"}:
        return Specification(name=str(item["name"]), value=str(item["value"]))
    if isinstance(item, (list, tuple)) and len(item) == 2:
        return Specification(name=str(item[0]), value=str(item[1]))
    raise CatalogError("%s: specification must be a name/value pair" % (where,))


def _review(item, where):
    if isinstance(item, str):
        return Review(text=item)
    if isinstance(item, dict) and "text" in item and set(item) <= {"text", "rating"}:
        return Review(text=str(item["text"]), rating=item.get("rating"))
    raise CatalogError("%s: review must be text or {text, rating}" % (where,))


def product_from_dict(obj, where="product"):
    """Build a :obj:`ProductRecord` from a decoded JSON object."""
    if not isinstance(obj, dict):
        raise CatalogError("%s: product must be an object" % (where,))
    keys = set(obj)
    if keys != PRODUCT_KEYS:
        raise CatalogError(
            "%s: unexpected keys (missing %s, unknown %s)"
            % (where, sorted(PRODUCT_KEYS - keys), sorted(keys - PRODUCT_KEYS))
        )
    for key in ("key_features", "specifications", "reviews"):
        if not isinstance(obj[key], list):
            raise CatalogError("%s: %s must be a list" % (where, key))
    return ProductRecord(
        product_id=str(obj["product_id"]),
        title=_text(obj, "title", where),
        description=_text(obj, "description", where),
        key_features=[str(f) for f in obj["key_features"]],
        specifications=[_specification(s, where) for s in obj["specifications"]],
        reviews=[_review(r, where) for r in obj["reviews"]],
        average_rating=_decimal(obj["average_rating"], where + ".average_rating"),
        base_price=_price(obj["base_price"], where + ".base_price"),
        final_price=_price(obj["final_price"], where + ".final_price"),
    )


def instance_from_dict(obj, where="record"):
    """Build a :obj:`QueryInstance` from a decoded JSON object."""
    if not isinstance(obj, dict):
        raise CatalogError("%s: record must be an object" % (where,))
    keys = set(obj)
    if keys != INSTANCE_KEYS:
        raise CatalogError(
            "%s: unexpected keys (missing %s, unknown %s)"
            % (where, sorted(INSTANCE_KEYS - keys), sorted(keys - INSTANCE_KEYS))
        )
    if not isinstance(obj["products"], list):
        raise CatalogError("%s: products must be a list" % (where,))
    return QueryInstance(
        query_id=str(obj["query_id"]),
        query=_text(obj, "query", where),
        products=[
            product_from_dict(p, "%s.products[%d]" % (where, i))
            for i, p in enumerate(obj["products"])
        ],
    )


def product_problems(product):
    """Return the invariant violations of one product, as messages."""
    problems = []
    if not product.title.strip():
        problems.append("product %s: empty title" % (product.product_id,))
    if not Decimal(1) <= product.average_rating <= Decimal(5):
        problems.append(
            "product %s: average_rating %s outside [1, 5]"
            % (product.product_id, product.average_rating)
        )
    for review in product.reviews:
        rating = review.rating
        if rating is None:
            continue
        if isinstance(rating, bool) or not isinstance(rating, int) or not 1 <= rating <= 5:
            problems.append(
                "product %s: review rating %r not in 1..5" % (product.product_id, rating)
            )
    for label, price in (("base_price", product.base_price), ("final_price", product.final_price)):
        if price.amount < 0:
            problems.append("product %s: negative %s" % (product.product_id, label))
        if not isinstance(price.currency, str) or not _CURRENCY.match(price.currency):
            problems.append(
                "product %s: %s currency %r is not an ISO-4217 code"
                % (product.product_id, label, price.currency)
            )
    if product.base_price.currency != product.final_price.currency:
        problems.append(
            "product %s: base_price and final_price currencies differ (%s, %s)"
            % (product.product_id, product.base_price.currency, product.final_price.currency)
        )
    return problems


def instance_problems(instance):
    """Return the invariant violations of one instance, as messages."""
    problems = []
    if not instance.query.strip():
        problems.append("empty query")
    if len(instance.products) != TOP_K:
        problems.append("product count != %d (got %d)" % (TOP_K, len(instance.products)))
    for product in instance.products:
        problems.extend(product_problems(product))
    return problems


def parse_dataset(text, strict=True, source="<string>"):
    """
    Parse and validate a dataset document.

    In strict mode the first invariant violation raises :obj:`CatalogError`.
    In lenient mode violating instances (and duplicate query ids after the
    first) are dropped and recorded in :attr:`Dataset.dropped`. Malformed
    records raise in both modes.
    """
    instances = []
    dropped = []
    seen = set()
    try:
        records = list(iter_json_lines(text, source))
    except ValueError as e:
        raise CatalogError(str(e))
    for number, obj in records:
        where = "%s:%d" % (source, number)
        instance = instance_from_dict(obj, where)
        problems = instance_problems(instance)
        if instance.query_id in seen:
            problems.append("duplicate query_id %s" % (instance.query_id,))
        if problems:
            reason = "; ".join(problems)
            if strict:
                raise CatalogError("%s: query %s: %s" % (where, instance.query_id, reason))
            log.warning("dropping %s (query %s): %s", where, instance.query_id, reason)
            dropped.append(Dropped(line=number, query_id=instance.query_id, reason=reason))
            continue
        seen.add(instance.query_id)
        instances.append(instance)
    return Dataset(instances=instances, dropped=dropped)


def load_dataset(path, strict=True):
    """
    Return an Effect that reads ``path`` and results in a validated
    :obj:`Dataset`.
    """

    def missing(error):
        if isinstance(error, FileNotFoundError):
            raise CatalogError("dataset not found: %s" % (path,))
        raise error

    return Effect(ReadText(path=path)).on(
        success=lambda text: parse_dataset(text, strict=strict, source=path),
        error=missing,
    )


def product_to_dict(product):
    return {
        "product_id": product.product_id,
        "title": product.title,
        "description": product.description,
        "key_features": list(product.key_features),
        "specifications": [
            {"name": s.name, "value": s.value} for s in product.specifications
        ],
        "reviews": [{"text": r.text, "rating": r.rating} for r in product.reviews],
        "average_rating": str(product.average_rating),
        "base_price": _price_to_dict(product.base_price),
        "final_price": _price_to_dict(product.final_price),
    }


def _price_to_dict(price):
    return {"amount": str(price.amount), "currency": price.currency}


def instance_to_dict(instance):
    return {
        "query_id": instance.query_id,
        "query": instance.query,
        "products": [product_to_dict(p) for p in instance.products],
    }


def dump_dataset(dataset):
    """Serialize a dataset in the canonical line-delimited form."""
    return "".join(dumps_json(instance_to_dict(i)) + "\n" for i in dataset.instances)


def _mean(values):
    """Exact mean of ints or fractions, rounded once to a float."""
    if not values:
        return 0.0
    return float(sum(Fraction(v) for v in values) / len(values))


def compute_stats(dataset):
    """
    Compute dataset statistics. Every average is an arithmetic mean over all
    products; a product without reviews has a review length of 0.

    :raises CatalogError: on an empty dataset.
    """
    products = [p for i in dataset.instances for p in i.products]
    if not products:
        raise CatalogError("cannot compute statistics of an empty dataset")
    review_lengths = []
    for product in products:
        words = [word_count(r.text) for r in product.reviews]
        review_lengths.append(Fraction(sum(words), len(words)) if words else 0)
    return DatasetStats(
        n_unique_queries=len({i.query_id for i in dataset.instances}),
        n_total_products=len(products),
        avg_reviews_per_product=_mean([len(p.reviews) for p in products]),
        avg_spec_words=_mean([word_count(spec_text(p)) for p in products]),
        avg_review_words=_mean(review_lengths),
        avg_description_words=_mean([word_count(p.description) for p in products]),
        avg_key_feature_words=_mean(
            [sum(word_count(f) for f in p.key_features) for p in products]
        ),
    )


def render_stats(stats, footer=None):
    """Render statistics as a two-column text table."""
    rows = []
    for label, field in STATS_ROWS:
        value = getattr(stats, field)
        rows.append((label, value if isinstance(value, int) else fmt_decimal(value)))
    return render_table(["Statistic", "Value"], rows, footer=footer)
