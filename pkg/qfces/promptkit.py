# -*- test-case-name: qfces.test_promptkit -*-
"""
Prompt rendering for generation and judging.

Templates are text files, one per task, under ``qfces/templates``: the system
message, a line holding only ``---``, then the body. Placeholders use
``{{name}}``. A directory of overrides may replace any subset of them.

Rendering is deterministic, so equal inputs give byte-identical prompts (and
therefore equal request fingerprints).
"""

import os

import attr
import jinja2
import jinja2.meta

from ._errors import ValidationError
from .catalog import TOP_K
from .gateway import CompletionRequest, request_fingerprint

DEFAULT_TEMPLATE_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "templates")

#: Generation modes: from M-OS texts or directly from raw product data.
MOS = "mos"
DIA = "dia"
MODES = (MOS, DIA)

SCORE_INSTRUCTION = (
    'Explain your assessment first, then finish with a final line exactly in the form '
    '"Score: <integer 1-5>".'
)

NO_REVIEWS = "(no reviews)"


class TemplateError(ValidationError):
    """A template is missing, malformed, or rendered without a placeholder."""


class PromptError(ValidationError):
    """Prompt inputs do not satisfy the task's preconditions."""


class UnknownDimensionError(ValidationError):
    pass


@attr.s(frozen=True)
class Dimension(object):
    """
    A judge dimension.

    :param code: Short column header used in reports.
    :param target: ``"ces"`` for comparative summaries, ``"mos"`` for
        single-product opinion summaries.
    :param context: Which context the judge sees besides the summary: a
        subset of ``{"query", "sources"}``.
    """

    id = attr.ib()
    name = attr.ib()
    code = attr.ib()
    target = attr.ib()
    criteria_text = attr.ib()
    context = attr.ib(converter=frozenset)
    scale_min = attr.ib(default=1)
    scale_max = attr.ib(default=5)


CES_DIMENSIONS = (
    Dimension(
        id="clarity",
        name="clarity",
        code="CL",
        target="ces",
        context=(),
        criteria_text=(
            "Clarity measures the degree to which the information in the Comparative Summary is "
            "clearly presented, avoiding ambiguity and ensuring that comparisons are easy to "
            "understand. The summary should be clear, concise, and easy to comprehend, using simple "
            "language and avoiding technical jargon whenever possible. It should be well-structured "
            "and well-organized, presenting comparison of the three products in a straightforward "
            "manner. The metric evaluates the readability of the entire summary, ensuring it is free "
            "from grammatical errors and has a logical flow between different sections and points. "
            "Additionally, the clarity of the tabular data is assessed to ensure it clearly conveys "
            "the comparisons between three products."
        ),
    ),
    Dimension(
        id="faithfulness",
        name="faithfulness",
        code="FA",
        target="ces",
        context=("sources",),
        criteria_text=(
            "Faithfulness measures the degree to which the information presented in the "
            "Comparative Summary is accurate, verifiable, and directly supported by the input data. "
            "The Comparative Summary must faithfully represent the content provided, ensuring that "
            "all details, including the query and attributes of each product are correct and "
            "inferred directly from the input. Comparative Summary will be penalized for any "
            "information that cannot be verified from the input data or if they make broad "
            "generalizations that are not supported by the input data."
        ),
    ),
    Dimension(
        id="informativeness",
        name="informativeness",
        code="IF",
        target="ces",
        context=("sources",),
        criteria_text=(
            "Informativeness evaluates the extent to which the Comparative Summary comprehensively "
            "covers all relevant aspects and attributes of the products being compared. This metric "
            "assesses the presence and completeness of essential attributes and features in the "
            "comparison, including the product title, base price, final price, key attributes "
            "dynamically selected from the product opinion summaries, pros, cons, and average "
            "rating. The summary should ensure that all majorly discussed aspects are covered and "
            'any missing values are properly marked as "N/A". Summaries should be penalized for '
            "missing significant aspects and rewarded for thorough coverage of the aspects from the "
            "provided information."
        ),
    ),
    Dimension(
        id="format_adherence",
        name="format adherence",
        code="FoA",
        target="ces",
        context=(),
        criteria_text=(
            "This metric evaluates the extent to which the Comparative Summary follows the "
            "prescribed format. The Comparative Summary should consist of two main parts: (1) A "
            "tabular comparison of the three products. (2) A final verdict summary.\n"
            "The tabular comparison should list products in columns and attributes in rows, "
            "including dynamically selected attributes based on the user query and essential "
            "attributes such as Base Price, Final Price, Average Rating, Pros, and Cons. It "
            "verifies that dynamically selected attributes are appropriately named and not using "
            "placeholders. The final verdict summary should provide a concise overview of the "
            "comparison among three products. The metric assesses the presence, completeness, and "
            "proper formatting of both these components (the tabular comparison along with the "
            "final verdict), as well as the overall organization and consistency of the entire "
            "summary."
        ),
    ),
    Dimension(
        id="query_relevance",
        name="query relevance",
        code="QR",
        target="ces",
        context=("query",),
        criteria_text=(
            "This metric evaluates how well the Comparative Summary addresses the user's query. It "
            "assesses two main components: (1) The tabular comparison: Ensures that only the most "
            "relevant information and dynamic attributes are present, directly addressing the user "
            "query without including irrelevant details. (2) The final verdict summary: Verifies "
            "that the user query is explicitly addressed, providing clear suggestions that enable "
            "the user to make an informed buying decision.\n"
            "The metric measures the overall relevance and usefulness of the Comparative Summary in "
            "helping the user make an informed decision based on their specific query."
        ),
    ),
)

MOS_DIMENSIONS = (
    Dimension(
        id="fluency",
        name="fluency",
        code="FL",
        target="mos",
        context=(),
        criteria_text=(
            "Fluency is the quality of the individual sentences of the opinion summary: "
            "grammatical, well formed, free of repetition and easy to read."
        ),
    ),
    Dimension(
        id="coherence",
        name="coherence",
        code="CO",
        target="mos",
        context=(),
        criteria_text=(
            "Coherence is the collective quality of the opinion summary: its sentences build "
            "a well-organised whole that moves logically from one point to the next."
        ),
    ),
    Dimension(
        id="aspect_coverage",
        name="aspect coverage",
        code="AC",
        target="mos",
        context=("sources",),
        criteria_text=(
            "Aspect coverage is how completely the opinion summary covers the product aspects "
            "that the metadata and the reviews discuss, giving weight to the aspects mentioned "
            "most often."
        ),
    ),
    Dimension(
        id="m_faithfulness",
        name="faithfulness",
        code="FF",
        target="mos",
        context=("sources",),
        criteria_text=(
            "Faithfulness is whether every statement in the opinion summary is supported by "
            "the product metadata or the reviews, with no invented facts or opinions."
        ),
    ),
    Dimension(
        id="relevance",
        name="relevance",
        code="RL",
        target="mos",
        context=("sources",),
        criteria_text=(
            "Relevance is whether the opinion summary keeps to the important information about "
            "the product and leaves out redundant or unimportant detail."
        ),
    ),
    Dimension(
        id="sentiment_consistency",
        name="sentiment consistency",
        code="SC",
        target="mos",
        context=("sources",),
        criteria_text=(
            "Sentiment consistency is whether the opinions in the summary reflect the balance "
            "of positive and negative sentiment expressed in the reviews and the average rating."
        ),
    ),
    Dimension(
        id="specificity",
        name="specificity",
        code="SP",
        target="mos",
        context=("sources",),
        criteria_text=(
            "Specificity is whether the opinion summary gives concrete, product-specific "
            "details (named features, measurements, recurring complaints) rather than "
            "generic statements that would fit any product."
        ),
    ),
)

DIMENSIONS = dict((d.id, d) for d in CES_DIMENSIONS + MOS_DIMENSIONS)
CES_DIMENSION_IDS = tuple(d.id for d in CES_DIMENSIONS)
MOS_DIMENSION_IDS = tuple(d.id for d in MOS_DIMENSIONS)
#: Report order: the five comparative dimensions, then the seven M-OS ones.
CANONICAL_ORDER = CES_DIMENSION_IDS + MOS_DIMENSION_IDS


def get_dimension(dimension):
    if isinstance(dimension, Dimension):
        return dimension
    try:
        return DIMENSIONS[dimension]
    except KeyError:
        raise UnknownDimensionError(
            "unknown dimension %r (known: %s)" % (dimension, ", ".join(CANONICAL_ORDER))
        )


def template_ids():
    """Every template id the pipeline renders."""
    return ["mos_gen", "ces_gen_mos", "ces_gen_dia"] + ["eval_" + d for d in CANONICAL_ORDER]


@attr.s(frozen=True)
class PromptTemplate(object):
    template_id = attr.ib()
    system_message = attr.ib()
    body = attr.ib()
    required_placeholders = attr.ib(converter=frozenset)

    def render(self, values):
        missing = self.required_placeholders - set(values)
        if missing:
            raise TemplateError(
                "template %s: unbound placeholders %s" % (self.template_id, sorted(missing))
            )
        try:
            return self.system_message.render(values).strip(), self.body.render(values).strip()
        except jinja2.UndefinedError as e:
            raise TemplateError("template %s: %s" % (self.template_id, e))


@attr.s(frozen=True)
class RenderedPrompt(object):
    """A rendered prompt, not yet bound to a backend or decoding parameters."""

    task = attr.ib()
    system_message = attr.ib()
    user_message = attr.ib()

    @property
    def fingerprint(self):
        return request_fingerprint(self.system_message, self.user_message)

    @property
    def text(self):
        return self.system_message + "\n\n" + self.user_message

    def request(self, backend_id, params):
        return CompletionRequest(
            system_message=self.system_message,
            user_message=self.user_message,
            params=params,
            backend_id=backend_id,
            task=self.task,
        )


class TemplateSet(object):
    """
    Loads templates by id from ``override_dir`` (if given) falling back to
    the shipped defaults.
    """

    def __init__(self, override_dir=None):
        dirs = [DEFAULT_TEMPLATE_DIR]
        if override_dir:
            dirs.insert(0, override_dir)
        self.override_dir = override_dir
        self._env = jinja2.Environment(
            loader=jinja2.FileSystemLoader(dirs),
            undefined=jinja2.StrictUndefined,
            autoescape=False,
            keep_trailing_newline=False,
        )
        self._cache = {}

    def get(self, template_id):
        if template_id not in self._cache:
            self._cache[template_id] = self._load(template_id)
        return self._cache[template_id]

    def _load(self, template_id):
        name = template_id + ".txt"
        try:
            source, _, _ = self._env.loader.get_source(self._env, name)
        except jinja2.TemplateNotFound:
            raise TemplateError("template %s not found" % (name,))
        system, sep, body = source.partition("\n---\n")
        if not sep:
            raise TemplateError("template %s: no '---' line between system message and body" % (name,))
        try:
            placeholders = jinja2.meta.find_undeclared_variables(self._env.parse(source))
            return PromptTemplate(
                template_id=template_id,
                system_message=self._env.from_string(system),
                body=self._env.from_string(body),
                required_placeholders=placeholders,
            )
        except jinja2.TemplateSyntaxError as e:
            raise TemplateError("template %s: %s" % (name, e))

    def render(self, template_id, values):
        system, body = self.get(template_id).render(values)
        return RenderedPrompt(task=template_id, system_message=system, user_message=body)


_default_templates = None


def default_templates():
    global _default_templates
    if _default_templates is None:
        _default_templates = TemplateSet()
    return _default_templates


def _bullets(items, empty):
    items = list(items)
    if not items:
        return empty
    return "\n".join("- %s" % (item,) for item in items)


def format_reviews(reviews):
    lines = []
    for review in reviews:
        if review.rating is None:
            lines.append(review.text)
        else:
            lines.append("(%d/5) %s" % (review.rating, review.text))
    return _bullets(lines, NO_REVIEWS)


def format_specifications(specifications):
    return _bullets(("%s: %s" % (s.name, s.value) for s in specifications), "(none)")


def price_lines(product):
    return "\n".join(
        [
            "- Base price: %s" % (product.base_price,),
            "- Final price: %s" % (product.final_price,),
            "- Average rating: %s" % (product.average_rating,),
        ]
    )


def raw_product_block(product, number=None):
    """Every raw field of a product, as shown to the direct-input generator and the judge."""
    heading = "### Product %d: %s" % (number, product.title) if number else "### %s" % (product.title,)
    return "\n".join(
        [
            heading,
            price_lines(product),
            "Description: %s" % (product.description,),
            "Key features:",
            _bullets(product.key_features, "(none)"),
            "Specifications:",
            format_specifications(product.specifications),
            "Reviews:",
            format_reviews(product.reviews),
        ]
    )


def mos_product_block(product, mos_text, number):
    return "\n".join(
        [
            "### Product %d: %s" % (number, product.title),
            price_lines(product),
            "Opinion summary: %s" % (mos_text,),
        ]
    )


def render_mos_generation(product, templates=None):
    """Render the multi-source opinion summary prompt for one product."""
    templates = templates or default_templates()
    return templates.render(
        "mos_gen",
        {
            "title": product.title,
            "description": product.description,
            "key_features": _bullets(product.key_features, "(none)"),
            "specifications": format_specifications(product.specifications),
            "reviews": format_reviews(product.reviews),
            "average_rating": str(product.average_rating),
        },
    )


def render_ces_generation(query, products, mode, mos_texts=None, templates=None):
    """
    Render the comparative summary prompt.

    :param products: The three ranked :obj:`ProductRecord`.
    :param mode: :data:`MOS` to compare from opinion summaries (``mos_texts``,
        one per product, plus each product's price and rating data) or
        :data:`DIA` to compare from the raw product data.
    """
    templates = templates or default_templates()
    products = list(products)
    if len(products) != TOP_K:
        raise PromptError("expected %d products, got %d" % (TOP_K, len(products)))
    if mode == MOS:
        mos_texts = list(mos_texts or [])
        if len(mos_texts) != TOP_K or not all(t and t.strip() for t in mos_texts):
            raise PromptError("M-OS mode needs one opinion summary per product")
        blocks = [
            mos_product_block(p, text, i) for i, (p, text) in enumerate(zip(products, mos_texts), 1)
        ]
    elif mode == DIA:
        blocks = [raw_product_block(p, i) for i, p in enumerate(products, 1)]
    else:
        raise PromptError("unknown generation mode %r" % (mode,))
    return templates.render(
        "ces_gen_" + mode, {"query": query, "products": "\n\n".join(blocks)}
    )


@attr.s(frozen=True)
class EvalContext(object):
    """
    What a judge may see besides the summary under evaluation.

    :param sources: Source text blocks (one per product).
    """

    query = attr.ib(default=None)
    sources = attr.ib(default=(), converter=tuple)


def ces_context(instance):
    """Judge context for a comparative summary: the query and all three products' raw data."""
    return EvalContext(
        query=instance.query,
        sources=[raw_product_block(p, i) for i, p in enumerate(instance.products, 1)],
    )


def mos_context(product):
    """Judge context for a single product's opinion summary."""
    return EvalContext(query=None, sources=[raw_product_block(product)])


def render_evaluation(dimension, subject, context=None, templates=None):
    """
    Render the judge prompt for one dimension.

    Only the context the dimension is routed to reaches the template: the
    product sources for source-dependent dimensions, the query for query
    relevance, nothing else for clarity and format adherence.
    """
    templates = templates or default_templates()
    dimension = get_dimension(dimension)
    context = context or EvalContext()
    if not subject or not subject.strip():
        raise PromptError("nothing to evaluate: empty summary")
    values = {
        "dimension": dimension.name,
        "criteria": dimension.criteria_text,
        "summary": subject.strip(),
    }
    if "query" in dimension.context:
        if not context.query:
            raise PromptError("dimension %s needs the query" % (dimension.id,))
        values["query"] = context.query
    if "sources" in dimension.context:
        if not context.sources:
            raise PromptError("dimension %s needs the source inputs" % (dimension.id,))
        values["sources"] = "\n\n".join(context.sources)
    prompt = templates.render("eval_" + dimension.id, values)
    return attr.evolve(prompt, user_message=prompt.user_message + "\n\n" + SCORE_INSTRUCTION)
