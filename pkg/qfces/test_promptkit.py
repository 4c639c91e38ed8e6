import os
import shutil
import tempfile

from testtools import TestCase
from testtools.matchers import raises

from ._test_utils import make_instance, make_product
from .catalog import Review
from .promptkit import (
    CANONICAL_ORDER,
    CES_DIMENSION_IDS,
    DIA,
    MOS,
    MOS_DIMENSION_IDS,
    NO_REVIEWS,
    SCORE_INSTRUCTION,
    PromptError,
    TemplateError,
    TemplateSet,
    UnknownDimensionError,
    ces_context,
    format_reviews,
    get_dimension,
    mos_context,
    render_ces_generation,
    render_evaluation,
    render_mos_generation,
    template_ids,
)

MOS_TEXTS = ["Alpha summary.", "Beta summary.", "Gamma summary."]


class TemplateSetTests(TestCase):
    def test_every_template_loads(self):
        templates = TemplateSet()
        for template_id in template_ids():
            template = templates.get(template_id)
            self.assertTrue(template.required_placeholders)

    def test_missing_template(self):
        self.assertThat(
            lambda: TemplateSet().get("nope"), raises(TemplateError("template nope.txt not found"))
        )

    def test_unbound_placeholder(self):
        try:
            TemplateSet().render("mos_gen", {"title": "x"})
        except TemplateError as e:
            self.assertIn("unbound placeholders", str(e))
        else:
            self.fail("no error")

    def test_override_directory(self):
        """A template in the override directory replaces the shipped one."""
        path = tempfile.mkdtemp()
        self.addCleanup(shutil.rmtree, path)
        with open(os.path.join(path, "mos_gen.txt"), "w") as f:
            f.write("System.\n---\nSummarise {{ title }}.\n")
        prompt = TemplateSet(path).render("mos_gen", {"title": "Alpha"})
        self.assertEqual((prompt.system_message, prompt.user_message), ("System.", "Summarise Alpha."))
        # everything else still comes from the shipped set
        self.assertIn("Summary to evaluate:", TemplateSet(path).render(
            "eval_clarity", {"dimension": "clarity", "criteria": "c", "summary": "s"}
        ).user_message)

    def test_no_separator(self):
        path = tempfile.mkdtemp()
        self.addCleanup(shutil.rmtree, path)
        with open(os.path.join(path, "mos_gen.txt"), "w") as f:
            f.write("Only a body {{ title }}\n")
        self.assertRaises(TemplateError, TemplateSet(path).get, "mos_gen")


class GenerationPromptTests(TestCase):
    def test_mos_generation_includes_every_source(self):
        product = make_product()
        prompt = render_mos_generation(product)
        self.assertEqual(prompt.task, "mos_gen")
        for text in ["[Title]\nAlpha Phone", "- 6.1 inch display", "- Weight: 170 g",
                     "(5/5) Great battery, lasts all weekend.", "[Average Rating]\n4.5"]:
            self.assertIn(text, prompt.user_message)

    def test_empty_reviews_marker(self):
        self.assertEqual(format_reviews([]), NO_REVIEWS)
        self.assertEqual(format_reviews([Review("ok")]), "- ok")
        prompt = render_mos_generation(make_product(reviews=[]))
        self.assertIn("[Reviews]\n" + NO_REVIEWS, prompt.user_message)

    def test_query_appears_once(self):
        instance = make_instance()
        for mode, texts in [(MOS, MOS_TEXTS), (DIA, None)]:
            prompt = render_ces_generation(instance.query, instance.products, mode, mos_texts=texts)
            self.assertEqual(prompt.task, "ces_gen_" + mode)
            self.assertEqual(prompt.text.count(instance.query), 1)

    def test_products_in_rank_order(self):
        instance = make_instance()
        prompt = render_ces_generation(instance.query, instance.products, MOS, mos_texts=MOS_TEXTS)
        text = prompt.user_message
        self.assertTrue(
            text.index("### Product 1: Alpha Phone")
            < text.index("### Product 2: Beta Phone")
            < text.index("### Product 3: Gamma Phone")
        )
        self.assertIn("Opinion summary: Beta summary.", text)
        self.assertNotIn("Camera is fine.", text)

    def test_dia_uses_raw_data(self):
        instance = make_instance()
        prompt = render_ces_generation(instance.query, instance.products, DIA)
        self.assertIn("Camera is fine.", prompt.user_message)
        self.assertIn("- Final price: 449.00 USD", prompt.user_message)

    def test_mos_mode_needs_three_summaries(self):
        instance = make_instance()
        self.assertRaises(
            PromptError, render_ces_generation, instance.query, instance.products, MOS, ["a", "b"]
        )
        self.assertRaises(
            PromptError, render_ces_generation, instance.query, instance.products, MOS, ["a", " ", "c"]
        )

    def test_wrong_product_count(self):
        instance = make_instance()
        self.assertRaises(PromptError, render_ces_generation, instance.query, instance.products[:2], DIA)

    def test_unknown_mode(self):
        instance = make_instance()
        self.assertRaises(PromptError, render_ces_generation, instance.query, instance.products, "other")


class EvaluationPromptTests(TestCase):
    def test_context_routing(self):
        """Each dimension sees only the context it is routed to."""
        instance = make_instance()
        context = ces_context(instance)
        for dimension in CES_DIMENSION_IDS:
            prompt = render_evaluation(dimension, "The summary.", context)
            text = prompt.user_message
            self.assertEqual(prompt.task, "eval_" + dimension)
            self.assertTrue(text.endswith(SCORE_INSTRUCTION))
            has_query = instance.query in text
            has_sources = "### Product 1: Alpha Phone" in text
            self.assertEqual(has_query, dimension == "query_relevance", dimension)
            self.assertEqual(has_sources, dimension in ("faithfulness", "informativeness"), dimension)

    def test_mos_dimensions(self):
        product = make_product()
        for dimension in MOS_DIMENSION_IDS:
            prompt = render_evaluation(dimension, "An opinion summary.", mos_context(product))
            self.assertIn("An opinion summary.", prompt.user_message)

    def test_missing_context(self):
        self.assertRaises(PromptError, render_evaluation, "faithfulness", "x")
        self.assertRaises(PromptError, render_evaluation, "query_relevance", "x")

    def test_empty_summary(self):
        self.assertRaises(PromptError, render_evaluation, "clarity", "  ")

    def test_unknown_dimension(self):
        self.assertRaises(UnknownDimensionError, get_dimension, "vibes")

    def test_codes(self):
        self.assertEqual(
            [get_dimension(d).code for d in CANONICAL_ORDER],
            ["CL", "FA", "IF", "FoA", "QR", "FL", "CO", "AC", "FF", "RL", "SC", "SP"],
        )

    def test_system_message_per_dimension(self):
        """Every dimension casts the judge as an expert in that dimension only."""
        instance = make_instance()
        product = make_product()
        messages = set()
        for dimension in CES_DIMENSION_IDS + MOS_DIMENSION_IDS:
            context = ces_context(instance) if dimension in CES_DIMENSION_IDS else mos_context(product)
            prompt = render_evaluation(dimension, "The summary.", context)
            self.assertIn(get_dimension(dimension).name, prompt.system_message)
            self.assertTrue(prompt.system_message.startswith("You are an expert"), dimension)
            messages.add(prompt.system_message)
        self.assertEqual(len(messages), len(CANONICAL_ORDER))

    def test_ces_criteria_wording(self):
        phrases = {
            "clarity": "Clarity measures the degree to which the information in the Comparative Summary",
            "faithfulness": "accurate, verifiable, and directly supported by the input data",
            "informativeness": 'any missing values are properly marked as "N/A"',
            "format_adherence": "appropriately named and not using placeholders",
            "query_relevance": "enable the user to make an informed buying decision",
        }
        context = ces_context(make_instance())
        for dimension, phrase in phrases.items():
            self.assertIn(phrase, get_dimension(dimension).criteria_text)
            self.assertIn(phrase, render_evaluation(dimension, "The summary.", context).user_message)
