# -*- test-case-name: qfces.test_mock -*-
"""
A deterministic local backend.

Every reply is a pure function of the mock's seed, the request fingerprint
and the sample index, so a run against the mock is byte-for-byte repeatable
on any platform. At temperature 0 the sample index is ignored and all
samples agree.

Replies come from, in order of precedence: the ``response_table`` (canned
text per request fingerprint), the ``script`` (texts cycled by sample index),
or a synthesiser that produces a reply shaped like the task the prompt was
rendered from.
"""

import hashlib
import random
import re
import time

import attr

from .gateway import Reply, estimate_tokens


def _non_negative(instance, attribute, value):
    if value < 0:
        raise ValueError("%s must be >= 0, got %r" % (attribute.name, value))


@attr.s(frozen=True)
class MockSpec(object):
    """
    :param score_weights: Relative weights of judge scores 1 to 5 used by
        the synthesiser.
    :param realtime: Sleep for the modelled latency instead of only
        reporting it.
    """

    seed = attr.ib(default=0)
    base_latency_ms = attr.ib(default=0.0, validator=_non_negative)
    per_input_token_ms = attr.ib(default=0.0, validator=_non_negative)
    per_output_token_ms = attr.ib(default=0.0, validator=_non_negative)
    response_table = attr.ib(default=attr.Factory(dict))
    script = attr.ib(default=(), converter=tuple)
    score_weights = attr.ib(default=(1, 2, 4, 8, 5), converter=tuple)
    realtime = attr.ib(default=True)


_TITLE = re.compile(r"^\[Title\]\n(.+)$", re.M)
_PRODUCT = re.compile(r"^### Product (\d+): (.+)$", re.M)

_ASPECTS = [
    "build quality",
    "battery life",
    "ease of use",
    "value for money",
    "durability",
    "comfort",
    "performance",
    "design",
]
_OPINIONS = [
    "Reviewers consistently praise its %s.",
    "Several buyers mention mixed experiences with its %s.",
    "Its %s is described as dependable in everyday use.",
    "A few reviews criticise the %s, though most are satisfied.",
]
_JUDGE_REMARKS = [
    "The summary mostly meets the criteria, with minor omissions.",
    "The summary is consistent with the criteria and well organised.",
    "Some parts of the summary are weaker against the criteria.",
    "The summary follows the guidelines with a few rough edges.",
]
_LEVELS = ["Excellent", "Good", "Average", "Limited"]
_DYNAMIC = ["Build Quality", "Battery Life", "Ease of Use", "Durability", "Comfort"]


class MockBackend(object):
    """A backend answering from a :obj:`MockSpec`."""

    def __init__(self, backend_id, spec=None, concurrency=8):
        self.backend_id = backend_id
        self.spec = spec if spec is not None else MockSpec()
        self.concurrency = concurrency

    def latency_for(self, request, text):
        """
        The modelled latency, or None when every coefficient is zero (the
        gateway then reports measured wall-clock time).
        """
        spec = self.spec
        if not (spec.base_latency_ms or spec.per_input_token_ms or spec.per_output_token_ms):
            return None
        return (
            spec.base_latency_ms
            + spec.per_input_token_ms * request.input_token_estimate
            + spec.per_output_token_ms * estimate_tokens(text)
        )

    def call(self, request, sample_index=0):
        text = self.reply(request, sample_index)
        latency = self.latency_for(request, text)
        if latency and self.spec.realtime:
            time.sleep(latency / 1000.0)
        return Reply(text=text, latency_ms=latency)

    def close(self):
        pass

    def reply(self, request, sample_index=0):
        fingerprint = request.fingerprint
        if fingerprint in self.spec.response_table:
            return self.spec.response_table[fingerprint]
        if self.spec.script:
            return self.spec.script[sample_index % len(self.spec.script)]
        index = sample_index if request.params.temperature > 0 else 0
        rng = self._rng(fingerprint, index)
        task = request.task or ""
        if task.startswith("eval_"):
            return self._judge_reply(rng)
        if task == "mos_gen":
            return self._mos_reply(request.user_message, rng)
        if task.startswith("ces_gen"):
            return self._ces_reply(request.user_message, rng)
        return "Mock reply %s." % (fingerprint[:12],)

    def _rng(self, fingerprint, index):
        material = "%s:%s:%d" % (self.spec.seed, fingerprint, index)
        return random.Random(int(hashlib.sha256(material.encode("utf-8")).hexdigest(), 16))

    def _judge_reply(self, rng):
        score = rng.choices([1, 2, 3, 4, 5], weights=self.spec.score_weights)[0]
        return "%s\nScore: %d" % (rng.choice(_JUDGE_REMARKS), score)

    def _mos_reply(self, prompt, rng):
        match = _TITLE.search(prompt)
        title = match.group(1).strip() if match else "This product"
        aspects = rng.sample(_ASPECTS, 3)
        sentences = [rng.choice(_OPINIONS) % a for a in aspects]
        return "%s combines its listed features with broadly positive feedback. %s" % (
            title,
            " ".join(sentences),
        )

    def _ces_reply(self, prompt, rng):
        blocks = _product_blocks(prompt)
        titles = [b[0] for b in blocks]
        dynamic = rng.choice(_DYNAMIC)
        rows = [
            ("Base Price", [_field(b[1], "Base price") for b in blocks]),
            ("Final Price", [_field(b[1], "Final price") for b in blocks]),
            ("Average Rating", [_field(b[1], "Average rating") for b in blocks]),
            (dynamic, [rng.choice(_LEVELS) for _ in blocks]),
            ("Pros", ["Strong %s" % rng.choice(_ASPECTS) for _ in blocks]),
            ("Cons", ["Weaker %s" % rng.choice(_ASPECTS) for _ in blocks]),
        ]
        lines = ["| Attribute | %s |" % " | ".join(titles), "|---|---|---|---|"]
        for name, cells in rows:
            lines.append("| %s | %s |" % (name, " | ".join(cells)))
        best = rng.choice(titles)
        verdict = (
            "Final Verdict: %s is the best fit for this query because it balances price, "
            "rating and %s better than the other two options, which remain reasonable "
            "alternatives for buyers with different priorities." % (best, dynamic.lower())
        )
        return "\n".join(lines) + "\n\n" + verdict


def _product_blocks(prompt):
    """``(title, block text)`` for each product heading in a comparison prompt."""
    matches = list(_PRODUCT.finditer(prompt))
    blocks = []
    for i, match in enumerate(matches[:3]):
        end = matches[i + 1].start() if i + 1 < len(matches) else len(prompt)
        title = match.group(2).strip().replace("|", "/")
        blocks.append((title, prompt[match.end():end]))
    while len(blocks) < 3:
        blocks.append(("Product %d" % (len(blocks) + 1,), ""))
    return blocks


def _field(block, label):
    match = re.search(r"^- %s: (.+)$" % re.escape(label), block, re.M)
    return match.group(1).strip().replace("|", "/") if match else "NA"
