# -*- test-case-name: qfces.test_config -*-
"""
Run configuration, read from an INI file.

::

    [run]
    dataset = data/queries.jsonl
    output_dir = out
    seed = 13

    [backend:mock]
    kind = mock

    [generation]
    mos_backend = mock
    generators = mock

    [evaluation]
    judges = mock
    n = 10

Relative paths resolve against the directory of the config file. The
config hash identifies the effective configuration and is embedded, with
the seed, in every output.
"""

import configparser
import hashlib
import os

import attr

from ._errors import ValidationError
from .bench import DEFAULT_ITERATIONS
from .gateway import (
    DEFAULT_MAX_FAILURE_FRACTION,
    DEFAULT_TIMEOUT,
    EVALUATION_PRESET,
    GENERATION_PRESET,
    HttpBackend,
)
from .judge import DEFAULT_THRESHOLD
from .mock import MockBackend, MockSpec

BACKEND_PREFIX = "backend:"
KNOWN_KEYS = {
    "run": {"dataset", "output_dir", "seed", "strict", "templates", "workers"},
    "generation": {"mos_backend", "generators", "temperature", "top_k", "top_p", "num_beams", "max_tokens"},
    "evaluation": {"judges", "n", "temperature", "top_p", "max_tokens", "threshold"},
    "metaeval": {"annotations", "round2", "iterations", "difference", "discrepancy_threshold"},
    "bench": {"backend", "queries", "iterations"},
}
BACKEND_KEYS = {
    "kind",
    "model",
    "concurrency",
    "endpoint",
    "auth_env",
    "timeout",
    "extended_sampling",
    "max_failure_fraction",
    "seed",
    "base_latency_ms",
    "per_input_token_ms",
    "per_output_token_ms",
    "realtime",
    "score_weights",
}


class ConfigError(ValidationError):
    pass


@attr.s(frozen=True)
class BackendConfig(object):
    backend_id = attr.ib()
    kind = attr.ib()
    model = attr.ib()
    concurrency = attr.ib()
    max_failure_fraction = attr.ib(default=DEFAULT_MAX_FAILURE_FRACTION)
    endpoint = attr.ib(default=None)
    auth_env = attr.ib(default=None)
    timeout = attr.ib(default=DEFAULT_TIMEOUT)
    extended_sampling = attr.ib(default=False)
    mock = attr.ib(default=None)

    def build(self):
        if self.kind == "mock":
            return MockBackend(self.backend_id, self.mock, concurrency=self.concurrency)
        return HttpBackend(
            self.backend_id,
            self.endpoint,
            self.model,
            auth_env=self.auth_env,
            timeout=self.timeout,
            concurrency=self.concurrency,
            extended_sampling=self.extended_sampling,
        )


@attr.s(frozen=True)
class GenerationConfig(object):
    mos_backend = attr.ib()
    generators = attr.ib(converter=tuple)
    params = attr.ib(default=GENERATION_PRESET)


@attr.s(frozen=True)
class EvaluationConfig(object):
    judges = attr.ib(converter=tuple)
    params = attr.ib(default=EVALUATION_PRESET)
    threshold = attr.ib(default=DEFAULT_THRESHOLD)


@attr.s(frozen=True)
class MetaevalConfig(object):
    annotations = attr.ib(default=None)
    round2 = attr.ib(default=None)
    iterations = attr.ib(default=10000)
    difference = attr.ib(default="ordinal")
    discrepancy_threshold = attr.ib(default=2)


@attr.s(frozen=True)
class BenchSettings(object):
    backend = attr.ib(default=None)
    queries = attr.ib(default=(), converter=tuple)
    iterations = attr.ib(default=DEFAULT_ITERATIONS)


@attr.s(frozen=True)
class RunConfig(object):
    """
    :ivar backends: ``{backend_id: BackendConfig}``.
    :ivar config_hash: First 12 hex digits of the SHA-256 of the canonical
        configuration text.
    """

    dataset = attr.ib()
    output_dir = attr.ib()
    seed = attr.ib()
    strict = attr.ib()
    templates = attr.ib()
    workers = attr.ib()
    backends = attr.ib()
    generation = attr.ib()
    evaluation = attr.ib()
    metaeval = attr.ib()
    bench = attr.ib()
    config_hash = attr.ib()

    def backend(self, backend_id):
        try:
            return self.backends[backend_id]
        except KeyError:
            raise ConfigError("backend %r is not configured" % (backend_id,))

    def build_backends(self):
        return [self.backends[b].build() for b in sorted(self.backends)]

    def meta(self):
        """Provenance embedded in every output."""
        return {"config_hash": self.config_hash, "seed": self.seed}


def canonical_text(parser):
    lines = []
    for section in sorted(parser.sections()):
        lines.append("[%s]" % (section,))
        for key in sorted(parser[section]):
            lines.append("%s=%s" % (key, parser[section][key].strip()))
    return "\n".join(lines) + "\n"


def config_hash(parser):
    return hashlib.sha256(canonical_text(parser).encode("utf-8")).hexdigest()[:12]


class _Section(object):
    """Typed access to one section, with errors naming section and key."""

    def __init__(self, parser, name):
        self.name = name
        self.values = parser[name] if parser.has_section(name) else {}

    def _get(self, key, convert, default):
        raw = self.values.get(key)
        if raw is None or not raw.strip():
            return default
        try:
            return convert(raw.strip())
        except ValueError:
            raise ConfigError("[%s] %s: invalid value %r" % (self.name, key, raw))

    def text(self, key, default=None):
        return self._get(key, str, default)

    def integer(self, key, default=None):
        return self._get(key, int, default)

    def number(self, key, default=None):
        return self._get(key, float, default)

    def flag(self, key, default=False):
        def convert(raw):
            lowered = raw.lower()
            if lowered in ("1", "yes", "true", "on"):
                return True
            if lowered in ("0", "no", "false", "off"):
                return False
            raise ValueError(raw)

        return self._get(key, convert, default)

    def names(self, key, default=()):
        return self._get(key, lambda raw: tuple(raw.replace(",", " ").split()), default)


def _params(section, preset):
    """Sampling parameters from ``section``, defaulting to ``preset``."""
    try:
        return attr.evolve(
            preset,
            temperature=section.number("temperature", preset.temperature),
            top_p=section.number("top_p", preset.top_p),
            max_tokens=section.integer("max_tokens", preset.max_tokens),
            **_extra_params(section, preset)
        )
    except ValueError as e:
        raise ConfigError("[%s] %s" % (section.name, e))


def _extra_params(section, preset):
    if section.name == "generation":
        return {
            "top_k": section.integer("top_k", preset.top_k),
            "num_beams": section.integer("num_beams", preset.num_beams),
        }
    return {"n_samples": section.integer("n", preset.n_samples)}


def _check_keys(parser):
    for name in parser.sections():
        if name.startswith(BACKEND_PREFIX):
            known = BACKEND_KEYS
        elif name in KNOWN_KEYS:
            known = KNOWN_KEYS[name]
        else:
            raise ConfigError("unknown section [%s]" % (name,))
        unknown = set(parser[name]) - known
        if unknown:
            raise ConfigError("[%s]: unknown keys %s" % (name, ", ".join(sorted(unknown))))


def _backend(parser, name, run_seed):
    section = _Section(parser, name)
    backend_id = name[len(BACKEND_PREFIX):].strip()
    kind = section.text("kind", "mock")
    if kind not in ("mock", "http"):
        raise ConfigError("[%s] kind must be mock or http, got %r" % (name, kind))
    common = dict(
        backend_id=backend_id,
        kind=kind,
        model=section.text("model", backend_id),
        concurrency=section.integer("concurrency", 8 if kind == "mock" else 4),
        max_failure_fraction=section.number("max_failure_fraction", DEFAULT_MAX_FAILURE_FRACTION),
    )
    if kind == "http":
        endpoint = section.text("endpoint")
        if not endpoint:
            raise ConfigError("[%s] an http backend needs an endpoint" % (name,))
        return BackendConfig(
            endpoint=endpoint,
            auth_env=section.text("auth_env"),
            timeout=section.number("timeout", DEFAULT_TIMEOUT),
            extended_sampling=section.flag("extended_sampling", False),
            **common
        )
    try:
        weights = tuple(float(w) for w in section.names("score_weights", ("1", "2", "4", "8", "5")))
        if len(weights) != 5:
            raise ValueError("score_weights needs five weights")
        spec = MockSpec(
            seed=section.integer("seed", run_seed),
            base_latency_ms=section.number("base_latency_ms", 0.0),
            per_input_token_ms=section.number("per_input_token_ms", 0.0),
            per_output_token_ms=section.number("per_output_token_ms", 0.0),
            realtime=section.flag("realtime", True),
            score_weights=weights,
        )
    except ValueError as e:
        raise ConfigError("[%s] %s" % (name, e))
    return BackendConfig(mock=spec, **common)


def _path(base_dir, value):
    if value is None:
        return None
    return os.path.normpath(os.path.join(base_dir, value))


def parse_config(text, base_dir="."):
    """
    Parse INI ``text`` into a :obj:`RunConfig`.

    :raises ConfigError: on syntax errors, unknown sections or keys, bad
        values, or references to undefined backends.
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError("config syntax: %s" % (e,))
    _check_keys(parser)

    run = _Section(parser, "run")
    seed = run.integer("seed", 0)
    backends = dict(
        (b.backend_id, b)
        for b in (_backend(parser, s, seed) for s in parser.sections() if s.startswith(BACKEND_PREFIX))
    )
    if not backends:
        raise ConfigError("no [backend:<id>] section")
    default_backend = sorted(backends)[0]

    generation = _Section(parser, "generation")
    evaluation = _Section(parser, "evaluation")
    metaeval = _Section(parser, "metaeval")
    bench = _Section(parser, "bench")
    difference = metaeval.text("difference", "ordinal")
    if difference not in ("ordinal", "interval", "nominal"):
        raise ConfigError("[metaeval] difference must be ordinal, interval or nominal")

    config = RunConfig(
        dataset=_path(base_dir, run.text("dataset")),
        output_dir=_path(base_dir, run.text("output_dir", "out")),
        seed=seed,
        strict=run.flag("strict", True),
        templates=_path(base_dir, run.text("templates")),
        workers=run.integer("workers", 16),
        backends=backends,
        generation=GenerationConfig(
            mos_backend=generation.text("mos_backend", default_backend),
            generators=generation.names("generators", (default_backend,)),
            params=_params(generation, GENERATION_PRESET),
        ),
        evaluation=EvaluationConfig(
            judges=evaluation.names("judges", (default_backend,)),
            params=_params(evaluation, EVALUATION_PRESET),
            threshold=evaluation.number("threshold", DEFAULT_THRESHOLD),
        ),
        metaeval=MetaevalConfig(
            annotations=_path(base_dir, metaeval.text("annotations")),
            round2=_path(base_dir, metaeval.text("round2")),
            iterations=metaeval.integer("iterations", 10000),
            difference=difference,
            discrepancy_threshold=metaeval.integer("discrepancy_threshold", 2),
        ),
        bench=BenchSettings(
            backend=bench.text("backend", default_backend),
            queries=bench.names("queries", ()),
            iterations=bench.integer("iterations", DEFAULT_ITERATIONS),
        ),
        config_hash=config_hash(parser),
    )
    _check_references(config)
    return config


def _check_references(config):
    referenced = [("[generation] mos_backend", config.generation.mos_backend)]
    referenced += [("[generation] generators", g) for g in config.generation.generators]
    referenced += [("[evaluation] judges", j) for j in config.evaluation.judges]
    referenced += [("[bench] backend", config.bench.backend)]
    for where, backend_id in referenced:
        if backend_id not in config.backends:
            raise ConfigError("%s refers to undefined backend %r" % (where, backend_id))
    if config.workers < 1:
        raise ConfigError("[run] workers must be >= 1")
    if config.bench.iterations < 1:
        raise ConfigError("[bench] iterations must be >= 1")


def load_config(path):
    try:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError("cannot read config %s: %s" % (path, e.strerror))
    return parse_config(text, base_dir=os.path.dirname(os.path.abspath(path)))
