# -*- test-case-name: qfces.test_bench -*-
"""
Latency of comparative summary generation from opinion summaries versus
from raw product data.

For every query and mode the generation prompt is rendered once and then
completed ``iterations`` times, strictly one request at a time. Only the
completion call is timed; opinion summaries are read from a precomputed
store and their generation is not part of the measurement.

Every timing is appended to a raw log as soon as it is taken, so an
interrupted run resumes where it stopped and the report can always be
recomputed from the log alone.
"""

import logging
from collections import OrderedDict

import attr
import numpy as np

from effect import Effect
from effect.do import do

from ._errors import StatisticsError
from .gateway import DEFAULT_RETRY, GENERATION_PRESET, complete
from .io import MissingArtifactError, RemoveFile, ReplaceText, append_records, iter_json_lines, read_text
from .promptkit import DIA, MOS, MODES, render_ces_generation
from .tables import fmt_decimal, render_table

log = logging.getLogger(__name__)

DEFAULT_ITERATIONS = 50


def _positive(instance, attribute, value):
    if value < 1:
        raise ValueError("%s must be >= 1, got %r" % (attribute.name, value))


@attr.s(frozen=True)
class BenchConfig(object):
    """
    :param mos_store: ``{product_id: opinion summary}``; must cover every
        product of every query when the MOS mode is benchmarked.
    """

    query_ids = attr.ib(converter=tuple)
    backend_id = attr.ib()
    params = attr.ib(default=GENERATION_PRESET)
    iterations = attr.ib(default=DEFAULT_ITERATIONS, validator=_positive)
    modes = attr.ib(default=MODES, converter=tuple)
    mos_store = attr.ib(default=attr.Factory(dict))


@attr.s(frozen=True)
class Timing(object):
    query_id = attr.ib()
    mode = attr.ib()
    iteration = attr.ib()
    latency_ms = attr.ib()

    @property
    def step(self):
        return (self.query_id, self.mode, self.iteration)


@attr.s(frozen=True)
class TimingRow(object):
    query_id = attr.ib()
    mode = attr.ib()
    n = attr.ib()
    mean_ms = attr.ib()
    min_ms = attr.ib()
    max_ms = attr.ib()
    stddev_ms = attr.ib()


@attr.s(frozen=True)
class BenchReport(object):
    """
    :ivar mode_means: ``{mode: mean latency over all its timings}``.
    :ivar reduction_percent: How much faster the MOS mode is, relative to
        DIA; None unless both modes were run.
    """

    rows = attr.ib(converter=tuple)
    mode_means = attr.ib()
    reduction_percent = attr.ib()

    def to_dict(self):
        return {
            "rows": [attr.asdict(r) for r in self.rows],
            "mode_means": dict(self.mode_means),
            "reduction_percent": self.reduction_percent,
        }


def compare_means(mean_mos_ms, mean_dia_ms):
    """
    Latency reduction of MOS relative to DIA, in percent.

    :raises StatisticsError: if the DIA mean is not positive.
    """
    if mean_dia_ms <= 0:
        raise StatisticsError("DIA mean latency must be positive, got %r" % (mean_dia_ms,))
    return 100.0 * (mean_dia_ms - mean_mos_ms) / mean_dia_ms


def bench_prompts(config, dataset, templates=None):
    """
    Render the prompt of every (query, mode), before anything is timed.

    :raises MissingArtifactError: if a query is not in the dataset, or the
        store lacks an opinion summary the MOS mode needs.
    """
    prompts = OrderedDict()
    for query_id in config.query_ids:
        try:
            instance = dataset.get(query_id)
        except KeyError:
            raise MissingArtifactError("query %s is not in the dataset" % (query_id,))
        for mode in config.modes:
            mos_texts = None
            if mode == MOS:
                missing = [p.product_id for p in instance.products if p.product_id not in config.mos_store]
                if missing:
                    raise MissingArtifactError(
                        "no opinion summary for products %s of query %s; run gen-mos first"
                        % (", ".join(missing), query_id)
                    )
                mos_texts = [config.mos_store[p.product_id] for p in instance.products]
            prompts[query_id, mode] = render_ces_generation(
                instance.query, instance.products, mode, mos_texts=mos_texts, templates=templates
            )
    return prompts


def timing_to_dict(timing):
    return attr.asdict(timing)


def parse_timings(text, source="<string>"):
    timings = []
    for number, obj in iter_json_lines(text, source):
        try:
            timings.append(
                Timing(
                    query_id=obj["query_id"],
                    mode=obj["mode"],
                    iteration=obj["iteration"],
                    latency_ms=float(obj["latency_ms"]),
                )
            )
        except (KeyError, TypeError, ValueError):
            raise StatisticsError("%s:%d: bad timing record" % (source, number))
    return timings


def build_report(timings, config):
    """Summarise raw timings; deterministic for a given log."""
    grouped = OrderedDict(((q, m), []) for q in config.query_ids for m in config.modes)
    for timing in timings:
        if (timing.query_id, timing.mode) in grouped:
            grouped[timing.query_id, timing.mode].append(timing.latency_ms)
    rows = []
    per_mode = OrderedDict((m, []) for m in config.modes)
    for (query_id, mode), values in grouped.items():
        if not values:
            continue
        values = np.array(values, dtype=float)
        rows.append(
            TimingRow(
                query_id=query_id,
                mode=mode,
                n=len(values),
                mean_ms=float(values.mean()),
                min_ms=float(values.min()),
                max_ms=float(values.max()),
                stddev_ms=float(values.std(ddof=1)) if len(values) > 1 else 0.0,
            )
        )
        per_mode[mode].extend(values.tolist())
    mode_means = OrderedDict((m, float(np.mean(v))) for m, v in per_mode.items() if v)
    reduction = None
    if MOS in mode_means and DIA in mode_means:
        reduction = compare_means(mode_means[MOS], mode_means[DIA])
    return BenchReport(rows=rows, mode_means=mode_means, reduction_percent=reduction)


@do
def run_bench(config, dataset, log_path, marker_path=None, templates=None, meta=None, policy=DEFAULT_RETRY):
    """
    Run (or resume) the benchmark and return an Effect of its
    :obj:`BenchReport`.

    Steps already in the log at ``log_path`` are skipped. When a completion
    fails, ``marker_path`` is written with the step to resume from and the
    error is re-raised; a finished run removes the marker.
    """
    prompts = bench_prompts(config, dataset, templates)
    existing = yield read_text(log_path, missing_ok=True)
    timings = parse_timings(existing, log_path) if existing else []
    done = set(t.step for t in timings)
    if existing is None and meta is not None:
        yield append_records(log_path, [{"_meta": meta}])
    if done:
        log.info("resuming: %d timings already in %s", len(done), log_path)
    for query_id in config.query_ids:
        for mode in config.modes:
            log.info("timing query %s, mode %s", query_id, mode)
            request = prompts[query_id, mode].request(config.backend_id, config.params)
            for iteration in range(config.iterations):
                if (query_id, mode, iteration) in done:
                    continue
                try:
                    result = yield complete(request, policy=policy)
                except Exception as e:
                    if marker_path:
                        yield Effect(
                            ReplaceText(
                                path=marker_path,
                                content="query_id=%s mode=%s iteration=%d\n" % (query_id, mode, iteration),
                            )
                        )
                    raise e
                timing = Timing(query_id, mode, iteration, result.latency_ms)
                yield append_records(log_path, [timing_to_dict(timing)])
                timings.append(timing)
    if marker_path:
        yield Effect(RemoveFile(path=marker_path))
    return build_report(timings, config)


def render_report(report, footer=None):
    header = ["Query", "Mode", "n", "Mean ms", "Min ms", "Max ms", "Stddev ms"]
    rows = [
        [
            r.query_id,
            r.mode.upper(),
            str(r.n),
            fmt_decimal(r.mean_ms),
            fmt_decimal(r.min_ms),
            fmt_decimal(r.max_ms),
            fmt_decimal(r.stddev_ms),
        ]
        for r in report.rows
    ]
    rows.append(None)
    for mode, mean in report.mode_means.items():
        rows.append(["All", mode.upper(), "", fmt_decimal(mean), "", "", ""])
    lines = [render_table(header, rows).rstrip("\n")]
    if report.reduction_percent is not None:
        lines.append("")
        lines.append("Latency reduction (MOS vs DIA): %s%%" % (fmt_decimal(report.reduction_percent),))
    if footer:
        lines.append("")
        lines.append(footer)
    return "\n".join(lines) + "\n"
