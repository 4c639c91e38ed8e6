# -*- test-case-name: qfces.test_cli -*-
"""
The commands, as Effects.

Every command reads and writes inside one run directory::

    <output_dir>/<run-id>/
        dataset.jsonl           canonical copy of the validated dataset
        mos/<backend>.jsonl     opinion summaries per product
        ces/<summary>.jsonl     comparative summaries per query
        judge/<judge>/          judge score records, resumable
        bench/                  raw timing log and resume marker
        reports/                text and JSON reports

Outputs are write-once. Every file carries the config hash and seed: as a
``_meta`` header line in JSON-lines files, a ``_meta`` key in JSON files and
a footer line in text reports.
"""

import logging
import os
from collections import OrderedDict

import attr

from effect import Effect, parallel
from effect.do import do

from .agreement import (
    agreement_report,
    rater_tables,
    rating_distribution,
    render_agreement,
    render_rater_tables,
    render_rating_distribution,
)
from .annotation import flag_discrepancies, load_annotations
from .bench import BenchConfig, render_report, run_bench
from .catalog import compute_stats, dump_dataset, load_dataset, parse_dataset, render_stats
from .config import ConfigError
from .correlation import render_correlation_table, summary_level_corr
from .gateway import complete
from .io import (
    Display,
    MissingArtifactError,
    append_records,
    dumps_json,
    iter_json_lines,
    read_text,
    write_json,
    write_text,
)
from .judge import aggregate_matrix, evaluate_summary, parse_score_records, render_matrix, score_record
from .parser import CHECK_CODES, check_format
from .promptkit import (
    CANONICAL_ORDER,
    CES_DIMENSION_IDS,
    MODES,
    MOS,
    MOS_DIMENSION_IDS,
    UnknownDimensionError,
    ces_context,
    get_dimension,
    mos_context,
    render_ces_generation,
    render_mos_generation,
)
from .tables import render_table

log = logging.getLogger(__name__)

DATASET = "dataset.jsonl"
TARGETS = ("ces", "mos")


@attr.s(frozen=True)
class Run(object):
    """
    One command invocation against a run directory.

    :ivar as_json: Display machine-readable JSON instead of text tables.
    """

    config = attr.ib()
    run_dir = attr.ib()
    templates = attr.ib()
    as_json = attr.ib(default=False)

    def path(self, *parts):
        return os.path.join(self.run_dir, *parts)

    @property
    def meta(self):
        return self.config.meta()

    def footer(self):
        return "config_hash=%s seed=%s" % (self.config.config_hash, self.config.seed)


def summary_id(generator, mode):
    """Summaries generated from raw data are told apart by a ``-dia`` suffix."""
    return generator if mode == MOS else "%s-%s" % (generator, mode)


def jsonl(meta, records):
    lines = [dumps_json({"_meta": meta})] + [dumps_json(r) for r in records]
    return "\n".join(lines) + "\n"


def with_meta(obj, meta):
    return dict(obj, _meta=meta)


def emit(run, text, obj):
    output = dumps_json(with_meta(obj, run.meta), indent=2) if run.as_json else text.rstrip("\n")
    return Effect(Display(output))


@do
def write_report(run, name, text, obj):
    """Write ``reports/<name>.txt`` and ``reports/<name>.json`` and display one of them."""
    text = text.rstrip("\n") + "\n\n" + run.footer() + "\n"
    yield write_text(run.path("reports", name + ".txt"), text)
    yield write_json(run.path("reports", name + ".json"), with_meta(obj, run.meta))
    yield emit(run, text, obj)


@do
def load_run_dataset(run):
    """The run's ingested dataset, or the configured one if nothing was ingested yet."""
    path = run.path(DATASET)
    text = yield read_text(path, missing_ok=True)
    if text is not None:
        return parse_dataset(text, strict=True, source=path)
    if not run.config.dataset:
        raise MissingArtifactError("no dataset: set [run] dataset or run ingest")
    dataset = yield load_dataset(run.config.dataset, strict=run.config.strict)
    return dataset


def mos_store_path(run):
    return run.path("mos", run.config.generation.mos_backend + ".jsonl")


@do
def load_mos_store(run):
    """``{product_id: opinion summary}`` written by gen-mos."""
    path = mos_store_path(run)
    text = yield read_text(path, missing_ok=True)
    if text is None:
        raise MissingArtifactError("missing M-OS store %s; run gen-mos first" % (path,))
    return OrderedDict((obj["product_id"], obj["text"]) for _, obj in iter_json_lines(text, path))


@do
def load_summaries(run):
    """``[(summary_id, [record])]`` for every comparative summary file present."""
    found = []
    for generator in run.config.generation.generators:
        for mode in MODES:
            sid = summary_id(generator, mode)
            path = run.path("ces", sid + ".jsonl")
            text = yield read_text(path, missing_ok=True)
            if text is not None:
                found.append((sid, [obj for _, obj in iter_json_lines(text, path)]))
    if not found:
        raise MissingArtifactError("no comparative summaries in %s; run gen-ces first" % (run.path("ces"),))
    return found


@do
def ingest(run, args=None):
    if not run.config.dataset:
        raise ConfigError("[run] dataset is not set")
    dataset = yield load_dataset(run.config.dataset, strict=run.config.strict)
    yield write_text(run.path(DATASET), jsonl(run.meta, []) + dump_dataset(dataset))
    if dataset.dropped:
        yield write_text(
            run.path("reports", "dropped.jsonl"),
            jsonl(run.meta, [attr.asdict(d) for d in dataset.dropped]),
        )
    summary = OrderedDict(
        [
            ("instances", len(dataset.instances)),
            ("products", dataset.n_products),
            ("dropped", len(dataset.dropped)),
        ]
    )
    yield emit(
        run,
        "ingested %(instances)d queries (%(products)d products), dropped %(dropped)d" % summary,
        summary,
    )
    return dataset


@do
def stats(run, args=None):
    dataset = yield load_run_dataset(run)
    result = compute_stats(dataset)
    yield write_report(run, "stats", render_stats(result), result.to_dict())
    return result


@do
def gen_mos(run, args=None):
    dataset = yield load_run_dataset(run)
    backend_id = run.config.generation.mos_backend
    params = run.config.generation.params
    products = dataset.unique_products()
    requests = [render_mos_generation(p, run.templates).request(backend_id, params) for p in products]
    results = yield parallel([complete(r) for r in requests])
    records = [
        OrderedDict([("product_id", p.product_id), ("backend", backend_id), ("text", r.text.strip())])
        for p, r in zip(products, results)
    ]
    yield write_text(mos_store_path(run), jsonl(run.meta, records))
    yield emit(
        run,
        "generated %d opinion summaries with %s" % (len(records), backend_id),
        {"backend": backend_id, "products": len(records)},
    )
    return records


@do
def gen_ces(run, args):
    mode = args.mode
    dataset = yield load_run_dataset(run)
    store = None
    if mode == MOS:
        store = yield load_mos_store(run)
    prompts = []
    for instance in dataset.instances:
        mos_texts = None
        if store is not None:
            missing = [p.product_id for p in instance.products if p.product_id not in store]
            if missing:
                raise MissingArtifactError(
                    "M-OS store %s lacks products %s" % (mos_store_path(run), ", ".join(missing))
                )
            mos_texts = [store[p.product_id] for p in instance.products]
        prompts.append(
            render_ces_generation(
                instance.query, instance.products, mode, mos_texts=mos_texts, templates=run.templates
            )
        )
    written = OrderedDict()
    for generator in run.config.generation.generators:
        sid = summary_id(generator, mode)
        params = run.config.generation.params
        results = yield parallel([complete(p.request(generator, params)) for p in prompts])
        records = [
            OrderedDict(
                [
                    ("query_id", instance.query_id),
                    ("summary_id", sid),
                    ("generator", generator),
                    ("mode", mode),
                    ("text", result.text.strip()),
                ]
            )
            for instance, result in zip(dataset.instances, results)
        ]
        yield write_text(run.path("ces", sid + ".jsonl"), jsonl(run.meta, records))
        written[sid] = len(records)
    yield emit(
        run,
        "\n".join("%s: %d comparative summaries" % item for item in written.items()),
        {"mode": mode, "summaries": written},
    )
    return written


@do
def check_format_cmd(run, args=None):
    summaries = yield load_summaries(run)
    records = []
    passed = OrderedDict()
    for sid, items in summaries:
        counts = OrderedDict((code, 0) for code in CHECK_CODES)
        all_passed = 0
        for item in items:
            report = check_format(item["text"])
            for check in report.checks:
                counts[check.code] += int(check.passed)
            all_passed += int(report.passed_all)
            records.append(
                OrderedDict(
                    [("query_id", item["query_id"]), ("summary_id", sid)] + list(report.to_dict().items())
                )
            )
        counts["ALL"] = all_passed
        passed[sid] = (len(items), counts)
    yield write_text(run.path("reports", "format.jsonl"), jsonl(run.meta, records))
    header = ["Check"] + list(passed)
    rows = [
        [code] + ["%d/%d" % (counts[code], n) for n, counts in passed.values()]
        for code in CHECK_CODES
    ]
    rows.append(None)
    rows.append(["ALL"] + ["%d/%d" % (counts["ALL"], n) for n, counts in passed.values()])
    obj = OrderedDict(
        (sid, OrderedDict([("n", n), ("passed", counts)])) for sid, (n, counts) in passed.items()
    )
    yield write_report(run, "format", render_table(header, rows), obj)
    return records


def _dimensions(names, target):
    allowed = CES_DIMENSION_IDS if target == "ces" else MOS_DIMENSION_IDS
    if not names:
        return list(allowed)
    dims = [get_dimension(n).id for n in names]
    wrong = [d for d in dims if d not in allowed]
    if wrong:
        raise UnknownDimensionError(
            "dimensions %s do not apply to %s summaries" % (", ".join(wrong), target.upper())
        )
    return [d for d in CANONICAL_ORDER if d in dims]


@do
def judge_subjects(run, target):
    """``[(instance_id, model, text, context)]`` to judge for ``target``."""
    dataset = yield load_run_dataset(run)
    if target == "mos":
        store = yield load_mos_store(run)
        backend_id = run.config.generation.mos_backend
        return [
            (p.product_id, backend_id, store[p.product_id], mos_context(p))
            for p in dataset.unique_products()
            if p.product_id in store
        ]
    summaries = yield load_summaries(run)
    subjects = []
    for sid, items in summaries:
        for item in items:
            try:
                instance = dataset.get(item["query_id"])
            except KeyError:
                raise MissingArtifactError(
                    "summary %s is for query %s, which is not in the dataset" % (sid, item["query_id"])
                )
            subjects.append((item["query_id"], sid, item["text"], ces_context(instance)))
    return subjects


def scores_path(run, judge_id, target):
    return run.path("judge", judge_id, "%s_scores.jsonl" % (target,))


@do
def judge(run, args):
    target = getattr(args, "target", "ces") or "ces"
    dims = _dimensions(getattr(args, "dims", None), target)
    subjects = yield judge_subjects(run, target)
    evaluation = run.config.evaluation
    judged = OrderedDict()
    for judge_id in evaluation.judges:
        path = scores_path(run, judge_id, target)
        existing = yield read_text(path, missing_ok=True)
        done = set()
        if existing is None:
            yield append_records(path, [{"_meta": run.meta}])
        else:
            done = set((i, m, s.dimension) for i, m, s in parse_score_records(existing, path))
            log.info("%s: resuming with %d scores already recorded", path, len(done))
        backend = run.config.backend(judge_id)
        count = 0
        for instance_id, model, text, context in subjects:
            todo = [d for d in dims if (instance_id, model, d) not in done]
            if not todo:
                continue
            if not text.strip():
                log.warning("%s/%s: empty summary, not judged", instance_id, model)
                continue
            scores = yield evaluate_summary(
                text,
                context,
                todo,
                judge_id,
                evaluation.params,
                threshold=evaluation.threshold,
                templates=run.templates,
                max_failure_fraction=backend.max_failure_fraction,
            )
            yield append_records(path, [score_record(instance_id, model, scores[d]) for d in todo])
            count += len(todo)
        judged[judge_id] = count
    yield emit(
        run,
        "\n".join("%s: %d new scores" % item for item in judged.items()),
        {"target": target, "dimensions": dims, "new_scores": judged},
    )
    return judged


def group_scores(records):
    """``{model: [{dimension: DimensionScore}]}``, one mapping per instance."""
    grouped = OrderedDict()
    for instance_id, model, score in records:
        grouped.setdefault(model, OrderedDict()).setdefault(instance_id, {})[score.dimension] = score
    return dict((model, list(by_instance.values())) for model, by_instance in grouped.items())


@do
def report(run, args=None):
    texts = []
    obj = OrderedDict()
    for judge_id in run.config.evaluation.judges:
        for target in TARGETS:
            path = scores_path(run, judge_id, target)
            text = yield read_text(path, missing_ok=True)
            if text is None:
                continue
            records = parse_score_records(text, path)
            if not records:
                continue
            matrix = aggregate_matrix(group_scores(records))
            title = "Judge %s, %s summaries" % (judge_id, target.upper())
            texts.append(title + "\n\n" + render_matrix(matrix))
            obj["%s/%s" % (judge_id, target)] = matrix.to_dict()
    if not texts:
        raise MissingArtifactError("no judge scores in %s; run judge first" % (run.path("judge"),))
    yield write_report(run, "report", "\n".join(texts), obj)
    return obj


@do
def load_run_annotations(run):
    metaeval = run.config.metaeval
    if not metaeval.annotations:
        raise ConfigError("[metaeval] annotations is not set")
    paths = [metaeval.annotations] + ([metaeval.round2] if metaeval.round2 else [])
    annotations = yield load_annotations(*paths)
    return annotations


def human_means(ratings):
    """``{(query_id, summary_id, dimension): mean rating over raters}``."""
    return dict(
        (item, sum(by_rater.values()) / len(by_rater)) for item, by_rater in ratings.scores().items()
    )


@do
def meta_eval(run, args=None):
    metaeval = run.config.metaeval
    annotations = yield load_run_annotations(run)
    human = human_means(annotations.for_round(2, metaeval.discrepancy_threshold))
    dims = [d for d in CANONICAL_ORDER if any(k[2] == d for k in human)]
    results = {}
    for judge_id in run.config.evaluation.judges:
        path = scores_path(run, judge_id, "ces")
        text = yield read_text(path, missing_ok=True)
        if text is None:
            raise MissingArtifactError("no judge scores at %s; run judge first" % (path,))
        judged = dict(((i, m, s.dimension), s.o) for i, m, s in parse_score_records(text, path))
        for dimension in dims:
            metric_a = dict(((q, s), v) for (q, s, d), v in human.items() if d == dimension)
            missing = [k for k in metric_a if k + (dimension,) not in judged]
            if missing:
                raise MissingArtifactError(
                    "judge %s has no %s score for %d annotated summaries (first: %s/%s)"
                    % (judge_id, dimension, len(missing), missing[0][0], missing[0][1])
                )
            metric_b = dict((k, judged[k + (dimension,)]) for k in metric_a)
            results[judge_id, dimension] = summary_level_corr(
                metric_a, metric_b, iterations=metaeval.iterations or None, seed=run.config.seed
            )
    codes = dict((d, get_dimension(d).code) for d in dims)
    text = render_correlation_table(results, run.config.evaluation.judges, dims, codes)
    obj = OrderedDict(
        (judge_id, OrderedDict((d, results[judge_id, d].to_dict()) for d in dims))
        for judge_id in run.config.evaluation.judges
    )
    yield write_report(run, "meta_eval", text, obj)
    return results


def _codes(dimensions):
    codes = {}
    for d in dimensions:
        try:
            codes[d] = get_dimension(d).code
        except UnknownDimensionError:
            codes[d] = d
    return codes


@do
def agreement(run, args=None):
    metaeval = run.config.metaeval
    annotations = yield load_run_annotations(run)
    threshold = metaeval.discrepancy_threshold
    dims = annotations.dimensions
    codes = _codes(dims)
    alphas = agreement_report(annotations, dims, difference=metaeval.difference, threshold=threshold)
    tables = OrderedDict((r, rater_tables(annotations, r, dims, threshold)) for r in (1, 2))
    distribution = rating_distribution(annotations, 1, threshold)
    text = "\n".join(
        [render_agreement(alphas, codes)]
        + [
            "Rater correlations, round %d\n\n%s" % (r, render_rater_tables(t, codes))
            for r, t in tables.items()
        ]
        + ["Rating distribution, round 1\n\n" + render_rating_distribution(distribution, codes)]
    )
    obj = OrderedDict(
        [
            ("alpha", alphas.to_dict()),
            ("rater_tables", OrderedDict(("round%d" % r, t.to_dict()) for r, t in tables.items())),
            ("distribution", distribution),
        ]
    )
    yield write_report(run, "agreement", text, obj)
    return alphas


@do
def flag_rounds(run, args=None):
    annotations = yield load_run_annotations(run)
    flagged, incomplete = flag_discrepancies(
        annotations.round_view(1), run.config.metaeval.discrepancy_threshold
    )

    def rows(items):
        return [
            OrderedDict([("query_id", q), ("summary_id", s), ("dimension", d)]) for q, s, d in items
        ]

    yield write_text(run.path("reports", "flags.jsonl"), jsonl(run.meta, rows(flagged)))
    if incomplete:
        yield write_text(run.path("reports", "incomplete.jsonl"), jsonl(run.meta, rows(incomplete)))
    yield emit(
        run,
        "%d items flagged for round 2, %d incomplete" % (len(flagged), len(incomplete)),
        {"flagged": rows(flagged), "incomplete": rows(incomplete)},
    )
    return flagged, incomplete


@do
def bench(run, args=None):
    settings = run.config.bench
    dataset = yield load_run_dataset(run)
    store = yield load_mos_store(run)
    iterations = getattr(args, "iterations", None) or settings.iterations
    config = BenchConfig(
        query_ids=settings.queries or [i.query_id for i in dataset.instances],
        backend_id=settings.backend,
        params=run.config.generation.params,
        iterations=iterations,
        mos_store=store,
    )
    result = yield run_bench(
        config,
        dataset,
        run.path("bench", "timings.jsonl"),
        marker_path=run.path("bench", "RESUME"),
        templates=run.templates,
        meta=run.meta,
    )
    yield write_report(run, "bench", render_report(result), result.to_dict())
    return result


COMMANDS = OrderedDict(
    [
        ("ingest", ingest),
        ("stats", stats),
        ("gen-mos", gen_mos),
        ("gen-ces", gen_ces),
        ("check-format", check_format_cmd),
        ("judge", judge),
        ("meta-eval", meta_eval),
        ("agreement", agreement),
        ("flag-rounds", flag_rounds),
        ("bench", bench),
        ("report", report),
    ]
)
