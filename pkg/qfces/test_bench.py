import json
import os
import shutil
import tempfile

from testtools import TestCase
from testtools.matchers import raises

from effect import ComposedDispatcher, base_dispatcher, sync_perform

from ._errors import StatisticsError
from ._test_utils import make_dataset, make_instance, make_product
from .bench import (
    BenchConfig,
    Timing,
    bench_prompts,
    build_report,
    compare_means,
    parse_timings,
    render_report,
    run_bench,
    timing_to_dict,
)
from .catalog import Dataset, Review
from .gateway import NO_RETRY, BackendAuthError, Gateway
from .io import MissingArtifactError, file_dispatcher
from .mock import MockBackend, MockSpec
from .promptkit import DIA, MOS

MOS_STORE = {
    "q1-a": "Owners praise the battery.",
    "q1-b": "Owners praise the price.",
    "q1-c": "Owners praise the camera.",
}


class CountingBackend(MockBackend):
    """A mock that fails every call after the first ``fail_after``."""

    def __init__(self, fail_after=None):
        spec = MockSpec(base_latency_ms=100.0, per_input_token_ms=1.0, realtime=False)
        MockBackend.__init__(self, "mock", spec)
        self.calls = 0
        self.fail_after = fail_after

    def call(self, request, sample_index=0):
        if self.fail_after is not None and self.calls >= self.fail_after:
            raise BackendAuthError("revoked")
        self.calls += 1
        return MockBackend.call(self, request, sample_index)


def dispatcher(backend):
    return ComposedDispatcher([Gateway([backend]).dispatcher, file_dispatcher, base_dispatcher])


def bench_config(**kwargs):
    fields = dict(query_ids=["q1"], backend_id="mock", iterations=3, mos_store=MOS_STORE)
    fields.update(kwargs)
    return BenchConfig(**fields)


def timings(mode, *latencies):
    return [Timing("q1", mode, i, latency) for i, latency in enumerate(latencies)]


class ReportTests(TestCase):
    def test_compare_means(self):
        self.assertEqual(compare_means(50.0, 100.0), 50.0)
        self.assertEqual(compare_means(120.0, 100.0), -20.0)
        self.assertRaises(StatisticsError, compare_means, 50.0, 0.0)

    def test_build_report(self):
        report = build_report(
            timings(DIA, 100.0, 110.0, 120.0) + timings(MOS, 40.0, 60.0), bench_config()
        )
        self.assertEqual([(r.mode, r.n) for r in report.rows], [(MOS, 2), (DIA, 3)])
        dia = report.rows[1]
        self.assertEqual((dia.mean_ms, dia.min_ms, dia.max_ms), (110.0, 100.0, 120.0))
        self.assertAlmostEqual(dia.stddev_ms, 10.0)
        self.assertEqual(report.mode_means, {MOS: 50.0, DIA: 110.0})
        self.assertAlmostEqual(report.reduction_percent, 100.0 * 60.0 / 110.0)

    def test_single_mode(self):
        """Without both modes there is no reduction, and one timing has no spread."""
        report = build_report(timings(DIA, 100.0) + timings(MOS, 5.0), bench_config(modes=[DIA]))
        self.assertEqual(report.rows[0].stddev_ms, 0.0)
        self.assertEqual(report.mode_means, {DIA: 100.0})
        self.assertIs(report.reduction_percent, None)

    def test_render(self):
        report = build_report(timings(DIA, 100.0) + timings(MOS, 40.0), bench_config())
        text = render_report(report, footer="config_hash=abc seed=0")
        self.assertIn("Latency reduction (MOS vs DIA): 60.00%", text)
        self.assertIn("All", text)
        self.assertTrue(text.endswith("config_hash=abc seed=0\n"))

    def test_parse_timings(self):
        text = "\n".join(
            [json.dumps({"_meta": {"seed": 0}})]
            + [json.dumps(timing_to_dict(t)) for t in timings(DIA, 1.0, 2.0)]
        )
        self.assertEqual(parse_timings(text), timings(DIA, 1.0, 2.0))
        self.assertRaises(StatisticsError, parse_timings, '{"query_id": "q1"}')


class RunBenchTests(TestCase):
    def setUp(self):
        super(RunBenchTests, self).setUp()
        self.dir = tempfile.mkdtemp()
        self.addCleanup(shutil.rmtree, self.dir)
        self.log_path = os.path.join(self.dir, "timings.jsonl")
        self.marker = os.path.join(self.dir, "RESUME")

    def run_bench(self, backend, config=None):
        eff = run_bench(
            config or bench_config(),
            make_dataset(1),
            self.log_path,
            marker_path=self.marker,
            meta={"seed": 0},
            policy=NO_RETRY,
        )
        return sync_perform(dispatcher(backend), eff)

    def logged(self):
        with open(self.log_path) as f:
            return f.read()

    def test_run(self):
        """Every step is timed once and logged after a provenance header."""
        backend = CountingBackend()
        report = self.run_bench(backend)
        self.assertEqual(backend.calls, 6)
        self.assertEqual([(r.mode, r.n) for r in report.rows], [(MOS, 3), (DIA, 3)])
        self.assertGreater(report.reduction_percent, 0.0)
        lines = self.logged().splitlines()
        self.assertEqual(json.loads(lines[0]), {"_meta": {"seed": 0}})
        self.assertEqual(len(parse_timings(self.logged())), 6)
        self.assertFalse(os.path.exists(self.marker))

    def test_resume(self):
        """Steps already in the log are not timed again."""
        with open(self.log_path, "w") as f:
            for timing in timings(MOS, 1.0, 1.0):
                f.write(json.dumps(timing_to_dict(timing)) + "\n")
        backend = CountingBackend()
        report = self.run_bench(backend)
        self.assertEqual(backend.calls, 4)
        self.assertEqual(report.rows[0].min_ms, 1.0)
        self.assertEqual(len(parse_timings(self.logged())), 6)

    def test_failure_leaves_marker(self):
        """A failed completion records where to resume, and a rerun resumes there."""
        self.assertThat(
            lambda: self.run_bench(CountingBackend(fail_after=1)), raises(BackendAuthError("revoked"))
        )
        with open(self.marker) as f:
            self.assertEqual(f.read(), "query_id=q1 mode=mos iteration=1\n")
        self.assertEqual(len(parse_timings(self.logged())), 1)
        backend = CountingBackend()
        self.run_bench(backend)
        self.assertEqual(backend.calls, 5)
        self.assertFalse(os.path.exists(self.marker))

    def test_missing_opinion_summaries(self):
        config = bench_config(mos_store={"q1-a": "Fine."})
        self.assertRaises(MissingArtifactError, self.run_bench, CountingBackend(), config)
        self.assertFalse(os.path.exists(self.log_path))

    def test_unknown_query(self):
        config = bench_config(query_ids=["q9"])
        self.assertRaises(MissingArtifactError, self.run_bench, CountingBackend(), config)


def test_iterations_positive():
    try:
        bench_config(iterations=0)
    except ValueError:
        pass
    else:
        raise AssertionError("no error")


def test_reduction_follows_prompt_length():
    """
    With latency proportional to input words, the measured reduction is the
    relative difference in prompt length between the two modes.
    """
    review = Review("The battery easily lasts two full days and the screen stays readable in sunlight.", 4)
    dataset = Dataset(
        instances=[
            make_instance(
                q,
                products=[
                    make_product("%s-%s" % (q, suffix), title, reviews=[review] * 30)
                    for suffix, title in [("a", "Alpha Phone"), ("b", "Beta Phone"), ("c", "Gamma Phone")]
                ],
            )
            for q in ["q1", "q2", "q3"]
        ]
    )
    store = dict(
        ("%s-%s" % (q, suffix), "Owners like the battery and the bright screen.")
        for q in ["q1", "q2", "q3"]
        for suffix in "abc"
    )
    config = bench_config(query_ids=["q1", "q2", "q3"], iterations=50, mos_store=store)
    words = dict(
        (key, prompt.request("mock", config.params).input_token_estimate)
        for key, prompt in bench_prompts(config, dataset).items()
    )
    mos_words = [words[q, MOS] for q in config.query_ids]
    dia_words = [words[q, DIA] for q in config.query_ids]
    assert max(m / float(d) for m, d in zip(mos_words, dia_words)) <= 0.5
    predicted = 100.0 * (1 - sum(mos_words) / float(sum(dia_words)))

    backend = MockBackend("mock", MockSpec(per_input_token_ms=1.0, realtime=False))
    path = tempfile.mkdtemp()
    try:
        eff = run_bench(config, dataset, os.path.join(path, "timings.jsonl"), policy=NO_RETRY)
        report = sync_perform(dispatcher(backend), eff)
    finally:
        shutil.rmtree(path)
    assert [r.n for r in report.rows] == [50] * 6
    assert report.mode_means[MOS] < report.mode_means[DIA]
    assert abs(report.reduction_percent - predicted) <= 5.0


def test_reported_reduction():
    assert abs(compare_means(9990.0, 16550.0) - 39.64) <= 0.01
