import json
import os

import pytest

from ._test_utils import instance_dict
from .cli import EXIT_BACKEND, EXIT_INVALID, EXIT_OK, build_parser, default_run_id, main
from .config import parse_config

CONFIG = """\
[run]
dataset = queries.jsonl
output_dir = out
seed = 7
workers = 4

[backend:mock]
kind = mock
base_latency_ms = 200
per_input_token_ms = 0.5
realtime = no

[metaeval]
annotations = ratings.jsonl
iterations = 200

[bench]
iterations = 2
"""

#: ``{rater: {query_id: (score of the MOS-based summary, score of the raw-data one)}}``
RATINGS = {
    "r1": {"q1": (4, 2), "q2": (4, 3), "q3": (5, 2)},
    "r2": {"q1": (5, 2), "q2": (4, 2), "q3": (4, 3)},
    "r3": {"q1": (3, 4), "q2": (4, 2), "q3": (5, 3)},
}


def ratings_jsonl(dimension="clarity"):
    lines = []
    for rater, by_query in sorted(RATINGS.items()):
        for query_id, scores in sorted(by_query.items()):
            for summary_id, score in zip(("mock", "mock-dia"), scores):
                record = {
                    "rater_id": rater,
                    "query_id": query_id,
                    "summary_id": summary_id,
                    "dimension": dimension,
                    "round": 1,
                    "score": score,
                }
                lines.append(json.dumps(record))
    return "\n".join(lines) + "\n"


@pytest.fixture
def workspace(tmpdir):
    tmpdir.join("queries.jsonl").write(
        "".join(json.dumps(instance_dict("q%d" % (i,))) + "\n" for i in (1, 2, 3))
    )
    tmpdir.join("ratings.jsonl").write(ratings_jsonl())
    tmpdir.join("run.ini").write(CONFIG)
    return tmpdir


PIPELINE = [
    ["ingest"],
    ["stats"],
    ["gen-mos"],
    ["gen-ces", "--mode", "mos"],
    ["gen-ces", "--mode", "dia"],
    ["check-format"],
    ["judge"],
    ["judge", "--target", "mos", "--dims", "fluency,coherence"],
    ["report"],
    ["flag-rounds"],
    ["agreement"],
    ["meta-eval"],
    ["bench"],
]


def qfces(workspace, *argv, **kwargs):
    out = kwargs.get("out", "out")
    run_id = kwargs.get("run_id", "run")
    return main(
        ["-c", str(workspace.join("run.ini")), "--out", str(workspace.join(out)), "--run-id", run_id]
        + list(argv)
    )


def tree(root):
    """``{relative path: bytes}`` of every file under ``root``."""
    out = {}
    for dirpath, _, filenames in os.walk(root):
        for name in filenames:
            path = os.path.join(dirpath, name)
            with open(path, "rb") as f:
                out[os.path.relpath(path, root)] = f.read()
    return out


def test_full_pipeline(workspace):
    """Every command runs against one run directory and leaves its outputs there."""
    for argv in PIPELINE:
        assert qfces(workspace, *argv) == EXIT_OK, argv
    run_dir = workspace.join("out", "run")
    files = set(tree(str(run_dir)))
    assert {
        "dataset.jsonl",
        os.path.join("mos", "mock.jsonl"),
        os.path.join("ces", "mock.jsonl"),
        os.path.join("ces", "mock-dia.jsonl"),
        os.path.join("judge", "mock", "ces_scores.jsonl"),
        os.path.join("judge", "mock", "mos_scores.jsonl"),
        os.path.join("bench", "timings.jsonl"),
        os.path.join("reports", "format.jsonl"),
        os.path.join("reports", "flags.jsonl"),
    } <= files
    for name in ("stats", "format", "report", "agreement", "meta_eval", "bench"):
        text = run_dir.join("reports", name + ".txt").read()
        config_hash = parse_config(CONFIG).config_hash
        assert text.endswith("config_hash=%s seed=7\n" % (config_hash,)), name
        obj = json.loads(run_dir.join("reports", name + ".json").read())
        assert obj["_meta"] == {"config_hash": config_hash, "seed": 7}, name
    assert not run_dir.join("bench", "RESUME").exists()
    first = json.loads(run_dir.join("ces", "mock.jsonl").read().splitlines()[0])
    assert first == {"_meta": {"config_hash": parse_config(CONFIG).config_hash, "seed": 7}}


def test_rerun_is_a_no_op(workspace):
    """Outputs are write-once; regenerating identical content succeeds."""
    for argv in PIPELINE[:4]:
        assert qfces(workspace, *argv) == EXIT_OK
    before = tree(str(workspace.join("out")))
    for argv in PIPELINE[:4]:
        assert qfces(workspace, *argv) == EXIT_OK
    assert tree(str(workspace.join("out"))) == before


def test_deterministic(workspace):
    """The same configuration and run id produce byte-identical run directories."""
    for out in ("first", "second"):
        for argv in PIPELINE:
            assert qfces(workspace, *argv, out=out) == EXIT_OK, argv
    first = tree(str(workspace.join("first")))
    assert first
    assert first == tree(str(workspace.join("second")))


def test_missing_store(workspace, capsys):
    """Generating from opinion summaries needs gen-mos first."""
    assert qfces(workspace, "ingest") == EXIT_OK
    capsys.readouterr()
    assert qfces(workspace, "gen-ces", "--mode", "mos") == EXIT_INVALID
    err = capsys.readouterr().err
    assert "missing M-OS store" in err
    assert os.path.join("mos", "mock.jsonl") in err


def test_missing_config(tmpdir, capsys):
    assert main(["-c", str(tmpdir.join("nope.ini")), "stats"]) == EXIT_INVALID
    assert capsys.readouterr().err.startswith("qfces: error: cannot read config")


def test_malformed_dataset(workspace):
    workspace.join("queries.jsonl").write('{"query_id": "q1",\n')
    assert qfces(workspace, "ingest") == EXIT_INVALID


def test_backend_failure(workspace, monkeypatch, capsys):
    """A backend that cannot authenticate fails the command with exit code 2."""
    monkeypatch.delenv("QFCES_TEST_TOKEN", raising=False)
    workspace.join("run.ini").write(
        CONFIG.replace(
            "[metaeval]",
            "[backend:remote]\nkind = http\nendpoint = http://llm.test/v1\n"
            "auth_env = QFCES_TEST_TOKEN\n\n[generation]\nmos_backend = remote\n\n[metaeval]",
        )
    )
    assert qfces(workspace, "gen-mos") == EXIT_BACKEND
    assert "QFCES_TEST_TOKEN is not set" in capsys.readouterr().err


def test_json_output(workspace, capsys):
    assert qfces(workspace, "--json", "ingest") == EXIT_OK
    obj = json.loads(capsys.readouterr().out)
    assert (obj["instances"], obj["products"], obj["dropped"]) == (3, 9, 0)
    assert obj["_meta"]["seed"] == 7


def test_parser():
    parser = build_parser()
    args = parser.parse_args(["-c", "run.ini", "-vv", "judge", "--dims", "clarity, fluency"])
    assert args.dims == ["clarity", "fluency"]
    assert args.target == "ces"
    assert args.verbose == 4
    assert parser.parse_args(["-c", "run.ini", "-q", "stats"]).verbose == 1
    with pytest.raises(SystemExit):
        parser.parse_args(["-c", "run.ini", "gen-ces"])


def test_default_run_id():
    config = parse_config(CONFIG)
    assert default_run_id(config, now=0) == "19700101T000000-%s" % (config.config_hash,)
