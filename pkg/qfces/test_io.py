import os
import shutil
import tempfile

from testtools import TestCase
from testtools.matchers import raises

from effect import Effect, sync_perform

from .io import (
    AppendLines,
    Display,
    MalformedRecordError,
    OutputExistsError,
    RemoveFile,
    ReplaceText,
    append_records,
    dumps_json,
    file_dispatcher,
    iter_json_lines,
    read_text,
    write_json,
    write_text,
)


def test_perform_display_print(capsys):
    """The file dispatcher prints Display intents."""
    assert sync_perform(file_dispatcher, Effect(Display("foo"))) is None
    out, err = capsys.readouterr()
    assert out == "foo\n"


def test_read_missing_ok(tmpdir):
    path = str(tmpdir.join("nothing.txt"))
    assert sync_perform(file_dispatcher, read_text(path, missing_ok=True)) is None


class WriteOnceTests(TestCase):
    def setUp(self):
        super(WriteOnceTests, self).setUp()
        self.dir = tempfile.mkdtemp()
        self.addCleanup(shutil.rmtree, self.dir)

    def test_creates_parents(self):
        """Writing creates missing parent directories."""
        path = os.path.join(self.dir, "a", "b", "out.txt")
        sync_perform(file_dispatcher, write_text(path, "hello\n"))
        self.assertEqual(sync_perform(file_dispatcher, read_text(path)), "hello\n")

    def test_identical_rewrite_is_noop(self):
        """Rewriting the same content succeeds."""
        path = os.path.join(self.dir, "out.txt")
        sync_perform(file_dispatcher, write_text(path, "same"))
        self.assertEqual(sync_perform(file_dispatcher, write_text(path, "same")), path)

    def test_different_rewrite_fails(self):
        """Outputs are write-once."""
        path = os.path.join(self.dir, "out.txt")
        sync_perform(file_dispatcher, write_text(path, "first"))
        self.assertThat(
            lambda: sync_perform(file_dispatcher, write_text(path, "second")),
            raises(OutputExistsError(
                "%s already exists with different content; outputs are write-once" % (path,)
            )),
        )
        with open(path) as f:
            self.assertEqual(f.read(), "first")

    def test_write_json_is_canonical(self):
        """JSON outputs have sorted keys, whatever the insertion order."""
        a = os.path.join(self.dir, "a.json")
        b = os.path.join(self.dir, "b.json")
        sync_perform(file_dispatcher, write_json(a, {"x": 1, "a": [1, 2]}))
        sync_perform(file_dispatcher, write_json(b, {"a": [1, 2], "x": 1}))
        with open(a) as fa, open(b) as fb:
            self.assertEqual(fa.read(), fb.read())

    def test_append_and_replace_and_remove(self):
        path = os.path.join(self.dir, "log.jsonl")
        sync_perform(file_dispatcher, append_records(path, [{"a": 1}]))
        sync_perform(file_dispatcher, Effect(AppendLines(path=path, lines=["{\"a\":2}"])))
        self.assertEqual(
            [obj for _, obj in iter_json_lines(sync_perform(file_dispatcher, read_text(path)))],
            [{"a": 1}, {"a": 2}],
        )
        marker = os.path.join(self.dir, "RESUME")
        sync_perform(file_dispatcher, Effect(ReplaceText(path=marker, content="one")))
        sync_perform(file_dispatcher, Effect(ReplaceText(path=marker, content="two")))
        self.assertEqual(sync_perform(file_dispatcher, read_text(marker)), "two")
        sync_perform(file_dispatcher, Effect(RemoveFile(path=marker)))
        self.assertFalse(os.path.exists(marker))
        # removing twice is fine
        sync_perform(file_dispatcher, Effect(RemoveFile(path=marker)))


def test_iter_json_lines_skips_meta_and_blank():
    text = '{"_meta": {"seed": 1}}\n\n{"a": 1}\n'
    assert list(iter_json_lines(text)) == [(3, {"a": 1})]


def test_iter_json_lines_names_line():
    try:
        list(iter_json_lines('{"a": 1}\n{oops\n', "data.jsonl"))
    except MalformedRecordError as e:
        assert str(e).startswith("data.jsonl:2: malformed record")
    else:
        raise AssertionError("no error")


def test_dumps_json_compact_and_sorted():
    assert dumps_json({"b": 1, "a": "é"}) == '{"a":"é","b":1}'
