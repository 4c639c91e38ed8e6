"""Intents and performers for files and console output.

Use :obj:`qfces.io.file_dispatcher` to perform these intents with the local
filesystem and standard output.
"""

import json
import os

import attr

from effect import Effect, TypeDispatcher, sync_performer

from ._errors import ValidationError


class OutputExistsError(ValidationError):
    """An output file already exists with different content."""


class MissingArtifactError(ValidationError):
    """An upstream artifact a command depends on is not there."""


class MalformedRecordError(ValidationError, ValueError):
    """A JSON-lines document has a line that is not valid JSON."""


@attr.s(frozen=True)
class Display(object):
    """Display some text to the user."""

    output = attr.ib()


@attr.s(frozen=True)
class ReadText(object):
    """
    Read a UTF-8 file.

    :param path: File to read.
    :param missing_ok: Result in None instead of failing when the file does
        not exist.
    """

    path = attr.ib()
    missing_ok = attr.ib(default=False)


@attr.s(frozen=True)
class WriteText(object):
    """
    Write a UTF-8 file once.

    Writing identical content over an existing file is a no-op; writing
    different content fails with :obj:`OutputExistsError`. Parent directories
    are created as needed.
    """

    path = attr.ib()
    content = attr.ib()


@attr.s(frozen=True)
class AppendLines(object):
    """Append lines to a log file, creating it (and its parents) if needed."""

    path = attr.ib()
    lines = attr.ib(converter=tuple)


@attr.s(frozen=True)
class ReplaceText(object):
    """Write a UTF-8 state file, replacing whatever it held."""

    path = attr.ib()
    content = attr.ib()


@attr.s(frozen=True)
class RemoveFile(object):
    """Remove a file if it exists."""

    path = attr.ib()


def read_text(path, missing_ok=False):
    return Effect(ReadText(path=path, missing_ok=missing_ok))


def write_text(path, content):
    return Effect(WriteText(path=path, content=content))


def write_json(path, obj):
    """Write ``obj`` as canonical (sorted, indented) JSON."""
    return write_text(path, dumps_json(obj, indent=2) + "\n")


def append_records(path, records):
    """Append ``records`` as JSON lines."""
    return Effect(AppendLines(path=path, lines=[dumps_json(r) for r in records]))


def dumps_json(obj, indent=None):
    separators = None if indent else (",", ":")
    return json.dumps(
        obj, sort_keys=True, indent=indent, separators=separators, ensure_ascii=False
    )


def iter_json_lines(text, source="<string>"):
    """
    Yield ``(line_number, object)`` for every non-blank line of a JSON-lines
    document. Lines carrying a ``_meta`` key are provenance headers and are
    skipped.

    :raises MalformedRecordError: naming ``source:line`` on malformed JSON.
    """
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except ValueError as e:
            raise MalformedRecordError("%s:%d: malformed record (%s)" % (source, number, e))
        if isinstance(obj, dict) and "_meta" in obj:
            continue
        yield number, obj


@sync_performer
def perform_display_print(dispatcher, intent):
    """Perform a :obj:`Display` intent by printing the output."""
    print(intent.output)


@sync_performer
def perform_read_text(dispatcher, intent):
    if intent.missing_ok and not os.path.exists(intent.path):
        return None
    with open(intent.path, encoding="utf-8") as f:
        return f.read()


@sync_performer
def perform_write_text(dispatcher, intent):
    if os.path.exists(intent.path):
        with open(intent.path, encoding="utf-8") as f:
            if f.read() == intent.content:
                return intent.path
        raise OutputExistsError(
            "%s already exists with different content; outputs are write-once"
            % (intent.path,)
        )
    _ensure_parent(intent.path)
    with open(intent.path, "w", encoding="utf-8", newline="\n") as f:
        f.write(intent.content)
    return intent.path


@sync_performer
def perform_replace_text(dispatcher, intent):
    _ensure_parent(intent.path)
    tmp = intent.path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        f.write(intent.content)
    os.replace(tmp, intent.path)
    return intent.path


@sync_performer
def perform_remove_file(dispatcher, intent):
    if os.path.exists(intent.path):
        os.remove(intent.path)


@sync_performer
def perform_append_lines(dispatcher, intent):
    _ensure_parent(intent.path)
    with open(intent.path, "a", encoding="utf-8", newline="\n") as f:
        for line in intent.lines:
            f.write(line + "\n")
    return intent.path


def _ensure_parent(path):
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)


file_dispatcher = TypeDispatcher(
    {
        Display: perform_display_print,
        ReadText: perform_read_text,
        WriteText: perform_write_text,
        AppendLines: perform_append_lines,
        ReplaceText: perform_replace_text,
        RemoveFile: perform_remove_file,
    }
)
