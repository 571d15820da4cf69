"""Unified diff parsing, rendering, comment anchoring, and line matching.

The parser accepts the GNU/git dialect (``diff --git`` headers, rename
headers, ``/dev/null`` sides, count-omitted hunk headers, ``\\ No newline``
markers, binary placeholders). Rendering emits a canonical subset of that
dialect: ``index``/mode/similarity lines are not preserved, everything else
round-trips byte-identically.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from .model import CodeChange, DiffLine, FileDiff, Hunk, ReviewComment

DEFAULT_LOCATION_WINDOW = 10

_HUNK_RE = re.compile(
    r"^@@ -(?P<os>\d+)(?:,(?P<oc>\d+))? \+(?P<ns>\d+)(?:,(?P<nc>\d+))? @@(?: (?P<section>.*))?$"
)
_GIT_HEADER_RE = re.compile(r"^diff --git a/(?P<a>.*) b/(?P<b>.*)$")
_BINARY_RE = re.compile(r"^Binary files (?P<a>.*) and (?P<b>.*) differ$")

# Header lines that carry no line-level information; parsed past, not kept.
_SKIPPED_HEADERS = (
    "index ",
    "old mode ",
    "new mode ",
    "new file mode ",
    "deleted file mode ",
    "similarity index ",
    "dissimilarity index ",
    "copy from ",
    "copy to ",
)

_NO_NEWLINE = "\\ No newline at end of file"


class DiffParseError(ValueError):
    """Structured parse failure: reason plus 1-based input line number."""

    def __init__(self, reason: str, line_no: int):
        super().__init__(f"{reason} (input line {line_no})")
        self.reason = reason
        self.line_no = line_no


def _strip_prefix(path: str) -> Optional[str]:
    if path == "/dev/null":
        return None
    if path.startswith(("a/", "b/")):
        return path[2:]
    return path


@dataclass
class _FileBuilder:
    old_path: Optional[str] = None
    new_path: Optional[str] = None
    git_a: Optional[str] = None
    git_b: Optional[str] = None
    is_rename: bool = False
    is_binary: bool = False
    saw_minus: bool = False
    saw_plus: bool = False
    hunks: Optional[list[Hunk]] = None

    def build(self) -> FileDiff:
        old = self.old_path if self.saw_minus else self.git_a
        new = self.new_path if self.saw_plus else self.git_b
        if self.is_rename:
            # rename from/to are authoritative when ---/+++ are absent
            old = self.old_path if self.old_path is not None else old
            new = self.new_path if self.new_path is not None else new
        return FileDiff(
            old_path=old,
            new_path=new,
            hunks=tuple(self.hunks or ()),
            is_rename=self.is_rename,
            is_binary=self.is_binary,
        )


def parse_unified_diff(text: str) -> CodeChange:
    """Parse unified diff text into a CodeChange.

    Raises DiffParseError naming the offending input line on malformed
    headers or hunks whose line counts do not match their header.
    """
    files: list[FileDiff] = []
    cur: Optional[_FileBuilder] = None
    lines = text.split("\n")
    # A trailing newline produces one empty trailing element; drop it so the
    # loop sees only real lines.
    if lines and lines[-1] == "":
        lines.pop()

    i = 0
    n = len(lines)

    def flush() -> None:
        nonlocal cur
        if cur is not None:
            files.append(cur.build())
            cur = None

    while i < n:
        line = lines[i]
        no = i + 1
        if line.startswith("diff --git "):
            flush()
            m = _GIT_HEADER_RE.match(line)
            if not m:
                raise DiffParseError("malformed-header: bad diff --git line", no)
            cur = _FileBuilder(git_a=m.group("a"), git_b=m.group("b"), hunks=[])
            i += 1
        elif line.startswith("rename from "):
            if cur is None:
                raise DiffParseError("malformed-header: rename outside file entry", no)
            cur.is_rename = True
            cur.old_path = line[len("rename from "):]
            i += 1
        elif line.startswith("rename to "):
            if cur is None:
                raise DiffParseError("malformed-header: rename outside file entry", no)
            cur.is_rename = True
            cur.new_path = line[len("rename to "):]
            i += 1
        elif line.startswith("--- "):
            path = _strip_prefix(line[4:])
            # a "---" that cannot belong to the open entry starts a new one
            starts_new = (
                cur is None
                or cur.saw_minus
                or cur.is_binary
                or (cur.is_rename and path != cur.old_path)
                or (
                    not cur.is_rename
                    and cur.git_a is not None
                    and path is not None
                    and path not in (cur.git_a, cur.git_b)
                )
            )
            if starts_new:
                flush()
                cur = _FileBuilder(hunks=[])
            cur.old_path = path
            cur.saw_minus = True
            i += 1
            if i >= n or not lines[i].startswith("+++ "):
                raise DiffParseError("malformed-header: missing +++ after ---", no + 1)
            cur.new_path = _strip_prefix(lines[i][4:])
            cur.saw_plus = True
            i += 1
        elif line.startswith("@@"):
            if cur is None or not (cur.saw_minus and cur.saw_plus):
                raise DiffParseError("malformed-header: hunk before file header", no)
            m = _HUNK_RE.match(line)
            if not m:
                raise DiffParseError("malformed-header: bad hunk header", no)
            old_start = int(m.group("os"))
            old_count = int(m.group("oc")) if m.group("oc") is not None else 1
            new_start = int(m.group("ns"))
            new_count = int(m.group("nc")) if m.group("nc") is not None else 1
            section = m.group("section") or ""
            i += 1
            hunk_lines: list[DiffLine] = []
            remaining_old = old_count
            remaining_new = new_count
            while i < n and (remaining_old > 0 or remaining_new > 0):
                body = lines[i]
                if body.startswith("+"):
                    kind, text_part = "added", body[1:]
                    remaining_new -= 1
                elif body.startswith("-"):
                    kind, text_part = "removed", body[1:]
                    remaining_old -= 1
                elif body.startswith(" ") or body == "":
                    # tolerate context lines whose leading space was stripped
                    kind, text_part = "context", body[1:] if body else ""
                    remaining_old -= 1
                    remaining_new -= 1
                elif body.startswith("\\"):
                    if hunk_lines:
                        hunk_lines[-1] = DiffLine(
                            hunk_lines[-1].kind, hunk_lines[-1].text, no_newline=True
                        )
                    i += 1
                    continue
                else:
                    raise DiffParseError("inconsistent-hunk-counts: hunk ended early", i + 1)
                if remaining_old < 0 or remaining_new < 0:
                    raise DiffParseError("inconsistent-hunk-counts: too many lines", i + 1)
                hunk_lines.append(DiffLine(kind, text_part))
                i += 1
            if remaining_old > 0 or remaining_new > 0:
                raise DiffParseError("inconsistent-hunk-counts: truncated hunk", i)
            # trailing no-newline marker after the last hunk line
            if i < n and lines[i].startswith("\\"):
                if hunk_lines:
                    hunk_lines[-1] = DiffLine(
                        hunk_lines[-1].kind, hunk_lines[-1].text, no_newline=True
                    )
                i += 1
            assert cur.hunks is not None
            cur.hunks.append(
                Hunk(old_start, old_count, new_start, new_count, tuple(hunk_lines), section)
            )
        elif _BINARY_RE.match(line):
            m = _BINARY_RE.match(line)
            assert m is not None
            if cur is None or cur.saw_minus or cur.is_binary:
                flush()
                cur = _FileBuilder(hunks=[])
            cur.is_binary = True
            cur.old_path = _strip_prefix(m.group("a"))
            cur.new_path = _strip_prefix(m.group("b"))
            cur.saw_minus = cur.saw_plus = True
            i += 1
        elif line == "GIT binary patch":
            if cur is None:
                raise DiffParseError("malformed-header: binary patch outside file entry", no)
            cur.is_binary = True
            i += 1
            while i < n and not lines[i].startswith("diff --git "):
                i += 1
        elif line.startswith(_SKIPPED_HEADERS):
            if cur is None:
                raise DiffParseError("malformed-header: header outside file entry", no)
            i += 1
        elif line == "":
            i += 1
        else:
            raise DiffParseError(f"malformed-header: unrecognized line {line[:40]!r}", no)
    flush()
    return CodeChange(files=tuple(files))


def _format_range(start: int, count: int) -> str:
    return str(start) if count == 1 else f"{start},{count}"


_LINE_PREFIX = {"context": " ", "added": "+", "removed": "-"}


def render_unified_diff(change: CodeChange) -> str:
    """Render a CodeChange in canonical git-style unified diff form."""
    out: list[str] = []
    for fd in change.files:
        a_name = fd.old_path if fd.old_path is not None else fd.new_path
        b_name = fd.new_path if fd.new_path is not None else fd.old_path
        out.append(f"diff --git a/{a_name} b/{b_name}")
        if fd.is_rename:
            out.append(f"rename from {fd.old_path}")
            out.append(f"rename to {fd.new_path}")
        if fd.is_binary:
            a = f"a/{fd.old_path}" if fd.old_path is not None else "/dev/null"
            b = f"b/{fd.new_path}" if fd.new_path is not None else "/dev/null"
            out.append(f"Binary files {a} and {b} differ")
            continue
        if not fd.hunks:
            continue
        out.append(f"--- a/{fd.old_path}" if fd.old_path is not None else "--- /dev/null")
        out.append(f"+++ b/{fd.new_path}" if fd.new_path is not None else "+++ /dev/null")
        for hunk in fd.hunks:
            header = (
                f"@@ -{_format_range(hunk.old_start, hunk.old_count)}"
                f" +{_format_range(hunk.new_start, hunk.new_count)} @@"
            )
            if hunk.section:
                header += f" {hunk.section}"
            out.append(header)
            for ln in hunk.lines:
                out.append(_LINE_PREFIX[ln.kind] + ln.text)
                if ln.no_newline:
                    out.append(_NO_NEWLINE)
    if not out:
        return ""
    return "\n".join(out) + "\n"


@dataclass(frozen=True, slots=True)
class LineAnchor:
    """A (file, new-file line) position a comment points at."""

    file_path: str
    line: int

    def __post_init__(self) -> None:
        if self.line < 1:
            raise ValueError("anchor line must be >= 1")


def anchor_in_diff(anchor: LineAnchor, change: CodeChange) -> bool:
    """True iff the anchor lands inside some hunk's new-line range."""
    for fd in change.files:
        if fd.new_path != anchor.file_path:
            continue
        for hunk in fd.hunks:
            if anchor.line in hunk.new_range:
                return True
    return False


def nearest_new_line(change: CodeChange, file_path: str, line: int) -> Optional[int]:
    """Nearest in-diff new-file line for the file, or None if it has none.

    Used to re-anchor comments aimed at purely deleted code onto the nearest
    surviving new-side line of the same file's hunks.
    """
    if anchor_in_diff(LineAnchor(file_path, max(line, 1)), change):
        return line
    candidates: list[int] = []
    for fd in change.files:
        if fd.new_path != file_path:
            continue
        for hunk in fd.hunks:
            if hunk.new_count:
                candidates.extend((hunk.new_start, hunk.new_start + hunk.new_count - 1))
    if not candidates:
        return None
    return min(candidates, key=lambda c: (abs(c - line), c))


def location_match(
    a: ReviewComment, b: ReviewComment, window: int = DEFAULT_LOCATION_WINDOW
) -> bool:
    """Same file path (byte-compared) and within +/- window lines."""
    return a.file_path == b.file_path and abs(a.line - b.line) <= window


def removed_old_lines(fd: FileDiff) -> list[int]:
    """Old-file line numbers removed (or replaced) by this file diff."""
    removed: list[int] = []
    for hunk in fd.hunks:
        old_no = hunk.old_start
        for ln in hunk.lines:
            if ln.kind == "removed":
                removed.append(old_no)
                old_no += 1
            elif ln.kind == "context":
                old_no += 1
    return removed


def lines_touched(commit_diff: CodeChange, anchor: LineAnchor, window: int = 0) -> bool:
    """True iff the commit removes/replaces an old line near the anchor.

    The commit diff must be expressed against the same file version the
    anchor refers to. Pure insertions never touch the anchored line.
    """
    for fd in commit_diff.files:
        if fd.old_path != anchor.file_path:
            continue
        for old_no in removed_old_lines(fd):
            if abs(old_no - anchor.line) <= window:
                return True
    return False


def remap_line(fd: FileDiff, line: int) -> Optional[int]:
    """Map an old-file line number through this file diff to its new position.

    Returns None when the line itself was removed. The file diff must target
    the file version the line number refers to.
    """
    delta = 0
    for hunk in fd.hunks:
        old_end = hunk.old_start + hunk.old_count
        if hunk.old_count and old_end <= line:
            delta += hunk.new_count - hunk.old_count
            continue
        if hunk.old_count == 0 and hunk.old_start < line:
            # pure insertion above the line ("@@ -5,0 +6,2 @@" style)
            delta += hunk.new_count
            continue
        if hunk.old_count and hunk.old_start <= line < old_end:
            old_no = hunk.old_start
            new_no = hunk.new_start
            for ln in hunk.lines:
                if ln.kind == "removed":
                    if old_no == line:
                        return None
                    old_no += 1
                elif ln.kind == "added":
                    new_no += 1
                else:
                    if old_no == line:
                        return new_no
                    old_no += 1
                    new_no += 1
            return None  # unreachable for count-consistent hunks
        break
    return line + delta
