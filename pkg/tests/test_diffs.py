from __future__ import annotations

import string

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reviewflow.diffs import (
    DiffParseError,
    LineAnchor,
    anchor_in_diff,
    lines_touched,
    location_match,
    nearest_new_line,
    parse_unified_diff,
    remap_line,
    removed_old_lines,
    render_unified_diff,
)
from reviewflow.model import CodeChange, DiffLine, FileDiff, Hunk, ReviewComment, validate

from conftest import FIXTURES, simple_change

SIMPLE = """\
--- a/greet.txt
+++ b/greet.txt
@@ -1,2 +1,3 @@
 hello
+brave new
 world
"""


def test_parse_empty_input():
    assert parse_unified_diff("") == CodeChange(())


def test_parse_simple_hunk_counts():
    change = parse_unified_diff(SIMPLE)
    assert len(change.files) == 1
    fd = change.files[0]
    assert fd.old_path == "greet.txt" and fd.new_path == "greet.txt"
    hunk = fd.hunks[0]
    assert (hunk.old_count, hunk.new_count) == (2, 3)
    assert [ln.kind for ln in hunk.lines] == ["context", "added", "context"]
    assert validate(change) == []


def test_parse_rejects_truncated_hunk():
    bad = "--- a/f\n+++ b/f\n@@ -1,2 +1,3 @@\n hello\n"
    with pytest.raises(DiffParseError) as exc:
        parse_unified_diff(bad)
    assert "inconsistent-hunk-counts" in str(exc.value)


def test_parse_rejects_bad_header_with_line_number():
    with pytest.raises(DiffParseError) as exc:
        parse_unified_diff("--- a/f\n+++ b/f\n@@ broken @@\n")
    assert exc.value.line_no == 3


def test_parse_git_headers_and_rename():
    text = (
        "diff --git a/old.py b/new.py\n"
        "similarity index 97%\n"
        "rename from old.py\n"
        "rename to new.py\n"
    )
    change = parse_unified_diff(text)
    fd = change.files[0]
    assert fd.is_rename and fd.old_path == "old.py" and fd.new_path == "new.py"
    assert fd.hunks == ()


def test_parse_new_and_deleted_files():
    text = (
        "diff --git a/n.txt b/n.txt\n"
        "new file mode 100644\n"
        "--- /dev/null\n"
        "+++ b/n.txt\n"
        "@@ -0,0 +1,2 @@\n"
        "+one\n"
        "+two\n"
        "diff --git a/d.txt b/d.txt\n"
        "deleted file mode 100644\n"
        "--- a/d.txt\n"
        "+++ /dev/null\n"
        "@@ -1 +0,0 @@\n"
        "-gone\n"
    )
    change = parse_unified_diff(text)
    added, deleted = change.files
    assert added.is_added and added.old_path is None
    assert deleted.is_deleted and deleted.new_path is None
    assert validate(change) == []


def test_parse_no_newline_marker_round_trips():
    text = (
        "diff --git a/f b/f\n"
        "--- a/f\n"
        "+++ b/f\n"
        "@@ -1 +1 @@\n"
        "-old\n"
        "\\ No newline at end of file\n"
        "+new\n"
        "\\ No newline at end of file\n"
    )
    change = parse_unified_diff(text)
    assert render_unified_diff(change) == text


def test_fixture_corpus_round_trips_byte_identically():
    corpus = sorted((FIXTURES / "diffs").glob("*.diff"))
    assert len(corpus) == 50
    for path in corpus:
        text = path.read_text(encoding="utf-8")
        change = parse_unified_diff(text)
        assert validate(change) == [], path.name
        assert render_unified_diff(change) == text, path.name


# --- anchoring ---------------------------------------------------------------


def hunk_change(path="f.py", new_start=1, new_count=9):
    lines = tuple(DiffLine("added", f"line {i}") for i in range(new_count))
    return CodeChange((FileDiff(path, path, (Hunk(0, 0, new_start, new_count, lines),)),))


def test_anchor_in_diff_inside_range():
    change = hunk_change(new_start=1, new_count=9)  # range [1, 10)
    assert anchor_in_diff(LineAnchor("f.py", 5), change)
    assert not anchor_in_diff(LineAnchor("f.py", 11), change)
    assert not anchor_in_diff(LineAnchor("g.py", 5), change)


def test_nearest_new_line_snaps_to_hunk():
    change = hunk_change(new_start=10, new_count=3)  # lines 10..12
    assert nearest_new_line(change, "f.py", 11) == 11
    assert nearest_new_line(change, "f.py", 2) == 10
    assert nearest_new_line(change, "f.py", 40) == 12
    assert nearest_new_line(change, "other.py", 2) is None


def comment(file_path: str, line: int, cid: str = "c") -> ReviewComment:
    return ReviewComment(cid, "generated", file_path, line, "body")


def test_location_match_window_rule():
    assert location_match(comment("f.py", 100), comment("f.py", 105))
    assert not location_match(comment("f.py", 100), comment("f.py", 111))
    assert not location_match(comment("f.py", 100), comment("g.py", 100))


def test_location_match_exhaustive_deltas():
    for delta in range(16):
        expected = delta <= 10
        assert location_match(comment("f.py", 100), comment("f.py", 100 + delta)) == expected
        assert location_match(comment("f.py", 100 + delta), comment("f.py", 100)) == expected


@given(
    line_a=st.integers(1, 200),
    line_b=st.integers(1, 200),
    window=st.integers(0, 20),
)
def test_location_match_symmetric_reflexive(line_a, line_b, window):
    a, b = comment("f.py", line_a), comment("f.py", line_b)
    assert location_match(a, b, window) == location_match(b, a, window)
    assert location_match(a, a, window)


# --- lines_touched ------------------------------------------------------------


def edit_diff(path: str, removed_at: list[int], text_lines: dict[int, str] | None = None):
    """Single-hunk diff removing the given old lines (with 1 line context around)."""
    removed_at = sorted(removed_at)
    start = removed_at[0]
    end = removed_at[-1]
    lines = []
    old_count = 0
    for no in range(start, end + 1):
        if no in removed_at:
            lines.append(DiffLine("removed", f"old {no}"))
        else:
            lines.append(DiffLine("context", f"ctx {no}"))
        old_count += 1
    new_count = old_count - len(removed_at)
    hunk = Hunk(start, old_count, start, new_count, tuple(lines))
    return CodeChange((FileDiff(path, path, (hunk,)),))


def test_lines_touched_exact_removal():
    diff = edit_diff("f.py", [10])
    assert lines_touched(diff, LineAnchor("f.py", 10))
    assert not lines_touched(diff, LineAnchor("g.py", 10))
    assert not lines_touched(diff, LineAnchor("f.py", 11))
    assert lines_touched(diff, LineAnchor("f.py", 11), window=1)


def test_lines_touched_pure_insertion_is_false():
    # insert two lines after old line 5; anchored line 5 untouched at window=0
    hunk = Hunk(5, 0, 6, 2, (DiffLine("added", "x"), DiffLine("added", "y")))
    diff = CodeChange((FileDiff("f.py", "f.py", (hunk,)),))
    assert not lines_touched(diff, LineAnchor("f.py", 5))
    # oracle: replay the edit and compare content at the anchored line
    before = [f"line {i}" for i in range(1, 9)]
    after = before[:5] + ["x", "y"] + before[5:]
    assert before[4] == after[4]  # anchored content unchanged at its position


def test_removed_old_lines_walks_hunk_coordinates():
    text = (
        "--- a/f\n+++ b/f\n"
        "@@ -3,4 +3,3 @@\n"
        " keep\n"
        "-drop one\n"
        "-drop two\n"
        "+merged\n"
        " keep2\n"
    )
    fd = parse_unified_diff(text).files[0]
    assert removed_old_lines(fd) == [4, 5]


# --- remap_line ---------------------------------------------------------------


def test_remap_line_shifts_below_insertion():
    hunk = Hunk(5, 0, 6, 2, (DiffLine("added", "x"), DiffLine("added", "y")))
    fd = FileDiff("f.py", "f.py", (hunk,))
    assert remap_line(fd, 4) == 4
    assert remap_line(fd, 5) == 5
    assert remap_line(fd, 6) == 8


def test_remap_line_inside_hunk_context():
    text = (
        "--- a/f\n+++ b/f\n"
        "@@ -3,4 +3,4 @@\n"
        " keep\n"
        "-old\n"
        "+new\n"
        " tail\n"
        " tail2\n"
    )
    fd = parse_unified_diff(text).files[0]
    assert remap_line(fd, 3) == 3
    assert remap_line(fd, 4) is None  # removed
    assert remap_line(fd, 5) == 5
    assert remap_line(fd, 99) == 99


# --- property tests -----------------------------------------------------------

_path_alphabet = string.ascii_lowercase + string.digits + "_"


@st.composite
def code_changes(draw):
    n_files = draw(st.integers(0, 3))
    files = []
    used_paths: set[str] = set()
    for _ in range(n_files):
        path = draw(
            st.text(alphabet=_path_alphabet, min_size=1, max_size=8).filter(
                lambda p: p not in used_paths
            )
        )
        used_paths.add(path)
        n_hunks = draw(st.integers(1, 3))
        old_no = new_no = 1
        hunks = []
        for _ in range(n_hunks):
            gap = draw(st.integers(1, 5))
            old_start, new_start = old_no + gap, new_no + gap
            lines = []
            old_count = new_count = 0
            for _ in range(draw(st.integers(1, 6))):
                kind = draw(st.sampled_from(["context", "added", "removed"]))
                text = draw(st.text(alphabet=_path_alphabet + " ", max_size=10))
                lines.append(DiffLine(kind, text))
                if kind in ("context", "removed"):
                    old_count += 1
                if kind in ("context", "added"):
                    new_count += 1
            if old_count == 0 and new_count == 0:
                continue
            hunks.append(
                Hunk(
                    old_start if old_count else old_start - 1,
                    old_count,
                    new_start if new_count else new_start - 1,
                    new_count,
                    tuple(lines),
                )
            )
            old_no = old_start + old_count
            new_no = new_start + new_count
        if hunks:
            files.append(FileDiff(path, path, tuple(hunks)))
    return CodeChange(tuple(files))


@given(code_changes())
@settings(max_examples=150, deadline=None)
def test_random_change_round_trips(change):
    assert validate(change) == []
    assert parse_unified_diff(render_unified_diff(change)) == change


@given(st.text(max_size=400))
@settings(max_examples=300, deadline=None)
def test_parser_total_on_arbitrary_text(text):
    try:
        parse_unified_diff(text)
    except DiffParseError:
        pass


def test_anchor_in_diff_implies_self_location_match():
    change = simple_change()
    anchor = LineAnchor("src/app.py", 2)
    assert anchor_in_diff(anchor, change)
    a = comment("src/app.py", 2)
    for window in (0, 1, 10):
        assert location_match(a, a, window)
