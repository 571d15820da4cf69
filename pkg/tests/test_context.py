from __future__ import annotations

from datetime import datetime, timezone

import pytest

from reviewflow.context import (
    ContextBudget,
    InMemoryCodeHost,
    InMemoryIssueTracker,
    InMemoryRepository,
    PullRecord,
    PullRequestNotFoundError,
    RepoUnavailableError,
    assemble,
    detect_issue_keys,
    truncate_change,
    truncate_text,
)
from reviewflow.diffs import parse_unified_diff, render_unified_diff
from reviewflow.model import IssueSummary
from reviewflow.prompts import TRUNCATION_MARKER, PromptConfig, build

CREATED = datetime(2025, 3, 1, tzinfo=timezone.utc)

DIFF = """\
diff --git a/src/app.py b/src/app.py
--- a/src/app.py
+++ b/src/app.py
@@ -1,2 +1,3 @@
 def main():
+    check_inputs()
     run()
"""


def pull(title="ABC-123 fix null check", description="See ABC-123.", branch="abc-123-fix",
         diff=DIFF):
    return PullRecord(
        pr_id="pr-1",
        title=title,
        description=description,
        source_commit="c0ffee1",
        branch=branch,
        created_at=CREATED,
        diff=diff,
    )


def tracker(**kwargs):
    return InMemoryIssueTracker(
        {"ABC-123": IssueSummary("ABC-123", "Fix the null check", "Crashes on empty input.")},
        **kwargs,
    )


def test_assemble_resolves_issue_keys_from_title():
    ctx = assemble(None, "pr-1", InMemoryCodeHost({"pr-1": pull()}), tracker())
    assert [ref.key for ref in ctx.issue_refs] == ["ABC-123"]
    assert ctx.issue_refs[0].summary == "Fix the null check"
    assert ctx.flags == ()


def test_assemble_degrades_when_tracker_unreachable():
    ctx = assemble(None, "pr-1", InMemoryCodeHost({"pr-1": pull()}), tracker(unreachable=True))
    assert ctx.issue_refs == ()
    assert any(flag.startswith("issue_fetch_failed") for flag in ctx.flags)
    assert ctx.degraded


def test_assemble_without_tracker_flags_absence():
    ctx = assemble(None, "pr-1", InMemoryCodeHost({"pr-1": pull()}), None)
    assert ctx.issue_refs == ()
    assert "issue_tracker_absent" in ctx.flags


def test_assemble_unknown_pr():
    with pytest.raises(PullRequestNotFoundError):
        assemble(None, "missing", InMemoryCodeHost({}), None)


def test_assemble_uses_repo_when_no_inline_diff():
    host = InMemoryCodeHost({"pr-1": pull(diff=None)})
    repo = InMemoryRepository({"c0ffee1": DIFF})
    ctx = assemble(repo, "pr-1", host, None)
    assert ctx.change.files[0].new_path == "src/app.py"
    with pytest.raises(RepoUnavailableError):
        assemble(None, "pr-1", host, None)


def test_assemble_never_fabricates_text():
    description = "original description text"
    ctx = assemble(
        None, "pr-1", InMemoryCodeHost({"pr-1": pull(description=description)}), tracker()
    )
    assert ctx.description == description
    assert ctx.title == "ABC-123 fix null check"
    assert ctx.issue_refs[0].description == "Crashes on empty input."


def test_assemble_deterministic():
    host = InMemoryCodeHost({"pr-1": pull()})
    a = assemble(None, "pr-1", host, tracker())
    b = assemble(None, "pr-1", host, tracker())
    assert a == b


def test_oversized_diff_truncated_under_budget_with_marker():
    # 60 files of ~200 bytes each; budget forces dropping trailing files
    blocks = []
    for i in range(60):
        blocks.append(
            f"diff --git a/f{i}.py b/f{i}.py\n"
            f"--- a/f{i}.py\n"
            f"+++ b/f{i}.py\n"
            "@@ -1,2 +1,3 @@\n"
            " alpha\n"
            f"+inserted line for file {i} padding padding padding\n"
            " omega\n"
        )
    big = "".join(blocks)
    budget = ContextBudget(max_diff_bytes=2_000)
    ctx = assemble(None, "pr-1", InMemoryCodeHost({"pr-1": pull(diff=big)}), None,
                   budget=budget)
    assert "diff_truncated" in ctx.flags
    rendered = build(ctx, PromptConfig()).code_change
    assert rendered.endswith(TRUNCATION_MARKER + "\n")
    assert len(rendered.encode("utf-8")) <= budget.max_diff_bytes
    # hunks were kept whole: the kept change still parses and validates
    from reviewflow.model import validate

    assert validate(ctx.change) == []


def test_truncate_change_drops_trailing_hunks_not_mid_hunk():
    text = (
        "diff --git a/a.py b/a.py\n--- a/a.py\n+++ b/a.py\n"
        "@@ -1 +1,2 @@\n one\n+two\n"
        "@@ -10 +11,2 @@\n ten\n+eleven\n"
        "@@ -20 +22,2 @@\n twenty\n+twentyone\n"
    )
    change = parse_unified_diff(text)
    full_len = len(render_unified_diff(change).encode())
    cut, truncated = truncate_change(change, full_len - 1)
    assert truncated
    assert len(cut.files[0].hunks) < 3
    assert render_unified_diff(cut) in text  # a prefix at hunk granularity


def test_description_budget():
    long_desc = "word " * 10_000
    ctx = assemble(
        None,
        "pr-1",
        InMemoryCodeHost({"pr-1": pull(description=long_desc)}),
        None,
        budget=ContextBudget(max_description_bytes=500),
    )
    assert "description_truncated" in ctx.flags
    assert len(ctx.description.encode("utf-8")) <= 500
    assert ctx.description.endswith(TRUNCATION_MARKER)
    prefix = ctx.description[: -len(TRUNCATION_MARKER)]
    assert long_desc.startswith(prefix)


def test_truncate_text_respects_utf8_boundaries():
    text = "é" * 400  # two bytes each
    out, truncated = truncate_text(text, 101)
    assert truncated
    assert len(out.encode("utf-8")) <= 101
    out.encode("utf-8")  # must be valid utf-8


def test_issue_key_pattern():
    assert detect_issue_keys("ABC-123 and XY9-4", "feature/ABC-123-fix") == ["ABC-123", "XY9-4"]
    assert detect_issue_keys("no keys here", "lowercase abc-123") == []


def test_binary_files_become_placeholders():
    diff = (
        "diff --git a/img.png b/img.png\n"
        "Binary files a/img.png and b/img.png differ\n" + DIFF
    )
    ctx = assemble(None, "pr-1", InMemoryCodeHost({"pr-1": pull(diff=diff)}), None)
    binary = ctx.change.files[0]
    assert binary.is_binary and binary.hunks == ()
    assert "Binary files" in render_unified_diff(ctx.change)
