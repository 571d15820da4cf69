from __future__ import annotations

import sys
from datetime import datetime, timezone
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from reviewflow.model import CodeChange, DiffLine, FileDiff, Hunk, PullRequestContext

FIXTURES = Path(__file__).parent / "fixtures"


def simple_change(path: str = "src/app.py") -> CodeChange:
    """One file, one hunk: two context lines around one added line."""
    hunk = Hunk(
        old_start=1,
        old_count=2,
        new_start=1,
        new_count=3,
        lines=(
            DiffLine("context", "def main():"),
            DiffLine("added", "    check_inputs()"),
            DiffLine("context", "    run()"),
        ),
    )
    return CodeChange((FileDiff(path, path, (hunk,)),))


def make_context(**overrides) -> PullRequestContext:
    defaults = dict(
        pr_id="pr-1",
        title="ABC-123 fix null check",
        description="Adds an input check before running.",
        issue_refs=(),
        change=simple_change(),
        source_commit="c0ffee1",
        created_at=datetime(2025, 3, 1, 12, 0, tzinfo=timezone.utc),
        merged_at=None,
    )
    defaults.update(overrides)
    return PullRequestContext(**defaults)
