"""Mine commit history to label posted comments resolved / unresolved.

A comment is resolved when a later commit on the PR branch (before merge)
removes or replaces its anchored line, within a configurable window (default
0 = the exact commented lines). The anchor is remapped through every commit
that merely shifts it; a rename or delete of the anchored file before any
touch invalidates the anchor and yields an indeterminate verdict.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date, datetime, timedelta
from typing import Optional, Sequence

from .diffs import remap_line, removed_old_lines
from .model import CodeChange, PullRequestContext, ResolutionRecord, ReviewComment


class EmptyFilterError(ValueError):
    """No records remain after origin/indeterminate filtering."""


@dataclass(frozen=True, slots=True)
class CommitChange:
    """One later commit: its id and its diff against the preceding state."""

    commit_id: str
    change: CodeChange


def track(
    pr: PullRequestContext,
    comments: Sequence[ReviewComment],
    subsequent_commits: Sequence[CommitChange],
    *,
    window: int = 0,
    observed_at: Optional[datetime] = None,
) -> list[ResolutionRecord]:
    """Label each comment against the ordered commits that followed the review.

    Human comments are tracked under the same rules as generated ones so the
    two populations stay comparable.
    """
    records = []
    for comment in comments:
        if comment.origin == "generated" and comment.state != "posted":
            raise ValueError("generated comments must be posted before tracking")
        verdict, commit_id = _track_one(comment, subsequent_commits, window)
        records.append(
            ResolutionRecord(
                comment=comment,
                pr_id=pr.pr_id,
                verdict=verdict,
                resolving_commit=commit_id,
                observed_at=observed_at,
            )
        )
    return records


def _track_one(
    comment: ReviewComment, commits: Sequence[CommitChange], window: int
) -> tuple[str, Optional[str]]:
    path = comment.file_path
    line = comment.line
    for commit in commits:
        fd = commit.change.file_for_old_path(path)
        if fd is None:
            continue
        if fd.is_rename or fd.new_path is None or fd.new_path != path:
            return "indeterminate", None
        if fd.is_binary:
            return "indeterminate", None
        removed = removed_old_lines(fd)
        if any(abs(no - line) <= window for no in removed):
            return "resolved", commit.commit_id
        mapped = remap_line(fd, line)
        if mapped is None:
            # the exact line went away even though the window check missed it
            return "resolved", commit.commit_id
        line = mapped
    return "unresolved", None


def crr(records: Sequence[ResolutionRecord], origin: Optional[str] = None) -> float:
    """Code resolution rate: resolved / (resolved + unresolved).

    Indeterminate records never count; filtering down to nothing is an error
    rather than a silent 0.
    """
    kept = [
        r
        for r in records
        if r.verdict != "indeterminate" and (origin is None or r.comment.origin == origin)
    ]
    if not kept:
        raise EmptyFilterError("no resolvable records after filtering")
    resolved = sum(1 for r in kept if r.verdict == "resolved")
    return resolved / len(kept)


def rolling_crr(
    records: Sequence[ResolutionRecord],
    *,
    window_days: int = 7,
    origin: Optional[str] = None,
) -> list[tuple[date, float]]:
    """Daily series: CRR over the records observed in [day - window + 1, day].

    Days whose window contains no resolvable records yield no point.
    """
    dated = [
        r
        for r in records
        if r.observed_at is not None
        and r.verdict != "indeterminate"
        and (origin is None or r.comment.origin == origin)
    ]
    if not dated:
        return []
    by_day: dict[date, list[ResolutionRecord]] = {}
    for record in dated:
        by_day.setdefault(record.observed_at.date(), []).append(record)
    first, last = min(by_day), max(by_day)
    series = []
    day = first
    while day <= last:
        window_records = [
            r
            for offset in range(window_days)
            for r in by_day.get(day - timedelta(days=offset), ())
        ]
        if window_records:
            resolved = sum(1 for r in window_records if r.verdict == "resolved")
            series.append((day, resolved / len(window_records)))
        day += timedelta(days=1)
    return series


def cycle_time_hours(pr: PullRequestContext) -> Optional[float]:
    """Hours from PR creation to merge; None while unmerged."""
    if pr.merged_at is None:
        return None
    return (pr.merged_at - pr.created_at).total_seconds() / 3600.0
