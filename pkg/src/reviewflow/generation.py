"""Turn raw model output into validated, diff-anchored candidate comments."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional

from .diffs import LineAnchor, anchor_in_diff
from .gateway import extract_fenced_json
from .model import CodeChange, ReviewComment

DEFAULT_MAX_COMMENTS_PER_PR = 5


@dataclass(frozen=True, slots=True)
class Discard:
    """A record that failed the output grammar or diff anchoring."""

    record: Any
    reason: str  # grammar | not-an-object | missing-field | bad-line | anchor-out-of-diff


def parse_candidates(
    raw: str, change: CodeChange, *, id_prefix: str = "gen"
) -> tuple[list[ReviewComment], list[Discard]]:
    """Parse model output into candidates; everything else becomes a discard.

    Every parsed record lands in exactly one of the two lists. Raw text with
    no fenced JSON array degrades to zero candidates and one grammar discard.
    """
    parsed = extract_fenced_json(raw)
    if not isinstance(parsed, list):
        return [], [Discard(record=raw[:200], reason="grammar")]
    candidates: list[ReviewComment] = []
    discards: list[Discard] = []
    for index, record in enumerate(parsed):
        if not isinstance(record, dict):
            discards.append(Discard(record, "not-an-object"))
            continue
        file_path = record.get("file_path")
        line = record.get("line")
        body = record.get("body")
        if (
            not isinstance(file_path, str)
            or not file_path
            or not isinstance(body, str)
            or not body
            or line is None
        ):
            discards.append(Discard(record, "missing-field"))
            continue
        if not isinstance(line, int) or isinstance(line, bool) or line < 1:
            discards.append(Discard(record, "bad-line"))
            continue
        if not anchor_in_diff(LineAnchor(file_path, line), change):
            discards.append(Discard(record, "anchor-out-of-diff"))
            continue
        category = record.get("category")
        if isinstance(category, str):
            category = category.strip().lower() or None
        else:
            category = None
        candidates.append(
            ReviewComment(
                comment_id=f"{id_prefix}-{index:03d}",
                origin="generated",
                file_path=file_path,
                line=line,
                body=body,
                category=category,
                state="candidate",
            )
        )
    return candidates, discards


def dedupe(
    candidates: list[ReviewComment],
    max_comments_per_pr: int = DEFAULT_MAX_COMMENTS_PER_PR,
) -> list[ReviewComment]:
    """At most one comment per (file, line), first emitted wins; then cap."""
    seen: set[tuple[str, int]] = set()
    kept: list[ReviewComment] = []
    for comment in candidates:
        key = (comment.file_path, comment.line)
        if key in seen:
            continue
        seen.add(key)
        kept.append(comment)
        if len(kept) >= max_comments_per_pr:
            break
    return kept
