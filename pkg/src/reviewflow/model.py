"""Shared domain types and their invariants. No I/O lives here.

All types are immutable values after construction and safe to share across
threads. ``CodeChange`` serializes canonically as a unified diff (see
``reviewflow.diffs``); every other type round-trips through plain snake_case
JSON dicts via ``to_dict`` / ``from_dict``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from datetime import datetime
from typing import Any, Optional

LINE_KINDS = ("context", "added", "removed")
COMMENT_ORIGINS = ("generated", "human")
COMMENT_STATES = ("candidate", "fact_checked", "gated", "posted", "rejected")

# Forward chain of the comment lifecycle; "rejected" is reachable from any
# pre-posted state and both "posted" and "rejected" are terminal.
_NEXT_STATE = {
    "candidate": "fact_checked",
    "fact_checked": "gated",
    "gated": "posted",
}

RESOLUTION_VERDICTS = ("resolved", "unresolved", "indeterminate")

SIMILARITY_SCORES = (1, 2, 3, 4)
HIGH_SIMILARITY_SCORES = (3, 4)


class StateTransitionError(ValueError):
    """Raised on an illegal ReviewComment lifecycle transition."""


@dataclass(frozen=True, slots=True)
class DiffLine:
    """One line of a hunk: kind is context/added/removed.

    ``no_newline`` marks the "\\ No newline at end of file" condition of the
    source file this line came from, so diffs round-trip byte-identically.
    """

    kind: str
    text: str
    no_newline: bool = False

    def __post_init__(self) -> None:
        if self.kind not in LINE_KINDS:
            raise ValueError(f"unknown diff line kind: {self.kind!r}")


@dataclass(frozen=True, slots=True)
class Hunk:
    """A contiguous edited region, in unified-diff coordinates (1-based)."""

    old_start: int
    old_count: int
    new_start: int
    new_count: int
    lines: tuple[DiffLine, ...]
    section: str = ""  # trailing context after the second "@@"

    @property
    def new_range(self) -> range:
        return range(self.new_start, self.new_start + self.new_count)

    @property
    def old_range(self) -> range:
        return range(self.old_start, self.old_start + self.old_count)


@dataclass(frozen=True, slots=True)
class FileDiff:
    """Changes to one file. ``None`` paths stand for /dev/null sides."""

    old_path: Optional[str]
    new_path: Optional[str]
    hunks: tuple[Hunk, ...] = ()
    is_rename: bool = False
    is_binary: bool = False

    @property
    def is_added(self) -> bool:
        return self.old_path is None

    @property
    def is_deleted(self) -> bool:
        return self.new_path is None


@dataclass(frozen=True, slots=True)
class CodeChange:
    """The full set of file diffs for one pull request or commit."""

    files: tuple[FileDiff, ...] = ()

    def file_for_new_path(self, path: str) -> Optional[FileDiff]:
        for fd in self.files:
            if fd.new_path == path:
                return fd
        return None

    def file_for_old_path(self, path: str) -> Optional[FileDiff]:
        for fd in self.files:
            if fd.old_path == path:
                return fd
        return None


def validate(change: CodeChange) -> list[str]:
    """Check all CodeChange invariants; returns violations, empty iff valid.

    Violations are data, not failures: callers decide whether to raise.
    """
    violations: list[str] = []
    for fd in change.files:
        label = fd.new_path or fd.old_path or "<no path>"
        if fd.old_path is None and fd.new_path is None:
            violations.append(f"{label}: file diff has neither old nor new path")
        if fd.is_rename and (fd.old_path is None or fd.new_path is None):
            violations.append(f"{label}: rename requires both paths")
        if fd.is_rename and fd.old_path == fd.new_path:
            violations.append(f"{label}: rename with identical paths")
        if fd.is_binary and fd.hunks:
            violations.append(f"{label}: binary file carries hunks")
        for idx, hunk in enumerate(fd.hunks):
            tag = f"{label} hunk {idx + 1}"
            if hunk.old_count < 0 or hunk.new_count < 0:
                violations.append(f"{tag}: negative line count")
            # A zero-count side uses start 0 by unified-diff convention
            # (new or deleted files); otherwise starts are 1-based.
            if hunk.old_count > 0 and hunk.old_start < 1:
                violations.append(f"{tag}: old_start must be >= 1")
            if hunk.new_count > 0 and hunk.new_start < 1:
                violations.append(f"{tag}: new_start must be >= 1")
            added = sum(1 for ln in hunk.lines if ln.kind == "added")
            removed = sum(1 for ln in hunk.lines if ln.kind == "removed")
            ctx = sum(1 for ln in hunk.lines if ln.kind == "context")
            if added + ctx != hunk.new_count:
                violations.append(
                    f"{tag}: new_count={hunk.new_count} but added+context={added + ctx}"
                )
            if removed + ctx != hunk.old_count:
                violations.append(
                    f"{tag}: old_count={hunk.old_count} but removed+context={removed + ctx}"
                )
        for prev, cur in zip(fd.hunks, fd.hunks[1:]):
            if cur.new_start < prev.new_start:
                violations.append(f"{label}: hunks not sorted by new_start")
            elif prev.new_count and cur.new_start < prev.new_start + prev.new_count:
                violations.append(f"{label}: hunks overlap in new-line ranges")
            if prev.old_count and cur.old_start < prev.old_start + prev.old_count:
                violations.append(f"{label}: hunks overlap in old-line ranges")
    return violations


@dataclass(frozen=True, slots=True)
class IssueSummary:
    """A linked issue-tracker item: business motivation and requirements."""

    key: str
    summary: str
    description: str = ""

    def __post_init__(self) -> None:
        if not self.key:
            raise ValueError("issue key must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        return {"key": self.key, "summary": self.summary, "description": self.description}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "IssueSummary":
        return cls(
            key=data["key"],
            summary=data.get("summary", ""),
            description=data.get("description", ""),
        )


def _parse_ts(value: Any) -> Optional[datetime]:
    if value is None or isinstance(value, datetime):
        return value
    return datetime.fromisoformat(value)


@dataclass(frozen=True, slots=True)
class PullRequestContext:
    """Everything gathered for one review run.

    ``flags`` records degradations observed during assembly (for example
    ``issue_fetch_failed:KEY-1`` or ``diff_truncated``); an empty tuple means
    the context is complete.
    """

    pr_id: str
    title: str
    description: str
    issue_refs: tuple[IssueSummary, ...]
    change: CodeChange
    source_commit: str
    created_at: datetime
    merged_at: Optional[datetime] = None
    flags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.title:
            raise ValueError("pull request title must be non-empty")
        if self.merged_at is not None and self.merged_at < self.created_at:
            raise ValueError("merged_at precedes created_at")

    @property
    def degraded(self) -> bool:
        return bool(self.flags)

    def to_dict(self) -> dict[str, Any]:
        from .diffs import render_unified_diff  # local import: diffs depends on model

        return {
            "pr_id": self.pr_id,
            "title": self.title,
            "description": self.description,
            "issue_refs": [ref.to_dict() for ref in self.issue_refs],
            "change": render_unified_diff(self.change),
            "source_commit": self.source_commit,
            "created_at": self.created_at.isoformat(),
            "merged_at": self.merged_at.isoformat() if self.merged_at else None,
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PullRequestContext":
        from .diffs import parse_unified_diff

        return cls(
            pr_id=data["pr_id"],
            title=data["title"],
            description=data.get("description", ""),
            issue_refs=tuple(IssueSummary.from_dict(d) for d in data.get("issue_refs", [])),
            change=parse_unified_diff(data.get("change", "")),
            source_commit=data["source_commit"],
            created_at=_parse_ts(data["created_at"]),
            merged_at=_parse_ts(data.get("merged_at")),
            flags=tuple(data.get("flags", ())),
        )


@dataclass(frozen=True, slots=True)
class ReviewComment:
    """One generated or human review comment anchored to a new-file line.

    Anchors always refer to the post-change (new) side of the diff; comments
    on purely deleted code are re-anchored to the nearest surviving new-file
    line of the enclosing hunk before they reach this type.
    """

    comment_id: str
    origin: str
    file_path: str
    line: int
    body: str
    category: Optional[str] = None
    state: str = "candidate"

    def __post_init__(self) -> None:
        if self.origin not in COMMENT_ORIGINS:
            raise ValueError(f"unknown comment origin: {self.origin!r}")
        if self.state not in COMMENT_STATES:
            raise ValueError(f"unknown comment state: {self.state!r}")
        if not self.body:
            raise ValueError("comment body must be non-empty")
        if self.line < 1:
            raise ValueError("comment line must be >= 1")

    def advance(self, new_state: str) -> "ReviewComment":
        """Move one step forward along the lifecycle; rejects are via reject()."""
        if _NEXT_STATE.get(self.state) != new_state:
            raise StateTransitionError(f"cannot move {self.state} -> {new_state}")
        return replace(self, state=new_state)

    def reject(self) -> "ReviewComment":
        if self.state in ("posted", "rejected"):
            raise StateTransitionError(f"cannot reject a {self.state} comment")
        return replace(self, state="rejected")

    def to_dict(self) -> dict[str, Any]:
        return {
            "comment_id": self.comment_id,
            "origin": self.origin,
            "file_path": self.file_path,
            "line": self.line,
            "body": self.body,
            "category": self.category,
            "state": self.state,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ReviewComment":
        return cls(
            comment_id=data["comment_id"],
            origin=data["origin"],
            file_path=data["file_path"],
            line=data["line"],
            body=data["body"],
            category=data.get("category"),
            state=data.get("state", "candidate"),
        )


# Fixed serialization order of prompt sections.
PROMPT_SECTION_ORDER = (
    "persona",
    "task",
    "chain_of_thought",
    "guidelines_code",
    "guidelines_test",
    "guidelines_comment",
    "pr_info",
    "issue_info",
    "code_change",
)


@dataclass(frozen=True, slots=True)
class PromptBundle:
    """The assembled structured prompt; task and code_change are mandatory."""

    task: str
    code_change: str
    persona: Optional[str] = None
    chain_of_thought: Optional[str] = None
    guidelines_code: Optional[str] = None
    guidelines_test: Optional[str] = None
    guidelines_comment: Optional[str] = None
    pr_info: Optional[str] = None
    issue_info: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.task:
            raise ValueError("task section is mandatory")
        if not self.code_change:
            raise ValueError("code_change section is mandatory")

    def sections(self) -> list[tuple[str, str]]:
        """Present components as (name, text), in the fixed section order."""
        out = []
        for name in PROMPT_SECTION_ORDER:
            value = getattr(self, name)
            if value is not None:
                out.append((name, value))
        return out

    def to_dict(self) -> dict[str, Any]:
        return {name: getattr(self, name) for name in PROMPT_SECTION_ORDER}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PromptBundle":
        return cls(**{name: data.get(name) for name in PROMPT_SECTION_ORDER})


@dataclass(frozen=True, slots=True)
class ResolutionRecord:
    """A comment paired with whether its commented lines were later changed."""

    comment: ReviewComment
    pr_id: str
    verdict: str
    resolving_commit: Optional[str] = None
    observed_at: Optional[datetime] = None

    def __post_init__(self) -> None:
        if self.verdict not in RESOLUTION_VERDICTS:
            raise ValueError(f"unknown resolution verdict: {self.verdict!r}")
        if (self.verdict == "resolved") != (self.resolving_commit is not None):
            raise ValueError("verdict=resolved iff resolving_commit is present")

    def to_dict(self) -> dict[str, Any]:
        return {
            "comment": self.comment.to_dict(),
            "pr_id": self.pr_id,
            "verdict": self.verdict,
            "resolving_commit": self.resolving_commit,
            "observed_at": self.observed_at.isoformat() if self.observed_at else None,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ResolutionRecord":
        return cls(
            comment=ReviewComment.from_dict(data["comment"]),
            pr_id=data["pr_id"],
            verdict=data["verdict"],
            resolving_commit=data.get("resolving_commit"),
            observed_at=_parse_ts(data.get("observed_at")),
        )


@dataclass(frozen=True, slots=True)
class AlignmentVerdict:
    """Per-comment human-alignment outcome: location + semantic similarity."""

    generated: ReviewComment
    matched_human: Optional[ReviewComment]
    location_match: bool
    similarity_score: Optional[int]
    aligned: bool

    def __post_init__(self) -> None:
        if self.similarity_score is not None and self.similarity_score not in SIMILARITY_SCORES:
            raise ValueError(f"similarity score out of range: {self.similarity_score}")
        if self.location_match and self.matched_human is None:
            raise ValueError("location_match requires a matched human comment")
        if self.aligned and not (
            self.location_match and self.similarity_score in HIGH_SIMILARITY_SCORES
        ):
            raise ValueError("aligned requires location_match and similarity in {3,4}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "generated": self.generated.to_dict(),
            "matched_human": self.matched_human.to_dict() if self.matched_human else None,
            "location_match": self.location_match,
            "similarity_score": self.similarity_score,
            "aligned": self.aligned,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "AlignmentVerdict":
        matched = data.get("matched_human")
        return cls(
            generated=ReviewComment.from_dict(data["generated"]),
            matched_human=ReviewComment.from_dict(matched) if matched else None,
            location_match=data["location_match"],
            similarity_score=data.get("similarity_score"),
            aligned=data["aligned"],
        )
