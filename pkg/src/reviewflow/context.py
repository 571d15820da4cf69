"""Gather everything one review run needs into a PullRequestContext.

Sources: a repository handle (for the diff), a code-host client (PR
metadata), and an issue-tracker client (linked issue summaries). Issue keys
are detected in the branch name, title, and description. Every text field is
truncated to its byte budget with a visible marker; diff truncation drops
whole trailing files/hunks so line anchoring stays intact.
"""

from __future__ import annotations

import re
import subprocess
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Protocol

from .diffs import parse_unified_diff, render_unified_diff
from .model import CodeChange, FileDiff, IssueSummary, PullRequestContext
from .prompts import TRUNCATION_MARKER

ISSUE_KEY_RE = re.compile(r"\b[A-Z][A-Z0-9]+-[0-9]+\b")


class RepoUnavailableError(Exception):
    """The repository handle cannot produce the requested diff."""


class PullRequestNotFoundError(Exception):
    pass


class IssueFetchError(Exception):
    pass


@dataclass(frozen=True, slots=True)
class ContextBudget:
    max_diff_bytes: int = 512_000
    max_description_bytes: int = 16_000
    max_issue_bytes: int = 8_000

    def __post_init__(self) -> None:
        if min(self.max_diff_bytes, self.max_description_bytes, self.max_issue_bytes) <= 0:
            raise ValueError("budgets must be positive")


@dataclass(frozen=True, slots=True)
class PullRecord:
    """What a code host returns for one pull request."""

    pr_id: str
    title: str
    description: str
    source_commit: str
    branch: str
    created_at: datetime
    merged_at: Optional[datetime] = None
    diff: Optional[str] = None  # inline diff; falls back to the repo handle


class CodeHostClient(Protocol):
    def get_pull_request(self, pr_ref: str) -> PullRecord: ...

    def post_comment(self, pr_id: str, file_path: str, line: int, body: str) -> str:
        """Post one inline comment; returns the host-assigned comment id."""
        ...


class IssueTrackerClient(Protocol):
    def get_issue(self, key: str) -> IssueSummary: ...


class Repository(Protocol):
    def diff_for(self, source_commit: str) -> str: ...


# --- in-memory and file-backed client implementations --------------------------


class InMemoryCodeHost:
    """Test/demo host: serves seeded PullRecords, records every call."""

    def __init__(self, pulls: dict[str, PullRecord] | None = None,
                 fail_posts: set[tuple[str, int]] | None = None):
        self.pulls = dict(pulls or {})
        self.fail_posts = fail_posts or set()
        self.posted: list[dict] = []
        self.calls: list[tuple] = []
        self._next_id = 0

    def get_pull_request(self, pr_ref: str) -> PullRecord:
        self.calls.append(("get_pull_request", pr_ref))
        if pr_ref not in self.pulls:
            raise PullRequestNotFoundError(pr_ref)
        return self.pulls[pr_ref]

    def post_comment(self, pr_id: str, file_path: str, line: int, body: str) -> str:
        self.calls.append(("post_comment", pr_id, file_path, line))
        if (file_path, line) in self.fail_posts:
            raise RuntimeError(f"host rejected anchor {file_path}:{line}")
        self._next_id += 1
        host_id = f"host-{self._next_id}"
        self.posted.append(
            {"pr_id": pr_id, "file_path": file_path, "line": line, "body": body, "id": host_id}
        )
        return host_id

    # The service must never call these; the fake records any attempt.
    def approve(self, pr_id: str) -> None:
        self.calls.append(("approve", pr_id))

    def merge(self, pr_id: str) -> None:
        self.calls.append(("merge", pr_id))


class FileCodeHost:
    """Fixture host: one ``<pr_ref>.json`` per PR plus sibling ``.diff`` files."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.posted_path = self.root / "posted.jsonl"

    def get_pull_request(self, pr_ref: str) -> PullRecord:
        import json

        path = self.root / f"{pr_ref}.json"
        if not path.exists():
            raise PullRequestNotFoundError(pr_ref)
        data = json.loads(path.read_text(encoding="utf-8"))
        diff = None
        diff_path = self.root / f"{pr_ref}.diff"
        if diff_path.exists():
            diff = diff_path.read_text(encoding="utf-8")
        return PullRecord(
            pr_id=data["pr_id"],
            title=data["title"],
            description=data.get("description", ""),
            source_commit=data["source_commit"],
            branch=data.get("branch", "main"),
            created_at=datetime.fromisoformat(data["created_at"]),
            merged_at=(
                datetime.fromisoformat(data["merged_at"]) if data.get("merged_at") else None
            ),
            diff=diff,
        )

    def post_comment(self, pr_id: str, file_path: str, line: int, body: str) -> str:
        import json

        with self.posted_path.open("a", encoding="utf-8") as fh:
            fh.write(
                json.dumps(
                    {"pr_id": pr_id, "file_path": file_path, "line": line, "body": body}
                )
                + "\n"
            )
        return f"file-{pr_id}-{file_path}-{line}"


class InMemoryIssueTracker:
    def __init__(self, issues: dict[str, IssueSummary] | None = None, unreachable: bool = False):
        self.issues = dict(issues or {})
        self.unreachable = unreachable

    def get_issue(self, key: str) -> IssueSummary:
        if self.unreachable:
            raise IssueFetchError("tracker unreachable")
        if key not in self.issues:
            raise IssueFetchError(f"unknown issue {key}")
        return self.issues[key]


class FileIssueTracker:
    """Fixture tracker: one ``<KEY>.json`` per issue."""

    def __init__(self, root: Path):
        self.root = Path(root)

    def get_issue(self, key: str) -> IssueSummary:
        import json

        path = self.root / f"{key}.json"
        if not path.exists():
            raise IssueFetchError(f"unknown issue {key}")
        return IssueSummary.from_dict(json.loads(path.read_text(encoding="utf-8")))


class InMemoryRepository:
    def __init__(self, diffs: dict[str, str] | None = None):
        self.diffs = dict(diffs or {})

    def diff_for(self, source_commit: str) -> str:
        if source_commit not in self.diffs:
            raise RepoUnavailableError(f"no diff for commit {source_commit}")
        return self.diffs[source_commit]


class InlineDiffRepository:
    """Wraps a diff delivered inline (for example in a webhook payload)."""

    def __init__(self, diff: str):
        self._diff = diff

    def diff_for(self, source_commit: str) -> str:
        return self._diff


class GitRepository:
    """Thin shell over a local clone for diff and history extraction."""

    def __init__(self, path: Path, base_ref: str = "HEAD~1"):
        self.path = Path(path)
        self.base_ref = base_ref

    def _git(self, *args: str) -> str:
        try:
            result = subprocess.run(
                ["git", "-C", str(self.path), *args],
                capture_output=True,
                text=True,
                check=True,
            )
        except (subprocess.CalledProcessError, FileNotFoundError) as exc:
            raise RepoUnavailableError(str(exc)) from exc
        return result.stdout

    def diff_for(self, source_commit: str) -> str:
        return self._git("diff", self.base_ref, source_commit)

    def commits_between(self, start: str, end: str) -> list[str]:
        out = self._git("rev-list", "--reverse", f"{start}..{end}")
        return [line for line in out.splitlines() if line]

    def commit_diff(self, commit: str) -> str:
        return self._git("show", "--format=", commit)


# --- truncation -----------------------------------------------------------------


def truncate_text(text: str, max_bytes: int, marker: str = TRUNCATION_MARKER) -> tuple[str, bool]:
    """Cut at a UTF-8 boundary so result+marker fits in max_bytes."""
    raw = text.encode("utf-8")
    if len(raw) <= max_bytes:
        return text, False
    marker_bytes = marker.encode("utf-8")
    keep = max(0, max_bytes - len(marker_bytes))
    cut = raw[:keep]
    while cut:
        try:
            prefix = cut.decode("utf-8")
            break
        except UnicodeDecodeError:
            cut = cut[:-1]
    else:
        prefix = ""
    return prefix + marker, True


def _placeholder_for_binary(fd: FileDiff) -> FileDiff:
    return FileDiff(fd.old_path, fd.new_path, hunks=(), is_rename=fd.is_rename, is_binary=True)


def truncate_change(change: CodeChange, max_bytes: int) -> tuple[CodeChange, bool]:
    """Drop whole trailing hunks/files until the rendered diff fits the budget.

    The marker appended downstream by the prompt builder is reserved out of
    the budget, so rendered-diff + marker always fits.
    """
    reserved = len((TRUNCATION_MARKER + "\n").encode("utf-8"))
    full = render_unified_diff(change).encode("utf-8")
    if len(full) <= max_bytes:
        return change, False
    budget = max(0, max_bytes - reserved)
    kept_files: list[FileDiff] = []
    used = 0
    truncated = False
    for fd in change.files:
        block = render_unified_diff(CodeChange((fd,))).encode("utf-8")
        if used + len(block) <= budget:
            kept_files.append(fd)
            used += len(block)
            continue
        # try progressively fewer hunks of this file
        placed = False
        for cut in range(len(fd.hunks) - 1, 0, -1):
            partial = FileDiff(
                fd.old_path, fd.new_path, fd.hunks[:cut], fd.is_rename, fd.is_binary
            )
            block = render_unified_diff(CodeChange((partial,))).encode("utf-8")
            if used + len(block) <= budget:
                kept_files.append(partial)
                used += len(block)
                placed = True
                break
        truncated = True
        if not placed and not kept_files:
            # nothing fits; keep the first file's first hunk anyway so the
            # prompt is never empty, the budget floor is the caller's problem
            kept_files.append(
                FileDiff(fd.old_path, fd.new_path, fd.hunks[:1], fd.is_rename, fd.is_binary)
            )
        break
    return CodeChange(tuple(kept_files)), truncated


def sanitize_binary_files(change: CodeChange) -> CodeChange:
    """Binary entries appear as placeholder lines only, never raw bytes."""
    files = tuple(
        _placeholder_for_binary(fd) if fd.is_binary else fd for fd in change.files
    )
    return CodeChange(files)


def detect_issue_keys(*texts: str) -> list[str]:
    """Issue keys found across the given texts, deduplicated in order."""
    seen: list[str] = []
    for text in texts:
        for key in ISSUE_KEY_RE.findall(text or ""):
            if key not in seen:
                seen.append(key)
    return seen


def assemble(
    repo: Optional[Repository],
    pr_ref: str,
    host: CodeHostClient,
    tracker: Optional[IssueTrackerClient],
    budget: ContextBudget = ContextBudget(),
) -> PullRequestContext:
    """Build the full review context for one pull request.

    Degrades instead of failing when the tracker is unreachable: the context
    comes back with empty/partial issue_refs and a flag naming each miss.
    Deterministic: identical client responses produce identical contexts.
    """
    pull = host.get_pull_request(pr_ref)
    flags: list[str] = []

    diff_text = pull.diff
    if diff_text is None:
        if repo is None:
            raise RepoUnavailableError(
                f"no inline diff for {pr_ref} and no repository handle configured"
            )
        diff_text = repo.diff_for(pull.source_commit)
    change = sanitize_binary_files(parse_unified_diff(diff_text))
    change, diff_truncated = truncate_change(change, budget.max_diff_bytes)
    if diff_truncated:
        flags.append("diff_truncated")

    description, desc_truncated = truncate_text(pull.description, budget.max_description_bytes)
    if desc_truncated:
        flags.append("description_truncated")

    issue_refs: list[IssueSummary] = []
    keys = detect_issue_keys(pull.branch, pull.title, pull.description)
    if tracker is None:
        if keys:
            flags.append("issue_tracker_absent")
    else:
        for key in keys:
            try:
                issue = tracker.get_issue(key)
            except IssueFetchError:
                flags.append(f"issue_fetch_failed:{key}")
                continue
            issue_description, issue_truncated = truncate_text(
                issue.description, budget.max_issue_bytes
            )
            if issue_truncated:
                flags.append(f"issue_truncated:{key}")
            issue_refs.append(
                IssueSummary(issue.key, issue.summary, issue_description)
            )

    return PullRequestContext(
        pr_id=pull.pr_id,
        title=pull.title,
        description=description,
        issue_refs=tuple(issue_refs),
        change=change,
        source_commit=pull.source_commit,
        created_at=pull.created_at,
        merged_at=pull.merged_at,
        flags=tuple(flags),
    )


def utcnow() -> datetime:
    return datetime.now(timezone.utc)
