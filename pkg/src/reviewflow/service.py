"""Event-driven review orchestration: webhook in, staged pipeline, comments out.

One event runs: assemble -> prompt/complete -> parse+dedupe -> factual judge
-> actionability gate -> post. The run record is persisted at every stage
transition. Delivery is exactly-once per event_id (duplicates return the
original run); at most one run is active per pull request; re-delivery for an
already-reviewed source commit is skipped. The service only ever posts
comments: it has no code path that approves or merges.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import logging
import threading
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Optional, Protocol, Sequence

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import gate as gate_mod
from . import gateway as gateway_mod
from .context import (
    CodeHostClient,
    ContextBudget,
    InlineDiffRepository,
    IssueTrackerClient,
    PullRecord,
    Repository,
    assemble,
)
from .generation import DEFAULT_MAX_COMMENTS_PER_PR, dedupe, parse_candidates
from .model import ReviewComment
from .prompts import PromptConfig, build, render
from .store import LogStore

logger = logging.getLogger(__name__)

EVENT_KINDS = ("pr_created", "pr_updated")
RUN_STAGES = (
    "assembling",
    "generating",
    "fact_checking",
    "gating",
    "posting",
    "done",
    "failed",
)


class Clock(Protocol):
    def now(self) -> datetime: ...


class SystemClock:
    def now(self) -> datetime:
        return datetime.now(timezone.utc)


class FixedClock:
    """Deterministic clock for tests and replayable runs."""

    def __init__(self, start: datetime, step_seconds: float = 0.0):
        self._now = start
        self._step = step_seconds

    def now(self) -> datetime:
        current = self._now
        self._now = self._now + timedelta(seconds=self._step)
        return current


@dataclass(frozen=True, slots=True)
class ReviewEvent:
    event_id: str
    pr_id: str
    repo_id: str
    kind: str
    received_at: datetime

    def __post_init__(self) -> None:
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind: {self.kind}")

    def to_dict(self) -> dict:
        return {
            "event_id": self.event_id,
            "pr_id": self.pr_id,
            "repo_id": self.repo_id,
            "kind": self.kind,
            "received_at": self.received_at.isoformat(),
        }


_STAGE_ORDER = {stage: index for index, stage in enumerate(RUN_STAGES)}


@dataclass
class ReviewRun:
    """Mutable run record; persisted as a dict snapshot at each transition."""

    run_id: str
    event_id: str
    pr_id: str
    source_commit: str = ""
    stage: str = "assembling"
    counts: dict = field(
        default_factory=lambda: {
            "candidates": 0,
            "dedupe_dropped": 0,
            "fact_rejected": 0,
            "gate_rejected": 0,
            "posted": 0,
            "unposted": 0,
        }
    )
    stage_seconds: dict = field(default_factory=dict)
    error: Optional[str] = None
    skip_reason: Optional[str] = None
    posted_comment_ids: list = field(default_factory=list)

    def advance_stage(self, stage: str) -> None:
        if _STAGE_ORDER[stage] < _STAGE_ORDER[self.stage]:
            raise ValueError(f"run stage cannot move backward: {self.stage} -> {stage}")
        self.stage = stage

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "event_id": self.event_id,
            "pr_id": self.pr_id,
            "source_commit": self.source_commit,
            "stage": self.stage,
            "counts": dict(self.counts),
            "stage_seconds": dict(self.stage_seconds),
            "error": self.error,
            "skip_reason": self.skip_reason,
            "posted_comment_ids": list(self.posted_comment_ids),
        }


@dataclass(frozen=True, slots=True)
class ServiceConfig:
    triggers: tuple[str, ...] = ("pr_created", "pr_updated")
    max_comments_per_pr: int = DEFAULT_MAX_COMMENTS_PER_PR
    gate_threshold: float = gate_mod.DEFAULT_THRESHOLD
    gate_fail_open: bool = True
    fact_check_enabled: bool = True
    gate_enabled: bool = True
    dry_run: bool = False
    worker_limit: int = 4
    inline_workers: bool = False  # process submissions synchronously (tests, CLI)


def run_id_for_event(event_id: str) -> str:
    return "run-" + hashlib.sha256(event_id.encode("utf-8")).hexdigest()[:12]


class ReviewService:
    """Owns the staged pipeline and its persistence.

    Thread-safety: a global lock guards the event index and per-PR lock
    table; each PR's pipeline body runs under that PR's own lock, so distinct
    PRs proceed concurrently up to the worker limit.
    """

    def __init__(
        self,
        *,
        store: LogStore,
        host: CodeHostClient,
        tracker: Optional[IssueTrackerClient],
        repo: Optional[Repository],
        gateway: gateway_mod.Gateway,
        classifier: gate_mod.CommentClassifier,
        prompt_config: Optional[PromptConfig] = None,
        budget: ContextBudget = ContextBudget(),
        config: ServiceConfig = ServiceConfig(),
        clock: Optional[Clock] = None,
    ):
        self.store = store
        self.host = host
        self.tracker = tracker
        self.repo = repo
        self.gateway = gateway
        self.classifier = classifier
        self.prompt_config = prompt_config or PromptConfig()
        self.budget = budget
        self.config = config
        self.clock = clock or SystemClock()
        self._global_lock = threading.Lock()
        self._pr_locks: dict[str, threading.Lock] = {}
        self._executor: Optional[ThreadPoolExecutor] = None
        if not config.inline_workers:
            self._executor = ThreadPoolExecutor(max_workers=config.worker_limit)
        self._pending: list[Future] = []

    # --- ingestion -------------------------------------------------------

    def submit(self, payload: dict) -> str:
        """Validate a webhook payload, reserve the run, enqueue processing.

        Returns the run id immediately; duplicates return the original run id
        without enqueuing anything.
        """
        event, pull, inline_diff = parse_event_payload(payload, self.clock)
        with self._global_lock:
            existing = self.store.get("event", event.event_id)
            if existing:
                return existing["run_id"]
            run_id = run_id_for_event(event.event_id)
            self.store.append(
                "event", {**event.to_dict(), "run_id": run_id}
            )
        if self._executor:
            self._pending.append(
                self._executor.submit(self._process, event, pull, inline_diff, run_id)
            )
        else:
            self._process(event, pull, inline_diff, run_id)
        return run_id

    def handle_event(
        self,
        event: ReviewEvent,
        pull: Optional[PullRecord] = None,
        inline_diff: Optional[str] = None,
    ) -> ReviewRun:
        """Process one event synchronously; duplicates return the stored run."""
        with self._global_lock:
            existing = self.store.get("event", event.event_id)
            if existing:
                stored = self.store.get("run", existing["run_id"])
                if stored:
                    return _run_from_dict(stored)
                run_id = existing["run_id"]
            else:
                run_id = run_id_for_event(event.event_id)
                self.store.append("event", {**event.to_dict(), "run_id": run_id})
        return self._process(event, pull, inline_diff, run_id)

    def drain(self) -> None:
        for future in self._pending:
            future.result()
        self._pending.clear()

    def close(self) -> None:
        self.drain()
        if self._executor:
            self._executor.shutdown(wait=True)

    # --- pipeline ---------------------------------------------------------

    def _pr_lock(self, pr_id: str) -> threading.Lock:
        with self._global_lock:
            return self._pr_locks.setdefault(pr_id, threading.Lock())

    def _process(
        self,
        event: ReviewEvent,
        pull: Optional[PullRecord],
        inline_diff: Optional[str],
        run_id: str,
    ) -> ReviewRun:
        with self._pr_lock(event.pr_id):
            stored = self.store.get("run", run_id)
            if stored is not None:
                # duplicate delivery raced us here; the original run wins
                return _run_from_dict(stored)
            run = ReviewRun(run_id=run_id, event_id=event.event_id, pr_id=event.pr_id)
            if event.kind not in self.config.triggers:
                run.skip_reason = f"trigger-disabled:{event.kind}"
                run.advance_stage("done")
                self._persist(run)
                return run
            self._persist(run)
            try:
                return self._pipeline(event, pull, inline_diff, run)
            except Exception as exc:  # any stage failure -> run.failed
                logger.exception("run %s failed at stage %s", run.run_id, run.stage)
                run.error = f"{run.stage}: {exc}"
                run.stage = "failed"
                self._persist(run)
                return run

    def _pipeline(
        self,
        event: ReviewEvent,
        pull: Optional[PullRecord],
        inline_diff: Optional[str],
        run: ReviewRun,
    ) -> ReviewRun:
        started = self.clock.now()

        host: CodeHostClient = self.host
        repo = self.repo
        if pull is not None:
            host = _PayloadHostOverlay(self.host, pull)
        if inline_diff is not None and (pull is None or pull.diff is None):
            repo = InlineDiffRepository(inline_diff)
        ctx = assemble(repo, event.pr_id, host, self.tracker, self.budget)
        run.source_commit = ctx.source_commit
        self._mark(run, "assembling", started)

        already = self._already_reviewed(event.pr_id, ctx.source_commit, run.run_id)
        if already:
            run.skip_reason = "already-reviewed"
            run.advance_stage("done")
            self._persist(run)
            return run

        stage_start = self.clock.now()
        run.advance_stage("generating")
        self._persist(run)
        bundle = build(ctx, self.prompt_config)
        raw = self.gateway.complete(gateway_mod.ChatRequest(prompt=render(bundle)))
        candidates, _discards = parse_candidates(
            raw, ctx.change, id_prefix=f"{event.pr_id}:{ctx.source_commit[:8]}"
        )
        kept = dedupe(candidates, self.config.max_comments_per_pr)
        run.counts["candidates"] = len(candidates)
        run.counts["dedupe_dropped"] = len(candidates) - len(kept)
        self._mark(run, "generating", stage_start)

        stage_start = self.clock.now()
        run.advance_stage("fact_checking")
        self._persist(run)
        if self.config.fact_check_enabled:
            checked, _verdicts = gateway_mod.judge_fact(kept, ctx, self.gateway)
        else:
            checked = [c.advance("fact_checked") for c in kept]
        run.counts["fact_rejected"] = sum(1 for c in checked if c.state == "rejected")
        survivors = [c for c in checked if c.state == "fact_checked"]
        self._mark(run, "fact_checking", stage_start)

        stage_start = self.clock.now()
        run.advance_stage("gating")
        self._persist(run)
        if self.config.gate_enabled:
            gated_all, _scores = gate_mod.score(
                survivors,
                self.classifier,
                threshold=self.config.gate_threshold,
                fail_open=self.config.gate_fail_open,
            )
        else:
            gated_all = [c.advance("gated") for c in survivors]
        run.counts["gate_rejected"] = sum(1 for c in gated_all if c.state == "rejected")
        gated = [c for c in gated_all if c.state == "gated"]
        self._mark(run, "gating", stage_start)

        stage_start = self.clock.now()
        run.advance_stage("posting")
        self._persist(run)
        posted, unposted = self.post_comments(event.pr_id, gated)
        run.counts["posted"] = len(posted)
        run.counts["unposted"] = len(unposted)
        run.posted_comment_ids = [c.comment_id for c in posted]
        for comment in checked:
            if comment.state == "rejected":
                self._persist_comment(comment, run)
        for comment in posted + unposted:
            self._persist_comment(comment, run)
        self._mark(run, "posting", stage_start)

        run.advance_stage("done")
        self._persist(run)
        return run

    def post_comments(
        self, pr_id: str, comments: Sequence[ReviewComment]
    ) -> tuple[list[ReviewComment], list[ReviewComment]]:
        """Post gated comments; failures stay gated with an error note."""
        posted: list[ReviewComment] = []
        unposted: list[ReviewComment] = []
        for comment in comments:
            if comment.state != "gated":
                raise ValueError(f"can only post gated comments, got {comment.state}")
            if self.config.dry_run:
                unposted.append(comment)
                continue
            try:
                self.host.post_comment(pr_id, comment.file_path, comment.line, comment.body)
            except Exception as exc:
                logger.warning("post failed for %s: %s", comment.comment_id, exc)
                unposted.append(comment)
                continue
            posted.append(comment.advance("posted"))
        return posted, unposted

    # --- helpers ----------------------------------------------------------

    def _already_reviewed(self, pr_id: str, source_commit: str, current_run_id: str) -> bool:
        for run in self.store.all_latest("run"):
            if (
                run["run_id"] != current_run_id
                and run["pr_id"] == pr_id
                and run["source_commit"] == source_commit
                and run["stage"] == "done"
                and not run.get("skip_reason")
            ):
                return True
        return False

    def _mark(self, run: ReviewRun, stage: str, started: datetime) -> None:
        run.stage_seconds[stage] = (self.clock.now() - started).total_seconds()

    def _persist(self, run: ReviewRun) -> None:
        self.store.append("run", run.to_dict())

    def _persist_comment(self, comment: ReviewComment, run: ReviewRun) -> None:
        self.store.append(
            "comment", {**comment.to_dict(), "run_id": run.run_id, "pr_id": run.pr_id}
        )


class _PayloadHostOverlay:
    """Serves one PR record straight from a webhook payload; posts delegate."""

    def __init__(self, real_host: CodeHostClient, pull: PullRecord):
        self._real = real_host
        self._pull = pull

    def get_pull_request(self, pr_ref: str) -> PullRecord:
        if pr_ref == self._pull.pr_id:
            return self._pull
        return self._real.get_pull_request(pr_ref)

    def post_comment(self, pr_id: str, file_path: str, line: int, body: str) -> str:
        return self._real.post_comment(pr_id, file_path, line, body)


def _run_from_dict(data: dict) -> ReviewRun:
    run = ReviewRun(
        run_id=data["run_id"],
        event_id=data["event_id"],
        pr_id=data["pr_id"],
        source_commit=data.get("source_commit", ""),
    )
    run.stage = data["stage"]
    run.counts = dict(data["counts"])
    run.stage_seconds = dict(data.get("stage_seconds", {}))
    run.error = data.get("error")
    run.skip_reason = data.get("skip_reason")
    run.posted_comment_ids = list(data.get("posted_comment_ids", []))
    return run


class PayloadError(ValueError):
    pass


def parse_event_payload(
    payload: dict, clock: Clock
) -> tuple[ReviewEvent, Optional[PullRecord], Optional[str]]:
    """Decode the webhook JSON body into an event plus optional PR payload.

    Expected shape: {event_id, kind, repo, pr: {id, title, description,
    source_commit, branch}, diff | diff_url}.
    """
    try:
        event_id = payload["event_id"]
        kind = payload["kind"]
        repo_id = payload.get("repo", "")
        pr = payload["pr"]
        pr_id = pr["id"]
    except (KeyError, TypeError) as exc:
        raise PayloadError(f"missing field: {exc}") from exc
    if kind not in EVENT_KINDS:
        raise PayloadError(f"unknown event kind: {kind}")
    received = clock.now()
    event = ReviewEvent(
        event_id=str(event_id),
        pr_id=str(pr_id),
        repo_id=str(repo_id),
        kind=kind,
        received_at=received,
    )
    inline_diff = payload.get("diff")
    pull = None
    if "title" in pr and "source_commit" in pr:
        pull = PullRecord(
            pr_id=str(pr_id),
            title=pr["title"],
            description=pr.get("description", ""),
            source_commit=pr["source_commit"],
            branch=pr.get("branch", ""),
            created_at=received,
            diff=inline_diff,
        )
    return event, pull, inline_diff


def signature_for(secret: bytes, body: bytes) -> str:
    return hmac.new(secret, body, hashlib.sha256).hexdigest()


def create_app(service: ReviewService, *, secret: Optional[bytes] = None) -> FastAPI:
    """FastAPI app exposing the webhook and run-lookup endpoints."""
    app = FastAPI(title="reviewflow", version="0.1.0")

    @app.post("/events", status_code=202)
    async def events(request: Request):
        body = await request.body()
        if secret is not None:
            provided = request.headers.get("X-Signature", "")
            expected = signature_for(secret, body)
            if not hmac.compare_digest(provided, expected):
                return JSONResponse({"error": "bad signature"}, status_code=401)
        try:
            payload = json.loads(body)
        except json.JSONDecodeError:
            return JSONResponse({"error": "invalid JSON"}, status_code=400)
        try:
            run_id = service.submit(payload)
        except PayloadError as exc:
            return JSONResponse({"error": str(exc)}, status_code=400)
        return {"run_id": run_id}

    @app.get("/runs/{run_id}")
    async def get_run(run_id: str):
        run = service.store.get("run", run_id)
        if run is None:
            return JSONResponse({"error": "unknown run"}, status_code=404)
        return run

    return app
