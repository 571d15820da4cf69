"""Backend abstraction for every model call, plus the two LLM judges.

Backends implement ``complete(ChatRequest) -> str``. The ``Gateway`` wraps a
backend with a request byte budget, a bounded retry policy for transport
failures, and a concurrency cap. ``MockBackend`` replays canned responses
keyed by prompt hash; ``HeuristicBackend`` is a deterministic offline stand-in
that understands the generation and judge prompt shapes, so the whole
pipeline runs without a network.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence

import httpx

from . import diffs
from .model import PullRequestContext, ReviewComment
from .prompts import fence_section

logger = logging.getLogger(__name__)

FACT_PAYLOAD_SECTION = "fact_payload"
SIMILARITY_PAYLOAD_SECTION = "similarity_payload"
NOISE_PAYLOAD_SECTION = "noise_payload"

DEFAULT_MODEL_TAG = "reviewer-default"
DEFAULT_JUDGE_TAG = "judge-small"


class BackendError(Exception):
    """Transport-level failure talking to a model backend (retryable)."""


class BudgetExceededError(Exception):
    """Request rejected before any network call: prompt over the byte budget."""


class JudgeOutputError(Exception):
    """Judge response could not be parsed after the allowed retries."""


@dataclass(frozen=True, slots=True)
class ChatRequest:
    prompt: str
    temperature: float = 0.0  # deterministic by default
    max_output: int = 2048
    model_tag: str = DEFAULT_MODEL_TAG

    def __post_init__(self) -> None:
        if self.max_output <= 0:
            raise ValueError("max_output must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


class Backend(Protocol):
    def complete(self, req: ChatRequest) -> str: ...


@dataclass(frozen=True, slots=True)
class JudgeVerdictFact:
    comment_id: str
    verdict: bool
    rationale: str
    flagged: bool = False  # set when the judge output was unusable (fail-open)


@dataclass(frozen=True, slots=True)
class JudgeVerdictSim:
    pair: tuple[str, str]  # (generated comment id, human comment id)
    score: int

    def __post_init__(self) -> None:
        if self.score not in (1, 2, 3, 4):
            raise ValueError(f"similarity score out of range: {self.score}")


@dataclass(frozen=True, slots=True)
class RetryPolicy:
    attempts: int = 3
    base_delay: float = 1.0  # doubles per retry


class Gateway:
    """Budget guard + retry + concurrency cap around a backend.

    Safe for concurrent calls; response ordering across concurrent calls is
    not guaranteed to callers.
    """

    def __init__(
        self,
        backend: Backend,
        *,
        max_request_bytes: int = 1_000_000,
        retry: RetryPolicy = RetryPolicy(),
        max_concurrency: Optional[int] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self._backend = backend
        self._max_request_bytes = max_request_bytes
        self._retry = retry
        self._semaphore = threading.Semaphore(max_concurrency) if max_concurrency else None
        self._sleep = sleep

    def complete(self, req: ChatRequest) -> str:
        size = len(req.prompt.encode("utf-8"))
        if size > self._max_request_bytes:
            raise BudgetExceededError(
                f"prompt is {size} bytes, budget is {self._max_request_bytes}"
            )
        last: Optional[BackendError] = None
        for attempt in range(self._retry.attempts):
            if attempt:
                self._sleep(self._retry.base_delay * 2 ** (attempt - 1))
            try:
                if self._semaphore:
                    with self._semaphore:
                        return self._backend.complete(req)
                return self._backend.complete(req)
            except BackendError as exc:
                last = exc
                logger.warning("backend attempt %d failed: %s", attempt + 1, exc)
        raise BackendError(f"backend unreachable after {self._retry.attempts} attempts: {last}")


class HttpChatBackend:
    """Generic chat-completion HTTP/JSON backend.

    POSTs ``{base_url}/v1/chat/completions`` with a single user message and
    reads ``choices[0].message.content``. The bearer token comes from the
    environment variable named by ``auth_env``.
    """

    def __init__(self, base_url: str, *, auth_env: str = "REVIEWFLOW_API_TOKEN",
                 timeout: float = 60.0):
        self._base_url = base_url.rstrip("/")
        self._auth_env = auth_env
        self._client = httpx.Client(timeout=timeout)

    def complete(self, req: ChatRequest) -> str:
        headers = {}
        token = os.environ.get(self._auth_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        try:
            response = self._client.post(
                f"{self._base_url}/v1/chat/completions",
                headers=headers,
                json={
                    "model": req.model_tag,
                    "temperature": req.temperature,
                    "max_tokens": req.max_output,
                    "messages": [{"role": "user", "content": req.prompt}],
                },
            )
        except httpx.HTTPError as exc:
            raise BackendError(f"transport failure: {exc}") from exc
        if response.status_code >= 500:
            raise BackendError(f"server error {response.status_code}")
        if response.status_code != 200:
            raise BackendError(f"unexpected status {response.status_code}: {response.text[:200]}")
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise BackendError(f"malformed completion payload: {exc}") from exc


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:32]


class MockBackend:
    """Deterministic mock: responses come from ``<fixtures_dir>/<hash>.txt``.

    Unmatched prompts go to ``fallback`` when given, otherwise raise
    BackendError so tests notice missing fixtures.
    """

    def __init__(self, fixtures_dir: Optional[Path] = None, fallback: Optional[Backend] = None):
        self._dir = Path(fixtures_dir) if fixtures_dir else None
        self._fallback = fallback

    def complete(self, req: ChatRequest) -> str:
        if self._dir is not None:
            path = self._dir / f"{prompt_hash(req.prompt)}.txt"
            if path.exists():
                return path.read_text(encoding="utf-8")
        if self._fallback is not None:
            return self._fallback.complete(req)
        raise BackendError(f"no canned response for prompt hash {prompt_hash(req.prompt)}")


_WORD_RE = re.compile(r"[a-z0-9_]+")


def _token_set(text: str) -> set[str]:
    return set(_WORD_RE.findall(text.lower()))


def token_jaccard(a: str, b: str) -> float:
    ta, tb = _token_set(a), _token_set(b)
    if not ta and not tb:
        return 1.0
    if not ta or not tb:
        return 0.0
    return len(ta & tb) / len(ta | tb)


def similarity_score_from_overlap(overlap: float) -> int:
    """Map token overlap onto the 1..4 similarity scale."""
    if overlap >= 0.75:
        return 4
    if overlap >= 0.45:
        return 3
    if overlap >= 0.15:
        return 2
    return 1


_NOISE_PATTERNS = (
    "lgtm",
    "looks good",
    "good job",
    "nice work",
    "nice!",
    "well done",
    "ship it",
    "+1",
    "thanks",
    "great",
    "lol",
    "haha",
    ":)",
    "😂",
    "👍",
)


def is_noise_comment(text: str) -> bool:
    """Affirmation/humour detector used by the offline noise judge."""
    lowered = text.lower().strip()
    if not lowered:
        return True
    if any(p in lowered for p in _NOISE_PATTERNS):
        technical = ("`" in text) or any(
            w in lowered for w in ("fix", "check", "handle", "leak", "error", "null", "race")
        )
        return not technical
    return False


def _extract_section(prompt: str, name: str) -> Optional[str]:
    m = re.search(
        rf"<<SECTION {name}>>\n(.*?)\n<<END {name}>>", prompt, re.DOTALL
    )
    return m.group(1) if m else None


class HeuristicBackend:
    """Offline deterministic backend covering all four prompt shapes.

    - generation prompts: emits one templated comment per changed file on its
      first added line (capped at three files);
    - factual judge: rejects comments whose file is not in the diff or whose
      body carries the ``[fabricated]`` sentinel;
    - similarity judge: token-overlap score on the 1..4 scale;
    - noise judge: affirmation/humour lexicon.
    """

    max_files = 3

    def complete(self, req: ChatRequest) -> str:
        prompt = req.prompt
        fact = _extract_section(prompt, FACT_PAYLOAD_SECTION)
        if fact is not None:
            return self._judge_fact(fact)
        sim = _extract_section(prompt, SIMILARITY_PAYLOAD_SECTION)
        if sim is not None:
            payload = json.loads(sim)
            score = similarity_score_from_overlap(
                token_jaccard(payload["a"]["body"], payload["b"]["body"])
            )
            return f"```json\n{{\"score\": {score}}}\n```"
        noise = _extract_section(prompt, NOISE_PAYLOAD_SECTION)
        if noise is not None:
            payload = json.loads(noise)
            flags = [is_noise_comment(t) for t in payload["texts"]]
            return "```json\n" + json.dumps({"noisy": flags}) + "\n```"
        code = _extract_section(prompt, "code_change")
        if code is not None:
            return self._review(code)
        return "```json\n[]\n```"

    def _judge_fact(self, payload_text: str) -> str:
        payload = json.loads(payload_text)
        changed = {f["path"] for f in payload["changed_files"]}
        verdicts = []
        for item in payload["comments"]:
            ok = item["file_path"] in changed and "[fabricated]" not in item["body"]
            verdicts.append(
                {
                    "comment_id": item["comment_id"],
                    "verdict": ok,
                    "rationale": "file present in diff" if ok else "refers outside the diff",
                }
            )
        return "```json\n" + json.dumps(verdicts) + "\n```"

    def _review(self, code_change_text: str) -> str:
        try:
            change = diffs.parse_unified_diff(
                code_change_text.removesuffix("…[truncated]\n")
                if code_change_text.endswith("…[truncated]\n")
                else code_change_text
            )
        except diffs.DiffParseError:
            return "```json\n[]\n```"
        records = []
        for fd in change.files[: self.max_files]:
            if fd.new_path is None or fd.is_binary:
                continue
            line = None
            for hunk in fd.hunks:
                new_no = hunk.new_start
                for ln in hunk.lines:
                    if ln.kind == "added":
                        line = new_no
                        break
                    if ln.kind != "removed":
                        new_no += 1
                if line is not None:
                    break
            if line is None:
                continue
            records.append(
                {
                    "file_path": fd.new_path,
                    "line": line,
                    "body": (
                        f"Guard the new logic in `{fd.new_path}` at line {line} against "
                        "unexpected input, otherwise a malformed value crashes this path; "
                        "add a focused test for the failure case."
                    ),
                    "category": "maintainability",
                }
            )
        return "```json\n" + json.dumps(records) + "\n```"


# --- judges -------------------------------------------------------------------

FACT_JUDGE_PERSONA = (
    "You are a meticulous reviewer of machine-written code review comments."
)
FACT_JUDGE_TASK = (
    "For each candidate comment below, decide whether it is factually "
    "consistent with the given pull request: it must refer to code that the "
    "diff actually touches and describe it accurately."
)
FACT_JUDGE_INSTRUCTIONS = (
    "Reply with exactly one fenced code block containing a JSON array with one "
    "object per candidate: {\"comment_id\": str, \"verdict\": true|false, "
    "\"rationale\": str}. verdict=true keeps the comment, false discards it."
)
FACT_JUDGE_GUIDELINES = (
    "Judge only factual grounding, not usefulness or tone. A comment fails if "
    "it names files, symbols, or behavior absent from the diff, contradicts "
    "the shown code, or is unintelligible. When in doubt about usefulness but "
    "not facts, keep it."
)

SIM_JUDGE_PERSONA = "You compare two code review comments for semantic similarity."
SIM_JUDGE_TASK = (
    "Score how similar the intents of comments A and B are on a 1-4 scale: "
    "1 no similarity, 2 weak similarity, 3 high similarity, 4 very high "
    "similarity."
)
SIM_JUDGE_INSTRUCTIONS = (
    "Reply with exactly one fenced code block containing {\"score\": n} with "
    "n in 1..4."
)
SIM_JUDGE_GUIDELINES = (
    "Similar intent matters, not identical wording: two comments asking for "
    "the same fix at the same place are a 4 even when phrased differently."
)

NOISE_JUDGE_PERSONA = "You triage human code review comments for an evaluation corpus."
NOISE_JUDGE_TASK = (
    "Flag comments that are noise: pure affirmations (praise, approvals) or "
    "humour, carrying no reviewable content."
)
NOISE_JUDGE_INSTRUCTIONS = (
    "Reply with exactly one fenced code block containing {\"noisy\": [...]}, "
    "one boolean per input text, in order."
)

_FENCED_RE = re.compile(r"```(?:json)?\s*\n(.*?)```", re.DOTALL)


def extract_fenced_json(raw: str):
    """Parse the first fenced JSON block; returns None when absent/invalid."""
    m = _FENCED_RE.search(raw)
    if not m:
        return None
    try:
        return json.loads(m.group(1))
    except json.JSONDecodeError:
        return None


def _fact_prompt(comments: Sequence[ReviewComment], ctx: PullRequestContext) -> str:
    changed = []
    for fd in ctx.change.files:
        if fd.new_path is None:
            continue
        ranges = [[h.new_start, h.new_count] for h in fd.hunks]
        changed.append({"path": fd.new_path, "new_ranges": ranges})
    payload = {
        "pr_title": ctx.title,
        "pr_description": ctx.description,
        "changed_files": changed,
        "comments": [
            {
                "comment_id": c.comment_id,
                "file_path": c.file_path,
                "line": c.line,
                "body": c.body,
            }
            for c in comments
        ],
    }
    return "\n\n".join(
        [
            fence_section("persona", FACT_JUDGE_PERSONA),
            fence_section("task", FACT_JUDGE_TASK),
            fence_section("instructions", FACT_JUDGE_INSTRUCTIONS),
            fence_section("assessment_guidelines", FACT_JUDGE_GUIDELINES),
            fence_section(FACT_PAYLOAD_SECTION, json.dumps(payload, sort_keys=True)),
        ]
    )


def judge_fact(
    comments: Sequence[ReviewComment],
    ctx: PullRequestContext,
    gateway: Gateway,
    *,
    model_tag: str = DEFAULT_JUDGE_TAG,
) -> tuple[list[ReviewComment], list[JudgeVerdictFact]]:
    """Run the factual-correctness judge over candidate comments.

    Returns the comments with their states advanced (true -> fact_checked,
    false -> rejected) plus one verdict per input. Unparseable judge output
    fails open: every comment passes, flagged.
    """
    for c in comments:
        if c.state != "candidate":
            raise ValueError(f"judge_fact expects candidates, got {c.state}")
    if not comments:
        return [], []
    raw = gateway.complete(ChatRequest(prompt=_fact_prompt(comments, ctx), model_tag=model_tag))
    parsed = extract_fenced_json(raw)
    by_id: dict[str, dict] = {}
    if isinstance(parsed, list):
        for item in parsed:
            if isinstance(item, dict) and "comment_id" in item:
                by_id[str(item["comment_id"])] = item
    parse_failed = not by_id
    if parse_failed:
        logger.warning("unparseable factual-judge output; failing open")
    verdicts: list[JudgeVerdictFact] = []
    updated: list[ReviewComment] = []
    for c in comments:
        item = by_id.get(c.comment_id)
        if item is None or not isinstance(item.get("verdict"), bool):
            verdicts.append(
                JudgeVerdictFact(
                    c.comment_id,
                    verdict=True,
                    rationale="judge output unusable; failing open",
                    flagged=True,
                )
            )
            updated.append(c.advance("fact_checked"))
            continue
        verdict = item["verdict"]
        verdicts.append(
            JudgeVerdictFact(c.comment_id, verdict, str(item.get("rationale", "")))
        )
        updated.append(c.advance("fact_checked") if verdict else c.reject())
    return updated, verdicts


def _similarity_prompt(generated: ReviewComment, human: ReviewComment) -> str:
    payload = {
        "a": {"comment_id": generated.comment_id, "body": generated.body},
        "b": {"comment_id": human.comment_id, "body": human.body},
    }
    return "\n\n".join(
        [
            fence_section("persona", SIM_JUDGE_PERSONA),
            fence_section("task", SIM_JUDGE_TASK),
            fence_section("instructions", SIM_JUDGE_INSTRUCTIONS),
            fence_section("assessment_guidelines", SIM_JUDGE_GUIDELINES),
            fence_section(SIMILARITY_PAYLOAD_SECTION, json.dumps(payload, sort_keys=True)),
        ]
    )


def judge_similarity(
    generated: ReviewComment,
    human: ReviewComment,
    gateway: Gateway,
    *,
    model_tag: str = DEFAULT_JUDGE_TAG,
) -> JudgeVerdictSim:
    """Score semantic similarity of a generated/human comment pair (1..4).

    One retry on unparseable output, then JudgeOutputError.
    """
    if not generated.body or not human.body:
        raise ValueError("both comments must be non-empty")
    prompt = _similarity_prompt(generated, human)
    for attempt in range(2):
        raw = gateway.complete(ChatRequest(prompt=prompt, model_tag=model_tag))
        parsed = extract_fenced_json(raw)
        if isinstance(parsed, dict) and parsed.get("score") in (1, 2, 3, 4):
            return JudgeVerdictSim(
                pair=(generated.comment_id, human.comment_id), score=parsed["score"]
            )
        logger.warning("unparseable similarity-judge output (attempt %d)", attempt + 1)
    raise JudgeOutputError("similarity judge returned no usable score after retry")


def judge_noise(texts: Sequence[str], gateway: Gateway, *,
                model_tag: str = DEFAULT_JUDGE_TAG) -> list[bool]:
    """Flag affirmation/humour noise comments; fails open to 'not noise'."""
    if not texts:
        return []
    prompt = "\n\n".join(
        [
            fence_section("persona", NOISE_JUDGE_PERSONA),
            fence_section("task", NOISE_JUDGE_TASK),
            fence_section("instructions", NOISE_JUDGE_INSTRUCTIONS),
            fence_section(NOISE_PAYLOAD_SECTION, json.dumps({"texts": list(texts)})),
        ]
    )
    raw = gateway.complete(ChatRequest(prompt=prompt, model_tag=model_tag))
    parsed = extract_fenced_json(raw)
    if (
        isinstance(parsed, dict)
        and isinstance(parsed.get("noisy"), list)
        and len(parsed["noisy"]) == len(texts)
        and all(isinstance(v, bool) for v in parsed["noisy"])
    ):
        return parsed["noisy"]
    logger.warning("unparseable noise-judge output; keeping all comments")
    return [False] * len(texts)
