"""The actionability gate: filter fact-checked comments unlikely to drive a
code change.

Two classifier implementations sit behind one interface: a deterministic
lexical baseline (fixed hand-set feature weights, documented inline) and a
remote client speaking the scorer wire protocol (POST /score, POST /healthz).
"""

from __future__ import annotations

import json
import logging
import math
import re
import time
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence

import httpx

from .gateway import RetryPolicy
from .model import ResolutionRecord, ReviewComment

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.5


class ClassifierUnavailableError(Exception):
    """The scoring backend cannot be reached."""


class EmptyExportError(Exception):
    """No training pairs survived filtering."""


@dataclass(frozen=True, slots=True)
class ActionabilityScore:
    comment_id: str
    probability: float
    threshold_used: float
    passed: bool
    note: Optional[str] = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError("probability must lie in [0, 1]")
        if self.passed != (self.probability >= self.threshold_used):
            raise ValueError("passed must equal probability >= threshold")


class CommentClassifier(Protocol):
    def score_texts(self, texts: Sequence[str]) -> list[float]: ...


_IMPERATIVE_VERBS = {
    "add", "avoid", "cache", "check", "close", "consider", "ensure", "escape",
    "extract", "fix", "free", "guard", "handle", "log", "make", "move", "pass",
    "prefer", "propagate", "raise", "release", "remove", "rename", "replace",
    "return", "split", "switch", "use", "validate", "wrap",
}

_CONSEQUENCE_MARKERS = (
    "because", "otherwise", "leads to", "results in", "causes", "can cause",
    "may cause", "will break", "breaks", "risks", "to avoid", "prevents",
    "crash", "leak", "race", "overflow", "injection", "deadlock", "exception",
    "error", "silently", "corrupt", "loses", "fails",
)

_PRAISE_PATTERNS = (
    "good job", "great", "nice", "awesome", "well done", "lgtm", "looks good",
    "ship it", "thanks", "love it", "perfect", "+1", "👍",
)

_FORMATTING_NITS = (
    "blank line", "whitespace", "trailing space", "indent", "indentation",
    "spacing", "newline at end", "new line here", "nit:", "/nit",
)

_WORD_RE = re.compile(r"[\w']+")


class LexicalActionabilityBaseline:
    """Deterministic logistic scorer over hand-set lexical features.

    Feature weights (logit contributions):
      +2.0  body references a code element in backticks
      +1.0  leads with an imperative verb
      +1.5  states a consequence (because/otherwise/crash/leak/...)
      -2.0  the body is nothing but a question
      -3.0  praise/affirmation phrasing with no technical content
      -2.5  pure formatting nit (blank lines, whitespace, indentation)
      -1.0  very short (< 4 words) without a code reference
      +0.5  substantial body (>= 8 words)
      -1.0  bias
    """

    bias = -1.0

    def score_texts(self, texts: Sequence[str]) -> list[float]:
        return [self._score(t) for t in texts]

    def _score(self, text: str) -> float:
        z = self.bias
        words = _WORD_RE.findall(text.lower())
        lowered = text.lower()
        has_code = "`" in text
        if has_code:
            z += 2.0
        if words and words[0] in _IMPERATIVE_VERBS:
            z += 1.0
        if any(marker in lowered for marker in _CONSEQUENCE_MARKERS):
            z += 1.5
        stripped = text.strip()
        if stripped.endswith("?") and "." not in stripped and "!" not in stripped:
            z -= 2.0  # question-only body
        if any(p in lowered for p in _PRAISE_PATTERNS) and not has_code:
            z -= 3.0
        if any(nit in lowered for nit in _FORMATTING_NITS):
            z -= 2.5
        if len(words) < 4 and not has_code:
            z -= 1.0
        if len(words) >= 8:
            z += 0.5
        return 1.0 / (1.0 + math.exp(-z))


class RemoteClassifier:
    """Client for the scorer wire protocol served by the trainer component."""

    def __init__(
        self,
        base_url: str,
        *,
        timeout: float = 30.0,
        retry: RetryPolicy = RetryPolicy(),
        sleep: Callable[[float], None] = time.sleep,
    ):
        self._base_url = base_url.rstrip("/")
        self._client = httpx.Client(timeout=timeout)
        self._retry = retry
        self._sleep = sleep

    def _post(self, path: str, payload: dict) -> httpx.Response:
        last: Optional[Exception] = None
        for attempt in range(self._retry.attempts):
            if attempt:
                self._sleep(self._retry.base_delay * 2 ** (attempt - 1))
            try:
                return self._client.post(f"{self._base_url}{path}", json=payload)
            except httpx.HTTPError as exc:
                last = exc
                logger.warning("scorer attempt %d failed: %s", attempt + 1, exc)
        raise ClassifierUnavailableError(f"scorer unreachable: {last}")

    def score_texts(self, texts: Sequence[str]) -> list[float]:
        response = self._post("/score", {"texts": list(texts)})
        if response.status_code != 200:
            raise ClassifierUnavailableError(f"scorer returned {response.status_code}")
        probabilities = response.json().get("probabilities")
        if not isinstance(probabilities, list) or len(probabilities) != len(texts):
            raise ClassifierUnavailableError("scorer returned a malformed probability list")
        return [float(p) for p in probabilities]

    def health(self) -> dict:
        response = self._post("/healthz", {})
        if response.status_code != 200:
            raise ClassifierUnavailableError(f"healthz returned {response.status_code}")
        return response.json()


def score(
    comments: Sequence[ReviewComment],
    classifier: CommentClassifier,
    *,
    threshold: float = DEFAULT_THRESHOLD,
    fail_open: bool = True,
) -> tuple[list[ReviewComment], list[ActionabilityScore]]:
    """Score fact-checked comments; passers advance to gated, failers reject.

    A classifier outage either fails open (every comment passes, flagged in
    the score note) or closed (every comment rejected), per ``fail_open``.
    """
    for c in comments:
        if c.state != "fact_checked":
            raise ValueError(f"gate expects fact_checked comments, got {c.state}")
    if not comments:
        return [], []
    try:
        probabilities = classifier.score_texts([c.body for c in comments])
    except ClassifierUnavailableError as exc:
        logger.warning("classifier unavailable (%s); fail_open=%s", exc, fail_open)
        note = f"classifier-unavailable: {'fail-open' if fail_open else 'fail-closed'}"
        probability = 1.0 if fail_open else 0.0
        scores = [
            ActionabilityScore(c.comment_id, probability, threshold, fail_open, note=note)
            for c in comments
        ]
        updated = [c.advance("gated") if fail_open else c.reject() for c in comments]
        return updated, scores
    scores = []
    updated = []
    for comment, probability in zip(comments, probabilities):
        passed = probability >= threshold
        scores.append(ActionabilityScore(comment.comment_id, probability, threshold, passed))
        updated.append(comment.advance("gated") if passed else comment.reject())
    return updated, scores


def export_training_pairs(
    records: Sequence[ResolutionRecord], *, cutoff: datetime
) -> list[dict]:
    """Build <comment, resolved?> training rows from resolution records.

    Only resolved/unresolved records observed strictly before the cutoff are
    exported; indeterminate records and anything at or after the cutoff are
    excluded so later training cannot leak evaluation-period data.
    """
    rows = []
    for record in records:
        if record.verdict not in ("resolved", "unresolved"):
            continue
        if record.observed_at is None or record.observed_at >= cutoff:
            continue
        rows.append(
            {"text": record.comment.body, "label": 1 if record.verdict == "resolved" else 0}
        )
    if not rows:
        raise EmptyExportError("no training pairs before the cutoff")
    return rows


def write_training_file(rows: Sequence[dict], path: Path) -> None:
    path.write_text(
        "\n".join(json.dumps(row, ensure_ascii=False) for row in rows) + "\n",
        encoding="utf-8",
    )


def wire_contract_errors(base_url: str) -> list[str]:
    """Exercise the scorer wire protocol; returns human-readable violations.

    Covers: healthz shape, empty batch, duplicate texts scoring equal,
    oversize text still scored, order preservation, and malformed-request
    handling. An empty list means the scorer honors the contract.
    """
    errors: list[str] = []
    client = httpx.Client(timeout=60.0, base_url=base_url.rstrip("/"))

    health = client.post("/healthz", json={})
    if health.status_code != 200:
        errors.append(f"healthz: expected 200, got {health.status_code}")
    else:
        body = health.json()
        if body.get("status") != "ok" or not body.get("model_version"):
            errors.append(f"healthz: malformed body {body!r}")

    empty = client.post("/score", json={"texts": []})
    if empty.status_code != 200 or empty.json().get("probabilities") != []:
        errors.append("score: empty batch must return an empty probability list")

    dup = client.post("/score", json={"texts": ["Close the `file` handle."] * 2})
    probs = dup.json().get("probabilities", []) if dup.status_code == 200 else []
    if len(probs) != 2 or probs[0] != probs[1]:
        errors.append("score: duplicate texts must score identically")

    oversize = client.post("/score", json={"texts": ["word " * 2500]})
    if oversize.status_code != 200:
        errors.append("score: oversize text must be truncated and scored")
    else:
        values = oversize.json().get("probabilities", [])
        if len(values) != 1 or not (0.0 <= values[0] <= 1.0):
            errors.append("score: oversize text probability out of range")

    texts = ["Use `close()` before returning.", "Good job!", "Guard against `None` here."]
    first = client.post("/score", json={"texts": texts}).json().get("probabilities", [])
    second = client.post("/score", json={"texts": texts[::-1]}).json().get("probabilities", [])
    if len(first) != 3 or len(second) != 3 or first != second[::-1]:
        errors.append("score: responses must preserve input order")

    malformed = client.post("/score", json={"nope": 1})
    if malformed.status_code != 400 and malformed.status_code != 422:
        errors.append(f"score: malformed request must 400/422, got {malformed.status_code}")
    return errors
