from __future__ import annotations

import random
from datetime import datetime, timezone

import pytest

from reviewflow.gate import (
    ActionabilityScore,
    ClassifierUnavailableError,
    EmptyExportError,
    LexicalActionabilityBaseline,
    export_training_pairs,
    score,
)
from reviewflow.model import ResolutionRecord, ReviewComment

BASELINE = LexicalActionabilityBaseline()

# Hand-labeled fixture set for the lexical baseline. Label 1 = actionable.
LABELED_COMMENTS = [
    # --- noise exemplars -------------------------------------------------
    ("Good job!", 0),
    ("Add a blank line here", 0),
    ("Needs improvement", 0),
    ("Is this the best way?", 0),
    ("LGTM", 0),
    ("Looks good to me, ship it!", 0),
    ("Nice work!", 0),
    ("Why?", 0),
    ("I saw something similar in another project", 0),
    ("nit: spacing", 0),
    ("Remove trailing whitespace", 0),
    ("👍", 0),
    # --- actionable exemplars --------------------------------------------
    ("Use `ConcurrentHashMap` instead of `HashMap`; this cache is mutated from "
     "multiple request threads and races under load.", 1),
    ("Close the `reader` in a finally block, otherwise the file descriptor "
     "leaks when parsing fails.", 1),
    ("Guard against `items` being empty before indexing `items[0]`; this "
     "raises IndexError on empty carts.", 1),
    ("This query interpolates `user_id` into the SQL string; switch to a "
     "bound parameter to avoid injection.", 1),
    ("`parse_timestamp` swallows ValueError silently, so malformed rows are "
     "dropped without a trace; log or re-raise it.", 1),
    ("Validate the email format before saving, invalid rows currently crash "
     "the exporter downstream.", 1),
    ("Move the `commit()` outside the loop, otherwise each row pays a full "
     "transaction and the import takes hours.", 1),
    ("Check the return value of `rmdir` here; failures are ignored and leave "
     "stale directories behind.", 1),
    ("Wrap this call in a timeout: `fetch_remote` can hang forever and blocks "
     "the worker pool.", 1),
    ("Release `lock` in a finally block, otherwise an exception here "
     "deadlocks every later request.", 1),
    ("Should we handle the empty-list case here? `items[0]` raises "
     "IndexError on an empty response.", 1),
    ("Use `is None` instead of `== None`; this class overrides `__eq__` and "
     "the comparison silently misfires.", 1),
]


def test_paper_noise_exemplars_rejected():
    for body in ("Good job!", "Add a blank line here", "Needs improvement",
                 "Is this the best way?"):
        probability = BASELINE.score_texts([body])[0]
        assert probability < 0.5, body


def test_actionable_exemplar_passes():
    body = ("Use `ConcurrentHashMap` instead of `HashMap`; this cache is mutated "
            "from multiple request threads and races under load.")
    assert BASELINE.score_texts([body])[0] >= 0.5


def test_baseline_agreement_on_labeled_fixture():
    texts = [t for t, _ in LABELED_COMMENTS]
    labels = [l for _, l in LABELED_COMMENTS]
    predictions = [p >= 0.5 for p in BASELINE.score_texts(texts)]
    agreement = sum(p == bool(l) for p, l in zip(predictions, labels)) / len(labels)
    assert agreement >= 0.9, f"agreement {agreement:.2f}"


def test_baseline_deterministic():
    texts = [t for t, _ in LABELED_COMMENTS]
    assert BASELINE.score_texts(texts) == BASELINE.score_texts(texts)


def fact_checked(body: str, cid: str = "c1") -> ReviewComment:
    return ReviewComment(cid, "generated", "f.py", 3, body, state="fact_checked")


def test_score_advances_and_rejects():
    comments = [
        fact_checked("Close the `reader` in a finally block, otherwise the "
                     "descriptor leaks on errors.", "good"),
        fact_checked("Good job!", "bad"),
    ]
    updated, scores = score(comments, BASELINE)
    assert [s.passed for s in scores] == [True, False]
    assert [c.state for c in updated] == ["gated", "rejected"]
    assert all(s.threshold_used == 0.5 for s in scores)


def test_score_requires_fact_checked_state():
    with pytest.raises(ValueError):
        score([ReviewComment("c", "generated", "f", 1, "b")], BASELINE)


class DownClassifier:
    def score_texts(self, texts):
        raise ClassifierUnavailableError("down")


def test_score_fail_open_flags_notes():
    updated, scores = score([fact_checked("whatever")], DownClassifier(), fail_open=True)
    assert updated[0].state == "gated"
    assert scores[0].passed and "classifier-unavailable" in scores[0].note


def test_score_fail_closed_rejects():
    updated, scores = score([fact_checked("whatever")], DownClassifier(), fail_open=False)
    assert updated[0].state == "rejected"
    assert not scores[0].passed


def test_gate_monotonicity_in_threshold():
    rng = random.Random(13)
    for _ in range(100):
        probability = rng.random()
        thresholds = sorted(rng.random() for _ in range(2))
        low = ActionabilityScore("c", probability, thresholds[0], probability >= thresholds[0])
        high = ActionabilityScore("c", probability, thresholds[1], probability >= thresholds[1])
        if high.passed:
            assert low.passed  # lowering the threshold never rejects a passer


def test_actionability_score_invariant():
    with pytest.raises(ValueError):
        ActionabilityScore("c", 0.4, 0.5, True)


# --- training export ------------------------------------------------------------


def record(body: str, verdict: str, day: int, commit: str | None = None) -> ResolutionRecord:
    comment = ReviewComment("c" + body[:4], "generated", "f.py", 1, body, state="posted")
    return ResolutionRecord(
        comment,
        "pr-1",
        verdict,
        resolving_commit=commit,
        observed_at=datetime(2025, 1, day, tzinfo=timezone.utc),
    )


CUTOFF = datetime(2025, 1, 20, tzinfo=timezone.utc)


def test_export_labels_and_order():
    records = [
        record("resolved A", "resolved", 2, "abc"),
        record("resolved B", "resolved", 3, "def"),
        record("resolved C", "resolved", 4, "123"),
        record("unresolved D", "unresolved", 5),
        record("unresolved E", "unresolved", 6),
    ]
    rows = export_training_pairs(records, cutoff=CUTOFF)
    assert [r["label"] for r in rows] == [1, 1, 1, 0, 0]
    assert rows[0]["text"] == "resolved A"


def test_export_excludes_after_cutoff_and_indeterminate():
    records = [
        record("before", "resolved", 2, "abc"),
        record("on the cutoff day", "resolved", 20, "def"),
        record("after", "unresolved", 25),
        record("mystery", "indeterminate", 2),
    ]
    rows = export_training_pairs(records, cutoff=CUTOFF)
    assert [r["text"] for r in rows] == ["before"]


def test_export_empty_after_filter():
    with pytest.raises(EmptyExportError):
        export_training_pairs([record("late", "resolved", 25, "abc")], cutoff=CUTOFF)
