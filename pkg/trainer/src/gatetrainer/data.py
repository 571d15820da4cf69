"""Dataset loading, seeded splitting, and the synthetic training corpus.

The training format is UTF-8 JSON lines, one ``{"text": ..., "label": 0|1}``
object per line -- exactly what the review pipeline's training-pair export
produces.
"""

from __future__ import annotations

import json
import random
from pathlib import Path


class DatasetError(ValueError):
    pass


class SingleClassDatasetError(DatasetError):
    """Training needs both labels present."""


def load_dataset(path: Path) -> list[dict]:
    rows = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"line {line_no}: invalid JSON ({exc})") from exc
        if not isinstance(row.get("text"), str) or row.get("label") not in (0, 1):
            raise DatasetError(f"line {line_no}: expected {{text: str, label: 0|1}}")
        rows.append({"text": row["text"], "label": int(row["label"])})
    labels = {row["label"] for row in rows}
    if len(labels) < 2:
        raise SingleClassDatasetError(
            f"dataset has {len(labels)} class(es); need both labels 0 and 1"
        )
    return rows


def split_dataset(
    rows: list[dict], eval_fraction: float, seed: int
) -> tuple[list[dict], list[dict]]:
    """Deterministic shuffle-and-cut split; same seed, same membership."""
    if not 0.0 < eval_fraction < 1.0:
        raise DatasetError("eval split fraction must lie in (0, 1)")
    indices = list(range(len(rows)))
    random.Random(seed).shuffle(indices)
    n_eval = max(1, int(round(len(rows) * eval_fraction)))
    eval_idx = set(indices[:n_eval])
    train = [rows[i] for i in indices[n_eval:]]
    eval_rows = [rows[i] for i in sorted(eval_idx)]
    if not train:
        raise DatasetError("split leaves no training rows")
    return train, eval_rows


_ACTIONABLE_TEMPLATES = [
    "Close the `{ident}` handle in a finally block, otherwise descriptors leak on errors.",
    "Guard `{ident}` against empty input, this crashes on blank batches.",
    "Use a bound parameter for `{ident}` instead of string concatenation to avoid injection.",
    "Check the return value of `{ident}`, failures are silently ignored here.",
    "Move the `{ident}` call outside the loop, otherwise every row pays the full cost.",
    "Wrap `{ident}` in a timeout, a slow backend blocks the whole worker pool.",
    "Validate `{ident}` bounds before slicing, negative offsets wrap around silently.",
    "Release the `{ident}` lock on the error path, otherwise later requests deadlock.",
    "Handle the None return from `{ident}`, it propagates and breaks rendering.",
    "Propagate the `{ident}` error to the caller, swallowing it hides real failures.",
]

_NOISE_TEMPLATES = [
    "Good job!",
    "Nice work on this one!",
    "LGTM",
    "Looks good to me.",
    "Great stuff, ship it!",
    "Needs improvement",
    "Is this the best way?",
    "Why?",
    "Add a blank line here",
    "nit: spacing",
    "Remove trailing whitespace",
    "Interesting approach!",
    "Thanks for the quick fix!",
    "Hmm.",
]

_IDENTS = [
    "reader", "cursor", "session", "buffer", "client", "parser", "socket",
    "channel", "handle", "loader", "worker", "cache", "queue", "stream",
]


def synthetic_dataset(rows: int = 200, seed: int = 7) -> list[dict]:
    """A linearly separable corpus: actionable (1) vs praise/nit noise (0)."""
    rng = random.Random(seed)
    out = []
    for i in range(rows):
        if i % 2 == 0:
            template = rng.choice(_ACTIONABLE_TEMPLATES)
            out.append({"text": template.format(ident=rng.choice(_IDENTS)), "label": 1})
        else:
            noise = rng.choice(_NOISE_TEMPLATES)
            if rng.random() < 0.4:
                noise = noise + " " + rng.choice(["Really.", "Honestly.", ":)", "Cheers."])
            out.append({"text": noise, "label": 0})
    return out


def write_dataset(rows: list[dict], path: Path) -> None:
    Path(path).write_text(
        "".join(json.dumps(row, ensure_ascii=False) + "\n" for row in rows),
        encoding="utf-8",
    )
