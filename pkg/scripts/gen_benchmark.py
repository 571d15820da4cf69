#!/usr/bin/env python3
"""Regenerate the 10-case benchmark fixture and its scripted responses.

Each case is one new-file diff with a case-specific marker token in its
content, human comments anchored inside the hunk, and a canned generator
response keyed by that marker. Token overlaps between canned and human
bodies are crafted so the offline similarity judge scores them 4/3/2/1 as
the alignment tests expect.

Run from the repo root: python3 scripts/gen_benchmark.py
"""

from __future__ import annotations

import json
import sys
from datetime import datetime, timezone
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from reviewflow.evaluation import BenchmarkCase, CaseProvenance, write_case
from reviewflow.diffs import parse_unified_diff
from reviewflow.model import PullRequestContext, ReviewComment

ROOT = Path(__file__).resolve().parent.parent
BENCH_DIR = ROOT / "tests" / "fixtures" / "benchmark"
RESPONSES = ROOT / "tests" / "fixtures" / "benchmark_responses.json"

CREATED = datetime(2024, 9, 1, tzinfo=timezone.utc)


def new_file_diff(path: str, marker: str, lines: int) -> str:
    body = "".join(f"+{marker} content line {i}\n" for i in range(1, lines + 1))
    return f"--- /dev/null\n+++ b/{path}\n@@ -0,0 +1,{lines} @@\n{body}"


def human(cid: str, path: str, line: int, body: str) -> ReviewComment:
    return ReviewComment(cid, "human", path, line, body)


def case(case_id, pr_id, files, humans, year=2024):
    diff = "".join(new_file_diff(p, m, n) for p, m, n in files)
    ctx = PullRequestContext(
        pr_id=pr_id,
        title=f"Change for {case_id}",
        description=f"Benchmark change {case_id}.",
        issue_refs=(),
        change=parse_unified_diff(diff),
        source_commit=f"{case_id}00c",
        created_at=CREATED,
    )
    return BenchmarkCase(
        case_id=case_id,
        context=ctx,
        human_comments=tuple(humans),
        provenance=CaseProvenance(has_pr_info=True, has_issue_info=True, year=year),
    )


H01 = "Guard the `parse_row` call against empty input, otherwise the importer crashes on blank lines."
H02 = "Close the `session` handle in a finally block, otherwise connections leak under errors."
H03 = "Rename `tmp` to something meaningful, readers cannot tell what it holds."
H04 = "Extract this into a helper, the duplication with `report_weekly` is growing."
H05 = "Validate the `offset` bounds before slicing, negative values wrap around silently."
H06 = "Handle the `None` return from `lookup`, it propagates and breaks rendering."
H07 = "Check the loop exit condition, it never terminates for single-element lists."
H08 = "Check the `cursor` is closed on the error path, otherwise connections pile up."
H09 = "Wrap the `deserialize` call in a try block, corrupt payloads currently kill the consumer."
H10 = "Avoid reading the whole file into memory here, large exports exhaust the container."

CASES = [
    case("case01", "pr-01", [("src/case01_import.py", "case01marker", 15)],
         [human("h01-1", "src/case01_import.py", 5, H01)]),
    case("case02", "pr-02", [("src/case02_session.py", "case02marker", 15)],
         [human("h02-1", "src/case02_session.py", 4, H02)]),
    case("case03", "pr-03", [("src/case03_naming.py", "case03marker", 15)],
         [human("h03-1", "src/case03_naming.py", 7, H03)]),
    case("case04", "pr-04", [("src/case04_dup.py", "case04marker", 15)],
         [human("h04-1", "src/case04_dup.py", 9, H04)]),
    case("case05", "pr-05", [("src/case05_bounds.py", "case05marker", 20)],
         [human("h05-1", "src/case05_bounds.py", 5, H05)]),
    case("case06", "pr-06",
         [("src/case06_a.py", "case06amarker", 10), ("src/case06_b.py", "case06bmarker", 10)],
         [human("h06-1", "src/case06_a.py", 3, H06)]),
    case("case07", "pr-07", [("src/case07_loop.py", "case07marker", 15)],
         [human("h07-1", "src/case07_loop.py", 6, H07)]),
    case("case08", "pr-08", [("src/case08_db.py", "case08marker", 20)],
         [human("h08-1", "src/case08_db.py", 2, H08)]),
    case("case09", "pr-0910", [("src/case09_consume.py", "case09marker", 15)],
         [human("h09-1", "src/case09_consume.py", 8, H09)]),
    case("case10", "pr-0910",
         [("src/case10_a.py", "case10amarker", 10), ("src/case10_b.py", "case10bmarker", 10)],
         [human("h10-1", "src/case10_a.py", 4, H10)]),
]

# Canned generator output per case marker. Alignment outcomes (offline
# similarity judge over token overlap, +/-10 line window):
#   case01 exact copy at same line            -> score 4, HAC
#   case02 paraphrase (overlap 8/17=0.47)  +5 -> score 3, HAC
#   case03 related   (overlap 5/18=0.28) same -> score 2, location-only
#   case04 disjoint  (overlap 1/22=0.05) same -> score 1, location-only
#   case05 +11 lines                          -> no location match
#   case06 other changed file                 -> no location match
#   case07 anchor outside the diff            -> discarded, nothing judged
#   case08 copy (HAC) + far disjoint (!HAC)
#   case09 exact copy (HAC)      } same PR
#   case10 other changed file (!)} pr-0910
RESPONSES_BY_MARKER = {
    "case01marker": [
        {"file_path": "src/case01_import.py", "line": 5, "body": H01, "category": "bug"},
    ],
    "case02marker": [
        {
            "file_path": "src/case02_session.py",
            "line": 9,
            "body": "Close the `session` handle in a finally block to avoid connection leaks.",
            "category": "bug",
        },
    ],
    "case03marker": [
        {
            "file_path": "src/case03_naming.py",
            "line": 7,
            "body": "Rename `row_count` so readers can tell what it tracks, otherwise reviews stall.",
            "category": "readability",
        },
    ],
    "case04marker": [
        {
            "file_path": "src/case04_dup.py",
            "line": 9,
            "body": "Release the `buffer` memory after use, otherwise long jobs exhaust available heap.",
            "category": "performance",
        },
    ],
    "case05marker": [
        {
            "file_path": "src/case05_bounds.py",
            "line": 16,
            "body": "Propagate the `timeout` errors to callers, otherwise slow backends stall every worker.",
            "category": "bug",
        },
    ],
    "case06amarker": [
        {
            "file_path": "src/case06_b.py",
            "line": 3,
            "body": "Cache the `schema` lookup result, otherwise repeated parsing slows every request.",
            "category": "performance",
        },
    ],
    "case07marker": [
        {
            "file_path": "src/case07_loop.py",
            "line": 999,
            "body": "Check the `window` arithmetic here, otherwise ranges go negative.",
            "category": "bug",
        },
    ],
    "case08marker": [
        {"file_path": "src/case08_db.py", "line": 2, "body": H08, "category": "bug"},
        {
            "file_path": "src/case08_db.py",
            "line": 18,
            "body": "Split the `megaparse` function into smaller units, otherwise nobody can test the branches.",
            "category": "maintainability",
        },
    ],
    "case09marker": [
        {"file_path": "src/case09_consume.py", "line": 8, "body": H09, "category": "bug"},
    ],
    "case10amarker": [
        {
            "file_path": "src/case10_b.py",
            "line": 6,
            "body": "Escape the `query` fragment before embedding it, otherwise injection becomes trivial.",
            "category": "security",
        },
    ],
}


def main() -> None:
    if BENCH_DIR.exists():
        import shutil

        shutil.rmtree(BENCH_DIR)
    BENCH_DIR.mkdir(parents=True)
    for c in CASES:
        write_case(BENCH_DIR, c)
    RESPONSES.write_text(json.dumps(RESPONSES_BY_MARKER, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {len(CASES)} cases to {BENCH_DIR} and responses to {RESPONSES.name}")


if __name__ == "__main__":
    main()
