"""Offline evaluation: benchmark curation, human-alignment metrics, ablations.

A benchmark case is one code change plus its human-written comments. The
harness replays the generation pipeline over every case, matches each
surviving generated comment against the nearest human comment (same file,
within the location window), scores semantic similarity with the judge, and
aggregates per-comment and per-PR alignment rates over repeated runs with a
95% confidence interval.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

from . import gate as gate_mod
from . import gateway as gateway_mod
from .diffs import DEFAULT_LOCATION_WINDOW, location_match, render_unified_diff
from .generation import DEFAULT_MAX_COMMENTS_PER_PR, dedupe, parse_candidates
from .model import AlignmentVerdict, PullRequestContext, ReviewComment
from .prompts import PromptConfig, build, render
from .stats import mean_ci95

logger = logging.getLogger(__name__)

METRIC_NAMES = ("hac", "not_hac", "hac_location_only", "pr_hac", "pr_not_hac")


@dataclass(frozen=True, slots=True)
class CaseProvenance:
    has_pr_info: bool
    has_issue_info: bool
    year: int


@dataclass(frozen=True, slots=True)
class BenchmarkCase:
    case_id: str
    context: PullRequestContext
    human_comments: tuple[ReviewComment, ...]
    provenance: CaseProvenance

    def __post_init__(self) -> None:
        from .diffs import LineAnchor, anchor_in_diff

        for comment in self.human_comments:
            if comment.origin != "human":
                raise ValueError(f"{self.case_id}: benchmark comments must be human")
            if not anchor_in_diff(
                LineAnchor(comment.file_path, comment.line), self.context.change
            ):
                raise ValueError(
                    f"{self.case_id}: human comment {comment.comment_id} anchors "
                    "outside the case's change"
                )


# --- benchmark directory format --------------------------------------------------
# one directory per case: change.diff, context.json, human_comments.jsonl


def write_case(root: Path, case: BenchmarkCase) -> Path:
    case_dir = root / case.case_id
    case_dir.mkdir(parents=True, exist_ok=True)
    (case_dir / "change.diff").write_text(
        render_unified_diff(case.context.change), encoding="utf-8"
    )
    context = case.context.to_dict()
    context.pop("change")
    context["provenance"] = {
        "has_pr_info": case.provenance.has_pr_info,
        "has_issue_info": case.provenance.has_issue_info,
        "year": case.provenance.year,
    }
    (case_dir / "context.json").write_text(
        json.dumps(context, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    (case_dir / "human_comments.jsonl").write_text(
        "".join(json.dumps(c.to_dict(), ensure_ascii=False) + "\n" for c in case.human_comments),
        encoding="utf-8",
    )
    return case_dir


def load_case(case_dir: Path) -> BenchmarkCase:
    data = json.loads((case_dir / "context.json").read_text(encoding="utf-8"))
    provenance = data.pop("provenance")
    data["change"] = (case_dir / "change.diff").read_text(encoding="utf-8")
    context = PullRequestContext.from_dict(data)
    comments = tuple(
        ReviewComment.from_dict(json.loads(line))
        for line in (case_dir / "human_comments.jsonl").read_text(encoding="utf-8").splitlines()
        if line.strip()
    )
    return BenchmarkCase(
        case_id=case_dir.name,
        context=context,
        human_comments=comments,
        provenance=CaseProvenance(
            has_pr_info=provenance["has_pr_info"],
            has_issue_info=provenance["has_issue_info"],
            year=provenance["year"],
        ),
    )


def load_benchmark(root: Path) -> list[BenchmarkCase]:
    return [load_case(p) for p in sorted(root.iterdir()) if p.is_dir()]


# --- curation ---------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class FunnelStage:
    label: str
    removed: int
    remaining: int


@dataclass(frozen=True, slots=True)
class FunnelReport:
    initial: int
    stages: tuple[FunnelStage, ...]

    @property
    def final(self) -> int:
        return self.stages[-1].remaining if self.stages else self.initial

    def to_dict(self) -> dict:
        return {
            "initial": self.initial,
            "stages": [
                {"label": s.label, "removed": s.removed, "remaining": s.remaining}
                for s in self.stages
            ],
            "final": self.final,
        }


def curate(
    cases: Sequence[BenchmarkCase],
    gateway: gateway_mod.Gateway,
    *,
    year_range: tuple[int, int] = (2022, 2025),
) -> tuple[list[BenchmarkCase], FunnelReport]:
    """Apply the benchmark funnel, in order:

    1. drop cases without both PR and issue information;
    2. drop cases whose human comments are all noise (affirmation/humour),
       per the LLM noise judge;
    3. drop cases outside the recency window.
    """
    initial = len(cases)
    stages: list[FunnelStage] = []

    with_info = [c for c in cases if c.provenance.has_pr_info and c.provenance.has_issue_info]
    stages.append(
        FunnelStage("missing-pr-or-issue-info", initial - len(with_info), len(with_info))
    )

    clean: list[BenchmarkCase] = []
    for case in with_info:
        flags = gateway_mod.judge_noise([c.body for c in case.human_comments], gateway)
        if case.human_comments and all(flags):
            continue
        clean.append(case)
    stages.append(FunnelStage("noisy-comments", len(with_info) - len(clean), len(clean)))

    lo, hi = year_range
    recent = [c for c in clean if lo <= c.provenance.year <= hi]
    stages.append(FunnelStage("outside-recency-window", len(clean) - len(recent), len(recent)))

    return recent, FunnelReport(initial=initial, stages=tuple(stages))


# --- alignment --------------------------------------------------------------------


def best_alignment(
    generated: ReviewComment,
    humans: Sequence[ReviewComment],
    gateway: gateway_mod.Gateway,
    *,
    window: int = DEFAULT_LOCATION_WINDOW,
) -> AlignmentVerdict:
    """Match one generated comment against the best location-matching human.

    Among location matches the highest similarity score wins; ties break by
    line distance, then comment id. Aligned requires a 3 or 4.
    """
    matches = [h for h in humans if location_match(generated, h, window)]
    if not matches:
        return AlignmentVerdict(
            generated=generated,
            matched_human=None,
            location_match=False,
            similarity_score=None,
            aligned=False,
        )
    scored: list[tuple[int, int, str, ReviewComment]] = []
    for human in matches:
        verdict = gateway_mod.judge_similarity(generated, human, gateway)
        scored.append(
            (verdict.score, abs(generated.line - human.line), human.comment_id, human)
        )
    scored.sort(key=lambda item: (-item[0], item[1], item[2]))
    score, _, _, best = scored[0]
    return AlignmentVerdict(
        generated=generated,
        matched_human=best,
        location_match=True,
        similarity_score=score,
        aligned=score >= 3,
    )


@dataclass(frozen=True, slots=True)
class PipelineSettings:
    """Which pipeline pieces an evaluation run exercises."""

    prompt: PromptConfig = field(default_factory=PromptConfig)
    fact_check: bool = True
    gate: bool = True
    gate_threshold: float = gate_mod.DEFAULT_THRESHOLD
    max_comments: int = DEFAULT_MAX_COMMENTS_PER_PR
    location_window: int = DEFAULT_LOCATION_WINDOW

    def without_component(self, component: str) -> "PipelineSettings":
        return replace(self, prompt=self.prompt.without(component))


@dataclass(frozen=True, slots=True)
class CaseResult:
    case_id: str
    pr_id: str
    verdicts: tuple[AlignmentVerdict, ...]
    unjudged: int  # generated comments the judge could not score
    skipped: bool = False


def evaluate_case(
    case: BenchmarkCase,
    settings: PipelineSettings,
    gateway: gateway_mod.Gateway,
    classifier: gate_mod.CommentClassifier,
) -> CaseResult:
    """Run the generation pipeline on one case and align the survivors."""
    ctx = case.context
    raw = gateway.complete(
        gateway_mod.ChatRequest(prompt=render(build(ctx, settings.prompt)))
    )
    candidates, _ = parse_candidates(raw, ctx.change, id_prefix=f"{case.case_id}")
    kept = dedupe(candidates, settings.max_comments)
    if settings.fact_check:
        checked, _ = gateway_mod.judge_fact(kept, ctx, gateway)
        kept = [c for c in checked if c.state == "fact_checked"]
    else:
        kept = [c.advance("fact_checked") for c in kept]
    if settings.gate:
        gated, _ = gate_mod.score(kept, classifier, threshold=settings.gate_threshold)
        kept = [c for c in gated if c.state == "gated"]
    else:
        kept = [c.advance("gated") for c in kept]

    verdicts: list[AlignmentVerdict] = []
    unjudged = 0
    for comment in kept:
        try:
            verdicts.append(
                best_alignment(
                    comment, case.human_comments, gateway, window=settings.location_window
                )
            )
        except gateway_mod.JudgeOutputError:
            unjudged += 1
    return CaseResult(
        case_id=case.case_id, pr_id=ctx.pr_id, verdicts=tuple(verdicts), unjudged=unjudged
    )


@dataclass(frozen=True, slots=True)
class RunMetrics:
    hac: float
    not_hac: float
    hac_location_only: float
    pr_hac: float
    pr_not_hac: float
    generated_total: int
    skipped_cases: int

    def metric(self, name: str) -> float:
        return getattr(self, name)

    def to_dict(self) -> dict:
        return {
            "hac": self.hac,
            "not_hac": self.not_hac,
            "hac_location_only": self.hac_location_only,
            "pr_hac": self.pr_hac,
            "pr_not_hac": self.pr_not_hac,
            "generated_total": self.generated_total,
            "skipped_cases": self.skipped_cases,
        }


def aggregate_metrics(results: Sequence[CaseResult]) -> RunMetrics:
    """Per-comment and per-PR alignment rates over one run's case results.

    Denominators: comment rates divide by all pipeline-surviving generated
    comments (judge-failed ones count toward the total but toward neither
    numerator); PR rates divide by the distinct pull requests evaluated.
    """
    evaluated = [r for r in results if not r.skipped]
    total = sum(len(r.verdicts) + r.unjudged for r in evaluated)
    aligned = sum(sum(1 for v in r.verdicts if v.aligned) for r in evaluated)
    not_aligned = sum(sum(1 for v in r.verdicts if not v.aligned) for r in evaluated)
    located = sum(sum(1 for v in r.verdicts if v.location_match) for r in evaluated)

    pr_ids = sorted({r.pr_id for r in evaluated})
    aligned_prs = {
        r.pr_id for r in evaluated if any(v.aligned for v in r.verdicts)
    }
    not_aligned_prs = {
        r.pr_id for r in evaluated if any(not v.aligned for v in r.verdicts)
    }
    return RunMetrics(
        hac=aligned / total if total else 0.0,
        not_hac=not_aligned / total if total else 0.0,
        hac_location_only=located / total if total else 0.0,
        pr_hac=len(aligned_prs) / len(pr_ids) if pr_ids else 0.0,
        pr_not_hac=len(not_aligned_prs) / len(pr_ids) if pr_ids else 0.0,
        generated_total=total,
        skipped_cases=len(results) - len(evaluated),
    )


@dataclass(frozen=True, slots=True)
class EvalReport:
    repeats: int
    runs: tuple[RunMetrics, ...]
    mean: dict
    ci95: dict

    def to_dict(self) -> dict:
        return {
            "repeats": self.repeats,
            "runs": [r.to_dict() for r in self.runs],
            "mean": dict(self.mean),
            "ci95": {k: list(v) for k, v in self.ci95.items()},
        }


def evaluate_alignment(
    benchmark: Sequence[BenchmarkCase],
    settings: PipelineSettings,
    gateway: gateway_mod.Gateway,
    classifier: gate_mod.CommentClassifier,
    *,
    repeats: int = 5,
    max_workers: int = 1,
) -> EvalReport:
    """Evaluate the benchmark ``repeats`` times; report mean and 95% CI.

    Backend failures skip the affected case (counted in skipped_cases) rather
    than aborting the run. Results aggregate in case-id order regardless of
    worker scheduling.
    """
    runs: list[RunMetrics] = []
    for _ in range(repeats):
        ordered = sorted(benchmark, key=lambda c: c.case_id)

        def one(case: BenchmarkCase) -> CaseResult:
            try:
                return evaluate_case(case, settings, gateway, classifier)
            except gateway_mod.BackendError as exc:
                logger.warning("case %s skipped: %s", case.case_id, exc)
                return CaseResult(
                    case_id=case.case_id,
                    pr_id=case.context.pr_id,
                    verdicts=(),
                    unjudged=0,
                    skipped=True,
                )

        if max_workers > 1:
            with ThreadPoolExecutor(max_workers=max_workers) as pool:
                results = list(pool.map(one, ordered))
        else:
            results = [one(case) for case in ordered]
        runs.append(aggregate_metrics(results))

    mean: dict = {}
    ci95: dict = {}
    for name in METRIC_NAMES:
        values = [run.metric(name) for run in runs]
        m, lo, hi = mean_ci95(values)
        mean[name] = m
        ci95[name] = (lo, hi)
    return EvalReport(repeats=repeats, runs=tuple(runs), mean=mean, ci95=ci95)


# --- ablation ---------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class AblationVariant:
    name: str
    settings: PipelineSettings


def standard_variants(control: PipelineSettings) -> list[AblationVariant]:
    """The five prompt-component removals plus the two quality-check removals."""
    return [
        AblationVariant("no_persona", control.without_component("persona")),
        AblationVariant("no_cot", control.without_component("cot")),
        AblationVariant("no_guidelines", control.without_component("guidelines")),
        AblationVariant("no_pr_info", control.without_component("pr_info")),
        AblationVariant("no_issue_info", control.without_component("issue_info")),
        AblationVariant("no_actionability_gate", replace(control, gate=False)),
        AblationVariant("no_fact_check", replace(control, fact_check=False)),
    ]


@dataclass(frozen=True, slots=True)
class AblationReport:
    control: EvalReport
    treatments: dict

    def to_dict(self) -> dict:
        return {
            "control": self.control.to_dict(),
            "treatments": {
                name: {
                    "report": entry["report"].to_dict(),
                    "impact": dict(entry["impact"]),
                }
                for name, entry in self.treatments.items()
            },
        }


def run_ablation(
    benchmark: Sequence[BenchmarkCase],
    control: PipelineSettings,
    variants: Sequence[AblationVariant],
    gateway: gateway_mod.Gateway,
    classifier: gate_mod.CommentClassifier,
    *,
    repeats: int = 5,
    max_workers: int = 1,
) -> AblationReport:
    """Control minus treatment, in percentage points, for every metric."""
    control_report = evaluate_alignment(
        benchmark, control, gateway, classifier, repeats=repeats, max_workers=max_workers
    )
    treatments = {}
    for variant in variants:
        report = evaluate_alignment(
            benchmark, variant.settings, gateway, classifier,
            repeats=repeats, max_workers=max_workers,
        )
        impact = {
            name: 100.0 * (control_report.mean[name] - report.mean[name])
            for name in METRIC_NAMES
        }
        treatments[variant.name] = {"report": report, "impact": impact}
    return AblationReport(control=control_report, treatments=treatments)
