"""Deterministic assembly of the structured zero-shot review prompt.

Components: persona, task, chain-of-thought, three guideline documents,
PR info, issue info, and the rendered code change. Task and code change are
always present; everything else toggles independently for ablation. Rendering
is byte-deterministic: same bundle, same text.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from importlib import resources

from .diffs import render_unified_diff
from .model import PromptBundle, PullRequestContext

TRUNCATION_MARKER = "…[truncated]"

DEFAULT_PERSONA = (
    "You are a senior software engineer reviewing a teammate's pull request. "
    "You are rigorous about correctness and pragmatic about style."
)

OUTPUT_GRAMMAR = (
    "Output format: reply with exactly one fenced code block containing a JSON "
    "array. Each element is an object with keys \"file_path\" (string, "
    "repository-relative), \"line\" (integer line number in the post-change "
    "file, inside the shown diff), \"body\" (the comment text), and "
    "\"category\" (one of readability, bug, maintainability, performance, "
    "security, testing, or another short tag). Example:\n"
    "```json\n"
    "[{\"file_path\": \"src/app.py\", \"line\": 12, \"body\": \"...\", "
    "\"category\": \"bug\"}]\n"
    "```\n"
    "Emit an empty array if nothing is worth raising."
)

DEFAULT_TASK = (
    "Review the code change below and produce review comments for the issues "
    "that matter most. Anchor every comment to a post-change line that appears "
    "in the diff.\n\n" + OUTPUT_GRAMMAR
)

DEFAULT_CHAIN_OF_THOUGHT = (
    "Work through the review in steps before answering:\n"
    "1. Summarize what the change is trying to do, using the PR and issue "
    "context if present.\n"
    "2. Scan each hunk in order and note anything suspicious.\n"
    "3. For each candidate issue, decide whether it is real, which exact "
    "post-change line it belongs to, and what the concrete fix is.\n"
    "4. Drop anything vague or not tied to this change, then emit the final "
    "comments in the required output format."
)


def _load_asset(name: str) -> str:
    return resources.files("reviewflow.assets").joinpath(name).read_text(encoding="utf-8")


@dataclass(frozen=True, slots=True)
class GuidelineTexts:
    """The three editable guideline documents fed to the reviewer."""

    code: str
    test: str
    comment: str


def default_guidelines() -> GuidelineTexts:
    return GuidelineTexts(
        code=_load_asset("guidelines_code.txt"),
        test=_load_asset("guidelines_test.txt"),
        comment=_load_asset("guidelines_comment.txt"),
    )


@dataclass(frozen=True, slots=True)
class PromptConfig:
    """Per-component toggles; task and code change are not togglable."""

    include_persona: bool = True
    include_cot: bool = True
    include_guidelines: bool = True
    include_pr_info: bool = True
    include_issue_info: bool = True
    persona_text: str = DEFAULT_PERSONA
    task_text: str = DEFAULT_TASK
    cot_text: str = DEFAULT_CHAIN_OF_THOUGHT
    guideline_texts: GuidelineTexts = field(default_factory=default_guidelines)

    def without(self, component: str) -> "PromptConfig":
        """Copy with one named component disabled (for ablation variants)."""
        flag = {
            "persona": "include_persona",
            "cot": "include_cot",
            "guidelines": "include_guidelines",
            "pr_info": "include_pr_info",
            "issue_info": "include_issue_info",
        }[component]
        return replace(self, **{flag: False})


def render_pr_info(ctx: PullRequestContext) -> str:
    return f"Title: {ctx.title}\n\nDescription:\n{ctx.description}"


def render_issue_info(ctx: PullRequestContext) -> str:
    if not ctx.issue_refs:
        return "No linked issues."
    blocks = [
        f"[{ref.key}] {ref.summary}\n{ref.description}".rstrip() for ref in ctx.issue_refs
    ]
    return "\n\n".join(blocks)


def render_code_change(ctx: PullRequestContext) -> str:
    text = render_unified_diff(ctx.change)
    if "diff_truncated" in ctx.flags:
        text += TRUNCATION_MARKER + "\n"
    return text


def build(ctx: PullRequestContext, cfg: PromptConfig) -> PromptBundle:
    """Assemble the prompt bundle for one pull request under one config."""
    return PromptBundle(
        persona=cfg.persona_text if cfg.include_persona else None,
        task=cfg.task_text,
        chain_of_thought=cfg.cot_text if cfg.include_cot else None,
        guidelines_code=cfg.guideline_texts.code if cfg.include_guidelines else None,
        guidelines_test=cfg.guideline_texts.test if cfg.include_guidelines else None,
        guidelines_comment=cfg.guideline_texts.comment if cfg.include_guidelines else None,
        pr_info=render_pr_info(ctx) if cfg.include_pr_info else None,
        issue_info=render_issue_info(ctx) if cfg.include_issue_info else None,
        code_change=render_code_change(ctx),
    )


def fence_section(name: str, text: str) -> str:
    return f"<<SECTION {name}>>\n{text}\n<<END {name}>>"


def render(bundle: PromptBundle) -> str:
    """Serialize the bundle: one labeled fence per present section, in order."""
    return "\n\n".join(fence_section(name, text) for name, text in bundle.sections())
