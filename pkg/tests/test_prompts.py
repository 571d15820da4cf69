from __future__ import annotations

import re
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reviewflow.model import PROMPT_SECTION_ORDER, IssueSummary
from reviewflow.prompts import (
    GuidelineTexts,
    PromptConfig,
    TRUNCATION_MARKER,
    build,
    render,
)

from conftest import make_context

SENTINEL_GUIDELLINES = GuidelineTexts(
    code="CODE-SENTINEL rules", test="TEST-SENTINEL rules", comment="COMMENT-SENTINEL tone"
)


def section_names(text: str) -> list[str]:
    return re.findall(r"<<SECTION ([a-z_]+)>>", text)


def test_all_toggles_on_gives_nine_sections_in_order():
    bundle = build(make_context(issue_refs=(IssueSummary("ABC-123", "do it"),)), PromptConfig())
    assert [name for name, _ in bundle.sections()] == list(PROMPT_SECTION_ORDER)
    assert section_names(render(bundle)) == list(PROMPT_SECTION_ORDER)


def test_all_toggles_off_gives_task_and_code_only():
    cfg = PromptConfig(
        include_persona=False,
        include_cot=False,
        include_guidelines=False,
        include_pr_info=False,
        include_issue_info=False,
    )
    bundle = build(make_context(), cfg)
    assert section_names(render(bundle)) == ["task", "code_change"]


def test_guidelines_toggle_removes_all_three_markers():
    cfg = PromptConfig(guideline_texts=SENTINEL_GUIDELLINES).without("guidelines")
    text = render(build(make_context(), cfg))
    assert "guidelines_code" not in text
    assert "guidelines_test" not in text
    assert "guidelines_comment" not in text
    assert "SENTINEL" not in text


def test_render_deterministic():
    ctx = make_context()
    cfg = PromptConfig()
    assert render(build(ctx, cfg)) == render(build(ctx, cfg))


def test_disabled_component_content_never_leaks():
    ctx = make_context(
        title="PLANTED-TITLE fix",
        description="PLANTED-DESCRIPTION body",
        issue_refs=(IssueSummary("XY-1", "PLANTED-ISSUE", "issue body"),),
    )
    cfg = PromptConfig(guideline_texts=SENTINEL_GUIDELLINES)
    for component, marker in [
        ("pr_info", "PLANTED-TITLE"),
        ("issue_info", "PLANTED-ISSUE"),
        ("guidelines", "CODE-SENTINEL"),
    ]:
        text = render(build(ctx, cfg.without(component)))
        assert marker not in text


@pytest.mark.parametrize(
    "component", ["persona", "cot", "guidelines", "pr_info", "issue_info"]
)
def test_single_toggle_changes_exactly_that_section(component):
    ctx = make_context(issue_refs=(IssueSummary("ABC-123", "summary", "desc"),))
    base = PromptConfig()
    on = section_names(render(build(ctx, base)))
    off = section_names(render(build(ctx, base.without(component))))
    removed = set(on) - set(off)
    expected = {
        "persona": {"persona"},
        "cot": {"chain_of_thought"},
        "guidelines": {"guidelines_code", "guidelines_test", "guidelines_comment"},
        "pr_info": {"pr_info"},
        "issue_info": {"issue_info"},
    }[component]
    assert removed == expected
    # every surviving section is byte-identical between the two renders
    on_text = render(build(ctx, base))
    off_text = render(build(ctx, base.without(component)))
    for name in off:
        pattern = re.compile(
            rf"<<SECTION {name}>>\n(.*?)\n<<END {name}>>", re.DOTALL
        )
        assert pattern.search(on_text).group(1) == pattern.search(off_text).group(1)


def test_truncation_marker_applied_when_flagged():
    ctx = make_context(flags=("diff_truncated",))
    bundle = build(ctx, PromptConfig())
    assert bundle.code_change.endswith(TRUNCATION_MARKER + "\n")


@given(st.text(min_size=1, max_size=300).filter(lambda s: "<<" not in s))
@settings(max_examples=80, deadline=None)
def test_unicode_description_round_trips_into_prompt(description):
    ctx = make_context(description=description)
    text = render(build(ctx, PromptConfig()))
    assert description in text


def test_bundle_serialization_dict_round_trip():
    from reviewflow.model import PromptBundle

    bundle = build(make_context(), PromptConfig())
    assert PromptBundle.from_dict(bundle.to_dict()) == bundle
