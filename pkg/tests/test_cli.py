from __future__ import annotations

import json

import pytest

from reviewflow.cli import main

from conftest import FIXTURES


def run_cli(capsys, *argv) -> tuple[int, str, str]:
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_stats_relative_diff_headline(capsys):
    code, out, _ = run_cli(capsys, "stats", "relative-diff", "38.70", "44.45")
    assert code == 0
    assert out.strip() == "-12.9%"


def test_stats_funnel(capsys):
    code, out, _ = run_cli(capsys, "stats", "funnel", "3492", "872", "270", "282")
    assert code == 0
    assert out.strip() == "3492 -> 2620 -> 2350 -> 2068"


def test_stats_mannwhitney_inline_samples(capsys):
    code, out, _ = run_cli(capsys, "stats", "mannwhitney", "--a", "1,2", "--b", "3,4")
    assert code == 0
    result = json.loads(out)
    assert result["u"] == 0.0
    assert result["method"] == "exact"


def test_stats_its(capsys):
    values = ",".join(["20.73"] * 10 + ["14.35"] * 10)
    code, out, _ = run_cli(capsys, "stats", "its", "--a", values, "--intervention", "10")
    assert code == 0
    fit = json.loads(out)
    assert fit["intervention"]["coef"] == pytest.approx(-6.38, abs=1e-9)


def test_stats_spearman(capsys):
    code, out, _ = run_cli(capsys, "stats", "spearman", "--a", "1,2,3", "--b", "9,8,7")
    assert code == 0
    assert float(out.strip()) == pytest.approx(-1.0)


def test_stats_compare_table(capsys):
    code, out, _ = run_cli(
        capsys, "stats", "compare", "--a", "1.06,14.35,47.67", "--b", "2.40,20.73,73.25"
    )
    assert code == 0
    assert "Median" in out and "Relative Difference" in out


def test_usage_error_exits_1(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["definitely-not-a-command"])
    assert exc.value.code == 1


def test_review_mock_backend_deterministic(capsys, tmp_path):
    event = str(FIXTURES / "service" / "event01.json")
    code_a, out_a, _ = run_cli(capsys, "review", "--mock-backend", "--event", event)
    code_b, out_b, _ = run_cli(capsys, "review", "--mock-backend", "--event", event)
    assert code_a == code_b == 0
    assert out_a == out_b
    listing = json.loads(out_a)
    assert listing["run"]["stage"] == "done"
    assert listing["run"]["counts"]["posted"] == 1
    assert listing["comments"][0]["state"] == "posted"


def test_review_dry_run_posts_nothing(capsys):
    event = str(FIXTURES / "service" / "event01.json")
    code, out, _ = run_cli(capsys, "review", "--mock-backend", "--dry-run", "--event", event)
    assert code == 0
    listing = json.loads(out)
    assert listing["run"]["counts"]["posted"] == 0
    assert listing["run"]["counts"]["unposted"] == 1


def test_review_pipeline_failure_exits_2(capsys, tmp_path):
    payload = json.loads((FIXTURES / "service" / "event01.json").read_text())
    payload["diff"] = "@@ broken"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(payload))
    code, out, _ = run_cli(capsys, "review", "--mock-backend", "--event", str(bad))
    assert code == 2
    assert json.loads(out)["run"]["stage"] == "failed"


def test_mine_crr_scripted_histories(capsys, tmp_path):
    records_out = tmp_path / "records.jsonl"
    code, out, _ = run_cli(
        capsys,
        "mine-crr",
        "--history", str(FIXTURES / "history"),
        "--records-out", str(records_out),
    )
    assert code == 0
    report = json.loads(out)
    # pr-201: rc-1 resolved by bbb222, rc-2 unresolved, hc-1 unresolved
    # pr-202: rc-3 indeterminate (rename) -- excluded from the rate
    assert report["records"] == 4
    assert report["crr"] == pytest.approx(1 / 3)
    lines = [json.loads(l) for l in records_out.read_text().splitlines()]
    verdicts = {r["comment"]["comment_id"]: r["verdict"] for r in lines}
    assert verdicts == {
        "rc-1": "resolved",
        "rc-2": "unresolved",
        "hc-1": "unresolved",
        "rc-3": "indeterminate",
    }


def test_mine_crr_origin_filter(capsys):
    code, out, _ = run_cli(
        capsys, "mine-crr", "--history", str(FIXTURES / "history"), "--origin", "generated"
    )
    assert code == 0
    assert json.loads(out)["crr"] == pytest.approx(0.5)


def test_mine_crr_requires_source(capsys):
    code, _, err = run_cli(capsys, "mine-crr")
    assert code == 1


def test_eval_repeats_five_runs(capsys, tmp_path):
    out_file = tmp_path / "report.json"
    code, out, _ = run_cli(
        capsys,
        "eval",
        "--mock-backend",
        "--cases", str(FIXTURES / "benchmark"),
        "--repeats", "5",
        "--out", str(out_file),
    )
    assert code == 0
    report = json.loads(out_file.read_text())
    assert report["repeats"] == 5
    assert len(report["runs"]) == 5
    assert set(report["mean"]) == {"hac", "not_hac", "hac_location_only", "pr_hac", "pr_not_hac"}


def test_ablate_subset_variant(capsys):
    code, out, _ = run_cli(
        capsys,
        "ablate",
        "--mock-backend",
        "--cases", str(FIXTURES / "benchmark"),
        "--repeats", "1",
        "--variants", "no_guidelines",
    )
    assert code == 0
    report = json.loads(out)
    assert list(report["treatments"]) == ["no_guidelines"]
    assert "hac" in report["treatments"]["no_guidelines"]["impact"]


def test_ablate_unknown_variant_usage_error(capsys):
    code, _, err = run_cli(
        capsys, "ablate", "--mock-backend",
        "--cases", str(FIXTURES / "benchmark"), "--variants", "nope",
    )
    assert code == 1


def test_curate_funnel_on_fixture(capsys, tmp_path):
    out_dir = tmp_path / "kept"
    code, out, _ = run_cli(
        capsys,
        "curate",
        "--mock-backend",
        "--cases", str(FIXTURES / "benchmark"),
        "--out-dir", str(out_dir),
    )
    assert code == 0
    funnel = json.loads(out)
    assert funnel["initial"] == 10
    assert funnel["final"] == 10  # fixture cases all survive
    assert len(list(out_dir.iterdir())) == 10


def test_export_train_roundtrip(capsys, tmp_path):
    from datetime import datetime, timezone

    from reviewflow.model import ResolutionRecord, ReviewComment
    from reviewflow.store import LogStore

    store_path = tmp_path / "store.jsonl"
    store = LogStore(store_path)
    for i, verdict in enumerate(["resolved", "unresolved", "indeterminate"]):
        comment = ReviewComment(
            f"c{i}", "generated", "f.py", 1, f"body {i}", state="posted"
        )
        store.append(
            "resolution",
            ResolutionRecord(
                comment,
                "pr-1",
                verdict,
                resolving_commit="abc" if verdict == "resolved" else None,
                observed_at=datetime(2025, 1, 2, tzinfo=timezone.utc),
            ).to_dict(),
        )
    out_file = tmp_path / "train.jsonl"
    code, out, _ = run_cli(
        capsys,
        "export-train",
        "--store", str(store_path),
        "--cutoff", "2025-02-01T00:00:00+00:00",
        "--out", str(out_file),
    )
    assert code == 0
    rows = [json.loads(l) for l in out_file.read_text().splitlines()]
    assert [r["label"] for r in rows] == [1, 0]


def test_export_train_empty_exits_2(capsys, tmp_path):
    from reviewflow.store import LogStore

    store_path = tmp_path / "store.jsonl"
    LogStore(store_path)  # empty store file
    code, _, err = run_cli(
        capsys,
        "export-train",
        "--store", str(store_path),
        "--cutoff", "2025-01-01",
        "--out", str(tmp_path / "t.jsonl"),
    )
    assert code == 2
