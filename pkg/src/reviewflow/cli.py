"""Command-line entry point.

Subcommands: review, serve, mine-crr, curate, eval, ablate, export-train,
stats. Every subcommand runs offline with --mock-backend and the shipped
fixtures. Exit codes: 0 success, 1 usage error, 2 pipeline failure,
3 backend failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

from . import gate as gate_mod
from . import gateway as gateway_mod
from . import resolution, stats
from .context import (
    ContextBudget,
    FileCodeHost,
    FileIssueTracker,
    GitRepository,
    InMemoryCodeHost,
    InMemoryIssueTracker,
)
from .evaluation import (
    PipelineSettings,
    evaluate_alignment,
    load_benchmark,
    run_ablation,
    standard_variants,
    write_case,
)
from .model import PullRequestContext, ResolutionRecord, ReviewComment
from .prompts import PromptConfig
from .service import ReviewService, ServiceConfig, create_app
from .store import LogStore

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PIPELINE = 2
EXIT_BACKEND = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


DEFAULT_CONFIG = {
    "backend": {
        "kind": "mock",
        "base_url": "",
        "model_tag": gateway_mod.DEFAULT_MODEL_TAG,
        "auth_env": "REVIEWFLOW_API_TOKEN",
        "max_request_bytes": 1_000_000,
        "max_concurrency": 4,
    },
    "mock_fixtures_dir": None,
    "gate": {"kind": "baseline", "threshold": 0.5, "remote_url": "", "fail_open": True},
    "fact_check": {"enabled": True},
    "budgets": {
        "max_diff_bytes": 512_000,
        "max_description_bytes": 16_000,
        "max_issue_bytes": 8_000,
    },
    "service": {
        "worker_limit": 4,
        "secret_env": "REVIEWFLOW_WEBHOOK_SECRET",
        "triggers": ["pr_created", "pr_updated"],
        "store_path": "reviewflow-store.jsonl",
        "resolution_window": 0,
        "max_comments_per_pr": 5,
    },
}


def load_config(path: Optional[str]) -> dict:
    config = json.loads(json.dumps(DEFAULT_CONFIG))  # deep copy
    if path:
        loaded = json.loads(Path(path).read_text(encoding="utf-8"))
        for key, value in loaded.items():
            if isinstance(value, dict) and isinstance(config.get(key), dict):
                config[key].update(value)
            else:
                config[key] = value
    return config


def build_backend(config: dict, mock: bool) -> gateway_mod.Backend:
    backend_cfg = config["backend"]
    if mock or backend_cfg["kind"] == "mock":
        fixtures_dir = config.get("mock_fixtures_dir")
        return gateway_mod.MockBackend(
            Path(fixtures_dir) if fixtures_dir else None,
            fallback=gateway_mod.HeuristicBackend(),
        )
    return gateway_mod.HttpChatBackend(
        backend_cfg["base_url"], auth_env=backend_cfg.get("auth_env", "REVIEWFLOW_API_TOKEN")
    )


def build_gateway(config: dict, mock: bool) -> gateway_mod.Gateway:
    backend_cfg = config["backend"]
    return gateway_mod.Gateway(
        build_backend(config, mock),
        max_request_bytes=backend_cfg.get("max_request_bytes", 1_000_000),
        max_concurrency=backend_cfg.get("max_concurrency"),
    )


def build_classifier(config: dict) -> gate_mod.CommentClassifier:
    gate_cfg = config["gate"]
    if gate_cfg.get("kind") == "remote" and gate_cfg.get("remote_url"):
        return gate_mod.RemoteClassifier(gate_cfg["remote_url"])
    return gate_mod.LexicalActionabilityBaseline()


def build_budget(config: dict) -> ContextBudget:
    budgets = config["budgets"]
    return ContextBudget(
        max_diff_bytes=budgets["max_diff_bytes"],
        max_description_bytes=budgets["max_description_bytes"],
        max_issue_bytes=budgets["max_issue_bytes"],
    )


def build_service(args, config: dict, *, store: Optional[LogStore] = None) -> ReviewService:
    from .service import FixedClock

    service_cfg = config["service"]
    fixtures = Path(args.fixtures) if getattr(args, "fixtures", None) else None
    host = FileCodeHost(fixtures) if fixtures else InMemoryCodeHost()
    tracker = FileIssueTracker(fixtures) if fixtures else InMemoryIssueTracker()
    repo = GitRepository(Path(args.repo)) if getattr(args, "repo", None) else None
    # the mock backend exists for reproducibility; freeze time with it
    clock = (
        FixedClock(datetime(2025, 1, 1, tzinfo=timezone.utc)) if args.mock_backend else None
    )
    return ReviewService(
        clock=clock,
        store=store or LogStore(Path(service_cfg["store_path"])),
        host=host,
        tracker=tracker,
        repo=repo,
        gateway=build_gateway(config, args.mock_backend),
        classifier=build_classifier(config),
        prompt_config=PromptConfig(),
        budget=build_budget(config),
        config=ServiceConfig(
            triggers=tuple(service_cfg["triggers"]),
            max_comments_per_pr=service_cfg["max_comments_per_pr"],
            gate_threshold=args.threshold
            if args.threshold is not None
            else config["gate"]["threshold"],
            gate_fail_open=config["gate"]["fail_open"],
            fact_check_enabled=config["fact_check"]["enabled"],
            dry_run=args.dry_run,
            worker_limit=service_cfg["worker_limit"],
            inline_workers=True,
        ),
    )


def _print(data: dict, out: Optional[str]) -> None:
    text = json.dumps(data, indent=2, ensure_ascii=False)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")
    print(text)


# --- subcommands ----------------------------------------------------------------


def cmd_review(args) -> int:
    config = load_config(args.config)
    store = LogStore()  # one-shot review keeps no state file unless asked
    service = build_service(args, config, store=store)
    event_path = Path(args.event)
    payload = json.loads(event_path.read_text(encoding="utf-8"))
    run_id = service.submit(payload)
    run = store.get("run", run_id)
    comments = store.all_latest("comment")
    listing = {
        "run": run,
        "comments": [
            {
                "comment_id": c["comment_id"],
                "file_path": c["file_path"],
                "line": c["line"],
                "state": c["state"],
                "category": c.get("category"),
                "body": c["body"],
            }
            for c in comments
        ],
    }
    _print(listing, args.out)
    if run["stage"] == "failed":
        return EXIT_PIPELINE
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    config = load_config(args.config)
    service = build_service(args, config)
    secret_env = config["service"]["secret_env"]
    secret = os.environ.get(secret_env)
    app = create_app(service, secret=secret.encode() if secret else None)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def _load_history(history_dir: Path):
    spec = json.loads((history_dir / "history.json").read_text(encoding="utf-8"))
    context_data = spec["pr_context"]
    if "change" not in context_data:
        context_data["change"] = (history_dir / context_data.pop("change_file")).read_text(
            encoding="utf-8"
        )
    pr = PullRequestContext.from_dict(context_data)
    comments = [ReviewComment.from_dict(c) for c in spec["comments"]]
    commits = []
    from .diffs import parse_unified_diff

    for entry in spec["commits"]:
        diff_text = (
            entry["diff"]
            if "diff" in entry
            else (history_dir / entry["diff_file"]).read_text(encoding="utf-8")
        )
        commits.append(
            resolution.CommitChange(entry["commit_id"], parse_unified_diff(diff_text))
        )
    return pr, comments, commits


def cmd_mine_crr(args) -> int:
    config = load_config(args.config)
    window = args.window if args.window is not None else config["service"]["resolution_window"]
    records: list[ResolutionRecord] = []
    if args.history:
        for history_dir in sorted(Path(args.history).iterdir()):
            if not history_dir.is_dir():
                continue
            pr, comments, commits = _load_history(history_dir)
            records.extend(
                resolution.track(
                    pr,
                    comments,
                    commits,
                    window=window,
                    observed_at=pr.merged_at or pr.created_at,
                )
            )
    elif args.store:
        store = LogStore(Path(args.store))
        records = [ResolutionRecord.from_dict(d) for d in store.all_latest("resolution")]
    else:
        print("error: mine-crr needs --history or --store", file=sys.stderr)
        return EXIT_USAGE
    if args.records_out:
        Path(args.records_out).write_text(
            "".join(json.dumps(r.to_dict(), ensure_ascii=False) + "\n" for r in records),
            encoding="utf-8",
        )
    try:
        rate = resolution.crr(records, origin=args.origin)
    except resolution.EmptyFilterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    rolling = [
        {"day": day.isoformat(), "crr": value}
        for day, value in resolution.rolling_crr(records, origin=args.origin)
    ]
    _print(
        {
            "records": len(records),
            "crr": rate,
            "rolling_7d": rolling,
        },
        args.out,
    )
    return EXIT_OK


def cmd_curate(args) -> int:
    from .evaluation import curate

    config = load_config(args.config)
    cases = load_benchmark(Path(args.cases))
    gateway = build_gateway(config, args.mock_backend)
    lo, hi = (int(y) for y in args.years.split("-"))
    kept, funnel = curate(cases, gateway, year_range=(lo, hi))
    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for case in kept:
            write_case(out_dir, case)
    _print(funnel.to_dict(), args.out)
    return EXIT_OK


def _settings_from_args(args) -> PipelineSettings:
    return PipelineSettings(
        prompt=PromptConfig(),
        fact_check=not args.no_fact_check,
        gate=not args.no_gate,
        gate_threshold=args.threshold if args.threshold is not None else 0.5,
        location_window=args.window if args.window is not None else 10,
    )


def cmd_eval(args) -> int:
    config = load_config(args.config)
    benchmark = load_benchmark(Path(args.cases))
    report = evaluate_alignment(
        benchmark,
        _settings_from_args(args),
        build_gateway(config, args.mock_backend),
        build_classifier(config),
        repeats=args.repeats,
        max_workers=config["backend"].get("max_concurrency") or 1,
    )
    _print(report.to_dict(), args.out)
    return EXIT_OK


def cmd_ablate(args) -> int:
    config = load_config(args.config)
    benchmark = load_benchmark(Path(args.cases))
    control = _settings_from_args(args)
    variants = standard_variants(control)
    if args.variants:
        wanted = set(args.variants.split(","))
        unknown = wanted - {v.name for v in variants}
        if unknown:
            print(f"error: unknown variants {sorted(unknown)}", file=sys.stderr)
            return EXIT_USAGE
        variants = [v for v in variants if v.name in wanted]
    report = run_ablation(
        benchmark,
        control,
        variants,
        build_gateway(config, args.mock_backend),
        build_classifier(config),
        repeats=args.repeats,
    )
    _print(report.to_dict(), args.out)
    return EXIT_OK


def cmd_export_train(args) -> int:
    store = LogStore(Path(args.store))
    records = [ResolutionRecord.from_dict(d) for d in store.all_latest("resolution")]
    cutoff = datetime.fromisoformat(args.cutoff)
    if cutoff.tzinfo is None:
        cutoff = cutoff.replace(tzinfo=timezone.utc)
    try:
        rows = gate_mod.export_training_pairs(records, cutoff=cutoff)
    except gate_mod.EmptyExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    gate_mod.write_training_file(rows, Path(args.out))
    print(f"wrote {len(rows)} training pairs to {args.out}")
    return EXIT_OK


def _read_samples(spec: str) -> list[float]:
    path = Path(spec)
    if path.exists():
        text = path.read_text(encoding="utf-8")
        return [float(tok) for tok in text.replace(",", " ").split()]
    return [float(tok) for tok in spec.split(",")]


def cmd_stats(args) -> int:
    if args.stat == "relative-diff":
        value = stats.relative_difference(args.values[0], args.values[1])
        print(f"{value:.1f}%")
    elif args.stat == "funnel":
        counts = stats.apply_funnel(int(args.values[0]), [int(v) for v in args.values[1:]])
        print(" -> ".join(str(c) for c in counts))
    elif args.stat == "mannwhitney":
        result = stats.mann_whitney_u(_read_samples(args.a), _read_samples(args.b))
        _print(
            {
                "u": result.u,
                "u_other": result.u_other,
                "p_value": result.p_value,
                "method": result.method,
            },
            args.out,
        )
    elif args.stat == "its":
        values = _read_samples(args.a)
        fit = stats.interrupted_time_series(values, args.intervention)
        _print(fit.to_dict(), args.out)
    elif args.stat == "spearman":
        rho = stats.spearman(_read_samples(args.a), _read_samples(args.b))
        print(f"{rho:.6f}")
    elif args.stat == "compare":
        table = stats.cohort_table(
            "treatment", _read_samples(args.a), "control", _read_samples(args.b)
        )
        print(table)
    return EXIT_OK


# --- parser -----------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="reviewflow", description=__doc__)
    parser.add_argument("--config", help="JSON config file path")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, backend=True):
        p.add_argument("--config", help="JSON config file path")
        p.add_argument("--dry-run", action="store_true", help="never post, never write")
        p.add_argument("--threshold", type=float, default=None, help="gate threshold")
        p.add_argument("--window", type=int, default=None, help="line window")
        if backend:
            p.add_argument(
                "--mock-backend", action="store_true",
                help="use the deterministic offline backend",
            )

    p = sub.add_parser("review", help="review one PR from a webhook-style event file")
    common(p)
    p.add_argument("--event", required=True, help="event payload JSON file")
    p.add_argument("--fixtures", help="file-backed host/tracker fixture directory")
    p.add_argument("--repo", help="local git clone for diffs")
    p.add_argument("--out", help="write the run listing JSON here")
    p.set_defaults(func=cmd_review)

    p = sub.add_parser("serve", help="run the webhook service")
    common(p)
    p.add_argument("--fixtures", help="file-backed host/tracker fixture directory")
    p.add_argument("--repo", help="local git clone for diffs")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8400)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("mine-crr", help="label comments resolved/unresolved and compute CRR")
    common(p, backend=False)
    p.add_argument("--history", help="directory of scripted PR histories")
    p.add_argument("--store", help="service store file with resolution records")
    p.add_argument("--origin", choices=["generated", "human"], default=None)
    p.add_argument("--records-out", help="write resolution records JSONL here")
    p.add_argument("--out", help="write the report JSON here")
    p.set_defaults(func=cmd_mine_crr)

    p = sub.add_parser("curate", help="apply the benchmark curation funnel")
    common(p)
    p.add_argument("--cases", required=True, help="benchmark case directory")
    p.add_argument("--out-dir", help="write surviving cases here")
    p.add_argument("--years", default="2022-2025", help="recency window, e.g. 2022-2025")
    p.add_argument("--out", help="write the funnel report JSON here")
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser("eval", help="run the alignment evaluation")
    common(p)
    p.add_argument("--cases", required=True)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--no-gate", action="store_true")
    p.add_argument("--no-fact-check", action="store_true")
    p.add_argument("--out", help="write the EvalReport JSON here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="prompt-component and quality-gate ablations")
    common(p)
    p.add_argument("--cases", required=True)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--variants", help="comma-separated variant names (default: all)")
    p.add_argument("--no-gate", action="store_true")
    p.add_argument("--no-fact-check", action="store_true")
    p.add_argument("--out", help="write the ablation report JSON here")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("export-train", help="export <comment, resolved?> training pairs")
    common(p, backend=False)
    p.add_argument("--store", required=True)
    p.add_argument("--cutoff", required=True, help="ISO timestamp; strictly-before filter")
    p.add_argument("--out", required=True, help="output JSONL path")
    p.set_defaults(func=cmd_export_train)

    p = sub.add_parser("stats", help="metric arithmetic and statistical tests")
    common(p, backend=False)
    p.add_argument(
        "stat",
        choices=["relative-diff", "funnel", "mannwhitney", "its", "spearman", "compare"],
    )
    p.add_argument("values", nargs="*", type=float, help="positional numbers")
    p.add_argument("--a", help="sample A: file path or comma-separated numbers")
    p.add_argument("--b", help="sample B: file path or comma-separated numbers")
    p.add_argument("--intervention", type=int, help="ITS intervention index")
    p.add_argument("--out", help="write the result JSON here")
    p.set_defaults(func=cmd_stats)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except gateway_mod.BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except gate_mod.ClassifierUnavailableError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except SystemExit:
        raise
    except Exception as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
