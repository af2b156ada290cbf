"""Command-line entry point.

Commands:

    crossling --config cfg.yaml synthesize --stage all
    crossling --config cfg.yaml bench --kind xl --out bench.jsonl
    crossling --config cfg.yaml eval --benchmark bench.jsonl \
        --candidate my-model --reference ref-model
    crossling report --run runs/a [--compare runs/b]

Exit code 0 means no fatal error; item-level errors are reported in the
manifests and never change the exit code on their own.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import jsonio
from .benchmark import (
    build_translated_benchmark,
    build_xl_benchmark,
    load_base_prompts,
    render_reason_then_translate,
    report_prompt_set,
    write_benchmark,
)
from .config import PipelineConfig, build_gateway, load_config
from .directives import load_directive_catalog
from .errors import CrosslingError
from .pipeline import SynthesisPipeline
from .runner import EvalRunner, compare_runs

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crossling")
    parser.add_argument("--config", help="pipeline configuration file (YAML)")
    parser.add_argument("--cache-dir", help="override the configured cache root")
    parser.add_argument("--seed", type=int, help="override every named seed in the config")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synthesize", help="run the four-stage data synthesis pipeline")
    synth.add_argument("--stage", choices=["1", "2", "3", "4", "all"], default="all")
    synth.add_argument("--resume", action="store_true", help="skip stages whose output exists")
    synth.add_argument("--run-id", default="synthesis")

    bench = sub.add_parser("bench", help="build an evaluation benchmark file")
    bench.add_argument("--kind", choices=["xl", "translated"], required=True)
    bench.add_argument("--mode", choices=["zero_shot", "rtt"], default="zero_shot")
    bench.add_argument("--out", required=True)

    evl = sub.add_parser("eval", help="evaluate a candidate model against a reference")
    evl.add_argument("--benchmark", required=True)
    evl.add_argument("--candidate", required=True)
    evl.add_argument("--reference", required=True)
    evl.add_argument("--rubrics", action="store_true", help="also score the four 1-5 rubrics")
    evl.add_argument("--run-id", default="eval")
    evl.add_argument("--resume", action="store_true")

    rep = sub.add_parser("report", help="print a run report, optionally a delta vs another run")
    rep.add_argument("--run", required=True)
    rep.add_argument("--compare", help="second run directory; prints per-language deltas")
    return parser


def _load_config(args: argparse.Namespace) -> PipelineConfig:
    if not args.config:
        raise CrosslingError("--config is required for this command")
    config = load_config(args.config)
    if args.cache_dir:
        config.cache_root = Path(args.cache_dir)
    if args.seed is not None:
        config.seeds = {name: args.seed for name in config.seeds}
        config.sampling = replace(config.sampling, rng_seed=args.seed)
        config.filter = replace(config.filter, rng_seed=args.seed)
    return config


def cmd_synthesize(args: argparse.Namespace) -> int:
    config = _load_config(args)
    pipeline = SynthesisPipeline(config, run_id=args.run_id, resume=args.resume)
    manifest = pipeline.run(args.stage)
    counts = manifest.get("counts", {})
    print(f"run directory: {pipeline.run_dir}")
    for name in ("passages", "stage1", "stage2", "stage3"):
        if name in counts:
            print(f"  {name}: {counts[name]}")
    if "dataset" in manifest:
        dataset = manifest["dataset"]
        print(
            f"  sft: exported={dataset['exported']} "
            f"kept={dataset['stage_counts'].get('kept')} "
            f"filtered={dataset['stage_counts'].get('filtered')}"
        )
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    config = _load_config(args)
    prompts = load_base_prompts(config.prompts_path, config.exclusions_path)
    report = report_prompt_set(prompts)
    if args.kind == "xl":
        catalog = load_directive_catalog(config.directive_catalog)
        items = build_xl_benchmark(prompts, config.languages, catalog, config.seeds["benchmark"])
        if args.mode == "rtt":
            items = [render_reason_then_translate(item, config.templates_dir) for item in items]
        errors: list[str] = []
    else:
        if args.mode == "rtt":
            raise CrosslingError("reason-then-translate applies only to --kind xl")
        gateway = build_gateway(config)
        translator = config.endpoint_for_role("prompt-translator")
        items, errors = build_translated_benchmark(
            prompts,
            config.languages,
            gateway,
            translator,
            config.params,
            config.max_in_flight,
            config.templates_dir,
            src_lang=config.src_lang,
        )
    digest = write_benchmark(items, args.out)
    out_path = Path(args.out)
    jsonio.write_json(
        out_path.with_name(out_path.name + ".manifest.json"),
        {
            "kind": args.kind,
            "mode": args.mode,
            "config_digest": config.config_digest,
            "seeds": config.seeds,
            "languages": list(config.languages),
            "counts": {
                "total": report.total,
                "excluded": report.excluded,
                "eligible": report.eligible,
                "items": len(items),
                "errors": len(errors),
            },
            "content_digest": digest,
        },
    )
    print(
        f"total={report.total} excluded={report.excluded} eligible={report.eligible} "
        f"items={len(items)} errors={len(errors)}"
    )
    print(f"wrote {args.out} (digest {digest[:12]})")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    config = _load_config(args)
    runner = EvalRunner(
        config,
        benchmark_path=args.benchmark,
        candidate_id=args.candidate,
        reference_id=args.reference,
        run_id=args.run_id,
        rubrics=args.rubrics,
        resume=args.resume,
    )
    report = runner.run()
    print(f"run directory: {runner.run_dir}")
    summary = report["summary"]
    if "avg_win_rate_pct" in summary:
        print(f"avg win rate: {summary['avg_win_rate_pct']:.2f}%")
    for lang, row in report["per_language"].items():
        print(f"  {lang}: {row['win_rate_pct']:.2f}% ({row['n_items']} items)")
    if report["rubrics"]:
        for criterion, mean in sorted(report["rubrics"].items()):
            print(f"  rubric {criterion}: {mean:.2f}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    run_dir = Path(args.run)
    report_path = run_dir / "report.jsonl"
    if not report_path.exists():
        raise CrosslingError(f"no report found at {report_path}")
    for row in jsonio.read_jsonl(report_path):
        print(json.dumps(row, ensure_ascii=False, sort_keys=True))
    if args.compare:
        deltas = compare_runs(run_dir, Path(args.compare))
        print("deltas (compare - run):")
        for lang, delta in deltas.items():
            print(f"  {lang}: {delta:+.2f}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    handlers = {
        "synthesize": cmd_synthesize,
        "bench": cmd_bench,
        "eval": cmd_eval,
        "report": cmd_report,
    }
    try:
        return handlers[args.command](args)
    except CrosslingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
