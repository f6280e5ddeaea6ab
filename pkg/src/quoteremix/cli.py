"""Command-line entry point.

Exit codes: 0 ok, 1 configuration or usage error, 2 partial run or
exhausted pipeline, 3 authentication failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import yaml

from .config import ConfigError, load_config, load_roster
from .gateway import (
    ENV_API_KEY,
    AuthError,
    Gateway,
    GatewayError,
    OpenAIBackend,
    RetryPolicy,
    load_mock_fixtures,
)
from .model import QuoteLengthWarning
from .harness import (
    DONE,
    ConfigMismatch,
    InsufficientCells,
    MissingVerdicts,
    ReportWriteError,
    RunDir,
    emit_report,
    evaluate_run,
    run_grid,
)
from .remix import (
    PipelineExhausted,
    build_remix_prompt,
    check_slogan,
    parse_transcript,
    render_transcript,
    run_remix,
)

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL, EXIT_AUTH = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="YAML config file (defaults built in)")
    p.add_argument("--runs-dir", type=Path, default=Path("runs"), help="parent directory of run directories")
    p.add_argument("--backend", default="live",
                   help="'live' for an OpenAI-compatible endpoint, 'mock' for the packaged fixtures, "
                        "or 'mock:PATH' for a fixture file or directory")
    p.add_argument("--seed-nonce-base", type=int, help="first attempt nonce")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config key, e.g. remix.max_edits=3 (repeatable)")
    p.add_argument("--model-generator", help="generator model id")
    p.add_argument("--model-judge", help="judge model id")
    p.add_argument("--n", type=int, help="slogans per cell")
    p.add_argument("--temperature", type=float, help="generation temperature")
    p.add_argument("--max-edits", type=int, help="edit budget per remix")
    p.add_argument("--parallelism", type=int, help="concurrent cells")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="quoteremix", description=__doc__.splitlines()[0] if __doc__ else None)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", parents=[common], help="generate slogans for the whole grid")
    g.add_argument("--run-id", required=True)

    e = sub.add_parser("evaluate", parents=[common], help="judge and score a run, then write reports")
    e.add_argument("--run-id", required=True)
    e.add_argument("--metrics-only", action="store_true", help="diversity only, no judge calls")
    e.add_argument("--pairing", choices=["index-aligned", "all-pairs"], help="hook duel pairing")
    e.add_argument("--allow-partial", action="store_true", help="evaluate even if some cells are not done")

    r = sub.add_parser("remix-one", parents=[common], help="remix a single brand-persona pair")
    r.add_argument("--brand", required=True)
    r.add_argument("--persona", required=True)
    r.add_argument("--show-prompt", action="store_true", help="print the prompt and exit without calling a model")

    rep = sub.add_parser("report", parents=[common], help="re-emit reports from persisted judgments")
    rep.add_argument("--run-id", required=True)
    rep.add_argument("--metrics-only", action="store_true")
    return parser


def _overrides(args) -> list[str]:
    out = list(args.overrides)
    mapping = {
        "model_generator": "models.generator", "model_judge": "models.judge", "n": "n",
        "temperature": "temperature.generation", "max_edits": "remix.max_edits",
        "parallelism": "parallelism", "seed_nonce_base": "seed_nonce_base",
    }
    for attr, key in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            out.append(f"{key}={value}")
    if getattr(args, "pairing", None):
        out.append(f"evaluation.pairing={args.pairing.replace('-', '_')}")
    return out


def _gateway(args, config) -> Gateway:
    if args.backend == "live":
        backend = OpenAIBackend(timeout=config.gateway.timeout)
    elif args.backend == "mock":
        backend = load_mock_fixtures(resources.files("quoteremix.data") / "mock_fixtures.json")
    elif args.backend.startswith("mock:"):
        path = Path(args.backend[5:])
        if not path.exists():
            raise ConfigError(f"mock fixture path {path} does not exist")
        backend = load_mock_fixtures(path)
    else:
        raise ConfigError(f"unknown backend {args.backend!r}")
    gc = config.gateway
    cache = None
    if gc.cache_dir:
        cache = Path(gc.cache_dir)
        if not cache.is_absolute():
            cache = args.runs_dir / cache
    return Gateway(backend, cache_dir=cache, rate_limit=gc.rate_limit,
                   retry=RetryPolicy(gc.max_attempts, gc.base_delay, gc.max_delay, gc.jitter))


def cmd_generate(args) -> int:
    config = load_config(args.config, _overrides(args))
    roster = load_roster(config.roster)
    gateway = _gateway(args, config)

    def progress(method, cid, status):
        print(f"[{method}] {cid}: {status}", flush=True)

    manifest = run_grid(roster, config, gateway, args.runs_dir, args.run_id, progress=progress)
    counts = manifest.counts()
    skipped = getattr(manifest, "skipped", 0)
    if skipped:
        print(f"resumed run {args.run_id}: skipped {skipped} completed cells")
    print(f"run {args.run_id}: " + ", ".join(f"{k}={v}" for k, v in sorted(counts.items()))
          + f"; backend calls={gateway.calls}")
    return EXIT_OK if set(counts) == {DONE} else EXIT_PARTIAL


def _evaluate(args, judge: bool) -> int:
    rd = RunDir(args.runs_dir, args.run_id)
    if not rd.exists():
        print(f"error: no run directory at {rd.root}", file=sys.stderr)
        return EXIT_CONFIG
    _, config, _ = rd.load()
    gateway = _gateway(args, config) if judge and not args.metrics_only else None
    pairing = args.pairing.replace("-", "_") if getattr(args, "pairing", None) else None
    allow_partial = getattr(args, "allow_partial", True)
    try:
        report = evaluate_run(args.runs_dir, args.run_id, gateway, metrics_only=args.metrics_only,
                              pairing=pairing, allow_partial=allow_partial)
    except (InsufficientCells, MissingVerdicts) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    paths = emit_report(report, rd.report)
    print((rd.report / "table3.md").read_text("utf-8"))
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    return _evaluate(args, judge=True)


def cmd_report(args) -> int:
    return _evaluate(args, judge=False)


def cmd_remix_one(args) -> int:
    config = load_config(args.config, _overrides(args))
    roster = load_roster(config.roster)
    brand = roster.brand(args.brand)
    persona = roster.persona(args.persona)
    prompt = build_remix_prompt(brand, persona)
    if args.show_prompt:
        print(prompt.rendered)
        return EXIT_OK
    gateway = _gateway(args, config)
    try:
        cand = run_remix(brand, persona, gateway, config, nonce=config.seed_nonce_base)
    except PipelineExhausted as exc:
        print(str(exc))
        for d in exc.discards:
            print(f"\n--- attempt nonce {d.nonce}: {d.stage} / {d.reason}")
            if d.slogan:
                print(f'slogan: "{d.slogan}"')
            if d.detail:
                print(d.detail)
        return EXIT_PARTIAL
    trace = cand.trace
    print(render_transcript(parse_transcript(trace.raw_transcript, config.remix.min_quotes)).rstrip())
    if trace.refined:
        print(f'refined: "{trace.pre_refinement}" -> "{trace.final_slogan}"')
    print()
    print(check_slogan(trace.starred_quote.text, cand.text, brand, config.remix).format_table())
    print(f'\nfinal slogan: "{cand.text}"')
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
    "remix-one": cmd_remix_one,
    "report": cmd_report,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore", QuoteLengthWarning)
    try:
        return COMMANDS[args.command](args)
    except AuthError as exc:
        print(f"authentication failed: {exc}\nSet {ENV_API_KEY} (and optionally OPENAI_BASE_URL) "
              f"or use --backend mock.", file=sys.stderr)
        return EXIT_AUTH
    except (ConfigError, ConfigMismatch, FileNotFoundError, yaml.YAMLError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ReportWriteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GatewayError as exc:
        stage = getattr(exc, "stage", None)
        print(f"model call failed{f' during {stage}' if stage else ''}: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
