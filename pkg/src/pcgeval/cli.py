"""Command-line entry point: one subcommand per pipeline stage, plus ``all``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import scoring
from .chat import ChatClientConfig, MockChatClient
from .errors import PCGEvalError
from .pipeline import STAGES, Run, RunSettings
from .qualify import count_words

CLASSIFIER_ENV = "PCGEVAL_CLASSIFIER_URL"


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--root", default="runs", help="directory holding all runs (default: runs)")
    p.add_argument("--run-id", default="default")
    p.add_argument("--prompts", dest="prompts_dir", help="directory of <team>.txt prompt files")
    p.add_argument("--trials", type=int)
    p.add_argument("--letters", help="target letters, e.g. ILU (default: A-Z)")
    p.add_argument("--strict", action="store_true", default=None, help="abort a level on its first bad ab_drop")
    p.add_argument("--classifier", nargs="+", metavar="SPEC", help="'builtin' or 'external URL'")
    p.add_argument("--physics", nargs="+", metavar="SPEC", help="'builtin' or 'ingest DIR' with external moving-block files")
    p.add_argument("--parallelism", type=int)
    chat = p.add_argument_group("chat backend")
    chat.add_argument("--endpoint")
    chat.add_argument("--model")
    chat.add_argument("--temperature", type=float)
    chat.add_argument("--max-retries", type=int)
    chat.add_argument("--timeout", type=float)
    chat.add_argument("--api-key-env", help="name of the environment variable holding the API key")
    chat.add_argument("--mock", metavar="DIR", help="serve canned *.md responses from DIR instead of calling an API")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pcgeval", description=__doc__, allow_abbrev=False)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES + ("all",):
        p = sub.add_parser(name, allow_abbrev=False, help=f"run the {name} stage" if name != "all" else "run every stage in order")
        _common(p)
        if name in ("score", "all"):
            p.add_argument("--weights", metavar="CSV", help="freeze character weights from a reference weights.csv")
        if name == "score":
            p.add_argument("--records", metavar="CSV", help="score a standalone trial-records CSV instead of a run")
            p.add_argument("--out", metavar="DIR", help="output directory for --records mode")
    return parser


def _backend(value: list[str] | None, keyword: str, flag: str) -> str | None:
    """Fold ``builtin`` / ``<keyword> ARG`` into the single string kept in the settings."""
    if value is None:
        return None
    if value == ["builtin"]:
        return "builtin"
    if len(value) == 2 and value[0] == keyword:
        arg = value[1]
    elif len(value) == 1:
        arg = value[0].removeprefix(f"{keyword}:")
    else:
        raise ValueError(f"{flag} expects 'builtin' or '{keyword} ARG', got {' '.join(value)!r}")
    return arg if keyword == "external" else f"ingest:{arg}"


def _settings(args, stored: RunSettings | None) -> RunSettings:
    args.classifier = _backend(args.classifier, "external", "--classifier")
    args.physics = _backend(args.physics, "ingest", "--physics")
    base = stored or RunSettings(classifier=os.environ.get(CLASSIFIER_ENV, "builtin"))
    overrides = {
        k: getattr(args, k)
        for k in ("prompts_dir", "trials", "letters", "strict", "classifier", "physics", "parallelism")
        if getattr(args, k) is not None
    }
    chat = dict(base.chat)
    for flag, key in (
        ("endpoint", "endpoint"),
        ("model", "model"),
        ("temperature", "temperature"),
        ("max_retries", "max_retries"),
        ("timeout", "timeout"),
        ("api_key_env", "api_key_env"),
    ):
        if getattr(args, flag) is not None:
            chat[key] = getattr(args, flag)
    ChatClientConfig(**chat)  # validate
    return replace(base, **overrides, chat=chat)


def _score_records(args) -> int:
    records = scoring.read_records_csv(args.records)
    cfg = scoring.CompetitionConfig.infer(records)
    weights = scoring.read_weights_csv(args.weights) if args.weights else None
    result = scoring.aggregate(records, cfg, weights)
    lengths = {}
    for p in cfg.prompts:
        f = Path(args.prompts_dir or ".") / f"{p}.txt"
        lengths[p] = count_words(f.read_text(encoding="utf-8")) if f.exists() else 0
    standings = scoring.rank(result, lengths)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    scoring.write_weights_csv(result, out / "weights.csv")
    scoring.write_characters_csv(result, out / "characters.csv")
    scoring.write_standings_csv(standings, result, out / "standings.csv")
    print(scoring.format_report(result, standings), end="")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "score" and args.records:
            return _score_records(args)
        stored = Run(args.root, args.run_id).settings if (Path(args.root) / args.run_id / "manifest.json").exists() else None
        settings = _settings(args, stored)
        chat_client = None
        if args.mock:
            chat_client = MockChatClient.from_directory(args.mock)
        run = Run(args.root, args.run_id, settings, chat_client=chat_client)
        weights = scoring.read_weights_csv(args.weights) if getattr(args, "weights", None) else None
        if args.command == "all":
            run.run_all(weights)
        elif args.command == "score":
            run.run_stage("score", weights=weights)
        else:
            n = run.run_stage(args.command)
            if isinstance(n, int):
                print(f"{args.command}: processed {n} item(s)")
        for team, errors in sorted(run.manifest["errors"].items()):
            for e in errors:
                print(f"error [{team}] {e}", file=sys.stderr)
        report = run.dir / "scores" / "report.txt"
        if args.command in ("all", "score") and report.exists():
            print(report.read_text(encoding="utf-8"), end="")
    except (PCGEvalError, ValueError, OSError) as exc:
        print(f"pcgeval: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
