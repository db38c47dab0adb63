"""Command-line interface: one subcommand per pipeline stage.

Option precedence is CLI flag, then config file, then built-in default.
Every command that writes an artifact also writes a sibling
<out>.manifest.json recording inputs, outputs, settings, and seed.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path
from typing import Optional

from . import __version__
from .corpus import RejectsLog, Source, corpus_stats, load_dataset, read_corpus, write_corpus
from .emit import (
    compute_stats,
    emit_sft,
    read_sft,
    render_stats,
    sft_to_sample,
    write_sft,
)
from .errors import PipelineError, UsageError
from .llmclient import CacheMode, Completer, HttpLLMClient, ResponseCache
from .manifest import build_manifest, file_digest, write_manifest
from .perturb import (
    apply_review,
    build_plus_set,
    read_answers,
    read_groups,
    read_review,
    score_consistency,
    write_groups,
)
from .scale import AugmentationPlan, augment
from .synthesis import (
    SynthesisConfig,
    read_records,
    record_constraints,
    synthesize_corpus,
    write_records,
)
from .template import sample_from_json, sample_to_json
from .verify import ComparisonPolicy, ExecutionLimits, verify_sweep

_SOURCES = ", ".join(s.value for s in Source)


def read_config(path) -> dict[str, str]:
    """Flat `key = value` file; # starts a comment, blank lines ignored."""
    settings: dict[str, str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError("BAD_CONFIG", f"{path}:{lineno}: expected key = value")
        key, value = line.split("=", 1)
        settings[key.strip()] = value.strip()
    return settings


class Settings:
    """Resolved option lookup: CLI beats config file beats default."""

    def __init__(self, args: argparse.Namespace, config: dict[str, str]):
        self._args = args
        self._config = config
        self.effective: dict = {}

    def get(self, name: str, default=None, cast=str):
        cli_value = getattr(self._args, name, None)
        if cli_value is not None:
            value = cli_value
        elif name in self._config:
            raw = self._config[name]
            try:
                value = cast(raw) if cast is not None else raw
            except ValueError as exc:
                raise UsageError("BAD_CONFIG", f"config key {name}: {exc}") from exc
        else:
            value = default
        if value is not None:
            self.effective[name] = value
        return value

    def flag(self, name: str, default: bool = False) -> bool:
        cli_value = getattr(self._args, name, None)
        if cli_value:
            self.effective[name] = True
            return True
        if name in self._config:
            value = self._config[name].lower() in ("1", "true", "yes", "on")
            self.effective[name] = value
            return value
        return default


def _limits(settings: Settings) -> ExecutionLimits:
    return ExecutionLimits(timeout_s=settings.get("timeout_s", 10.0, float))


def _finish(
    command: str,
    settings: Settings,
    inputs: dict[str, str],
    out_path,
    extra_outputs: Optional[dict[str, str]] = None,
    seed: Optional[int] = None,
    started: Optional[float] = None,
):
    outputs = {str(out_path): file_digest(out_path)}
    outputs.update(extra_outputs or {})
    timings = {"total": round(time.monotonic() - started, 3)} if started else {}
    manifest = build_manifest(command, settings.effective, inputs, outputs, seed, timings)
    write_manifest(manifest, out_path)


def cmd_ingest(args: argparse.Namespace, settings: Settings) -> int:
    started = time.monotonic()
    try:
        source = Source(args.source)
    except ValueError:
        raise UsageError("BAD_SOURCE", f"unknown source {args.source!r}; one of: {_SOURCES}")
    rejects = RejectsLog(args.rejects) if args.rejects else None
    problems = load_dataset(args.input, source, rejects=rejects, id_prefix=args.id_prefix)
    write_corpus(problems, args.out)
    extra = {}
    if rejects is not None:
        extra[str(args.rejects)] = file_digest(args.rejects)
    _finish(
        "ingest",
        settings,
        {str(args.input): file_digest(args.input)},
        args.out,
        extra_outputs=extra,
        started=started,
    )
    stats = corpus_stats(problems)
    stats["rejected"] = len(rejects.entries) if rejects is not None else 0
    print(json.dumps(stats, ensure_ascii=False))
    return 0


def _build_completer(settings: Settings) -> Completer:
    mode_name = settings.get("cache_mode", "off")
    try:
        mode = CacheMode(mode_name)
    except ValueError:
        raise UsageError("BAD_CACHE_MODE", f"unknown cache mode {mode_name!r}")
    cache_path = settings.get("cache")
    if mode is not CacheMode.OFF and not cache_path:
        raise UsageError("BAD_CACHE_MODE", f"cache mode {mode.value} requires --cache")
    cache = ResponseCache(cache_path) if cache_path else None
    client = None
    if mode is not CacheMode.REPLAY:
        client = HttpLLMClient(base_url=settings.get("api_base"))
    return Completer(
        mode=mode,
        cache=cache,
        client=client,
        retries=settings.get("retries", 3, int),
        backoff_s=settings.get("backoff_s", 0.5, float),
    )


def cmd_synthesize(args: argparse.Namespace, settings: Settings) -> int:
    started = time.monotonic()
    problems = read_corpus(args.corpus)
    completer = _build_completer(settings)
    config = SynthesisConfig(
        model=settings.get("model", "gpt-4"),
        temperature=settings.get("temperature", 0.0, float),
        max_fix_rounds=settings.get("max_fix_rounds", 1, int),
        request_timeout_s=settings.get("request_timeout_s", 60.0, float),
    )
    records = synthesize_corpus(
        problems,
        completer,
        config,
        runner=settings.get("runner"),
        limits=_limits(settings),
        workers=settings.get("workers", 1, int),
    )
    write_records(records, args.out)
    inputs = {str(args.corpus): file_digest(args.corpus)}
    _finish("synthesize", settings, inputs, args.out, started=started)
    by_status: dict[str, int] = {}
    for record in records:
        by_status[record.status.value] = by_status.get(record.status.value, 0) + 1
    print(json.dumps({"records": len(records), "by_status": by_status}, ensure_ascii=False))
    return 0


def cmd_scale(args: argparse.Namespace, settings: Settings) -> int:
    started = time.monotonic()
    records = read_records(args.records)
    seed = settings.get("seed", 0, int)
    plan = AugmentationPlan(
        budget=settings.get("budget", 1, int),
        all_selectors=settings.flag("all_selectors"),
        include_symbolic=settings.flag("include_symbolic"),
        seed=seed,
    )
    runner = settings.get("runner")
    limits = _limits(settings)
    totals: dict[str, int] = {}
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    written = 0
    with out_path.open("w", encoding="utf-8") as fh:
        for record in records:
            if record.template is None:
                continue
            constraints = record_constraints(record)
            samples, report = augment(
                record.template,
                record.masked,
                constraints,
                plan,
                problem_id=record.problem_id,
                runner=runner,
                limits=limits,
            )
            for sample in samples:
                fh.write(json.dumps(sample_to_json(sample), ensure_ascii=False) + "\n")
            written += len(samples)
            for key, value in report.to_json().items():
                totals[key] = totals.get(key, 0) + value
    inputs = {str(args.records): file_digest(args.records)}
    _finish("scale", settings, inputs, args.out, seed=seed, started=started)
    print(json.dumps({"samples": written, "report": totals}, ensure_ascii=False))
    return 0


def cmd_emit(args: argparse.Namespace, settings: Settings) -> int:
    started = time.monotonic()
    records = read_records(args.records)
    augmented = []
    inputs = {str(args.records): file_digest(args.records)}
    if args.samples:
        text = Path(args.samples).read_text(encoding="utf-8")
        augmented = [
            sample_from_json(json.loads(line)) for line in text.splitlines() if line.strip()
        ]
        inputs[str(args.samples)] = file_digest(args.samples)
    sft = emit_sft(
        records,
        augmented,
        include_symbolic=settings.flag("include_symbolic"),
        strip_docstrings=settings.flag("strip_docstrings"),
    )
    write_sft(sft, args.out)
    _finish("emit", settings, inputs, args.out, started=started)
    print(json.dumps({"sft_records": len(sft)}, ensure_ascii=False))
    return 0


def cmd_stats(args: argparse.Namespace, settings: Settings) -> int:
    problems = read_corpus(args.corpus)
    records = read_records(args.records)
    table = compute_stats(corpus_stats(problems)["per_source"], records)
    if args.json:
        print(json.dumps(table.to_json(), ensure_ascii=False))
    else:
        print(render_stats(table))
    return 0


def cmd_perturb_build(args: argparse.Namespace, settings: Settings) -> int:
    started = time.monotonic()
    records = read_records(args.records)
    seed = settings.get("seed", 0, int)
    groups, report = build_plus_set(
        records,
        n_new=settings.get("n_new", 2, int),
        seed=seed,
        runner=settings.get("runner"),
        limits=_limits(settings),
    )
    write_groups(groups, args.out)
    inputs = {str(args.records): file_digest(args.records)}
    _finish("perturb-build", settings, inputs, args.out, seed=seed, started=started)
    print(json.dumps(report.to_json(), ensure_ascii=False))
    return 0


def cmd_perturb_score(args: argparse.Namespace, settings: Settings) -> int:
    groups = read_groups(args.groups)
    if args.review:
        groups = apply_review(groups, read_review(args.review))
    answers = read_answers(args.answers)
    report = score_consistency(groups, answers)
    if args.json:
        print(json.dumps(report.to_json(), ensure_ascii=False))
    else:
        out = report.to_json()
        print(
            f"groups {out['groups_scored']}  any-correct {out['any_correct']}  "
            f"all-correct {out['all_correct']}  consistency {out['consistency']}"
        )
    return 0


def cmd_verify_sweep(args: argparse.Namespace, settings: Settings) -> int:
    sft = read_sft(args.sft)
    samples = [sft_to_sample(record) for record in sft]
    report = verify_sweep(
        samples,
        limits=_limits(settings),
        policy=ComparisonPolicy(),
        runner=settings.get("runner"),
        workers=settings.get("workers", 1, int),
    )
    print(json.dumps(report.to_json(), ensure_ascii=False))
    return 0 if report.all_passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mathsynth",
        description="Turn math word-problem corpora into verified, number-independent training data.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="flat key = value settings file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load a raw dataset into the unified corpus format")
    p.add_argument("--input", required=True)
    p.add_argument("--source", required=True, help=f"one of: {_SOURCES}")
    p.add_argument("--out", required=True)
    p.add_argument("--rejects", help="write rejected rows here as JSONL")
    p.add_argument("--id-prefix", dest="id_prefix")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synthesize", help="ask the model for templates and verify them")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model")
    p.add_argument("--temperature", type=float)
    p.add_argument("--max-fix-rounds", dest="max_fix_rounds", type=int)
    p.add_argument("--cache", help="response cache JSONL path")
    p.add_argument("--cache-mode", dest="cache_mode", choices=["record", "replay", "off"])
    p.add_argument("--api-base", dest="api_base")
    p.add_argument("--request-timeout-s", dest="request_timeout_s", type=float)
    p.add_argument("--runner")
    p.add_argument("--workers", type=int)
    p.add_argument("--timeout-s", dest="timeout_s", type=float)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("scale", help="expand verified templates into training samples")
    p.add_argument("--records", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--budget", type=int)
    p.add_argument("--all-selectors", dest="all_selectors", action="store_true", default=None)
    p.add_argument(
        "--include-symbolic", dest="include_symbolic", action="store_true", default=None
    )
    p.add_argument("--seed", type=int)
    p.add_argument("--runner")
    p.add_argument("--timeout-s", dest="timeout_s", type=float)
    p.set_defaults(func=cmd_scale)

    p = sub.add_parser("emit", help="write the final instruction/output training file")
    p.add_argument("--records", required=True)
    p.add_argument("--samples")
    p.add_argument("--out", required=True)
    p.add_argument(
        "--include-symbolic", dest="include_symbolic", action="store_true", default=None
    )
    p.add_argument(
        "--strip-docstrings", dest="strip_docstrings", action="store_true", default=None
    )
    p.set_defaults(func=cmd_emit)

    p = sub.add_parser("stats", help="per-source verified yield table")
    p.add_argument("--corpus", required=True)
    p.add_argument("--records", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("perturb", help="number-perturbed evaluation sets")
    perturb_sub = p.add_subparsers(dest="perturb_command", required=True)
    b = perturb_sub.add_parser("build", help="build perturbed groups from verified records")
    b.add_argument("--records", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--n-new", dest="n_new", type=int)
    b.add_argument("--seed", type=int)
    b.add_argument("--runner")
    b.add_argument("--timeout-s", dest="timeout_s", type=float)
    b.set_defaults(func=cmd_perturb_build)
    s = perturb_sub.add_parser("score", help="score model answers for logical consistency")
    s.add_argument("--groups", required=True)
    s.add_argument("--answers", required=True)
    s.add_argument("--review", help="JSONL of human approve/reject decisions")
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_perturb_score)

    p = sub.add_parser("verify-sweep", help="re-execute emitted samples end to end")
    p.add_argument("--sft", required=True)
    p.add_argument("--runner")
    p.add_argument("--workers", type=int)
    p.add_argument("--timeout-s", dest="timeout_s", type=float)
    p.set_defaults(func=cmd_verify_sweep)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = read_config(args.config) if args.config else {}
        settings = Settings(args, config)
        return args.func(args, settings)
    except UsageError as exc:
        print(json.dumps(exc.to_record(), ensure_ascii=False), file=sys.stderr)
        return 2
    except PipelineError as exc:
        print(json.dumps(exc.to_record(), ensure_ascii=False), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
