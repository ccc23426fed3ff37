"""Command-line entry point.

Exit status: 0 on success, 1 on a domain failure, 2 on a usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from pydantic import BaseModel, ConfigDict, ValidationError

from . import analysis, corpus_builder, harness, nli_builder
from .data_model import load_corpus, load_predictions
from .errors import ConfigError, EventEvalError
from .profiles import make_backend, make_discriminator, make_embedder, make_encoder
from .scoring import score_predictions

logger = logging.getLogger("eventeval")

SCORES_SUFFIX = ".scores.jsonl"
VERDICTS_SUFFIX = ".verdicts.jsonl"


class RunConfig(BaseModel):
    """Flat ``key = value`` run configuration; command-line flags win."""

    model_config = ConfigDict(extra="forbid")

    corpus_dir: Path | None = None
    predictions_dir: Path | None = None
    report_dir: Path | None = None
    backend: str = "echo"
    discriminator: str = "containment"
    encoder: str = "char-hash"
    seed: int = 0
    template: Path | None = None
    jobs: int = 1


def load_run_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        return RunConfig.model_validate(corpus_builder.read_flat_config(path))
    except ValidationError as exc:
        raise ConfigError([f"{'.'.join(map(str, e['loc']))}: {e['msg']}" for e in exc.errors()]) from None
    except OSError as exc:
        raise ConfigError([str(exc)]) from None


def _pick(flag, config_value):
    return flag if flag is not None else config_value


def _require(problems: list[str], label: str, path, kind: str = "exists"):
    if path is None:
        problems.append(f"{label}: not set")
    elif kind == "exists" and not Path(path).exists():
        problems.append(f"{label}: {path} does not exist")
    elif kind == "dir" and not Path(path).is_dir():
        problems.append(f"{label}: {path} is not a directory")


def _check(problems: list[str]):
    if problems:
        raise ConfigError(problems)


# --------------------------------------------------------------- subcommands

def cmd_build_corpus(args) -> int:
    problems: list[str] = []
    _require(problems, "--raw", args.raw)
    if args.config is not None:
        _require(problems, "--config", args.config)
    _check(problems)
    config = corpus_builder.load_pipeline_config(args.config)
    provider = make_embedder(args.embedder)
    if args.annotator == "none":
        annotator = corpus_builder.NullAnnotator()
    elif args.annotator == "rule":
        annotator = corpus_builder.RuleTemporalAnnotator()
    else:
        annotator = corpus_builder.LLMTemporalAnnotator(make_backend(args.annotator))
    summary = corpus_builder.build_corpus(args.raw, args.out, config, provider, annotator)
    print(json.dumps(summary.to_json(), ensure_ascii=False))
    return 0


def cmd_build_nli_data(args) -> int:
    problems: list[str] = []
    _require(problems, "--sources", args.sources)
    if args.plan is not None:
        _require(problems, "--plan", args.plan)
    _check(problems)
    try:
        plan = nli_builder.BuildPlan.load(args.plan)
    except (ValidationError, ValueError) as exc:
        raise ConfigError([f"--plan: {exc}"]) from None
    sources = nli_builder.load_sources(args.sources)
    rephraser = (nli_builder.TemplateRephraser() if args.rephraser == "template"
                 else nli_builder.LLMRephraser(make_backend(args.rephraser)))
    dataset = nli_builder.build_dataset(sources, plan, rephraser, make_embedder(args.embedder),
                                        seed=args.seed, kind=args.kind)
    manifest = nli_builder.write_dataset(dataset, args.out, args.seed, plan)
    print(manifest.read_text(encoding="utf-8"), end="")
    return 0


def cmd_summarize(args) -> int:
    cfg = load_run_config(args.config)
    corpus = _pick(args.corpus, cfg.corpus_dir)
    out = _pick(args.out, cfg.predictions_dir)
    template_path = _pick(args.template, cfg.template)
    problems: list[str] = []
    _require(problems, "--corpus", corpus)
    if out is None:
        problems.append("--out: not set")
    if template_path is not None:
        _require(problems, "--template", template_path)
    if args.shots > 0 and corpus is not None and not Path(corpus).is_dir():
        problems.append("--corpus must be a directory with train.jsonl when --shots > 0")
    _check(problems)

    template = harness.PromptTemplate.load(template_path)
    backend = make_backend(_pick(args.backend, cfg.backend), template, args.context_limit)
    instances = load_corpus(corpus, args.split)
    demo_pool = load_corpus(corpus, "train") if args.shots > 0 else []
    params = harness.GenerationParams(temperature=args.temperature, max_output_length=args.max_output_length,
                                      seed=args.gen_seed)
    result = harness.run_batch(instances, backend, params, template, args.shots, out,
                               system_id=args.system, demo_pool=demo_pool, seed=_pick(args.seed, cfg.seed),
                               jobs=_pick(args.jobs, cfg.jobs), truncate=args.truncate)
    print(f"{len(result.summaries)} predictions in {result.predictions_path}; {len(result.skipped)} skipped")
    return 0


def _prediction_files(path: Path) -> list[Path]:
    if path.is_file():
        return [path]
    return sorted(p for p in path.glob("*.jsonl")
                  if not p.name.endswith((SCORES_SUFFIX, VERDICTS_SUFFIX)))


def _sibling(path: Path, suffix: str) -> Path:
    return path.with_name(path.name[:-len(".jsonl")] + suffix if path.name.endswith(".jsonl") else path.name + suffix)


def cmd_evaluate(args) -> int:
    cfg = load_run_config(args.config)
    preds_path = _pick(args.predictions, cfg.predictions_dir)
    corpus = _pick(args.corpus, cfg.corpus_dir)
    problems: list[str] = []
    _require(problems, "--predictions", preds_path)
    _require(problems, "--corpus", corpus)
    _check(problems)
    preds_path = Path(preds_path)
    files = _prediction_files(preds_path)
    if args.out is not None and len(files) != 1:
        raise ConfigError(["--out needs exactly one predictions file"])

    discriminator = make_discriminator(_pick(args.discriminator, cfg.discriminator))
    encoder = make_encoder(_pick(args.encoder, cfg.encoder))
    instances = load_corpus(corpus, args.split)
    for file in files:
        preds = load_predictions(file)
        records, verdicts = score_predictions(instances, preds, discriminator, encoder,
                                              jobs=_pick(args.jobs, cfg.jobs))
        out = Path(args.out) if args.out else _sibling(file, SCORES_SUFFIX)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text("".join(json.dumps(r.model_dump(), ensure_ascii=False, sort_keys=True) + "\n"
                               for r in records), encoding="utf-8")
        if args.verdicts:
            verdict_path = Path(args.verdicts)
        elif out.name.endswith(SCORES_SUFFIX):
            verdict_path = out.with_name(out.name[:-len(SCORES_SUFFIX)] + VERDICTS_SUFFIX)
        else:
            verdict_path = out.with_name(out.name + VERDICTS_SUFFIX)
        verdict_path.write_text("".join(json.dumps(v, ensure_ascii=False, sort_keys=True) + "\n"
                                        for v in verdicts), encoding="utf-8")
        meta = {"predictions": file.name, "discriminator": discriminator.name, "encoder": encoder.name,
                "scored": len(records)}
        _meta_path(out).write_text(json.dumps(meta, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
                                   encoding="utf-8")
        print(f"{len(records)} scored -> {out}")
    return 0


def _meta_path(scores_path: Path) -> Path:
    name = scores_path.name
    stem = name[:-len(SCORES_SUFFIX)] if name.endswith(SCORES_SUFFIX) else name
    return scores_path.with_name(stem + ".eval.json")


def _score_files(path: Path) -> list[Path]:
    return [path] if path.is_file() else sorted(path.glob("*" + SCORES_SUFFIX))


def cmd_report(args) -> int:
    cfg = load_run_config(args.config)
    path = _pick(args.predictions, cfg.predictions_dir)
    problems: list[str] = []
    _require(problems, "--predictions", path)
    _check(problems)
    path = Path(path)
    files = _score_files(path)
    if not files:
        raise ConfigError([f"--predictions: no *{SCORES_SUFFIX} files under {path}; run evaluate first"])
    rows = analysis.aggregate_report(analysis.load_scores(files))
    table = analysis.render_table(rows)
    report_dir = _pick(args.out_dir, cfg.report_dir)
    out = Path(args.out) if args.out else (Path(report_dir) if report_dir else
                                           (path if path.is_dir() else path.parent)) / "report.tsv"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(table, encoding="utf-8")
    sources = {}
    for file in files:
        meta = _meta_path(file)
        sources[file.name] = json.loads(meta.read_text(encoding="utf-8")) if meta.exists() else None
    out.with_name(out.stem + ".meta.json").write_text(
        json.dumps({"averaging": "macro", "scores": sources}, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    print(table, end="")
    return 0


def cmd_analyze(args) -> int:
    cfg = load_run_config(args.config)
    path = _pick(args.predictions, cfg.predictions_dir)
    corpus = _pick(args.corpus, cfg.corpus_dir)
    problems: list[str] = []
    _require(problems, "--predictions", path)
    _require(problems, "--corpus", corpus)
    _check(problems)
    path = Path(path)
    bucketing = (analysis.Bucketing(dimension=args.by, edges=tuple(args.edges)) if args.edges
                 else analysis.Bucketing.default(args.by))
    instances = load_corpus(corpus, args.split)
    scores = analysis.load_scores(_score_files(path))
    report = analysis.bucket_metrics(scores, instances, bucketing)
    report_dir = _pick(args.out_dir, cfg.report_dir)
    out = Path(args.out) if args.out else (Path(report_dir) if report_dir else
                                           (path if path.is_dir() else path.parent)) / f"by_{args.by}.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    analysis.write_plot_data(report, out)
    for bucket in report.buckets:
        print(f"{bucket.label}\t{bucket.size}")
    return 0


def cmd_stats(args) -> int:
    splits = ("train", "dev", "test") if args.split == "all" else (args.split,)
    instances = [inst for split in splits for inst in load_corpus(args.corpus, split)]
    stats = analysis.corpus_stats(instances)
    print(json.dumps({k: round(v, 1) if isinstance(v, float) else v for k, v in stats.items()}, ensure_ascii=False))
    return 0


def cmd_consistency(args) -> int:
    from .data_model import iter_jsonl

    predicted = [obj for _, obj in iter_jsonl(args.predicted)]
    human = [obj for _, obj in iter_jsonl(args.human)]
    for kind, inp in sorted(analysis.align_verdicts(predicted, human).items()):
        pred_recall = 100.0 * sum(inp.predicted) / len(inp.predicted)
        human_recall = 100.0 * sum(inp.human) / len(inp.human)
        print(f"{kind}\t{pred_recall:.1f}\t{human_recall:.1f}\t{analysis.consistency(inp):.1f}")
    return 0


# -------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eventeval", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("build-corpus", help="build train/dev/test JSONL from raw entries")
    p.add_argument("--raw", required=True, help="drop folder of raw entry JSONL files")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="flat key=value pipeline config")
    p.add_argument("--embedder", default="hashing", help="hashing | st:<model>")
    p.add_argument("--annotator", default="rule", help="none | rule | <backend profile>")
    p.set_defaults(func=cmd_build_corpus)

    p = sub.add_parser("build-nli-data", help="build entailment training pairs")
    p.add_argument("--kind", required=True, choices=["event", "argument", "causal", "temporal"])
    p.add_argument("--plan", help="JSON build plan")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sources", required=True, help="JSONL of source records")
    p.add_argument("--out", required=True)
    p.add_argument("--embedder", default="hashing")
    p.add_argument("--rephraser", default="template", help="template | <backend profile>")
    p.set_defaults(func=cmd_build_nli_data)

    p = sub.add_parser("summarize", help="generate summaries for a corpus split")
    p.add_argument("--split", default="test", choices=["train", "dev", "test"])
    p.add_argument("--system", required=True)
    p.add_argument("--shots", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--corpus")
    p.add_argument("--backend", help="echo | lead | openai:<model>")
    p.add_argument("--template", help="JSON prompt template")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--context-limit", type=int)
    p.add_argument("--truncate", action="store_true", help="tail-truncate longest documents instead of skipping")
    p.add_argument("--temperature", type=float, default=0.01)
    p.add_argument("--max-output-length", type=int)
    p.add_argument("--gen-seed", type=int)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("evaluate", help="score predictions with all eight metrics")
    p.add_argument("--predictions", help="predictions JSONL or directory")
    p.add_argument("--corpus", help="corpus directory or split JSONL")
    p.add_argument("--split", default="test", choices=["train", "dev", "test"])
    p.add_argument("--discriminator", help="containment | http(s)://judge-service")
    p.add_argument("--encoder", help="char-hash | hf:<model>")
    p.add_argument("--out")
    p.add_argument("--verdicts")
    p.add_argument("--config")
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="aggregate score files into a table")
    p.add_argument("--predictions", help="score file or directory of *.scores.jsonl")
    p.add_argument("--out")
    p.add_argument("--out-dir")
    p.add_argument("--config")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("analyze", help="bucketed breakdown for plotting")
    p.add_argument("--predictions")
    p.add_argument("--corpus")
    p.add_argument("--split", default="test", choices=["train", "dev", "test"])
    p.add_argument("--by", required=True, choices=["doc_count", "time_span"])
    p.add_argument("--edges", type=float, nargs="+")
    p.add_argument("--out")
    p.add_argument("--out-dir")
    p.add_argument("--config")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("stats", help="corpus statistics")
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", default="test", choices=["train", "dev", "test", "all"])
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("consistency", help="agreement of predicted and human verdicts")
    p.add_argument("--predicted", required=True)
    p.add_argument("--human", required=True)
    p.set_defaults(func=cmd_consistency)
    return parser


def dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EventEvalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
