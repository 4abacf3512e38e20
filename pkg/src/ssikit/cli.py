"""Command-line entry point: gen, tag, rank, temporal, classify, pipeline.

Every subcommand reads files, computes its outputs fully in memory, then
writes them in one step, so a failure never leaves partial outputs behind.
Exit codes: 0 success, 1 usage error, 2 data or validation error,
3 internal error. All randomness flows from explicit seeds in the inputs.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import Sequence

from . import __version__, corpus, dtree, lexicon, tagger, temporal

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class _Parser(argparse.ArgumentParser):
    """argparse reserves status 2 for usage errors; this tool uses 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class UsageError(ValueError):
    """Bad flag combination detected after parsing."""


class _StageFailure(Exception):
    """A pipeline stage returned a nonzero exit code (already reported)."""

    def __init__(self, code: int, stage: str):
        super().__init__(stage)
        self.code = code
        self.stage = stage


def _emit(out_dir: Path, files: dict[str, str]) -> None:
    """Write all outputs, removing everything written on a mid-write failure."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    try:
        for name, content in files.items():
            path = out_dir / name
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(content, encoding="utf-8", newline="\n")
            written.append(path)
    except BaseException:
        for path in written:
            path.unlink(missing_ok=True)
        raise


def _require(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"{what} not found: {path}")
    return p


# -- subcommand bodies --------------------------------------------------------

def _cmd_gen(args: argparse.Namespace) -> int:
    spec = corpus.SyntheticSpec.from_json(_require(args.spec, "spec file"))
    cohort, sidecar = corpus.generate_synthetic(spec)
    dict_lines = ["# term\tconcept_id"]
    dict_lines += [f"{c.term}\t{c.term}" for c in spec.all_concepts]
    files = {
        "cohort.jsonl": corpus.cohort_to_jsonl(cohort),
        "sidecar.jsonl": corpus.sidecar_to_jsonl(sidecar),
        "dictionary.tsv": "\n".join(dict_lines) + "\n",
    }
    _emit(Path(args.out), files)
    print(
        f"gen: {len(cohort.cases)} cases, {len(cohort.notes)} notes, "
        f"{len(sidecar)} planted mentions -> {args.out}"
    )
    return EXIT_OK


def _load_filters(path: str | None) -> tagger.FilterConfig:
    if path is None:
        return tagger.FilterConfig()
    return tagger.FilterConfig.from_json(_require(path, "filter config"))


def _cmd_tag(args: argparse.Namespace) -> int:
    cohort = corpus.load_cohort(_require(args.cohort, "cohort"))
    dictionary = tagger.Dictionary.from_file(_require(args.dict, "dictionary"))
    filters = _load_filters(args.filters)
    mentions = tagger.tag_cohort(cohort, dictionary, filters)
    filtered = [
        m for m in tagger.apply_filters(mentions, filters)
        if args.min_day <= m.day <= args.max_day
    ]
    files = {
        "mentions_full.csv": tagger.mentions_to_csv(mentions),
        "mentions_filtered.csv": tagger.mentions_to_csv(filtered),
    }
    _emit(Path(args.out), files)
    print(f"tag: {len(mentions)} mentions, {len(filtered)} after filters -> {args.out}")
    return EXIT_OK


def _cmd_rank(args: argparse.Namespace) -> int:
    files: dict[str, str] = {}
    if args.ranking:
        if args.mentions or args.cohort:
            raise UsageError("--ranking replaces --mentions/--cohort")
        ranking = lexicon.read_ranking_csv(_require(args.ranking, "ranking"))
        files["ranking.csv"] = lexicon.ranking_to_csv(ranking)
    else:
        if not (args.mentions and args.cohort):
            raise UsageError("rank needs --mentions and --cohort (or --ranking)")
        cohort = corpus.load_cohort(_require(args.cohort, "cohort"))
        mentions = tagger.read_mentions_csv(_require(args.mentions, "mentions"))
        counts = lexicon.count_contingency(mentions, cohort)
        ranking = lexicon.rank_concepts(counts)
        files["ranking.csv"] = lexicon.ranking_to_csv(ranking, counts)
    if args.judgments:
        judgments = lexicon.read_judgments_csv(_require(args.judgments, "judgments"))
        ks = [k for k in (10, 20, 30) if k <= len(ranking)]
        rows = lexicon.precision_table(ranking, judgments, ks=ks)
        files["precision.csv"] = lexicon.precision_table_to_csv(rows)
    _emit(Path(args.out), files)
    print(f"rank: {len(ranking)} concepts -> {args.out}")
    return EXIT_OK


def _cmd_temporal(args: argparse.Namespace) -> int:
    cohort = corpus.load_cohort(_require(args.cohort, "cohort"))
    mentions = tagger.read_mentions_csv(_require(args.mentions, "mentions"))
    counts = lexicon.count_contingency(mentions, cohort)
    ranking = lexicon.rank_concepts(counts)
    selected = [rc.concept_id for rc in ranking[: args.top]]
    all_dists = []
    all_pairs_csv = []
    all_periods = []
    for group in corpus.LABELS:
        dists = temporal.day_frequencies(mentions, cohort, group, selected)
        pairs = temporal.cooccurrence_pairs(
            dists, daily_top_n=args.daily_top, all_pairs=args.all_pairs
        )
        all_dists.extend(dists)
        all_pairs_csv.append((group, pairs))
        all_periods.extend(temporal.period_summary(dists, group))
    pairs_buf = io.StringIO()
    pairs_writer = csv.writer(pairs_buf, lineterminator="\n")
    pairs_writer.writerow(temporal.PAIRS_CSV_HEADER.split(","))
    for group, pairs in all_pairs_csv:
        for p in pairs:
            pairs_writer.writerow(
                [group, p.concept_a, p.days_a, p.concept_b, p.days_b, p.co_days]
            )
    files = {
        "distribution.csv": temporal.distributions_to_csv(all_dists),
        "pairs.csv": pairs_buf.getvalue(),
        "periods.csv": temporal.periods_to_csv(all_periods),
    }
    _emit(Path(args.out), files)
    print(f"temporal: {len(selected)} concepts over both groups -> {args.out}")
    return EXIT_OK


def _parse_features(value: str) -> tuple[str, int, list[dtree.FeatureSpec] | None]:
    """Parse --features pmi:<k> or expert:<file>."""
    kind, _, rest = value.partition(":")
    if kind == "pmi":
        if not rest.isdigit() or int(rest) < 1:
            raise UsageError(f"--features pmi:<k> needs a positive k, got {value!r}")
        return dtree.FEATURES_PMI, int(rest), None
    if kind == "expert":
        specs = dtree.load_feature_specs(_require(rest, "feature spec file"))
        return dtree.FEATURES_EXPERT, len(specs), specs
    raise UsageError(f"--features must be pmi:<k> or expert:<file>, got {value!r}")


def _cmd_classify(args: argparse.Namespace) -> int:
    cohort = corpus.load_cohort(_require(args.cohort, "cohort"))
    mentions = tagger.read_mentions_csv(_require(args.mentions, "mentions"))
    source, k, specs = _parse_features(args.features)
    filters = _load_filters(args.filters)
    config = dtree.CVConfig(
        folds=args.folds,
        seed=args.seed,
        confidence=args.confidence,
        min_leaf=args.min_leaf,
        global_ranking=args.global_ranking,
        min_day=args.min_day,
        max_day=args.max_day,
    )
    report = dtree.cross_validate(
        cohort, mentions, k_features=k, feature_source=source,
        expert_specs=specs, config=config, filters=filters,
    )
    files = {
        "report.csv": dtree.report_to_csv(report),
        "report.json": dtree.report_to_json(report),
    }
    _emit(Path(args.out), files)
    p = report.pooled
    print(
        f"classify[{source}:{k}]: pooled P={p.precision:.4f} R={p.recall:.4f} "
        f"F1={p.f1:.4f} -> {args.out}"
    )
    return EXIT_OK


# -- pipeline -------------------------------------------------------------------

def _cmd_pipeline(args: argparse.Namespace) -> int:
    cfg_path = _require(args.config, "pipeline config")
    cfg = json.loads(cfg_path.read_text(encoding="utf-8"))
    out = Path(cfg["out"])
    if not cfg["out"]:
        raise UsageError("pipeline config needs a non-empty 'out' directory")

    spec_path = cfg.get("spec")
    cohort_path = cfg.get("cohort")
    dict_path = cfg.get("dictionary")
    if (spec_path is None) == (cohort_path is None):
        raise UsageError("pipeline config needs exactly one of 'spec' or 'cohort'")
    if cohort_path is not None and dict_path is None:
        raise UsageError("pipeline config needs 'dictionary' with 'cohort'")
    for key in ("spec", "cohort", "dictionary", "filters", "judgments",
                "expert_features"):
        if cfg.get(key) is not None:
            _require(cfg[key], f"config path {key!r}")

    window = cfg.get("window", [0, 30])
    k_values = cfg.get("k_values", list(range(1, 11)))
    cv = cfg.get("cv", {})
    seed = str(cv.get("seed", 0))
    folds = str(cv.get("folds", 10))
    confidence = str(cv.get("confidence", 0.25))
    min_leaf = str(cv.get("min_leaf", 2))

    def run(stage_argv: list[str]) -> None:
        rc = main(stage_argv)
        if rc != EXIT_OK:
            raise _StageFailure(rc, " ".join(stage_argv))

    if spec_path is not None:
        run(["gen", "--spec", spec_path, "--out", str(out / "gen")])
        cohort_path = str(out / "gen" / "cohort.jsonl")
        dict_path = str(out / "gen" / "dictionary.tsv")

    tag_argv = [
        "tag", "--cohort", cohort_path, "--dict", dict_path,
        "--min-day", str(window[0]), "--max-day", str(window[1]),
        "--out", str(out / "tag"),
    ]
    if cfg.get("filters"):
        tag_argv += ["--filters", cfg["filters"]]
    run(tag_argv)
    mentions_path = str(out / "tag" / "mentions_filtered.csv")

    rank_argv = [
        "rank", "--mentions", mentions_path, "--cohort", cohort_path,
        "--out", str(out / "rank"),
    ]
    if cfg.get("judgments"):
        rank_argv += ["--judgments", cfg["judgments"]]
    run(rank_argv)

    run(
        [
            "temporal", "--mentions", mentions_path, "--cohort", cohort_path,
            "--top", str(cfg.get("temporal_top", 10)),
            "--daily-top", str(cfg.get("daily_top", 5)),
            "--out", str(out / "temporal"),
        ]
    )

    classify_common = [
        "--cohort", cohort_path, "--mentions", mentions_path,
        "--folds", folds, "--seed", seed, "--confidence", confidence,
        "--min-leaf", min_leaf,
        "--min-day", str(window[0]), "--max-day", str(window[1]),
    ]
    if cfg.get("filters"):
        classify_common += ["--filters", cfg["filters"]]
    if cv.get("global_ranking"):
        classify_common += ["--global-ranking"]
    report_dirs: list[tuple[str, str, Path]] = []
    for k in k_values:
        stage_out = out / "classify" / f"pmi_k{k}"
        run(["classify", *classify_common, "--features", f"pmi:{k}",
             "--out", str(stage_out)])
        report_dirs.append(("pmi", str(k), stage_out))
    if cfg.get("expert_features"):
        stage_out = out / "classify" / "expert"
        run(["classify", *classify_common, "--features",
             f"expert:{cfg['expert_features']}", "--out", str(stage_out)])
        report_dirs.append(("expert", "", stage_out))

    # Summary table: one pooled row per classifier configuration.
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["feature_source", "k", "tp", "fp", "fn", "tn", "precision", "recall", "f1"]
    )
    for source, k, stage_out in report_dirs:
        with open(stage_out / "report.csv", "r", encoding="utf-8", newline="") as fh:
            for row in csv.DictReader(fh):
                if row["fold"] == "pooled":
                    writer.writerow(
                        [
                            source, k if source == "pmi" else row["k"],
                            row["tp"], row["fp"], row["fn"], row["tn"],
                            row["precision"], row["recall"], row["f1"],
                        ]
                    )
    _emit(out, {"summary.csv": buf.getvalue()})
    print(f"pipeline: complete -> {out}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------

def _build_parser() -> _Parser:
    parser = _Parser(prog="ssikit", description=__doc__)
    parser.add_argument("--version", action="version", version=f"ssikit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[], help="generate a synthetic cohort")
    p.add_argument("--spec", required=True, help="synthetic spec JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("tag", help="tag a cohort with a dictionary")
    p.add_argument("--cohort", required=True)
    p.add_argument("--dict", required=True)
    p.add_argument("--filters", default=None)
    p.add_argument("--min-day", type=int, default=0)
    p.add_argument("--max-day", type=int, default=30)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_tag)

    p = sub.add_parser("rank", help="score and rank tagged concepts")
    p.add_argument("--mentions", default=None)
    p.add_argument("--cohort", default=None)
    p.add_argument("--ranking", default=None,
                   help="use an existing ranking CSV instead of computing one")
    p.add_argument("--judgments", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_rank)

    p = sub.add_parser("temporal", help="day-level distributions and pairs")
    p.add_argument("--mentions", required=True)
    p.add_argument("--cohort", required=True)
    p.add_argument("--top", type=int, default=10,
                   help="number of top-ranked concepts to analyze")
    p.add_argument("--daily-top", type=int, default=5)
    p.add_argument("--all-pairs", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_temporal)

    p = sub.add_parser("classify", help="cross-validated decision-tree evaluation")
    p.add_argument("--cohort", required=True)
    p.add_argument("--mentions", required=True)
    p.add_argument("--features", required=True, help="pmi:<k> or expert:<file>")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--confidence", type=float, default=0.25)
    p.add_argument("--min-leaf", type=int, default=2)
    p.add_argument("--global-ranking", action="store_true",
                   help="select concept features once on the full cohort")
    p.add_argument("--filters", default=None)
    p.add_argument("--min-day", type=int, default=0)
    p.add_argument("--max-day", type=int, default=30)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("pipeline", help="run all stages from a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_pipeline)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"ssikit {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _StageFailure as exc:
        print(f"ssikit pipeline: stage failed: {exc.stage}", file=sys.stderr)
        return exc.code
    except (ValueError, KeyError, OSError) as exc:
        print(f"ssikit {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - defensive
        print(f"ssikit {args.command}: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
