"""Command-line entry point.

Exit status: 0 on success, 1 for usage errors, 2 for data errors (missing or
malformed inputs, failed verification).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import MerEvalError
from .extraction import LlmClient, LlmClientConfig, default_lexicon, load_lexicon
from .fusion import KERNELS, AttentionFusionParams, attention_fuse, load_matrix
from .io import DatasetEntry, RunConfig, load_run_config
from .taxonomy import load_pipeline

log = logging.getLogger("mereval")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_grouping(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("grouping tables (default: bundled)")
    g.add_argument("--wheel", action="append", type=Path, default=None, help="wheel YAML; repeat for several wheels")
    g.add_argument("--lemma", type=Path, help="lemma YAML")
    g.add_argument("--synonyms", type=Path, help="synonym YAML")
    g.add_argument("--lexicon", type=Path, help="label<TAB>valence lexicon")


def _add_llm(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("LLM client (llm mode; credentials via MEREVAL_LLM_API_KEY)")
    g.add_argument("--llm-endpoint", help="chat-completion URL (or MEREVAL_LLM_ENDPOINT)")
    g.add_argument("--llm-model", help="model name (or MEREVAL_LLM_MODEL)")
    g.add_argument("--llm-timeout", type=float)
    g.add_argument("--llm-retries", type=int)
    g.add_argument("--llm-concurrency", type=int)
    g.add_argument("--llm-cache", type=Path, help="JSON-lines reply cache")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mereval", description="Open-vocabulary emotion recognition evaluation toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ev = sub.add_parser("evaluate", help="score predictions against dataset manifests")
    ev.add_argument("--config", type=Path, help="run config YAML")
    ev.add_argument("--dataset", nargs=2, action="append", metavar=("MANIFEST", "PREDICTIONS"), type=Path)
    ev.add_argument("--output-dir", type=Path)
    ev.add_argument("--workers", type=int)
    ev.add_argument("--extraction", choices=["file", "lexicon", "llm"])
    ev.add_argument("--run-name")
    ev.add_argument("--no-figures", action="store_true")
    _add_grouping(ev)
    _add_llm(ev)

    ex = sub.add_parser("extract", help="extract labels and sentiment from free-form responses")
    ex.add_argument("responses", type=Path, help="JSON lines with sample_id and text")
    ex.add_argument("-o", "--output", type=Path, required=True)
    ex.add_argument("--mode", choices=["lexicon", "llm"], default="lexicon")
    _add_grouping(ex)
    _add_llm(ex)

    fl = sub.add_parser("filter", help="length / av-match / consistency filtering of descriptions")
    fl.add_argument("records", type=Path)
    fl.add_argument("--votes", type=Path, help="classifier votes (JSON lines)")
    fl.add_argument("-o", "--output-dir", type=Path, required=True)
    fl.add_argument("--config", type=Path, help="run config YAML; its 'filter' section supplies defaults")
    fl.add_argument("--low-pct", type=float)
    fl.add_argument("--high-pct", type=float)
    fl.add_argument("--mode", choices=["emotion", "sentiment", "both", "none"])
    fl.add_argument("--extract-missing", action="store_true",
                    help="fill missing description labels/sentiment with the lexicon extractor")
    _add_grouping(fl)

    st = sub.add_parser("stats", help="length, labels-per-sample and duration histograms")
    st.add_argument("records", type=Path)
    st.add_argument("-o", "--output-dir", type=Path, required=True)
    st.add_argument("--token-bin", type=float, default=10.0)
    st.add_argument("--duration-bin", type=float, default=1.0)
    st.add_argument("--no-figures", action="store_true")

    fc = sub.add_parser("fuse-check", help="finite-difference gradient checks of the fusion kernels")
    fc.add_argument("--kernel", action="append", choices=sorted(KERNELS))
    fc.add_argument("--seeds", type=int, default=20)
    fc.add_argument("--seed-start", type=int, default=0)
    fc.add_argument("--eps", type=float, default=1e-5)
    fc.add_argument("--threshold", type=float, default=1e-4)
    fc.add_argument("--d", type=int, default=3, help="attention_fuse feature dim")
    fc.add_argument("--qf-d", type=int, default=4, help="qformer_fuse feature dim")
    fc.add_argument("--queries", type=int, default=2, help="qformer_fuse query tokens K")
    fc.add_argument("--t", type=int, default=5, help="qformer_fuse sequence length")
    fc.add_argument("--heads", type=int, default=2)
    fc.add_argument("--blocks", type=int, default=1)
    fc.add_argument("--length", type=int, default=4, help="autoregressive_nll response length")
    fc.add_argument("--vocab", type=int, default=6)
    fc.add_argument("--fixture", type=Path, help="directory with za.txt, zv.txt, W.txt for attention_fuse")
    fc.add_argument("--csv", type=Path, help="also write the table as CSV")

    sy = sub.add_parser("synth", help="write the synthetic benchmark and curation corpus")
    sy.add_argument("output_dir", type=Path)
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--quality", type=float, default=0.7)
    sy.add_argument("--curation-size", type=int, default=500)
    return parser


def _pipeline(args, cfg: RunConfig | None = None):
    wheels = args.wheel or (cfg.wheels if cfg else None) or None
    lemma = args.lemma or (cfg.lemma if cfg else None)
    synonyms = args.synonyms or (cfg.synonyms if cfg else None)
    return load_pipeline(wheels, lemma, synonyms)


def _llm_client(args, cfg: RunConfig | None = None) -> LlmClient:
    llm = dict(cfg.llm) if cfg else {}
    config = LlmClientConfig.from_env(
        endpoint=args.llm_endpoint or llm.get("endpoint"),
        model_name=args.llm_model or llm.get("model"),
        timeout=args.llm_timeout or llm.get("timeout"),
        max_retries=args.llm_retries if args.llm_retries is not None else llm.get("max_retries"),
        max_concurrency=args.llm_concurrency or llm.get("max_concurrency"),
    )
    return LlmClient(config, cache_path=args.llm_cache or llm.get("cache"))


def cmd_evaluate(args) -> int:
    from .workflow import run_evaluate

    if args.config is None and not args.dataset:
        raise UsageError("evaluate needs --config or at least one --dataset MANIFEST PREDICTIONS")
    cfg = load_run_config(args.config) if args.config else RunConfig()
    if args.dataset:
        cfg.datasets = [DatasetEntry(m, p) for m, p in args.dataset]
    for flag, attr in (("output_dir", "output_dir"), ("workers", "workers"), ("extraction", "extraction"),
                       ("run_name", "run_name"), ("lemma", "lemma"), ("synonyms", "synonyms"),
                       ("lexicon", "lexicon"), ("wheel", "wheels")):
        value = getattr(args, flag)
        if value is not None:
            setattr(cfg, attr, value)
    if cfg.workers < 1:
        raise UsageError("--workers must be >= 1")
    for key, flag in (("endpoint", "llm_endpoint"), ("model", "llm_model"), ("timeout", "llm_timeout"),
                      ("max_retries", "llm_retries"), ("max_concurrency", "llm_concurrency"), ("cache", "llm_cache")):
        if getattr(args, flag) is not None:
            cfg.llm[key] = getattr(args, flag)
    out = run_evaluate(cfg, figures=not args.no_figures)
    sys.stdout.write(out.summary_md.read_text(encoding="utf-8"))
    log.info("wrote %s, %s, %s", out.summary_csv, out.summary_md, out.details_csv)
    return EXIT_OK


def cmd_extract(args) -> int:
    from .workflow import run_extract

    pipeline = _pipeline(args)
    lexicon = load_lexicon(args.lexicon) if args.lexicon else default_lexicon()
    client = _llm_client(args) if args.mode == "llm" else None
    try:
        n = run_extract(args.responses, args.output, args.mode, lexicon, pipeline, client)
    finally:
        if client is not None:
            client.close()
    print(f"extracted {n} records -> {args.output}")
    return EXIT_OK


def cmd_filter(args) -> int:
    from .workflow import run_filter

    cfg = load_run_config(args.config) if args.config else None
    defaults = cfg.filter if cfg else {}
    low = args.low_pct if args.low_pct is not None else float(defaults.get("low_pct", 5.0))
    high = args.high_pct if args.high_pct is not None else float(defaults.get("high_pct", 95.0))
    if not 0 <= low < high <= 100:
        raise UsageError(f"need 0 <= low-pct < high-pct <= 100 (got {low}, {high})")
    mode = args.mode or defaults.get("mode", "both")
    mode = None if mode in (None, "none") else mode
    lexicon = None
    if args.extract_missing:
        lex_path = args.lexicon or (cfg.lexicon if cfg else None)
        lexicon = load_lexicon(lex_path) if lex_path else default_lexicon()
    report = run_filter(args.records, args.output_dir, _pipeline(args, cfg), votes_path=args.votes, mode=mode,
                        low_pct=low, high_pct=high, lexicon=lexicon)
    print(f"kept {len(report.kept)} of {len(report.kept) + len(report.removed)} records -> {args.output_dir}")
    return EXIT_OK


def cmd_stats(args) -> int:
    from .workflow import run_stats

    if args.token_bin <= 0 or args.duration_bin <= 0:
        raise UsageError("bin widths must be positive")
    stats = run_stats(args.records, args.output_dir, args.token_bin, args.duration_bin, figures=not args.no_figures)
    print(f"{sum(b[2] for b in stats.token_bins)} records summarized -> {args.output_dir}")
    return EXIT_OK


def cmd_fuse_check(args) -> int:
    import csv

    from .workflow import run_fuse_check

    if not 1e-7 <= args.eps <= 1e-3:
        raise UsageError("--eps must lie in [1e-7, 1e-3]")
    if args.seeds < 1:
        raise UsageError("--seeds must be >= 1")
    kernels = args.kernel or sorted(KERNELS)
    dims = {
        "attention_fuse": {"d": args.d},
        "qformer_fuse": {"K": args.queries, "t": args.t, "d": args.qf_d, "heads": args.heads, "blocks": args.blocks},
        "autoregressive_nll": {"length": args.length, "vocab": args.vocab},
    }
    if args.fixture:
        za, zv, W = (load_matrix(args.fixture / f"{n}.txt") for n in ("za", "zv", "W"))
        for mode in ("exact", "softmax"):
            out = attention_fuse(za.ravel(), zv.ravel(), AttentionFusionParams(W, mode))
            print(f"fixture attention_fuse[{mode}] = {np.array2string(out, precision=10)}")
    seeds = range(args.seed_start, args.seed_start + args.seeds)
    results = run_fuse_check(kernels, seeds, args.eps, dims)
    rows = [(r.kernel, r.meta["seed"], r.max_rel_error, r.max_rel_error < args.threshold) for r in results]
    print(f"{'kernel':<20} {'seed':>5} {'max_rel_error':>14}  status")
    for kernel, seed, err, ok in rows:
        print(f"{kernel:<20} {seed:>5} {err:>14.3e}  {'PASS' if ok else 'FAIL'}")
    if args.csv:
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["kernel", "seed", "max_rel_error", "passed"])
            writer.writerows([(k, s, f"{e:.6e}", ok) for k, s, e, ok in rows])
    failed = [r for r in rows if not r[3]]
    if failed:
        print(f"{len(failed)} of {len(rows)} gradient checks exceeded {args.threshold:g}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synth import write_benchmark, write_curation_corpus

    if not 0 <= args.quality <= 1:
        raise UsageError("--quality must lie in [0, 1]")
    config = write_benchmark(args.output_dir / "benchmark", seed=args.seed, quality=args.quality)
    rec, votes = write_curation_corpus(args.output_dir / "curation", n=args.curation_size, seed=args.seed)
    print(f"benchmark config: {config}\ncuration corpus: {rec}, {votes}")
    return EXIT_OK


COMMANDS = {
    "evaluate": cmd_evaluate,
    "extract": cmd_extract,
    "filter": cmd_filter,
    "stats": cmd_stats,
    "fuse-check": cmd_fuse_check,
    "synth": cmd_synth,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # --help and usage errors; keep main() returning instead of exiting
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"mereval: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MerEvalError, OSError) as exc:
        print(f"mereval: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
