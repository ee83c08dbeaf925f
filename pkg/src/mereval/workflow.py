"""Batch workflows behind the command-line subcommands."""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import plotting
from .curation import DatasetStats, FilterReport, Mode, dataset_stats, group_votes, run_pipeline
from .errors import DataError, InvariantViolation, MalformedReply, ParseError
from .extraction import (
    Lexicon,
    LlmClient,
    LlmClientConfig,
    RawResponse,
    Sentiment,
    classify_sentiment,
    default_lexicon,
    extract_labels_lexicon,
    load_lexicon,
)
from .fusion import KERNELS, GradCheckResult, finite_diff_check
from .io import (
    DatasetManifest,
    RunConfig,
    labels_field,
    load_manifest,
    read_descriptions,
    read_jsonl,
    read_votes,
    record_as_dict,
    write_jsonl,
)
from .metrics import (
    BasicInstance,
    FineGrainedInstance,
    MetricReport,
    SentimentInstance,
    Task,
    acc_waf,
    hit_rate,
    set_metrics,
)
from .reporting import (
    BASIC_COLUMNS,
    FINE_GRAINED_COLUMNS,
    SENTIMENT_COLUMNS,
    TABLE_COLUMNS,
    column_name,
    details_csv,
    emit_report,
    summary_rows,
)
from .taxonomy import GroupingPipeline, load_pipeline, normalize_label

log = logging.getLogger(__name__)

EXTRACTION_MODES = ("file", "lexicon", "llm")


class Extractor:
    """Turns a prediction record into labels (and, for sentiment tasks, a polarity)."""

    def __init__(self, mode: str, lexicon: Lexicon, pipeline: GroupingPipeline, client: LlmClient | None = None):
        if mode not in EXTRACTION_MODES:
            raise ValueError(f"unknown extraction mode {mode!r}")
        if mode == "llm" and client is None:
            raise ValueError("llm extraction needs a client")
        self.mode, self.lexicon, self.pipeline, self.client = mode, lexicon, pipeline, client

    def labels(self, rec: Mapping[str, Any] | None, where: str) -> frozenset[str]:
        if rec is None:
            return frozenset()
        if self.mode == "file" or "text" not in rec:
            if "labels" not in rec:
                raise ParseError(f"{where}: prediction has neither 'labels' nor 'text'")
            return labels_field(rec, where)
        response = RawResponse(rec["sample_id"], str(rec["text"]))
        if self.mode == "llm":
            try:
                return self.client.extract_labels(response)
            except MalformedReply as exc:
                log.warning("%s: %s; falling back to lexicon extraction", where, exc)
        return extract_labels_lexicon(response, self.lexicon, self.pipeline)

    def sentiment(self, rec: Mapping[str, Any] | None, labels: frozenset[str], where: str) -> Sentiment:
        if rec is None:
            return Sentiment.NEUTRAL
        if rec.get("sentiment"):
            try:
                return Sentiment(str(rec["sentiment"]).lower())
            except ValueError as exc:
                raise ParseError(f"{where}: unknown sentiment {rec['sentiment']!r}") from exc
        if self.mode == "llm":
            try:
                return self.client.classify_sentiment(rec["sample_id"], labels)
            except MalformedReply as exc:
                log.warning("%s: %s; falling back to lexicon valence", where, exc)
        return classify_sentiment(labels, self.lexicon)


@dataclass
class DatasetResult:
    name: str
    manifest: DatasetManifest
    report: MetricReport
    counts: dict[str, int] = field(default_factory=dict)


def _index(path: Path) -> tuple[list[str], dict[str, tuple[int, dict]]]:
    order, recs = [], {}
    for n, rec in read_jsonl(path):
        sid = rec["sample_id"]
        if sid in recs:
            raise ParseError(f"{path}:{n}: duplicate sample_id {sid!r}")
        order.append(sid)
        recs[sid] = (n, rec)
    return order, recs


def evaluate_dataset(manifest_path: Path, predictions_path: Path, pipeline: GroupingPipeline,
                     extractor: Extractor) -> DatasetResult:
    manifest = load_manifest(manifest_path)
    if not manifest.ground_truth_path.exists():
        raise DataError(f"{manifest.name}: ground truth file {manifest.ground_truth_path} not found")
    gt_order, gt = _index(manifest.ground_truth_path)
    _, preds = _index(predictions_path)
    unmatched = sorted(set(preds) - set(gt))
    missing = [s for s in gt_order if s not in preds]
    if unmatched:
        log.warning("%s: %d prediction ids have no ground truth (e.g. %s)", manifest.name, len(unmatched), unmatched[0])
    if missing:
        log.warning("%s: %d samples have no prediction and score as empty", manifest.name, len(missing))

    def pred_for(sid):
        entry = preds.get(sid)
        if entry is None:
            return None, f"{predictions_path}:<missing {sid}>"
        return entry[1], f"{predictions_path}:{entry[0]}"

    def labels_for(sid):
        rec, where = pred_for(sid)
        return extractor.labels(rec, where)

    if extractor.client is not None and extractor.mode == "llm":
        all_labels = dict(zip(gt_order, extractor.client.map(labels_for, gt_order)))
    else:
        all_labels = {sid: labels_for(sid) for sid in gt_order}

    gt_where = lambda sid: f"{manifest.ground_truth_path}:{gt[sid][0]}"  # noqa: E731
    if manifest.task is Task.FINE_GRAINED:
        instances = []
        for sid in gt_order:
            truth = labels_field(gt[sid][1], gt_where(sid))
            if not truth:
                raise ParseError(f"{gt_where(sid)}: fine-grained ground truth needs at least one label")
            instances.append(FineGrainedInstance(sid, truth, all_labels[sid]))
        report = set_metrics(instances, pipeline)
    elif manifest.task is Task.BASIC:
        instances = []
        for sid in gt_order:
            rec = gt[sid][1]
            raw = rec.get("label", rec.get("labels"))
            if isinstance(raw, list) and len(raw) == 1:
                raw = raw[0]
            if not isinstance(raw, str):
                raise ParseError(f"{gt_where(sid)}: basic ground truth needs a single 'label'")
            label = normalize_label(raw)
            if label not in manifest.taxonomy:
                raise InvariantViolation(f"{gt_where(sid)}: label {label!r} not in {manifest.name} taxonomy")
            instances.append(BasicInstance(sid, label, all_labels[sid]))
        report = hit_rate(instances, pipeline)
    else:
        instances = []
        for sid in gt_order:
            rec = gt[sid][1]
            try:
                score = float(rec["score"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"{gt_where(sid)}: sentiment ground truth needs a numeric 'score'") from exc
            pred, where = pred_for(sid)
            instances.append(SentimentInstance(sid, score, extractor.sentiment(pred, all_labels[sid], where)))
        report = acc_waf(instances, manifest.score_range)
    counts = {"unmatched_predictions": len(unmatched), "missing_predictions": len(missing)}
    return DatasetResult(manifest.name, manifest, report, counts)


def _group_of(column: str) -> str:
    if column in BASIC_COLUMNS:
        return "basic"
    if column in SENTIMENT_COLUMNS:
        return "sentiment"
    if column in FINE_GRAINED_COLUMNS:
        return "fine_grained"
    return "other"


@dataclass
class EvaluationOutput:
    results: dict[str, DatasetResult]
    summary_csv: Path
    summary_md: Path
    details_csv: Path
    figure: Path | None


def build_pipeline(cfg: RunConfig) -> GroupingPipeline:
    return load_pipeline(cfg.wheels or None, cfg.lemma, cfg.synonyms)


def build_lexicon(cfg: RunConfig) -> Lexicon:
    return load_lexicon(cfg.lexicon) if cfg.lexicon else default_lexicon()


def build_client(cfg: RunConfig) -> LlmClient:
    llm = dict(cfg.llm)
    cache = llm.pop("cache", None)
    overrides = {k: llm.get(k) for k in ("endpoint", "timeout", "max_retries", "max_concurrency")}
    overrides["model_name"] = llm.get("model")
    return LlmClient(LlmClientConfig.from_env(**overrides), cache_path=cache)


def run_evaluate(cfg: RunConfig, *, figures: bool = True) -> EvaluationOutput:
    """Score every configured dataset and write the summary/detail reports."""
    if not cfg.datasets:
        raise DataError("no datasets configured")
    cfg.check_paths()
    pipeline = build_pipeline(cfg)
    lexicon = build_lexicon(cfg)
    client = build_client(cfg) if cfg.extraction == "llm" else None
    extractor = Extractor(cfg.extraction, lexicon, pipeline, client)
    try:
        with ThreadPoolExecutor(max_workers=max(1, cfg.workers)) as pool:
            futures = [pool.submit(evaluate_dataset, e.manifest, e.predictions, pipeline, extractor) for e in cfg.datasets]
            results = [f.result() for f in futures]
    finally:
        if client is not None:
            client.close()

    by_column: dict[str, DatasetResult] = {}
    for res in results:
        col = column_name(res.name)
        if col in by_column:
            raise DataError(f"dataset {col!r} configured twice")
        by_column[col] = res
    if set(by_column) >= set(TABLE_COLUMNS):
        columns = list(TABLE_COLUMNS) + sorted(set(by_column) - set(TABLE_COLUMNS))
    else:
        columns = [c for c in TABLE_COLUMNS if c in by_column] + sorted(set(by_column) - set(TABLE_COLUMNS))
    reports = {c: r.report for c, r in by_column.items()}
    csv_text, md_text = emit_report(reports, cfg.run_name, columns)

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = EvaluationOutput(by_column, out / "summary.csv", out / "summary.md", out / "details.csv", None)
    paths.summary_csv.write_text(csv_text, encoding="utf-8", newline="")
    paths.summary_md.write_text(md_text, encoding="utf-8", newline="")
    counts = {c: r.counts for c, r in by_column.items()}
    paths.details_csv.write_text(details_csv(reports, columns, counts), encoding="utf-8", newline="")
    if figures:
        header, values = summary_rows(reports, columns)
        paths.figure = plotting.summary_bars(
            header, [float(v) for v in values], [_group_of(c) for c in columns] + ["mean"],
            out / "summary.png", title=cfg.run_name,
        )
    return paths


def run_extract(responses: Path, output: Path, mode: str, lexicon: Lexicon, pipeline: GroupingPipeline,
                client: LlmClient | None = None) -> int:
    """Write ``{sample_id, labels, sentiment}`` for each ``{sample_id, text}`` response."""
    recs = [rec for _, rec in read_jsonl(responses)]
    for rec in recs:
        if not isinstance(rec.get("text"), str):
            raise ParseError(f"{responses}: record {rec['sample_id']!r} has no 'text'")
    extractor = Extractor(mode, lexicon, pipeline, client)

    def one(rec):
        where = f"{responses}:{rec['sample_id']}"
        labels = extractor.labels(rec, where)
        return {"sample_id": rec["sample_id"], "labels": sorted(labels),
                "sentiment": extractor.sentiment({"sample_id": rec["sample_id"]}, labels, where).value}

    rows = client.map(one, recs) if (client is not None and mode == "llm") else [one(r) for r in recs]
    write_jsonl(output, rows)
    return len(rows)


def filter_report_csv(report: FilterReport, order: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["sample_id", "status", "reason"])
    kept = report.kept_set
    for sid in order:
        if sid in kept:
            writer.writerow([sid, "kept", ""])
        else:
            writer.writerow([sid, "removed", report.removed[sid].value])
    return buf.getvalue()


def run_filter(records_path: Path, out_dir: Path, pipeline: GroupingPipeline, *, votes_path: Path | None,
               mode: str | None, low_pct: float, high_pct: float, lexicon: Lexicon | None) -> FilterReport:
    records = read_descriptions(records_path)
    votes = group_votes(read_votes(votes_path)) if votes_path else None
    if mode is not None and votes is None:
        raise DataError("consistency filtering needs a votes file (or use --mode none)")
    report = run_pipeline(
        records, pipeline, votes=votes, mode=None if mode is None else Mode(mode),
        low_pct=low_pct, high_pct=high_pct, lexicon=lexicon,
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    kept = report.kept_set
    write_jsonl(out_dir / "filtered.jsonl", [record_as_dict(r) for r in records if r.sample_id in kept])
    order = [r.sample_id for r in records]
    (out_dir / "filter_report.csv").write_text(filter_report_csv(report, order), encoding="utf-8", newline="")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["key", "value"])
    for key, value in report.thresholds.items():
        writer.writerow([key, "" if value is None else value])
    writer.writerow(["input", len(records)])
    writer.writerow(["kept", len(report.kept)])
    for reason in sorted({r.value for r in report.removed.values()}):
        writer.writerow([f"removed_{reason}", sum(r.value == reason for r in report.removed.values())])
    writer.writerow(["av_unknown", report.unknown_av])
    (out_dir / "filter_summary.csv").write_text(buf.getvalue(), encoding="utf-8", newline="")
    return report


def _bins_csv(bins, first: str) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"{first}_start", f"{first}_end", "count"])
    for lo, hi, n in bins:
        writer.writerow([f"{lo:g}", f"{hi:g}", n])
    return buf.getvalue()


def run_stats(records_path: Path, out_dir: Path, token_bin_width: float, duration_bin_width: float,
              *, figures: bool = True) -> DatasetStats:
    records = read_descriptions(records_path)
    stats = dataset_stats(records, token_bin_width, duration_bin_width)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "token_hist.csv").write_text(_bins_csv(stats.token_bins, "tokens"), encoding="utf-8", newline="")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["n_labels", "count"])
    for k, n in stats.labels_per_sample.items():
        writer.writerow([k, n])
    (out_dir / "labels_per_sample.csv").write_text(buf.getvalue(), encoding="utf-8", newline="")
    if stats.duration_bins is not None:
        (out_dir / "duration_hist.csv").write_text(
            _bins_csv(stats.duration_bins, "seconds"), encoding="utf-8", newline="")
    else:
        log.info("no duration fields found; duration histogram omitted")
    if figures:
        plotting.histogram_bars(stats.token_bins, out_dir / "token_hist.png", "description length (tokens)")
        plotting.count_bars(stats.labels_per_sample, out_dir / "labels_per_sample.png", "labels per sample")
        if stats.duration_bins is not None:
            plotting.histogram_bars(stats.duration_bins, out_dir / "duration_hist.png", "duration (s)")
    return stats


def run_fuse_check(kernels: Sequence[str], seeds: Sequence[int], eps: float, dims: Mapping[str, Mapping[str, int]]
                   ) -> list[GradCheckResult]:
    results = []
    for name in kernels:
        make = KERNELS[name]
        for seed in seeds:
            results.append(finite_diff_check(make(seed=seed, **dims.get(name, {})), eps))
    return results
