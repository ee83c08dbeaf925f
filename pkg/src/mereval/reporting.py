"""Render per-dataset metric reports as CSV and markdown tables."""

from __future__ import annotations

import csv
import io
from typing import Mapping, Sequence

from .errors import MissingDataset
from .metrics import MetricReport, dataset_mean

BASIC_COLUMNS = ("MER2023", "MER2024", "MELD", "IEMOCAP")
SENTIMENT_COLUMNS = ("MOSI", "MOSEI", "SIMS", "SIMS v2")
FINE_GRAINED_COLUMNS = ("OV-MERD+",)
TABLE_COLUMNS = BASIC_COLUMNS + SENTIMENT_COLUMNS + FINE_GRAINED_COLUMNS

# long dataset names -> the short column headers used in the summary table
ALIASES = {
    "CMU-MOSI": "MOSI",
    "CMU-MOSEI": "MOSEI",
    "CH-SIMS": "SIMS",
    "CH-SIMS v2": "SIMS v2",
    "CH-SIMS-v2": "SIMS v2",
}


def column_name(dataset: str) -> str:
    return ALIASES.get(dataset, dataset)


def pct(value: float) -> str:
    """Unit-interval metric as a percentage with two decimals."""
    return f"{100.0 * value:.2f}"


def _columns(reports: Mapping[str, MetricReport], columns: Sequence[str] | None) -> list[str]:
    if columns is None:
        columns = TABLE_COLUMNS
    for name in columns:
        if name not in reports:
            raise MissingDataset(name)
    return list(columns)


def summary_rows(
    reports: Mapping[str, MetricReport], columns: Sequence[str] | None = None
) -> tuple[list[str], list[str]]:
    reports = {column_name(k): v for k, v in reports.items()}
    cols = _columns(reports, columns)
    mean = dataset_mean({c: reports[c] for c in cols})
    return cols + ["Mean"], [pct(reports[c].primary) for c in cols] + [pct(mean)]


def emit_report(
    reports: Mapping[str, MetricReport],
    run_name: str = "run",
    columns: Sequence[str] | None = None,
) -> tuple[str, str]:
    """Return ``(csv_text, markdown_text)`` for the primary-metric summary table.

    By default the columns are the nine benchmark datasets in the order basic,
    sentiment, fine-grained, followed by the dataset-wise mean.
    """
    header, values = summary_rows(reports, columns)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["run"] + header)
    writer.writerow([run_name] + values)

    md = ["| Run | " + " | ".join(header) + " |", "|---|" + "---:|" * len(header)]
    md.append(f"| {run_name} | " + " | ".join(values) + " |")
    return buf.getvalue(), "\n".join(md) + "\n"


def details_csv(reports: Mapping[str, MetricReport], order: Sequence[str], extra: Mapping[str, Mapping[str, int]] | None = None) -> str:
    """Long-format table with every metric, per-wheel value and bookkeeping count."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["dataset", "task", "metric", "wheel", "value"])
    for name in order:
        r = reports[name]
        writer.writerow([name, r.task.value, r.primary_name, "mean", f"{r.primary:.10f}"])
        for metric, value in sorted(r.secondary.items()):
            writer.writerow([name, r.task.value, metric, "mean", f"{value:.10f}"])
        for wheel, scores in r.per_wheel.items():
            for metric, value in sorted(scores.items()):
                writer.writerow([name, r.task.value, metric, wheel, f"{value:.10f}"])
        writer.writerow([name, r.task.value, "n_samples", "", r.n_samples])
        writer.writerow([name, r.task.value, "excluded", "", r.excluded])
        for key, count in sorted((extra or {}).get(name, {}).items()):
            writer.writerow([name, r.task.value, key, "", count])
    return buf.getvalue()
