"""Set-level, hit-rate and sentiment scoring for the three benchmark tasks.

Per-sample ratios are accumulated as exact fractions and converted to float
only when a report is built. Sums are therefore independent of sample order
and of how the work was split across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .errors import EmptyEvaluation, InvariantViolation, MissingDataset, OutOfRange
from .extraction import Sentiment
from .taxonomy import GroupingPipeline


class Task(str, Enum):
    FINE_GRAINED = "fine_grained"
    BASIC = "basic"
    SENTIMENT = "sentiment"

    def __str__(self) -> str:
        return self.value


PRIMARY_METRIC = {Task.FINE_GRAINED: "F_s", Task.BASIC: "HIT", Task.SENTIMENT: "WAF"}


@dataclass(frozen=True)
class FineGrainedInstance:
    sample_id: str
    truth: frozenset[str]
    prediction: frozenset[str]

    def __post_init__(self) -> None:
        if not self.truth:
            raise InvariantViolation(f"{self.sample_id}: fine-grained truth must be non-empty")


@dataclass(frozen=True)
class BasicInstance:
    sample_id: str
    truth: str
    prediction: frozenset[str]


@dataclass(frozen=True)
class SentimentInstance:
    sample_id: str
    score: float
    predicted: Sentiment


@dataclass
class MetricReport:
    task: Task
    primary: float
    secondary: dict[str, float] = field(default_factory=dict)
    per_wheel: dict[str, dict[str, float]] = field(default_factory=dict)
    n_samples: int = 0
    excluded: int = 0
    exact: dict[str, Fraction] = field(default_factory=dict, repr=False)

    @property
    def primary_name(self) -> str:
        return PRIMARY_METRIC[self.task]


def _harmonic(p: Fraction, r: Fraction) -> Fraction:
    return Fraction(0) if p + r == 0 else 2 * p * r / (p + r)


def set_metrics(
    instances: Sequence[FineGrainedInstance],
    p: GroupingPipeline,
    *,
    skip_empty_predictions: bool = False,
) -> MetricReport:
    """Grouped set precision/recall/F averaged over samples, then over wheels.

    A sample whose grouped prediction is empty scores precision 0 and recall 0.
    With ``skip_empty_predictions`` such samples are left out of the precision
    average instead (recall still counts them as 0).
    """
    if not instances:
        raise EmptyEvaluation("set_metrics needs at least one instance")
    n = len(instances)
    per_wheel: dict[str, dict[str, float]] = {}
    totals = {"F_s": Fraction(0), "Precision_s": Fraction(0), "Recall_s": Fraction(0)}
    for k, wheel in enumerate(p.wheels, 1):
        prec_sum = Fraction(0)
        rec_sum = Fraction(0)
        n_prec = 0
        for inst in instances:
            truth = p.group(inst.truth, k)
            pred = p.group(inst.prediction, k)
            if not pred:
                if not skip_empty_predictions:
                    n_prec += 1
                continue
            hit = len(truth & pred)
            prec_sum += Fraction(hit, len(pred))
            rec_sum += Fraction(hit, len(truth))
            n_prec += 1
        precision = prec_sum / n_prec if n_prec else Fraction(0)
        recall = rec_sum / n
        fscore = _harmonic(precision, recall)
        per_wheel[wheel.name] = {"F_s": float(fscore), "Precision_s": float(precision), "Recall_s": float(recall)}
        totals["F_s"] += fscore
        totals["Precision_s"] += precision
        totals["Recall_s"] += recall
    exact = {name: value / p.K for name, value in totals.items()}
    return MetricReport(
        task=Task.FINE_GRAINED,
        primary=float(exact["F_s"]),
        secondary={"Precision_s": float(exact["Precision_s"]), "Recall_s": float(exact["Recall_s"])},
        per_wheel=per_wheel,
        n_samples=n,
        exact=exact,
    )


def hits(instances: Iterable[BasicInstance], p: GroupingPipeline, k: int) -> list[int]:
    """Per-sample 0/1 indicator that the grouped truth is in the grouped prediction."""
    return [int(p.group_label(inst.truth, k) in p.group(inst.prediction, k)) for inst in instances]


def hit_rate(instances: Sequence[BasicInstance], p: GroupingPipeline) -> MetricReport:
    if not instances:
        raise EmptyEvaluation("hit_rate needs at least one instance")
    n = len(instances)
    per_wheel = {}
    total = Fraction(0)
    for k, wheel in enumerate(p.wheels, 1):
        value = Fraction(sum(hits(instances, p, k)), n)
        per_wheel[wheel.name] = {"HIT": float(value)}
        total += value
    exact = {"HIT": total / p.K}
    return MetricReport(Task.BASIC, float(exact["HIT"]), {}, per_wheel, n, exact=exact)


def sentiment_binarize(score: float, score_range: tuple[float, float] | None = None) -> Sentiment | None:
    """Sign rule: negative below zero, positive above, ``None`` (excluded) at exactly zero."""
    if math.isnan(score):
        raise OutOfRange(f"score {score!r} is not a number")
    if score_range is not None and not score_range[0] <= score <= score_range[1]:
        raise OutOfRange(f"score {score} outside {list(score_range)}")
    if score < 0:
        return Sentiment.NEGATIVE
    if score > 0:
        return Sentiment.POSITIVE
    return None


_BINARY = (Sentiment.POSITIVE, Sentiment.NEGATIVE)


def acc_waf(
    instances: Sequence[SentimentInstance], score_range: tuple[float, float] | None = None
) -> MetricReport:
    """Binary accuracy and support-weighted F1 over {positive, negative}.

    Neutral predictions never match a binarized truth, so they count as errors.
    """
    truth: list[Sentiment] = []
    pred: list[Sentiment] = []
    excluded = 0
    for inst in instances:
        label = sentiment_binarize(inst.score, score_range)
        if label is None:
            excluded += 1
            continue
        truth.append(label)
        pred.append(Sentiment(inst.predicted))
    total = len(truth)
    if total == 0:
        raise EmptyEvaluation("no sentiment instance left after excluding zero scores")
    correct = sum(t == q for t, q in zip(truth, pred))
    waf = Fraction(0)
    per_class = {}
    for c in _BINARY:
        tp = sum(t == c and q == c for t, q in zip(truth, pred))
        support = sum(t == c for t in truth)
        predicted = sum(q == c for q in pred)
        precision = Fraction(tp, predicted) if predicted else Fraction(0)
        recall = Fraction(tp, support) if support else Fraction(0)
        f1 = _harmonic(precision, recall)
        per_class[f"F1_{c.value}"] = float(f1)
        waf += Fraction(support, total) * f1
    acc = Fraction(correct, total)
    exact = {"WAF": waf, "ACC": acc}
    return MetricReport(
        Task.SENTIMENT,
        float(waf),
        {"ACC": float(acc), **per_class},
        {},
        n_samples=total,
        excluded=excluded,
        exact=exact,
    )


def dataset_mean(reports: Mapping[str, MetricReport], expected: Iterable[str] | None = None) -> float:
    """Unweighted mean of the primary metric over datasets (unit interval)."""
    if expected is not None:
        for name in expected:
            if name not in reports:
                raise MissingDataset(name)
    if not reports:
        raise EmptyEvaluation("no dataset reports to average")
    values = [r.exact.get(r.primary_name, Fraction(r.primary)) for r in reports.values()]
    return float(sum(values, Fraction(0)) / len(values))
