"""Two-level filtering of generated description datasets, plus corpus statistics.

Low-level filters drop samples whose description length sits in either tail
of the length distribution and samples flagged as audio/video mismatches.
The high-level filter compares labels extracted from each description with a
majority vote over several trained classifiers and drops disagreements.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import EmptyInput, InvariantViolation, MissingField, NoVotes
from .extraction import Lexicon, RawResponse, Sentiment, classify_sentiment, extract_labels_lexicon
from .taxonomy import GroupingPipeline, normalize_label


class Reason(str, Enum):
    LENGTH_TAIL = "length_tail"
    AV_MISMATCH = "av_mismatch"
    VOTE_TIE = "vote_tie"
    LABEL_INCONSISTENT = "label_inconsistent"

    def __str__(self) -> str:
        return self.value


class Mode(str, Enum):
    EMOTION = "emotion"
    SENTIMENT = "sentiment"
    BOTH = "both"

    def __str__(self) -> str:
        return self.value


class _Unresolved:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "UNRESOLVED"

    def __bool__(self) -> bool:
        return False


UNRESOLVED = _Unresolved()


def count_tokens(text: str) -> int:
    return len(text.split())


@dataclass(frozen=True)
class DescriptionRecord:
    sample_id: str
    description: str
    token_count: int | None = None
    av_match: bool | None = None
    description_labels: frozenset[str] | None = None
    description_sentiment: Sentiment | None = None
    duration: float | None = None

    def __post_init__(self) -> None:
        actual = count_tokens(self.description)
        if self.token_count is None:
            object.__setattr__(self, "token_count", actual)
        elif self.token_count != actual:
            raise InvariantViolation(
                f"{self.sample_id}: token_count {self.token_count} but description has {actual} tokens"
            )


@dataclass(frozen=True)
class ClassifierVote:
    sample_id: str
    classifier_id: str
    emotion: str
    sentiment: Sentiment


@dataclass
class FilterReport:
    kept: list[str]
    removed: dict[str, Reason] = field(default_factory=dict)
    thresholds: dict[str, Any] = field(default_factory=dict)
    unknown_av: int = 0

    @property
    def kept_set(self) -> frozenset[str]:
        return frozenset(self.kept)

    def removed_by(self, reason: Reason) -> frozenset[str]:
        return frozenset(s for s, r in self.removed.items() if r is reason)


def _nearest_rank(values: np.ndarray, pct: float) -> float:
    return float(np.percentile(values, pct, method="inverted_cdf"))


def length_filter(
    records: Sequence[DescriptionRecord], low_pct: float = 5.0, high_pct: float = 95.0
) -> FilterReport:
    """Drop records whose token count is strictly outside the [low, high] percentile values.

    Percentiles use the nearest-rank definition, so thresholds are always
    observed token counts and ties at a threshold are kept.
    """
    if not 0 <= low_pct < high_pct <= 100:
        raise ValueError(f"need 0 <= low_pct < high_pct <= 100, got {low_pct}, {high_pct}")
    if not records:
        raise EmptyInput("length_filter needs at least one record")
    counts = np.array([r.token_count for r in records], dtype=float)
    lo = _nearest_rank(counts, low_pct)
    hi = _nearest_rank(counts, high_pct)
    report = FilterReport(kept=[], thresholds={"low_pct": low_pct, "high_pct": high_pct, "low_tokens": lo, "high_tokens": hi})
    for r in records:
        if lo <= r.token_count <= hi:
            report.kept.append(r.sample_id)
        else:
            report.removed[r.sample_id] = Reason.LENGTH_TAIL
    return report


def av_match_filter(records: Sequence[DescriptionRecord]) -> FilterReport:
    report = FilterReport(kept=[])
    for r in records:
        if r.av_match is False:
            report.removed[r.sample_id] = Reason.AV_MISMATCH
            continue
        if r.av_match is None:
            report.unknown_av += 1
        report.kept.append(r.sample_id)
    return report


def _plurality(items: Iterable[Any]):
    ranked = Counter(items).most_common()
    if len(ranked) > 1 and ranked[0][1] == ranked[1][1]:
        return UNRESOLVED
    return ranked[0][0]


def majority_vote(votes: Sequence[ClassifierVote]):
    """Strict-plurality emotion and sentiment; a tie for first yields ``UNRESOLVED``."""
    if not votes:
        raise NoVotes("majority_vote needs at least one vote")
    seen = set()
    for v in votes:
        key = (v.sample_id, v.classifier_id)
        if key in seen:
            raise InvariantViolation(f"duplicate vote from {v.classifier_id!r} on {v.sample_id!r}")
        seen.add(key)
    emotion = _plurality(normalize_label(v.emotion) for v in votes)
    sentiment = _plurality(Sentiment(v.sentiment) for v in votes)
    return emotion, sentiment


def _emotion_check(labels: frozenset[str], crowd: str, p: GroupingPipeline) -> bool:
    return any(p.group_label(crowd, k) in p.group(labels, k) for k in range(1, p.K + 1))


def consistency_filter(
    rec: DescriptionRecord,
    crowd_emotion,
    crowd_sentiment,
    p: GroupingPipeline,
    mode: Mode | str = Mode.BOTH,
) -> tuple[bool, Reason | None]:
    """Keep a record only if its description agrees with the crowd vote.

    Emotion agreement means the grouped crowd label appears in the grouped
    description labels under at least one wheel. An unresolved crowd field
    always fails its check.
    """
    mode = Mode(mode)
    checks = []
    if mode in (Mode.EMOTION, Mode.BOTH):
        if rec.description_labels is None:
            raise MissingField(f"{rec.sample_id}: description_labels required for emotion consistency")
        if crowd_emotion is UNRESOLVED:
            checks.append(Reason.VOTE_TIE)
        elif not _emotion_check(rec.description_labels, crowd_emotion, p):
            checks.append(Reason.LABEL_INCONSISTENT)
    if mode in (Mode.SENTIMENT, Mode.BOTH):
        if rec.description_sentiment is None:
            raise MissingField(f"{rec.sample_id}: description_sentiment required for sentiment consistency")
        if crowd_sentiment is UNRESOLVED:
            checks.append(Reason.VOTE_TIE)
        elif Sentiment(crowd_sentiment) is not Sentiment(rec.description_sentiment):
            checks.append(Reason.LABEL_INCONSISTENT)
    if checks:
        return False, checks[0]
    return True, None


def fill_description_fields(
    rec: DescriptionRecord, lex: Lexicon, p: GroupingPipeline | None = None
) -> DescriptionRecord:
    """Extract missing description labels/sentiment with the lexicon extractor."""
    labels = rec.description_labels
    if labels is None:
        labels = extract_labels_lexicon(RawResponse(rec.sample_id, rec.description), lex, p)
    sentiment = rec.description_sentiment
    if sentiment is None:
        sentiment = classify_sentiment(labels, lex)
    return DescriptionRecord(
        rec.sample_id, rec.description, rec.token_count, rec.av_match, labels, sentiment, rec.duration
    )


def group_votes(votes: Iterable[ClassifierVote]) -> dict[str, list[ClassifierVote]]:
    out: dict[str, list[ClassifierVote]] = {}
    for v in votes:
        out.setdefault(v.sample_id, []).append(v)
    return out


def run_pipeline(
    records: Sequence[DescriptionRecord],
    p: GroupingPipeline,
    *,
    votes: Mapping[str, Sequence[ClassifierVote]] | None = None,
    mode: Mode | str | None = Mode.BOTH,
    low_pct: float = 5.0,
    high_pct: float = 95.0,
    lexicon: Lexicon | None = None,
) -> FilterReport:
    """Apply length -> av_match -> consistency in that order.

    ``mode=None`` disables the consistency stage. Each removed sample records
    the first stage that rejected it.
    """
    ids = [r.sample_id for r in records]
    if len(set(ids)) != len(ids):
        dup = next(s for s, n in Counter(ids).items() if n > 1)
        raise InvariantViolation(f"duplicate sample_id {dup!r}")
    length = length_filter(records, low_pct, high_pct)
    survivors = [r for r in records if r.sample_id in length.kept_set]
    av = av_match_filter(survivors)
    survivors = [r for r in survivors if r.sample_id in av.kept_set]

    removed = {**length.removed, **av.removed}
    thresholds = dict(length.thresholds, mode=None if mode is None else str(Mode(mode)))
    if mode is not None:
        votes = votes or {}
        passed = []
        for r in survivors:
            sample_votes = votes.get(r.sample_id)
            if not sample_votes:
                raise NoVotes(f"no classifier votes for {r.sample_id!r}")
            if lexicon is not None:
                r = fill_description_fields(r, lexicon, p)
            emotion, sentiment = majority_vote(sample_votes)
            keep, reason = consistency_filter(r, emotion, sentiment, p, mode)
            if keep:
                passed.append(r)
            else:
                removed[r.sample_id] = reason
        survivors = passed
    kept_ids = {r.sample_id for r in survivors}
    return FilterReport(
        kept=[s for s in ids if s in kept_ids],
        removed={s: removed[s] for s in ids if s in removed},
        thresholds=thresholds,
        unknown_av=av.unknown_av,
    )


# -- statistics ------------------------------------------------------------------


@dataclass
class DatasetStats:
    token_bins: list[tuple[float, float, int]]
    labels_per_sample: dict[int, int]
    duration_bins: list[tuple[float, float, int]] | None
    token_bin_width: float
    duration_bin_width: float | None


def histogram(values: Sequence[float], width: float) -> list[tuple[float, float, int]]:
    """Fixed-width bins [i*w, (i+1)*w) from zero up to the bin holding the maximum."""
    if width <= 0:
        raise ValueError("bin width must be positive")
    if not values:
        return []
    if min(values) < 0:
        raise ValueError("histogram values must be non-negative")
    n_bins = int(math.floor(max(values) / width)) + 1
    counts = [0] * n_bins
    for v in values:
        counts[int(math.floor(v / width))] += 1
    return [(i * width, (i + 1) * width, c) for i, c in enumerate(counts)]


def dataset_stats(
    records: Sequence[DescriptionRecord], token_bin_width: float = 10, duration_bin_width: float = 1.0
) -> DatasetStats:
    tokens = [r.token_count for r in records]
    label_sizes = Counter(len(r.description_labels) for r in records if r.description_labels is not None)
    durations = [r.duration for r in records if r.duration is not None]
    return DatasetStats(
        token_bins=histogram(tokens, token_bin_width),
        labels_per_sample=dict(sorted(label_sizes.items())),
        duration_bins=histogram(durations, duration_bin_width) if durations else None,
        token_bin_width=token_bin_width,
        duration_bin_width=duration_bin_width if durations else None,
    )
