"""Deterministic synthetic benchmark and curation corpora for demos and tests.

The benchmark mirrors the nine evaluation datasets (names, splits, sample
counts, label taxonomies and score ranges) with generated ground truth and
generated free-form predictions. Nothing here is real data.
"""

from __future__ import annotations

import random
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import yaml

from .curation import ClassifierVote, DescriptionRecord
from .extraction import Lexicon, Sentiment, default_lexicon
from .io import record_as_dict, write_jsonl
from .metrics import Task
from .taxonomy import GroupingPipeline, default_pipeline


@dataclass(frozen=True)
class BenchmarkSpec:
    name: str
    source: str
    task: Task
    split: str
    count: int
    taxonomy: tuple[str, ...] | None = None
    score_range: tuple[float, float] | None = None


BENCHMARK = (
    BenchmarkSpec("MER2023", "MER2023", Task.BASIC, "MER-MULTI", 411,
                  ("worry", "happy", "neutral", "angry", "surprised", "sad")),
    BenchmarkSpec("MER2024", "MER2024", Task.BASIC, "MER-SEMI", 1169,
                  ("worry", "happy", "neutral", "angry", "surprised", "sad")),
    BenchmarkSpec("MELD", "MELD", Task.BASIC, "Test", 2610,
                  ("anger", "joy", "sadness", "neutral", "disgust", "fear", "surprise")),
    BenchmarkSpec("IEMOCAP", "IEMOCAP", Task.BASIC, "Session5", 1241,
                  ("anger", "happiness", "sadness", "neutral")),
    BenchmarkSpec("MOSI", "CMU-MOSI", Task.SENTIMENT, "Test", 686, score_range=(-3.0, 3.0)),
    BenchmarkSpec("MOSEI", "CMU-MOSEI", Task.SENTIMENT, "Test", 4659, score_range=(-3.0, 3.0)),
    BenchmarkSpec("SIMS", "CH-SIMS", Task.SENTIMENT, "Test", 457, score_range=(-1.0, 1.0)),
    BenchmarkSpec("SIMS v2", "CH-SIMS v2", Task.SENTIMENT, "Test", 1034, score_range=(-1.0, 1.0)),
    BenchmarkSpec("OV-MERD+", "OV-MERD+", Task.FINE_GRAINED, "All", 532),
)

_TEMPLATES = (
    "In the video the character looks {a}. The voice sounds {b} and the subtitle suggests {c}.",
    "The speaker appears {a}, with a tone that is {b}; overall the person seems {c}.",
    "Facial cues indicate the woman is {a}. Her speech is {b}. She may also feel {c}.",
    "The man frowns slightly and seems {a}; his words sound {b}, hinting that he is {c}.",
)
_FILLER = ("steady", "quiet", "measured", "ordinary", "unremarkable")


def _slug(name: str) -> str:
    return name.lower().replace(" ", "_").replace("+", "plus")


class _Vocab:
    """Lexicon words grouped by the default wheel sector they fall into."""

    def __init__(self, lex: Lexicon, p: GroupingPipeline):
        self.by_group: dict[str, list[str]] = defaultdict(list)
        for word in sorted(lex.phrases):
            self.by_group[p.group_label(word, 1)].append(word)
        self.groups = sorted(self.by_group)
        self.valence = lex.valence
        self.p = p

    def variant(self, rng: random.Random, label: str) -> str:
        return rng.choice(self.by_group[self.p.group_label(label, 1)])

    def other(self, rng: random.Random, label: str) -> str:
        g = self.p.group_label(label, 1)
        return rng.choice(self.by_group[rng.choice([x for x in self.groups if x != g])])

    def with_valence(self, rng: random.Random, polarity: Sentiment) -> str:
        return rng.choice(sorted(w for w, v in self.valence.items() if v is polarity))


def _text(rng: random.Random, words: Sequence[str]) -> str:
    slots = list(words[:2]) + [" and ".join(words[2:])] if len(words) > 2 else list(words)
    slots += rng.sample(_FILLER, 3 - len(slots))
    rng.shuffle(slots)
    return rng.choice(_TEMPLATES).format(a=slots[0], b=slots[1], c=slots[2])


def _basic(spec: BenchmarkSpec, rng: random.Random, vocab: _Vocab, quality: float):
    truth, preds = [], []
    for i in range(spec.count):
        sid = f"{_slug(spec.name)}_{i:05d}"
        label = rng.choice(spec.taxonomy)
        words = [vocab.variant(rng, label)] if rng.random() < quality else []
        words += [vocab.other(rng, label) for _ in range(rng.randint(0, 2))]
        rng.shuffle(words)
        truth.append({"sample_id": sid, "label": label})
        preds.append({"sample_id": sid, "text": _text(rng, words), "labels": sorted(set(words))})
    return truth, preds


def _sentiment(spec: BenchmarkSpec, rng: random.Random, vocab: _Vocab, quality: float):
    lo, hi = spec.score_range
    truth, preds = [], []
    for i in range(spec.count):
        sid = f"{_slug(spec.name)}_{i:05d}"
        score = round(rng.uniform(lo, hi), 1)
        truth.append({"sample_id": sid, "score": score})
        polarity = Sentiment.POSITIVE if score > 0 else Sentiment.NEGATIVE
        if rng.random() > quality:
            polarity = Sentiment.NEGATIVE if polarity is Sentiment.POSITIVE else Sentiment.POSITIVE
        words = [vocab.with_valence(rng, polarity)]
        if rng.random() < 0.3:
            words.append(vocab.with_valence(rng, Sentiment.NEUTRAL))
        preds.append({"sample_id": sid, "text": _text(rng, words), "labels": sorted(set(words))})
    return truth, preds


def _fine_grained(spec: BenchmarkSpec, rng: random.Random, vocab: _Vocab, quality: float):
    truth, preds = [], []
    for i in range(spec.count):
        sid = f"{_slug(spec.name)}_{i:05d}"
        groups = rng.sample(vocab.groups, rng.randint(1, 3))
        labels = sorted({rng.choice(vocab.by_group[g]) for g in groups})
        words = [vocab.variant(rng, x) for x in labels if rng.random() < quality]
        words += [vocab.other(rng, labels[0]) for _ in range(rng.randint(0, 1))]
        truth.append({"sample_id": sid, "labels": labels})
        preds.append({"sample_id": sid, "text": _text(rng, words), "labels": sorted(set(words))})
    return truth, preds


_GENERATORS = {Task.BASIC: _basic, Task.SENTIMENT: _sentiment, Task.FINE_GRAINED: _fine_grained}


def write_benchmark(
    out_dir: str | Path,
    seed: int = 0,
    quality: float = 0.7,
    specs: Sequence[BenchmarkSpec] = BENCHMARK,
    extraction: str = "lexicon",
) -> Path:
    """Write manifests, ground truth, predictions and a ``config.yaml``; return the config path."""
    out = Path(out_dir)
    for sub in ("manifests", "ground_truth", "predictions"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    vocab = _Vocab(default_lexicon(), default_pipeline())
    datasets = []
    for idx, spec in enumerate(specs):
        rng = random.Random(seed * 1000 + idx)
        truth, preds = _GENERATORS[spec.task](spec, rng, vocab, quality)
        slug = _slug(spec.name)
        write_jsonl(out / "ground_truth" / f"{slug}.jsonl", truth)
        write_jsonl(out / "predictions" / f"{slug}.jsonl", preds)
        manifest = {
            "name": spec.name,
            "source": spec.source,
            "task": spec.task.value,
            "split": spec.split,
            "expected_count": spec.count,
            "ground_truth": f"../ground_truth/{slug}.jsonl",
        }
        if spec.taxonomy:
            manifest["taxonomy"] = list(spec.taxonomy)
        if spec.score_range:
            manifest["score_range"] = list(spec.score_range)
        (out / "manifests" / f"{slug}.yaml").write_text(yaml.safe_dump(manifest, sort_keys=False), encoding="utf-8")
        datasets.append({"manifest": f"manifests/{slug}.yaml", "predictions": f"predictions/{slug}.jsonl"})
    config = {
        "run_name": "synthetic",
        "extraction": extraction,
        "output_dir": "report",
        "workers": 4,
        "datasets": datasets,
    }
    path = out / "config.yaml"
    path.write_text(yaml.safe_dump(config, sort_keys=False), encoding="utf-8")
    return path


# -- curation corpus -----------------------------------------------------------------------


_CROWD_LABELS = ("happy", "sad", "angry", "worried", "surprised", "neutral")
_VALENCE = {
    "happy": Sentiment.POSITIVE, "sad": Sentiment.NEGATIVE, "angry": Sentiment.NEGATIVE,
    "worried": Sentiment.NEGATIVE, "surprised": Sentiment.NEUTRAL, "neutral": Sentiment.NEUTRAL,
}


def curation_corpus(
    n: int = 500, seed: int = 0, n_classifiers: int = 5
) -> tuple[list[DescriptionRecord], list[ClassifierVote]]:
    """Synthetic descriptions with lengths, av flags, labels and classifier votes."""
    rng = random.Random(seed)
    vocab = _Vocab(default_lexicon(), default_pipeline())
    records, votes = [], []
    for i in range(n):
        sid = f"sample_{i:05d}"
        core = rng.choice(_CROWD_LABELS)
        labels = {vocab.variant(rng, core)}
        if rng.random() < 0.5:
            labels.add(vocab.other(rng, core))
        if rng.random() < 0.25:
            labels = {vocab.other(rng, core)}
        length = max(3, int(rng.gauss(80, 25)))
        words = sorted(labels) + [rng.choice(_FILLER) for _ in range(length - len(labels))]
        description = " ".join(words)
        sentiment = _VALENCE[core] if rng.random() < 0.8 else rng.choice(list(Sentiment))
        av = rng.choices([True, False, None], weights=[0.85, 0.1, 0.05])[0]
        records.append(DescriptionRecord(
            sid, description, None, av, frozenset(labels), sentiment, round(rng.uniform(1.0, 12.0), 2),
        ))
        for c in range(n_classifiers):
            emo = core if rng.random() < 0.6 else rng.choice(_CROWD_LABELS)
            sent = _VALENCE[core] if rng.random() < 0.7 else rng.choice(list(Sentiment))
            votes.append(ClassifierVote(sid, f"clf{c}", emo, sent))
    return records, votes


def write_curation_corpus(out_dir: str | Path, n: int = 500, seed: int = 0) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records, votes = curation_corpus(n, seed)
    rec_path, vote_path = out / "descriptions.jsonl", out / "votes.jsonl"
    write_jsonl(rec_path, [record_as_dict(r) for r in records])
    write_jsonl(vote_path, [
        {"sample_id": v.sample_id, "classifier_id": v.classifier_id, "emotion": v.emotion, "sentiment": v.sentiment.value}
        for v in votes
    ])
    return rec_path, vote_path
