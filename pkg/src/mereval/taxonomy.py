"""Emotion vocabulary normalization and the three-level grouping functions.

Grouping composes three maps applied to every label before any metric compares
sets: a base-form (lemma) map, a one-step synonym map, and an emotion-wheel map
sending outer labels to their sector's inner label. Unknown labels pass through
all three levels unchanged.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Any, Iterable, Mapping, Sequence

import yaml

from .errors import EmptyLabel, InvariantViolation, ParseError

LabelSet = frozenset  # frozenset[str] of normalized labels

_DROP = re.compile(r"['’`]")
_NON_WORD = re.compile(r"[^\w\s-]|_", re.UNICODE)
_LOOSE_HYPHEN = re.compile(r"(?<![^\W_])-|-(?![^\W_])", re.UNICODE)
_SPACES = re.compile(r"\s+")


def normalize_label(raw: str) -> str:
    """Lowercase, strip punctuation (keeping internal hyphens) and collapse spaces.

    >>> normalize_label("  Happy! ")
    'happy'
    """
    text = _DROP.sub("", raw.lower())
    text = _NON_WORD.sub(" ", text)
    text = _LOOSE_HYPHEN.sub(" ", text)
    text = _SPACES.sub(" ", text).strip()
    if not any(ch.isalpha() for ch in text):
        raise EmptyLabel(f"no label left after normalizing {raw!r}")
    return text


def label_set(raw: Iterable[str]) -> frozenset[str]:
    """Normalize an iterable of raw strings into a deduplicated label set."""
    return frozenset(normalize_label(r) for r in raw)


def _is_word_char(ch: str) -> bool:
    return ch.isalnum()


@dataclass(frozen=True, eq=False)
class LemmaMap:
    """Irregular-form table plus ordered suffix rewrite rules.

    Suffix rules are re-applied until none matches, so the map is idempotent
    on arbitrary input. Every rule must shorten the word, which bounds the loop.
    """

    irregular: Mapping[str, str] = field(default_factory=dict)
    suffix_rules: tuple[tuple[str, str], ...] = ()
    min_stem: int = 3

    def __post_init__(self) -> None:
        irregular = {normalize_label(k): normalize_label(v) for k, v in self.irregular.items()}
        rules = tuple((str(s), str(r)) for s, r in self.suffix_rules)
        for suffix, repl in rules:
            if not suffix or not suffix.isalpha() or (repl and not repl.isalpha()):
                raise InvariantViolation(f"suffix rule ({suffix!r}, {repl!r}) must be alphabetic")
            if len(repl) >= len(suffix):
                raise InvariantViolation(f"suffix rule ({suffix!r}, {repl!r}) must shorten the word")
        object.__setattr__(self, "irregular", MappingProxyType(irregular))
        object.__setattr__(self, "suffix_rules", rules)
        for surface, base in irregular.items():
            if base in irregular:
                raise InvariantViolation(f"irregular base form {base!r} is itself mapped")
            if self._rewrite(base) is not None:
                raise InvariantViolation(f"irregular base form {base!r} matches a suffix rule")

    def _rewrite(self, word: str) -> str | None:
        for suffix, repl in self.suffix_rules:
            if word.endswith(suffix):
                stem = word[: -len(suffix)]
                if len(stem) >= self.min_stem and _is_word_char(stem[-1]):
                    return stem + repl
        return None

    def __call__(self, label: str) -> str:
        word = label
        while True:
            if word in self.irregular:
                return self.irregular[word]
            rewritten = self._rewrite(word)
            if rewritten is None:
                return word
            word = rewritten


@dataclass(frozen=True, eq=False)
class SynonymMap:
    """One-step synonym table: label -> canonical label."""

    entries: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        entries = {normalize_label(k): normalize_label(v) for k, v in self.entries.items()}
        entries = {k: v for k, v in entries.items() if k != v}
        for key, target in entries.items():
            if target in entries:
                raise InvariantViolation(
                    f"synonym target {target!r} (of {key!r}) is itself mapped to {entries[target]!r}"
                )
        object.__setattr__(self, "entries", MappingProxyType(entries))

    @property
    def canonical(self) -> frozenset[str]:
        return frozenset(self.entries.values())

    def __call__(self, label: str) -> str:
        return self.entries.get(label, label)


@dataclass(frozen=True)
class Sector:
    inner: str
    outer: frozenset[str]


@dataclass(frozen=True, eq=False)
class EmotionWheel:
    name: str
    sectors: tuple[Sector, ...]

    def __post_init__(self) -> None:
        if not self.sectors:
            raise InvariantViolation(f"wheel {self.name!r} must have at least one sector")
        inner_seen: set[str] = set()
        lookup: dict[str, str] = {}
        for sector in self.sectors:
            if sector.inner in inner_seen:
                raise InvariantViolation(sector.inner)
            inner_seen.add(sector.inner)
            for label in sector.outer:
                if label in lookup:
                    raise InvariantViolation(label)
                lookup[label] = sector.inner
        for inner in inner_seen:
            if lookup.get(inner, inner) != inner:
                raise InvariantViolation(inner)
        # an inner label listed among its own outer labels is harmless
        lookup = {k: v for k, v in lookup.items() if k != v}
        object.__setattr__(self, "_lookup", MappingProxyType(lookup))

    @property
    def inner_labels(self) -> frozenset[str]:
        return frozenset(s.inner for s in self.sectors)

    @property
    def outer_labels(self) -> frozenset[str]:
        return frozenset(self._lookup)

    def __call__(self, label: str) -> str:
        return self._lookup.get(label, label)


def apply_lemma(label: str, m: LemmaMap) -> str:
    return m(label)


def apply_synonym(label: str, m: SynonymMap) -> str:
    return m(label)


def apply_wheel(label: str, w: EmotionWheel) -> str:
    return w(label)


class GroupingPipeline:
    """Composition wheel(synonym(lemma(label))) for each of K wheels.

    Wheels are indexed from 1, matching how results are reported per wheel.
    Construction checks that every wheel's inner labels and every synonym
    target survive the earlier levels unchanged, which makes grouping
    idempotent.
    """

    def __init__(self, lemma: LemmaMap, synonyms: SynonymMap, wheels: Sequence[EmotionWheel]):
        wheels = tuple(wheels)
        if not wheels:
            raise InvariantViolation("a grouping pipeline needs at least one wheel")
        names = [w.name for w in wheels]
        if len(set(names)) != len(names):
            raise InvariantViolation(f"duplicate wheel names in {names}")
        for target in synonyms.canonical:
            if lemma(target) != target:
                raise InvariantViolation(
                    f"synonym target {target!r} is not a base form (lemma gives {lemma(target)!r})"
                )
        for wheel in wheels:
            for inner in wheel.inner_labels:
                if synonyms(lemma(inner)) != inner:
                    raise InvariantViolation(
                        f"inner label {inner!r} of wheel {wheel.name!r} is rewritten by lemma/synonym maps"
                    )
        self.lemma = lemma
        self.synonyms = synonyms
        self.wheels = wheels
        self._cache: list[dict[str, str]] = [{} for _ in wheels]

    @property
    def K(self) -> int:
        return len(self.wheels)

    @property
    def wheel_names(self) -> list[str]:
        return [w.name for w in self.wheels]

    def _check_k(self, k: int) -> None:
        if not 1 <= k <= len(self.wheels):
            raise IndexError(f"wheel index {k} outside 1..{len(self.wheels)}")

    def group_label(self, label: str, k: int) -> str:
        self._check_k(k)
        cache = self._cache[k - 1]
        out = cache.get(label)
        if out is None:
            out = self.wheels[k - 1](self.synonyms(self.lemma(label)))
            cache[label] = out
        return out

    def group(self, labels: Iterable[str], k: int) -> frozenset[str]:
        self._check_k(k)
        return frozenset(self.group_label(label, k) for label in labels)

    @classmethod
    def identity(cls, name: str = "identity") -> "GroupingPipeline":
        """Pipeline that leaves every label untouched."""
        return cls(LemmaMap(), SynonymMap(), [EmotionWheel(name, (Sector("neutral", frozenset()),))])


def group(labels: Iterable[str], p: GroupingPipeline, k: int) -> frozenset[str]:
    return p.group(labels, k)


# -- loading ---------------------------------------------------------------


def _read_yaml(source: str | Path | Mapping[str, Any]) -> Mapping[str, Any]:
    if isinstance(source, Mapping):
        return source
    path = Path(source)
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(doc, Mapping):
        raise ParseError(f"{path}: expected a mapping at top level")
    return doc


def wheel_from_dict(doc: Mapping[str, Any]) -> EmotionWheel:
    try:
        name = str(doc["name"])
        raw_sectors = doc.get("sectors") or []
        sectors = []
        for raw in raw_sectors:
            outer_raw = raw.get("outer") or []
            if isinstance(outer_raw, str):
                raise ParseError(f"sector {raw.get('inner')!r}: 'outer' must be a list")
            outer = [normalize_label(x) for x in outer_raw]
            dup = {x for x in outer if outer.count(x) > 1}
            if dup:
                raise InvariantViolation(sorted(dup)[0])
            sectors.append(Sector(normalize_label(raw["inner"]), frozenset(outer)))
    except (KeyError, TypeError, AttributeError) as exc:
        raise ParseError(f"malformed wheel document: {exc!r}") from exc
    return EmotionWheel(name, tuple(sectors))


def load_wheel(source: str | Path | Mapping[str, Any]) -> EmotionWheel:
    """Load and validate a wheel from a YAML file (or an already parsed mapping)."""
    return wheel_from_dict(_read_yaml(source))


def load_lemma(source: str | Path | Mapping[str, Any]) -> LemmaMap:
    doc = _read_yaml(source)
    try:
        rules = tuple((str(s), "" if r is None else str(r)) for s, r in doc.get("suffix_rules") or [])
        return LemmaMap(dict(doc.get("irregular") or {}), rules, int(doc.get("min_stem", 3)))
    except (TypeError, ValueError) as exc:
        raise ParseError(f"malformed lemma document: {exc!r}") from exc


def load_synonyms(source: str | Path | Mapping[str, Any]) -> SynonymMap:
    """Load a synonym file whose ``synonyms`` section maps canonical -> [variants]."""
    doc = _read_yaml(source)
    entries: dict[str, str] = {}
    try:
        for canonical, variants in (doc.get("synonyms") or {}).items():
            target = normalize_label(canonical)
            for v in variants or []:
                key = normalize_label(v)
                if key in entries and entries[key] != target:
                    raise InvariantViolation(key)
                entries[key] = target
    except (TypeError, AttributeError) as exc:
        raise ParseError(f"malformed synonym document: {exc!r}") from exc
    return SynonymMap(entries)


def _data_path(name: str) -> Path:
    return Path(str(resources.files("mereval") / "data" / name))


DEFAULT_WHEEL = "wheel_plutchik.yaml"
DEFAULT_LEMMA = "lemma.yaml"
DEFAULT_SYNONYMS = "synonyms.yaml"
DEFAULT_LEXICON = "lexicon.tsv"


def load_pipeline(
    wheel_paths: Sequence[str | Path] | None = None,
    lemma_path: str | Path | None = None,
    synonyms_path: str | Path | None = None,
) -> GroupingPipeline:
    """Build a pipeline from files, falling back to the bundled defaults."""
    wheels = [load_wheel(p) for p in (wheel_paths or [_data_path(DEFAULT_WHEEL)])]
    lemma = load_lemma(lemma_path or _data_path(DEFAULT_LEMMA))
    synonyms = load_synonyms(synonyms_path or _data_path(DEFAULT_SYNONYMS))
    return GroupingPipeline(lemma, synonyms, wheels)


def default_pipeline() -> GroupingPipeline:
    return load_pipeline()
