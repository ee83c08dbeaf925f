"""Turn free-form model output into label sets and sentiment polarities.

Two extractors share one contract: a deterministic lexicon scanner that runs
offline, and an LLM-backed extractor that speaks the OpenAI-style
chat-completion protocol and parses the bracketed list it returns.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Callable, Iterable, Mapping, Sequence, TypeVar

import httpx

from .errors import EmptyLabel, InvariantViolation, MalformedReply, NetworkError, ParseError
from .taxonomy import GroupingPipeline, normalize_label

log = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


class Sentiment(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    NEUTRAL = "neutral"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class RawResponse:
    sample_id: str
    text: str

    def __post_init__(self) -> None:
        if not self.sample_id:
            raise InvariantViolation("sample_id must be non-empty")


@dataclass(frozen=True, eq=False)
class Lexicon:
    phrases: frozenset[str]
    valence: Mapping[str, Sentiment] = field(default_factory=dict)

    def __post_init__(self) -> None:
        phrases = frozenset(normalize_label(p) for p in self.phrases)
        valence = {normalize_label(k): Sentiment(v) for k, v in self.valence.items()}
        missing = set(valence) - phrases
        if missing:
            raise InvariantViolation(f"valence keys not in phrases: {sorted(missing)}")
        object.__setattr__(self, "phrases", phrases)
        object.__setattr__(self, "valence", MappingProxyType(valence))
        object.__setattr__(self, "max_words", max((p.count(" ") + 1 for p in phrases), default=0))


def load_lexicon(path: str | Path) -> Lexicon:
    """Read a ``label<TAB>valence`` file; the valence column may be omitted."""
    phrases: set[str] = set()
    valence: dict[str, Sentiment] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            try:
                label = normalize_label(parts[0])
                phrases.add(label)
                if len(parts) > 1 and parts[1].strip():
                    valence[label] = Sentiment(parts[1].strip().lower())
            except (EmptyLabel, ValueError) as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from exc
    return Lexicon(frozenset(phrases), valence)


def default_lexicon() -> Lexicon:
    from .taxonomy import DEFAULT_LEXICON, _data_path

    return load_lexicon(_data_path(DEFAULT_LEXICON))


def _tokens(text: str) -> list[str]:
    try:
        return normalize_label(text).split(" ")
    except EmptyLabel:
        return []


def extract_labels_lexicon(
    r: RawResponse, lex: Lexicon, p: GroupingPipeline | None = None
) -> frozenset[str]:
    """Longest whole-word match of lexicon phrases in the response text.

    When a pipeline is given, a candidate also matches if its base form (per
    the pipeline's lemma map) is a lexicon phrase; the surface form is kept.
    """
    tokens = _tokens(r.text)
    found: set[str] = set()
    i = 0
    while i < len(tokens):
        for n in range(min(lex.max_words, len(tokens) - i), 0, -1):
            cand = " ".join(tokens[i : i + n])
            if cand in lex.phrases or (p is not None and p.lemma(cand) in lex.phrases):
                found.add(cand)
                i += n
                break
        else:
            i += 1
    return frozenset(found)


def classify_sentiment(labels: Iterable[str], lex: Lexicon) -> Sentiment:
    """Majority valence of the labels; unknown labels vote neutral, ties give neutral."""
    votes = Counter(lex.valence.get(label, Sentiment.NEUTRAL) for label in set(labels))
    if not votes:
        return Sentiment.NEUTRAL
    (top, n), *rest = votes.most_common()
    if rest and rest[0][1] == n:
        return Sentiment.NEUTRAL
    return top


# -- prompts and reply parsing ----------------------------------------------

EXTRACTION_INSTRUCTION = (
    "Please assume the role of an expert in the field of emotions. We provide clues that may "
    "be related to the emotions of the characters. Based on the provided clues, please identify "
    "the emotional states of the main character. Please separate different emotional categories "
    "with commas and output only the clearly identifiable emotional categories in a list format. "
    "If none are identified, please output an empty list."
)
SENTIMENT_INSTRUCTION = (
    "Please act as an expert in the field of emotions. We provide a few words to describe the "
    "emotions of a character. Please choose the most likely sentiment from the given candidates: "
    "[positive, negative, neutral]."
)
MERGE_INSTRUCTION = (
    "Please act as an expert in the field of emotions. We provide acoustic and visual clues that "
    "may be related to the character's emotional state, along with the original subtitle of the "
    "video. Please analyze which parts can infer the emotional state and explain the reasons. "
    "During the analysis, please integrate the textual, audio, and visual clues."
)

EXTRACTION_TEMPLATE = EXTRACTION_INSTRUCTION + "\n\nClues:\n"


def build_extraction_prompt(r: RawResponse) -> str:
    return EXTRACTION_TEMPLATE + r.text


def build_sentiment_prompt(labels: Iterable[str]) -> str:
    return SENTIMENT_INSTRUCTION + "\n\nWords: " + render_label_list(labels)


def build_merge_prompt(audio_clue: str, visual_clue: str, subtitle: str) -> str:
    return (
        MERGE_INSTRUCTION
        + f"\n\nAcoustic clues: {audio_clue}\nVisual clues: {visual_clue}\nSubtitle: {subtitle}"
    )


_LIST = re.compile(r"\[([^\[\]]*)\]")
_ITEM_SEP = re.compile(r"[,，、;]")
_QUOTES = "'\"“”‘’`"


def parse_label_list(text: str) -> frozenset[str]:
    """Parse the first bracketed list in ``text``; surrounding prose is ignored."""
    m = _LIST.search(text)
    if m is None:
        raise MalformedReply(f"no bracketed list in reply: {text[:80]!r}")
    labels = set()
    for item in _ITEM_SEP.split(m.group(1)):
        item = item.strip().strip(_QUOTES).strip()
        if not item:
            continue
        try:
            labels.add(normalize_label(item))
        except EmptyLabel:
            continue
    return frozenset(labels)


def render_label_list(labels: Iterable[str]) -> str:
    return "[" + ", ".join(sorted(set(labels))) + "]"


_POLARITY = re.compile(r"\b(positive|negative|neutral)\b", re.IGNORECASE)


def parse_sentiment_reply(text: str) -> Sentiment:
    m = _POLARITY.search(text)
    if m is None:
        raise MalformedReply(f"no sentiment candidate in reply: {text[:80]!r}")
    return Sentiment(m.group(1).lower())


# -- LLM client ---------------------------------------------------------------


@dataclass(frozen=True)
class LlmClientConfig:
    endpoint: str
    model_name: str
    timeout: float = 60.0
    max_retries: int = 3
    max_concurrency: int = 4
    backoff: float = 0.5

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise InvariantViolation("timeout must be positive")
        if self.max_retries < 0:
            raise InvariantViolation("max_retries must be >= 0")
        if self.max_concurrency < 1:
            raise InvariantViolation("max_concurrency must be >= 1")

    @classmethod
    def from_env(cls, **overrides) -> "LlmClientConfig":
        env = os.environ
        values = {
            "endpoint": env.get("MEREVAL_LLM_ENDPOINT", ""),
            "model_name": env.get("MEREVAL_LLM_MODEL", ""),
        }
        if "MEREVAL_LLM_TIMEOUT" in env:
            values["timeout"] = float(env["MEREVAL_LLM_TIMEOUT"])
        values.update({k: v for k, v in overrides.items() if v is not None})
        if not values["endpoint"] or not values["model_name"]:
            raise InvariantViolation(
                "LLM endpoint and model must be set (MEREVAL_LLM_ENDPOINT / MEREVAL_LLM_MODEL or flags)"
            )
        return cls(**values)


_RETRY_STATUS = {408, 429, 500, 502, 503, 504}


class LlmClient:
    """Chat-completion client with retries, a bounded in-flight window and a per-sample cache.

    Cached replies are keyed by ``(sample_id, sha256(prompt))`` and optionally
    persisted as JSON lines so reruns never re-query a finished sample.
    """

    def __init__(
        self,
        cfg: LlmClientConfig,
        *,
        api_key: str | None = None,
        cache_path: str | Path | None = None,
        transport: httpx.BaseTransport | None = None,
    ):
        self.cfg = cfg
        api_key = api_key if api_key is not None else os.environ.get("MEREVAL_LLM_API_KEY")
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._http = httpx.Client(timeout=cfg.timeout, headers=headers, transport=transport)
        self._slots = threading.BoundedSemaphore(cfg.max_concurrency)
        self._lock = threading.Lock()
        self._in_flight = 0
        self.peak_in_flight = 0
        self.requests_sent = 0
        self._cache: dict[tuple[str, str], str] = {}
        self._cache_path = Path(cache_path) if cache_path else None
        if self._cache_path and self._cache_path.exists():
            with open(self._cache_path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        rec = json.loads(line)
                        self._cache[(rec["sample_id"], rec["prompt_sha256"])] = rec["reply"]

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> "LlmClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _post(self, prompt: str) -> str:
        body = {
            "model": self.cfg.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        }
        last_error: Exception | None = None
        for attempt in range(self.cfg.max_retries + 1):
            if attempt:
                time.sleep(self.cfg.backoff * 2 ** (attempt - 1))
            try:
                with self._slots:
                    with self._lock:
                        self._in_flight += 1
                        self.peak_in_flight = max(self.peak_in_flight, self._in_flight)
                        self.requests_sent += 1
                    try:
                        resp = self._http.post(self.cfg.endpoint, json=body)
                    finally:
                        with self._lock:
                            self._in_flight -= 1
            except httpx.TransportError as exc:
                last_error = exc
                continue
            if resp.status_code in _RETRY_STATUS:
                last_error = NetworkError(f"HTTP {resp.status_code}")
                continue
            if resp.status_code >= 400:
                raise NetworkError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise MalformedReply(f"unexpected completion payload: {resp.text[:200]!r}") from exc
        raise NetworkError(f"giving up after {self.cfg.max_retries + 1} attempts: {last_error}")

    def complete(self, sample_id: str, prompt: str) -> str:
        key = (sample_id, hashlib.sha256(prompt.encode("utf-8")).hexdigest())
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        reply = self._post(prompt)
        with self._lock:
            self._cache[key] = reply
            if self._cache_path:
                with open(self._cache_path, "a", encoding="utf-8") as fh:
                    rec = {"sample_id": key[0], "prompt_sha256": key[1], "reply": reply}
                    fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
        return reply

    def extract_labels(self, r: RawResponse) -> frozenset[str]:
        return parse_label_list(self.complete(r.sample_id, build_extraction_prompt(r)))

    def classify_sentiment(self, sample_id: str, labels: Iterable[str]) -> Sentiment:
        return parse_sentiment_reply(self.complete(sample_id, build_sentiment_prompt(labels)))

    def merge_clues(self, sample_id: str, audio_clue: str, visual_clue: str, subtitle: str) -> str:
        return self.complete(sample_id, build_merge_prompt(audio_clue, visual_clue, subtitle))

    def map(self, fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
        """Apply ``fn`` over ``items`` with at most ``max_concurrency`` requests in flight."""
        with ThreadPoolExecutor(max_workers=self.cfg.max_concurrency) as pool:
            return list(pool.map(fn, items))


def extract_labels_llm(r: RawResponse, cfg: LlmClientConfig, client: LlmClient | None = None) -> frozenset[str]:
    if client is not None:
        return client.extract_labels(r)
    with LlmClient(cfg) as own:
        return own.extract_labels(r)


def merge_clues(
    sample_id: str, audio_clue: str, visual_clue: str, subtitle: str, cfg: LlmClientConfig,
    client: LlmClient | None = None,
) -> str:
    if client is not None:
        return client.merge_clues(sample_id, audio_clue, visual_clue, subtitle)
    with LlmClient(cfg) as own:
        return own.merge_clues(sample_id, audio_clue, visual_clue, subtitle)
