"""Line-delimited record files, dataset manifests and run configuration."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Mapping, Sequence

import yaml

from .curation import ClassifierVote, DescriptionRecord
from .errors import DataError, EmptyLabel, InvariantViolation, ParseError
from .extraction import Sentiment
from .metrics import Task
from .taxonomy import normalize_label

log = logging.getLogger(__name__)


def read_jsonl(path: str | Path) -> Iterator[tuple[int, dict[str, Any]]]:
    """Yield ``(line_number, record)`` pairs; blank lines are skipped."""
    path = Path(path)
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc.strerror}") from exc
    with fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(rec, dict):
                raise ParseError(f"{path}:{lineno}: expected a JSON object")
            if not rec.get("sample_id"):
                raise ParseError(f"{path}:{lineno}: missing sample_id")
            rec["sample_id"] = str(rec["sample_id"])
            yield lineno, rec


def write_jsonl(path: str | Path, records: Sequence[Mapping[str, Any]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def labels_field(rec: Mapping[str, Any], where: str) -> frozenset[str]:
    raw = rec.get("labels")
    if isinstance(raw, str):
        raw = [raw]
    if not isinstance(raw, list):
        raise ParseError(f"{where}: 'labels' must be a list of strings")
    out = set()
    for item in raw:
        try:
            out.add(normalize_label(str(item)))
        except EmptyLabel:
            log.warning("%s: dropping empty label %r", where, item)
    return frozenset(out)


def _sentiment(value: Any, where: str) -> Sentiment:
    try:
        return Sentiment(str(value).strip().lower())
    except ValueError as exc:
        raise ParseError(f"{where}: unknown sentiment {value!r}") from exc


def description_record(rec: Mapping[str, Any], where: str) -> DescriptionRecord:
    if not isinstance(rec.get("description"), str):
        raise ParseError(f"{where}: missing 'description' text")
    av = rec.get("av_match")
    if av is not None and not isinstance(av, bool):
        raise ParseError(f"{where}: av_match must be true, false or absent")
    try:
        return DescriptionRecord(
            sample_id=rec["sample_id"],
            description=rec["description"],
            token_count=rec.get("token_count"),
            av_match=av,
            description_labels=labels_field(rec, where) if "labels" in rec else None,
            description_sentiment=_sentiment(rec["sentiment"], where) if rec.get("sentiment") else None,
            duration=float(rec["duration"]) if rec.get("duration") is not None else None,
        )
    except InvariantViolation as exc:
        raise ParseError(f"{where}: {exc}") from exc


def read_descriptions(path: str | Path) -> list[DescriptionRecord]:
    return [description_record(rec, f"{path}:{n}") for n, rec in read_jsonl(path)]


def read_votes(path: str | Path) -> list[ClassifierVote]:
    votes = []
    seen = set()
    for n, rec in read_jsonl(path):
        where = f"{path}:{n}"
        try:
            vote = ClassifierVote(
                rec["sample_id"], str(rec["classifier_id"]), normalize_label(rec["emotion"]),
                _sentiment(rec["sentiment"], where),
            )
        except (KeyError, EmptyLabel) as exc:
            raise ParseError(f"{where}: bad vote record ({exc})") from exc
        key = (vote.sample_id, vote.classifier_id)
        if key in seen:
            raise ParseError(f"{where}: second vote from {vote.classifier_id!r} on {vote.sample_id!r}")
        seen.add(key)
        votes.append(vote)
    return votes


def record_as_dict(r: DescriptionRecord) -> dict[str, Any]:
    out: dict[str, Any] = {"sample_id": r.sample_id, "description": r.description, "token_count": r.token_count}
    if r.av_match is not None:
        out["av_match"] = r.av_match
    if r.description_labels is not None:
        out["labels"] = sorted(r.description_labels)
    if r.description_sentiment is not None:
        out["sentiment"] = r.description_sentiment.value
    if r.duration is not None:
        out["duration"] = r.duration
    return out


# -- manifests ---------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    task: Task
    split: str
    expected_count: int
    ground_truth_path: Path
    taxonomy: tuple[str, ...] | None = None
    score_range: tuple[float, float] | None = None
    source: str | None = None

    def __post_init__(self) -> None:
        if self.expected_count <= 0:
            raise InvariantViolation(f"{self.name}: expected_count must be positive")
        if self.task is Task.BASIC and not self.taxonomy:
            raise InvariantViolation(f"{self.name}: basic-task manifests need a taxonomy")
        if self.task is Task.SENTIMENT:
            if self.score_range is None:
                raise InvariantViolation(f"{self.name}: sentiment manifests need a score_range")
            if not self.score_range[0] < 0 < self.score_range[1]:
                raise InvariantViolation(f"{self.name}: score_range must straddle zero")


def manifest_from_dict(doc: Mapping[str, Any], base: Path) -> DatasetManifest:
    try:
        task = Task(doc["task"])
        taxonomy = doc.get("taxonomy")
        score_range = doc.get("score_range")
        return DatasetManifest(
            name=str(doc["name"]),
            task=task,
            split=str(doc.get("split", "")),
            expected_count=int(doc["expected_count"]),
            ground_truth_path=(base / str(doc["ground_truth"])).resolve(),
            taxonomy=tuple(normalize_label(x) for x in taxonomy) if taxonomy else None,
            score_range=(float(score_range[0]), float(score_range[1])) if score_range else None,
            source=doc.get("source"),
        )
    except (KeyError, ValueError, TypeError, IndexError) as exc:
        raise ParseError(f"malformed manifest: {exc!r}") from exc


def load_manifest(path: str | Path) -> DatasetManifest:
    """Load and validate a manifest; warn when the ground-truth count disagrees."""
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(doc, Mapping):
        raise ParseError(f"{path}: expected a mapping")
    try:
        manifest = manifest_from_dict(doc, path.parent)
    except DataError as exc:
        raise type(exc)(f"{path}: {exc}") from exc
    if manifest.ground_truth_path.exists():
        observed = sum(1 for _ in read_jsonl(manifest.ground_truth_path))
        if observed != manifest.expected_count:
            log.warning(
                "%s: ground truth has %d records, manifest expects %d",
                manifest.name, observed, manifest.expected_count,
            )
    else:
        log.warning("%s: ground truth file %s not found", manifest.name, manifest.ground_truth_path)
    return manifest


# -- run configuration -----------------------------------------------------------------


@dataclass
class DatasetEntry:
    manifest: Path
    predictions: Path


@dataclass
class RunConfig:
    datasets: list[DatasetEntry] = field(default_factory=list)
    wheels: list[Path] = field(default_factory=list)
    lemma: Path | None = None
    synonyms: Path | None = None
    lexicon: Path | None = None
    extraction: str = "file"
    output_dir: Path = Path("report")
    workers: int = 1
    run_name: str = "run"
    llm: dict[str, Any] = field(default_factory=dict)
    filter: dict[str, Any] = field(default_factory=dict)

    def check_paths(self) -> None:
        paths = [p for e in self.datasets for p in (e.manifest, e.predictions)]
        paths += self.wheels + [p for p in (self.lemma, self.synonyms, self.lexicon) if p]
        for p in paths:
            if not Path(p).exists():
                raise DataError(f"missing input file: {p}")


_PATH_KEYS = ("lemma", "synonyms", "lexicon", "output_dir")


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(doc, Mapping):
        raise ParseError(f"{path}: expected a mapping")
    base = path.parent

    def resolve(p):
        return (base / str(p)).resolve()

    cfg = RunConfig()
    try:
        cfg.datasets = [DatasetEntry(resolve(d["manifest"]), resolve(d["predictions"])) for d in doc.get("datasets", [])]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"{path}: each dataset needs 'manifest' and 'predictions' ({exc!r})") from exc
    cfg.wheels = [resolve(w) for w in doc.get("wheels", [])]
    for key in _PATH_KEYS:
        if doc.get(key) is not None:
            setattr(cfg, key, resolve(doc[key]))
    for key in ("extraction", "run_name"):
        if doc.get(key) is not None:
            setattr(cfg, key, str(doc[key]))
    if doc.get("workers") is not None:
        cfg.workers = int(doc["workers"])
    cfg.llm = dict(doc.get("llm") or {})
    if cfg.llm.get("cache"):
        cfg.llm["cache"] = resolve(cfg.llm["cache"])
    cfg.filter = dict(doc.get("filter") or {})
    return cfg
