"""Core domain types, configuration, and the sparse observation store.

Everything downstream (the fusion engines, granularity selection, the
synthetic generator) works against the types in this module.  The store is
built once by a single writer and treated as immutable afterwards.
"""

from __future__ import annotations

import json
import math
import re
from collections import defaultdict
from dataclasses import dataclass, field, replace
from datetime import datetime


class RecordError(ValueError):
    """A raw input record that cannot become a valid ExtractionRecord."""


_NUM_RE = re.compile(r"[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")
_DATE_FORMATS = ("%Y-%m-%d", "%Y/%m/%d", "%d/%m/%Y", "%B %d, %Y", "%d %B %Y")


def canonical_value(raw) -> str:
    """Canonical string form of a value.

    Numbers are rendered without trailing zeros, dates as ISO-8601; any
    other string is kept verbatim.  Value identity must be stable across
    ingest runs, so this is the single place serialization happens.
    """
    if isinstance(raw, bool):
        return "true" if raw else "false"
    if isinstance(raw, (int, float)):
        return _canonical_number(raw)
    text = str(raw).strip()
    if not text:
        raise RecordError("empty value")
    if _NUM_RE.match(text):
        try:
            return _canonical_number(float(text))
        except (ValueError, OverflowError):
            return text
    for fmt in _DATE_FORMATS:
        try:
            return datetime.strptime(text, fmt).date().isoformat()
        except ValueError:
            continue
    return text


def _canonical_number(x) -> str:
    if isinstance(x, int):
        return str(x)
    if math.isfinite(x) and x == int(x) and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


@dataclass(frozen=True, order=True)
class DataItem:
    """A (subject, predicate) pair naming one aspect of one entity."""

    subject: str
    predicate: str

    def __post_init__(self):
        if not self.subject or not self.predicate:
            raise RecordError("data item needs non-empty subject and predicate")


@dataclass(frozen=True)
class SourceKey:
    """A web source at some level of the website/predicate/webpage hierarchy.

    Specificity is prefix-ordered: webpage may only be set when predicate
    is.  `bucket` tags sub-sources produced by granularity splitting.
    """

    website: str
    predicate: str | None = None
    webpage: str | None = None
    bucket: int | None = None

    def __post_init__(self):
        if not self.website:
            raise RecordError("source key needs a website")
        if self.webpage is not None and self.predicate is None:
            raise RecordError("source webpage set without predicate")

    def sort_key(self):
        return (self.website, self.predicate or "", self.webpage or "",
                -1 if self.bucket is None else self.bucket)

    def __str__(self):
        parts = [self.website, self.predicate or "", self.webpage or ""]
        s = "|".join(parts).rstrip("|")
        if self.bucket is not None:
            s += f"#{self.bucket}"
        return s


@dataclass(frozen=True)
class ExtractorKey:
    """An extractor at some level of the extractor/pattern/predicate/website
    hierarchy, prefix-ordered like SourceKey."""

    extractor: str
    pattern: str | None = None
    predicate: str | None = None
    website: str | None = None
    bucket: int | None = None

    def __post_init__(self):
        if not self.extractor:
            raise RecordError("extractor key needs an extractor name")
        levels = (self.pattern, self.predicate, self.website)
        seen_unset = False
        for value in levels:
            if value is None:
                seen_unset = True
            elif seen_unset:
                raise RecordError("extractor key features must be prefix-ordered")

    def sort_key(self):
        return (self.extractor, self.pattern or "", self.predicate or "",
                self.website or "", -1 if self.bucket is None else self.bucket)

    def __str__(self):
        parts = [self.extractor, self.pattern or "", self.predicate or "",
                 self.website or ""]
        s = "|".join(parts).rstrip("|")
        if self.bucket is not None:
            s += f"#{self.bucket}"
        return s


@dataclass(frozen=True)
class ExtractionRecord:
    """One observation: extractor e pulled value v for item d from source w,
    with the extractor's confidence in [0, 1]."""

    e: ExtractorKey
    w: SourceKey
    d: DataItem
    v: str
    confidence: float = 1.0

    def __post_init__(self):
        if not self.v:
            raise RecordError("empty value")
        if not 0.0 <= self.confidence <= 1.0:
            raise RecordError(f"confidence {self.confidence} outside [0, 1]")

    @property
    def key(self):
        return (self.e, self.w, self.d, self.v)


def clamp(p: float, eps: float) -> float:
    """Clamp a probability into [eps, 1-eps] before it enters any log."""
    if p < eps:
        return eps
    if p > 1.0 - eps:
        return 1.0 - eps
    return p


@dataclass
class FusionConfig:
    """All model constants, defaults, and the iteration schedule."""

    n_single: int = 100          # false-value domain size, single-layer
    n_multi: int = 10            # false-value domain size, multi-layer
    gamma: float = 0.25          # prior p(C=1) used when deriving Q from P, R
    alpha0: float = 0.5          # initial prior that a source provides a triple
    default_A: float = 0.8
    default_R: float = 0.8
    default_Q: float = 0.2
    t_max: int = 5
    # First iteration whose correctness prior comes from the previous
    # iteration's value posteriors.  Starting at 2 keeps the prior feedback
    # ahead of the quality re-estimates; on sparse corpora a later start
    # lets overestimated precision drive source accuracy below 0.5, after
    # which the prior update works in the wrong direction.
    prior_update_start_iter: int = 2
    clamp_eps: float = 1e-6
    confidence_threshold: float | None = None  # binarize confidences at phi
    m_min: int = 5
    M_max: int = 10_000
    convergence_tol: float = 1e-6
    rng_seed: int = 0
    hard_map_v: bool = False     # V-step sees MAP C instead of soft C
    freeze_alpha: bool = False   # never re-estimate the correctness prior
    workers: int = 1

    def __post_init__(self):
        if not 0.0 < self.clamp_eps < 0.5:
            raise ValueError("clamp_eps must be in (0, 0.5)")
        if self.m_min >= self.M_max:
            raise ValueError("m_min must be < M_max")
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")

    def with_overrides(self, **kwargs) -> "FusionConfig":
        return replace(self, **kwargs)


@dataclass
class QualityParams:
    """Per-source accuracy and per-extractor precision/recall/false-rate."""

    A: dict = field(default_factory=dict)  # SourceKey -> probability
    P: dict = field(default_factory=dict)  # ExtractorKey -> probability
    R: dict = field(default_factory=dict)
    Q: dict = field(default_factory=dict)


@dataclass
class Posteriors:
    """Inference outputs: extraction-correctness per (w, d, v) and a value
    distribution per data item.

    Each value distribution carries its residual: the probability mass on
    each of the (n + 1 - k) in-domain values nobody extracted.
    """

    C: dict = field(default_factory=dict)  # (w, d, v) -> probability
    V: dict = field(default_factory=dict)  # d -> (dict value -> p, residual)


class ObservationStore:
    """Sparse set of extraction records with the grouped views inference needs.

    At most one record per (e, w, d, v); duplicates merge by max confidence.
    A record with confidence 0 carries no evidence and is dropped.
    """

    def __init__(self, records=()):
        self._records: dict = {}
        self.by_wdv: dict = defaultdict(dict)   # (w,d,v) -> {e: record}
        self.by_d: dict = defaultdict(list)
        self.by_e: dict = defaultdict(list)
        self.by_w: dict = defaultdict(list)
        # (website, predicate) -> extractors ever observed on that pair
        self.extractor_scope: dict = defaultdict(set)
        for rec in records:
            self.add(rec)

    def add(self, rec: ExtractionRecord):
        if rec.confidence == 0.0:
            return
        old = self._records.get(rec.key)
        if old is not None:
            if rec.confidence <= old.confidence:
                return
            self._remove_from_indexes(old)
        self._records[rec.key] = rec
        self.by_wdv[(rec.w, rec.d, rec.v)][rec.e] = rec
        self.by_d[rec.d].append(rec)
        self.by_e[rec.e].append(rec)
        self.by_w[rec.w].append(rec)
        self.extractor_scope[(rec.w.website, rec.d.predicate)].add(rec.e)

    def _remove_from_indexes(self, rec):
        del self.by_wdv[(rec.w, rec.d, rec.v)][rec.e]
        self.by_d[rec.d].remove(rec)
        self.by_e[rec.e].remove(rec)
        self.by_w[rec.w].remove(rec)

    @property
    def records(self):
        return list(self._records.values())

    def __len__(self):
        return len(self._records)

    def __bool__(self):
        return bool(self._records)

    def groups(self):
        """(w, d, v) groups in canonical order, each with its record map."""
        keys = sorted(self.by_wdv,
                      key=lambda g: (g[0].sort_key(), g[1], g[2]))
        return [(g, self.by_wdv[g]) for g in keys]

    def items(self):
        return sorted(self.by_d)

    def sources(self):
        return sorted({w for (w, _, _) in self.by_wdv}, key=SourceKey.sort_key)

    def extractors(self):
        return sorted(self.by_e, key=ExtractorKey.sort_key)

    def candidates(self, d: DataItem):
        return sorted({rec.v for rec in self.by_d[d]})

    def scope(self, w: SourceKey, d: DataItem):
        """Extractors whose absence counts as an absence vote for (w, d, *)."""
        return sorted(self.extractor_scope.get((w.website, d.predicate), ()),
                      key=ExtractorKey.sort_key)

    def candidate_triples(self):
        """All distinct (d, v) pairs appearing in any extraction."""
        return sorted({(d, v) for (_, d, v) in self.by_wdv})


_SOURCE_FIELDS = {"website", "spredicate", "webpage"}


def record_from_json(obj: dict) -> ExtractionRecord:
    """Build an ExtractionRecord from one parsed input object.

    Missing confidence defaults to 1.  Raises RecordError on anything that
    does not form a valid record.
    """
    if not isinstance(obj, dict):
        raise RecordError("record is not an object")
    for name in ("extractor", "website", "subject", "predicate", "object"):
        if name not in obj or obj[name] in (None, ""):
            raise RecordError(f"missing field {name!r}")
    e = ExtractorKey(
        extractor=str(obj["extractor"]),
        pattern=_opt(obj, "pattern"),
        predicate=_opt(obj, "epredicate"),
        website=_opt(obj, "ewebsite"),
    )
    w = SourceKey(
        website=str(obj["website"]),
        predicate=_opt(obj, "spredicate"),
        webpage=_opt(obj, "webpage"),
    )
    d = DataItem(subject=str(obj["subject"]), predicate=str(obj["predicate"]))
    v = canonical_value(obj["object"])
    conf = obj.get("confidence", 1.0)
    if not isinstance(conf, (int, float)) or isinstance(conf, bool):
        raise RecordError(f"confidence {conf!r} is not a number")
    return ExtractionRecord(e=e, w=w, d=d, v=v, confidence=float(conf))


def _opt(obj, name):
    value = obj.get(name)
    if value in (None, ""):
        return None
    return str(value)


def record_to_json(rec: ExtractionRecord) -> dict:
    obj = {"extractor": rec.e.extractor, "website": rec.w.website,
           "subject": rec.d.subject, "predicate": rec.d.predicate,
           "object": rec.v, "confidence": rec.confidence}
    if rec.e.pattern is not None:
        obj["pattern"] = rec.e.pattern
    if rec.e.predicate is not None:
        obj["epredicate"] = rec.e.predicate
    if rec.e.website is not None:
        obj["ewebsite"] = rec.e.website
    if rec.w.predicate is not None:
        obj["spredicate"] = rec.w.predicate
    if rec.w.webpage is not None:
        obj["webpage"] = rec.w.webpage
    return obj


def ingest_records(lines) -> tuple[ObservationStore, list]:
    """Parse newline-delimited JSON records into a deduplicated store.

    Malformed records are rejected individually; ingest continues.  Returns
    the store and a list of (line_number, message) rejections.
    """
    store = ObservationStore()
    errors = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            errors.append((lineno, f"invalid JSON: {exc.msg}"))
            continue
        try:
            store.add(record_from_json(obj))
        except RecordError as exc:
            errors.append((lineno, str(exc)))
    return store, errors
