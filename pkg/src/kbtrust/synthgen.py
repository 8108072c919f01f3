"""Seeded generator for controlled fusion experiments.

Produces an observation store together with full ground truth: the true
value of every data item, the triples each source truly provides, and the
realized source/extractor qualities.  All sources claim the same shared
set of data items, so fusion has the overlap it needs.
"""

from __future__ import annotations

import json
import random
from collections import defaultdict
from dataclasses import dataclass, field

from .model import (DataItem, ExtractionRecord, ExtractorKey,
                    ObservationStore, SourceKey)


@dataclass
class SynthConfig:
    n_sources: int = 10
    n_extractors: int = 5
    triples_per_source: int = 100
    source_accuracy: float = 0.7   # chance a provided value is the true one
    coverage: float = 0.5          # chance an extractor covers a source
    recall: float = 0.5            # chance a provided triple is extracted
    field_accuracy: float = 0.8    # per-field accuracy; precision ~ this cubed
    domain_size: int = 10          # false values per item domain
    seed: int = 0

    def __post_init__(self):
        for name in ("source_accuracy", "coverage", "recall", "field_accuracy"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")


@dataclass
class GroundTruth:
    true_values: dict = field(default_factory=dict)    # d -> value
    true_provisions: set = field(default_factory=set)  # (w, d, v)
    true_A: dict = field(default_factory=dict)         # realized per source
    true_P: dict = field(default_factory=dict)         # realized per extractor
    true_R: dict = field(default_factory=dict)
    nominal_A: float = 0.0
    nominal_P: float = 0.0
    nominal_R: float = 0.0

    def value_label(self, d, v) -> int:
        return 1 if self.true_values.get(d) == v else 0


def generate(cfg: SynthConfig):
    """Build one (store, truth) pair from the seeded stream."""
    rng = random.Random(cfg.seed)
    n = cfg.domain_size

    items = [DataItem(subject=f"subj{i:03d}", predicate="attr")
             for i in range(cfg.triples_per_source)]
    true_values = {d: f"{d.subject}:v_true" for d in items}
    false_pool = {d: [f"{d.subject}:v_f{j}" for j in range(n)] for d in items}
    # corruption targets, disjoint from every true value
    wrong_subjects = [f"xsubj{j:03d}" for j in range(n)]
    wrong_predicates = [f"xattr{j:03d}" for j in range(n)]
    wrong_objects = [f"xobj{j:03d}" for j in range(n)]

    sources = [SourceKey(website=f"w{i:02d}.example.org")
               for i in range(cfg.n_sources)]
    extractors = [ExtractorKey(extractor=f"ex{j:02d}")
                  for j in range(cfg.n_extractors)]

    truth = GroundTruth(nominal_A=cfg.source_accuracy,
                        nominal_P=cfg.field_accuracy ** 3,
                        nominal_R=cfg.recall)

    provided = {}
    for w in sources:
        triples = []
        correct = 0
        for d in items:
            if rng.random() < cfg.source_accuracy:
                v = true_values[d]
                correct += 1
            else:
                v = rng.choice(false_pool[d])
            triples.append((d, v))
            truth.true_provisions.add((w, d, v))
        provided[w] = triples
        truth.true_A[w] = correct / len(triples)
    truth.true_values = true_values

    store = ObservationStore()
    extracted = defaultdict(int)
    faithful = defaultdict(int)
    opportunities = defaultdict(int)
    for e in extractors:
        for w in sources:
            if rng.random() >= cfg.coverage:
                continue
            opportunities[e] += len(provided[w])
            for d, v in provided[w]:
                if rng.random() >= cfg.recall:
                    continue
                subject, predicate, obj = d.subject, d.predicate, v
                corrupted = False
                if rng.random() >= cfg.field_accuracy:
                    subject = rng.choice(wrong_subjects)
                    corrupted = True
                if rng.random() >= cfg.field_accuracy:
                    predicate = rng.choice(wrong_predicates)
                    corrupted = True
                if rng.random() >= cfg.field_accuracy:
                    obj = rng.choice(wrong_objects)
                    corrupted = True
                extracted[e] += 1
                if not corrupted:
                    faithful[e] += 1
                store.add(ExtractionRecord(
                    e=e, w=w, d=DataItem(subject=subject, predicate=predicate),
                    v=obj, confidence=1.0))

    for e in extractors:
        truth.true_P[e] = (faithful[e] / extracted[e]) if extracted[e] else 0.0
        truth.true_R[e] = (faithful[e] / opportunities[e]) if opportunities[e] else 0.0
    return store, truth


def truth_to_json(truth: GroundTruth) -> dict:
    return {
        "true_values": [
            {"subject": d.subject, "predicate": d.predicate, "object": v}
            for d, v in sorted(truth.true_values.items())],
        "true_provisions": [
            {"website": str(w), "subject": d.subject, "predicate": d.predicate,
             "object": v}
            for w, d, v in sorted(truth.true_provisions,
                                  key=lambda t: (t[0].sort_key(), t[1], t[2]))],
        "true_A": {str(w): a for w, a in sorted(
            truth.true_A.items(), key=lambda kv: kv[0].sort_key())},
        "true_P": {str(e): p for e, p in sorted(
            truth.true_P.items(), key=lambda kv: kv[0].sort_key())},
        "true_R": {str(e): r for e, r in sorted(
            truth.true_R.items(), key=lambda kv: kv[0].sort_key())},
        "nominal": {"A": truth.nominal_A, "P": truth.nominal_P,
                    "R": truth.nominal_R},
    }


def truth_from_json(obj: dict) -> GroundTruth:
    truth = GroundTruth(nominal_A=obj["nominal"]["A"],
                        nominal_P=obj["nominal"]["P"],
                        nominal_R=obj["nominal"]["R"])
    for row in obj["true_values"]:
        d = DataItem(subject=row["subject"], predicate=row["predicate"])
        truth.true_values[d] = row["object"]
    for row in obj["true_provisions"]:
        d = DataItem(subject=row["subject"], predicate=row["predicate"])
        truth.true_provisions.add((row["website"], d, row["object"]))
    truth.true_A = dict(obj["true_A"])
    truth.true_P = dict(obj["true_P"])
    truth.true_R = dict(obj["true_R"])
    return truth


def write_truth(path, truth: GroundTruth):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(truth_to_json(truth), fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_truth(path) -> GroundTruth:
    with open(path, encoding="utf-8") as fh:
        return truth_from_json(json.load(fh))
