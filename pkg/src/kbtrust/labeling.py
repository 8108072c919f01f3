"""Gold-standard labeling: KB membership under a local closed world,
plus declarative per-predicate type checks.

Unknown labels never enter a metric; type-check failures count both as
false triples and as extraction mistakes.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field

from .model import DataItem, FusionConfig, ObservationStore, QualityParams
from .single_layer import PairSource

log = logging.getLogger(__name__)

TRUE, FALSE, UNKNOWN = "true", "false", "unknown"


@dataclass(frozen=True)
class GoldLabel:
    d: DataItem
    v: str
    label: str        # true / false / unknown
    provenance: str   # kb / lcwa / typecheck / manual


class KbSnapshot:
    """An immutable set of reference triples indexed by (subject, predicate)."""

    def __init__(self, triples=()):
        self.triples = set()
        self.index_sp = defaultdict(set)
        for s, p, o in triples:
            self.triples.add((s, p, o))
            self.index_sp[(s, p)].add(o)

    def __contains__(self, triple):
        return triple in self.triples


def label_lcwa(triples, kb: KbSnapshot) -> list[GoldLabel]:
    """Label triples assuming the KB is locally complete.

    A triple in the KB is true; a triple whose (s, p) the KB knows with a
    different object is false; anything else is unknown.
    """
    labels = []
    for d, v in triples:
        sp = (d.subject, d.predicate)
        if (d.subject, d.predicate, v) in kb:
            labels.append(GoldLabel(d, v, TRUE, "kb"))
        elif sp in kb.index_sp:
            labels.append(GoldLabel(d, v, FALSE, "lcwa"))
        else:
            labels.append(GoldLabel(d, v, UNKNOWN, "lcwa"))
    return labels


@dataclass
class TypeRule:
    """Declarative per-predicate sanity checks."""

    predicate: str
    forbid_reflexive: bool = False
    subject_type: str | None = None
    object_type: str | None = None
    numeric_range: tuple[float, float] | None = None
    units: str | None = None


def label_typecheck(triples, rules, entity_types=None) -> list[GoldLabel]:
    """Emit a false label for every triple violating a rule for its
    predicate; triples that pass all checks get no label.

    entity_types maps entity -> set of type tags for the type-constraint
    checks; without it those checks are skipped.
    """
    by_predicate = defaultdict(list)
    for rule in rules:
        by_predicate[rule.predicate].append(rule)
    entity_types = entity_types or {}
    labels = []
    for d, v in triples:
        for rule in by_predicate.get(d.predicate, ()):
            if _violates(rule, d, v, entity_types):
                labels.append(GoldLabel(d, v, FALSE, "typecheck"))
                break
    return labels


def _violates(rule, d, v, entity_types):
    if rule.forbid_reflexive and d.subject == v:
        return True
    if rule.subject_type is not None and d.subject in entity_types \
            and rule.subject_type not in entity_types[d.subject]:
        return True
    if rule.object_type is not None and v in entity_types \
            and rule.object_type not in entity_types[v]:
        return True
    if rule.numeric_range is not None:
        try:
            value = float(v)
        except ValueError:
            log.warning("numeric-range rule on %s skipped: %r is not numeric",
                        rule.predicate, v)
            return False
        lo, hi = rule.numeric_range
        if not lo <= value <= hi:
            return True
    return False


def merge_labels(*label_lists) -> dict:
    """(d, v) -> GoldLabel, definite labels winning over unknown."""
    merged = {}
    for labels in label_lists:
        for lab in labels:
            key = (lab.d, lab.v)
            if key not in merged or merged[key].label == UNKNOWN:
                merged[key] = lab
    return merged


def gold_initial_quality(store: ObservationStore, labels: dict,
                         config: FusionConfig, pair_sources: bool = False
                         ) -> QualityParams:
    """Initial quality from labeled extractions.

    A source's initial accuracy is the true fraction of its labeled
    extracted triples; an extractor's initial precision likewise.
    Entities without any labeled extraction keep the defaults.
    """
    src_counts = defaultdict(lambda: [0, 0])  # key -> [true, labeled]
    ext_counts = defaultdict(lambda: [0, 0])
    for rec in store.records:
        lab = labels.get((rec.d, rec.v))
        if lab is None or lab.label == UNKNOWN:
            continue
        is_true = 1 if lab.label == TRUE else 0
        skey = PairSource(rec.w, rec.e) if pair_sources else rec.w
        src_counts[skey][0] += is_true
        src_counts[skey][1] += 1
        ext_counts[rec.e][0] += is_true
        ext_counts[rec.e][1] += 1
    quality = QualityParams()
    for key, (true_n, n) in src_counts.items():
        quality.A[key] = true_n / n
    for key, (true_n, n) in ext_counts.items():
        quality.P[key] = true_n / n
        quality.R[key] = config.default_R
        quality.Q[key] = None  # re-derived below
    from .multi_layer import derive_q
    for key in quality.P:
        quality.Q[key] = derive_q(quality.P[key], quality.R[key],
                                  config.gamma, config.clamp_eps)
    return quality
