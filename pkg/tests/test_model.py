"""Core types, canonical values, config validation, and the store."""

import json
import math

import pytest
from hypothesis import given, strategies as st

from kbtrust.model import (DataItem, ExtractionRecord, ExtractorKey,
                           FusionConfig, ObservationStore, RecordError,
                           SourceKey, canonical_value, clamp, ingest_records,
                           record_from_json, record_to_json)


# ---------------------------------------------------------------------------
# canonical values

@pytest.mark.parametrize("raw, expected", [
    (42, "42"),
    (3.0, "3"),
    (3.5, "3.5"),
    ("3.50", "3.5"),
    ("007", "7"),
    (True, "true"),
    (False, "false"),
    ("2024-01-05", "2024-01-05"),
    ("2024/01/05", "2024-01-05"),
    ("05/01/2024", "2024-01-05"),
    ("January 5, 2024", "2024-01-05"),
    ("5 January 2024", "2024-01-05"),
    ("  Barack Obama  ", "Barack Obama"),
])
def test_canonical_value(raw, expected):
    assert canonical_value(raw) == expected


def test_canonical_value_rejects_empty():
    with pytest.raises(RecordError):
        canonical_value("   ")


def test_canonical_value_is_idempotent():
    for raw in ("3.50", "January 5, 2024", "plain text", "42"):
        once = canonical_value(raw)
        assert canonical_value(once) == once


# ---------------------------------------------------------------------------
# keys

def test_data_item_requires_both_fields():
    with pytest.raises(RecordError):
        DataItem(subject="", predicate="p")
    with pytest.raises(RecordError):
        DataItem(subject="s", predicate="")


def test_source_key_prefix_order():
    SourceKey(website="w", predicate="p", webpage="u")  # valid
    SourceKey(website="w", predicate="p")
    with pytest.raises(RecordError):
        SourceKey(website="w", webpage="u")
    with pytest.raises(RecordError):
        SourceKey(website="")


def test_extractor_key_prefix_order():
    ExtractorKey(extractor="e", pattern="t", predicate="p", website="w")
    ExtractorKey(extractor="e", pattern="t")
    with pytest.raises(RecordError):
        ExtractorKey(extractor="e", predicate="p")  # pattern unset
    with pytest.raises(RecordError):
        ExtractorKey(extractor="e", pattern="t", website="w")
    with pytest.raises(RecordError):
        ExtractorKey(extractor="")


def test_key_string_forms():
    assert str(SourceKey(website="w", predicate="p", webpage="u")) == "w|p|u"
    assert str(SourceKey(website="w")) == "w"
    assert str(SourceKey(website="w", predicate="p", bucket=3)) == "w|p#3"
    assert str(ExtractorKey(extractor="e", pattern="t")) == "e|t"


def test_sort_keys_order_general_before_specific():
    general = SourceKey(website="w")
    specific = SourceKey(website="w", predicate="p")
    assert general.sort_key() < specific.sort_key()


# ---------------------------------------------------------------------------
# records and clamp

def test_record_rejects_bad_confidence_and_empty_value():
    e = ExtractorKey(extractor="e")
    w = SourceKey(website="w")
    d = DataItem(subject="s", predicate="p")
    with pytest.raises(RecordError):
        ExtractionRecord(e=e, w=w, d=d, v="v", confidence=1.3)
    with pytest.raises(RecordError):
        ExtractionRecord(e=e, w=w, d=d, v="v", confidence=-0.1)
    with pytest.raises(RecordError):
        ExtractionRecord(e=e, w=w, d=d, v="")


def test_clamp_examples():
    assert clamp(0.0, 1e-6) == 1e-6
    assert clamp(1.0, 1e-6) == 1.0 - 1e-6
    assert clamp(0.8, 1e-6) == 0.8


@given(st.floats(min_value=0.0, max_value=1.0))
def test_clamp_idempotent_and_interior(p):
    eps = 1e-6
    once = clamp(p, eps)
    assert eps <= once <= 1.0 - eps
    assert clamp(once, eps) == once


# ---------------------------------------------------------------------------
# observation store

def _rec(e="e", w="w", s="s", p="p", v="v", conf=1.0):
    return ExtractionRecord(e=ExtractorKey(extractor=e),
                            w=SourceKey(website=w),
                            d=DataItem(subject=s, predicate=p),
                            v=v, confidence=conf)


def test_store_merges_duplicates_by_max_confidence():
    store = ObservationStore([_rec(conf=0.4), _rec(conf=0.9),
                              _rec(v="other", conf=0.5)])
    assert len(store) == 2
    [rec] = [r for r in store.records if r.v == "v"]
    assert rec.confidence == 0.9
    # lower-confidence re-add is a no-op
    store.add(_rec(conf=0.2))
    [rec] = [r for r in store.records if r.v == "v"]
    assert rec.confidence == 0.9


def test_store_drops_zero_confidence():
    store = ObservationStore([_rec(conf=0.0)])
    assert len(store) == 0
    assert not store


def test_store_indexes_consistent():
    recs = [_rec(), _rec(e="e2"), _rec(w="w2", v="x"), _rec(s="s2")]
    store = ObservationStore(recs)
    via_wdv = {r.key for group in store.by_wdv.values()
               for r in group.values()}
    via_d = {r.key for rs in store.by_d.values() for r in rs}
    via_e = {r.key for rs in store.by_e.values() for r in rs}
    via_w = {r.key for rs in store.by_w.values() for r in rs}
    expected = {r.key for r in recs}
    assert via_wdv == via_d == via_e == via_w == expected


def test_store_scope_is_per_website_and_predicate():
    store = ObservationStore([
        _rec(e="e1", w="w1", p="p1"),
        _rec(e="e2", w="w1", p="p1", s="s2"),
        _rec(e="e3", w="w1", p="p2"),
        _rec(e="e4", w="w2", p="p1"),
    ])
    scoped = store.scope(SourceKey(website="w1"),
                         DataItem(subject="anything", predicate="p1"))
    assert [e.extractor for e in scoped] == ["e1", "e2"]


def test_store_sorted_views():
    store = ObservationStore([_rec(v="b"), _rec(v="a"), _rec(s="a2", v="z")])
    d = DataItem(subject="s", predicate="p")
    assert store.candidates(d) == ["a", "b"]
    assert store.items() == sorted(store.items())
    assert store.candidate_triples() == sorted(store.candidate_triples())


# ---------------------------------------------------------------------------
# ingest

def _line(**kw):
    base = {"extractor": "e", "website": "w", "subject": "s",
            "predicate": "p", "object": "v"}
    base.update(kw)
    return json.dumps(base)


def test_ingest_dedups_and_defaults_confidence():
    lines = [_line(confidence=0.4), _line(confidence=0.9), _line(object="x")]
    store, errors = ingest_records(lines)
    assert errors == []
    assert len(store) == 2
    missing_conf, _ = ingest_records([_line()])
    assert missing_conf.records[0].confidence == 1.0


def test_ingest_rejects_bad_records_with_line_numbers():
    lines = [
        _line(),
        "not json",
        _line(confidence=1.3),
        json.dumps({"extractor": "e"}),
        _line(confidence=True),
        "",
        _line(object="ok"),
    ]
    store, errors = ingest_records(lines)
    assert len(store) == 2
    assert [lineno for lineno, _ in errors] == [2, 3, 4, 5]


def test_ingest_idempotent():
    lines = [_line(), _line(object="x", confidence=0.5)]
    store1, _ = ingest_records(lines)
    store2, _ = ingest_records(lines + lines)
    assert {r.key: r.confidence for r in store1.records} == \
           {r.key: r.confidence for r in store2.records}


def test_record_json_round_trip():
    rec = ExtractionRecord(
        e=ExtractorKey(extractor="e", pattern="t", predicate="p"),
        w=SourceKey(website="w", predicate="p", webpage="u"),
        d=DataItem(subject="s", predicate="p"), v="v", confidence=0.7)
    assert record_from_json(record_to_json(rec)) == rec


# ---------------------------------------------------------------------------
# config

def test_config_validation():
    with pytest.raises(ValueError):
        FusionConfig(clamp_eps=0.0)
    with pytest.raises(ValueError):
        FusionConfig(clamp_eps=0.7)
    with pytest.raises(ValueError):
        FusionConfig(m_min=10, M_max=10)
    with pytest.raises(ValueError):
        FusionConfig(t_max=0)


def test_config_with_overrides():
    cfg = FusionConfig()
    other = cfg.with_overrides(t_max=3, gamma=0.1)
    assert other.t_max == 3 and other.gamma == 0.1
    assert cfg.t_max == 5  # original untouched
    assert math.isclose(cfg.gamma, 0.25)
