"""Dynamic granularity selection for sources and extractors.

Runs before fusion: sources (or extractors) outside the desired size band
are merged up their specificity hierarchy or split into uniform buckets,
and every original triple is reattributed to its final key.  Size is the
number of distinct (item, value) triples attributed to a key.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from collections import defaultdict

from .model import ExtractorKey, ObservationStore, SourceKey


@dataclass
class GranularityNode:
    """One key in the hierarchy with the triples currently attributed to it.

    members maps each distinct (d, v) triple to the set of original
    finest-granularity keys that contributed it.
    """

    key: object
    members: dict = field(default_factory=dict)  # (d, v) -> {original key}

    @property
    def size(self) -> int:
        return len(self.members)


def get_parent(key):
    """Key with the most specific set feature dropped; None at the top."""
    if isinstance(key, SourceKey):
        if key.bucket is not None:
            return replace(key, bucket=None)
        if key.webpage is not None:
            return replace(key, webpage=None)
        if key.predicate is not None:
            return replace(key, predicate=None)
        return None
    if isinstance(key, ExtractorKey):
        if key.bucket is not None:
            return replace(key, bucket=None)
        if key.website is not None:
            return replace(key, website=None)
        if key.predicate is not None:
            return replace(key, predicate=None)
        if key.pattern is not None:
            return replace(key, pattern=None)
        return None
    raise TypeError(f"no hierarchy for {type(key).__name__}")


def _triple_hash(seed: int, key, d, v) -> int:
    h = hashlib.blake2b(digest_size=8)
    h.update(repr((seed, str(key), d.subject, d.predicate, v)).encode())
    return int.from_bytes(h.digest(), "big")


def split(node: GranularityNode, M: int, seed: int) -> list[GranularityNode]:
    """Uniformly distribute a node's triples into ceil(size / M) buckets.

    Triples are ordered by a seeded hash and dealt round-robin, so buckets
    are balanced to within one triple and the partition is reproducible
    from the seed alone.  Identity when the node already fits.
    """
    if node.size <= M:
        return [node]
    n_buckets = -(-node.size // M)
    ranked = sorted(node.members,
                    key=lambda t: (_triple_hash(seed, node.key, *t), t))
    buckets = [GranularityNode(replace(node.key, bucket=i))
               for i in range(n_buckets)]
    for i, triple in enumerate(ranked):
        buckets[i % n_buckets].members[triple] = node.members[triple]
    return buckets


def split_and_merge(nodes, m: int, M: int, seed: int = 0):
    """Resize a finest-granularity node set into the [m, M] band.

    Oversized nodes are split; undersized nodes merge into their parent
    and are re-examined, except at the top of the hierarchy where they are
    kept as-is.  Returns (final nodes, reattribution) where reattribution
    maps (original key, d, v) -> final key and is total over the input
    triples.
    """
    if m >= M:
        raise ValueError("need m < M")
    worklist = {}
    for node in nodes:
        _absorb(worklist, node.key, node.members)
    final = []
    while worklist:
        # deepest keys first so siblings pool before their parent is sized
        key = max(worklist, key=_depth_order)
        node = worklist.pop(key)
        if node.size > M:
            final.extend(split(node, M, seed))
        elif node.size < m:
            parent = get_parent(key)
            if parent is None:
                final.append(node)
            else:
                _absorb(worklist, parent, node.members)
        else:
            final.append(node)
    final.sort(key=lambda nd: nd.key.sort_key())
    reattribution = {}
    for node in final:
        for (d, v), originals in node.members.items():
            for orig in originals:
                reattribution[(orig, d, v)] = node.key
    return final, reattribution


def _absorb(worklist, key, members):
    node = worklist.get(key)
    if node is None:
        node = worklist[key] = GranularityNode(key)
    for triple, originals in members.items():
        node.members.setdefault(triple, set()).update(originals)


def _depth_order(key):
    k = key.sort_key()
    depth = sum(1 for part in k if part not in ("", -1))
    return (depth, k)


def source_nodes(store: ObservationStore) -> list[GranularityNode]:
    """Finest-granularity source nodes from a store."""
    members = defaultdict(dict)
    for rec in store.records:
        members[rec.w].setdefault((rec.d, rec.v), set()).add(rec.w)
    return [GranularityNode(w, members[w])
            for w in sorted(members, key=SourceKey.sort_key)]


def extractor_nodes(store: ObservationStore) -> list[GranularityNode]:
    members = defaultdict(dict)
    for rec in store.records:
        members[rec.e].setdefault((rec.d, rec.v), set()).add(rec.e)
    return [GranularityNode(e, members[e])
            for e in sorted(members, key=ExtractorKey.sort_key)]


def reattribute_sources(store: ObservationStore, reattribution) \
        -> ObservationStore:
    """New store with every record's source replaced by its final key."""
    out = ObservationStore()
    for rec in store.records:
        final_key = reattribution[(rec.w, rec.d, rec.v)]
        out.add(replace(rec, w=final_key))
    return out


def resize_sources(store: ObservationStore, m: int, M: int, seed: int = 0):
    """Convenience wrapper: SplitAndMerge over a store's sources."""
    final, reattribution = split_and_merge(source_nodes(store), m, M, seed)
    return reattribute_sources(store, reattribution), final, reattribution
