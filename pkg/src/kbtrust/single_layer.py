"""Single-layer baseline: every (webpage, extractor) pair is one source.

This is the classic Accu fusion model run over the reshaped observation
matrix.  It cannot separate extraction noise from source noise, which is
exactly the failure mode the multi-layer engine fixes; we keep it both as
a baseline and as an oracle target for the degenerate multi-layer case.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

from .model import FusionConfig, ObservationStore, clamp


@dataclass(frozen=True)
class PairSource:
    """One (web source, extractor) combination acting as a fused source."""

    w: object  # SourceKey
    e: object  # ExtractorKey

    def sort_key(self):
        return (self.w.sort_key(), self.e.sort_key())

    def __str__(self):
        return f"{self.w}||{self.e}"


def accu_value_posterior(claims, accuracy, n, eps=1e-6):
    """Posterior over dom(d) under the Accu observation model.

    claims: iterable of (source, value) votes for one data item.
    accuracy: mapping source -> accuracy.
    Returns (dist, residual): probabilities for each claimed value and the
    per-value mass left on each of the (n + 1 - k) unobserved values.
    """
    claims = list(claims)
    candidates = sorted({v for _, v in claims})
    k = len(candidates)
    if k == 0:
        u = 1.0 / (n + 1)
        return {}, u
    # log-likelihood of the claim set under each candidate truth hypothesis;
    # all unobserved truth hypotheses share one log-likelihood
    log_false = {}
    for s, _ in claims:
        a = clamp(accuracy[s], eps)
        log_false[s] = math.log((1.0 - a) / n)
    ll_unobserved = sum(log_false[s] for s, _ in claims)
    ll = {}
    for v in candidates:
        total = 0.0
        for s, v_claim in claims:
            if v_claim == v:
                total += math.log(clamp(accuracy[s], eps))
            else:
                total += log_false[s]
        ll[v] = total
    return _normalize(ll, ll_unobserved, n, k)


def popaccu_value_posterior(claims, accuracy, n, eps=1e-6):
    """Accu variant where false mass follows observed value popularity.

    Observed false candidates collectively take k'/n of the false mass,
    split in proportion to their claim counts; each unobserved value keeps
    the uniform (1-A)/n share.  With a single observed false candidate this
    reduces exactly to Accu.
    """
    claims = list(claims)
    candidates = sorted({v for _, v in claims})
    k = len(candidates)
    if k == 0:
        return {}, 1.0 / (n + 1)
    counts = defaultdict(int)
    for _, v in claims:
        counts[v] += 1
    ll = {}
    hypotheses = candidates + [None]  # None = any unobserved truth
    for v_star in hypotheses:
        false_candidates = [v for v in candidates if v != v_star]
        false_total = sum(counts[v] for v in false_candidates)
        k_false = len(false_candidates)
        total = 0.0
        for s, v_claim in claims:
            a = clamp(accuracy[s], eps)
            if v_claim == v_star:
                total += math.log(a)
            else:
                share = (counts[v_claim] / false_total) * (k_false / n)
                total += math.log(clamp((1.0 - a) * share, eps * eps))
        if v_star is None:
            ll_unobserved = total
        else:
            ll[v_star] = total
    return _normalize(ll, ll_unobserved, n, k)


def _normalize(ll, ll_unobserved, n, k):
    """Normalize candidate log-likelihoods over the full n+1-value domain."""
    n_unobserved = max(n + 1 - k, 0)
    peak = max(ll.values())
    if n_unobserved:
        peak = max(peak, ll_unobserved)
    z = sum(math.exp(x - peak) for x in ll.values())
    z += n_unobserved * math.exp(ll_unobserved - peak)
    dist = {v: math.exp(x - peak) / z for v, x in ll.items()}
    residual = math.exp(ll_unobserved - peak) / z if n_unobserved else 0.0
    return dist, residual


def accu_source_accuracy(claimed, value_posteriors):
    """Mean posterior probability of the (d, v) pairs a source claims.

    Returns (accuracy, supported) where supported is False when the source
    has no claims, in which case the caller keeps the current value.
    """
    claimed = list(claimed)
    if not claimed:
        return None, False
    total = 0.0
    for d, v in claimed:
        dist, residual = value_posteriors[d]
        total += dist.get(v, residual)
    return total / len(claimed), True


@dataclass
class SingleLayerResult:
    value_posteriors: dict = field(default_factory=dict)  # d -> (dist, residual)
    accuracy: dict = field(default_factory=dict)          # PairSource -> A
    website_accuracy: dict = field(default_factory=dict)  # SourceKey site -> A
    excluded: set = field(default_factory=set)            # stuck pair sources
    dropped_items: set = field(default_factory=set)
    iterations: int = 0
    iteration_log: list = field(default_factory=list)


def single_layer_em(store: ObservationStore, config: FusionConfig,
                    popaccu: bool = False,
                    initial_accuracy: dict | None = None) -> SingleLayerResult:
    """Iterative Accu fusion over (webpage, extractor) pair sources.

    A record counts as a claim iff its confidence is positive.  Pair
    sources whose accuracy never moves off the default (no overlap with
    any other source) are excluded from fusion and from coverage.
    """
    result = SingleLayerResult()
    if not store:
        return result

    claims_by_item = defaultdict(list)   # d -> [(source, v)]
    claims_by_source = defaultdict(list)  # source -> [(d, v)]
    for rec in store.records:
        s = PairSource(rec.w, rec.e)
        claims_by_item[rec.d].append((s, rec.v))
        claims_by_source[s].append((rec.d, rec.v))
    items = sorted(claims_by_item)
    sources = sorted(claims_by_source, key=PairSource.sort_key)
    for s in sources:
        claims_by_source[s].sort()
    for d in items:
        claims_by_item[d].sort(key=lambda c: (c[0].sort_key(), c[1]))

    posterior_fn = popaccu_value_posterior if popaccu else accu_value_posterior
    n = config.n_single
    eps = config.clamp_eps
    initial_accuracy = initial_accuracy or {}
    accuracy = {s: initial_accuracy.get(s, config.default_A) for s in sources}
    init = dict(accuracy)
    moved = {s: False for s in sources}

    value_posteriors = {}
    for t in range(1, config.t_max + 1):
        for d in items:
            value_posteriors[d] = posterior_fn(claims_by_item[d], accuracy,
                                               n, eps)
        max_delta = 0.0
        for s in sources:
            a_new, supported = accu_source_accuracy(claims_by_source[s],
                                                    value_posteriors)
            if not supported:
                continue
            delta = abs(a_new - accuracy[s])
            max_delta = max(max_delta, delta)
            accuracy[s] = a_new
            if abs(a_new - init[s]) > 1e-9:
                moved[s] = True
        result.iterations = t
        result.iteration_log.append((t, max_delta))
        if max_delta < config.convergence_tol:
            break

    result.excluded = {
        s for s in sources
        if not moved[s] and abs(init[s] - config.default_A) <= 1e-12}
    if result.excluded:
        # Final E-step without the stuck sources; items left with no
        # claims lose their probability (and drop out of coverage).
        for d in items:
            kept = [(s, v) for s, v in claims_by_item[d]
                    if s not in result.excluded]
            if kept:
                value_posteriors[d] = posterior_fn(kept, accuracy, n, eps)
            else:
                del value_posteriors[d]
                result.dropped_items.add(d)
    result.value_posteriors = value_posteriors
    result.accuracy = {s: accuracy[s] for s in sources
                       if s not in result.excluded}
    result.website_accuracy = website_accuracy(store, result)
    return result


def website_accuracy(store: ObservationStore, result: SingleLayerResult):
    """Per-website accuracy implied by the single-layer posteriors.

    The single-layer model has no notion of a web source, so the accuracy
    of a website is the mean posterior of all distinct triples extracted
    from it (every extracted value is taken as provided).
    """
    triples = defaultdict(set)
    for rec in store.records:
        if rec.d in result.value_posteriors:
            triples[rec.w].add((rec.d, rec.v))
    out = {}
    for w in sorted(triples, key=lambda k: k.sort_key()):
        total = 0.0
        for d, v in sorted(triples[w]):
            dist, residual = result.value_posteriors[d]
            total += dist.get(v, residual)
        out[w] = total / len(triples[w])
    return out
