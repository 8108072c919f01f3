"""Multi-layer fusion: joint inference over extraction correctness,
value truth, source accuracy, and extractor precision/recall.

The engine alternates four stages per iteration: (1) a correctness
posterior for every observed (source, item, value) group from extractor
presence/absence votes, (2) a value distribution per data item from
correctness-weighted source votes, (3) source-accuracy re-estimation, and
(4) extractor precision/recall re-estimation with the false-extraction
rate re-derived rather than estimated directly.  From a configurable
iteration on, the correctness prior is fed back from the previous value
distributions instead of staying at its initial constant.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

from .model import (FusionConfig, ObservationStore, Posteriors,
                    QualityParams, clamp)
from .parallel import ShardMapper


def sigmoid(x: float) -> float:
    """Numerically stable logistic function."""
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def logit(p: float) -> float:
    return math.log(p) - math.log1p(-p)


def derive_q(p_e: float, r_e: float, gamma: float, eps: float = 1e-6) -> float:
    """False-extraction rate implied by precision, recall, and the prior
    probability gamma that a candidate triple is actually provided."""
    p_e = clamp(p_e, eps)
    r_e = clamp(r_e, eps)
    q = gamma / (1.0 - gamma) * (1.0 - p_e) / p_e * r_e
    return clamp(q, eps)


@dataclass
class VoteWeights:
    """Log-odds contribution of each extractor's presence or absence."""

    pre: dict = field(default_factory=dict)  # ExtractorKey -> ln R - ln Q
    abs_: dict = field(default_factory=dict)  # ExtractorKey -> ln(1-R) - ln(1-Q)


def compute_votes(quality: QualityParams, eps: float = 1e-6) -> VoteWeights:
    votes = VoteWeights()
    for e, r in quality.R.items():
        r = clamp(r, eps)
        q = clamp(quality.Q[e], eps)
        votes.pre[e] = math.log(r) - math.log(q)
        votes.abs_[e] = math.log1p(-r) - math.log1p(-q)
    return votes


def _binarize(conf: float, threshold) -> float:
    if threshold is None:
        return conf
    return 1.0 if conf > threshold else 0.0


def _c_posterior(args):
    """One correctness posterior from (logit prior, (conf, pre, abs) votes)."""
    logit_alpha, pairs = args
    vcc = 0.0
    for conf, pre, absent in pairs:
        vcc += conf * pre + (1.0 - conf) * absent
    return sigmoid(vcc + logit_alpha)


def extraction_posterior(w, d, v, store: ObservationStore, votes: VoteWeights,
                         alpha: float, config: FusionConfig) -> float:
    """p(C_wdv = 1 | X): probability that w truly provides (d, v).

    Absence votes range over every extractor observed anywhere on
    (w.website, d.predicate); an extractor with no record on this triple
    contributes at confidence 0.  Returns the prior unchanged when no
    extractor is in scope.
    """
    scoped = store.scope(w, d)
    if not scoped:
        return alpha
    recs = store.by_wdv.get((w, d, v), {})
    pairs = []
    for e in scoped:
        rec = recs.get(e)
        conf = _binarize(rec.confidence, config.confidence_threshold) if rec else 0.0
        pairs.append((conf, votes.pre[e], votes.abs_[e]))
    return _c_posterior((logit(clamp(alpha, config.clamp_eps)), pairs))


def _v_posterior(args):
    """Value distribution for one item from per-candidate weighted votes.

    args: (per-candidate vote-count totals, n).  Normalizes over the full
    n+1-value domain; every unobserved value sits at exp(0) before
    normalization.
    """
    vcv, n = args
    k = len(vcv)
    n_unobserved = max(n + 1 - k, 0)
    peak = max(max(vcv), 0.0)
    z = sum(math.exp(x - peak) for x in vcv)
    z += n_unobserved * math.exp(-peak)
    probs = tuple(math.exp(x - peak) / z for x in vcv)
    residual = math.exp(-peak) / z if n_unobserved else 0.0
    return probs, residual


def value_posterior(providers, n: int, eps: float = 1e-6):
    """Distribution over dom(d) from correctness-weighted source votes.

    providers: mapping value -> list of (accuracy, correctness weight).
    Returns (dist, residual-per-unobserved-value).
    """
    candidates = sorted(providers)
    if not candidates:
        return {}, 1.0 / (n + 1)
    vcv = []
    for v in candidates:
        total = 0.0
        for a_w, weight in providers[v]:
            a_w = clamp(a_w, eps)
            total += weight * (math.log(n) + logit(a_w))
        vcv.append(total)
    probs, residual = _v_posterior((tuple(vcv), n))
    return dict(zip(candidates, probs)), residual


def update_alpha(p_v: float, a_w: float, eps: float = 1e-6) -> float:
    """Re-estimated prior that a source provides a triple, given the
    current truth probability of the value and the source accuracy."""
    return clamp(p_v * a_w + (1.0 - p_v) * (1.0 - a_w), eps)


def estimate_source_accuracy(c_weighted, min_c: float = 0.0):
    """Accuracy of one source: correctness-weighted mean truth probability.

    c_weighted: list of (c_posterior, value_probability) over the source's
    observed triples.  min_c restricts the average to triples whose
    correctness posterior exceeds it; the EM loop passes 0.5 so that only
    triples the current MAP decision deems actually provided enter the
    accuracy — otherwise extraction garbage (claims the source never made)
    dilutes the estimate.  Returns (accuracy, supported); unsupported
    sources keep their current estimate.
    """
    num = 0.0
    den = 0.0
    for c, p_v in c_weighted:
        if c > min_c:
            num += c * p_v
            den += c
    if den == 0.0:
        return None, False
    return num / den, True


def estimate_extractor_quality(extractions, scope_total):
    """Precision and recall of one extractor.

    extractions: list of (confidence, c_posterior) over its records.
    scope_total: sum of correctness posteriors over every observed triple
    in the extractor's scope (the denominator of recall).
    Returns (P, R, supported).
    """
    num = 0.0
    conf_total = 0.0
    for conf, c in extractions:
        num += conf * c
        conf_total += conf
    if conf_total == 0.0 or scope_total == 0.0:
        return None, None, False
    return num / conf_total, num / scope_total, True


@dataclass
class MultiLayerResult:
    posteriors: Posteriors = field(default_factory=Posteriors)
    quality: QualityParams = field(default_factory=QualityParams)
    excluded_sources: set = field(default_factory=set)
    excluded_extractors: set = field(default_factory=set)
    dropped_items: set = field(default_factory=set)
    iterations: int = 0
    iteration_log: list = field(default_factory=list)
    supported_triples: dict = field(default_factory=dict)  # SourceKey -> count


def _initial_p(config: FusionConfig) -> float:
    # precision consistent with the default Q and R under the Q formula
    ratio = config.default_Q * (1.0 - config.gamma) / (
        config.gamma * clamp(config.default_R, config.clamp_eps))
    return 1.0 / (1.0 + ratio)


def multilayer_em(store: ObservationStore, config: FusionConfig,
                  initial_quality: QualityParams | None = None
                  ) -> MultiLayerResult:
    """Run the full EM-style loop and return posteriors plus quality."""
    result = MultiLayerResult()
    if not store:
        return result

    eps = config.clamp_eps
    groups = store.groups()
    group_keys = [g for g, _ in groups]
    sources = store.sources()
    extractors = store.extractors()
    items = store.items()

    # per-group scoped vote inputs, fixed across iterations except for the
    # vote weights themselves
    scoped_confs = []
    for (w, d, v), recs in groups:
        scoped = store.scope(w, d)
        confs = tuple(
            (e, _binarize(recs[e].confidence, config.confidence_threshold)
             if e in recs else 0.0)
            for e in scoped)
        scoped_confs.append(confs)

    providers_by_item = defaultdict(lambda: defaultdict(list))
    for idx, (w, d, v) in enumerate(group_keys):
        providers_by_item[d][v].append((idx, w))
    candidates_by_item = {d: sorted(vals) for d, vals in
                          providers_by_item.items()}

    scope_pairs = defaultdict(set)  # extractor -> {(website, predicate)}
    records_by_extractor = defaultdict(list)  # e -> [(group idx, confidence)]
    group_index = {g: i for i, g in enumerate(group_keys)}
    for e in extractors:
        for rec in store.by_e[e]:
            scope_pairs[e].add((rec.w.website, rec.d.predicate))
            idx = group_index[(rec.w, rec.d, rec.v)]
            conf = _binarize(rec.confidence, config.confidence_threshold)
            records_by_extractor[e].append((idx, conf))
    groups_by_pair = defaultdict(list)  # (website, predicate) -> [group idx]
    for idx, (w, d, v) in enumerate(group_keys):
        groups_by_pair[(w.website, d.predicate)].append(idx)
    groups_by_source = defaultdict(list)
    for idx, (w, d, v) in enumerate(group_keys):
        groups_by_source[w].append(idx)

    init = initial_quality or QualityParams()
    a = {w: init.A.get(w, config.default_A) for w in sources}
    r = {e: init.R.get(e, config.default_R) for e in extractors}
    if init.Q:
        q = {e: init.Q.get(e, config.default_Q) for e in extractors}
        p = {e: init.P.get(e, _initial_p(config)) for e in extractors}
    else:
        p = {e: init.P.get(e, _initial_p(config)) for e in extractors}
        q = {e: derive_q(p[e], r[e], config.gamma, eps) for e in extractors}
    a_init = dict(a)
    pr_init = {e: (p[e], r[e]) for e in extractors}
    a_moved = {w: False for w in sources}
    e_moved = {e: False for e in extractors}

    alpha = [config.alpha0] * len(groups)
    c_post = [0.0] * len(groups)
    v_post = {}

    with ShardMapper(config.workers) as mapper:
        for t in range(1, config.t_max + 1):
            quality = QualityParams(A=a, P=p, R=r, Q=q)
            votes = compute_votes(quality, eps)

            # stage 1: extraction correctness, sharded by (w, d, v)
            c_args = []
            for idx, confs in enumerate(scoped_confs):
                la = logit(clamp(alpha[idx], eps))
                pairs = tuple((conf, votes.pre[e], votes.abs_[e])
                              for e, conf in confs)
                c_args.append((la, pairs))
            c_post = mapper.map(_c_posterior, c_args)

            # stage 2: value truth, sharded by data item
            v_args = []
            for d in items:
                vcv = []
                for v in candidates_by_item[d]:
                    total = 0.0
                    for idx, w in providers_by_item[d][v]:
                        weight = c_post[idx]
                        if config.hard_map_v:
                            weight = 1.0 if weight > 0.5 else 0.0
                        a_w = clamp(a[w], eps)
                        total += weight * (math.log(config.n_multi) + logit(a_w))
                    vcv.append(total)
                v_args.append((tuple(vcv), config.n_multi))
            v_results = mapper.map(_v_posterior, v_args)
            v_post = {}
            for d, (probs, residual) in zip(items, v_results):
                v_post[d] = (dict(zip(candidates_by_item[d], probs)), residual)

            # stage 3: source accuracy
            max_delta = 0.0
            for w in sources:
                pairs = []
                for idx in groups_by_source[w]:
                    _, d, v = group_keys[idx]
                    pairs.append((c_post[idx], v_post[d][0][v]))
                a_new, supported = estimate_source_accuracy(pairs, min_c=0.5)
                if not supported:
                    continue
                max_delta = max(max_delta, abs(a_new - a[w]))
                a[w] = a_new
                if abs(a_new - a_init[w]) > 1e-9:
                    a_moved[w] = True

            # stage 4: extractor quality, Q re-derived from P and R
            pair_totals = {pair: sum(c_post[i] for i in idxs)
                           for pair, idxs in groups_by_pair.items()}
            for e in extractors:
                extractions = [(conf, c_post[idx])
                               for idx, conf in records_by_extractor[e]]
                scope_total = sum(pair_totals[pair]
                                  for pair in scope_pairs[e])
                p_new, r_new, supported = estimate_extractor_quality(
                    extractions, scope_total)
                if not supported:
                    continue
                max_delta = max(max_delta, abs(p_new - p[e]),
                                abs(r_new - r[e]))
                p[e], r[e] = p_new, r_new
                q[e] = derive_q(p_new, r_new, config.gamma, eps)
                if (abs(p_new - pr_init[e][0]) > 1e-9
                        or abs(r_new - pr_init[e][1]) > 1e-9):
                    e_moved[e] = True

            # prior feedback for the next iteration
            if not config.freeze_alpha and t + 1 >= config.prior_update_start_iter:
                for idx, (w, d, v) in enumerate(group_keys):
                    alpha[idx] = update_alpha(v_post[d][0][v], clamp(a[w], eps),
                                              eps)

            result.iterations = t
            result.iteration_log.append((t, max_delta))
            if max_delta < config.convergence_tol:
                break

    result.excluded_sources = {
        w for w in sources
        if not a_moved[w] and abs(a_init[w] - config.default_A) <= 1e-12}
    result.excluded_extractors = {
        e for e in extractors
        if not e_moved[e] and abs(pr_init[e][1] - config.default_R) <= 1e-12}

    if result.excluded_sources:
        # triples backed only by stuck sources get no probability
        for d in items:
            kept = any(w not in result.excluded_sources
                       for v in candidates_by_item[d]
                       for _, w in providers_by_item[d][v])
            if not kept:
                result.dropped_items.add(d)
                del v_post[d]

    result.posteriors = Posteriors(
        C={group_keys[i]: c_post[i] for i in range(len(group_keys))},
        V=v_post)
    result.quality = QualityParams(
        A={w: a[w] for w in sources if w not in result.excluded_sources},
        P={e: p[e] for e in extractors if e not in result.excluded_extractors},
        R={e: r[e] for e in extractors if e not in result.excluded_extractors},
        Q={e: q[e] for e in extractors if e not in result.excluded_extractors})
    for w in sources:
        if w not in result.excluded_sources:
            result.supported_triples[w] = sum(
                1 for idx in groups_by_source[w] if c_post[idx] >= 0.5)
    return result
