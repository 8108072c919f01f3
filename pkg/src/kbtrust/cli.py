"""Command-line surface and pipeline orchestration.

Subcommands: fuse (single | multi | multi-sm), synth, label, eval,
granularity.  A key=value config file supplies defaults that individual
flags override; KBTRUST_WORKERS is the fallback for --workers.  All
outputs are UTF-8, sorted by canonical key order, with probabilities at 6
decimal places, so runs with identical inputs and seed are byte-identical
for any worker count.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import granularity as gran
from . import labeling, metrics, report, synthgen
from .model import DataItem, FusionConfig, ingest_records
from .multi_layer import multilayer_em
from .parallel import resolve_workers
from .single_layer import single_layer_em


class CliError(Exception):
    pass


def fmt(p: float) -> str:
    return f"{p:.6f}"


# ---------------------------------------------------------------------------
# config file and argument plumbing

CONFIG_KEYS = {
    "model", "init", "iters", "n", "gamma", "alpha0", "threshold",
    "min-size", "max-size", "seed", "workers", "out-dir", "labels",
    "hard-map-v", "freeze-alpha",
}


def read_config_file(path) -> dict:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise CliError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in CONFIG_KEYS:
                raise CliError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = value.strip()
    return values


def effective(args, file_values, key, cast=str, default=None):
    flag = key.replace("-", "_")
    value = getattr(args, flag, None)
    if value is None:
        value = file_values.get(key)
    if value is None:
        return default
    return cast(value)


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    return str(text).lower() in ("1", "true", "yes", "on")


def build_fusion_config(args, file_values) -> FusionConfig:
    cfg = FusionConfig()
    iters = effective(args, file_values, "iters", int)
    if iters is not None:
        cfg.t_max = iters
    n = effective(args, file_values, "n", int)
    if n is not None:
        cfg.n_single = n
        cfg.n_multi = n
    for key, attr, cast in (("gamma", "gamma", float),
                            ("alpha0", "alpha0", float),
                            ("threshold", "confidence_threshold", float),
                            ("min-size", "m_min", int),
                            ("max-size", "M_max", int),
                            ("seed", "rng_seed", int),
                            ("hard-map-v", "hard_map_v", _bool),
                            ("freeze-alpha", "freeze_alpha", _bool)):
        value = effective(args, file_values, key, cast)
        if value is not None:
            setattr(cfg, attr, value)
    cfg.workers = resolve_workers(effective(args, file_values, "workers"))
    cfg.__post_init__()
    return cfg


# ---------------------------------------------------------------------------
# shared I/O helpers

class OutputSet:
    """Tracks written files so a failed command leaves nothing behind."""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.written = []

    def open(self, name):
        path = self.out_dir / name
        self.written.append(path)
        return open(path, "w", encoding="utf-8", newline="\n")

    def track(self, paths):
        self.written.extend(Path(p) for p in paths)

    def discard(self):
        for path in self.written:
            try:
                path.unlink()
            except FileNotFoundError:
                pass


def load_store(path):
    with open(path, encoding="utf-8") as fh:
        store, errors = ingest_records(fh)
    for lineno, message in errors:
        print(f"{path}:{lineno}: rejected record: {message}", file=sys.stderr)
    return store


def read_labels_tsv(path) -> dict:
    labels = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line or line.startswith("subject\t"):
                continue
            subject, predicate, obj, label, provenance = line.split("\t")
            d = DataItem(subject=subject, predicate=predicate)
            labels[(d, obj)] = labeling.GoldLabel(d, obj, label, provenance)
    return labels


def labels_to_binary(labels: dict) -> dict:
    out = {}
    for (d, v), lab in labels.items():
        if lab.label == labeling.TRUE:
            out[(d.subject, d.predicate, v)] = 1
        elif lab.label == labeling.FALSE:
            out[(d.subject, d.predicate, v)] = 0
    return out


# ---------------------------------------------------------------------------
# fuse

def cmd_fuse(args, file_values) -> int:
    cfg = build_fusion_config(args, file_values)
    model = effective(args, file_values, "model", str, "multi")
    init_mode = effective(args, file_values, "init", str, "default")
    out = OutputSet(effective(args, file_values, "out-dir", str, "out"))
    try:
        store = load_store(args.records)
        if not store:
            raise CliError("no valid records to fuse")

        initial_quality = None
        initial_pair_accuracy = None
        if init_mode == "gold":
            labels_path = effective(args, file_values, "labels")
            if labels_path is None:
                raise CliError("--init gold requires --labels")
            labels = read_labels_tsv(labels_path)
            if model == "single":
                q = labeling.gold_initial_quality(store, labels, cfg,
                                                  pair_sources=True)
                initial_pair_accuracy = q.A
            else:
                initial_quality = labeling.gold_initial_quality(store, labels,
                                                                cfg)
        elif init_mode != "default":
            raise CliError(f"unknown init mode {init_mode!r}")

        if model == "single":
            _fuse_single(store, cfg, out, initial_pair_accuracy)
        elif model in ("multi", "multi-sm"):
            if model == "multi-sm":
                store, _, reattribution = gran.resize_sources(
                    store, cfg.m_min, cfg.M_max, cfg.rng_seed)
                _write_reattribution(out, reattribution)
            _fuse_multi(store, cfg, out, initial_quality)
        else:
            raise CliError(f"unknown model {model!r}")
    except Exception:
        out.discard()
        raise
    return 0


def _fuse_single(store, cfg, out, initial_accuracy):
    result = single_layer_em(store, cfg, initial_accuracy=initial_accuracy)
    claims = {}
    for rec in store.records:
        from .single_layer import PairSource
        claims.setdefault(PairSource(rec.w, rec.e), set()).add((rec.d, rec.v))
    with out.open("source_scores.tsv") as fh:
        fh.write("source\taccuracy\tsupported_triples\n")
        for s in sorted(result.accuracy, key=lambda k: k.sort_key()):
            fh.write(f"{s}\t{fmt(result.accuracy[s])}\t{len(claims[s])}\n")
    with out.open("website_scores.tsv") as fh:
        fh.write("source\taccuracy\n")
        for w, a in result.website_accuracy.items():
            fh.write(f"{w}\t{fmt(a)}\n")
    _write_triple_probs(out, result.value_posteriors)
    _write_iteration_log(out, result.iteration_log)
    _write_summary(out, model="single", iterations=result.iterations,
                   items=len(result.value_posteriors),
                   dropped=len(result.dropped_items),
                   excluded_sources=len(result.excluded))


def _fuse_multi(store, cfg, out, initial_quality):
    result = multilayer_em(store, cfg, initial_quality)
    quality = result.quality
    with out.open("source_scores.tsv") as fh:
        fh.write("source\taccuracy\tsupported_triples\n")
        for w in sorted(quality.A, key=lambda k: k.sort_key()):
            fh.write(f"{w}\t{fmt(quality.A[w])}\t"
                     f"{result.supported_triples[w]}\n")
    with out.open("extractor_quality.tsv") as fh:
        fh.write("extractor\tprecision\trecall\tq\n")
        for e in sorted(quality.P, key=lambda k: k.sort_key()):
            fh.write(f"{e}\t{fmt(quality.P[e])}\t{fmt(quality.R[e])}\t"
                     f"{fmt(quality.Q[e])}\n")
    with out.open("extraction_scores.tsv") as fh:
        fh.write("source\tsubject\tpredicate\tobject\tprobability\n")
        for (w, d, v), c in sorted(
                result.posteriors.C.items(),
                key=lambda kv: (kv[0][0].sort_key(), kv[0][1], kv[0][2])):
            fh.write(f"{w}\t{d.subject}\t{d.predicate}\t{v}\t{fmt(c)}\n")
    _write_triple_probs(out, result.posteriors.V)
    _write_iteration_log(out, result.iteration_log)
    _write_summary(out, model="multi", iterations=result.iterations,
                   items=len(result.posteriors.V),
                   dropped=len(result.dropped_items),
                   excluded_sources=len(result.excluded_sources),
                   excluded_extractors=len(result.excluded_extractors))


def _write_triple_probs(out, value_posteriors):
    with out.open("triple_probs.tsv") as fh:
        fh.write("subject\tpredicate\tobject\tprobability\n")
        for d in sorted(value_posteriors):
            dist, _ = value_posteriors[d]
            for v in sorted(dist):
                fh.write(f"{d.subject}\t{d.predicate}\t{v}\t{fmt(dist[v])}\n")


def _write_iteration_log(out, log):
    with out.open("iterations.log") as fh:
        for t, delta in log:
            fh.write(f"iter {t} max_delta {delta:.9f}\n")


def _write_summary(out, **fields):
    with out.open("summary.txt") as fh:
        for key in sorted(fields):
            fh.write(f"{key}\t{fields[key]}\n")


def _write_reattribution(out, reattribution):
    with out.open("reattribution.tsv") as fh:
        fh.write("original\tsubject\tpredicate\tobject\tfinal\n")
        rows = sorted(reattribution.items(),
                      key=lambda kv: (kv[0][0].sort_key(), kv[0][1], kv[0][2]))
        for (orig, d, v), final in rows:
            fh.write(f"{orig}\t{d.subject}\t{d.predicate}\t{v}\t{final}\n")


# ---------------------------------------------------------------------------
# synth

def cmd_synth(args, file_values) -> int:
    cfg = synthgen.SynthConfig(
        n_sources=args.sources, n_extractors=args.extractors,
        triples_per_source=args.triples, source_accuracy=args.accuracy,
        coverage=args.coverage, recall=args.recall,
        field_accuracy=args.field_accuracy, domain_size=args.domain_size,
        seed=effective(args, file_values, "seed", int, 0))
    out = OutputSet(effective(args, file_values, "out-dir", str, "out"))
    try:
        store, truth = synthgen.generate(cfg)
        from .model import record_to_json
        with out.open("records.jsonl") as fh:
            for rec in sorted(store.records,
                              key=lambda r: (r.e.sort_key(), r.w.sort_key(),
                                             r.d, r.v)):
                fh.write(json.dumps(record_to_json(rec), sort_keys=True) + "\n")
        truth_path = out.out_dir / "ground_truth.json"
        out.track([truth_path])
        synthgen.write_truth(truth_path, truth)
    except Exception:
        out.discard()
        raise
    return 0


# ---------------------------------------------------------------------------
# label

def cmd_label(args, file_values) -> int:
    store = load_store(args.records)
    candidates = store.candidate_triples()
    all_labels = []
    if args.kb:
        kb = labeling.KbSnapshot(_read_kb(args.kb))
        all_labels.append(labeling.label_lcwa(candidates, kb))
    if args.rules:
        rules = _read_rules(args.rules)
        entity_types = _read_types(args.types) if args.types else None
        all_labels.append(labeling.label_typecheck(candidates, rules,
                                                   entity_types))
    if not all_labels:
        raise CliError("label needs --kb and/or --rules")
    # type-check falses are authoritative; merge them first
    merged = labeling.merge_labels(*reversed(all_labels))
    out = OutputSet(effective(args, file_values, "out-dir", str, "out"))
    try:
        with out.open("labels.tsv") as fh:
            fh.write("subject\tpredicate\tobject\tlabel\tprovenance\n")
            for d, v in candidates:
                lab = merged.get((d, v))
                if lab is None:
                    continue
                fh.write(f"{d.subject}\t{d.predicate}\t{v}\t{lab.label}\t"
                         f"{lab.provenance}\n")
    except Exception:
        out.discard()
        raise
    return 0


def _read_kb(path):
    triples = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line:
                s, p, o = line.split("\t")
                triples.append((s, p, o))
    return triples


def _read_rules(path):
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    rules = []
    for obj in raw:
        rng = obj.get("numeric_range")
        rules.append(labeling.TypeRule(
            predicate=obj["predicate"],
            forbid_reflexive=obj.get("forbid_reflexive", False),
            subject_type=obj.get("subject_type"),
            object_type=obj.get("object_type"),
            numeric_range=tuple(rng) if rng else None,
            units=obj.get("units")))
    return rules


def _read_types(path):
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return {entity: set(tags) for entity, tags in raw.items()}


# ---------------------------------------------------------------------------
# eval

def cmd_eval(args, file_values) -> int:
    pred_dir = Path(args.pred_dir)
    value_pred = _read_triple_probs(pred_dir / "triple_probs.tsv")

    universe = None
    if args.records:
        store = load_store(args.records)
        universe = {(d.subject, d.predicate, v)
                    for d, v in store.candidate_triples()}

    value_truth = c_truth = a_truth = None
    c_pred = a_pred = None
    if args.truth.endswith(".json"):
        truth = synthgen.read_truth(args.truth)
        keys = universe if universe is not None else set(value_pred)
        # Only items with a defined true value carry labels; candidates on
        # items outside the generated world stay unlabeled and drop out of
        # the value metrics, like closed-world "unknown" triples.
        value_truth = {}
        for subject, predicate, obj in keys:
            d = DataItem(subject=subject, predicate=predicate)
            if d in truth.true_values:
                value_truth[(subject, predicate, obj)] = truth.value_label(d, obj)
        c_path = pred_dir / "extraction_scores.tsv"
        if c_path.exists():
            c_pred = _read_extraction_scores(c_path)
            provisions = {(w if isinstance(w, str) else str(w),
                           d.subject, d.predicate, v)
                          for w, d, v in truth.true_provisions}
            c_truth = {key: (1 if key in provisions else 0) for key in c_pred}
        a_path = pred_dir / "website_scores.tsv"
        if not a_path.exists():
            a_path = pred_dir / "source_scores.tsv"
        if a_path.exists():
            a_pred = _read_source_scores(a_path)
            a_truth = {k: v for k, v in truth.true_A.items() if k in a_pred}
    else:
        labels = read_labels_tsv(args.truth)
        value_truth = labels_to_binary(labels)
        if universe is not None:
            universe &= set(value_truth)

    rep = metrics.build_report(
        value_pred=value_pred, value_truth=value_truth,
        c_pred=c_pred, c_truth=c_truth, a_pred=a_pred, a_truth=a_truth,
        evaluated_keys=set(value_pred), all_keys=universe)
    out = OutputSet(effective(args, file_values, "out-dir", str, "out"))
    try:
        out.track(report.write_report(out.out_dir, rep,
                                      render_figures=not args.no_plots))
    except Exception:
        out.discard()
        raise
    return 0


def _read_triple_probs(path):
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line or line.startswith("subject\t"):
                continue
            subject, predicate, obj, p = line.split("\t")
            out[(subject, predicate, obj)] = float(p)
    return out


def _read_extraction_scores(path):
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line or line.startswith("source\t"):
                continue
            source, subject, predicate, obj, p = line.split("\t")
            out[(source, subject, predicate, obj)] = float(p)
    return out


def _read_source_scores(path):
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line or line.startswith("source\t"):
                continue
            parts = line.split("\t")
            out[parts[0]] = float(parts[1])
    return out


# ---------------------------------------------------------------------------
# granularity

def cmd_granularity(args, file_values) -> int:
    cfg = build_fusion_config(args, file_values)
    store = load_store(args.records)
    if args.target == "sources":
        nodes = gran.source_nodes(store)
    else:
        nodes = gran.extractor_nodes(store)
    final, reattribution = gran.split_and_merge(nodes, cfg.m_min, cfg.M_max,
                                                cfg.rng_seed)
    out = OutputSet(effective(args, file_values, "out-dir", str, "out"))
    try:
        _write_reattribution(out, reattribution)
        with out.open("final_keys.tsv") as fh:
            fh.write("key\tsize\n")
            for node in final:
                fh.write(f"{node.key}\t{node.size}\n")
    except Exception:
        out.discard()
        raise
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kbtrust",
        description="Knowledge-based trust estimation over extracted triples")
    parser.add_argument("--config", help="key=value config file")
    sub = parser.add_subparsers(dest="command", required=True)

    fuse = sub.add_parser("fuse", help="run a fusion model over records")
    fuse.add_argument("records", help="newline-delimited JSON records")
    fuse.add_argument("--model", choices=["single", "multi", "multi-sm"])
    fuse.add_argument("--init", choices=["default", "gold"])
    fuse.add_argument("--labels", help="labels.tsv for --init gold")
    fuse.add_argument("--iters", type=int)
    fuse.add_argument("--n", type=int)
    fuse.add_argument("--gamma", type=float)
    fuse.add_argument("--alpha0", type=float)
    fuse.add_argument("--threshold", type=float)
    fuse.add_argument("--min-size", type=int)
    fuse.add_argument("--max-size", type=int)
    fuse.add_argument("--seed", type=int)
    fuse.add_argument("--workers", type=int)
    fuse.add_argument("--out-dir")
    fuse.add_argument("--hard-map-v", action="store_const", const=True)
    fuse.add_argument("--freeze-alpha", action="store_const", const=True)
    fuse.set_defaults(func=cmd_fuse)

    synth = sub.add_parser("synth", help="generate a synthetic corpus")
    synth.add_argument("--sources", type=int, default=10)
    synth.add_argument("--extractors", type=int, default=5)
    synth.add_argument("--triples", type=int, default=100)
    synth.add_argument("--accuracy", type=float, default=0.7)
    synth.add_argument("--coverage", type=float, default=0.5)
    synth.add_argument("--recall", type=float, default=0.5)
    synth.add_argument("--field-accuracy", type=float, default=0.8)
    synth.add_argument("--domain-size", type=int, default=10)
    synth.add_argument("--seed", type=int)
    synth.add_argument("--out-dir")
    synth.set_defaults(func=cmd_synth)

    label = sub.add_parser("label", help="gold-label extracted candidates")
    label.add_argument("records")
    label.add_argument("--kb", help="reference triples, TSV s/p/o")
    label.add_argument("--rules", help="JSON type rules")
    label.add_argument("--types", help="JSON entity -> type tags")
    label.add_argument("--out-dir")
    label.set_defaults(func=cmd_label)

    ev = sub.add_parser("eval", help="score predictions against a gold truth")
    ev.add_argument("--pred-dir", required=True,
                    help="directory written by fuse")
    ev.add_argument("--truth", required=True,
                    help="ground_truth.json or labels.tsv")
    ev.add_argument("--records", help="records file defining the universe")
    ev.add_argument("--no-plots", action="store_true")
    ev.add_argument("--out-dir")
    ev.set_defaults(func=cmd_eval)

    gr = sub.add_parser("granularity", help="split-and-merge a key hierarchy")
    gr.add_argument("records")
    gr.add_argument("--target", choices=["sources", "extractors"],
                    default="sources")
    gr.add_argument("--min-size", type=int)
    gr.add_argument("--max-size", type=int)
    gr.add_argument("--seed", type=int)
    gr.add_argument("--out-dir")
    gr.set_defaults(func=cmd_granularity)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    file_values = {}
    if args.config:
        try:
            file_values = read_config_file(args.config)
        except (OSError, CliError) as exc:
            print(f"kbtrust: {exc}", file=sys.stderr)
            return 2
    try:
        return args.func(args, file_values)
    except (CliError, OSError, ValueError) as exc:
        print(f"kbtrust: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
