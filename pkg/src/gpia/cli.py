"""``gpia`` command line: synth, train, attack, defend, analyze, sweep.

Every command that computes results writes ``results.csv`` (or the analysis
CSV) plus ``manifest.json`` into the configured output directory. Work is
split into independent jobs; a pool of ``--jobs`` processes runs them and the
parent writes rows in job order, so files do not depend on the worker count.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from importlib import metadata
from multiprocessing import get_context
from pathlib import Path

import numpy as np
import scipy
from threadpoolctl import threadpool_limits

from . import analysis as an
from .attacks import (
    AdversaryKnowledge,
    assemble_dataset,
    collect_outputs,
    fit_and_score,
    partial_graph,
    run_baselines,
)
from .config import ConfigError, ExperimentConfig, validate
from .defenses import CSV_HEADER as DEFENSE_HEADER
from .defenses import DefenseSpec, evaluate_defense
from .errors import GpiaError, KnowledgeError, UsageError
from .gnn import GnnConfig, save_model, train
from .graph import generate_synthetic, load_graph, save_graph

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3
SHADOW_SEED_OFFSET = 7919
RESULT_HEADER = (
    "point", "attack_id", "method", "classifier", "aggregation", "layers", "seed", "depth",
    "mix_ratio", "group_ratio", "defense", "param", "attack_acc", "target_acc", "n_test", "config_hash",
)
EDGES_FILE, FEATURES_FILE = "edges.tsv", "features.csv"


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


# ---------------------------------------------------------------------------
# worlds


def load_world(cfg: ExperimentConfig, base: Path, seed: int):
    """(target, partial, shadow) graphs for one seed."""
    target = _graph(cfg.graph, base, seed)
    part = partial_graph(target, cfg.partial_fraction, seed) if cfg.partial_fraction else None
    shadow = _graph(cfg.shadow, base, seed + SHADOW_SEED_OFFSET) if cfg.shadow is not None else None
    return target, part, shadow


def _graph(section, base, seed):
    if section.synthetic is not None:
        return generate_synthetic(section.synthetic.build(seed))
    f = section.files
    return load_graph(base / f.edges, base / f.features, f.property_col, tuple(f.property_values))


# ---------------------------------------------------------------------------
# jobs


@dataclass(frozen=True)
class Job:
    """One set of collected outputs and every row computed from it."""

    index: int
    attack: int
    seed: int
    depth: int | None = None
    mix_ratio: str | None = None
    group_ratio: float | None = None
    defenses: tuple = ()  # (DefenseSpec, target_only) pairs; empty means undefended
    baselines: bool = False


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _row(job, spec, method, attack_acc, target_acc, n_test, chash, defense="", param=None, classifier=None):
    return [
        None, spec.id, method, classifier or spec.classifier.tag, spec.aggregation, " ".join(map(str, spec.layers)),
        job.seed, _fmt(job.depth), _fmt(job.mix_ratio), _fmt(job.group_ratio), defense, _fmt(param),
        repr(float(attack_acc)), "" if target_acc is None else repr(float(target_acc)), n_test, chash,
    ]


def run_job(cfg_json: str, base: str, job: Job) -> list:
    """All rows of one job. Runs in a worker process or in the parent."""
    cfg = ExperimentConfig.model_validate_json(cfg_json)
    chash = cfg.hash()
    with threadpool_limits(1):
        target, part, shadow = load_world(cfg, Path(base), job.seed)
        sec = cfg.attacks[job.attack]
        override = {}
        if job.group_ratio is not None:
            override["group_fractions"] = (job.group_ratio, 1.0 - job.group_ratio)
        spec = sec.build(cfg.property.build(), **override)
        gnn = cfg.gnn.build(job.seed, **({"hidden_layers": job.depth} if job.depth else {}))
        k = AdversaryKnowledge(
            partial_graph=part if "partial" in spec.sources else None,
            shadow_graph=shadow if "shadow" in spec.sources else None,
            access=spec.access,
            mix_ratio=job.mix_ratio or sec.mix_ratio,
        )
        outputs = collect_outputs(spec, k, target, gnn, job.seed)
        rows = []
        if not job.defenses:
            ds = assemble_dataset(outputs, spec, job.seed)
            res = fit_and_score(ds, spec, job.seed, chash)
            tacc = float(np.mean([np.mean(o.O[o.test_idx].argmax(1) == o.labels[o.test_idx]) for o in outputs.test]))
            rows.append(_row(job, spec, "gpia", res.accuracy, tacc, res.n_test, chash))
            if job.baselines:
                for name, b in run_baselines(outputs, ds, spec, k, gnn, job.seed).items():
                    rows.append(_row(job, spec, f"baseline-{name}", b.accuracy, None, b.n_test, chash, classifier=b.classifier))
        for dspec, target_only in job.defenses:
            r = evaluate_defense(dspec, spec, k, target, gnn, job.seed, outputs=outputs, target_only=target_only)
            rows.append(_row(job, spec, "gpia", r.attack_accuracy, r.target_accuracy, spec.n_test, chash, dspec.method, r.param))
        return rows


def _pool_init():
    threadpool_limits(1)


def execute(cfg: ExperimentConfig, base: Path, jobs: list, workers: int) -> list:
    """Rows of all jobs, in job order regardless of ``workers``."""
    payload = cfg.model_dump_json()
    if workers <= 1:
        results = [run_job(payload, str(base), j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers, mp_context=get_context("spawn"), initializer=_pool_init) as ex:
            futures = [ex.submit(run_job, payload, str(base), j) for j in jobs]
            results = [f.result() for f in futures]
    rows = []
    for chunk in results:
        for r in chunk:
            r[0] = len(rows)
            rows.append(r)
    return rows


def _seeds(cfg):
    return list(cfg.sweep.seeds) if cfg.sweep and cfg.sweep.seeds else [cfg.seed]


def attack_jobs(cfg: ExperimentConfig) -> list:
    out = []
    for seed in _seeds(cfg):
        for i, a in enumerate(cfg.attacks):
            out.append(Job(len(out), i, seed, baselines=a.baselines))
    return out


def _pairs(cfg, access):
    return [(d.build(), d.target_only) for d in cfg.defenses if d.build().compatible(access)]


def defend_jobs(cfg: ExperimentConfig) -> list:
    """Each attack against every defence that fits its access mode."""
    if not cfg.defenses:
        raise UsageError("the config lists no defences")
    prop = cfg.property.build()
    accesses = {a.build(prop).access for a in cfg.attacks}
    for d in cfg.defenses:
        if not any(d.build().compatible(acc) for acc in accesses):
            raise UsageError(f"defence {d.method} fits none of the configured attacks")
    out = []
    for seed in _seeds(cfg):
        for i, a in enumerate(cfg.attacks):
            pairs = _pairs(cfg, a.build(prop).access)
            if pairs:
                out.append(Job(len(out), i, seed, defenses=tuple(pairs)))
    return out


_NOISE = ("noisy-posterior", "noisy-embedding", "dp-gradient")


def _sweep_defenses(cfg, access):
    """Defence variants along the noise-scale and truncation axes for one attack."""
    sw = cfg.sweep
    if not sw.noise_scales and not sw.truncation_ratios:
        return ()
    templates = [(d.build(), d.target_only) for d in cfg.defenses]
    if not templates:
        if sw.noise_scales:
            method = "noisy-embedding" if access == "white" else "noisy-posterior"
            templates.append((DefenseSpec(method, b=1.0), False))
        if sw.truncation_ratios and access == "white":
            templates.append((DefenseSpec("truncation", r=0.1), False))
    out = []
    for ds, t_only in templates:
        if not ds.compatible(access):
            continue
        if ds.method in _NOISE and sw.noise_scales:
            out.extend((replace(ds, b=float(b)), t_only) for b in sw.noise_scales)
        elif ds.method == "truncation" and sw.truncation_ratios:
            out.extend((replace(ds, r=float(r)), t_only) for r in sw.truncation_ratios)
        else:
            out.append((ds, t_only))
    return tuple(out)


def sweep_jobs(cfg: ExperimentConfig) -> list:
    sw = cfg.sweep
    if sw is None:
        raise UsageError("the config has no sweep section")
    prop = cfg.property.build()
    out = []
    axes = [sw.depths or [None], sw.mix_ratios or [None], sw.group_ratios or [None]]
    for seed in _seeds(cfg):
        for i, a in enumerate(cfg.attacks):
            defs = _sweep_defenses(cfg, a.build(prop).access)
            for depth, mix, gr in itertools.product(*axes):
                out.append(Job(len(out), i, seed, depth, mix, gr, defs))
    return out


# ---------------------------------------------------------------------------
# output


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue())


def _manifest(out: Path, cfg, seeds, started, files, status="ok", errors=()):
    m = {
        "config_hash": cfg.hash() if cfg is not None else None,
        "versions": {
            "artifact": _version(),
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "seeds": list(seeds),
        "wall_clock_s": round(time.time() - started, 3),
        "outputs": [str(f) for f in files],
        "status": status,
        "errors": list(errors),
    }
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(m, indent=2, sort_keys=True) + "\n")


def _summary(header, rows, keep=("attack_id", "method", "seed", "defense", "param", "attack_acc", "target_acc")):
    idx = [header.index(k) for k in keep if k in header]
    table = [[header[i] for i in idx]] + [[str(r[i]) for i in idx] for r in rows]
    widths = [max(len(row[c]) for row in table) for c in range(len(idx))]
    for row in table:
        print("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args) -> int:
    cfg = validate(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    target, _, shadow = load_world(cfg, Path(args.config).parent, cfg.seed)
    save_graph(target, out / EDGES_FILE, out / FEATURES_FILE)
    files = [out / EDGES_FILE, out / FEATURES_FILE]
    if shadow is not None:
        (out / "shadow").mkdir(exist_ok=True)
        save_graph(shadow, out / "shadow" / EDGES_FILE, out / "shadow" / FEATURES_FILE)
        files += [out / "shadow" / EDGES_FILE, out / "shadow" / FEATURES_FILE]
    _manifest(out, cfg, [cfg.seed], started, files)
    print(f"wrote {target.n} nodes, {len(target.edges)} edges to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    d = Path(args.graph)
    g = load_graph(d / EDGES_FILE, d / FEATURES_FILE, args.property_col)
    gcfg = GnnConfig(arch=args.arch, hidden_layers=args.layers, classes=max(2, g.num_classes), seed=args.seed)
    tr, te = an.default_split(g, args.seed)
    with threadpool_limits(1):
        model, report = train(g, gcfg, tr, te)
    save_model(model, args.out)
    print(f"trained {gcfg.arch} for {report.epochs} epochs (best {report.best_epoch}); "
          f"held-out accuracy {report.test_acc[report.best_epoch - 1]:.3f}")
    return EXIT_OK


def _run_rows(args, cfg, jobs, name="results.csv"):
    out = cfg.resolved_output()
    started = time.time()
    try:
        rows = execute(cfg, Path(args.config).parent, jobs, getattr(args, "jobs", 1))
    except (GpiaError, ValueError) as e:
        _manifest(out, cfg, sorted({j.seed for j in jobs}), started, [], "failed", [f"{type(e).__name__}: {e}"])
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / name, RESULT_HEADER, rows)
    files = [out / name]
    if any(j.defenses for j in jobs):
        drows = [[r[10], r[11], r[1], r[12], r[13], r[6]] for r in rows if r[10]]
        _write_csv(out / "defenses.csv", DEFENSE_HEADER, drows)
        files.append(out / "defenses.csv")
    _manifest(out, cfg, sorted({j.seed for j in jobs}), started, files)
    _summary(list(RESULT_HEADER), rows)
    return EXIT_OK


def cmd_attack(args) -> int:
    cfg = validate(args.config)
    if not cfg.attacks:
        raise UsageError("the config lists no attacks")
    return _run_rows(args, cfg, attack_jobs(cfg))


def cmd_defend(args) -> int:
    cfg = validate(args.config)
    return _run_rows(args, cfg, defend_jobs(cfg))


def cmd_sweep(args) -> int:
    cfg = validate(args.config)
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    return _run_rows(args, cfg, sweep_jobs(cfg))


def _analysis_attack(cfg, base, seed):
    if not cfg.attacks:
        raise UsageError("this analysis needs an attack in the config")
    i = cfg.analysis.gap_attack
    if not 0 <= i < len(cfg.attacks):
        raise UsageError(f"analysis.gap_attack {i} is out of range")
    target, part, shadow = load_world(cfg, base, seed)
    spec = cfg.attacks[i].build(cfg.property.build())
    k = AdversaryKnowledge(
        partial_graph=part if "partial" in spec.sources else None,
        shadow_graph=shadow if "shadow" in spec.sources else None,
        access=spec.access,
        mix_ratio=cfg.attacks[i].mix_ratio,
    )
    outputs = collect_outputs(spec, k, target, cfg.gnn.build(seed), seed)
    return spec, outputs


def _analyze(kind, cfg, base):
    seed = cfg.seed
    gnn = cfg.gnn.build(seed)
    prop = cfg.property.build()
    if kind == "influence":
        g = load_world(cfg, base, seed)[0]
        a = cfg.analysis
        if a.influence_elements is not None:
            elements = a.influence_elements
        elif a.influence_kind == "node":
            rng = np.random.default_rng(seed)
            elements = sorted(rng.choice(g.n, size=min(a.max_elements, g.n), replace=False).tolist())
        else:
            rng = np.random.default_rng(seed)
            pick = np.sort(rng.choice(len(g.edges), size=min(a.max_elements, len(g.edges)), replace=False))
            elements = g.edges[pick].tolist()
        rep = an.influence_scores(g, gnn, seed, a.influence_kind, elements)
        codes = g.property_codes
        if rep.kind == "node":
            rows = [r + [int(codes[e])] for r, e in zip(rep.rows(), rep.elements)]
            header = rep.header() + ["group"]
        else:
            rows = [r + [an._edge_group(codes, e)] for r, e in zip(rep.rows(), rep.elements)]
            header = rep.header() + ["group"]
        return "influence.csv", header, rows
    if kind == "disparity":
        g = load_world(cfg, base, seed)[0]
        tr, te = an.default_split(g, seed)
        model = train(g, gnn, tr, te)[0]
        rep = an.group_metrics(model, g, prop, te)
        rows = rep.rows() + [["loss_gap", "", repr(rep.loss_gap), ""]]
        return "disparity.csv", ["group", "n", "loss", "accuracy"], rows
    if kind == "correlation":
        g = load_world(cfg, base, seed)[0]
        return "correlation.csv", ["pearson_property_label"], [[repr(an.property_label_correlation(g))]]
    if kind == "gapbuckets":
        spec, outputs = _analysis_attack(cfg, base, seed)
        res = fit_and_score(assemble_dataset(outputs, spec, seed), spec, seed)
        correct = res.predictions == res.truth
        buckets = an.gap_buckets([o.gap for o in outputs.test], correct)
        return "gapbuckets.csv", ["bucket", "size", "mean_gap", "attack_acc"], an.bucket_rows(buckets)
    if kind == "distribution":
        spec, outputs = _analysis_attack(cfg, base, seed)
        ds = assemble_dataset(outputs, spec, seed)
        from .features import FeatureVector

        vecs = [FeatureVector(x) for x in ds.X_test]
        coords = an.export_distribution(vecs, ds.y_test, seed)
        return "distribution.csv", ["x", "y", "flag"], an.distribution_rows(coords)
    raise UsageError(f"unknown analysis {kind!r}")


def cmd_analyze(args) -> int:
    cfg = validate(args.config)
    out = cfg.resolved_output()
    started = time.time()
    try:
        with threadpool_limits(1):
            name, header, rows = _analyze(args.kind, cfg, Path(args.config).parent)
    except UsageError:
        raise
    except (GpiaError, ValueError) as e:
        _manifest(out, cfg, [cfg.seed], started, [], "failed", [f"{type(e).__name__}: {e}"])
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / name, header, rows)
    _manifest(out, cfg, [cfg.seed], started, [out / name])
    for r in rows[:20]:
        print("  ".join(str(x) for x in r))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gpia", description="Group property inference attacks against GNNs.")
    p.add_argument("--version", action="version", version=f"%(prog)s {_version()}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate the configured synthetic graph(s)")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="train one GNN on a graph directory")
    s.add_argument("--graph", required=True, help=f"directory holding {EDGES_FILE} and {FEATURES_FILE}")
    s.add_argument("--arch", choices=("gcn", "sage", "gat"), default="gcn")
    s.add_argument("--layers", type=int, default=2)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--property-col", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    for name, fn, helptext in (
        ("attack", cmd_attack, "run every configured attack"),
        ("defend", cmd_defend, "run every attack under every configured defence"),
        ("sweep", cmd_sweep, "run the cross-product of the sweep axes"),
    ):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config", required=True)
        s.add_argument("--jobs", type=int, default=1)
        s.set_defaults(func=fn)

    s = sub.add_parser("analyze", help="diagnostics")
    s.add_argument("kind", choices=("influence", "disparity", "correlation", "gapbuckets", "distribution"))
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_analyze)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print("invalid configuration:", file=sys.stderr)
        for prob in e.problems:
            print(f"  {prob}", file=sys.stderr)
        return EXIT_VALIDATION
    except (UsageError, KnowledgeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except GpiaError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
