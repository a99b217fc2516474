"""Command-line driver.

Subcommands: run, baseline, embed, learn-graph, report, export-adj.
Configuration is a JSON file mirroring the pipeline config plus a seed
list; individual keys can be overridden on the command line with
``--set dotted.key=value``. Every command writes only inside its output
directory and skips work whose config digest already matches, unless
``--force`` is given. Exit codes: 0 success, 1 compute failure, 2 usage
or input error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import gvae as gvae_mod
from . import learner, pipeline, report
from .data import BundleError, load_bundle, normalize_adjacency, subset_train_labels
from .gcn import TrainConfig, TrainingError
from .kernels import SeededRng
from .pipeline import GraphStageConfig, PipelineConfig, PipelineError

ENV_DATA_ROOT = "BGCN_DATA_ROOT"

USAGE_ERROR = 2
COMPUTE_ERROR = 1


class UsageError(Exception):
    pass


def default_config() -> dict:
    cfg = asdict(PipelineConfig())
    cfg["seeds"] = [0]
    return cfg


def _merge_config(base: dict, update: dict, path="") -> dict:
    for key, value in update.items():
        where = f"{path}{key}"
        if key not in base:
            raise UsageError(f"unknown config key: {where}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise UsageError(f"config key {where} expects an object")
            _merge_config(base[key], value, where + ".")
        else:
            base[key] = value
    return base


def _apply_override(cfg: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise UsageError(f"override must look like key=value, got {assignment!r}")
    dotted, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = cfg
    *parents, leaf = dotted.split(".")
    for part in parents:
        if part not in node or not isinstance(node[part], dict):
            raise UsageError(f"unknown config key: {dotted}")
        node = node[part]
    if leaf not in node:
        raise UsageError(f"unknown config key: {dotted}")
    node[leaf] = value


def build_config(args) -> dict:
    cfg = default_config()
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        _merge_config(cfg, json.loads(path.read_text()))
    for assignment in getattr(args, "set", None) or []:
        _apply_override(cfg, assignment)
    if getattr(args, "labels_per_class", None) is not None:
        cfg["labels_per_class"] = args.labels_per_class
    if getattr(args, "seed", None):
        cfg["seeds"] = list(args.seed)
    elif getattr(args, "seeds", None) is not None:
        cfg["seeds"] = list(range(args.seeds))
    if not cfg["seeds"]:
        raise UsageError("need at least one seed")
    return cfg


def to_pipeline_config(cfg: dict) -> PipelineConfig:
    body = {k: v for k, v in cfg.items() if k != "seeds"}
    pc = PipelineConfig(
        labels_per_class=body["labels_per_class"],
        mc_samples=body["mc_samples"],
        predict_graph=body["predict_graph"],
        row_normalize_features=body["row_normalize_features"],
        true_train_labels_in_z2=body["true_train_labels_in_z2"],
        gcn=TrainConfig(**body["gcn"]),
        gvae=gvae_mod.GvaeConfig(**body["gvae"]),
        graph=GraphStageConfig(**body["graph"]),
    )
    try:
        pc.validate()
    except ValueError as e:
        raise UsageError(str(e)) from e
    return pc


def resolve_dataset(name_or_path: str) -> Path:
    direct = Path(name_or_path)
    if direct.is_dir():
        return direct
    root = os.environ.get(ENV_DATA_ROOT)
    if root:
        candidate = Path(root) / name_or_path
        if candidate.is_dir():
            return candidate
    raise UsageError(f"dataset bundle not found: {name_or_path}"
                     + (f" (also tried under {root})" if root else ""))


def run_digest(cfg: dict, dataset: Path) -> str:
    canonical = json.dumps({"config": cfg, "dataset": str(dataset.resolve())},
                           sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _cached(path: Path, digest: str, force: bool) -> bool:
    if force or not path.is_file():
        return False
    try:
        return json.loads(path.read_text()).get("digest") == digest
    except (json.JSONDecodeError, OSError):
        return False


def _seed_worker(bundle_dir: str, cfg: dict, seed: int):
    pc = to_pipeline_config(cfg)
    result = pipeline.run_algorithm1(bundle_dir, pc, seed)
    i_idx, j_idx, weights = result.learned.graph.upper_pairs()
    return {
        "seed": seed,
        "probs": result.dist.probs,
        "edges": np.stack([i_idx, j_idx], axis=1),
        "weights": weights,
        "num_nodes": result.learned.graph.num_nodes,
        "diagnostics": result.diagnostics,
    }


def _export_learned(out: Path, payload: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    edges = payload["edges"]
    weights = payload["weights"]
    (out / "edges.tsv").write_text(
        "".join(f"{int(u)}\t{int(v)}\n" for u, v in edges))
    (out / "weights.tsv").write_text(
        "".join(f"{repr(float(w))}\n" for w in weights))


def cmd_run(args) -> int:
    cfg = build_config(args)
    dataset = resolve_dataset(args.dataset)
    graph, features, labels = load_bundle(dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    digest = run_digest(cfg, dataset)
    metrics_path = out / "metrics.json"
    if _cached(metrics_path, digest, args.force):
        print(f"cached: {metrics_path}")
        print(_summary_row(json.loads(metrics_path.read_text())))
        return 0
    _write_json(out / "config.json", {"digest": digest, "config": cfg,
                                      "dataset": str(dataset)})

    seeds = cfg["seeds"]
    if args.jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            payloads = list(pool.map(_seed_worker, [str(dataset)] * len(seeds),
                                     [cfg] * len(seeds), seeds))
    else:
        payloads = [_seed_worker(str(dataset), cfg, s) for s in seeds]

    lpc = cfg["labels_per_class"]
    eval_labels = subset_train_labels(labels, lpc) if lpc is not None else labels
    accs = []
    diag_rows = []
    mean_probs = np.zeros_like(payloads[0]["probs"])
    for payload in payloads:
        pred = np.argmax(payload["probs"], axis=1)
        accs.append(report.accuracy(pred, eval_labels))
        mean_probs += payload["probs"]
        diag_rows.append(payload["diagnostics"])
        _export_learned(out / f"seed_{payload['seed']}", payload)
    mean_probs /= len(payloads)

    summary = report.aggregate(accs) if len(accs) >= 2 else None
    metrics = {
        "digest": digest,
        "command": "run",
        "dataset": str(dataset),
        "labels_per_class": lpc,
        "seeds": seeds,
        "accuracies": accs,
        "mean": summary.mean if summary else accs[0],
        "std": summary.std if summary else 0.0,
    }
    _write_json(metrics_path, metrics)
    _write_diag_csv(out / "diagnostics.csv", diag_rows)
    ensemble = np.argmax(mean_probs, axis=1)
    (out / "pred.tsv").write_text(
        "".join(f"{i}\t{int(c)}\n" for i, c in enumerate(ensemble)))
    print(_summary_row(metrics))
    return 0


def cmd_baseline(args) -> int:
    cfg = build_config(args)
    dataset = resolve_dataset(args.dataset)
    _, _, labels = load_bundle(dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    digest = run_digest({"baseline": cfg}, dataset)
    metrics_path = out / "metrics.json"
    if _cached(metrics_path, digest, args.force):
        print(f"cached: {metrics_path}")
        print(_summary_row(json.loads(metrics_path.read_text())))
        return 0
    pc = to_pipeline_config(cfg)
    lpc = cfg["labels_per_class"]
    eval_labels = subset_train_labels(labels, lpc) if lpc is not None else labels
    accs = []
    diag_rows = []
    first_pred = None
    for seed in cfg["seeds"]:
        pred, diag = pipeline.run_baseline(str(dataset), pc, seed)
        if first_pred is None:
            first_pred = pred
        accs.append(report.accuracy(pred, eval_labels))
        diag_rows.append(diag)
    (out / "pred.tsv").write_text(
        "".join(f"{i}\t{int(c)}\n" for i, c in enumerate(first_pred)))
    summary = report.aggregate(accs) if len(accs) >= 2 else None
    metrics = {
        "digest": digest,
        "command": "baseline",
        "dataset": str(dataset),
        "labels_per_class": lpc,
        "seeds": cfg["seeds"],
        "accuracies": accs,
        "mean": summary.mean if summary else accs[0],
        "std": summary.std if summary else 0.0,
    }
    _write_json(metrics_path, metrics)
    _write_diag_csv(out / "diagnostics.csv", diag_rows)
    print(_summary_row(metrics))
    return 0


def _summary_row(metrics: dict) -> str:
    name = Path(metrics["dataset"]).name
    lpc = metrics["labels_per_class"]
    pct = f"{100 * metrics['mean']:.1f}±{100 * metrics['std']:.1f}"
    return (f"{metrics['command']:<9} {name:<10} labels/class={lpc!s:<5} "
            f"seeds={len(metrics['seeds']):<3} accuracy={pct}")


def _write_diag_csv(path: Path, rows: list[dict]) -> None:
    keys = sorted({k for row in rows for k in row})
    lines = [",".join(keys)]
    for row in rows:
        lines.append(",".join(str(row.get(k, "")) for k in keys))
    path.write_text("\n".join(lines) + "\n")


def cmd_embed(args) -> int:
    cfg = build_config(args)
    dataset = resolve_dataset(args.dataset)
    graph, features, _ = load_bundle(dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg["seeds"][0]
    digest = run_digest({"embed": {"gvae": cfg["gvae"], "seed": seed,
                                   "row_normalize": cfg["row_normalize_features"]}}, dataset)
    meta_path = out / "embed_meta.json"
    if _cached(meta_path, digest, args.force):
        print(f"cached: {out / 'embeddings.tsv'}")
        return 0
    pc = to_pipeline_config(cfg)
    if pc.row_normalize_features:
        features = features.row_normalized()
    a_obs = normalize_adjacency(graph)
    result = gvae_mod.train_gvae(a_obs, features, graph, pc.gvae,
                                 SeededRng(seed).child(0).generator())
    emb = gvae_mod.node_embeddings(result.params, a_obs, features)
    with (out / "embeddings.tsv").open("w") as fh:
        for i, row in enumerate(emb):
            fh.write("\t".join([str(i)] + [repr(float(x)) for x in row]) + "\n")
    _write_json(meta_path, {"digest": digest, "seed": seed, "dim": emb.shape[1]})
    print(f"wrote {out / 'embeddings.tsv'} ({emb.shape[0]} x {emb.shape[1]})")
    return 0


def cmd_learn_graph(args) -> int:
    cfg = build_config(args)
    dataset = resolve_dataset(args.dataset)
    graph, features, labels = load_bundle(dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg["seeds"][0]
    digest = run_digest({"learn-graph": cfg, "seed": seed}, dataset)
    meta_path = out / "learn_meta.json"
    if _cached(meta_path, digest, args.force):
        print(f"cached: {out / 'learned_edges.tsv'}")
        return 0
    pc = to_pipeline_config(cfg)
    result = pipeline.run_algorithm1(str(dataset), pc, seed)
    g = result.learned.graph
    i_idx, j_idx, w = g.upper_pairs()
    (out / "learned_edges.tsv").write_text(
        "".join(f"{int(u)}\t{int(v)}\n" for u, v in zip(i_idx, j_idx)))
    (out / "learned_weights.tsv").write_text(
        "".join(f"{repr(float(x))}\n" for x in w))
    (out / "solver_trace.csv").write_text(
        "iteration,objective\n" + "".join(f"{it},{f}\n" for it, f in result.learned.trace))
    _write_json(meta_path, {"digest": digest, "seed": seed,
                            "objective": result.learned.objective,
                            "iterations": result.learned.iterations,
                            "converged": result.learned.converged})
    print(f"objective={result.learned.objective:.6f} "
          f"iterations={result.learned.iterations} "
          f"edges={g.edge_count()}")
    return 0


def cmd_report(args) -> int:
    rows = []
    for run_dir in args.run_dir:
        metrics_path = Path(run_dir) / "metrics.json"
        if not metrics_path.is_file():
            raise UsageError(f"no metrics.json under {run_dir}")
        rows.append(json.loads(metrics_path.read_text()))
    for metrics in rows:
        print(_summary_row(metrics))
    if args.stratify:
        _stratify_report(args, rows)
    if args.out:
        _write_json(Path(args.out), {"runs": rows})
    return 0


def _read_pred(run_dir) -> np.ndarray:
    path = Path(run_dir) / "pred.tsv"
    if not path.is_file():
        raise UsageError(f"no pred.tsv under {run_dir}")
    pairs = [line.split("\t") for line in path.read_text().splitlines()]
    pred = np.zeros(len(pairs), dtype=np.int64)
    for node, cls in pairs:
        pred[int(node)] = int(cls)
    return pred


def _stratify_report(args, rows) -> None:
    """Degree-stratified outcome table for one pipeline run vs one baseline."""
    if len(args.run_dir) != 2 or not args.dataset:
        raise UsageError("--stratify needs exactly two run dirs and --dataset")
    by_cmd = {m.get("command"): d for m, d in zip(rows, args.run_dir)}
    if set(by_cmd) != {"run", "baseline"}:
        raise UsageError("--stratify expects one 'run' and one 'baseline' directory")
    graph, _, labels = load_bundle(resolve_dataset(args.dataset))
    table = report.degree_stratify(_read_pred(by_cmd["baseline"]),
                                   _read_pred(by_cmd["run"]), labels, graph)
    target = Path(args.stratify)
    report.write_stratified_csv(table, target)
    print(f"median test degree {table.median_degree}; wrote {target}")


def cmd_export_adj(args) -> int:
    dataset = resolve_dataset(args.dataset)
    graph, _, labels = load_bundle(dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stats = {"observed": report.export_adjacency_heatmap(
        graph, labels.labels, out / "adj_obs.pgm", out / "ordering.txt")}
    if args.run_dir:
        run_dir = Path(args.run_dir)
        edges_path = None
        for candidate in ("learned_edges.tsv", "seed_0/edges.tsv"):
            if (run_dir / candidate).is_file():
                edges_path = run_dir / candidate
                break
        if edges_path is None:
            raise UsageError(f"no learned-graph export under {run_dir}")
        weights_path = edges_path.with_name(edges_path.name.replace("edges", "weights"))
        pairs = [tuple(map(int, line.split("\t")))
                 for line in edges_path.read_text().splitlines()]
        weights = [float(x) for x in weights_path.read_text().split()]
        from .data import SparseGraph
        learned = SparseGraph.from_edges(graph.num_nodes,
                                         [p[0] for p in pairs], [p[1] for p in pairs],
                                         weights)
        stats["learned"] = report.export_adjacency_heatmap(
            learned, labels.labels, out / "adj_map.pgm")
    _write_json(out / "adj_stats.json", stats)
    for name, st in stats.items():
        print(f"{name}: within-class weight fraction {st['within_fraction']:.4f}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bgcn")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_dataset=True):
        if needs_dataset:
            p.add_argument("--dataset", required=True,
                           help=f"bundle dir or name under ${ENV_DATA_ROOT}")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (dotted path)")
        p.add_argument("--labels-per-class", type=int, choices=(5, 10, 20))
        p.add_argument("--seeds", type=int, help="use seeds 0..N-1")
        p.add_argument("--seed", type=int, action="append",
                       help="explicit seed (repeatable)")
        p.add_argument("--force", action="store_true", help="ignore cached results")

    p_run = sub.add_parser("run", help="full pipeline over seeds")
    common(p_run)
    p_run.add_argument("--jobs", type=int, default=1, help="parallel seed workers")
    p_run.set_defaults(func=cmd_run)

    p_base = sub.add_parser("baseline", help="plain GCN on the observed graph")
    common(p_base)
    p_base.set_defaults(func=cmd_baseline)

    p_embed = sub.add_parser("embed", help="train the auto-encoder, export embeddings")
    common(p_embed)
    p_embed.set_defaults(func=cmd_embed)

    p_lg = sub.add_parser("learn-graph", help="learn and export the MAP adjacency")
    common(p_lg)
    p_lg.set_defaults(func=cmd_learn_graph)

    p_rep = sub.add_parser("report", help="merge run directories into one table")
    p_rep.add_argument("run_dir", nargs="+")
    p_rep.add_argument("--out", help="write merged summary.json here")
    p_rep.add_argument("--stratify", metavar="CSV",
                       help="write a degree-stratified outcome table "
                            "(needs one run dir, one baseline dir, --dataset)")
    p_rep.add_argument("--dataset", help="dataset bundle for --stratify")
    p_rep.set_defaults(func=cmd_report)

    p_adj = sub.add_parser("export-adj", help="adjacency heatmaps and block stats")
    p_adj.add_argument("--dataset", required=True)
    p_adj.add_argument("--out", required=True)
    p_adj.add_argument("--run-dir", help="run directory with a learned graph export")
    p_adj.set_defaults(func=cmd_export_adj)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, BundleError) as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE_ERROR
    except (PipelineError, TrainingError, learner.CalibrationError, RuntimeError) as e:
        print(f"compute error: {e}", file=sys.stderr)
        return COMPUTE_ERROR


if __name__ == "__main__":
    sys.exit(main())
