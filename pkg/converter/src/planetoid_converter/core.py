"""Convert a Planetoid-style binary distribution into a plain-text bundle.

Input: the seven upstream files for a dataset NAME in one directory:

    ind.NAME.x / .tx / .allx    pickled scipy sparse feature blocks
    ind.NAME.y / .ty / .ally    pickled one-hot label blocks
    ind.NAME.graph              pickled {node: [neighbors]} adjacency dict
    ind.NAME.test.index         text file, one (permuted) test node id per line

Output bundle directory:

    manifest.json   counts plus sha256 checksums of the other files
    edges.tsv       "u<TAB>v" per undirected edge, u < v
    features.tsv    "node<TAB>col<TAB>value" triplets
    labels.tsv      "node<TAB>class", one line per node
    splits.json     {"train20": [...], "val": [...], "test": [...]}

Node order follows the upstream convention: the labeled training block
comes first (its order defines "first k per class" subsets), then the rest
of allx, then the test block in sorted index order. Test indices missing
from test.index (isolated nodes in the Citeseer distribution) get all-zero
feature and label rows at their documented positions.

The bundle is built in a temporary sibling directory and moved into place
only after every file is written, so a failed conversion leaves nothing
behind. Output bytes are deterministic: converting twice gives identical
files.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import pickle
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np
import scipy.sparse as sp

UPSTREAM_SUFFIXES = ("x", "y", "tx", "ty", "allx", "ally", "graph", "test.index")
BUNDLE_FILES = ("edges.tsv", "features.tsv", "labels.tsv", "splits.json")
VAL_SIZE = 500


class ConversionError(RuntimeError):
    pass


def _load_pickle(path: Path):
    try:
        with path.open("rb") as fh:
            return pickle.load(fh, encoding="latin1")
    except FileNotFoundError:
        raise ConversionError(f"missing upstream file: {path}")
    except Exception as e:
        raise ConversionError(f"cannot read {path}: {e}") from e


def _load_test_index(path: Path) -> np.ndarray:
    try:
        lines = path.read_text().split()
    except FileNotFoundError:
        raise ConversionError(f"missing upstream file: {path}")
    try:
        idx = np.asarray([int(x) for x in lines], dtype=np.int64)
    except ValueError as e:
        raise ConversionError(f"bad test index file {path}: {e}") from e
    if idx.size == 0:
        raise ConversionError(f"empty test index file {path}")
    return idx


def load_raw(input_dir, name: str) -> dict:
    """Read and reassemble the upstream blocks into full node-order arrays."""
    root = Path(input_dir)
    blocks = {}
    for suffix in ("x", "y", "tx", "ty", "allx", "ally"):
        blocks[suffix] = _load_pickle(root / f"ind.{name}.{suffix}")
    graph = _load_pickle(root / f"ind.{name}.graph")
    if not isinstance(graph, dict):
        raise ConversionError("graph file does not hold an adjacency dict")
    test_reorder = _load_test_index(root / f"ind.{name}.test.index")

    allx = sp.csr_matrix(blocks["allx"])
    tx = sp.csr_matrix(blocks["tx"])
    ally = np.asarray(blocks["ally"])
    ty = np.asarray(blocks["ty"])
    if allx.shape[1] != tx.shape[1]:
        raise ConversionError("allx and tx disagree on feature dimension")
    if ally.shape[0] != allx.shape[0] or ty.shape[0] != tx.shape[0]:
        raise ConversionError("label block row counts disagree with feature blocks")

    test_sorted = np.sort(test_reorder)
    lo, hi = int(test_sorted[0]), int(test_sorted[-1])
    if lo < allx.shape[0]:
        raise ConversionError("test indices overlap the allx block")
    span = hi - lo + 1
    # isolated test nodes (absent from test.index) get zero rows
    tx_full = sp.lil_matrix((span, tx.shape[1]), dtype=np.float64)
    ty_full = np.zeros((span, ty.shape[1]))
    tx_full[test_reorder - lo] = tx
    ty_full[test_reorder - lo] = ty

    num_nodes = allx.shape[0] + span
    if hi != num_nodes - 1:
        raise ConversionError("test indices do not close the node range")
    features = sp.csr_matrix(sp.vstack([allx, sp.csr_matrix(tx_full)]))
    onehot = np.vstack([ally, ty_full])
    labels = np.argmax(onehot, axis=1).astype(np.int64)

    num_train = np.asarray(blocks["y"]).shape[0]
    bad = [int(k) for k in graph if not 0 <= int(k) < num_nodes]
    if bad:
        raise ConversionError(f"graph node id out of range: {bad[0]}")
    return {
        "name": name,
        "num_nodes": num_nodes,
        "features": features,
        "labels": labels,
        "num_classes": int(onehot.shape[1]),
        "graph": graph,
        "train_idx": list(range(num_train)),
        "val_idx": list(range(num_train, num_train + VAL_SIZE)),
        "test_idx": [int(i) for i in test_sorted],
    }


def _undirected_edges(graph: dict, num_nodes: int):
    edges = set()
    for u, nbrs in graph.items():
        u = int(u)
        for v in nbrs:
            v = int(v)
            if not 0 <= v < num_nodes:
                raise ConversionError(f"neighbor id out of range: {v}")
            if u == v:
                continue  # drop self-citations
            edges.add((min(u, v), max(u, v)))
    return sorted(edges)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_bundle(raw: dict, out_dir: Path) -> None:
    edges = _undirected_edges(raw["graph"], raw["num_nodes"])
    (out_dir / "edges.tsv").write_text(
        "".join(f"{u}\t{v}\n" for u, v in edges))

    coo = raw["features"].tocoo()
    order = np.lexsort((coo.col, coo.row))
    with (out_dir / "features.tsv").open("w") as fh:
        for r, c, val in zip(coo.row[order], coo.col[order], coo.data[order]):
            if val < 0:
                raise ConversionError(f"negative feature value at ({r}, {c})")
            if val != 0.0:
                fh.write(f"{int(r)}\t{int(c)}\t{repr(float(val))}\n")

    (out_dir / "labels.tsv").write_text(
        "".join(f"{i}\t{int(c)}\n" for i, c in enumerate(raw["labels"])))

    (out_dir / "splits.json").write_text(json.dumps({
        "train20": raw["train_idx"],
        "val": raw["val_idx"],
        "test": raw["test_idx"],
    }, indent=0) + "\n")

    checksums = {name: _sha256(out_dir / name) for name in BUNDLE_FILES}
    (out_dir / "manifest.json").write_text(json.dumps({
        "num_nodes": raw["num_nodes"],
        "num_features": int(raw["features"].shape[1]),
        "num_classes": raw["num_classes"],
        "num_edges": len(edges),
        "checksums": checksums,
    }, indent=2, sort_keys=True) + "\n")


def convert(input_dir, name: str, output_dir) -> Path:
    """Convert one dataset; returns the bundle directory path."""
    raw = load_raw(input_dir, name)
    target = Path(output_dir)
    target.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{name}-partial-", dir=target.parent))
    try:
        write_bundle(raw, staging)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    if target.exists():
        shutil.rmtree(target)
    staging.rename(target)
    return target


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="planetoid-convert")
    parser.add_argument("--input", required=True, help="directory with ind.NAME.* files")
    parser.add_argument("--name", required=True, choices=("cora", "citeseer", "pubmed"))
    parser.add_argument("--output", required=True, help="bundle directory to create")
    args = parser.parse_args(argv)
    try:
        out = convert(args.input, args.name, args.output)
    except ConversionError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    manifest = json.loads((out / "manifest.json").read_text())
    print(f"wrote {out}: N={manifest['num_nodes']} d={manifest['num_features']} "
          f"C={manifest['num_classes']} edges={manifest['num_edges']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
