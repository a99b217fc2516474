#!/usr/bin/env python3
"""Generate the synthetic bundles used by the tests and demos.

    python scripts/make_toy_bundle.py out/toys [--seed 11]

Writes `tiny/` (8 nodes, 2 classes, perfectly informative features) and
`sbm/` (120 nodes, 3 blocks, noisy features).
"""
import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from bgcn import synth  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("out", help="directory to create the bundles under")
    parser.add_argument("--seed", type=int, default=11)
    args = parser.parse_args()
    out = Path(args.out)
    tiny = synth.make_tiny_two_cluster(out / "tiny")
    sbm = synth.make_sbm_bundle(out / "sbm", seed=args.seed)
    print(f"wrote {tiny}")
    print(f"wrote {sbm}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
