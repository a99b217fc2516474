import os
from pathlib import Path

import pytest

from bgcn import synth

DATA_ROOT = Path(os.environ.get("BGCN_DATA_ROOT", Path(__file__).resolve().parents[1] / "data"))


@pytest.fixture(scope="session")
def toy_tiny(tmp_path_factory):
    """8-node two-cluster bundle with perfectly informative features."""
    return synth.make_tiny_two_cluster(tmp_path_factory.mktemp("bundles") / "tiny")


@pytest.fixture(scope="session")
def toy_sbm(tmp_path_factory):
    """120-node, 3-class stochastic block model bundle."""
    return synth.make_sbm_bundle(tmp_path_factory.mktemp("bundles") / "sbm", seed=11)


def dataset_path(name):
    return DATA_ROOT / name


def require_dataset(name):
    """Skip marker path for tests that need a converted real dataset."""
    path = dataset_path(name)
    if not (path / "manifest.json").is_file():
        pytest.skip(f"dataset bundle {name} not found under {DATA_ROOT} "
                    f"(set BGCN_DATA_ROOT after running the converter)")
    return path
