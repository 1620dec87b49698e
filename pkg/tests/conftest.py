import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))  # for oracles.py

from neurosoc import datasets  # noqa: E402


@pytest.fixture(scope="session")
def digits():
    """Full-size train/test IDX datasets (cached across sessions)."""
    root = os.environ.get("NEUROSOC_DATA_DIR") or str(
        Path(__file__).resolve().parent.parent / ".dataset-cache")
    train, test, origin = datasets.load_digits(root)
    return train, test, origin


@pytest.fixture(scope="session")
def tiny_digits_dir(tmp_path_factory):
    """A miniature IDX dataset directory for CLI-level tests."""
    root = tmp_path_factory.mktemp("tinydata")
    datasets.generate_synthetic_digits(root, n_train=300, n_test=80, seed=11)
    return root
