from pathlib import Path

import numpy as np
import pytest

from dikwdp.dikw import Category, DikwDataset, DikwItem, Modal, PurposeEdge, ValueKind
from dikwdp.generate import generate_iris_dikw

DATA_DIR = Path(__file__).resolve().parents[1] / "src" / "dikwdp" / "data"


@pytest.fixture(scope="session")
def iris_dikw():
    return generate_iris_dikw()


@pytest.fixture(scope="session")
def iris_files():
    return DATA_DIR / "iris.csv", DATA_DIR / "iris_schema.yaml"


def make_dataset(categories, n=6, seed=0, edges=(), label=True):
    """One numeric item per category (ids c0, c1, ...) plus an optional class column."""
    rng = np.random.default_rng(seed)
    items = [DikwItem(f"c{k}", f"c{k}", Modal.DATA, cat) for k, cat in enumerate(categories)]
    cols = [rng.normal(size=n) for _ in items]
    if label:
        items.append(DikwItem("y", "y", Modal.KNOWLEDGE, Category.WHAT, ValueKind.CATEGORICAL, ("a", "b")))
        cols.append(np.array(["a", "b"] * (n // 2) + ["a"] * (n % 2), dtype=object))
    return DikwDataset(tuple(items), tuple(cols), tuple(PurposeEdge(*e) for e in edges),
                       "y" if label else None)
