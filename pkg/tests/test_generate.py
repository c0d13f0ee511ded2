import numpy as np
import pytest

from dikwdp.dikw import Category, DikwDataset, DikwError, DikwItem, Modal, PurposeEdge
from dikwdp.generate import (DerivedColumn, GenSpec, eval_formula, generate_iris_dikw, read_iris,
                             validate_generated)

from conftest import DATA_DIR


def test_shape(iris_dikw):
    assert iris_dikw.n_records == 150
    modals = [it.modal for it in iris_dikw.items if it.id != "species"]
    assert modals.count(Modal.DATA) == 4
    assert modals.count(Modal.INFORMATION) == 2
    assert modals.count(Modal.KNOWLEDGE) == 1
    assert iris_dikw.class_label == "species"
    assert {e.from_item for e in iris_dikw.purpose_edges} == {"petal_ratio", "sepal_ratio"}


def test_deterministic():
    a, b = generate_iris_dikw(GenSpec(seed=5)), generate_iris_dikw(GenSpec(seed=5))
    assert a.equals(b)
    c = generate_iris_dikw(GenSpec(seed=6))
    assert a.item("sepal_len").timestamp != c.item("sepal_len").timestamp


def test_raw_columns_pass_through(iris_dikw):
    raw, labels = read_iris(DATA_DIR / "iris.csv")
    for name, col in raw.items():
        assert np.array_equal(iris_dikw.column(name), col)
    assert iris_dikw.column("species").tolist() == labels.tolist()


def test_derived_columns_recomputed(iris_dikw):
    # recompute straight from the csv text, independent of the generator's evaluator
    rows = (DATA_DIR / "iris.csv").read_text().splitlines()[1:]
    vals = [[float(x) for x in r.split(",")[:4]] for r in rows]
    assert iris_dikw.column("petal_ratio").tolist() == [r[2] / r[3] for r in vals]
    assert iris_dikw.column("sepal_ratio").tolist() == [r[0] / r[1] for r in vals]


def test_knowledge_is_distance_to_a_centroid(iris_dikw):
    d = iris_dikw.column("centroid_dist")
    assert np.all(d >= 0)
    # distances to the nearest class centroid sit well inside the spread around the overall mean
    X = np.column_stack([iris_dikw.column(c) for c in ("sepal_len", "sepal_wid", "petal_len", "petal_wid")])
    assert np.median(d) < np.median(np.linalg.norm(X - X.mean(axis=0), axis=1))


def test_headerless_source_with_prefix(tmp_path):
    src = tmp_path / "raw.csv"
    src.write_text("5.1,3.5,1.4,0.2,Iris-setosa\n7.0,3.2,4.7,1.4,Iris-versicolor\n6.3,3.3,6.0,2.5,Iris-virginica\n")
    ds = generate_iris_dikw(GenSpec(source_file=str(src), knowledge_subsample=1.0))
    assert ds.n_records == 3
    assert ds.column("species").tolist() == ["setosa", "versicolor", "virginica"]
    assert np.allclose(ds.column("centroid_dist"), 0.0)


class TestValidate:
    def test_generated_is_clean(self, iris_dikw):
        assert validate_generated(iris_dikw).violations == []

    def test_all_what_flags_missing_modes(self):
        spec = GenSpec(data_tags=tuple((c, Category.WHAT) for c in
                                       ("sepal_len", "sepal_wid", "petal_len", "petal_wid")),
                       knowledge_column=None)
        report = validate_generated(generate_iris_dikw(spec))
        text = "\n".join(report.violations)
        assert not report.ok
        assert "DDP" in text and "KDP" in text and "IDP" not in text
        assert "Knowledge" in text

    def test_dangling_edge_reported(self):
        items = (DikwItem("a", "a", Modal.DATA, Category.WHO), DikwItem("b", "b", Modal.INFORMATION, Category.WHAT))
        ds = DikwDataset(items, (np.zeros(3), np.ones(3)), (PurposeEdge("a", "ghost"),), validate=False)
        report = validate_generated(ds)
        assert any("a" in v and "ghost" in v for v in report.violations)


def test_bad_formula():
    with pytest.raises(DikwError, match="unknown column 'nope'"):
        generate_iris_dikw(GenSpec(derived_columns=(DerivedColumn("r", "nope / petal_wid"),)))
    with pytest.raises(DikwError, match="unsupported"):
        eval_formula("petal_len.real", {"petal_len": np.ones(2)})
    with pytest.raises(DikwError, match="cannot parse"):
        eval_formula("1 +", {"x": np.ones(2)})


def test_eval_formula_arithmetic():
    cols = {"a": np.array([1.0, 2.0]), "b": np.array([4.0, 8.0])}
    assert eval_formula("-a + b ** 0.5 * 2 - 1", cols).tolist() == [-1 + 2 * 2 - 1, -2 + 2 * 8 ** 0.5 - 1]
    assert eval_formula("3", cols).tolist() == [3.0, 3.0]
