"""Synthesis of the extended Iris DIKW dataset.

The raw Iris measurements become Data items; ratios of them become
Information items; a per-record distance to the nearest class centroid
(fitted on a seeded half of the records) becomes the Knowledge item.
Purpose edges link each derived Information column to its source columns.

This is one admissible DIKW enhancement of Iris, not a published benchmark.
"""
from __future__ import annotations

import ast
import csv
import operator
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .dikw import (Category, DikwDataset, DikwError, DikwItem, Modal, PrivacyMode, PurposeEdge,
                   ValueKind, mode_mask, validate_invariants)
from .rng import stream

BASE_EPOCH = 1_577_836_800  # 2020-01-01T00:00:00Z
IRIS_COLUMNS = ("sepal_len", "sepal_wid", "petal_len", "petal_wid")


def default_iris_path() -> Path:
    return Path(str(resources.files("dikwdp") / "data" / "iris.csv"))


@dataclass(frozen=True)
class DerivedColumn:
    name: str
    formula: str
    modal: Modal = Modal.INFORMATION
    category: Category = Category.WHAT


@dataclass(frozen=True)
class GenSpec:
    source_file: str | None = None
    seed: int = 0
    derived_columns: tuple[DerivedColumn, ...] = (
        DerivedColumn("petal_ratio", "petal_len / petal_wid"),
        DerivedColumn("sepal_ratio", "sepal_len / sepal_wid"),
    )
    data_tags: tuple[tuple[str, Category], ...] = (
        ("sepal_len", Category.WHERE),
        ("sepal_wid", Category.WHERE),
        ("petal_len", Category.WHEN),
        ("petal_wid", Category.WHEN),
    )
    knowledge_column: str | None = "centroid_dist"
    knowledge_subsample: float = 0.5
    spatial_jitter: float = 0.1
    time_span: int = 86_400 * 365
    label_column: str = "species"


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}


def formula_names(formula: str) -> set[str]:
    return {n.id for n in ast.walk(ast.parse(formula, mode="eval")) if isinstance(n, ast.Name)}


def eval_formula(formula: str, columns: dict[str, np.ndarray]) -> np.ndarray:
    """Evaluate an arithmetic expression (+ - * / **, unary minus, constants) over named columns."""

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = ev(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id not in columns:
                raise DikwError(f"formula {formula!r} references unknown column {node.id!r}")
            return columns[node.id]
        raise DikwError(f"unsupported expression in formula {formula!r}")

    try:
        tree = ast.parse(formula, mode="eval")
    except SyntaxError as exc:
        raise DikwError(f"cannot parse formula {formula!r}: {exc.msg}") from None
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.asarray(ev(tree), dtype=float)
    return np.broadcast_to(out, next(iter(columns.values())).shape).copy()


def read_iris(path: str | Path) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Four numeric columns and a class column; a header row is optional."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if rows:
        try:
            float(rows[0][0])
        except ValueError:
            rows = rows[1:]
    values, labels = [], []
    for k, r in enumerate(rows, start=1):
        if len(r) != 5:
            raise DikwError(f"{path}: row {k} has {len(r)} fields, expected 5")
        try:
            values.append([float(x) for x in r[:4]])
        except ValueError:
            raise DikwError(f"{path}: row {k} has a non-numeric measurement") from None
        labels.append(r[4].strip().removeprefix("Iris-"))
    arr = np.array(values, dtype=float).reshape(-1, 4)
    return {name: arr[:, j] for j, name in enumerate(IRIS_COLUMNS)}, np.array(labels, dtype=object)


def _centroid_distance(raw: dict[str, np.ndarray], labels: np.ndarray, fraction: float,
                       rng: np.random.Generator) -> np.ndarray:
    X = np.column_stack([raw[c] for c in IRIS_COLUMNS])
    n = X.shape[0]
    fit = rng.permutation(n)[: max(1, int(round(fraction * n)))]
    centroids = [X[fit][labels[fit] == c].mean(axis=0)
                 for c in sorted(set(labels[fit].tolist()))]
    dist = np.stack([np.linalg.norm(X - c, axis=1) for c in centroids], axis=1)
    return dist.min(axis=1)


def generate_iris_dikw(spec: GenSpec = GenSpec()) -> DikwDataset:
    source = spec.source_file or default_iris_path()
    raw, labels = read_iris(source)

    known = set(raw)
    for d in spec.derived_columns:
        missing = formula_names(d.formula) - known
        if missing:
            raise DikwError(f"derived column {d.name!r} references unknown column {sorted(missing)[0]!r}")
        known.add(d.name)

    meta_rng = stream(spec.seed, "gen", "metadata")
    knowledge_rng = stream(spec.seed, "gen", "knowledge")

    def metadata(level: int, k: int):
        jitter = meta_rng.normal(0.0, spec.spatial_jitter, size=2) if spec.spatial_jitter > 0 else (0.0, 0.0)
        coord = (float(k + jitter[0]), float(level + jitter[1]))
        ts = BASE_EPOCH + int(meta_rng.integers(0, max(spec.time_span, 1)))
        return coord, ts

    items, columns = [], []
    tags = dict(spec.data_tags)
    for k, name in enumerate(IRIS_COLUMNS):
        coord, ts = metadata(0, k)
        items.append(DikwItem(name, name, Modal.DATA, tags.get(name, Category.WHO),
                              spatial_coord=coord, timestamp=ts))
        columns.append(raw[name])

    env = dict(raw)
    edges = []
    for k, d in enumerate(spec.derived_columns):
        values = eval_formula(d.formula, env)
        env[d.name] = values
        level = {Modal.DATA: 0, Modal.INFORMATION: 1, Modal.KNOWLEDGE: 2}.get(d.modal, 3)
        coord, ts = metadata(level, k)
        items.append(DikwItem(d.name, d.name, d.modal, d.category, spatial_coord=coord, timestamp=ts))
        columns.append(values)
        for src in sorted(formula_names(d.formula), key=lambda s: list(env).index(s)):
            edges.append(PurposeEdge(d.name, src, "derived_from"))

    if spec.knowledge_column:
        coord, ts = metadata(2, 0)
        items.append(DikwItem(spec.knowledge_column, spec.knowledge_column, Modal.KNOWLEDGE, Category.HOW,
                              spatial_coord=coord, timestamp=ts))
        columns.append(_centroid_distance(raw, labels, spec.knowledge_subsample, knowledge_rng))

    label_set = tuple(sorted(set(labels.tolist())))
    items.append(DikwItem(spec.label_column, spec.label_column, Modal.KNOWLEDGE, Category.WHAT,
                          kind=ValueKind.CATEGORICAL, labels=label_set))
    columns.append(labels)
    return DikwDataset(tuple(items), tuple(columns), tuple(edges), spec.label_column)


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_generated(dataset: DikwDataset) -> ValidationReport:
    """Dataset invariants plus: every modal populated and DDP/IDP/KDP supports non-empty."""
    report = ValidationReport(list(validate_invariants(dataset)))
    modals = {it.modal for it in dataset.items if it.id != dataset.class_label}
    for modal in (Modal.DATA, Modal.INFORMATION, Modal.KNOWLEDGE):
        if modal not in modals:
            report.violations.append(f"modal {modal.value} has no items")
    for mode in (PrivacyMode.DDP, PrivacyMode.IDP, PrivacyMode.KDP):
        if mode_mask(dataset, mode).count == 0:
            report.violations.append(f"mode {mode.value} has an empty support")
    return report
