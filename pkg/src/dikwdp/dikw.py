"""DIKW data model: tagged items, purpose edges, datasets and privacy-mode masks.

A dataset is a table whose columns are :class:`DikwItem` objects.  Every item
carries one modal (Data, Information, Knowledge, Purpose) and one 5W category;
privacy modes select items by category (or by purpose-edge incidence for PDP).

On disk a dataset is a pair: a comma-separated data file with a header row and
a YAML schema sidecar (``format_version: 1``) mapping each header name to its
tags.
"""
from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import InitVar, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import yaml

FORMAT_VERSION = 1


class DikwError(ValueError):
    """Raised for invalid datasets, schemas or masks."""


class Modal(enum.Enum):
    DATA = "Data"
    INFORMATION = "Information"
    KNOWLEDGE = "Knowledge"
    PURPOSE = "Purpose"


class Category(enum.Enum):
    WHO = "Who"
    WHAT = "What"
    WHEN = "When"
    WHERE = "Where"
    WHY = "Why"
    HOW = "How"
    PURPOSE_TAG = "PurposeTag"


class ValueKind(enum.Enum):
    NUMERIC = "numeric"
    CATEGORICAL = "categorical"


class PrivacyMode(enum.Enum):
    DDP = "DDP"
    IDP = "IDP"
    KDP = "KDP"
    DIDP = "DIDP"
    IKDP = "IKDP"
    DIKDP = "DIKDP"
    PDP = "PDP"


C = Category
MODE_CATEGORIES: dict[PrivacyMode, frozenset[Category]] = {
    PrivacyMode.DDP: frozenset({C.WHO, C.WHEN, C.WHERE}),
    PrivacyMode.IDP: frozenset({C.WHAT}),
    PrivacyMode.KDP: frozenset({C.HOW}),
    PrivacyMode.DIDP: frozenset({C.WHO, C.WHEN, C.WHERE, C.WHAT}),
    PrivacyMode.IKDP: frozenset({C.HOW, C.WHAT}),
    PrivacyMode.DIKDP: frozenset({C.WHO, C.WHAT, C.WHEN, C.WHERE, C.WHY, C.HOW}),
}
del C


def _parse_enum(cls, raw, where: str):
    for member in cls:
        if member.value.lower() == str(raw).lower() or member.name.lower() == str(raw).lower():
            return member
    allowed = ", ".join(m.value for m in cls)
    raise DikwError(f"{where}: unknown {cls.__name__} {raw!r} (expected one of {allowed})")


def parse_mode(raw: str | PrivacyMode) -> PrivacyMode:
    if isinstance(raw, PrivacyMode):
        return raw
    return _parse_enum(PrivacyMode, raw, "mode")


@dataclass(frozen=True)
class DikwItem:
    id: str
    name: str
    modal: Modal
    category: Category
    kind: ValueKind = ValueKind.NUMERIC
    labels: tuple[str, ...] | None = None
    spatial_coord: tuple[float, float] | None = None
    timestamp: int | None = None

    @property
    def is_numeric(self) -> bool:
        return self.kind is ValueKind.NUMERIC


@dataclass(frozen=True)
class PurposeEdge:
    from_item: str
    to_item: str
    label: str = ""


@dataclass(frozen=True, eq=False)
class DikwDataset:
    """Immutable column store.

    ``columns[j]`` holds the values of ``items[j]``: float64 for numeric
    items, a str object array for categorical ones.  Arrays are read-only.
    """

    items: tuple[DikwItem, ...]
    columns: tuple[np.ndarray, ...]
    purpose_edges: tuple[PurposeEdge, ...] = ()
    class_label: str | None = None
    validate: InitVar[bool] = True
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self, validate):
        object.__setattr__(self, "items", tuple(self.items))
        object.__setattr__(self, "purpose_edges", tuple(self.purpose_edges))
        cols = []
        for item, col in zip(self.items, self.columns):
            dtype = float if item.is_numeric else object
            arr = np.array(col, dtype=dtype)
            arr.setflags(write=False)
            cols.append(arr)
        object.__setattr__(self, "columns", tuple(cols))
        object.__setattr__(self, "_index", {it.id: j for j, it in enumerate(self.items)})
        problems = validate_invariants(self) if validate else []
        if problems:
            raise DikwError("; ".join(problems))

    @property
    def n_records(self) -> int:
        return len(self.columns[0]) if self.columns else 0

    @property
    def item_ids(self) -> tuple[str, ...]:
        return tuple(it.id for it in self.items)

    @property
    def records(self) -> list[tuple]:
        return list(zip(*(c.tolist() for c in self.columns)))

    def index(self, item_id: str) -> int:
        try:
            return self._index[item_id]
        except KeyError:
            raise DikwError(f"unknown item id {item_id!r}") from None

    def item(self, item_id: str) -> DikwItem:
        return self.items[self.index(item_id)]

    def column(self, item_id: str) -> np.ndarray:
        return self.columns[self.index(item_id)]

    def with_columns(self, replacements: Mapping[str, np.ndarray]) -> "DikwDataset":
        cols = [replacements.get(it.id, c) for it, c in zip(self.items, self.columns)]
        return DikwDataset(self.items, tuple(cols), self.purpose_edges, self.class_label)

    def subset(self, indices: Sequence[int]) -> "DikwDataset":
        idx = np.asarray(indices, dtype=int)
        return DikwDataset(self.items, tuple(c[idx] for c in self.columns),
                           self.purpose_edges, self.class_label)

    def equals(self, other: "DikwDataset") -> bool:
        if (self.items, self.purpose_edges, self.class_label) != (
                other.items, other.purpose_edges, other.class_label):
            return False
        return all(np.array_equal(a, b) for a, b in zip(self.columns, other.columns))


def validate_invariants(ds: DikwDataset) -> list[str]:
    """Return human-readable violations of the dataset invariants (empty if valid)."""
    problems = []
    if len(ds.items) != len(ds.columns):
        problems.append(f"{len(ds.items)} items but {len(ds.columns)} columns")
    seen = set()
    for it in ds.items:
        if it.id in seen:
            problems.append(f"duplicate item id {it.id!r}")
        seen.add(it.id)
    lengths = {len(c) for c in ds.columns}
    if len(lengths) > 1:
        problems.append(f"ragged columns with lengths {sorted(lengths)}")
    for it, col in zip(ds.items, ds.columns):
        if it.is_numeric:
            bad = np.flatnonzero(~np.isfinite(col))
            if bad.size:
                problems.append(f"item {it.id!r}: non-finite value at record {int(bad[0])}")
        elif it.labels is not None:
            allowed = set(it.labels)
            for r, v in enumerate(col):
                if v not in allowed:
                    problems.append(f"item {it.id!r}: value {v!r} at record {r} not in label set")
                    break
    for e in ds.purpose_edges:
        for end in (e.from_item, e.to_item):
            if end not in seen:
                problems.append(f"purpose edge {e.from_item!r}->{e.to_item!r}: unknown item {end!r}")
        if e.from_item == e.to_item:
            problems.append(f"purpose edge self-loop on {e.from_item!r}")
    if ds.class_label is not None:
        if ds.class_label not in seen:
            problems.append(f"class label {ds.class_label!r} is not an item")
        elif ds.items[[i.id for i in ds.items].index(ds.class_label)].is_numeric:
            problems.append(f"class label {ds.class_label!r} must be categorical")
    return problems


# --------------------------------------------------------------------------- masks

@dataclass(frozen=True)
class MaskPlan:
    """Which items receive DP noise, in dataset item order."""

    item_ids: tuple[str, ...]
    selected: tuple[bool, ...]

    def __post_init__(self):
        object.__setattr__(self, "item_ids", tuple(self.item_ids))
        object.__setattr__(self, "selected", tuple(bool(s) for s in self.selected))
        if len(self.item_ids) != len(self.selected):
            raise DikwError("mask length does not match item ids")

    @classmethod
    def from_ids(cls, dataset: DikwDataset, ids: Iterable[str]) -> "MaskPlan":
        wanted = set(ids)
        unknown = wanted - set(dataset.item_ids)
        if unknown:
            raise DikwError(f"mask names unknown items {sorted(unknown)}")
        if dataset.class_label in wanted:
            raise DikwError(f"class label {dataset.class_label!r} cannot be selected")
        return cls(dataset.item_ids, tuple(i in wanted for i in dataset.item_ids))

    @classmethod
    def empty(cls, dataset: DikwDataset) -> "MaskPlan":
        return cls(dataset.item_ids, (False,) * len(dataset.items))

    @property
    def selected_ids(self) -> tuple[str, ...]:
        return tuple(i for i, s in zip(self.item_ids, self.selected) if s)

    @property
    def count(self) -> int:
        return sum(self.selected)

    def as_array(self) -> np.ndarray:
        return np.array(self.selected, dtype=bool)

    def __or__(self, other: "MaskPlan") -> "MaskPlan":
        self._check_compatible(other)
        return MaskPlan(self.item_ids, tuple(a or b for a, b in zip(self.selected, other.selected)))

    def __and__(self, other: "MaskPlan") -> "MaskPlan":
        self._check_compatible(other)
        return MaskPlan(self.item_ids, tuple(a and b for a, b in zip(self.selected, other.selected)))

    def issuperset(self, other: "MaskPlan") -> bool:
        self._check_compatible(other)
        return all(a or not b for a, b in zip(self.selected, other.selected))

    def _check_compatible(self, other: "MaskPlan"):
        if self.item_ids != other.item_ids:
            raise DikwError("masks cover different item ids")


def check_mask(dataset: DikwDataset, mask: MaskPlan) -> None:
    if mask.item_ids != dataset.item_ids:
        raise DikwError("mask does not cover exactly the dataset's items")
    if dataset.class_label is not None and mask.selected[dataset.index(dataset.class_label)]:
        raise DikwError(f"class label {dataset.class_label!r} is selected")


def mode_mask(dataset: DikwDataset, mode: PrivacyMode | str) -> MaskPlan:
    mode = parse_mode(mode)
    if mode is PrivacyMode.PDP:
        incident = {e.from_item for e in dataset.purpose_edges} | {e.to_item for e in dataset.purpose_edges}
        chosen = [it.id in incident for it in dataset.items]
    else:
        cats = MODE_CATEGORIES[mode]
        chosen = [it.category in cats for it in dataset.items]
    if dataset.class_label is not None:
        chosen[dataset.index(dataset.class_label)] = False
    return MaskPlan(dataset.item_ids, tuple(chosen))


# --------------------------------------------------------------------------- I/O

def _parse_value(raw: str, item: DikwItem, row: int, col: int):
    if item.is_numeric:
        try:
            v = float(raw)
        except ValueError:
            raise DikwError(f"row {row}, column {col} ({item.id!r}): {raw!r} is not numeric") from None
        if not math.isfinite(v):
            raise DikwError(f"row {row}, column {col} ({item.id!r}): non-finite value {raw!r}")
        return v
    if item.labels is not None and raw not in item.labels:
        raise DikwError(f"row {row}, column {col} ({item.id!r}): label {raw!r} not declared")
    return raw


def _item_from_schema(header: str, entry: Mapping) -> DikwItem:
    where = f"schema column {header!r}"
    if not isinstance(entry, Mapping):
        raise DikwError(f"{where}: expected a mapping")
    for key in ("modal", "category"):
        if key not in entry:
            raise DikwError(f"{where}: missing {key!r}")
    kind = _parse_enum(ValueKind, entry.get("kind", "numeric"), where)
    labels = entry.get("labels")
    if labels is not None:
        labels = tuple(str(x) for x in labels)
    spatial = entry.get("spatial")
    if spatial is not None:
        if len(spatial) != 2:
            raise DikwError(f"{where}: spatial must be a pair")
        spatial = (float(spatial[0]), float(spatial[1]))
    ts = entry.get("timestamp")
    return DikwItem(
        id=str(entry.get("id", header)),
        name=header,
        modal=_parse_enum(Modal, entry["modal"], where),
        category=_parse_enum(Category, entry["category"], where),
        kind=kind,
        labels=labels,
        spatial_coord=spatial,
        timestamp=None if ts is None else int(ts),
    )


def read_schema(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        schema = yaml.safe_load(fh) or {}
    version = schema.get("format_version")
    if version != FORMAT_VERSION:
        raise DikwError(f"{path}: unsupported schema format_version {version!r}")
    if not isinstance(schema.get("columns"), Mapping):
        raise DikwError(f"{path}: schema needs a 'columns' mapping")
    return schema


def load_dataset(data_file: str | Path, schema_file: str | Path) -> DikwDataset:
    """Read a data file and its schema sidecar into a validated dataset."""
    schema = read_schema(schema_file)
    with open(data_file, encoding="utf-8", newline="") as fh:
        text = fh.read()
    lines = text.splitlines()
    if lines and lines[0].startswith("#"):
        tag = lines[0].lstrip("#").strip()
        if tag.startswith("format_version"):
            version = tag.split(":", 1)[1].strip()
            if version != str(FORMAT_VERSION):
                raise DikwError(f"{data_file}: unsupported data format_version {version!r}")
        lines = lines[1:]
    reader = csv.reader(lines)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DikwError(f"{data_file}: missing header row") from None

    columns_schema = schema["columns"]
    items = []
    for col, name in enumerate(header):
        if name not in columns_schema:
            raise DikwError(f"column {col} ({name!r}) has no schema entry")
        items.append(_item_from_schema(name, columns_schema[name]))
    ids = [it.id for it in items]
    for col, item_id in enumerate(ids):
        if ids.index(item_id) != col:
            raise DikwError(f"duplicate item id {item_id!r} at columns {ids.index(item_id)} and {col}")

    values: list[list] = [[] for _ in items]
    for row, rec in enumerate(reader, start=1):
        if not rec:
            continue
        if len(rec) != len(items):
            raise DikwError(f"row {row}: expected {len(items)} values, found {len(rec)}")
        for col, (raw, item) in enumerate(zip(rec, items)):
            values[col].append(_parse_value(raw.strip(), item, row, col))

    # undeclared label sets are inferred from the data
    items = [
        replace(it, labels=tuple(sorted(set(vals)))) if not it.is_numeric and it.labels is None else it
        for it, vals in zip(items, values)
    ]
    edges = []
    for k, e in enumerate(schema.get("purpose_edges") or []):
        try:
            edges.append(PurposeEdge(str(e["from"]), str(e["to"]), str(e.get("label", ""))))
        except (KeyError, TypeError):
            raise DikwError(f"purpose edge {k}: needs 'from' and 'to'") from None
    return DikwDataset(tuple(items), tuple(values), tuple(edges), schema.get("class_label"))


def schema_dict(dataset: DikwDataset) -> dict:
    columns = {}
    for it in dataset.items:
        entry = {"modal": it.modal.value, "category": it.category.value, "kind": it.kind.value}
        if it.id != it.name:
            entry["id"] = it.id
        if it.labels is not None:
            entry["labels"] = list(it.labels)
        if it.spatial_coord is not None:
            entry["spatial"] = [float(it.spatial_coord[0]), float(it.spatial_coord[1])]
        if it.timestamp is not None:
            entry["timestamp"] = int(it.timestamp)
        columns[it.name] = entry
    out = {"format_version": FORMAT_VERSION, "columns": columns}
    if dataset.class_label is not None:
        out["class_label"] = dataset.class_label
    if dataset.purpose_edges:
        out["purpose_edges"] = [
            {"from": e.from_item, "to": e.to_item, "label": e.label} for e in dataset.purpose_edges
        ]
    return out


def data_text(dataset: DikwDataset) -> str:
    buf = io.StringIO()
    buf.write(f"# format_version: {FORMAT_VERSION}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([it.name for it in dataset.items])
    for rec in dataset.records:
        writer.writerow([repr(float(v)) if it.is_numeric else v for it, v in zip(dataset.items, rec)])
    return buf.getvalue()


def save_dataset(dataset: DikwDataset, data_file: str | Path, schema_file: str | Path) -> None:
    Path(data_file).write_text(data_text(dataset), encoding="utf-8")
    with open(schema_file, "w", encoding="utf-8") as fh:
        yaml.safe_dump(schema_dict(dataset), fh, sort_keys=False)
