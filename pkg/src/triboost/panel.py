"""Panel data model: product-week rows, week groups, and CSV I/O.

A dataset is an ordered panel of product-week records.  Rows are sorted by
``(week_index, product_id)``.  The first ``m`` rows are historical (they
carry actual sales); the remaining rows are future rows that instead carry a
known weekly category total.  Rows of one week form a :class:`WeekGroup`,
the coupling unit used by the sum-constrained objectives.

Datasets are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    ConstraintDataError,
    OrderingError,
    SchemaError,
    ValidationError,
)


@dataclass(frozen=True, eq=False)
class PanelRecord:
    """One product-week row.

    ``actual_sales`` is present exactly when the row is historical.
    """

    product_id: str
    week_index: int
    features: np.ndarray
    actual_sales: float | None = None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PanelRecord):
            return NotImplemented
        return (
            self.product_id == other.product_id
            and self.week_index == other.week_index
            and self.actual_sales == other.actual_sales
            and np.array_equal(self.features, other.features)
        )


@dataclass(frozen=True)
class WeekGroup:
    """All rows of one calendar week plus that week's category total.

    For historical weeks the total is the exact member-order sum of actual
    sales; for future weeks it is the externally supplied total.
    """

    week_index: int
    member_indices: tuple[int, ...]
    count: int
    category_total: float
    is_future: bool

    def __post_init__(self) -> None:
        if self.count != len(self.member_indices) or self.count < 1:
            raise ValidationError(
                f"week {self.week_index}: count {self.count} does not match "
                f"{len(self.member_indices)} member rows"
            )


@dataclass(frozen=True, eq=False)
class GroupLayout:
    """Compiled array view of a dataset's week groups.

    Groups are contiguous, ordered slices of the row axis, so weekly
    aggregates reduce to segmented sums.  Pure data; safe to share.
    """

    starts: np.ndarray
    counts: np.ndarray
    totals: np.ndarray
    weeks: np.ndarray
    is_future: np.ndarray
    n: int

    @classmethod
    def from_groups(cls, groups: Sequence[WeekGroup], n: int | None = None) -> "GroupLayout":
        if not groups:
            raise ValidationError("cannot build a group layout from zero groups")
        if n is None:
            n = sum(g.count for g in groups)
        starts, counts, totals, weeks, future = [], [], [], [], []
        expected = 0
        for g in groups:
            if list(g.member_indices) != list(range(expected, expected + g.count)):
                raise ValidationError(
                    f"week {g.week_index}: member rows are not a contiguous slice"
                )
            starts.append(expected)
            counts.append(g.count)
            totals.append(g.category_total)
            weeks.append(g.week_index)
            future.append(g.is_future)
            expected += g.count
        if expected != n:
            raise ValidationError(f"groups cover {expected} rows, dataset has {n}")
        return cls(
            starts=np.asarray(starts, dtype=np.intp),
            counts=np.asarray(counts, dtype=np.intp),
            totals=np.asarray(totals, dtype=np.float64),
            weeks=np.asarray(weeks, dtype=np.intp),
            is_future=np.asarray(future, dtype=bool),
            n=int(n),
        )

    def weekly_sums(self, values: np.ndarray) -> np.ndarray:
        """Per-week sums of a row-aligned vector."""
        return np.add.reduceat(np.asarray(values, dtype=np.float64), self.starts)

    def residuals(self, preds: np.ndarray) -> np.ndarray:
        """Per-week ``category_total - sum(preds)``."""
        return self.totals - self.weekly_sums(preds)

    def expand(self, weekly_values: np.ndarray) -> np.ndarray:
        """Broadcast one value per week back to row alignment."""
        return np.repeat(np.asarray(weekly_values, dtype=np.float64), self.counts)


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """Immutable panel of records with week groups and the historical split.

    Rows ``0..m-1`` are historical, ``m..n-1`` are future.  Use
    :meth:`from_records` or :func:`load_panel_csv` to construct one; both
    enforce all invariants.
    """

    records: tuple[PanelRecord, ...]
    m: int
    n: int
    groups: tuple[WeekGroup, ...]
    feature_names: tuple[str, ...]

    @classmethod
    def from_records(
        cls,
        records: Sequence[PanelRecord],
        feature_names: Sequence[str],
        future_totals: Mapping[int, float] | None = None,
    ) -> "PanelDataset":
        records = tuple(records)
        if not records:
            raise ValidationError("dataset has no rows")
        k = len(feature_names)
        keys = []
        for i, r in enumerate(records):
            if r.week_index < 0:
                raise ValidationError(f"row {i}: negative week index {r.week_index}")
            if r.features.shape != (k,):
                raise ValidationError(
                    f"row {i}: expected {k} features, got {r.features.shape}"
                )
            if not np.all(np.isfinite(r.features)):
                raise ValidationError(
                    f"row {i} (product {r.product_id}, week {r.week_index}): "
                    "non-finite feature value"
                )
            if r.actual_sales is not None:
                if not np.isfinite(r.actual_sales) or r.actual_sales < 0:
                    raise ValidationError(
                        f"row {i}: actual sales must be finite and >= 0, "
                        f"got {r.actual_sales}"
                    )
            keys.append((r.week_index, r.product_id))
        if keys != sorted(keys):
            raise OrderingError("records must be sorted by (week_index, product_id)")
        if len(set(keys)) != len(keys):
            raise ValidationError("duplicate (week, product) rows")

        m = sum(1 for r in records if r.actual_sales is not None)
        if m < 1:
            raise ValidationError("dataset needs at least one historical row")
        for i, r in enumerate(records):
            if (r.actual_sales is not None) != (i < m):
                raise OrderingError(
                    "historical rows (with sales) must form a contiguous prefix; "
                    f"row {i} (week {r.week_index}) breaks it"
                )
        if m < len(records) and records[m - 1].week_index == records[m].week_index:
            raise OrderingError(
                f"week {records[m].week_index} mixes historical and future rows"
            )

        groups = build_week_groups(records, m, future_totals or {})
        return cls(
            records=records,
            m=m,
            n=len(records),
            groups=tuple(groups),
            feature_names=tuple(feature_names),
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PanelDataset):
            return NotImplemented
        return (
            self.m == other.m
            and self.n == other.n
            and self.feature_names == other.feature_names
            and self.groups == other.groups
            and all(a == b for a, b in zip(self.records, other.records))
        )

    @cached_property
    def features(self) -> np.ndarray:
        """Row-major feature matrix of shape (n, num_features). Read-only."""
        x = np.vstack([r.features for r in self.records]).astype(np.float64)
        x.setflags(write=False)
        return x

    @cached_property
    def actuals(self) -> np.ndarray:
        """Actual sales of the historical rows, length m. Read-only."""
        y = np.asarray([r.actual_sales for r in self.records[: self.m]], dtype=np.float64)
        y.setflags(write=False)
        return y

    @cached_property
    def week_of_row(self) -> np.ndarray:
        w = np.asarray([r.week_index for r in self.records], dtype=np.intp)
        w.setflags(write=False)
        return w

    @cached_property
    def layout(self) -> GroupLayout:
        return GroupLayout.from_groups(self.groups, self.n)

    def future_groups(self) -> tuple[WeekGroup, ...]:
        return tuple(g for g in self.groups if g.is_future)


def build_week_groups(
    records: Sequence[PanelRecord],
    m: int,
    future_totals: Mapping[int, float],
) -> list[WeekGroup]:
    """Partition sorted records into one group per week.

    Historical group totals are member-order sums of actual sales (members
    are ordered by product id, matching the dataset row order); future group
    totals come from ``future_totals``.
    """
    groups: list[WeekGroup] = []
    i = 0
    n = len(records)
    while i < n:
        week = records[i].week_index
        j = i
        while j < n and records[j].week_index == week:
            j += 1
        is_future = i >= m
        if is_future:
            if week not in future_totals:
                raise ConstraintDataError(
                    f"future week {week} has no category total"
                )
            total = float(future_totals[week])
            if not np.isfinite(total) or total < 0:
                raise ConstraintDataError(
                    f"future week {week}: category total must be finite and >= 0"
                )
        else:
            total = 0.0
            for r in records[i:j]:  # member order: deterministic accumulation
                total += float(r.actual_sales)
        groups.append(
            WeekGroup(
                week_index=week,
                member_indices=tuple(range(i, j)),
                count=j - i,
                category_total=total,
                is_future=is_future,
            )
        )
        i = j
    return groups


@dataclass(frozen=True)
class CsvSchema:
    """Column-name mapping for panel CSV files.

    ``features`` of None means: every unmapped column, in file order.  A
    column named ``category`` (or the one named here) is checked for
    single-category consistency and excluded from features.
    """

    product: str = "product_id"
    week: str = "week"
    sales: str = "sales"
    category_total: str = "category_total"
    features: tuple[str, ...] | None = None
    category: str | None = None


def load_panel_csv(
    paths: str | Path | Sequence[str | Path], schema: CsvSchema | None = None
) -> PanelDataset:
    """Load one or more panel CSVs into a single validated :class:`PanelDataset`.

    Multiple files (e.g. a historical file and a future file) are
    concatenated before sorting.  Each file must have a header naming the
    product, week, sales, and category-total columns per ``schema``.  Sales
    are blank on future rows; category totals are required on future rows
    and ignored on historical ones.  Rows are sorted, the historical prefix
    is inferred from sales presence, and all dataset invariants are
    enforced.
    """
    schema = schema or CsvSchema()
    if isinstance(paths, (str, Path)):
        paths = [paths]
    if not paths:
        raise ValidationError("no input files given")

    feature_names: list[str] | None = None
    parsed: list[tuple[int, str, float | None, float | None, np.ndarray]] = []
    categories: set[str] = set()
    for path in paths:
        names = _read_panel_file(Path(path), schema, parsed, categories)
        if feature_names is None:
            feature_names = names
        elif names != feature_names:
            raise SchemaError(
                f"{path}: feature columns {names} do not match {feature_names}"
            )

    if len(categories) > 1:
        raise ValidationError(
            f"multiple categories {sorted(categories)}; one category per dataset"
        )

    parsed.sort(key=lambda item: (item[0], item[1]))
    records = [
        PanelRecord(product_id=p, week_index=w, features=f, actual_sales=s)
        for w, p, s, _, f in parsed
    ]

    future_totals: dict[int, float] = {}
    for (week, product, sales, total, _) in parsed:
        if sales is not None:
            continue
        if total is None:
            raise ConstraintDataError(
                f"future row (product {product}, week {week}) lacks a category total"
            )
        if week in future_totals and future_totals[week] != total:
            raise ConstraintDataError(
                f"week {week} carries conflicting category totals "
                f"{future_totals[week]} and {total}"
            )
        future_totals.setdefault(week, total)

    return PanelDataset.from_records(records, feature_names, future_totals)


def _read_panel_file(
    path: Path,
    schema: CsvSchema,
    parsed: list,
    categories: set[str],
) -> list[str]:
    """Parse one CSV into ``parsed`` (week, product, sales, total, features)
    tuples; returns the feature column names found."""
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise SchemaError(f"{path}: empty file, header required")
            rows = list(reader)
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc

    col = {name: i for i, name in enumerate(header)}
    for required in (schema.product, schema.week, schema.sales, schema.category_total):
        if required not in col:
            raise SchemaError(f"{path}: missing required column '{required}'")
    category_col = schema.category
    if category_col is None and "category" in col:
        category_col = "category"
    reserved = {schema.product, schema.week, schema.sales, schema.category_total}
    if category_col is not None:
        if category_col not in col:
            raise SchemaError(f"{path}: missing category column '{category_col}'")
        reserved.add(category_col)
    if schema.features is None:
        feature_names = [name for name in header if name not in reserved]
    else:
        feature_names = list(schema.features)
        for name in feature_names:
            if name not in col:
                raise SchemaError(f"{path}: missing feature column '{name}'")

    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise ValidationError(
                f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
            )
        product = row[col[schema.product]]
        week = _parse_int(row[col[schema.week]], path, lineno, schema.week)
        sales_text = row[col[schema.sales]].strip()
        sales = None if sales_text == "" else _parse_float(sales_text, path, lineno, schema.sales)
        total_text = row[col[schema.category_total]].strip()
        total = None if total_text == "" else _parse_float(total_text, path, lineno, schema.category_total)
        feats = np.asarray(
            [_parse_float(row[col[name]], path, lineno, name) for name in feature_names],
            dtype=np.float64,
        )
        if category_col is not None:
            categories.add(row[col[category_col]])
        parsed.append((week, product, sales, total, feats))

    return feature_names


def save_panel_csv(
    dataset: PanelDataset,
    path: str | Path,
    schema: CsvSchema | None = None,
    rows: Iterable[int] | None = None,
) -> None:
    """Write a dataset (or a row subset) to CSV in the canonical column order.

    Floats are written with ``repr`` so a reload reproduces the dataset
    field-for-field.
    """
    schema = schema or CsvSchema()
    if schema.features is not None and tuple(schema.features) != dataset.feature_names:
        raise ValidationError("schema feature names do not match the dataset")
    totals = {g.week_index: g.category_total for g in dataset.groups if g.is_future}
    indices = range(dataset.n) if rows is None else rows
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [schema.product, schema.week, schema.sales, schema.category_total]
            + list(dataset.feature_names)
        )
        for i in indices:
            r = dataset.records[i]
            sales = "" if r.actual_sales is None else repr(float(r.actual_sales))
            total = "" if i < dataset.m else repr(totals[r.week_index])
            writer.writerow(
                [r.product_id, str(r.week_index), sales, total]
                + [repr(float(v)) for v in r.features]
            )


def _parse_int(text: str, path: Path, lineno: int, colname: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ValidationError(
            f"{path}:{lineno}: column '{colname}': not an integer: {text!r}"
        ) from None


def _parse_float(text: str, path: Path, lineno: int, colname: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ValidationError(
            f"{path}:{lineno}: column '{colname}': not a number: {text!r}"
        ) from None
    return value
