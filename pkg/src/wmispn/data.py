"""Tabular ingestion: delimited files, schema inference, train/valid/test splits.

Cells are kept as trimmed text until a FeatureSchema interprets them; the
schema records per-column kind (discrete, categorical, continuous) plus the
observed range or value list. Missing cells are the empty string or "?" and
are imputed from training statistics (median for continuous, mode otherwise).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

MISSING = ("", "?")

KIND_DISCRETE = "discrete"
KIND_CATEGORICAL = "categorical"
KIND_CONTINUOUS = "continuous"


@dataclass(frozen=True)
class Dataset:
    """Rows of text cells with column labels; all rows share one arity."""

    column_names: tuple
    rows: tuple

    def __post_init__(self):
        arity = len(self.column_names)
        if arity < 1:
            raise DataError("dataset must have at least one column")
        for i, row in enumerate(self.rows):
            if len(row) != arity:
                raise DataError(f"row {i + 1} has arity {len(row)}, expected {arity}")

    @property
    def n_rows(self):
        return len(self.rows)

    @property
    def n_cols(self):
        return len(self.column_names)

    def column(self, j):
        return [row[j] for row in self.rows]


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: str
    # continuous: observed [minimum, maximum]; discrete/categorical: None
    minimum: float | None = None
    maximum: float | None = None
    # discrete/categorical: ordered duplicate-free values; continuous: None
    values: tuple | None = None

    def __post_init__(self):
        if self.kind == KIND_CONTINUOUS:
            if self.minimum is None or self.maximum is None or not self.minimum < self.maximum:
                raise DataError(f"column {self.name}: continuous range must satisfy min < max")
        elif self.kind in (KIND_DISCRETE, KIND_CATEGORICAL):
            if not self.values or len(set(self.values)) != len(self.values):
                raise DataError(f"column {self.name}: value list must be non-empty and duplicate-free")
        else:
            raise DataError(f"column {self.name}: unknown kind {self.kind!r}")

    @property
    def cardinality(self):
        return len(self.values) if self.values is not None else None


@dataclass(frozen=True)
class FeatureSchema:
    columns: tuple

    def __len__(self):
        return len(self.columns)

    def __iter__(self):
        return iter(self.columns)

    def __getitem__(self, j):
        return self.columns[j]

    def continuous_indices(self):
        return [j for j, c in enumerate(self.columns) if c.kind == KIND_CONTINUOUS]


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.75
    valid_fraction: float = 0.10
    test_fraction: float = 0.15
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train_fraction, self.valid_fraction, self.test_fraction)
        if not all(0.0 < f < 1.0 for f in fracs):
            raise DataError("split fractions must lie in (0, 1)")
        if abs(sum(fracs) - 1.0) > 1e-12:
            raise DataError(f"split fractions sum to {sum(fracs)!r}, expected 1")


def load_csv(path, delimiter=",", has_header=True) -> Dataset:
    """Parse a delimited text file into a Dataset of trimmed text cells.

    Ragged rows raise DataError naming the 1-based line number; blank lines
    are skipped; an empty file is an error.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    records = [(i + 1, line) for i, line in enumerate(lines) if line.strip() != ""]
    if not records:
        raise DataError(f"{path}: file contains no data")
    header = None
    if has_header:
        _, header_line = records[0]
        header = tuple(cell.strip() for cell in header_line.split(delimiter))
        records = records[1:]
        if not records:
            raise DataError(f"{path}: file contains a header but no data rows")
    rows = []
    arity = len(header) if header is not None else None
    for lineno, line in records:
        cells = tuple(cell.strip() for cell in line.split(delimiter))
        if arity is None:
            arity = len(cells)
        if len(cells) != arity:
            raise DataError(f"{path}: line {lineno} has {len(cells)} cells, expected {arity}")
        rows.append(cells)
    if header is None:
        header = tuple(f"col{j}" for j in range(arity))
    return Dataset(column_names=header, rows=tuple(rows))


def _parse_real(cell):
    try:
        v = float(cell)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def _parse_int(cell):
    try:
        return int(cell)
    except ValueError:
        low = cell.lower()
        if low in ("true", "false"):
            return low == "true"
        return None


def infer_schema(dataset: Dataset, categorical_threshold=10) -> FeatureSchema:
    """Infer per-column kinds from cell text.

    A column is continuous iff every non-missing cell parses as a real and
    the distinct-value count exceeds the threshold; otherwise discrete when
    all cells are integers/booleans with few distinct values, else
    categorical. A constant numeric column is demoted to categorical (one
    value) because a zero-width range cannot be binned.
    """
    if dataset.n_rows == 0:
        raise DataError("cannot infer a schema from an empty dataset")
    columns = []
    for j, name in enumerate(dataset.column_names):
        cells = [c for c in dataset.column(j) if c not in MISSING]
        if not cells:
            # all-missing column: keep total by treating the marker as the one value
            columns.append(ColumnSchema(name=name, kind=KIND_CATEGORICAL, values=("?",)))
            continue
        distinct = sorted(set(cells))
        reals = [_parse_real(c) for c in cells]
        all_real = all(v is not None for v in reals)
        if all_real and len(distinct) > categorical_threshold:
            lo, hi = min(reals), max(reals)
            if lo < hi:
                columns.append(ColumnSchema(name=name, kind=KIND_CONTINUOUS, minimum=lo, maximum=hi))
                continue
            # constant column: fall through to a single categorical value
        ints = [_parse_int(c) for c in cells]
        if all(v is not None for v in ints) and len(distinct) <= categorical_threshold:
            ordered = tuple(sorted(set(cells), key=lambda c: (_parse_int(c), c)))
            columns.append(ColumnSchema(name=name, kind=KIND_DISCRETE, values=ordered))
        else:
            columns.append(ColumnSchema(name=name, kind=KIND_CATEGORICAL, values=tuple(distinct)))
    return FeatureSchema(columns=tuple(columns))


def split_indices(n_rows, spec: SplitSpec):
    """Deterministic shuffled partition of range(n_rows) into three index arrays.

    Sizes are floor allocations of the fractions with the remainder assigned
    to train, so the parts are disjoint and their union is everything.
    """
    if n_rows < 3:
        raise DataError("need at least 3 rows to split")
    # epsilon absorbs float noise in n*f so exact fractions floor exactly
    n_valid = math.floor(n_rows * spec.valid_fraction + 1e-9)
    n_test = math.floor(n_rows * spec.test_fraction + 1e-9)
    n_train = n_rows - n_valid - n_test
    perm = np.random.default_rng(spec.seed).permutation(n_rows)
    return (
        perm[:n_train],
        perm[n_train:n_train + n_valid],
        perm[n_train + n_valid:],
    )


def split_dataset(dataset: Dataset, spec: SplitSpec):
    """Split into (train, valid, test) Datasets per split_indices."""
    parts = split_indices(dataset.n_rows, spec)
    return tuple(
        Dataset(column_names=dataset.column_names, rows=tuple(dataset.rows[i] for i in idx))
        for idx in parts
    )


@dataclass(frozen=True)
class ImputeStats:
    """Per-column replacement values for missing cells, from training data."""

    values: tuple

    def fill(self, dataset: Dataset) -> Dataset:
        rows = tuple(
            tuple(self.values[j] if cell in MISSING else cell for j, cell in enumerate(row))
            for row in dataset.rows
        )
        return Dataset(column_names=dataset.column_names, rows=rows)


def imputation_stats(train: Dataset, schema: FeatureSchema) -> ImputeStats:
    """Median for continuous columns, mode (ties broken by value order) otherwise."""
    values = []
    for j, col in enumerate(schema):
        cells = [c for c in train.column(j) if c not in MISSING]
        if col.kind == KIND_CONTINUOUS:
            nums = [_parse_real(c) for c in cells]
            med = float(np.median(nums)) if nums else (col.minimum + col.maximum) / 2.0
            values.append(format(med, ".17g"))
        else:
            if not cells:
                values.append(col.values[0])
            else:
                counts = {}
                for c in cells:
                    counts[c] = counts.get(c, 0) + 1
                order = {v: i for i, v in enumerate(col.values)}
                best = max(counts, key=lambda c: (counts[c], -order.get(c, len(order))))
                values.append(best)
    return ImputeStats(values=tuple(values))


def numeric_column(dataset: Dataset, j, col: ColumnSchema, impute: ImputeStats | None = None):
    """Parse column j as float64, imputing missing cells when stats are given."""
    out = np.empty(dataset.n_rows)
    fallback = impute.values[j] if impute is not None else None
    for i, cell in enumerate(dataset.column(j)):
        if cell in MISSING:
            if fallback is None:
                raise DataError(f"column {col.name}: missing cell at row {i + 1} and no imputation stats")
            cell = fallback
        v = _parse_real(cell)
        if v is None:
            raise DataError(f"column {col.name}: cell {cell!r} at row {i + 1} is not numeric")
        out[i] = v
    return out


def parse_schema_file(path, column_names):
    """Read a sidecar schema: one `name:kind[:min:max]` line per column.

    Lines may appear in any order but must cover exactly the dataset's
    columns. Returns a list of (kind, minimum, maximum) in column order;
    ranges and value lists not given here are filled from training data by
    `schema_from_declarations`.
    """
    entries = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(":")
            if len(parts) not in (2, 4):
                raise DataError(f"{path}: line {lineno}: expected name:kind or name:kind:min:max")
            name, kind = parts[0].strip(), parts[1].strip()
            if kind not in (KIND_DISCRETE, KIND_CATEGORICAL, KIND_CONTINUOUS):
                raise DataError(f"{path}: line {lineno}: unknown kind {kind!r}")
            lo = hi = None
            if len(parts) == 4:
                if kind != KIND_CONTINUOUS:
                    raise DataError(f"{path}: line {lineno}: min/max only apply to continuous columns")
                lo, hi = _parse_real(parts[2]), _parse_real(parts[3])
                if lo is None or hi is None:
                    raise DataError(f"{path}: line {lineno}: bad min/max")
            entries[name] = (kind, lo, hi)
    missing = [n for n in column_names if n not in entries]
    extra = [n for n in entries if n not in column_names]
    if missing or extra:
        raise DataError(f"{path}: schema columns do not match data (missing {missing}, extra {extra})")
    return [entries[name] for name in column_names]


def schema_from_declarations(declarations, train: Dataset) -> FeatureSchema:
    """Build a full FeatureSchema from sidecar declarations plus training data."""
    columns = []
    for j, (kind, lo, hi) in enumerate(declarations):
        name = train.column_names[j]
        cells = [c for c in train.column(j) if c not in MISSING]
        if kind == KIND_CONTINUOUS:
            if lo is None or hi is None:
                reals = [_parse_real(c) for c in cells]
                if not reals or any(v is None for v in reals):
                    raise DataError(f"column {name}: declared continuous but not numeric")
                lo, hi = min(reals), max(reals)
            columns.append(ColumnSchema(name=name, kind=KIND_CONTINUOUS, minimum=lo, maximum=hi))
        elif not cells:
            columns.append(ColumnSchema(name=name, kind=kind, values=("?",)))
        elif kind == KIND_DISCRETE and all(_parse_int(c) is not None for c in cells):
            ordered = tuple(sorted(set(cells), key=lambda c: (_parse_int(c), c)))
            columns.append(ColumnSchema(name=name, kind=kind, values=ordered))
        else:
            columns.append(ColumnSchema(name=name, kind=kind, values=tuple(sorted(set(cells)))))
    return FeatureSchema(columns=tuple(columns))
