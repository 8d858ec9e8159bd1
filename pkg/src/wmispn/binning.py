"""Equal-width binning and one-hot encoding of hybrid rows.

Continuous columns are cut into equal-width bins over the observed training
range; each bin becomes one indicator column. Discrete/categorical columns
contribute one indicator per value. Bins are half-open [e_j, e_{j+1}) except
the last, which is closed so the training maximum stays representable.
Values outside the training range (possible on validation/test data) clamp
to the nearest terminal bin and bump a warning counter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, FeatureSchema, ImputeStats, KIND_CONTINUOUS, numeric_column
from .errors import DataError


@dataclass(frozen=True)
class BinningSpec:
    """Per-column encoding recipe: bin edges for continuous, values otherwise."""

    schema: FeatureSchema
    # per column: np.ndarray of edges (continuous) or None
    edges: tuple

    def __post_init__(self):
        for j, col in enumerate(self.schema):
            e = self.edges[j]
            if col.kind == KIND_CONTINUOUS:
                if e is None or len(e) < 3:
                    raise DataError(f"column {col.name}: need at least 2 bins")
                widths = np.diff(e)
                if np.any(widths <= 0):
                    raise DataError(f"column {col.name}: edges must strictly increase")
                if np.any(np.abs(widths - widths[0]) > 1e-9 * max(abs(e[-1] - e[0]), 1.0)):
                    raise DataError(f"column {col.name}: bins are not equal width")
            elif e is not None:
                raise DataError(f"column {col.name}: only continuous columns carry edges")

    def group_size(self, j):
        col = self.schema[j]
        if col.kind == KIND_CONTINUOUS:
            return len(self.edges[j]) - 1
        return col.cardinality

    def group_sizes(self):
        return [self.group_size(j) for j in range(len(self.schema))]

    def bin_count(self, j):
        return len(self.edges[j]) - 1

    def bin_index(self, j, value):
        """Bin of a continuous value: half-open bins, last closed, clamp outside.

        Returns (index, clamped_flag).
        """
        e = self.edges[j]
        if value < e[0]:
            return 0, True
        if value > e[-1]:
            return len(e) - 2, True
        # side='right' sends an interior edge value to the higher bin
        idx = int(np.searchsorted(e, value, side="right")) - 1
        return min(idx, len(e) - 2), False


@dataclass(frozen=True)
class BinaryDataset:
    """One-hot matrix plus the bookkeeping to map binary columns back."""

    rows: np.ndarray          # (n, total_binary) uint8
    codes: np.ndarray         # (n, n_features) int32 bin/value index per group
    column_map: tuple         # per binary column: (feature index, bin-or-value index)
    group_slices: tuple       # per feature: (start, stop) into binary columns
    spec: BinningSpec
    clamped_count: int = 0

    @property
    def n_rows(self):
        return self.rows.shape[0]

    @property
    def n_binary_columns(self):
        return self.rows.shape[1]

    def take(self, indices):
        idx = np.asarray(indices)
        return BinaryDataset(
            rows=self.rows[idx],
            codes=self.codes[idx],
            column_map=self.column_map,
            group_slices=self.group_slices,
            spec=self.spec,
            clamped_count=self.clamped_count,
        )


def equal_width_binning(dataset: Dataset, schema: FeatureSchema, bins,
                        impute: ImputeStats | None = None) -> BinningSpec:
    """Algorithm: split each continuous column's observed range into `bins`
    equal-width bins; `bins` may be a single count or a per-column mapping.

    The range comes from the schema (training observations), not from
    `dataset`, so encode-time data cannot widen the bins.
    """
    if dataset.n_cols != len(schema):
        raise DataError(f"schema has {len(schema)} columns but data has {dataset.n_cols}")
    edges = []
    for j, col in enumerate(schema):
        if col.kind != KIND_CONTINUOUS:
            edges.append(None)
            continue
        b = bins[j] if isinstance(bins, dict) else int(bins)
        if b < 2:
            raise DataError(f"column {col.name}: bin count {b} < 2")
        edges.append(np.linspace(col.minimum, col.maximum, b + 1))
    return BinningSpec(schema=schema, edges=tuple(edges))


def one_hot_encode(dataset: Dataset, spec: BinningSpec,
                   impute: ImputeStats | None = None) -> BinaryDataset:
    """Encode rows as concatenated one-hot groups (exactly one 1 per group)."""
    schema = spec.schema
    sizes = spec.group_sizes()
    starts = np.concatenate([[0], np.cumsum(sizes)])
    total = int(starts[-1])
    n = dataset.n_rows
    rows = np.zeros((n, total), dtype=np.uint8)
    codes = np.zeros((n, len(schema)), dtype=np.int32)
    clamped = 0
    for j, col in enumerate(schema):
        if col.kind == KIND_CONTINUOUS:
            values = numeric_column(dataset, j, col, impute)
            for i, v in enumerate(values):
                idx, was_clamped = spec.bin_index(j, v)
                clamped += was_clamped
                codes[i, j] = idx
        else:
            lookup = {v: k for k, v in enumerate(col.values)}
            fallback = impute.values[j] if impute is not None else None
            for i, cell in enumerate(dataset.column(j)):
                if cell in ("", "?"):
                    if fallback is None:
                        raise DataError(f"column {col.name}: missing cell at row {i + 1}")
                    cell = fallback
                if cell not in lookup:
                    raise DataError(f"column {col.name}: value {cell!r} not in schema")
                codes[i, j] = lookup[cell]
        rows[np.arange(n), starts[j] + codes[:, j]] = 1
    column_map = tuple(
        (j, k) for j, size in enumerate(sizes) for k in range(size)
    )
    group_slices = tuple((int(starts[j]), int(starts[j + 1])) for j in range(len(sizes)))
    return BinaryDataset(rows=rows, codes=codes, column_map=column_map,
                         group_slices=group_slices, spec=spec, clamped_count=clamped)


def decode_row(binary: BinaryDataset, i):
    """Bin/value index per feature for row i (inverse of the one-hot layout)."""
    return [int(binary.codes[i, j]) for j in range(binary.codes.shape[1])]


def binary_column_count(spec: BinningSpec) -> int:
    """Total one-hot arity |V'|: sum of group sizes."""
    return int(sum(spec.group_sizes()))
