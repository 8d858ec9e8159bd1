"""End-to-end orchestration: csv -> split -> schema -> densities -> network.

This is the substance behind the `learn` and `eval` subcommands, kept
importable so tests and notebooks can drive it without a subprocess.
"""

from __future__ import annotations

from dataclasses import dataclass

from .binning import equal_width_binning, one_hot_encode
from .data import (
    Dataset,
    FeatureSchema,
    SplitSpec,
    imputation_stats,
    infer_schema,
    load_csv,
    numeric_column,
    parse_schema_file,
    schema_from_declarations,
    split_dataset,
)
from .errors import DataError, UsageError
from .model_io import ModelFile, creation_stamp, dataset_digest
from .polyfit import DEFAULT_BINS_GRID, DEFAULT_ORDER_GRID, select_model
from .spn import density_log_likelihood, log_likelihood
from .structure import LearnParams, learn_wmispn


@dataclass(frozen=True)
class LearnResult:
    model: ModelFile
    fit_reports: dict           # continuous column index -> FitReport
    split_sizes: tuple
    validation_ll: float
    validation_warnings: int


def learn_model(data_path, schema_path=None, bins=None,
                bins_grid=None, order_grid=None,
                params: LearnParams = LearnParams(),
                split: SplitSpec | None = None,
                delimiter=",", has_header=True,
                categorical_threshold=10) -> LearnResult:
    """Learn a model from a delimited file; returns the model plus fit and
    validation summaries. `bins` fixes a uniform bin count; otherwise BIC
    picks a per-feature count from `bins_grid`."""
    if bins is not None and bins < 2:
        raise UsageError(f"--bins {bins}: at least 2 bins are required")
    split = split or SplitSpec(seed=params.seed)
    dataset = load_csv(data_path, delimiter=delimiter, has_header=has_header)
    train, valid, test = split_dataset(dataset, split)

    if schema_path is not None:
        declarations = parse_schema_file(schema_path, dataset.column_names)
        schema = schema_from_declarations(declarations, train)
    else:
        schema = infer_schema(train, categorical_threshold=categorical_threshold)
    impute = imputation_stats(train, schema)

    bins_grid = [bins] if bins is not None else sorted(bins_grid or DEFAULT_BINS_GRID)
    order_grid = sorted(order_grid or DEFAULT_ORDER_GRID)

    densities = {}
    reports = {}
    chosen_bins = {}
    for j in schema.continuous_indices():
        values = numeric_column(train, j, schema[j], impute)
        poly, report = select_model(values, bins_grid, order_grid,
                                    support=(schema[j].minimum, schema[j].maximum))
        densities[j] = poly
        reports[j] = report
        chosen_bins[j] = report.chosen_bins

    spec = equal_width_binning(train, schema, chosen_bins if chosen_bins else 2, impute)
    binary_train = one_hot_encode(train, spec, impute)
    spn = learn_wmispn(binary_train, densities, params)

    binary_valid = one_hot_encode(valid, spec, impute)
    valid_ll, valid_warnings = log_likelihood(spn, binary_valid)

    model = ModelFile(
        schema=schema,
        impute=impute,
        binning=spec,
        densities=densities,
        spn=spn,
        params=params,
        seed=params.seed,
        dataset_sha256=dataset_digest(data_path),
        dataset_rows=dataset.n_rows,
        created_unix=creation_stamp(),
    )
    return LearnResult(model=model, fit_reports=reports,
                       split_sizes=(train.n_rows, valid.n_rows, test.n_rows),
                       validation_ll=valid_ll, validation_warnings=valid_warnings)


@dataclass(frozen=True)
class EvalResult:
    n_rows: int
    avg_log_likelihood: float
    warnings: int
    clamped: int
    digest_matches: bool


def eval_model(model: ModelFile, data_path, density_mode=False,
               delimiter=",", has_header=True) -> EvalResult:
    """Average log-likelihood of a delimited file under a loaded model."""
    dataset = load_csv(data_path, delimiter=delimiter, has_header=has_header)
    expected = tuple(c.name for c in model.schema)
    if has_header and dataset.column_names != expected:
        offending = [f"{got!r} (expected {want!r})"
                     for got, want in zip(dataset.column_names, expected) if got != want]
        offending += [f"missing {c!r}" for c in expected[len(dataset.column_names):]]
        offending += [f"unexpected {c!r}" for c in dataset.column_names[len(expected):]]
        raise DataError("column mismatch against the model schema: " + "; ".join(offending))
    if dataset.n_cols != len(model.schema):
        raise DataError(f"data has {dataset.n_cols} columns, model expects {len(model.schema)}")
    binary = one_hot_encode(dataset, model.binning, model.impute)
    if density_mode:
        avg, warnings = density_log_likelihood(model.spn, binary, dataset, model.impute)
    else:
        avg, warnings = log_likelihood(model.spn, binary)
    return EvalResult(n_rows=dataset.n_rows, avg_log_likelihood=avg, warnings=warnings,
                      clamped=binary.clamped_count,
                      digest_matches=dataset_digest(data_path) == model.dataset_sha256)


def write_split(dataset: Dataset, path, delimiter=","):
    """Write a Dataset back out as a delimited file with a header row."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(delimiter.join(dataset.column_names) + "\n")
        for row in dataset.rows:
            fh.write(delimiter.join(row) + "\n")
