"""Sum-product networks with piecewise-polynomial leaves and a weighted
model integration query interface for mixed discrete-continuous data."""

from .binning import BinaryDataset, BinningSpec, binary_column_count, equal_width_binning, one_hot_encode
from .data import ColumnSchema, Dataset, FeatureSchema, SplitSpec, infer_schema, load_csv, split_dataset
from .errors import (
    DataError,
    ModelError,
    QuerySyntaxError,
    UndefinedConditionalError,
    UsageError,
    WmispnError,
)
from .model_io import ModelFile, load_model, save_model
from .pipeline import eval_model, learn_model
from .polyfit import (
    FitReport,
    Piece,
    PiecewisePoly,
    bic_score,
    fit_piecewise_density,
    integrate_piece,
    leaf_mass,
    select_model,
)
from .query import QueryAst, answer, answer_disjunction, normalize, parse_query
from .spn import Evidence, IndicatorLeaf, PolyLeaf, ProductNode, Spn, SumNode, log_likelihood
from .structure import LearnParams, VariableGroup, cluster_instances, g_test_partition, learn_wmispn
from .wmi import IntervalAtom, PropAtom, PropTheory, Weight, conditional_wmi, propositional_abstraction, wmc, wmi

__version__ = "0.1.0"
