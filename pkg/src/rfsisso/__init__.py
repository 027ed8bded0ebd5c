"""Random-forest prescreening plus SISSO symbolic regression for small tabular data."""

from .data import (
    Dataset,
    FeatureColumn,
    Schema,
    Target,
    UnitVector,
    generate_synthetic,
    load_dataset,
    split_subsets,
    write_dataset,
)
from .errors import *  # noqa: F401,F403
from .expressions import Expr, canonicalize, combine, evaluate, format_expr, leaf, parse_expr
from .forest import (
    ForestConfig,
    ImportanceReport,
    best_split,
    fit_predict_forest,
    gini_impurity,
    grow_tree,
    mdi_importance,
    repeated_importance,
    select_features,
)
from .hull import Hull2D, convex_hull, hull_overlap_count
from .metrics import LinearClassifier, accuracy, pearson_r, rmse, train_linear_svc
from .sisso import (
    DescriptorModel,
    SisConfig,
    SpaceConfig,
    cs_validity_check,
    fit_least_squares,
    run_rf_sisso,
    run_sisso,
    sis_screen_classification,
    sis_screen_regression,
    so_search_classification,
    so_search_regression,
    standardize_columns,
)
from .space import FeatureMatrix, OperatorSet, expand_space

__version__ = "0.1.0"
