"""Budgeted pipeline search for tabular supervised learning.

The pipeline applies encode -> impute -> balance -> scale -> select ->
model; searching jointly over stage methods and their hyperparameters
under wall-clock and evaluation budgets, then optionally combining trial
pipelines into stacking, bagging, or boosting ensembles.
"""

from .balance import Balancer, ImbalanceProfile, profile
from .engine import (
    Budget,
    Protocol,
    SearchResult,
    TrainedPipeline,
    TrialRecord,
    evaluate,
    incumbent_curve,
    load_pipeline,
    optimize,
    persist_history,
    save_pipeline,
)
from .ensemble import (
    EnsembleModel,
    FeatureMask,
    build_bagging,
    build_boosting,
    build_stacking,
    load_model,
    save_model,
)
from .errors import (
    BalancingError,
    ConfigurationError,
    ContractError,
    DataError,
    DomainError,
    EnsembleError,
    FitError,
    FormatError,
    ImputationError,
    InvalidPredictionError,
    OptimizationError,
    RegistrationError,
    SchemaError,
    TabcashError,
    TaskError,
    UndefinedMetricError,
)
from .metrics import (
    Metric,
    PredictionBundle,
    accuracy,
    auc_score,
    get_metric,
    gini_score,
    mae,
    mse,
    poisson_deviance,
    r2_score,
    register_custom_metric,
)
from .models import make_model
from .preprocess import Encoder, Imputer, Scaler, Selector
from .space import (
    Domain,
    PipelineSpec,
    SearchSpace,
    StageChoice,
    default_space,
    sample_adaptive,
    sample_random,
    validate_spec,
)
from .synthdata import GeneratorSpec, generate
from .tabular import (
    ColumnSchema,
    Dataset,
    FoldPlan,
    Split,
    infer_task,
    load_csv,
    log1p_transform,
    make_folds,
    read_csv_header,
    split_dataset,
    write_csv,
)

__version__ = "0.1.0"

__all__ = [
    "Balancer",
    "ImbalanceProfile",
    "profile",
    "Budget",
    "Protocol",
    "SearchResult",
    "TrainedPipeline",
    "TrialRecord",
    "evaluate",
    "incumbent_curve",
    "load_pipeline",
    "optimize",
    "persist_history",
    "save_pipeline",
    "EnsembleModel",
    "FeatureMask",
    "build_bagging",
    "build_boosting",
    "build_stacking",
    "load_model",
    "save_model",
    "Metric",
    "PredictionBundle",
    "accuracy",
    "auc_score",
    "get_metric",
    "gini_score",
    "mae",
    "mse",
    "poisson_deviance",
    "r2_score",
    "register_custom_metric",
    "make_model",
    "Encoder",
    "Imputer",
    "Scaler",
    "Selector",
    "Domain",
    "PipelineSpec",
    "SearchSpace",
    "StageChoice",
    "default_space",
    "sample_adaptive",
    "sample_random",
    "validate_spec",
    "GeneratorSpec",
    "generate",
    "ColumnSchema",
    "Dataset",
    "FoldPlan",
    "Split",
    "infer_task",
    "load_csv",
    "log1p_transform",
    "make_folds",
    "read_csv_header",
    "split_dataset",
    "write_csv",
    "TabcashError",
    "ConfigurationError",
    "SchemaError",
    "DataError",
    "DomainError",
    "ContractError",
    "RegistrationError",
    "UndefinedMetricError",
    "InvalidPredictionError",
    "ImputationError",
    "BalancingError",
    "FitError",
    "TaskError",
    "OptimizationError",
    "EnsembleError",
    "FormatError",
]
