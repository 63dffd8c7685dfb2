"""Low-loss parameter paths for ReLU networks with a skip connection.

The package builds explicit continuous paths between trained parameter
points whose objective stays near the endpoint levels, measures the
barrier ("depth") along them, and provides the width-scaling harness that
checks how the measured depth shrinks as the first layer widens.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    InvalidInputError,
    PathDegeneracyError,
    TrainingDivergedError,
    UnsupportedConfigError,
)
from .linalg import angle, pinv, relu, unit_rows
from .models import (
    InnerNetParams,
    LinearSkipParams,
    SkipNetParams,
    TwoLayerParams,
    forward_inner,
    forward_linear_skip,
    forward_skip,
    forward_two_layer,
)
from .losses import (
    AssumptionReport,
    Dataset,
    LossConfig,
    check_assumption1,
    grad,
    objective,
    objective_unregularized,
    regularizer,
)
from .geometry import (
    ClusterSet,
    SparsifyPlan,
    build_sparsify_plan,
    find_cluster,
    relu_perturbation_bound,
)
from .paths import (
    BarrierReport,
    LTermSolution,
    ParamPath,
    PathSegment,
    connect,
    connect_linear,
    measure_depth,
    measure_depth_fn,
    solve_lterm,
    step1_norm_reduction,
    step2_merge_path,
    step3_rewire_and_descend,
    verify_continuity,
)
from .datasets import DatasetSpec, gen_dataset
from .experiments import (
    ExperimentConfig,
    ScalingResult,
    TrainerSpec,
    parse_config,
    run_scaling,
    train,
)
from .estimators import (
    DirectionClusterer,
    LinearSkipRegressor,
    SkipNetRegressor,
    SparseTwoLayerApproximator,
    TwoLayerRegressor,
)
from .serialize import (
    load_checkpoint,
    load_dataset,
    save_checkpoint,
    save_dataset,
)

__all__ = [
    "AssumptionReport",
    "BarrierReport",
    "ClusterSet",
    "ConfigError",
    "Dataset",
    "DatasetSpec",
    "DirectionClusterer",
    "ExperimentConfig",
    "InnerNetParams",
    "InvalidInputError",
    "LTermSolution",
    "LinearSkipParams",
    "LinearSkipRegressor",
    "LossConfig",
    "ParamPath",
    "PathDegeneracyError",
    "PathSegment",
    "ScalingResult",
    "SkipNetParams",
    "SkipNetRegressor",
    "SparseTwoLayerApproximator",
    "SparsifyPlan",
    "TrainerSpec",
    "TrainingDivergedError",
    "TwoLayerParams",
    "TwoLayerRegressor",
    "UnsupportedConfigError",
    "angle",
    "build_sparsify_plan",
    "check_assumption1",
    "connect",
    "connect_linear",
    "find_cluster",
    "forward_inner",
    "forward_linear_skip",
    "forward_skip",
    "forward_two_layer",
    "gen_dataset",
    "grad",
    "load_checkpoint",
    "load_dataset",
    "measure_depth",
    "measure_depth_fn",
    "objective",
    "objective_unregularized",
    "parse_config",
    "pinv",
    "regularizer",
    "relu",
    "relu_perturbation_bound",
    "run_scaling",
    "save_checkpoint",
    "save_dataset",
    "solve_lterm",
    "step1_norm_reduction",
    "step2_merge_path",
    "step3_rewire_and_descend",
    "train",
    "unit_rows",
    "verify_continuity",
]
