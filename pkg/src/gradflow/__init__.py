"""gradflow: a deterministic training lab for deep graph networks.

Explicit forward/backward passes for (residual) graph convolutions,
per-layer similarity profiles of representations and gradients,
closed-form gradient oracles with matching norm bounds, and
Frobenius-norm control of layer weights -- all with reproducible
numerics on a compiled kernel core (numpy fallback included).
"""

from ._version import __version__
from .backend import BACKEND, available_backends
from .config import Config, parse_config_text
from .datagen import (
    STANDIN_SPECS,
    StandinSpec,
    connected_sbm,
    ensure_standins,
    standin_graph,
    write_standins,
)
from .errors import (
    BoundViolationError,
    ConfigError,
    ConvergenceWarning,
    CsrFormatError,
    DataError,
    DepthCapError,
    FitError,
    ForwardDivergenceError,
    GradflowError,
    IntegrityError,
    ParseError,
    ShapeError,
    StateError,
)
from .graphio import (
    KNOWN_DATASET_STATS,
    DatasetStats,
    Graph,
    dataset_stats,
    edge_set_properties,
    graph_properties,
    load_dataset,
    load_dataset_dir,
    normalized_adjacency,
    save_dataset,
    sbm_generate,
)
from .linalg import (
    CsrMatrix,
    centered_propagation_norm,
    frobenius_norm,
    matmul,
    mean_center,
    spectral_norm,
    spmm,
    transpose,
)
from .lipschitz import LipschitzReport, apply_to_model, diagnose, \
    frobenius_normalize
from .model import (
    ACTIVATIONS,
    Model,
    ModelConfig,
    Tape,
    backward,
    evaluate,
    forward,
    load_model,
    masked_cross_entropy,
    save_model,
)
from .experiments import (
    COMMANDS,
    BoundCheckResult,
    CurveCellResult,
    ExperimentSpec,
    OracleCheckRow,
    ProfileCellResult,
    ScatterRow,
    SweepCellResult,
    run_bound_check,
    run_bound_suite,
    run_depth_sweep,
    run_experiment,
    run_fd_check,
    run_grad_profile,
    run_linear_equivalence,
    run_oracle_test,
    run_residual_equivalence,
    run_scatter,
    run_train_curves,
    spec_from_config,
)
from .oracles import (
    RESIDUAL_DEPTH_CAP,
    BoundReport,
    PathStats,
    bound_reports_to_csv,
    expansion_bound,
    linear_input_gradient,
    linear_weight_gradient,
    residual_input_gradient,
    smoothing_bound,
)
from .svgplot import Series, line_plot, scatter_plot, write_svg
from .similarity import (
    DecayFit,
    SimilarityProfile,
    fit_decay,
    node_similarity,
    similarity_profile,
)
from .train import (
    AdamState,
    RepeatSummary,
    TrainConfig,
    TrainLog,
    adam_step,
    run_repeats,
    train,
)

__all__ = [
    "BACKEND",
    "available_backends",
    "__version__",
    # errors
    "GradflowError",
    "ShapeError",
    "CsrFormatError",
    "ParseError",
    "IntegrityError",
    "ForwardDivergenceError",
    "DepthCapError",
    "FitError",
    "StateError",
    "ConfigError",
    "DataError",
    "BoundViolationError",
    "ConvergenceWarning",
    # linear algebra
    "CsrMatrix",
    "matmul",
    "spmm",
    "transpose",
    "frobenius_norm",
    "spectral_norm",
    "mean_center",
    "centered_propagation_norm",
    # graphs
    "Graph",
    "DatasetStats",
    "KNOWN_DATASET_STATS",
    "normalized_adjacency",
    "load_dataset",
    "load_dataset_dir",
    "save_dataset",
    "sbm_generate",
    "graph_properties",
    "edge_set_properties",
    "dataset_stats",
    # similarity
    "node_similarity",
    "SimilarityProfile",
    "similarity_profile",
    "DecayFit",
    "fit_decay",
    # model
    "ACTIVATIONS",
    "ModelConfig",
    "Model",
    "Tape",
    "forward",
    "backward",
    "masked_cross_entropy",
    "evaluate",
    "save_model",
    "load_model",
    # closed forms and bounds
    "PathStats",
    "BoundReport",
    "RESIDUAL_DEPTH_CAP",
    "linear_input_gradient",
    "linear_weight_gradient",
    "residual_input_gradient",
    "smoothing_bound",
    "expansion_bound",
    "bound_reports_to_csv",
    # weight control
    "frobenius_normalize",
    "apply_to_model",
    "LipschitzReport",
    "diagnose",
    # training
    "AdamState",
    "adam_step",
    "TrainConfig",
    "TrainLog",
    "train",
    "run_repeats",
    "RepeatSummary",
    # synthetic datasets
    "STANDIN_SPECS",
    "StandinSpec",
    "standin_graph",
    "write_standins",
    "ensure_standins",
    "connected_sbm",
    # configuration
    "Config",
    "parse_config_text",
    # plotting
    "Series",
    "line_plot",
    "scatter_plot",
    "write_svg",
    # experiments
    "COMMANDS",
    "ExperimentSpec",
    "spec_from_config",
    "run_experiment",
    "run_grad_profile",
    "run_depth_sweep",
    "run_train_curves",
    "run_scatter",
    "run_bound_check",
    "run_oracle_test",
    "run_fd_check",
    "run_linear_equivalence",
    "run_residual_equivalence",
    "run_bound_suite",
    "ProfileCellResult",
    "SweepCellResult",
    "CurveCellResult",
    "ScatterRow",
    "BoundCheckResult",
    "OracleCheckRow",
]
