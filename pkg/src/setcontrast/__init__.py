"""Contrastive representation learning as structured prediction over
assignment problems: exact and relaxed structured losses on the linear
assignment problem, a spectral regularizer carrying quadratic (intra-set)
structure, and a small deterministic training harness with a CLI.
"""

from .assignment import (
    Assignment,
    brute_force_lap,
    brute_force_qap,
    lap_cost,
    matching_accuracy,
    qap_objective,
    solve_lap,
)
from .errors import (
    ConfigError,
    ContractError,
    ConvergenceError,
    DegenerateInputError,
    EvaluationError,
    NumericError,
    SetContrastError,
    ShapeError,
    SizeGuardError,
)
from .losses import (
    GroundTruthAlignment,
    LossConfig,
    batch_hard_lap_loss,
    combined_loss,
    infonce_loss,
    nt_logistic_loss,
    pairwise_loss,
    qare,
    smoothed_batch_hard_loss,
    sparseclr_loss,
    sparsemax,
    sparsemax_threshold,
    structured_lap_loss,
    structured_qap_loss_exact,
    two_view_loss,
)
from .simgeom import (
    EigenDecomposition,
    SimilarityTriple,
    eig_dot,
    eigvals,
    min_eigengap,
    pairwise_distances,
    sym_eigen,
)
from .tensor import Gradients, Tape, Tensor, custom_op, gradcheck
from .harness import (
    MLPEncoder,
    RunReport,
    SyntheticSpec,
    TrainConfig,
    TwoViewDataset,
    fig1b_instance,
    gen_two_view_dataset,
    linear_probe,
    make_encoder,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "Assignment",
    "ConfigError",
    "ContractError",
    "ConvergenceError",
    "DegenerateInputError",
    "EigenDecomposition",
    "EvaluationError",
    "Gradients",
    "GroundTruthAlignment",
    "LossConfig",
    "MLPEncoder",
    "NumericError",
    "RunReport",
    "SetContrastError",
    "ShapeError",
    "SimilarityTriple",
    "SizeGuardError",
    "SyntheticSpec",
    "Tape",
    "Tensor",
    "TrainConfig",
    "TwoViewDataset",
    "batch_hard_lap_loss",
    "brute_force_lap",
    "brute_force_qap",
    "combined_loss",
    "custom_op",
    "eig_dot",
    "eigvals",
    "fig1b_instance",
    "gen_two_view_dataset",
    "gradcheck",
    "infonce_loss",
    "lap_cost",
    "linear_probe",
    "make_encoder",
    "matching_accuracy",
    "min_eigengap",
    "nt_logistic_loss",
    "pairwise_distances",
    "pairwise_loss",
    "qap_objective",
    "qare",
    "smoothed_batch_hard_loss",
    "solve_lap",
    "sparseclr_loss",
    "sparsemax",
    "sparsemax_threshold",
    "structured_lap_loss",
    "structured_qap_loss_exact",
    "sym_eigen",
    "train",
    "two_view_loss",
    "__version__",
]
