"""Gradient-guided edge-perturbation poisoning attacks on GCN classifiers."""

__version__ = "0.1.0"

from .attack import (
    AttackConfig,
    Candidate,
    FlipRecord,
    GradientState,
    PerturbationLog,
    batch_integral_gradients,
    filter_candidates,
    integral_gradient,
    momentum_update,
    reduction_config,
    retrain_ensemble_gradient,
    run_atkse,
    select_perturbation,
    select_top_c,
    semantic_invariant_gradient,
)
from .baselines import dice_attack, dice_label_vector, random_attack
from .errors import BudgetError, BundleError, DegenerateGradientError, TrainingDivergedError
from .estimators import (
    AtkSEAttack,
    DiceAttack,
    GCNClassifier,
    GreedyGradientAttack,
    RandomAttack,
)
from .evaluation import (
    VICTIM_CONFIG,
    EvalReport,
    evaluate_accuracy,
    run_trials,
    train_victim,
)
from .gcn import (
    GRADIENT_EVALS,
    SurrogateParams,
    TrainConfig,
    adjacency_gradient,
    attack_loss,
    finite_diff_adjacency_gradient,
    forward,
    gradient_check,
    load_params,
    save_params,
    train_surrogate,
)
from .graph import (
    Budget,
    Graph,
    check_graph,
    edge_budget,
    flip_edge,
    generate_sbm,
    load_graph_bundle,
    normalize_adjacency,
    save_graph_bundle,
)

__all__ = [
    "AtkSEAttack",
    "AttackConfig",
    "Budget",
    "BudgetError",
    "BundleError",
    "Candidate",
    "DegenerateGradientError",
    "DiceAttack",
    "EvalReport",
    "FlipRecord",
    "GCNClassifier",
    "GradientState",
    "GreedyGradientAttack",
    "GRADIENT_EVALS",
    "Graph",
    "PerturbationLog",
    "RandomAttack",
    "SurrogateParams",
    "TrainConfig",
    "TrainingDivergedError",
    "VICTIM_CONFIG",
    "adjacency_gradient",
    "attack_loss",
    "batch_integral_gradients",
    "check_graph",
    "dice_attack",
    "dice_label_vector",
    "edge_budget",
    "evaluate_accuracy",
    "filter_candidates",
    "finite_diff_adjacency_gradient",
    "flip_edge",
    "forward",
    "generate_sbm",
    "gradient_check",
    "integral_gradient",
    "load_graph_bundle",
    "load_params",
    "momentum_update",
    "normalize_adjacency",
    "random_attack",
    "reduction_config",
    "retrain_ensemble_gradient",
    "run_atkse",
    "run_trials",
    "save_graph_bundle",
    "save_params",
    "select_perturbation",
    "select_top_c",
    "semantic_invariant_gradient",
    "train_surrogate",
    "train_victim",
    "__version__",
]
