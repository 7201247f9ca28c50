"""Evidential Dirichlet loss family: closed forms, analytic gradients,
verification oracles, baseline scores, metrics, and a desk-scale trainer."""

from .dirichlet import (
    DirichletParams,
    SimplexVector,
    aleatoric_uncertainty,
    dirichlet_entropy,
    dirichlet_kl,
    epistemic_uncertainty,
    expected_categorical_entropy,
    expected_p_log_p,
    mean_probability,
    sample,
)
from .gradients import (
    beta_ratio_g,
    find_crossing_thresholds,
    gradient_gap_f,
    gradient_gap_f_derivative,
    ufce_grad_alpha,
    uce_grad_alpha,
)
from .losses import (
    LossConfig,
    SupervisedSample,
    combined_objective,
    cross_entropy,
    energy_bound_penalty,
    energy_score,
    ent_regularizer,
    er_loss,
    eus_multiplier,
    focal,
    softmax_entropy,
    uce,
    uce_digamma_sum,
    uce_ent_objective,
    ufce,
    ufce_eus,
    ufce_integer_gamma,
)
from .metrics import MetricsReport, aupr, auroc, ece, evaluate, fpr_at_95_tpr, iou
from .net import MlpModel, TrainConfig, predict_uncertainties, train
from .synth import DatasetSplit, LabeledPoint, SyntheticDatasetSpec, generate
from .verify import (
    VerificationReport,
    finite_diff_gradient,
    mc_expected_focal,
    run_proposition_suite,
)

__version__ = "0.1.0"
