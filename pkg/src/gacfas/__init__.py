"""Sharpness-aware training with per-domain ascending points whose
generalization gradients are aligned to the empirical-risk gradient, plus a
deterministic experiment harness for multi-domain synthetic classification.

Modules: numerics (float64 vector kernels, seeded streams), model (minimal
MLP with hand-written backprop), datagen (rotated two-moons domains),
optim (the optimizer family), diagnostics (surrogate gap, alignment tensor,
landscape slices, convergence traces), evalmetrics (HTER/AUC/TPR@FPR),
harness (configs, training loops, leave-one-out, sweeps, CSV outputs),
cli (the `gacfas` command).
"""

from .datagen import DomainSpec, SourceSet
from .diagnostics import (
    ConvergenceTrace,
    LandscapeGrid,
    alignment_inner_products,
    convergence_trace,
    landscape_slice,
    perturbed_loss,
    surrogate_gap,
)
from .evalmetrics import ScoredSet, hter_at_eer, roc_auc, tpr_at_fpr
from .harness import (
    ConfigError,
    EvalReport,
    ExperimentConfig,
    RunRecord,
    default_experiment,
    load_config,
    run_leave_one_out,
    run_sweep,
    run_training,
    write_outputs,
)
from .model import Batch, MlpSpec, ParamVector
from .numerics import Prng
from .optim import (
    MODES,
    AscendingVector,
    OptimizerConfig,
    Schedule,
    StepDiagnostics,
    ascending_vector,
    erm_step,
    gac_fas_step,
    reg_domain_perturb_step,
    sam_domain_step,
    sam_whole_step,
    take_step,
)

__version__ = "0.1.0"

__all__ = [
    "AscendingVector",
    "Batch",
    "ConfigError",
    "ConvergenceTrace",
    "DomainSpec",
    "EvalReport",
    "ExperimentConfig",
    "LandscapeGrid",
    "MODES",
    "MlpSpec",
    "OptimizerConfig",
    "ParamVector",
    "Prng",
    "RunRecord",
    "Schedule",
    "ScoredSet",
    "SourceSet",
    "StepDiagnostics",
    "alignment_inner_products",
    "ascending_vector",
    "convergence_trace",
    "default_experiment",
    "erm_step",
    "gac_fas_step",
    "hter_at_eer",
    "landscape_slice",
    "load_config",
    "perturbed_loss",
    "reg_domain_perturb_step",
    "roc_auc",
    "run_leave_one_out",
    "run_sweep",
    "run_training",
    "sam_domain_step",
    "sam_whole_step",
    "surrogate_gap",
    "take_step",
    "tpr_at_fpr",
    "write_outputs",
    "__version__",
]
