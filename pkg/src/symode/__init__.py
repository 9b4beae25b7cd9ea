"""symode: symbolic neural ODE learning of parametric dynamical systems.

The package learns operator mappings from time/space-varying parameter
functions to system states by combining a multiplicative symbolic network,
a small residual network, Fourier spectral differentiation, and a
three-stage training procedure, with built-in ground-truth generators for
reproducible experiments.
"""

__version__ = "0.1.0"

from .grf import GrfConfig, ParamFunction, constant_param, fit_spline, sample_grf
from .integrate import BlowUpError, RolloutTape, SolveConfig, ode_solve, rollout_vjp
from .mlp import MLPParams, mlp_forward, mlp_vjp
from .model import ModelBundle, ModelRHS, load_model, save_model
from .spectral import (
    Grid,
    dealias,
    dealias_mask,
    fourier_resample,
    inverse_laplacian_2d,
    spectral_derivative,
    temporal_derivative,
    wavenumber_grid,
)
from .symnet import (
    DictionarySpec,
    SymNetParams,
    build_dictionary,
    dictionary_size,
    extract_equation,
    format_equation,
    symnet_forward,
    symnet_vjp,
)
from .systems import (
    Dataset,
    GenConfig,
    IcSampler,
    ParamSampler,
    SystemSpec,
    Trajectory,
    equilibria,
    forcing_field,
    generate_dataset,
    locate_fold,
    make_system,
    true_rhs,
)
from .dataset import load_dataset, save_dataset
from .training import (
    AdamState,
    EvalMetrics,
    TrainConfig,
    TrainReport,
    adam_step,
    evaluate_mse,
    grad_check,
    model_rhs_factory,
    stage1_flow_match,
    stage2_finetune,
    stage3_residual,
    train_pipeline,
)

__all__ = [name for name in dir() if not name.startswith("_")]
