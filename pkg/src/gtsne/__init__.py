"""Generalized-kernel t-SNE with perplexity ``n * rho`` and continuum diagnostics."""
__version__ = "0.1.0"

from .affinity import (
    GRADIENT_FACTOR,
    embedding_affinities,
    gradient,
    joint_affinities,
    kl_loss,
    loss_and_gradient,
    pair_gradient_term,
)
from .calibrate import CalibrationResult, calibrate_all, conditional_distribution, entropy, solve_sigma
from .continuum import (
    ContinuumMeasure,
    EmpiricalMeasure,
    JointSample,
    big_F,
    chebyshev_gap,
    functional_I,
    measure_from_spec,
    normalization_Zd,
    p_psi,
    q_continuous,
    sigma_star,
    stationarity_residual,
)
from .descent import Embedding, OptimizerConfig, init_embedding, optimize_embedding, run_tsne
from .errors import *  # noqa: F401,F403
from .kernels import (
    InputKernel,
    OutputKernel,
    cauchy_kernel,
    custom_input_kernel,
    custom_output_kernel,
    eval_input,
    eval_output,
    exp_kernel,
    gauss_kernel,
    kernels_from_config,
    log_poly_kernel,
    power_kernel,
    validate_input_kernel,
    validate_output_kernel,
)
from .study import StudyConfig, StudyRow, convergence_study, emit_csv, emit_svg, sample_measure
