"""Extrapolated three-operator (Davis-Yin) splitting for structured
nonconvex problems, plug-and-play variants with gradient-step denoisers,
runtime verification of the convergence theory, and desk-scale image
deblurring / super-resolution experiments.
"""

from .energy import (
    EnergyReport,
    check_descent,
    check_lower_bound,
    check_lower_bound_constants,
    h_gamma,
    rate_check,
    theta,
    theta_gradients,
    theta_subgradient_estimate,
)
from .imaging import (
    DegradationModel,
    DownsampledBlur,
    Downsampler,
    degrade,
    gaussian_kernel,
    load_image,
    load_kernel_text,
    motion_kernel,
    psnr,
    save_image,
    ssim,
    synthetic_image,
    uniform_kernel,
    upsample_nearest,
)
from .priors import (
    GradStepDenoiser,
    LeastSquaresTerm,
    PhiSigma,
    box_prox,
    box_term,
    gradient_step_denoiser,
    huber_tv_term,
    linear_denoiser,
    load_denoiser_weights,
    ls_prox,
    phi_sigma_eval,
    save_denoiser_weights,
    tikhonov_term,
    tv_prox,
    tv_term,
    tv_value,
    weak_convexity_certificate,
)
from .problem import (
    INFINITE,
    CompositeObjective,
    ProxFailure,
    ProxableTerm,
    SmoothTerm,
    criticality_residual,
    objective_value,
    prox_of_smooth,
    zero_proxable_term,
    zero_smooth_term,
)
from .solver import (
    DysState,
    SolverError,
    StopRule,
    TraceRow,
    dys_step,
    initial_state,
    pnp_nonsmooth_composite,
    pnp_smooth_composite,
    solve,
    solve_pnp_nonsmooth,
    solve_pnp_smooth,
)
from .stepsize import (
    StepParams,
    default_params,
    gamma_threshold,
    lambda_of_gamma,
    make_params,
    pnp_nonsmooth_constants,
    pnp_nonsmooth_gamma_threshold,
    xi_of,
)
from .tensorops import CirculantOperator, circ_apply, circ_solve, dot, norm

__version__ = "0.1.0"
