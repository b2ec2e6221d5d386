"""Numerical laboratory for first-order operators with conical ends.

Weighted Volterra parametrices for radial mode operators, certified
perturbation bounds, Fredholm index experiments on two-ended mode
models, and scalar curvature profiles of warped and generalized cone
metrics, tied together by a reproducible batch CLI.
"""

__version__ = "0.1.0"

from .cone_op import (
    ConeOperatorSpec,
    PerturbationProfile,
    SampledCoupling,
    SeparableCoupling,
    absorb_cone,
    apply_K,
    apply_parametrix,
    commutation_check,
    composite_ops,
    exact_inverse_residual,
    neumann_inverse,
    norm_report,
    parametrix_left_identity,
    parametrix_right_identity,
    validate_spec,
)
from .fredholm import (
    SuspensionModeModel,
    analytic_mode_index,
    build_model_suite,
    deform_index_trace,
    global_parametrix_check,
    index_jump_scan,
    svd_index,
    toy_llarull_model,
)
from .geometry import (
    RadialProfile,
    WarpedMetricFamily,
    density_rescale_check,
    generalized_cone_scal,
    mode_reduce_suspension,
    suspension_scal,
)
from .grid import (
    Cutoff,
    ModeSection,
    RadialGrid,
    make_cutoff,
    make_grid,
    make_two_ended_grid,
    random_smooth_sections,
    smooth_bump,
)
from .link import (
    GapReport,
    LinkSpectrum,
    PerturbationCaps,
    check_spectral_gap,
    perturbation_caps,
    sphere_dirac_spectrum,
)
from .mode_kernels import (
    KernelOperator,
    apply_P,
    composite_bound,
    dense_matrix,
    ode_residual,
    operator_norm,
    schur_certificate,
)

__all__ = [name for name in dir() if not name.startswith("_")]
