"""Numerical laboratory for higher-order divergence-form elliptic systems."""

from .geometry import (
    PolygonalDomain,
    TriMesh,
    RectMesh,
    WhitneyGrid,
    build_mesh,
    build_rect_mesh,
    whitney_decompose,
    unit_square,
    l_shape,
)
from .coefficients import (
    CoefficientTensor,
    EllipticityReport,
    biharmonic_rho_tensor,
    estimate_garding_constant,
    identity_tensor,
    laplacian_tensor,
    multiindices,
)
from .fespace import FESolution, RectBFSSpace, TriP1Space
from .assembly import (
    DirichletSolver,
    GradientArray,
    IncompatibleDataError,
    NeumannSolver,
    caccioppoli_ratio,
    extract_neumann_data,
    newton_potential,
    residual,
    solve_dirichlet,
    solve_neumann,
)
from .norms import (
    CallableField,
    CubeField,
    NormParamError,
    NormParams,
    SampledField,
    ball_norm,
    besov_boundary_seminorm,
    embedding_check,
    holder_dual_field,
    operator_norm_probe,
    pairing,
    p_min,
    sequence_holder_check,
    whitney_norm,
)
from .perturbation import (
    DualityReport,
    PerturbationDivergenceError,
    PerturbationRefusedError,
    PerturbationTrace,
    duality_experiment,
    perturb_solve,
    predicted_c2,
    reduce_to_homogeneous_boundary,
    reduce_via_newton,
    verify_c2_bound,
)
from .experiments import ConfigError, ResultRow, run_experiment

__version__ = "0.1.0"
