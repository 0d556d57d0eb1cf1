"""Sampling of conditional probability measures on level sets of reaction coordinates.

The chain alternates an unconstrained drift+noise half step with a projection
back onto the constraint surface computed as the long-time limit of a damped
constraint flow.  A constant antisymmetric matrix makes the dynamics
non-reversible, which lowers the asymptotic variance of ergodic averages
without changing the sampled measure.
"""

from .benchmarks import ABAR, TorusBenchmark, get_benchmark
from .errors import (
    ConfigError,
    LinearSolveError,
    ProjectionError,
    RankDeficiencyError,
    SamplerError,
)
from .geometry import (
    ReactionCoordinate,
    TorusSurface,
    circle_coordinate,
    double_quadric_coordinate,
    quadratic_coordinate,
    quadrature_expectation,
    sphere_coordinate,
    surface_density,
    torus_angles,
    torus_embed,
    torus_grad_norm,
    torus_grad_xi,
    torus_hess_xi,
    torus_xi,
)
from .kernels import (
    ConstraintKernel,
    DynamicsSpec,
    compute_J,
    compute_kernel,
    compute_reversible_kernel,
    nullspace_basis,
)
from .noise import CounterRNG, NoiseKind, noise_vector, stream_key
from .projection import ProjectionConfig, ProjectionResult, flow_rhs, project
from .sampler import SchemeConfig, half_step, run, run_many, sample_noise, soft_step, step
from .stats import (
    ExperimentRow,
    ExperimentTable,
    RunSummary,
    aggregate_runs,
    batch_means_variance,
    histogram_tv_distance,
    transition_count,
)
from .verify import (
    CheckReport,
    check_appendix_identity,
    check_exp_identities,
    check_grad_theta,
    check_hess_theta,
    check_kernel_identities,
    expm,
)

__version__ = "0.1.0"
