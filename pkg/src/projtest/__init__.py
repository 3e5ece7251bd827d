"""Projection-based nonparametric significance and conditional-independence testing.

Public surface: kernel primitives, the precomputed core of leave-one-out
estimators, projected and unprojected empirical processes with CvM/KS
functionals, multiplier bootstrap critical values, and a Monte Carlo
simulation driver with table emission.
"""

from .kernels import (
    BandwidthPlan,
    KernelSpec,
    bandwidth_rule,
    epanechnikov,
    kernel_cdf,
    kernel_selfconv,
    product_kernel,
)
from .estimators import (
    CoreDiagnostics,
    Dataset,
    Guards,
    PrecomputedCore,
    build_core,
    cond_cdf_given_x,
    delta_hat,
    density_w,
    density_weighted_residuals,
    density_x,
    g_hat,
    pairwise_kernel_matrix,
)
from .projection import orthogonality_defect, projection_matrix
from .statistics import (
    ProcessValues,
    StatPair,
    ci_process,
    ci_residual_matrix,
    cvm_stat,
    dm_ci_process,
    dm_process,
    ks_stat,
    projected_process,
)
from .bootstrap import (
    MULTIPLIER_KINDS,
    StatResult,
    TestConfig,
    TestReport,
    bootstrap_process,
    critical_value,
    draw_multipliers,
    p_value,
    run_test,
)
from .simulation import (
    DgpSpec,
    SimulationResult,
    emit_csv,
    emit_table,
    generate,
    run_monte_carlo,
)

__version__ = "0.1.0"

__all__ = [
    "BandwidthPlan", "KernelSpec", "bandwidth_rule", "epanechnikov", "kernel_cdf",
    "kernel_selfconv", "product_kernel",
    "CoreDiagnostics", "Dataset", "Guards", "PrecomputedCore", "build_core",
    "cond_cdf_given_x", "delta_hat", "density_w", "density_weighted_residuals",
    "density_x", "g_hat", "pairwise_kernel_matrix",
    "orthogonality_defect", "projection_matrix",
    "ProcessValues", "StatPair", "ci_process", "ci_residual_matrix", "cvm_stat",
    "dm_ci_process", "dm_process", "ks_stat", "projected_process",
    "MULTIPLIER_KINDS", "StatResult", "TestConfig", "TestReport",
    "bootstrap_process", "critical_value", "draw_multipliers", "p_value", "run_test",
    "DgpSpec", "SimulationResult", "emit_csv", "emit_table", "generate", "run_monte_carlo",
    "__version__",
]
