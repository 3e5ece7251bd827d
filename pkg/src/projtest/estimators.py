"""Leave-one-out kernel estimators and their closed-form integral functionals.

Everything here is built from one pairwise kernel matrix over X whose
diagonal is forced to zero: that single convention encodes the
leave-one-out rule, so each estimator is a plain row sum or matrix
product.  The two integral functionals (the running-integral matrix
``gmat`` and the squared-density integral ``delta``) are computed exactly
through the kernel CDF and self-convolution closed forms rather than by
numeric integration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import BandwidthPlan, KernelSpec, epanechnikov, kernel_cdf, kernel_selfconv
from .projection import projection_matrix

__all__ = [
    "Dataset",
    "Guards",
    "CoreDiagnostics",
    "PrecomputedCore",
    "pairwise_kernel_matrix",
    "density_x",
    "density_weighted_residuals",
    "density_w",
    "g_hat",
    "delta_hat",
    "cond_cdf_given_x",
    "leq_indicator_matrix",
    "build_core",
]


@dataclass(frozen=True)
class Dataset:
    """Sample of a response y, known-significant covariates x, covariates z under test."""

    y: np.ndarray  # (n,)
    x: np.ndarray  # (n, q)
    z: np.ndarray  # (n, p)

    @staticmethod
    def from_arrays(y, x, z) -> "Dataset":
        y = np.asarray(y, dtype=float).reshape(-1)
        x = np.atleast_2d(np.asarray(x, dtype=float))
        z = np.atleast_2d(np.asarray(z, dtype=float))
        if x.shape[0] == 1 and y.size > 1:
            x = x.T
        if z.shape[0] == 1 and y.size > 1:
            z = z.T
        n = y.size
        if n < 3:
            raise ValueError(f"need at least 3 observations, got {n}")
        if x.shape[0] != n or z.shape[0] != n:
            raise ValueError("y, x, z must have the same number of rows")
        if x.shape[1] < 1 or z.shape[1] < 1:
            raise ValueError("x and z must each have at least one column")
        for name, arr in (("y", y), ("x", x), ("z", z)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite value in {name}")
        return Dataset(y=y, x=x, z=z)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def q(self) -> int:
        return self.x.shape[1]

    @property
    def p(self) -> int:
        return self.z.shape[1]


@dataclass(frozen=True)
class Guards:
    """Degeneracy floors for estimated densities appearing in denominators."""

    fx_floor: float = 1e-12
    delta_floor: float = 1e-12

    def __post_init__(self) -> None:
        if self.fx_floor <= 0 or self.delta_floor <= 0:
            raise ValueError("floors must be positive")


@dataclass
class CoreDiagnostics:
    """Counts of degenerate rows where a floor fallback was applied."""

    fx_floor_hits: int = 0
    delta_floor_hits: int = 0

    def to_dict(self) -> dict:
        return {"fx_floor_hits": self.fx_floor_hits, "delta_floor_hits": self.delta_floor_hits}


@dataclass(frozen=True)
class PrecomputedCore:
    """All n-by-n quantities shared by the observed statistics and every bootstrap replicate.

    Index convention: row i is the summand observation, column j the sample
    evaluation point, so e.g. ``gmat[i, j]`` is the running integral of the
    estimated joint density at X_i evaluated at Z_j, and ``projmat[i, j]``
    is the projected indicator weight for observation i at evaluation
    point Z_j.
    """

    kmat: np.ndarray      # (n, n) unscaled product kernel over X diffs, zero diagonal
    fx: np.ndarray        # (n,)   leave-one-out density of X at X_i
    u: np.ndarray         # (n,)   density-weighted residuals
    fw: np.ndarray        # (n,)   leave-one-out joint density at W_i
    delta: np.ndarray     # (n,)   integral of the squared joint density at X_i
    gmat: np.ndarray      # (n, n) running integral of the joint density
    indx: np.ndarray      # (n, n) 1(X_i <= X_j) componentwise
    zind: np.ndarray      # (n, n) 1(Z_i <= Z_j) componentwise
    projmat: np.ndarray   # (n, n) projected indicator weights
    fzx: np.ndarray       # (n, n) estimated conditional CDF of Z given X_i at Z_j
    a_norm: float         # product of effective X bandwidths
    b_norm: float         # product of effective Z bandwidths
    diagnostics: CoreDiagnostics = field(default_factory=CoreDiagnostics)

    @property
    def n(self) -> int:
        return self.fx.size


def pairwise_kernel_matrix(data: Dataset, plan: BandwidthPlan, spec: KernelSpec) -> np.ndarray:
    """Unscaled product-kernel matrix over X differences with zero diagonal."""
    ax = plan.x_bandwidths(data.q)
    diff = data.x[:, None, :] - data.x[None, :, :]
    kmat = np.prod(epanechnikov(diff / ax, spec), axis=-1)
    np.fill_diagonal(kmat, 0.0)
    return kmat


def density_x(kmat: np.ndarray, n: int, a_norm: float) -> np.ndarray:
    """Leave-one-out density of X at each sample point: row sums of kmat."""
    return kmat.sum(axis=1) / ((n - 1) * a_norm)


def density_weighted_residuals(kmat: np.ndarray, y: np.ndarray, n: int, a_norm: float) -> np.ndarray:
    """Density-weighted residuals u_i = (1/((n-1)a^q)) sum_j K_ij (Y_i - Y_j).

    Equals (residual at i) * (density at i) without ever dividing by the
    estimated density.
    """
    return (kmat.sum(axis=1) * y - kmat @ y) / ((n - 1) * a_norm)


def _z_kernel_matrix(data: Dataset, plan: BandwidthPlan, spec: KernelSpec) -> np.ndarray:
    bz = plan.z_bandwidths(data.p)
    diff = data.z[:, None, :] - data.z[None, :, :]
    return np.prod(epanechnikov(diff / bz, spec), axis=-1)


def density_w(data: Dataset, kmat: np.ndarray, plan: BandwidthPlan, spec: KernelSpec) -> np.ndarray:
    """Leave-one-out joint density of (X, Z) at each sample point."""
    n = data.n
    lmat = _z_kernel_matrix(data, plan, spec)
    a_norm = float(np.prod(plan.x_bandwidths(data.q)))
    b_norm = float(np.prod(plan.z_bandwidths(data.p)))
    return (kmat * lmat).sum(axis=1) / ((n - 1) * a_norm * b_norm)


def g_hat(data: Dataset, kmat: np.ndarray, plan: BandwidthPlan, spec: KernelSpec) -> np.ndarray:
    """Running integral of the estimated joint density, exactly.

    gmat[i, j] = (1/((n-1)a^q)) sum_k K_ik prod_m CDF((Z_j^m - Z_k^m)/b_m),
    the closed form of the orthant integral of the density estimate up to Z_j.
    """
    n = data.n
    bz = plan.z_bandwidths(data.p)
    a_norm = float(np.prod(plan.x_bandwidths(data.q)))
    diff = data.z[None, :, :] - data.z[:, None, :]  # [k, j, m] = Z_j - Z_k
    cdfmat = np.prod(kernel_cdf(diff / bz, spec), axis=-1)
    return (kmat @ cdfmat) / ((n - 1) * a_norm)


def delta_hat(data: Dataset, kmat: np.ndarray, plan: BandwidthPlan, spec: KernelSpec) -> np.ndarray:
    """Integral of the squared joint density estimate at each X_i, exactly.

    Quadratic form v_i^T C v_i with v_i the i-th kernel row and
    C[j, k] = prod_m (k*k)((Z_j^m - Z_k^m)/b_m); all rows at once via one
    matrix product.
    """
    n = data.n
    bz = plan.z_bandwidths(data.p)
    a_norm = float(np.prod(plan.x_bandwidths(data.q)))
    b_norm = float(np.prod(plan.z_bandwidths(data.p)))
    diff = data.z[:, None, :] - data.z[None, :, :]
    conv = np.prod(kernel_selfconv(diff / bz, spec), axis=-1)
    quad = ((kmat @ conv) * kmat).sum(axis=1)
    return quad / (((n - 1) * a_norm) ** 2 * b_norm)


def leq_indicator_matrix(values: np.ndarray) -> np.ndarray:
    """out[k, j] = 1 iff values[k] <= values[j] componentwise (float matrix)."""
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    return np.all(v[:, None, :] <= v[None, :, :], axis=-1).astype(float)


def cond_cdf_given_x(
    kmat: np.ndarray,
    values: np.ndarray,
    fx: np.ndarray,
    floor: float,
    n: int,
    a_norm: float,
    diagnostics: CoreDiagnostics | None = None,
) -> np.ndarray:
    """Leave-one-out kernel estimate of the conditional CDF of ``values`` given X.

    out[i, j] = (1/(fx_i (n-1) a^q)) sum_{k != i} K_ik 1(value_k <= value_j).
    Rows with fx_i below ``floor`` fall back to the unconditional empirical
    CDF over k != i and are counted in ``diagnostics`` (degenerate rows are
    flagged, never fatal).
    """
    vind = leq_indicator_matrix(values)
    numer = (kmat @ vind) / ((n - 1) * a_norm)
    degenerate = fx < floor
    out = np.empty_like(numer)
    ok = ~degenerate
    out[ok] = numer[ok] / fx[ok, None]
    if degenerate.any():
        colsum = vind.sum(axis=0)
        out[degenerate] = (colsum[None, :] - vind[degenerate]) / (n - 1)
        if diagnostics is not None:
            diagnostics.fx_floor_hits += int(degenerate.sum())
    return out


def build_core(
    data: Dataset,
    plan: BandwidthPlan,
    spec: KernelSpec,
    guards: Guards = Guards(),
    dm_center: str = "leave_in",
) -> PrecomputedCore:
    """Assemble every shared quantity once; bootstrap replicates only reuse them.

    ``dm_center`` selects how the conditional CDF of Z given X used to
    recenter the unprojected bootstrap is estimated: ``"leave_in"`` keeps
    the own observation in both the numerator and the denominator of the
    kernel-weighted ratio, ``"leave_one_out"`` drops it.  Everything else
    is always leave-one-out.
    """
    if dm_center not in ("leave_in", "leave_one_out"):
        raise ValueError(f"unknown dm_center {dm_center!r}")
    n = data.n
    a_norm = float(np.prod(plan.x_bandwidths(data.q)))
    b_norm = float(np.prod(plan.z_bandwidths(data.p)))
    diagnostics = CoreDiagnostics()

    kmat = pairwise_kernel_matrix(data, plan, spec)
    fx = density_x(kmat, n, a_norm)
    u = density_weighted_residuals(kmat, data.y, n, a_norm)
    fw = density_w(data, kmat, plan, spec)
    gmat = g_hat(data, kmat, plan, spec)
    delta = delta_hat(data, kmat, plan, spec)
    indx = leq_indicator_matrix(data.x)
    zind = leq_indicator_matrix(data.z)
    projmat, degenerate_rows = projection_matrix(gmat, fw, delta, zind, guards.delta_floor)
    diagnostics.delta_floor_hits += degenerate_rows
    if dm_center == "leave_in":
        # adding the own-observation kernel weight K(0)^q on the diagonal
        # turns the leave-one-out ratio into the all-observation one; the
        # common normalization cancels inside the ratio
        kin = kmat + float(epanechnikov(0.0, spec)) ** data.q * np.eye(n)
        fx_in = density_x(kin, n, a_norm)
        fzx = cond_cdf_given_x(kin, data.z, fx_in, guards.fx_floor, n, a_norm, diagnostics)
    else:
        fzx = cond_cdf_given_x(kmat, data.z, fx, guards.fx_floor, n, a_norm, diagnostics)

    return PrecomputedCore(
        kmat=kmat, fx=fx, u=u, fw=fw, delta=delta, gmat=gmat,
        indx=indx, zind=zind, projmat=projmat, fzx=fzx,
        a_norm=a_norm, b_norm=b_norm, diagnostics=diagnostics,
    )
