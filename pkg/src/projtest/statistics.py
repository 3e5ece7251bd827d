"""Empirical processes over the sample grid and their CvM/KS functionals.

Each process is evaluated at the n sample evaluation points (column j of
the core matrices).  The summand matrices built here are the only inputs
the multiplier bootstrap needs: a bootstrap replicate is one vector-matrix
product against its multiplier draw.

Process kinds:
    projected     -- density-weighted residuals against projected weights
    dm            -- density-weighted residuals against raw joint indicators
    projected_ci  -- indicator-residual matrix against projected weights
    dm_ci         -- indicator-residual matrix against raw joint indicators
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimators import PrecomputedCore, leq_indicator_matrix

__all__ = [
    "ProcessValues",
    "StatPair",
    "process_column_means",
    "summand_matrix",
    "projected_process",
    "dm_process",
    "ci_residual_matrix",
    "ci_process",
    "dm_ci_process",
    "cvm_stat",
    "ks_stat",
]

PROCESS_KINDS = ("projected", "dm", "projected_ci", "dm_ci")


@dataclass(frozen=True)
class ProcessValues:
    """Process values over the n sample evaluation points."""

    values: np.ndarray
    kind: str

    def __post_init__(self) -> None:
        if self.kind not in PROCESS_KINDS:
            raise ValueError(f"unknown process kind {self.kind!r}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite process values")


@dataclass(frozen=True)
class StatPair:
    """Scaled statistics: cvm is reported as n*CvM, ks as sqrt(n)*KS."""

    cvm: float
    ks: float

    def __post_init__(self) -> None:
        if self.cvm < 0 or self.ks < 0:
            raise ValueError("statistics must be nonnegative")


def summand_matrix(core: PrecomputedCore, kind: str, ci_resid: np.ndarray | None = None,
                   bootstrap: bool = False) -> np.ndarray:
    """Matrix M with M[i, j] the i-th summand of the process at evaluation point j.

    Observed process values are column means of M; a bootstrap replicate
    with multipliers V is (V @ M) / n.  For the dm kinds the bootstrap
    summands differ from the observed ones: the raw indicator of Z is
    recentered by the estimated conditional CDF of Z given X, which is how
    the unprojected benchmark mimics its limit under the null.
    """
    if kind in ("projected", "dm"):
        resid = core.u[:, None]
    elif kind in ("projected_ci", "dm_ci"):
        if ci_resid is None:
            raise ValueError("ci kinds need the indicator-residual matrix")
        resid = ci_resid
    else:
        raise ValueError(f"unknown process kind {kind!r}")

    if kind in ("projected", "projected_ci"):
        zpart = core.projmat
    elif bootstrap:
        zpart = core.zind - core.fzx
    else:
        zpart = core.zind
    return resid * core.indx * zpart


def process_column_means(m: np.ndarray) -> np.ndarray:
    """Column means via the same vector product the bootstrap uses.

    Using an explicit ones-vector product (instead of ndarray.sum) makes the
    observed process bitwise-identical to a bootstrap replicate with unit
    multipliers, which is part of the bootstrap contract.
    """
    n = m.shape[0]
    return (np.ones(n) @ m) / n


def projected_process(core: PrecomputedCore) -> ProcessValues:
    """Projected process at the sample points."""
    m = summand_matrix(core, "projected")
    return ProcessValues(values=process_column_means(m), kind="projected")


def dm_process(core: PrecomputedCore) -> ProcessValues:
    """Unprojected benchmark process at the sample points."""
    m = summand_matrix(core, "dm")
    return ProcessValues(values=process_column_means(m), kind="dm")


def ci_residual_matrix(core: PrecomputedCore, y: np.ndarray) -> np.ndarray:
    """Density-weighted indicator residuals E[i, j] evaluated at y = Y_j.

    E[i, j] = (1/((n-1)a^q)) sum_k K_ik [1(Y_i <= Y_j) - 1(Y_k <= Y_j)],
    the denominator-free form of (indicator residual) * (density at X_i).
    """
    n = core.n
    yind = leq_indicator_matrix(y)
    rowsum = core.kmat.sum(axis=1)
    return (rowsum[:, None] * yind - core.kmat @ yind) / ((n - 1) * core.a_norm)


def ci_process(core: PrecomputedCore, ci_resid: np.ndarray) -> ProcessValues:
    """Projected conditional-independence process at the sample grid (Y_j, W_j)."""
    m = summand_matrix(core, "projected_ci", ci_resid)
    return ProcessValues(values=process_column_means(m), kind="projected_ci")


def dm_ci_process(core: PrecomputedCore, ci_resid: np.ndarray) -> ProcessValues:
    """Unprojected conditional-independence process at the sample grid."""
    m = summand_matrix(core, "dm_ci", ci_resid)
    return ProcessValues(values=process_column_means(m), kind="dm_ci")


def cvm_stat(pv: ProcessValues, n: int) -> float:
    """n * mean of squared process values over the sample grid."""
    return float(n * np.mean(pv.values**2))


def ks_stat(pv: ProcessValues, n: int) -> float:
    """sqrt(n) * maximum absolute process value over the sample grid."""
    return float(np.sqrt(n) * np.max(np.abs(pv.values)))
