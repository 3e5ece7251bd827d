"""Estimated orthogonal projection of the indicator weight.

The projected weight for observation i at evaluation point z is the raw
indicator 1(Z_i <= z) minus its best linear predictor given the joint
density value at W_i, conditionally on X_i:

    proj[i](z) = 1(Z_i <= z) - fw_i * G_i(z) / delta_i.

By construction the sample analogue of the prediction error is orthogonal
to the density weight: integrating fw(X_i, .) against the projected weight
gives G_i(z) - delta_i * G_i(z) / delta_i = 0 identically, which
``orthogonality_defect`` verifies numerically.
"""

from __future__ import annotations

import numpy as np

__all__ = ["projection_matrix", "orthogonality_defect"]


def projection_matrix(
    gmat: np.ndarray,
    fw: np.ndarray,
    delta: np.ndarray,
    zind: np.ndarray,
    delta_floor: float,
) -> tuple[np.ndarray, int]:
    """Projected indicator weights, one row per observation.

    Rows where ``delta`` falls below ``delta_floor`` keep the raw indicator
    (the correction is dropped rather than amplified through a near-zero
    denominator); the count of such rows is returned alongside the matrix.
    """
    if delta_floor <= 0:
        raise ValueError("delta_floor must be positive")
    degenerate = delta < delta_floor
    safe_delta = np.where(degenerate, 1.0, delta)
    correction = (fw / safe_delta)[:, None] * gmat
    correction[degenerate] = 0.0
    return zind - correction, int(degenerate.sum())


def _segment_rule(breaks: np.ndarray, nodes_per_segment: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on each interval of a sorted break vector."""
    xs, ws = np.polynomial.legendre.leggauss(nodes_per_segment)
    lo = breaks[:-1][:, None]
    hi = breaks[1:][:, None]
    half = 0.5 * (hi - lo)
    nodes = (0.5 * (hi + lo) + half * xs[None, :]).ravel()
    weights = (half * ws[None, :]).ravel()
    return nodes, weights


def orthogonality_defect(
    core,
    data,
    plan,
    spec,
    i: int,
    j: int,
    nodes_per_segment: int = 8,
    delta_floor: float = 1e-12,
) -> float:
    """Numerically integrate the density estimate against the projected weight.

    Evaluates, for observation i and evaluation point Z_j,

        int fw(X_i, zbar) [1(zbar <= Z_j) - fw(X_i, zbar) G_i(Z_j)/delta_i] dzbar

    by piecewise Gauss-Legendre quadrature with segment breaks at every
    kernel-support edge and at Z_j (the integrand is piecewise polynomial,
    so enough nodes per segment make the rule exact).  Exists as a
    self-check: the result is identically zero up to quadrature round-off.

    Refuses degenerate rows (delta below ``delta_floor``) and reports
    non-stabilizing quadrature.
    """
    from .kernels import epanechnikov

    if core.delta[i] < delta_floor:
        raise ValueError(f"row {i} is degenerate (delta < {delta_floor}); correction undefined")

    n, p, q = data.n, data.p, data.q
    bz = plan.z_bandwidths(p)
    a_norm = float(np.prod(plan.x_bandwidths(q)))
    b_norm = float(np.prod(bz))
    scale = 1.0 / ((n - 1) * a_norm * b_norm)
    krow = core.kmat[i]
    ratio = core.gmat[i, j] / core.delta[i]

    def integrate(nodes_per_seg: int) -> float:
        axes = []
        for m in range(p):
            edges = np.concatenate([data.z[:, m] - bz[m], data.z[:, m] + bz[m], [data.z[j, m]]])
            axes.append(_segment_rule(np.unique(edges), nodes_per_seg))
        grids = np.meshgrid(*[nodes for nodes, _ in axes], indexing="ij")
        points = np.stack([g.ravel() for g in grids], axis=-1)          # (N, p)
        wgrids = np.meshgrid(*[w for _, w in axes], indexing="ij")
        weights = np.prod(np.stack([w.ravel() for w in wgrids], axis=-1), axis=-1)
        kern = np.prod(
            epanechnikov((points[:, None, :] - data.z[None, :, :]) / bz, spec), axis=-1
        )                                                               # (N, n)
        fw_vals = scale * (kern * krow).sum(axis=1)
        ind = np.all(points <= data.z[j], axis=-1).astype(float)
        integrand = fw_vals * (ind - fw_vals * ratio)
        return float((integrand * weights).sum())

    coarse = integrate(nodes_per_segment)
    fine = integrate(nodes_per_segment + 4)
    if abs(coarse - fine) > 1e-7 * max(1.0, abs(fine)):
        raise RuntimeError(f"quadrature did not stabilize: {coarse} vs {fine}")
    return fine
