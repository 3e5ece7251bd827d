"""Epanechnikov kernels of order 2 and 4 with exact antiderivatives.

Conventions:
    k2(u) = (3/4)(1 - u^2)                          on |u| <= 1
    k4(u) = (15/8)(1 - 7u^2/3) * k2(u)              on |u| <= 1
    kernel_cdf(u)      = int_{-inf}^{u} k(t) dt
    kernel_selfconv(v) = int k(t) k(t + v) dt        (vanishes for |v| >= 2)

The order-4 kernel integrates to 1 with vanishing moments of order 1..3.
Product kernels are UNSCALED: callers apply the 1/h^d normalization.
All polynomial coefficients below are exact rationals evaluated in double
precision; quadrature equivalents live in the test suite only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "KernelSpec",
    "BandwidthPlan",
    "CANONICAL_COEF",
    "epanechnikov",
    "kernel_cdf",
    "kernel_selfconv",
    "product_kernel",
    "bandwidth_rule",
]

_SUPPORTED_ORDERS = (2, 4)

# Rule-of-thumb rate exponents, one per kernel order.
_RATE_EXPONENT = {2: -1.0 / 3.0, 4: -1.0 / 6.0}

# Canonical-kernel rescaling constant for the order-2 Epanechnikov,
# (R(k)/mu_2(k)^2)^(1/5) = (0.6/0.04)^(1/5) = 15^(1/5).  A rule-of-thumb
# coefficient quoted on the canonical scale multiplies n^(-rate) by this
# factor when applied to the unit-support kernel used here.
CANONICAL_COEF = 15.0 ** 0.2


@dataclass(frozen=True)
class KernelSpec:
    """Univariate Epanechnikov kernel of a given order."""

    order: int = 2
    support_radius: float = 1.0

    def __post_init__(self) -> None:
        if self.order not in _SUPPORTED_ORDERS:
            raise ValueError(f"kernel order must be one of {_SUPPORTED_ORDERS}, got {self.order}")
        if self.support_radius != 1.0:
            raise ValueError("only unit support radius is supported")


@dataclass(frozen=True)
class BandwidthPlan:
    """Rule-of-thumb bandwidths a (for X) and b (for Z).

    With ``scale_mode="none"`` both bandwidths equal c * n**rate_exponent.
    With ``scale_mode="per_coordinate_std"`` the effective per-coordinate
    bandwidths are a * x_scale[m] and b * z_scale[m].
    """

    c: float
    a: float
    b: float
    rate_exponent: float
    scale_mode: str = "none"
    x_scale: np.ndarray | None = None
    z_scale: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.a <= 0 or self.b <= 0:
            raise ValueError("bandwidths must be positive")
        if self.scale_mode not in ("none", "per_coordinate_std"):
            raise ValueError(f"unknown scale_mode {self.scale_mode!r}")

    def x_bandwidths(self, q: int) -> np.ndarray:
        """Effective per-coordinate bandwidth vector for X, shape (q,)."""
        if self.x_scale is not None:
            if len(self.x_scale) != q:
                raise ValueError("x_scale length does not match q")
            return self.a * np.asarray(self.x_scale, dtype=float)
        return np.full(q, self.a)

    def z_bandwidths(self, p: int) -> np.ndarray:
        """Effective per-coordinate bandwidth vector for Z, shape (p,)."""
        if self.z_scale is not None:
            if len(self.z_scale) != p:
                raise ValueError("z_scale length does not match p")
            return self.b * np.asarray(self.z_scale, dtype=float)
        return np.full(p, self.b)


def epanechnikov(u, spec: KernelSpec = KernelSpec()) -> np.ndarray | float:
    """Evaluate the order-2 or order-4 Epanechnikov kernel.

    Vectorized; total function (returns 0 outside the support).
    """
    u = np.asarray(u, dtype=float)
    u2 = u * u
    inside = u2 <= 1.0
    if spec.order == 2:
        out = np.where(inside, 0.75 * (1.0 - u2), 0.0)
    else:
        # (45/32)(1 - 10/3 u^2 + 7/3 u^4)
        out = np.where(inside, 1.40625 * (1.0 + u2 * (u2 * (7.0 / 3.0) - 10.0 / 3.0)), 0.0)
    return out if out.ndim else float(out)


def kernel_cdf(u, spec: KernelSpec = KernelSpec()) -> np.ndarray | float:
    """Exact antiderivative of the kernel, clamped to {0, 1} outside [-1, 1].

    For order 4 the value may leave [0, 1] inside the support (the kernel
    takes negative values); outside the support it is exactly 0 or 1.
    """
    u = np.asarray(u, dtype=float)
    uc = np.clip(u, -1.0, 1.0)
    if spec.order == 2:
        # 1/2 + (3/4)u - (1/4)u^3
        out = 0.5 + uc * (0.75 - 0.25 * uc * uc)
    else:
        # 1/2 + (45/32)u - (25/16)u^3 + (21/32)u^5
        u2 = uc * uc
        out = 0.5 + uc * (45.0 / 32.0 + u2 * (u2 * (21.0 / 32.0) - 25.0 / 16.0))
    # clipping already pins values outside the support to the exact endpoints
    return out if out.ndim else float(out)


def kernel_selfconv(v, spec: KernelSpec = KernelSpec()) -> np.ndarray | float:
    """Self-convolution (k * k)(v); even in v, zero for |v| >= 2."""
    v = np.asarray(v, dtype=float)
    w = np.abs(v)
    # strictly inside: the polynomial's analytic zero at |v| = 2 is returned
    # as an exact 0.0 rather than rounding residue
    inside = w < 2.0
    ws = np.where(inside, w, 0.0)
    if spec.order == 2:
        # 3/5 - (3/4)v^2 + (3/8)v^3 - (3/160)v^5  on [0, 2]
        out = 0.6 + ws * ws * (-0.75 + ws * (0.375 - (3.0 / 160.0) * ws * ws))
    else:
        # 5/4 - (75/16)v^2 + (75/32)v^3 + (105/32)v^4 - (165/64)v^5
        #     + (75/256)v^7 - (35/2048)v^9  on [0, 2]
        out = 1.25 + ws * ws * (
            -75.0 / 16.0
            + ws * (75.0 / 32.0 + ws * (105.0 / 32.0 + ws * (-165.0 / 64.0 + ws * ws * (75.0 / 256.0 - (35.0 / 2048.0) * ws * ws))))
        )
    out = np.where(inside, out, 0.0)
    return out if out.ndim else float(out)


def product_kernel(diff, h, spec: KernelSpec = KernelSpec()) -> np.ndarray | float:
    """Unscaled product kernel over the last axis of ``diff``.

    ``h`` may be a scalar or a per-coordinate vector; the 1/h^d
    normalization is the caller's responsibility.
    """
    diff = np.asarray(diff, dtype=float)
    h = np.asarray(h, dtype=float)
    if np.any(h <= 0):
        raise ValueError("bandwidth must be positive")
    vals = epanechnikov(diff / h, spec)
    out = np.prod(vals, axis=-1)
    return out if np.ndim(out) else float(out)


def bandwidth_rule(
    n: int,
    c: float,
    spec: KernelSpec = KernelSpec(),
    scale_mode: str = "none",
    x: np.ndarray | None = None,
    z: np.ndarray | None = None,
) -> BandwidthPlan:
    """Rule-of-thumb plan: a = b = c * n**(-1/3) for order 2, c * n**(-1/6) for order 4.

    ``scale_mode="per_coordinate_std"`` additionally records per-coordinate
    sample standard deviations of ``x`` and ``z`` as multipliers (off by
    default: the plain formula is the reference behavior).
    """
    if n < 3:
        raise ValueError(f"need n >= 3, got {n}")
    if c <= 0:
        raise ValueError("coefficient c must be positive")
    rate = _RATE_EXPONENT[spec.order]
    h = c * float(n) ** rate
    x_scale = z_scale = None
    if scale_mode == "per_coordinate_std":
        if x is None or z is None:
            raise ValueError("per_coordinate_std scaling requires x and z samples")
        x_scale = np.std(np.atleast_2d(np.asarray(x, dtype=float).T).T, axis=0, ddof=1)
        z_scale = np.std(np.atleast_2d(np.asarray(z, dtype=float).T).T, axis=0, ddof=1)
        if np.any(x_scale <= 0) or np.any(z_scale <= 0):
            raise ValueError("degenerate (zero-variance) coordinate; cannot scale bandwidths")
    return BandwidthPlan(c=c, a=h, b=h, rate_exponent=rate, scale_mode=scale_mode,
                         x_scale=x_scale, z_scale=z_scale)
