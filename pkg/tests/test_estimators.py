"""Leave-one-out estimators: hand oracles, quadrature oracles, and invariants."""

from __future__ import annotations

import numpy as np
import pytest

from projtest import (
    Dataset,
    Guards,
    KernelSpec,
    bandwidth_rule,
    build_core,
    cond_cdf_given_x,
    delta_hat,
    density_w,
    density_weighted_residuals,
    density_x,
    g_hat,
    pairwise_kernel_matrix,
)
from projtest.estimators import CoreDiagnostics, leq_indicator_matrix

from conftest import make_dataset, quad_delta, quad_g

SPEC2 = KernelSpec(2)


def hand_case():
    # n=3, q=p=1 instance small enough to evaluate by hand
    data = Dataset.from_arrays([1.0, 2.0, 0.0], [[0.0], [0.2], [1.0]], [[0.0], [0.1], [5.0]])
    plan = bandwidth_rule(3, 1.0)
    plan = type(plan)(c=1.0, a=0.5, b=0.5, rate_exponent=plan.rate_exponent)
    return data, plan


def test_pairwise_kernel_hand_values():
    data, plan = hand_case()
    kmat = pairwise_kernel_matrix(data, plan, SPEC2)
    assert np.allclose(np.diag(kmat), 0.0)
    assert kmat[0, 1] == pytest.approx(0.75 * (1 - 0.16), abs=1e-15)  # 0.63
    assert kmat[0, 2] == 0.0 and kmat[1, 2] == 0.0
    assert np.allclose(kmat, kmat.T)


def test_pairwise_kernel_identical_points():
    data = Dataset.from_arrays([0.0, 1.0, 2.0, 3.0], np.zeros((4, 1)), np.arange(4.0)[:, None])
    kmat = pairwise_kernel_matrix(data, bandwidth_rule(4, 1.0), SPEC2)
    off = kmat[~np.eye(4, dtype=bool)]
    assert np.allclose(off, 0.75)


def test_density_x_hand_value():
    data, plan = hand_case()
    kmat = pairwise_kernel_matrix(data, plan, SPEC2)
    fx = density_x(kmat, 3, 0.5)
    assert fx[0] == pytest.approx(0.63 / (2 * 0.5), abs=1e-15)
    assert fx[2] == 0.0  # isolated point: zero is a legal value


def test_density_weighted_residuals_hand_value():
    data, plan = hand_case()
    kmat = pairwise_kernel_matrix(data, plan, SPEC2)
    u = density_weighted_residuals(kmat, data.y, 3, 0.5)
    assert u[0] == pytest.approx(0.63 * (1.0 - 2.0) / 1.0, abs=1e-15)
    assert u[2] == 0.0


def test_constant_response_gives_zero_residuals():
    data = make_dataset(1, 12)
    data = Dataset.from_arrays(np.full(12, 3.14), data.x, data.z)
    plan = bandwidth_rule(12, 1.0)
    kmat = pairwise_kernel_matrix(data, plan, SPEC2)
    u = density_weighted_residuals(kmat, data.y, 12, plan.a)
    assert np.allclose(u, 0.0)


def test_leave_one_out_identity():
    # u_i / fx_i + NW-regression(X_i) recovers Y_i wherever fx_i > 0
    data = make_dataset(7, 25)
    plan = bandwidth_rule(25, 2.0)
    kmat = pairwise_kernel_matrix(data, plan, SPEC2)
    fx = density_x(kmat, 25, plan.a)
    u = density_weighted_residuals(kmat, data.y, 25, plan.a)
    nw = (kmat @ data.y) / ((25 - 1) * plan.a)
    for i in range(25):
        if fx[i] > 0:
            assert u[i] / fx[i] + nw[i] / fx[i] == pytest.approx(data.y[i], abs=1e-10)


def test_density_w_hand_value():
    data, plan = hand_case()
    kmat = pairwise_kernel_matrix(data, plan, SPEC2)
    fw = density_w(data, kmat, plan, SPEC2)
    k_z = 0.75 * (1 - ((0.0 - 0.1) / 0.5) ** 2)  # 0.72
    assert fw[0] == pytest.approx(0.63 * k_z / (2 * 0.5 * 0.5), abs=1e-14)


def test_density_w_identical_rows():
    n = 5
    data = Dataset.from_arrays(np.arange(5.0), np.zeros((n, 1)), np.zeros((n, 2)))
    plan = bandwidth_rule(n, 1.0)
    fw = density_w(data, pairwise_kernel_matrix(data, plan, SPEC2), plan, SPEC2)
    assert np.allclose(fw, 0.75**3 / (plan.a * plan.b**2))


@pytest.mark.parametrize("seed,n,p", [(11, 10, 1), (12, 15, 1), (13, 10, 2), (14, 12, 2)])
def test_g_hat_matches_quadrature(seed, n, p):
    data = make_dataset(seed, n, q=1, p=p)
    plan = bandwidth_rule(n, 1.0)
    kmat = pairwise_kernel_matrix(data, plan, SPEC2)
    gmat = g_hat(data, kmat, plan, SPEC2)
    for i, j in [(0, 1), (2, n - 1), (n - 1, 0)]:
        assert gmat[i, j] == pytest.approx(quad_g(data, plan, SPEC2, i, data.z[j]), abs=1e-8)


@pytest.mark.parametrize("seed,n,p", [(21, 10, 1), (22, 15, 1), (23, 8, 2)])
def test_delta_hat_matches_quadrature(seed, n, p):
    data = make_dataset(seed, n, q=1, p=p)
    plan = bandwidth_rule(n, 1.0)
    kmat = pairwise_kernel_matrix(data, plan, SPEC2)
    delta = delta_hat(data, kmat, plan, SPEC2)
    for i in range(0, n, 3):
        assert delta[i] == pytest.approx(quad_delta(data, plan, SPEC2, i), abs=1e-8)


def test_delta_nonnegative_order2():
    data = make_dataset(31, 20)
    plan = bandwidth_rule(20, 0.7)
    delta = delta_hat(data, pairwise_kernel_matrix(data, plan, SPEC2), plan, SPEC2)
    assert np.all(delta >= 0)


def test_g_hat_saturation_and_monotonicity():
    data = make_dataset(41, 12)
    plan = bandwidth_rule(12, 1.0)
    spec = SPEC2
    kmat = pairwise_kernel_matrix(data, plan, spec)
    fx = density_x(kmat, 12, plan.a)
    # append an evaluation point dominating every Z: the row integral saturates
    # the appended evaluation point dominates every sample Z; its X is
    # isolated so its own kernel weight vanishes from every row sum
    z_top = data.z.max() + plan.b + 1.0
    x_far = data.x.max() + plan.a + 10.0
    data_aug = Dataset.from_arrays(
        np.append(data.y, 0.0),
        np.vstack([data.x, [[x_far]]]),
        np.vstack([data.z, [[z_top]]]),
    )
    kmat_aug = pairwise_kernel_matrix(data_aug, plan, spec)
    gmat_aug = g_hat(data_aug, kmat_aug, plan, spec)
    fx_aug = density_x(kmat_aug, 13, plan.a)
    assert np.allclose(gmat_aug[:, 12], fx_aug, atol=1e-12)
    # monotone in the evaluation point under the componentwise order
    gmat = g_hat(data, kmat, plan, spec)
    order = np.argsort(data.z[:, 0])
    for i in range(12):
        assert np.all(np.diff(gmat[i, order]) >= -1e-12)
        assert np.all(gmat[i] <= fx[i] + 1e-12)
        assert np.all(gmat[i] >= -1e-12)


def test_cond_cdf_matches_direct_division():
    data = make_dataset(51, 10)
    plan = bandwidth_rule(10, 1.5)
    kmat = pairwise_kernel_matrix(data, plan, SPEC2)
    fx = density_x(kmat, 10, plan.a)
    out = cond_cdf_given_x(kmat, data.z, fx, 1e-12, 10, plan.a)
    zind = leq_indicator_matrix(data.z)
    for i in range(10):
        if fx[i] < 1e-12:
            continue
        for j in range(10):
            direct = sum(kmat[i, k] * zind[k, j] for k in range(10) if k != i) / ((10 - 1) * plan.a * fx[i])
            assert out[i, j] == pytest.approx(direct, abs=1e-12)


def test_cond_cdf_extreme_columns():
    data = make_dataset(52, 10)
    plan = bandwidth_rule(10, 1.5)
    kmat = pairwise_kernel_matrix(data, plan, SPEC2)
    fx = density_x(kmat, 10, plan.a)
    out = cond_cdf_given_x(kmat, data.z, fx, 1e-12, 10, plan.a)
    jmax = int(np.argmax(data.z[:, 0]))
    jmin = int(np.argmin(data.z[:, 0]))
    for i in range(10):
        if fx[i] < 1e-12:
            continue
        assert out[i, jmax] == pytest.approx(1.0, abs=1e-12)
        direct = kmat[i, jmin] / kmat[i].sum() if kmat[i].sum() > 0 else 0.0
        assert out[i, jmin] == pytest.approx(direct, abs=1e-12)


def test_cond_cdf_degenerate_fallback_counts():
    # an isolated X point gets the unconditional empirical CDF and a diagnostic
    x = np.array([[0.0], [0.01], [0.02], [50.0]])
    data = Dataset.from_arrays(np.arange(4.0), x, np.arange(4.0)[:, None])
    plan = bandwidth_rule(4, 1.0)
    kmat = pairwise_kernel_matrix(data, plan, SPEC2)
    fx = density_x(kmat, 4, plan.a)
    assert fx[3] == 0.0
    diag = CoreDiagnostics()
    out = cond_cdf_given_x(kmat, data.z, fx, 1e-12, 4, plan.a, diag)
    assert diag.fx_floor_hits == 1
    zind = leq_indicator_matrix(data.z)
    expected = (zind[:, :].sum(axis=0) - zind[3, :]) / 3
    assert np.allclose(out[3], expected)


def test_permutation_equivariance():
    data = make_dataset(61, 14)
    plan = bandwidth_rule(14, 1.0)
    core = build_core(data, plan, SPEC2)
    rng = np.random.default_rng(0)
    perm = rng.permutation(14)
    pdata = Dataset.from_arrays(data.y[perm], data.x[perm], data.z[perm])
    pcore = build_core(pdata, plan, SPEC2)
    # permutation reorders the summands, so agreement holds up to
    # floating-point associativity, not bitwise
    tight = dict(rtol=1e-12, atol=1e-14)
    assert np.allclose(pcore.fx, core.fx[perm], **tight)
    assert np.allclose(pcore.u, core.u[perm], **tight)
    assert np.allclose(pcore.fw, core.fw[perm], **tight)
    assert np.allclose(pcore.delta, core.delta[perm], **tight)
    for name in ("kmat", "indx", "zind"):
        full = getattr(core, name)[np.ix_(perm, perm)]
        assert np.array_equal(getattr(pcore, name), full), name
    for name in ("gmat", "projmat", "fzx"):
        full = getattr(core, name)[np.ix_(perm, perm)]
        assert np.allclose(getattr(pcore, name), full, **tight), name


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset.from_arrays([1.0, 2.0], [[0.0], [1.0]], [[0.0], [1.0]])
    with pytest.raises(ValueError):
        Dataset.from_arrays([1.0, np.nan, 2.0], np.zeros((3, 1)), np.zeros((3, 1)))
    with pytest.raises(ValueError):
        Dataset.from_arrays([1.0, 2.0, 3.0], np.zeros((2, 1)), np.zeros((3, 1)))


def test_guards_validation():
    with pytest.raises(ValueError):
        Guards(fx_floor=0.0)


def test_build_core_populates_all_fields(small_data):
    plan = bandwidth_rule(small_data.n, 1.0)
    core = build_core(small_data, plan, SPEC2)
    n = small_data.n
    for name in ("kmat", "gmat", "indx", "zind", "projmat", "fzx"):
        assert getattr(core, name).shape == (n, n)
    for name in ("fx", "u", "fw", "delta"):
        assert getattr(core, name).shape == (n,)
    assert core.a_norm == pytest.approx(plan.a)
    assert np.all(core.fx >= 0)
    assert np.all(core.delta >= 0)
