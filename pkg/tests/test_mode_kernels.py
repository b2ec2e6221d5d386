"""Per-mode kernel operators: ODE identities, bounds, and norm estimates."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conelab.grid import make_grid, smooth_bump
from conelab.mode_kernels import (
    ENDPOINT,
    INV_R_P,
    ORIGIN,
    P_INV_R,
    KernelOperator,
    _first_cell_avg_coeffs,
    apply_P,
    apply_P_transpose_modes,
    apply_composite,
    composite_bound,
    composite_matrix,
    dense_matrix,
    inverse_residual,
    ode_residual,
    operator_norm,
    schur_certificate,
)

GRID = make_grid(1.0, 256, "log", r_min=1e-5)


def _bump(grid):
    return smooth_bump(grid.r, 0.2, 0.8)


def test_kernel_kind_guards():
    with pytest.raises(ValueError, match="unknown kernel kind"):
        KernelOperator(kind="middle", s=1.0, grid=GRID)
    with pytest.raises(ValueError, match="origin kind needs s > -1/2"):
        KernelOperator(kind=ORIGIN, s=-0.6, grid=GRID)
    with pytest.raises(ValueError, match="endpoint kind needs s < 1/2"):
        KernelOperator(kind=ENDPOINT, s=0.6, grid=GRID)


def test_apply_matches_dense():
    om = _bump(GRID)
    for kind, s in [(ORIGIN, 0.8), (ORIGIN, 3.0), (ENDPOINT, -1.2), (ENDPOINT, 0.3)]:
        op = KernelOperator(kind=kind, s=s, grid=GRID)
        dense = dense_matrix(op)
        assert np.max(np.abs(apply_P(op, om) - dense @ om)) <= 1e-9


def test_transpose_matches_dense_transpose():
    om = _bump(GRID)
    for kind, s in [(ORIGIN, 1.5), (ENDPOINT, -2.0)]:
        op = KernelOperator(kind=kind, s=s, grid=GRID)
        dense = dense_matrix(op)
        got = apply_P_transpose_modes(GRID, kind, np.array([s]), om[None, :])[0]
        assert np.max(np.abs(got - dense.T @ om)) <= 1e-9


def test_ode_residual_small_and_refining():
    vals = []
    for n in (512, 1024, 2048):
        g = make_grid(1.0, n, "log")
        op = KernelOperator(kind=ORIGIN, s=1.0, grid=g)
        vals.append(ode_residual(op, smooth_bump(g.r, 0.25, 0.75)))
    assert vals[0] > vals[1] > vals[2]
    assert vals[2] <= 1e-3


def test_ode_residual_rejects_zero_input():
    op = KernelOperator(kind=ORIGIN, s=1.0, grid=GRID)
    with pytest.raises(ValueError, match="empty input"):
        ode_residual(op, np.zeros(GRID.n))


def test_inverse_residual_range_guards():
    with pytest.raises(ValueError, match="origin kind needs s > 1/2"):
        inverse_residual(KernelOperator(kind=ORIGIN, s=0.3, grid=GRID), _bump(GRID))
    with pytest.raises(ValueError, match="endpoint kind needs s < -1/2"):
        inverse_residual(KernelOperator(kind=ENDPOINT, s=-0.4, grid=GRID), _bump(GRID))


def test_inverse_residual_second_order_refinement():
    vals = []
    for n in (1024, 2048, 4096):
        g = make_grid(1.0, n, "log")
        nu = smooth_bump(g.r, 0.3, 0.7)
        vals.append((
            inverse_residual(KernelOperator(kind=ORIGIN, s=2.0, grid=g), nu),
            inverse_residual(KernelOperator(kind=ENDPOINT, s=-2.0, grid=g), nu),
        ))
    for col in (0, 1):
        assert vals[0][col] > vals[1][col] > vals[2][col]
        assert vals[2][col] <= 1e-3


def test_composite_bound_values_and_guards():
    assert composite_bound(ORIGIN, 1.0, INV_R_P) == pytest.approx(2 / 3)
    assert composite_bound(ORIGIN, 1.0, P_INV_R) == pytest.approx(2.0)
    assert composite_bound(ENDPOINT, -1.0, INV_R_P) == pytest.approx(2.0)
    assert composite_bound(ENDPOINT, -1.0, P_INV_R) == pytest.approx(2 / 3)
    with pytest.raises(ValueError, match="unknown target"):
        composite_bound(ORIGIN, 1.0, "P_squared")
    with pytest.raises(ValueError, match="admissible range for target"):
        composite_bound(ORIGIN, 0.3, P_INV_R)
    with pytest.raises(ValueError, match="admissible range for target"):
        composite_bound(ENDPOINT, -0.3, INV_R_P)


def test_shift_identity_exact():
    # P_s (1/r) equals (1/r) P_{s-1} node by node in the dense matrices
    g = make_grid(1.0, 128, "log")
    for s in (1.2, 4.0):
        lhs = composite_matrix(g, ORIGIN, s, P_INV_R)
        rhs = dense_matrix(KernelOperator(kind=ORIGIN, s=s - 1, grid=g)) / g.r[:, None]
        assert np.array_equal(lhs, rhs)


def test_apply_composite_matches_matrix():
    om = _bump(GRID)
    for kind, s, target in [
        (ORIGIN, 0.8, INV_R_P),
        (ORIGIN, 1.7, P_INV_R),
        (ENDPOINT, -0.8, INV_R_P),
        (ENDPOINT, -1.7, P_INV_R),
    ]:
        got = apply_composite(GRID, kind, s, target, om)
        ref = composite_matrix(GRID, kind, s, target) @ om
        assert np.max(np.abs(got - ref)) <= 1e-10 * max(1.0, np.max(np.abs(ref)))


def test_power_norm_matches_dense_svd_with_first_cell_retirement():
    sw = np.sqrt(GRID.w)
    eye = np.eye(GRID.n)
    for kind, target, svals in [
        (ORIGIN, INV_R_P, [-0.3, 0.0, 0.8, 5.0]),
        (ENDPOINT, P_INV_R, [-0.7, -9.0, 0.3]),
    ]:
        est = operator_norm(GRID, kind, np.array(svals), target)
        for sv, got in zip(svals, np.atleast_1d(est.value)):
            s_eff = sv - 1.0 if target == P_INV_R else sv
            mat = composite_matrix(GRID, kind, sv, target)
            g0, g1, gu = _first_cell_avg_coeffs(GRID, kind, np.array([s_eff]))
            dense = dense_matrix(KernelOperator(kind=kind, s=s_eff, grid=GRID))
            mat[0] = g0[0] * eye[0] + g1[0] * eye[1] + gu[0] * dense[1]
            ref = np.linalg.svd(sw[:, None] * mat / sw[None, :], compute_uv=False)[0]
            assert abs(got - ref) <= 3e-8 * max(ref, 1.0)
        assert est.converged


@settings(max_examples=30, deadline=None)
@given(st.floats(min_value=0.6, max_value=10.0), st.booleans(), st.booleans())
def test_schur_certificate_never_exceeds_bound(mag, neg, swap):
    s = -mag if neg else mag
    kind = ORIGIN if s > -0.5 else ENDPOINT
    target = INV_R_P
    if swap and ((kind == ORIGIN and s > 0.5) or (kind == ENDPOINT and s < -0.5)):
        target = P_INV_R
    cert = schur_certificate(GRID, kind, s, target)
    assert cert.passed
    bound = composite_bound(kind, s, target)
    assert max(cert.row_max, cert.col_max) <= bound * (1 + 1e-9)


def test_operator_norm_mellin_limits():
    g = make_grid(1.0, 2048, "log", r_min=1e-8)
    hardy = operator_norm(g, ORIGIN, 0.0, INV_R_P)
    assert hardy.value == pytest.approx(2.0, rel=0.05)
    one = operator_norm(g, ORIGIN, 1.0, INV_R_P)
    assert one.value == pytest.approx(2 / 3, rel=0.05)


def test_norms_sit_below_composite_bounds():
    # coarse grids can overshoot the symbol bound; 1024 nodes keeps the
    # discrete estimate on the safe side
    g = make_grid(1.0, 1024, "log")
    rng = np.random.default_rng(4)
    draws = rng.uniform(0.6, 8.0, 12) * rng.choice([-1.0, 1.0], 12)
    for kind, ss in ((ORIGIN, draws[draws > 0]), (ENDPOINT, draws[draws < 0])):
        est = operator_norm(g, kind, ss, INV_R_P)
        bounds = np.array([composite_bound(kind, float(sv), INV_R_P) for sv in ss])
        assert np.all(np.atleast_1d(est.value) <= bounds * (1 + 1e-6))
