"""Grids, quadrature, radial derivatives, cutoffs and probe sections."""

import numpy as np
import pytest

from conelab.grid import (
    Cutoff,
    ModeSection,
    RadialGrid,
    first_derivative,
    make_cutoff,
    make_grid,
    make_two_ended_grid,
    random_smooth_sections,
    smooth_bump,
    truncate_grid,
)
from conelab.link import LinkSpectrum

SPEC2 = LinkSpectrum(entries=((1.5, 1), (-1.5, 1)))


def test_make_grid_schemes_cover_interval():
    for scheme in ("uniform", "log"):
        g = make_grid(1.0, 128, scheme)
        assert g.n == 128
        assert g.r[0] > 0 and g.r[-1] == pytest.approx(1.0)
        assert np.all(np.diff(g.r) > 0)


def test_make_grid_guards():
    with pytest.raises(ValueError, match="at least 16"):
        make_grid(1.0, 8)
    with pytest.raises(ValueError, match="theta must be positive"):
        make_grid(0.0, 64)
    with pytest.raises(ValueError, match="smaller than theta"):
        make_grid(1.0, 64, r_min=2.0)
    with pytest.raises(ValueError, match="unknown grid scheme"):
        make_grid(1.0, 64, "chebyshev")


def test_quadrature_integrates_smooth_functions():
    g = make_grid(1.0, 4096, "log")
    # int_0^1 r^2 dr = 1/3; the open left end contributes O(r_min)
    assert g.integrate(g.r**2) == pytest.approx(1 / 3, rel=1e-5)
    assert g.integrate(np.ones(g.n)) == pytest.approx(1.0, rel=1e-5)


def test_first_derivative_second_order():
    errs = []
    for nn in (512, 1024, 2048):
        g = make_grid(1.0, nn, "log")
        v = np.sin(3 * g.r)
        d = first_derivative(g, v[None, :])[0]
        errs.append(np.max(np.abs(d - 3 * np.cos(3 * g.r))[8:-8]))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] <= 1e-4


def test_truncate_grid_preserves_nodes():
    g = make_grid(1.0, 256, "log")
    inner, k = truncate_grid(g, 0.3)
    assert np.array_equal(inner.r, g.r[:k])
    assert inner.theta == inner.r[-1] <= 0.3
    with pytest.raises(ValueError, match="fewer than 16"):
        truncate_grid(g, g.r[3])


def test_two_ended_grid_refines_both_ends():
    g = make_two_ended_grid(1 << 12)
    assert g.r[0] == pytest.approx(1e-5)
    assert np.pi - g.r[-1] < 1e-4
    assert np.all(np.diff(g.r) > 0)
    assert g.integrate(np.sin(g.r)) == pytest.approx(2.0, rel=1e-4)


def test_cutoff_shape_and_slope_budget():
    g = make_grid(1.0, 2048, "log")
    for eps in (0.5, 0.25, 0.1):
        cut = make_cutoff(eps, g)
        assert isinstance(cut, Cutoff)
        assert np.all(cut.tau[g.r >= eps] == 0.0)
        assert np.all(cut.tau[g.r <= cut.delta * eps] == 1.0)
        assert np.max(np.abs(cut.r_dtau)) <= eps
        # callable evaluation agrees with the sampled arrays
        assert np.allclose(cut.evaluate(g.r), cut.tau, atol=1e-12)


def test_cutoff_guards():
    g = make_grid(1.0, 64, "log")
    with pytest.raises(ValueError, match="eps must be positive"):
        make_cutoff(0.0, g)
    with pytest.raises(ValueError, match="inside the grid interval"):
        make_cutoff(1.5, g)


def test_mode_section_shape_guard():
    g = make_grid(1.0, 64, "log")
    with pytest.raises(ValueError, match="does not match"):
        ModeSection(grid=g, spectrum=SPEC2, coeffs=np.zeros((3, g.n)))


def test_random_sections_are_grid_transferable():
    coarse = make_grid(1.0, 512, "log")
    fine = make_grid(1.0, 1024, "log")
    u = random_smooth_sections(coarse, SPEC2, 2, seed=9)[1]
    v = random_smooth_sections(fine, SPEC2, 2, seed=9)[1]
    # doubling the log grid keeps every coarse node, so values transfer
    shared = np.isin(fine.r, coarse.r)
    assert shared.sum() > 256
    assert np.allclose(v.coeffs[:, shared], u.coeffs[:, np.isin(coarse.r, fine.r)],
                       atol=1e-12)


def test_smooth_bump_support():
    r = np.linspace(0, 1, 501)
    b = smooth_bump(r, 0.2, 0.6)
    assert np.all(b[(r <= 0.2) | (r >= 0.6)] == 0.0)
    assert b.max() == pytest.approx(1.0, abs=1e-2)


def test_grid_meta_roundtrip():
    g = make_grid(2.0, 64, "uniform", r_min=0.01)
    meta = g.meta()
    assert meta == {"n": 64, "theta": 2.0, "scheme": "uniform", "r_min": 0.01}
