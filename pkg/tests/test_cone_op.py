"""Cone operator specs: validation, absorption, parametrix, inverses."""

import numpy as np
import pytest

from conelab.cone_op import (
    BulkBlock,
    ConeOperatorSpec,
    PerturbationProfile,
    SeparableCoupling,
    absorb_cone,
    absorb_section,
    apply_K,
    apply_parametrix,
    commutation_check,
    composite_ops,
    exact_inverse_residual,
    global_dense_factors,
    neumann_inverse,
    norm_report,
    parametrix_left_identity,
    parametrix_right_identity,
    validate_spec,
)
from conelab.grid import make_cutoff, make_grid, random_smooth_sections
from conelab.link import LinkSpectrum, sphere_dirac_spectrum

PAIR = LinkSpectrum(entries=((1.5, 1), (-1.5, 1)))


def _coupled_spec(profile=0.1, theta=1.0, seed=5):
    rng = np.random.default_rng(seed)
    c0 = rng.standard_normal((2, 2))
    c0 /= np.linalg.norm(c0, 2)
    pert = PerturbationProfile(diag="suspension",
                               coupling=SeparableCoupling(matrix=c0, profile=profile))
    return ConeOperatorSpec(spectrum=PAIR, theta=theta, perturbation=pert)


def test_validate_zero_perturbation_passes_everywhere():
    spec = ConeOperatorSpec(spectrum=sphere_dirac_spectrum(3, 4), theta=1.0)
    rep = validate_spec(spec, make_grid(1.0, 64, "log"))
    assert rep.gap_ok and rep.ac5_finite and rep.ac6_holds
    assert rep.sup_right == 0.0 and rep.sup_left == 0.0
    assert rep.theta_prime == pytest.approx(1.0)
    assert rep.margin_right == pytest.approx(rep.cap_right)


def test_validate_headroom_guard():
    spec = ConeOperatorSpec(spectrum=PAIR, theta=1.0)
    for bad in (0.0, -0.5, 1.2):
        with pytest.raises(ValueError, match=r"headroom must lie in \(0, 1\]"):
            validate_spec(spec, headroom=bad)


def test_validate_gapless_spectrum():
    spec = ConeOperatorSpec(spectrum=LinkSpectrum(entries=((0.4, 1),)), theta=1.0)
    rep = validate_spec(spec, make_grid(1.0, 64, "log"))
    assert not rep.gap_ok and not rep.ac6_holds and rep.theta_prime is None


def test_validate_suspension_truncation_radius():
    # both caps equal 1/3 for s = +-3/2; r/sin(r) - 1 crosses 1/3 at
    # r/sin(r) = 4/3, i.e. r ~ 1.2755, so theta = 2 forces a truncation
    pert = PerturbationProfile(diag="suspension")
    spec = ConeOperatorSpec(spectrum=PAIR, theta=2.0, perturbation=pert)
    grid = make_grid(2.0, 4096, "log")
    rep = validate_spec(spec, grid)
    assert rep.gap_ok and rep.ac5_finite and not rep.ac6_holds
    assert rep.cap_right == pytest.approx(1 / 3)
    assert rep.theta_prime == pytest.approx(1.2755, abs=2e-3)
    tighter = validate_spec(spec, grid, headroom=0.5)
    assert tighter.theta_prime < rep.theta_prime


def test_absorb_marks_inner_grid_valid():
    pert = PerturbationProfile(diag="suspension")
    spec = ConeOperatorSpec(spectrum=PAIR, theta=2.0, perturbation=pert)
    grid = make_grid(2.0, 1024, "log")
    rep = validate_spec(spec, grid)
    inner = absorb_cone(spec, rep.theta_prime, grid)
    assert inner.theta == pytest.approx(rep.theta_prime)
    rep2 = validate_spec(inner)
    assert rep2.ac6_holds and rep2.theta_prime == pytest.approx(inner.theta)


def test_absorb_preserves_operator_action():
    spec = _coupled_spec(theta=2.0)
    grid = make_grid(2.0, 512, "log")
    u = random_smooth_sections(grid, PAIR, 1, seed=3)[0]
    full = apply_K(spec, u)
    inner_spec = absorb_cone(spec, 1.0, grid)
    k = inner_spec.bulk.k
    u_in = absorb_section(inner_spec, u)
    got = apply_K(inner_spec, u_in)
    assert np.array_equal(got.coeffs, full.coeffs[:, :k])
    assert np.array_equal(got.bulk, full.coeffs[:, k:])


def test_absorb_errors():
    spec = _coupled_spec(theta=2.0)
    grid = make_grid(2.0, 64, "log")
    with pytest.raises(ValueError, match="theta_prime out of range"):
        absorb_cone(spec, 2.5, grid)
    with pytest.raises(ValueError, match="theta_prime out of range"):
        absorb_cone(spec, 0.0, grid)
    bulk = BulkBlock(matrix=np.eye(3), glue=np.zeros((3, 2)))
    spec_b = ConeOperatorSpec(spectrum=PAIR, theta=1.0, bulk=bulk)
    with pytest.raises(ValueError, match="user-supplied bulk block"):
        absorb_cone(spec_b, 0.5)
    with pytest.raises(ValueError, match="leaves no nodes to absorb"):
        absorb_cone(spec, 1.5, make_grid(1.0, 64, "log"))


def test_reabsorb_resplits_original_grid():
    spec = _coupled_spec(theta=2.0)
    grid = make_grid(2.0, 256, "log")
    once = absorb_cone(spec, 1.5, grid)
    twice = absorb_cone(once, 0.8)
    assert twice.bulk.full_grid is grid
    assert twice.theta <= 0.8 < once.theta


def test_parametrix_identities_unperturbed():
    spec = ConeOperatorSpec(spectrum=PAIR, theta=1.0)
    grid = make_grid(1.0, 4096, "log")
    u = random_smooth_sections(grid, PAIR, 1, seed=7)[0]
    assert parametrix_left_identity(spec, u) <= 1e-3
    psi = make_cutoff(0.9, grid)
    assert parametrix_right_identity(spec, psi, u) <= 1e-3


def test_commutation_against_dense_factors():
    spec = _coupled_spec()
    grid = make_grid(1.0, 64, "log")
    u = random_smooth_sections(grid, PAIR, 1, seed=1)[0]
    for j in (1, 2, 3):
        assert commutation_check(spec, j, u) <= 1e-12
    with pytest.raises(ValueError, match="j must be at least 1"):
        commutation_check(spec, 0, u)
    kit = composite_ops(spec, grid)
    mp, mb = global_dense_factors(spec, grid)
    flat = u.coeffs.reshape(-1)
    got = kit.apply("S1P", u.coeffs).reshape(-1)
    ref = mb @ (mp @ flat)
    assert np.max(np.abs(got - ref)) <= 1e-12 * max(1.0, np.max(np.abs(ref)))
    got = kit.apply("PS1", u.coeffs).reshape(-1)
    ref = mp @ (mb @ flat)
    assert np.max(np.abs(got - ref)) <= 1e-12 * max(1.0, np.max(np.abs(ref)))


def test_dense_factors_size_guard():
    spec = _coupled_spec()
    with pytest.raises(ValueError, match="oracle matrices too large"):
        global_dense_factors(spec, make_grid(1.0, 4096, "log"))


def test_exact_inverse_reconstructs_interior_sections():
    spec = _coupled_spec()
    grid = make_grid(1.0, 2048, "log")
    inv = neumann_inverse(spec, grid)
    assert 0.0 < inv.q < 0.5
    u = random_smooth_sections(grid, PAIR, 1, seed=2)[0]
    assert exact_inverse_residual(spec, u, inv) <= 1e-3


def test_neumann_rejects_oversized_perturbation():
    spec = _coupled_spec(profile=5.0)
    with pytest.raises(ValueError, match="perturbation too large"):
        neumann_inverse(spec, make_grid(1.0, 256, "log"))


def test_neumann_trivial_for_zero_perturbation():
    spec = ConeOperatorSpec(spectrum=PAIR, theta=1.0)
    inv = neumann_inverse(spec, make_grid(1.0, 64, "log"))
    assert inv.q == 0.0 and inv.j_max == 0


def test_apply_K_is_linear():
    spec = _coupled_spec()
    grid = make_grid(1.0, 128, "log")
    u, v = random_smooth_sections(grid, PAIR, 2, seed=8)
    ku = apply_K(spec, u).coeffs
    kv = apply_K(spec, v).coeffs
    w = u.copy_with(2.0 * u.coeffs + v.coeffs)
    assert np.allclose(apply_K(spec, w).coeffs, 2.0 * ku + kv, atol=1e-12)


def test_spec_json_roundtrip():
    spec = _coupled_spec()
    back = ConeOperatorSpec.from_json(spec.to_json())
    assert back.spectrum == spec.spectrum
    assert back.theta == spec.theta
    assert back.perturbation.diag == "suspension"
    assert np.allclose(back.perturbation.coupling.matrix,
                       spec.perturbation.coupling.matrix)
    assert back.perturbation.coupling.profile == 0.1


def test_spec_json_rejects_callables():
    pert = PerturbationProfile(diag=lambda s, r: 0 * r)
    spec = ConeOperatorSpec(spectrum=PAIR, theta=1.0, perturbation=pert)
    with pytest.raises(ValueError, match="not serializable"):
        spec.to_json()
    pert2 = PerturbationProfile(
        coupling=SeparableCoupling(matrix=np.eye(2), profile=lambda r: r))
    spec2 = ConeOperatorSpec(spectrum=PAIR, theta=1.0, perturbation=pert2)
    with pytest.raises(ValueError, match="separable couplings are serializable"):
        spec2.to_json()


def test_spec_guards():
    with pytest.raises(ValueError, match="theta must be positive"):
        ConeOperatorSpec(spectrum=PAIR, theta=0.0)
    with pytest.raises(ValueError, match="chirality_tag"):
        ConeOperatorSpec(spectrum=PAIR, theta=1.0, chirality_tag="left")
    pert = PerturbationProfile(diag="constant", diag_value=0.1, theta=0.5)
    with pytest.raises(ValueError, match="not defined up to theta"):
        ConeOperatorSpec(spectrum=PAIR, theta=1.0, perturbation=pert)
    with pytest.raises(ValueError, match="unknown diagonal profile"):
        PerturbationProfile(diag="linear").diag_values(np.array([1.5]), np.ones(4))


def test_grid_mismatch_guards():
    spec = _coupled_spec()
    other = random_smooth_sections(make_grid(2.0, 64, "log"), PAIR, 1, seed=0)[0]
    with pytest.raises(ValueError, match="grid mismatch"):
        apply_parametrix(spec, other)
    with pytest.raises(ValueError, match="no absorbed bulk"):
        absorb_section(spec, other)


def test_norm_report_components():
    spec = _coupled_spec()
    grid = make_grid(1.0, 512, "log")
    u = random_smooth_sections(grid, PAIR, 1, seed=4)[0]
    rep = norm_report(spec, u)
    base, du, s0u = rep.components
    assert rep.h1_cone_norm == pytest.approx(np.sqrt(base**2 + du**2 + s0u**2))
    assert rep.graph_norm >= base
    assert rep.ratio == pytest.approx(rep.graph_norm / rep.h1_cone_norm)
    assert 0.5 <= rep.ratio <= 2.0
