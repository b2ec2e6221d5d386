"""Two-ended mode models: index computation, scans, global parametrix."""

import json

import numpy as np
import pytest

from conelab.cone_op import (
    BulkBlock,
    ConeOperatorSpec,
    PerturbationProfile,
    ZERO_PERTURBATION,
)
from conelab.fredholm import (
    SuspensionModeModel,
    analytic_mode_index,
    build_model_suite,
    deform_index_trace,
    global_parametrix_check,
    index_jump_scan,
    nested_cutoffs,
    svd_index,
    toy_llarull_model,
)
from conelab.grid import make_grid
from conelab.link import LinkSpectrum

PAIR = LinkSpectrum(entries=((1.5, 1), (-1.5, 1)))


def test_model_guards():
    with pytest.raises(ValueError, match="at least one mode"):
        SuspensionModeModel(modes=())
    with pytest.raises(ValueError, match="multiplicity must be positive"):
        SuspensionModeModel(modes=((-1.0, 1.0, 0),))
    with pytest.raises(ValueError, match="endpoint exponent in gap"):
        SuspensionModeModel(modes=((-0.3, 1.0, 1),))


def test_analytic_index_is_additive():
    a = ((-1.0, 1.0, 1),)
    b = ((2.0, -0.8, 2), (-1.5, 1.5, 3))
    ia = analytic_mode_index(SuspensionModeModel(modes=a))
    ib = analytic_mode_index(SuspensionModeModel(modes=b))
    iab = analytic_mode_index(SuspensionModeModel(modes=a + b))
    assert iab == ia + ib == 1 - 2 + 3


def test_analytic_index_adjoint_antisymmetry():
    suite = build_model_suite()
    for model in suite.values():
        flipped = SuspensionModeModel(
            modes=tuple((-s0, -spi, m) for s0, spi, m in model.modes))
        assert analytic_mode_index(flipped) == -analytic_mode_index(model)


def test_svd_index_agrees_on_sample_models():
    suite = build_model_suite()
    for name in ("up-unit", "down-unit", "asym-none", "high-mult", "near-gap-pair"):
        rep = svd_index(suite[name])
        assert rep.agree and rep.svd_index == rep.analytic_index, name


def test_svd_index_node_guard():
    with pytest.raises(ValueError, match="N must be at least 512"):
        svd_index(toy_llarull_model(1), N=256)


def test_index_report_json():
    rep = svd_index(toy_llarull_model(1))
    data = json.loads(rep.to_json())
    assert data["analytic_index"] == 2 and data["svd_index"] == 2
    assert data["agree"] is True


def test_jump_scan_locates_gap_crossing():
    def family(t):
        return SuspensionModeModel(modes=((-1.0, t, 1),))

    scan = index_jump_scan(family, 0.4, 1.6, 1e-3)
    assert len(scan.jumps) == 1
    assert abs(scan.jumps[0] - 0.5) <= 1e-3
    assert len(scan.crossings) == 1
    assert abs(scan.crossings[0] - 0.5) <= 1e-3
    assert scan.max_jump_mismatch() <= 1e-3


def test_jump_scan_flat_family_has_no_jumps():
    def family(t):
        return SuspensionModeModel(modes=((-1.0, 0.6 + 0.5 * t, 1),))

    scan = index_jump_scan(family, 0.0, 1.0, 1e-3)
    assert len(scan.jumps) == 0 and len(scan.crossings) == 0
    with pytest.raises(ValueError, match="resolution must be positive"):
        index_jump_scan(family, 0.0, 1.0, 0.0)


def test_deform_trace_warped_denominator_is_constant():
    def family(t):
        def sigma(r, t=t):
            return (1 - t) * np.sin(r) + t * np.minimum(r, np.pi - r)

        return SuspensionModeModel(modes=((-1.0, 1.0, 1),), denominator=sigma)

    trace = deform_index_trace(family, steps=4)
    assert trace.constant and all(i == 1 for i in trace.indices)
    with pytest.raises(ValueError, match="need at least two samples"):
        deform_index_trace(family, steps=1)


def test_deform_trace_scaled_spec_family():
    def family(t):
        if t == 0:
            return ConeOperatorSpec(spectrum=PAIR, theta=1.0)

        def diag(s, r, t=t):
            return t * (r / np.sin(r) - 1.0)

        return ConeOperatorSpec(spectrum=PAIR, theta=1.0,
                                perturbation=PerturbationProfile(diag=diag))

    trace = deform_index_trace(family, steps=4, grid_nodes=512)
    assert trace.constant and all(i == 0 for i in trace.indices)
    assert trace.max_step_norm < 0.5


def test_toy_models_carry_double_flow():
    for d in (-2, -1, 0, 1, 2):
        model = toy_llarull_model(d)
        assert analytic_mode_index(model) == 2 * d
    assert toy_llarull_model(0).modes == ((-1.0, 1.0, 1), (1.0, -1.0, 1))


def test_model_suite_composition():
    suite = build_model_suite()
    assert len(suite) == 24
    assert {"up-unit", "toy-llarull-+2", "wide-band"} <= set(suite)
    for model in suite.values():
        assert isinstance(analytic_mode_index(model), int)


def test_model_json_roundtrip():
    model = SuspensionModeModel(modes=((-1.5, 2.5, 2),), name="demo")
    back = SuspensionModeModel.from_json(model.to_json())
    assert back.modes == model.modes and back.name == "demo"
    custom = SuspensionModeModel(modes=((-1.0, 1.0, 1),),
                                 denominator=lambda r: np.sin(r))
    with pytest.raises(ValueError, match="cannot serialize a custom denominator"):
        custom.to_json()


def test_denominator_positivity_guard():
    model = SuspensionModeModel(modes=((-1.0, 1.0, 1),),
                                denominator=lambda r: np.cos(r))
    with pytest.raises(ValueError, match="denominator must be positive"):
        model.denominator_values(np.linspace(0.1, 3.0, 50))


def test_nested_cutoffs_algebra():
    grid = make_grid(1.0, 2048, "log", r_min=1e-8)
    phi, psi, chi = nested_cutoffs(0.5, grid)
    r = grid.r
    assert np.array_equal(chi.tau * psi.tau, psi.tau)
    assert np.all(chi.evaluate_r_dtau(r) * psi.tau == 0.0)
    assert np.array_equal(psi.tau * phi.tau, phi.tau)
    assert np.all(psi.evaluate_r_dtau(r) * phi.tau == 0.0)


def test_nested_cutoffs_coarse_grid_error():
    grid = make_grid(1.0, 64, "log", r_min=0.01)
    with pytest.raises(ValueError, match="too coarse to resolve"):
        nested_cutoffs(0.05, grid)


def _bulk_spec(pert):
    rng = np.random.default_rng(3)
    bd = 8
    bulk = BulkBlock(matrix=rng.standard_normal((bd, bd)) + 4.0 * np.eye(bd),
                     glue=0.1 * rng.standard_normal((bd, 2)))
    return ConeOperatorSpec(spectrum=PAIR, theta=1.0, perturbation=pert, bulk=bulk)


def test_global_parametrix_certificate():
    spec = _bulk_spec(PerturbationProfile(diag="suspension"))
    grid = make_grid(1.0, 512, "log", r_min=1e-8)
    rep = global_parametrix_check(spec, grid=grid)
    assert rep.x_bound_ok
    assert rep.right_residual <= 1e-3 and rep.left_residual <= 1e-3
    assert rep.compact_right_rank > 0 and rep.compact_left_rank > 0
    assert np.isfinite(rep.compact_right_norm) and np.isfinite(rep.compact_left_norm)


def test_global_parametrix_zero_perturbation_has_no_pert_term():
    spec = _bulk_spec(ZERO_PERTURBATION)
    grid = make_grid(1.0, 512, "log", r_min=1e-8)
    rep = global_parametrix_check(spec, grid=grid)
    assert rep.x_perturbation_norm == 0.0
    assert rep.x_bound_ok


def test_global_parametrix_requires_bulk():
    spec = ConeOperatorSpec(spectrum=PAIR, theta=1.0)
    with pytest.raises(ValueError, match="needs a spec with a bulk block"):
        global_parametrix_check(spec)


def test_global_parametrix_rejects_oversized_perturbation():
    spec = _bulk_spec(PerturbationProfile(diag="constant", diag_value=5.0))
    grid = make_grid(1.0, 512, "log", r_min=1e-8)
    with pytest.raises(ValueError, match="perturbation too large"):
        global_parametrix_check(spec, grid=grid)
