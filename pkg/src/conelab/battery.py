"""Self-check battery behind `conelab suite`.

Eleven checks, one per load-bearing guarantee: kernel ODE identities
under refinement, certified norm bounds against closed-form caps, the
perturbed parametrix on a suspension-reduced spec, commutation against
dense matrix products, graph/H1 norm equivalence, index agreement with
jump and deformation scans, the toy flow-to-index count, suspension
curvature identities, the cone-limit extrapolation with an independent
coordinate oracle, the cutoff slope budget, and byte-level determinism
of the canonical outputs.

Each check pins its own workload (grid sizes, draw counts, tolerances)
so a run needs no configuration beyond a seed; quick mode trims draw
counts and catalog breadth, never tolerances.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .cone_op import (
    ConeOperatorSpec,
    PerturbationProfile,
    SeparableCoupling,
    absorb_cone,
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
from .fredholm import (
    SuspensionModeModel,
    analytic_mode_index,
    build_model_suite,
    deform_index_trace,
    index_jump_scan,
    svd_index,
    toy_llarull_model,
)
from .geometry import (
    RadialProfile,
    WarpedMetricFamily,
    generalized_cone_scal,
    mode_reduce_suspension,
    suspension_scal,
)
from .grid import make_cutoff, make_grid, random_smooth_sections, smooth_bump
from .link import (
    LinkSpectrum,
    check_spectral_gap,
    perturbation_caps,
    sphere_dirac_spectrum,
)
from .mode_kernels import (
    ENDPOINT,
    INV_R_P,
    ORIGIN,
    P_INV_R,
    KernelOperator,
    composite_bound,
    ode_residual,
    operator_norm,
    schur_certificate,
)

NORM_SLACK = 1e-6
MELLIN_REL_TOL = 0.05
IDENTITY_TOL = 1e-3
COMMUTATION_TOL = 1e-5
RATIO_DRIFT_TOL = 0.10
JUMP_RESOLUTION = 1e-3
SUSPENSION_TOL_ANALYTIC = 1e-9
SUSPENSION_TOL_FD = 1e-4
CONE_TOL_EXACT = 1e-9
CONE_TOL_LIMIT = 1e-4

_COMBOS = (
    (ORIGIN, INV_R_P),
    (ORIGIN, P_INV_R),
    (ENDPOINT, INV_R_P),
    (ENDPOINT, P_INV_R),
)
_GUARDS = {
    (ORIGIN, INV_R_P): lambda s: s > -0.5,
    (ORIGIN, P_INV_R): lambda s: s > 0.5,
    (ENDPOINT, INV_R_P): lambda s: s < -0.5,
    (ENDPOINT, P_INV_R): lambda s: s < 0.5,
}


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


# ---------------------------------------------------------------------------
# 1. kernel ODE identities


def check_ode_identities(seed: int = 0, quick: bool = False) -> tuple[bool, str]:
    """Kernels solve their defining ODE, residual shrinking under refinement."""
    cases = ((ENDPOINT, -3.0), (ENDPOINT, -1.2), (ORIGIN, 0.8), (ORIGIN, 1.0),
             (ORIGIN, 5.0))
    bumps = ((0.25, 0.75), (0.2, 0.8), (0.1, 0.9))
    res: dict[tuple, list[float]] = {}
    for nn in (1024, 2048, 4096):
        g = make_grid(1.0, nn, "log")
        envs = [smooth_bump(g.r, a, b) for a, b in bumps]
        for kind, s in cases:
            op = KernelOperator(kind=kind, s=s, grid=g)
            res[(kind, s, nn)] = [ode_residual(op, e) for e in envs]
    worst = max(max(res[(k, s, 2048)]) for k, s in cases)
    mono = all(
        res[(k, s, 1024)][i] > res[(k, s, 2048)][i] > res[(k, s, 4096)][i]
        for k, s in cases
        for i in range(len(bumps))
    )
    passed = worst <= IDENTITY_TOL and mono
    return passed, (f"worst residual {worst:.2e} at n=2048, "
                    f"monotone under refinement: {mono}")


# ---------------------------------------------------------------------------
# 2. certified norm bounds


def _draw_norm_jobs(rng: np.random.Generator, count: int) -> dict:
    """Round-robin one admissible (kind, target) combo per drawn exponent."""
    s_draws = rng.uniform(0.6, 10.0, count) * rng.choice([-1.0, 1.0], count)
    jobs: dict[tuple, list[float]] = {}
    for i, sv in enumerate(s_draws):
        adm = [c for c in _COMBOS if _GUARDS[c](sv)]
        jobs.setdefault(adm[i % len(adm)], []).append(float(sv))
    return jobs


def check_norm_bounds(seed: int = 0, quick: bool = False) -> tuple[bool, str]:
    """Schur certificates and measured norms against the closed-form caps."""
    count = 40 if quick else 200
    rng = np.random.default_rng(seed)
    grid = make_grid(1.0, 1024, "log")
    worst_margin = np.inf
    certified = True
    for (kind, target), ss in _draw_norm_jobs(rng, count).items():
        for sv in ss:
            certified &= schur_certificate(grid, kind, sv, target).passed
        est = operator_norm(grid, kind, np.array(ss), target)
        bounds = np.array([composite_bound(kind, sv, target) for sv in ss])
        margin = float(np.min((bounds - np.atleast_1d(est.value)) / bounds))
        worst_margin = min(worst_margin, margin)
    g4 = make_grid(1.0, 4096, "log", r_min=1e-8)
    hardy = float(operator_norm(g4, ORIGIN, 0.0, INV_R_P).value)
    third = float(operator_norm(g4, ORIGIN, 1.0, INV_R_P).value)
    err_h = abs(hardy - 2.0) / 2.0
    err_t = abs(third - 2.0 / 3.0) / (2.0 / 3.0)
    passed = (certified and worst_margin >= -NORM_SLACK
              and err_h <= MELLIN_REL_TOL and err_t <= MELLIN_REL_TOL)
    return passed, (f"{count} draws, worst margin {worst_margin:+.2e}, "
                    f"norm at s=0: {hardy:.4f} (2), s=1: {third:.4f} (2/3)")


# ---------------------------------------------------------------------------
# 3. perturbed parametrix on the suspension-reduced spec


def check_perturbed_parametrix(seed: int = 0, quick: bool = False) -> tuple[bool, str]:
    """Identity residuals and the exact inverse after absorbing the cone slice."""
    link = sphere_dirac_spectrum(3, 10)
    spec = mode_reduce_suspension(link, 1.0, 1.0, theta=1.0, seed=seed)
    grid = make_grid(1.0, 4096, "log")
    rep = validate_spec(spec, grid, headroom=0.8)
    if rep.theta_prime is None:
        return False, "no admissible truncation radius at 80% headroom"
    ab = absorb_cone(spec, rep.theta_prime, grid)
    inner = ab.default_grid()
    psi = make_cutoff(0.9 * inner.theta, inner)
    worst_left = worst_right = 0.0
    for support in ((0.25, 0.75), (0.2, 0.8), (0.3, 0.7)):
        u = random_smooth_sections(inner, link, 1, seed=11, support=support)[0]
        worst_left = max(worst_left, parametrix_left_identity(ab, u))
        worst_right = max(worst_right, parametrix_right_identity(ab, psi, u))
    u = random_smooth_sections(inner, link, 1, seed=11)[0]
    inv = neumann_inverse(ab)
    res_inv = exact_inverse_residual(ab, u, inv)
    passed = max(worst_left, worst_right, res_inv) <= IDENTITY_TOL
    return passed, (f"theta'={rep.theta_prime:.4f}, residuals left {worst_left:.2e} "
                    f"right {worst_right:.2e} inverse {res_inv:.2e} (q={inv.q:.3f})")


# ---------------------------------------------------------------------------
# 4. commutation against dense matrix products


def check_commutation(seed: int = 0, quick: bool = False) -> tuple[bool, str]:
    """Composite power orders agree with the dense matrix-product oracle."""
    spectrum = LinkSpectrum(entries=((1.5, 2), (-1.5, 2), (2.5, 1), (-2.5, 1)))
    m = spectrum.total_multiplicity
    rng = np.random.default_rng(seed + 13)
    c0 = rng.standard_normal((m, m))
    c0 /= np.linalg.norm(c0, 2)
    spec = ConeOperatorSpec(
        spectrum=spectrum,
        theta=1.0,
        perturbation=PerturbationProfile(
            diag="suspension", coupling=SeparableCoupling(matrix=c0, profile=0.1)
        ),
    )
    grid = make_grid(1.0, 256, "log")
    mp, mb = global_dense_factors(spec, grid)
    kit = composite_ops(spec, grid)
    u = random_smooth_sections(grid, spectrum, 1, seed=seed + 5)[0]
    flat = u.coeffs.reshape(-1)
    w_full = np.tile(grid.w, m)
    worst_fast = worst_oracle = 0.0
    for j in (1, 2, 3):
        worst_fast = max(worst_fast, commutation_check(spec, j, u))
        fast = kit.apply("P", u.coeffs)
        oracle = mp @ flat
        for _ in range(j):
            fast = kit.apply("PS1", fast)
            oracle = mp @ (mb @ oracle)
        diff = fast.reshape(-1) - oracle
        rel = np.sqrt(np.sum(w_full * diff**2) / np.sum(w_full * oracle**2))
        worst_oracle = max(worst_oracle, float(rel))
    passed = max(worst_fast, worst_oracle) <= COMMUTATION_TOL
    return passed, (f"order swap {worst_fast:.2e}, dense oracle {worst_oracle:.2e} "
                    f"over j in 1..3 at n=256")


# ---------------------------------------------------------------------------
# 5. graph vs first-order cone norm equivalence


def check_domain_equivalence(seed: int = 0, quick: bool = False) -> tuple[bool, str]:
    """Empirical equivalence window [c, C] stable under grid refinement."""
    count = 30 if quick else 100
    spectrum = sphere_dirac_spectrum(3, 4)
    spec = ConeOperatorSpec(spectrum=spectrum, theta=1.0,
                            perturbation=PerturbationProfile(diag="suspension"))
    window = {}
    for nn in (1024, 4096):
        grid = make_grid(1.0, nn, "log")
        ratios = [norm_report(spec, u).ratio
                  for u in random_smooth_sections(grid, spectrum, count, seed=42)]
        window[nn] = (min(ratios), max(ratios))
    c_lo, c_hi = window[1024]
    f_lo, f_hi = window[4096]
    drift = max(abs(c_lo - f_lo) / f_lo, abs(c_hi - f_hi) / f_hi)
    passed = 0.0 < f_lo <= f_hi < np.inf and drift <= RATIO_DRIFT_TOL
    return passed, (f"ratio window [{f_lo:.3f}, {f_hi:.3f}] over {count} sections, "
                    f"drift {drift:.2%} between n=1024 and n=4096")


# ---------------------------------------------------------------------------
# 6. index agreement, jump locations, deformation invariance


_QUICK_MODELS = ("up-unit", "down-unit", "balanced-pair", "asym-none",
                 "near-gap-pair", "wide-band", "high-mult", "toy-llarull-+2")


def _warp_family(t: float) -> SuspensionModeModel:
    def sigma(r, t=t):
        tent = np.minimum(r, np.pi - r)
        return (1 - t) * np.sin(r) + t * tent

    return SuspensionModeModel(modes=((-1.0, 1.0, 1),), denominator=sigma,
                               name=f"warp-{t:.2f}")


def _scaled_spec_family(t: float) -> ConeOperatorSpec:
    spectrum = LinkSpectrum(entries=((1.5, 1), (-1.5, 1)))
    if t == 0.0:
        pert = PerturbationProfile()
    else:
        def diag(s, r, t=t):
            return t * (r / np.sin(r) - 1.0)

        pert = PerturbationProfile(diag=diag)
    return ConeOperatorSpec(spectrum=spectrum, theta=1.0, perturbation=pert)


def check_index_agreement(seed: int = 0, quick: bool = False) -> tuple[bool, str]:
    """SVD index equals the analytic count; jumps sit on gap crossings."""
    suite = build_model_suite()
    names = _QUICK_MODELS if quick else tuple(suite)
    mismatches = [name for name in names if not svd_index(suite[name]).agree]

    scan_pi = index_jump_scan(
        lambda t: SuspensionModeModel(modes=((-1.0, t, 1),)), 0.4, 1.6,
        JUMP_RESOLUTION)
    scans = [scan_pi]
    if not quick:
        scans.append(index_jump_scan(
            lambda t: SuspensionModeModel(modes=((-t, 1.0, 1),)), 0.4, 1.6,
            JUMP_RESOLUTION))
    flat = index_jump_scan(
        lambda t: SuspensionModeModel(modes=((-1.0, 0.6 + 0.8 * (t - 0.4) / 1.2, 1),)),
        0.4, 1.6, JUMP_RESOLUTION)
    jumps_ok = (all(s.jumps and s.max_jump_mismatch() <= JUMP_RESOLUTION
                    for s in scans) and not flat.jumps)

    steps = 3 if quick else 6
    warp = deform_index_trace(_warp_family, steps=steps)
    scaled = deform_index_trace(_scaled_spec_family, steps=steps)
    deform_ok = (warp.constant and set(warp.indices) == {1}
                 and scaled.constant and set(scaled.indices) == {0})

    passed = not mismatches and jumps_ok and deform_ok
    mis = f", mismatches: {mismatches}" if mismatches else ""
    return passed, (f"{len(names)} models agree{mis}; jump offset "
                    f"{max(s.max_jump_mismatch() for s in scans):.1e}; warp and "
                    f"scaling traces constant: {deform_ok}")


# ---------------------------------------------------------------------------
# 7. toy flow-to-index count


def check_flow_count(seed: int = 0, quick: bool = False) -> tuple[bool, str]:
    """Net mode flow 2d reports index exactly 2d."""
    got = {}
    for d in range(-2, 3):
        rep = svd_index(toy_llarull_model(d))
        got[d] = (rep.svd_index, rep.agree)
    passed = all(idx == 2 * d and agree for d, (idx, agree) in got.items())
    return passed, "indices " + ", ".join(
        f"d={d:+d}: {idx:+d}" for d, (idx, _) in sorted(got.items()))


# ---------------------------------------------------------------------------
# 8. suspension curvature


def check_suspension_curvature(seed: int = 0, quick: bool = False) -> tuple[bool, str]:
    """rho = sin over a round link of scal n(n-1) gives scal n(n+1)."""
    worst_analytic = worst_fd = 0.0
    for n in (2, 3, 5):
        target = n * (n + 1)
        prof = suspension_scal(n, n * (n - 1), "sin")
        worst_analytic = max(worst_analytic, float(np.max(np.abs(prof.scal - target))))
        prof_fd = suspension_scal(n, n * (n - 1), np.sin)
        worst_fd = max(worst_fd, float(np.max(np.abs(prof_fd.scal - target))))
    passed = worst_analytic <= SUSPENSION_TOL_ANALYTIC and worst_fd <= SUSPENSION_TOL_FD
    return passed, (f"max deviation from n(n+1): analytic {worst_analytic:.2e}, "
                    f"finite differences {worst_fd:.2e}")


# ---------------------------------------------------------------------------
# 9. cone limit with an independent coordinate oracle


def _scalar_curvature_fd(metric_fn: Callable, x0: np.ndarray, h: float) -> float:
    """Scalar curvature by centered differences of coordinate Christoffels."""
    dim = len(x0)

    def g(x):
        return np.asarray(metric_fn(x), dtype=float)

    def gamma(x):
        gi = np.linalg.inv(g(x))
        d = np.zeros((dim, dim, dim))
        for k in range(dim):
            e = np.zeros(dim)
            e[k] = h
            d[k] = (g(x + e) - g(x - e)) / (2 * h)
        sym = d + d.transpose(1, 0, 2) - d.transpose(1, 2, 0)
        return 0.5 * np.einsum("kl,ijl->kij", gi, sym)

    gam = gamma(x0)
    dgam = np.zeros((dim, dim, dim, dim))
    for k in range(dim):
        e = np.zeros(dim)
        e[k] = h
        dgam[k] = (gamma(x0 + e) - gamma(x0 - e)) / (2 * h)
    ric = (np.einsum("kkij->ij", dgam) - np.einsum("jkik->ij", dgam)
           + np.einsum("kkl,lij->ij", gam, gam)
           - np.einsum("kjl,lik->ij", gam, gam))
    return float(np.einsum("ij,ij->", np.linalg.inv(g(x0)), ric))


def _torus_cone_oracle(coeffs: tuple[float, ...], n: int, r0: float) -> float:
    """Richardson-extrapolated oracle for diag(1, r^2 lam, ..., r^2 lam)."""
    def metric(x):
        lam = float(np.polynomial.polynomial.polyval(x[0], coeffs))
        return np.diag([1.0] + [x[0] ** 2 * lam] * n)

    x0 = np.array([r0] + [0.1 * (i + 1) for i in range(n)])
    coarse = _scalar_curvature_fd(metric, x0, 2e-3)
    fine = _scalar_curvature_fd(metric, x0, 1e-3)
    return (4 * fine - coarse) / 3


def check_cone_limit(seed: int = 0, quick: bool = False) -> tuple[bool, str]:
    """Exact cones, the 1 + r^2 family limit, and the coordinate oracle."""
    worst_exact = 0.0
    for n, scal_link in ((2, 2.0), (3, 6.0), (4, 0.0)):
        fam = WarpedMetricFamily(n=n, scal_link=scal_link)
        prof = generalized_cone_scal(fam)
        target = scal_link - n * (n - 1)
        worst_exact = max(worst_exact,
                          float(np.max(np.abs(prof.r2_scal - target))),
                          abs(prof.limit_estimate - target))

    quad = RadialProfile(kind="poly", coeffs=(1.0, 0.0, 1.0))
    worst_limit = 0.0
    for n, scal_link in ((2, 6.0), (3, 6.0)):
        fam = WarpedMetricFamily(n=n, scal_link=scal_link, family=(quad,))
        prof = generalized_cone_scal(fam)
        worst_limit = max(worst_limit,
                          abs(prof.limit_estimate - (scal_link - n * (n - 1))))

    r0 = 0.35
    fam_t = WarpedMetricFamily(n=2, scal_link=0.0, family=(quad,))
    prof_t = generalized_cone_scal(fam_t, r=np.array([0.3, r0, 0.4]))
    val = float(prof_t.scal[1])
    oracle = _torus_cone_oracle((1.0, 0.0, 1.0), 2, r0)
    err_oracle = abs(val - oracle) / max(1.0, abs(val))

    passed = (worst_exact <= CONE_TOL_EXACT and worst_limit <= CONE_TOL_LIMIT
              and err_oracle <= CONE_TOL_LIMIT)
    return passed, (f"exact-cone deviation {worst_exact:.2e}, 1+r^2 limit error "
                    f"{worst_limit:.2e}, oracle gap {err_oracle:.2e}")


# ---------------------------------------------------------------------------
# 10. cutoff slope budget


def check_cutoff_slopes(seed: int = 0, quick: bool = False) -> tuple[bool, str]:
    """sup |r tau'| <= eps and support inside [0, eps], exactly on samples."""
    grid = make_grid(1.0, 4096, "log")
    details = []
    passed = True
    for eps in (0.5, 0.25, 0.1):
        cut = make_cutoff(eps, grid)
        slope = float(np.max(np.abs(cut.r_dtau)))
        outside = grid.r >= eps
        supported = bool(np.all(cut.tau[outside] == 0.0))
        plateau = bool(np.all(cut.tau[grid.r <= cut.delta * eps] == 1.0))
        off_grid = np.linspace(eps, 1.0, 257)
        supported &= bool(np.all(cut.evaluate(off_grid) == 0.0))
        passed &= slope <= eps and supported and plateau
        details.append(f"eps={eps}: slope {slope:.4f}")
    return passed, "; ".join(details)


# ---------------------------------------------------------------------------
# 11. determinism of the canonical outputs


def _json_bytes(payload) -> bytes:
    return (json.dumps(payload, sort_keys=True, indent=2) + "\n").encode()


def _csv_bytes(meta: Mapping, header: tuple, rows) -> bytes:
    buf = io.StringIO()
    for key, value in meta.items():
        buf.write(f"# {key}={value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue().encode()


def _fmt(x: float) -> str:
    return f"{float(x):.12g}"


def canonical_outputs(seed: int = 0) -> dict[str, bytes]:
    """Deterministic artifact set written by `conelab suite`.

    Every file embeds the grid, the spectrum truncation and the
    tolerance that produced it; all randomness flows through the one
    seed, so equal seeds give byte-identical files.
    """
    out: dict[str, bytes] = {}

    link = sphere_dirac_spectrum(3, 10)
    gap = check_spectral_gap(link)
    caps = perturbation_caps(link)
    out["link_spectrum.json"] = _json_bytes({
        "link": {"n": 3, "kmax": 10,
                 "entries": [[s, m] for s, m in link.entries],
                 "total_multiplicity": link.total_multiplicity},
        "gap": {"has_gap": gap.has_gap,
                "min_abs_eigenvalue": gap.min_abs_eigenvalue},
        "caps": {"right": caps.cap_right, "left": caps.cap_left},
        "meta": {"grid": None, "truncation": {"kmax": 10}, "tolerance": None},
    })

    rng = np.random.default_rng(seed)
    grid = make_grid(1.0, 1024, "log")
    ranges = {
        (ORIGIN, INV_R_P): (-0.4, 8.0),
        (ORIGIN, P_INV_R): (0.6, 8.0),
        (ENDPOINT, INV_R_P): (-8.0, -0.6),
        (ENDPOINT, P_INV_R): (-8.0, 0.4),
    }
    rows = []
    for (kind, target), (lo, hi) in ranges.items():
        ss = np.sort(rng.uniform(lo, hi, 3))
        est = operator_norm(grid, kind, ss, target)
        for sv, nv in zip(ss, np.atleast_1d(est.value)):
            cert = schur_certificate(grid, kind, float(sv), target)
            bound = composite_bound(kind, float(sv), target)
            ok = cert.passed and nv <= bound * (1 + NORM_SLACK)
            rows.append((kind, target, _fmt(sv), _fmt(bound), _fmt(cert.row_max),
                         _fmt(cert.col_max), _fmt(nv), str(bool(ok)).lower()))
    out["schur_bounds.csv"] = _csv_bytes(
        {"grid_n": grid.n, "theta": _fmt(grid.theta), "r_min": _fmt(grid.r_min),
         "scheme": grid.scheme, "slack": _fmt(NORM_SLACK), "seed": seed},
        ("kind", "target", "s", "bound", "row_max", "col_max", "norm", "passed"),
        rows)

    suite = build_model_suite()
    rows = [(name,
             ";".join(f"{_fmt(s0)}:{_fmt(spi)}:{mult}" for s0, spi, mult in model.modes),
             analytic_mode_index(model))
            for name, model in suite.items()]
    out["mode_index_catalog.csv"] = _csv_bytes(
        {"grid": "none (closed-form count)", "models": len(suite),
         "tolerance": "exact"},
        ("name", "modes", "analytic_index"), rows)

    rep = svd_index(suite["up-unit"])
    out["index_updown.json"] = _json_bytes({
        "report": json.loads(rep.to_json()),
        "meta": {"grid": {"N": 512, "r_min": 1e-6, "scheme": "log, doubled"},
                 "truncation": None, "tolerance": {"threshold_rel": 1e-8}},
    })

    scan = index_jump_scan(
        lambda t: SuspensionModeModel(modes=((-1.0, t, 1),)), 0.4, 1.6,
        JUMP_RESOLUTION)
    out["jump_scan.json"] = _json_bytes({
        "t_range": [0.4, 1.6],
        "samples": len(scan.ts),
        "jumps": list(scan.jumps),
        "crossings": list(scan.crossings),
        "gap_closure_samples": len(scan.gap_closures),
        "max_jump_mismatch": scan.max_jump_mismatch(),
        "meta": {"grid": None, "truncation": None,
                 "tolerance": {"resolution": JUMP_RESOLUTION}},
    })

    prof = suspension_scal(3, 6.0, "sin")
    out["curvature_suspension.csv"] = _csv_bytes(
        {"n": 3, "scal_link": _fmt(6.0), "rho": "sin", "samples": len(prof.r),
         "limit_estimate": _fmt(prof.limit_estimate), "grid": "uniform-400",
         "tolerance": "analytic derivatives"},
        ("r", "scal", "r2_scal"),
        [(_fmt(r), _fmt(s), _fmt(q))
         for r, s, q in zip(prof.r, prof.scal, prof.r2_scal)])

    small = sphere_dirac_spectrum(3, 6)
    spec = mode_reduce_suspension(small, 1.0, 1.0, theta=1.0, seed=seed)
    vgrid = make_grid(1.0, 1024, "log")
    check = validate_spec(spec, vgrid)
    out["suspension_reduce.json"] = _json_bytes({
        "modes": small.total_multiplicity,
        "theta": spec.theta,
        "theta_prime": check.theta_prime,
        "caps": {"right": check.cap_right, "left": check.cap_left},
        "sup": {"right": check.sup_right, "left": check.sup_left},
        "margins": {"right": check.margin_right, "left": check.margin_left},
        "ac6_holds": check.ac6_holds,
        "meta": {"grid": vgrid.meta(), "truncation": {"kmax": 6},
                 "tolerance": None, "seed": seed},
    })
    return out


def canonical_digests(seed: int = 0) -> dict[str, str]:
    import hashlib

    return {name: hashlib.sha256(data).hexdigest()
            for name, data in canonical_outputs(seed).items()}


def check_determinism(seed: int = 0, quick: bool = False) -> tuple[bool, str]:
    """Two independent builds of the canonical outputs digest identically."""
    first = canonical_digests(seed)
    second = canonical_digests(seed)
    passed = first == second and len(first) >= 5
    return passed, f"{len(first)} artifacts, digests stable: {first == second}"


# ---------------------------------------------------------------------------
# registry


ALL_CHECKS: tuple[tuple[str, Callable[[int, bool], tuple[bool, str]]], ...] = (
    ("ode-identities", check_ode_identities),
    ("norm-bounds", check_norm_bounds),
    ("perturbed-parametrix", check_perturbed_parametrix),
    ("commutation", check_commutation),
    ("domain-equivalence", check_domain_equivalence),
    ("index-agreement", check_index_agreement),
    ("flow-count", check_flow_count),
    ("suspension-curvature", check_suspension_curvature),
    ("cone-limit", check_cone_limit),
    ("cutoff-slopes", check_cutoff_slopes),
    ("determinism", check_determinism),
)


def run_battery(seed: int = 0, quick: bool = False,
                progress: Callable[[CheckResult], None] | None = None
                ) -> list[CheckResult]:
    results = []
    for name, fn in ALL_CHECKS:
        t0 = time.perf_counter()
        try:
            passed, detail = fn(seed, quick)
        except Exception as exc:  # a crashed check is a failed check
            passed, detail = False, f"raised {type(exc).__name__}: {exc}"
        result = CheckResult(name=name, passed=passed, detail=detail,
                             seconds=time.perf_counter() - t0)
        results.append(result)
        if progress is not None:
            progress(result)
    return results
