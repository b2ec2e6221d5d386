"""Command-line front end: reproducible batch runs with manifests.

Every subcommand writes machine-readable results (JSON for reports,
CSV for tables) plus a manifest.json recording the command, the
canonicalized inputs, the grid actually used, the tool version and a
sha256 digest per output file.  Nothing in an output depends on wall
time, so re-running a command with the same inputs (and seed) must
reproduce every file byte for byte.

Exit codes: 0 success, 1 numerical failure (a certified bound or
residual gate not met, or a module precondition error), 2 usage.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .battery import (
    _csv_bytes,
    _fmt,
    _json_bytes,
    canonical_outputs,
    run_battery,
)
from .cone_op import (
    ConeOperatorSpec,
    PerturbationProfile,
    absorb_cone,
    exact_inverse_residual,
    neumann_inverse,
    norm_report,
    parametrix_left_identity,
    parametrix_right_identity,
    validate_spec,
)
from .fredholm import SuspensionModeModel, deform_index_trace, svd_index
from .geometry import (
    WarpedMetricFamily,
    generalized_cone_scal,
    mode_reduce_suspension,
    suspension_scal,
)
from .grid import make_cutoff, make_grid, random_smooth_sections
from .link import check_spectral_gap, perturbation_caps, sphere_dirac_spectrum
from .mode_kernels import (
    ENDPOINT,
    INV_R_P,
    ORIGIN,
    P_INV_R,
    composite_bound,
    operator_norm,
    schur_certificate,
)

_TARGETS = {
    "inv_r_P0": (ORIGIN, INV_R_P),
    "inv_r_P1": (ENDPOINT, INV_R_P),
    "P0_inv_r": (ORIGIN, P_INV_R),
    "P1_inv_r": (ENDPOINT, P_INV_R),
}


# ---------------------------------------------------------------------------
# manifest plumbing


def _sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class _Run:
    """Collects output files for one invocation and writes the manifest."""

    def __init__(self, command: str, out_dir: str, inputs: dict):
        self.command = command
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.inputs = inputs
        self.grid_meta: dict | None = None
        self.outputs: dict[str, str] = {}

    def add(self, name: str, data: bytes) -> None:
        (self.dir / name).write_bytes(data)
        self.outputs[name] = _sha(data)

    def finish(self) -> None:
        manifest = {
            "command": self.command,
            "inputs": self.inputs,
            "grid": self.grid_meta,
            "version": __version__,
            "outputs": self.outputs,
        }
        (self.dir / "manifest.json").write_bytes(_json_bytes(manifest))


def _file_input(path: str) -> dict:
    data = Path(path).read_bytes()
    return {"file": Path(path).name, "sha256": _sha(data)}


# ---------------------------------------------------------------------------
# subcommands


def cmd_spectrum(args) -> int:
    link = sphere_dirac_spectrum(args.n, args.kmax)
    gap = check_spectral_gap(link)
    caps = perturbation_caps(link)
    run = _Run("spectrum", args.out_dir,
               {"n": args.n, "kmax": args.kmax})
    run.add("link_spectrum.json", _json_bytes({
        "link": {"n": args.n, "kmax": args.kmax,
                 "entries": [[s, m] for s, m in link.entries],
                 "total_multiplicity": link.total_multiplicity},
        "gap": {"has_gap": gap.has_gap,
                "min_abs_eigenvalue": gap.min_abs_eigenvalue},
        "caps": {"right": caps.cap_right, "left": caps.cap_left},
        "meta": {"grid": None, "truncation": {"kmax": args.kmax},
                 "tolerance": None},
    }))
    run.add("link_spectrum.csv", _csv_bytes(
        {"n": args.n, "kmax": args.kmax, "grid": "none", "tolerance": "exact"},
        ("eigenvalue", "multiplicity"),
        [(_fmt(s), m) for s, m in link.entries]))
    run.finish()
    print(f"{len(link.entries)} eigenvalues, total multiplicity "
          f"{link.total_multiplicity}, min |s| = {gap.min_abs_eigenvalue:g}")
    return 0


def cmd_schur_bounds(args) -> int:
    kind, target = _TARGETS[args.target]
    grid = make_grid(args.theta, args.grid_n, "log")
    cert = schur_certificate(grid, kind, args.s, target)
    bound = composite_bound(kind, args.s, target)
    est = operator_norm(grid, kind, args.s, target)
    norm = float(est.value)
    passed = cert.passed and norm <= bound * (1 + 1e-6)
    run = _Run("schur-bounds", args.out_dir,
               {"s": args.s, "target": args.target, "grid_n": args.grid_n,
                "theta": args.theta})
    run.grid_meta = grid.meta()
    run.add("schur_bounds.csv", _csv_bytes(
        {"grid_n": grid.n, "theta": _fmt(grid.theta), "r_min": _fmt(grid.r_min),
         "scheme": grid.scheme, "slack": "1e-06"},
        ("kind", "target", "s", "bound", "row_max", "col_max", "norm", "passed"),
        [(kind, args.target, _fmt(args.s), _fmt(bound), _fmt(cert.row_max),
          _fmt(cert.col_max), _fmt(norm), str(passed).lower())]))
    run.finish()
    print(f"s={args.s:g} target={args.target}: bound {bound:.6f}, "
          f"norm {norm:.6f}, schur rows/cols ({cert.row_max:.6f}, "
          f"{cert.col_max:.6f}), passed={str(passed).lower()}")
    return 0 if passed else 1


def _build_spec(args) -> tuple[ConeOperatorSpec, dict]:
    if args.spec is not None:
        spec = ConeOperatorSpec.from_json(Path(args.spec).read_text())
        return spec, {"spec": _file_input(args.spec)}
    link = sphere_dirac_spectrum(args.link_n, args.kmax)
    spec = mode_reduce_suspension(link, args.lam, args.omega,
                                  theta=args.theta, seed=args.seed)
    return spec, {"link_n": args.link_n, "kmax": args.kmax, "lam": args.lam,
                  "omega": args.omega, "theta": args.theta, "seed": args.seed}


def cmd_certify_parametrix(args) -> int:
    spec, inputs = _build_spec(args)
    inputs.update({"grid_n": args.grid_n, "headroom": args.headroom,
                   "tol": args.tol})
    grid = make_grid(spec.theta, args.grid_n, "log")
    rep = validate_spec(spec, grid, headroom=args.headroom)
    if not rep.gap_ok:
        raise ValueError("link spectrum has eigenvalues inside the gap")
    if rep.theta_prime is None:
        raise ValueError("no admissible truncation radius: the perturbation "
                         "exceeds its caps at every node")
    ab = absorb_cone(spec, rep.theta_prime, grid)
    inner = ab.default_grid()
    psi = make_cutoff(0.9 * inner.theta, inner)
    residuals = {"left": [], "right": []}
    for support in ((0.25, 0.75), (0.2, 0.8), (0.3, 0.7)):
        u = random_smooth_sections(inner, spec.spectrum, 1, seed=11,
                                   support=support)[0]
        residuals["left"].append(parametrix_left_identity(ab, u))
        residuals["right"].append(parametrix_right_identity(ab, psi, u))
    u = random_smooth_sections(inner, spec.spectrum, 1, seed=11)[0]
    inv = neumann_inverse(ab)
    res_inv = exact_inverse_residual(ab, u, inv)
    worst = max(max(residuals["left"]), max(residuals["right"]), res_inv)
    passed = worst <= args.tol

    run = _Run("certify-parametrix", args.out_dir, inputs)
    run.grid_meta = grid.meta()
    run.add("parametrix_report.json", _json_bytes({
        "validation": {
            "gap_ok": rep.gap_ok, "theta_prime": rep.theta_prime,
            "caps": {"right": rep.cap_right, "left": rep.cap_left},
            "sup": {"right": rep.sup_right, "left": rep.sup_left},
            "ac6_holds": rep.ac6_holds, "headroom": args.headroom,
        },
        "residuals": {
            "left_max": max(residuals["left"]),
            "right_max": max(residuals["right"]),
            "exact_inverse": res_inv,
        },
        "neumann": {"q": inv.q, "j_max": inv.j_max},
        "passed": passed,
        "meta": {"grid": grid.meta(), "inner_grid": inner.meta(),
                 "truncation": {"modes": spec.spectrum.total_multiplicity},
                 "tolerance": args.tol},
    }))
    run.finish()
    print(f"theta'={rep.theta_prime:.6f}, worst residual {worst:.3e} "
          f"(tol {args.tol:g}), passed={str(passed).lower()}")
    return 0 if passed else 1


def cmd_domain_equiv(args) -> int:
    spectrum = sphere_dirac_spectrum(args.link_n, args.kmax)
    spec = ConeOperatorSpec(spectrum=spectrum, theta=1.0,
                            perturbation=PerturbationProfile(diag="suspension"))
    ratios = {}
    for nn in (args.grid_n, args.refine_n):
        grid = make_grid(1.0, nn, "log")
        ratios[nn] = [norm_report(spec, u).ratio
                      for u in random_smooth_sections(grid, spectrum,
                                                      args.sections,
                                                      seed=args.seed)]
    lo_c, hi_c = min(ratios[args.grid_n]), max(ratios[args.grid_n])
    lo_f, hi_f = min(ratios[args.refine_n]), max(ratios[args.refine_n])
    drift = max(abs(lo_c - lo_f) / lo_f, abs(hi_c - hi_f) / hi_f)
    passed = drift <= args.tol_drift

    run = _Run("domain-equiv", args.out_dir,
               {"link_n": args.link_n, "kmax": args.kmax,
                "sections": args.sections, "seed": args.seed,
                "grid_n": args.grid_n, "refine_n": args.refine_n})
    run.grid_meta = make_grid(1.0, args.grid_n, "log").meta()
    run.add("domain_ratios.csv", _csv_bytes(
        {"sections": args.sections, "seed": args.seed,
         "grid_n": args.grid_n, "refine_n": args.refine_n,
         "truncation": f"kmax={args.kmax}", "tolerance": _fmt(args.tol_drift)},
        ("section", "ratio_coarse", "ratio_fine"),
        [(i, _fmt(a), _fmt(b))
         for i, (a, b) in enumerate(zip(ratios[args.grid_n],
                                        ratios[args.refine_n]))]))
    run.add("domain_equiv.json", _json_bytes({
        "window_coarse": [lo_c, hi_c],
        "window_fine": [lo_f, hi_f],
        "drift": drift,
        "passed": passed,
        "meta": {"grid": {"coarse": args.grid_n, "fine": args.refine_n},
                 "truncation": {"kmax": args.kmax},
                 "tolerance": args.tol_drift, "seed": args.seed},
    }))
    run.finish()
    print(f"ratio window [{lo_f:.4f}, {hi_f:.4f}] at n={args.refine_n}, "
          f"drift {drift:.2%}, passed={str(passed).lower()}")
    return 0 if passed else 1


def cmd_index(args) -> int:
    model = SuspensionModeModel.from_json(Path(args.model).read_text())
    rep = svd_index(model, N=args.nodes)
    run = _Run("index", args.out_dir,
               {"model": _file_input(args.model), "nodes": args.nodes})
    run.add("index_report.json", _json_bytes({
        "model": json.loads(model.to_json()),
        "report": json.loads(rep.to_json()),
        "meta": {"grid": {"N": args.nodes, "r_min": 1e-6,
                          "scheme": "log, doubled"},
                 "truncation": None, "tolerance": {"threshold_rel": 1e-8}},
    }))
    run.finish()
    print(f"index {rep.svd_index:+d} (analytic {rep.analytic_index:+d}, "
          f"agree={str(rep.agree).lower()})")
    return 0 if rep.agree else 1


def _family_from_json(data: dict):
    kind = data.get("kind")
    if kind == "endpoints":
        a = SuspensionModeModel.from_json(json.dumps(data["from"]))
        b = SuspensionModeModel.from_json(json.dumps(data["to"]))
        if [m for *_, m in a.modes] != [m for *_, m in b.modes]:
            raise ValueError("family endpoints need matching multiplicities")

        def family(t: float) -> SuspensionModeModel:
            modes = tuple(
                ((1 - t) * sa0 + t * sb0, (1 - t) * sap + t * sbp, ma)
                for (sa0, sap, ma), (sb0, sbp, _) in zip(a.modes, b.modes))
            return SuspensionModeModel(modes=modes)

        return family, kind
    if kind == "warp":
        base = SuspensionModeModel.from_json(json.dumps(data["model"]))

        def family(t: float) -> SuspensionModeModel:
            def sigma(r, t=t):
                tent = np.minimum(r, np.pi - r)
                return (1 - t) * np.sin(r) + t * tent

            return SuspensionModeModel(modes=base.modes, denominator=sigma)

        return family, kind
    raise ValueError(f"unknown family kind {kind!r}: use 'endpoints' or 'warp'")


def cmd_deform_index(args) -> int:
    data = json.loads(Path(args.family).read_text())
    family, kind = _family_from_json(data)
    trace = deform_index_trace(family, steps=args.steps, N=args.nodes)
    run = _Run("deform-index", args.out_dir,
               {"family": _file_input(args.family), "steps": args.steps,
                "nodes": args.nodes})
    run.add("deform_trace.csv", _csv_bytes(
        {"kind": kind, "steps": args.steps, "grid_n": args.nodes,
         "truncation": "none", "tolerance": "integer index"},
        ("t", "index", "step_norm_to_next"),
        [(_fmt(t), idx, _fmt(trace.step_norms[i]) if i < len(trace.step_norms)
          else "")
         for i, (t, idx) in enumerate(zip(trace.ts, trace.indices))]))
    run.add("deform_summary.json", _json_bytes({
        "kind": kind,
        "indices": list(trace.indices),
        "constant": trace.constant,
        "max_step_norm": trace.max_step_norm,
        "meta": {"grid": {"N": args.nodes}, "truncation": None,
                 "tolerance": None, "steps": args.steps},
    }))
    run.finish()
    print(f"indices {list(trace.indices)}, constant="
          f"{str(trace.constant).lower()}, max step norm "
          f"{trace.max_step_norm:.3e}")
    return 0


def cmd_curvature(args) -> int:
    if args.suspension is not None:
        n = int(args.suspension[0])
        scal_link = float(args.suspension[1])
        rho = args.suspension[2]
        prof = suspension_scal(n, scal_link, rho, num=args.num)
        inputs = {"suspension": {"n": n, "scal_link": scal_link, "rho": rho},
                  "num": args.num}
        label = f"suspension n={n} rho={rho}"
    else:
        fam = WarpedMetricFamily.from_json(Path(args.cone).read_text())
        prof = generalized_cone_scal(fam, num=args.num)
        inputs = {"cone": _file_input(args.cone), "num": args.num}
        label = f"cone n={fam.n}"
    run = _Run("curvature", args.out_dir, inputs)
    run.add("curvature_profile.csv", _csv_bytes(
        {"case": label, "samples": len(prof.r),
         "limit_estimate": _fmt(prof.limit_estimate),
         "grid": f"{len(prof.r)} radii", "tolerance": "see summary"},
        ("r", "scal", "r2_scal"),
        [(_fmt(r), _fmt(s), _fmt(q))
         for r, s, q in zip(prof.r, prof.scal, prof.r2_scal)]))
    run.add("curvature_summary.json", _json_bytes({
        "case": label,
        "limit_estimate": prof.limit_estimate,
        "scal_range": [float(np.min(prof.scal)), float(np.max(prof.scal))],
        "meta": {"grid": {"samples": len(prof.r)}, "truncation": None,
                 "tolerance": None},
    }))
    run.finish()
    print(f"{label}: {len(prof.r)} samples, r^2*scal -> "
          f"{prof.limit_estimate:.6g}")
    return 0


def cmd_suspension_reduce(args) -> int:
    link = sphere_dirac_spectrum(args.link_n, args.kmax)
    spec = mode_reduce_suspension(link, args.lam, args.omega,
                                  theta=args.theta, seed=args.seed)
    grid = make_grid(args.theta, args.grid_n, "log")
    rep = validate_spec(spec, grid)
    run = _Run("suspension-reduce", args.out_dir,
               {"link_n": args.link_n, "kmax": args.kmax, "lam": args.lam,
                "omega": args.omega, "theta": args.theta, "seed": args.seed,
                "grid_n": args.grid_n})
    run.grid_meta = grid.meta()
    run.add("suspension_reduce.json", _json_bytes({
        "modes": link.total_multiplicity,
        "theta": spec.theta,
        "theta_prime": rep.theta_prime,
        "caps": {"right": rep.cap_right, "left": rep.cap_left},
        "sup": {"right": rep.sup_right, "left": rep.sup_left},
        "margins": {"right": rep.margin_right, "left": rep.margin_left},
        "ac6_holds": rep.ac6_holds,
        "meta": {"grid": grid.meta(), "truncation": {"kmax": args.kmax},
                 "tolerance": None, "seed": args.seed},
    }))
    run.finish()
    tp = "none" if rep.theta_prime is None else f"{rep.theta_prime:.6f}"
    print(f"{link.total_multiplicity} modes, caps hold up to theta="
          f"{str(rep.ac6_holds).lower()}, largest admissible theta'={tp}")
    return 0


def cmd_suite(args) -> int:
    run = _Run("suite", args.out_dir, {"seed": args.seed, "quick": args.quick})

    def report(result):
        flag = " ok " if result.passed else "FAIL"
        print(f"[{flag}] {result.name:22s} ({result.seconds:6.1f}s) "
              f"{result.detail}")

    results = run_battery(seed=args.seed, quick=args.quick, progress=report)
    for name, data in canonical_outputs(args.seed).items():
        run.add(name, data)
    checks = _csv_bytes(
        {"seed": args.seed, "quick": args.quick, "version": __version__},
        ("check", "passed", "seconds", "detail"),
        [(r.name, str(r.passed).lower(), f"{r.seconds:.2f}", r.detail)
         for r in results])
    (run.dir / "checks.csv").write_bytes(checks)
    run.finish()
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"FAILED: {', '.join(failed)}", file=sys.stderr)
        return 1
    print(f"all {len(results)} checks passed")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conelab",
        description="Numerical laboratory for first-order cone operators.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(fn=fn)
        p.add_argument("--out-dir", default=f"conelab-out/{name}",
                       help="directory for result files and the manifest")
        return p

    p = add("spectrum", cmd_spectrum,
            "link spectrum, gap report and perturbation caps")
    p.add_argument("--n", type=int, default=3, help="link dimension")
    p.add_argument("--kmax", type=int, default=10, help="spectrum truncation")

    p = add("schur-bounds", cmd_schur_bounds,
            "certify one weighted composite norm bound")
    p.add_argument("--s", type=float, required=True, help="mode exponent")
    p.add_argument("--target", choices=sorted(_TARGETS), required=True,
                   help="composite to certify")
    p.add_argument("--grid-n", type=int, default=1024)
    p.add_argument("--theta", type=float, default=1.0)

    p = add("certify-parametrix", cmd_certify_parametrix,
            "validate caps, absorb the cone slice, test the identities")
    p.add_argument("--spec", help="cone operator spec JSON file")
    p.add_argument("--link-n", type=int, default=3)
    p.add_argument("--kmax", type=int, default=10)
    p.add_argument("--lam", type=float, default=1.0,
                   help="metric comparison constant")
    p.add_argument("--omega", type=float, default=1.0,
                   help="connection one-form bound")
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid-n", type=int, default=4096)
    p.add_argument("--headroom", type=float, default=0.8)
    p.add_argument("--tol", type=float, default=1e-3)

    p = add("domain-equiv", cmd_domain_equiv,
            "graph vs first-order cone norm ratio window")
    p.add_argument("--link-n", type=int, default=3)
    p.add_argument("--kmax", type=int, default=4)
    p.add_argument("--sections", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid-n", type=int, default=1024)
    p.add_argument("--refine-n", type=int, default=4096)
    p.add_argument("--tol-drift", type=float, default=0.1)

    p = add("index", cmd_index, "SVD index of a two-ended mode model")
    p.add_argument("--model", required=True, help="mode model JSON file")
    p.add_argument("--nodes", type=int, default=512,
                   help="radial nodes per mode (doubled for the cross-check)")

    p = add("deform-index", cmd_deform_index,
            "index trace along a one-parameter family")
    p.add_argument("--family", required=True, help="family JSON file")
    p.add_argument("--steps", type=int, default=6)
    p.add_argument("--nodes", type=int, default=512)

    p = add("curvature", cmd_curvature,
            "scalar curvature profile of a warped metric")
    grp = p.add_mutually_exclusive_group(required=True)
    grp.add_argument("--suspension", nargs=3, metavar=("N", "SCAL", "RHO"),
                     help="link dimension, link scal, warp (sin or linear)")
    grp.add_argument("--cone", help="warped metric family JSON file")
    p.add_argument("--num", type=int, default=400, help="sample count")

    p = add("suspension-reduce", cmd_suspension_reduce,
            "reduce a suspension to its radial mode spec and validate caps")
    p.add_argument("--link-n", type=int, default=3)
    p.add_argument("--kmax", type=int, default=10)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--omega", type=float, default=1.0)
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid-n", type=int, default=2048)

    p = add("suite", cmd_suite, "run the full self-check battery")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quick", action="store_true",
                   help="trim draw counts and catalog breadth")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
