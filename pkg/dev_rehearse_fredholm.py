import time

import numpy as np

from conelab.cone_op import (BulkBlock, ConeOperatorSpec, PerturbationProfile,
                             ZERO_PERTURBATION, apply_K)
from conelab.fredholm import (SuspensionModeModel, analytic_mode_index,
                              build_model_suite, deform_index_trace,
                              global_parametrix_check, index_jump_scan,
                              nested_cutoffs, svd_index, toy_llarull_model)
from conelab.grid import ModeSection, make_grid
from conelab.link import LinkSpectrum

t_all = time.time()

# --- 1. suite equivalence ---------------------------------------------------
t0 = time.time()
suite = build_model_suite()
fails = []
for name, model in suite.items():
    rep = svd_index(model)
    flag = "" if rep.agree else "  <-- MISMATCH"
    if not rep.agree:
        fails.append(name)
    print(f"{name:24s} analytic={rep.analytic_index:+d} svd={rep.svd_index:+d}"
          f" near={rep.near_zero_singulars[:2]}{flag}")
print(f"suite: {len(suite)} models, {len(fails)} mismatches, "
      f"{time.time()-t0:.1f}s\n")

# --- 2. jump scan examples --------------------------------------------------
t0 = time.time()


def fam_spi(t):
    return SuspensionModeModel(modes=((-1.0, t, 1),))


scan = index_jump_scan(fam_spi, 0.4, 1.6, 1e-3)
print("scan s_pi(t)=t: jumps", scan.jumps, "crossings", scan.crossings,
      "closures", scan.gap_closures[:3], "mismatch", scan.max_jump_mismatch())


def fam_s0(t):
    return SuspensionModeModel(modes=((-t, 1.0, 1),))


scan2 = index_jump_scan(fam_s0, 0.4, 1.6, 1e-3)
print("scan s0(t)=-t:  jumps", scan2.jumps, "crossings", scan2.crossings,
      "mismatch", scan2.max_jump_mismatch())


def fam_flat(t):
    return SuspensionModeModel(modes=((-1.0, 0.6 + 0.8 * (t - 0.4) / 1.2, 1),))


scan3 = index_jump_scan(fam_flat, 0.4, 1.6, 1e-3)
print("scan staying gapped: jumps", scan3.jumps, f"  ({time.time()-t0:.1f}s)\n")

# --- 3. deformation traces --------------------------------------------------
t0 = time.time()


def warp_family(t):
    def sigma(r, t=t):
        tent = np.minimum(r, np.pi - r)
        return (1 - t) * np.sin(r) + t * tent

    return SuspensionModeModel(modes=((-1.0, 1.0, 1),), denominator=sigma,
                               name=f"warp-{t:.2f}")


tr = deform_index_trace(warp_family, steps=6)
print("warp trace: indices", tr.indices, "max step", f"{tr.max_step_norm:.3e}",
      "constant", tr.constant)

spectrum = LinkSpectrum(entries=((1.5, 1), (-1.5, 1)))


def scale_family(t):
    pert = PerturbationProfile(diag="suspension") if t > 0 else ZERO_PERTURBATION
    if t > 0:
        def diag(s, r, t=t):
            return t * (r / np.sin(r) - 1.0)
        pert = PerturbationProfile(diag=diag)
    return ConeOperatorSpec(spectrum=spectrum, theta=1.0, perturbation=pert)


tr2 = deform_index_trace(scale_family, steps=6)
print("t*S1 trace: indices", tr2.indices, "max step", f"{tr2.max_step_norm:.3e}",
      f"constant {tr2.constant}  ({time.time()-t0:.1f}s)\n")

# --- 4. global parametrix ---------------------------------------------------
rng = np.random.default_rng(3)
bd = 8
bulk = BulkBlock(matrix=rng.standard_normal((bd, bd)) + 4.0 * np.eye(bd),
                 glue=0.1 * rng.standard_normal((bd, 2)))

for label, pert in [("S1=const 0.3", PerturbationProfile(diag="constant", diag_value=0.3)),
                    ("S1=suspension", PerturbationProfile(diag="suspension")),
                    ("S1=0", ZERO_PERTURBATION)]:
    t0 = time.time()
    spec = ConeOperatorSpec(spectrum=spectrum, theta=1.0, perturbation=pert,
                            bulk=bulk)
    grid = make_grid(1.0, 512, "log", r_min=1e-8)
    rep = global_parametrix_check(spec, grid=grid)
    print(f"[{label}] eps={rep.eps:.3f} x={rep.x_norm:.4f} "
          f"(pert {rep.x_perturbation_norm:.4f} comm {rep.x_commutator_norm:.4f}) "
          f"y={rep.y_norm:.4f}")
    print(f"   residuals right={rep.right_residual:.3e} left={rep.left_residual:.3e} "
          f"compact norms=({rep.compact_right_norm:.3f},{rep.compact_left_norm:.3f}) "
          f"ranks=({rep.compact_right_rank},{rep.compact_left_rank}) "
          f"[{time.time()-t0:.1f}s]")

# sanity: dense K matches apply_K on a random section
from conelab.fredholm import _dense_global_operator  # noqa: E402

spec = ConeOperatorSpec(spectrum=spectrum, theta=1.0,
                        perturbation=PerturbationProfile(diag="suspension"),
                        bulk=bulk)
grid = make_grid(1.0, 512, "log", r_min=1e-8)
kmat, nd, bdd = _dense_global_operator(spec, grid)
coeffs = rng.standard_normal((2, grid.n))
bvec = rng.standard_normal(bd)
sec = ModeSection(grid=grid, spectrum=spectrum, coeffs=coeffs, bulk=bvec)
out = apply_K(spec, sec)
flat = np.concatenate([coeffs.reshape(-1), bvec])
dense_out = kmat @ flat
diff = max(np.max(np.abs(dense_out[:nd].reshape(2, -1) - out.coeffs)),
           np.max(np.abs(dense_out[nd:] - out.bulk)))
print(f"dense-K vs apply_K: {diff:.3e}")

# toy llarull
for d in range(-2, 3):
    rep = svd_index(toy_llarull_model(d))
    print(f"toy d={d:+d}: svd={rep.svd_index:+d} expected {2*d:+d} agree={rep.agree}")

print(f"\ntotal {time.time()-t_all:.1f}s")
