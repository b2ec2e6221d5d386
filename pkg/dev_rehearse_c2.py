import time

import numpy as np

from conelab.grid import make_grid
from conelab.mode_kernels import (
    ORIGIN, ENDPOINT, INV_R_P, P_INV_R, KernelOperator, dense_matrix,
    composite_bound, composite_matrix, operator_norm, schur_certificate,
    _first_cell_avg_coeffs,
)

# sanity: block power with retirement still matches dense SVD
g = make_grid(theta=1.0, n=256, r_min=1e-5)
sw = np.sqrt(g.w)
for kind, target, svals in [
    (ORIGIN, INV_R_P, [-0.3, 0.0, 0.8, 5.0]),
    (ENDPOINT, P_INV_R, [-0.7, -9.0, 0.3]),
]:
    est = operator_norm(g, kind, np.array(svals), target)
    for sv, got in zip(svals, np.atleast_1d(est.value)):
        s_eff = sv - 1.0 if target == P_INV_R else sv
        A = composite_matrix(g, kind, sv, target)
        g0, g1, gu = _first_cell_avg_coeffs(g, kind, np.array([s_eff]))
        P = dense_matrix(KernelOperator(kind=kind, s=s_eff, grid=g))
        A[0] = g0[0] * np.eye(len(g.r))[0] + g1[0] * np.eye(len(g.r))[1] + gu[0] * P[1]
        ref = np.linalg.svd(sw[:, None] * A / sw[None, :], compute_uv=False)[0]
        assert abs(got - ref) <= 3e-8 * max(ref, 1.0), (kind, target, sv, got, ref)
print("retirement sanity: OK")

# criterion-2 shaped rehearsal: 200 draws, one admissible combo per draw
t_all = time.time()
rng = np.random.default_rng(0)
s_draws = rng.uniform(0.6, 10.0, 200) * rng.choice([-1.0, 1.0], 200)
combos = [(ORIGIN, INV_R_P), (ORIGIN, P_INV_R), (ENDPOINT, INV_R_P), (ENDPOINT, P_INV_R)]
guards = {(ORIGIN, INV_R_P): lambda s: s > -0.5, (ORIGIN, P_INV_R): lambda s: s > 0.5,
          (ENDPOINT, INV_R_P): lambda s: s < -0.5, (ENDPOINT, P_INV_R): lambda s: s < 0.5}
jobs = {}
for i, sv in enumerate(s_draws):
    adm = [c for c in combos if guards[c](sv)]
    kind, target = adm[i % len(adm)]
    jobs.setdefault((kind, target), []).append(sv)

gg = make_grid(theta=1.0, n=1024, r_min=1e-6)
fails = 0
checks = 0
for (kind, target), ss in jobs.items():
    ss = np.array(ss)
    t0 = time.time()
    for sv in ss:
        assert schur_certificate(gg, kind, float(sv), target).passed
    t_schur = time.time() - t0
    t0 = time.time()
    est = operator_norm(gg, kind, ss, target)
    bounds = np.array([composite_bound(kind, float(sv), target) for sv in ss])
    margin = (bounds - np.atleast_1d(est.value)) / bounds
    bad = margin < -1e-6
    checks += len(ss)
    fails += int(bad.sum())
    print(f"{kind:8s} {target:7s}: {len(ss):3d} values, iters={est.iterations}, "
          f"worst margin {margin.min()*100:+.5f}%, schur {t_schur:.1f}s, "
          f"norm {time.time()-t0:.1f}s")

t0 = time.time()
g4 = make_grid(theta=1.0, n=4096, r_min=1e-8)
hardy = operator_norm(g4, ORIGIN, 0.0, INV_R_P)
s1 = operator_norm(g4, ORIGIN, 1.0, INV_R_P)
print(f"Mellin: {hardy.value:.6f} (2), {s1.value:.6f} (2/3), {time.time()-t0:.1f}s")
print(f"TOTAL: {checks} checks, {fails} fails, {time.time()-t_all:.1f}s")
