import time

import numpy as np

from conelab.grid import make_grid
from conelab.mode_kernels import (
    ORIGIN, ENDPOINT, INV_R_P, P_INV_R, KernelOperator,
    apply_composite, composite_matrix, composite_bound, dense_matrix,
    operator_norm, schur_certificate,
)

rng = np.random.default_rng(7)

# 1. block power vs dense SVD (with first-cell averaging applied to the row)
print("== block power vs dense SVD ==")
g = make_grid(theta=1.0, n=256, r_min=1e-5)
r, w = g.r, g.w
sw = np.sqrt(w)
for kind, target, svals in [
    (ORIGIN, INV_R_P, [-0.3, 0.0, 0.8, 5.0]),
    (ORIGIN, P_INV_R, [0.7, 1.0, 6.0]),
    (ENDPOINT, INV_R_P, [-0.8, -4.0]),
    (ENDPOINT, P_INV_R, [-0.7, -9.0, 0.3]),
]:
    est = operator_norm(g, kind, np.array(svals), target)
    for sv, got in zip(svals, np.atleast_1d(est.value)):
        # dense reference: composite matrix with node-0 row replaced by
        # the first-cell average row, SVD in the weighted metric
        from conelab.mode_kernels import _first_cell_avg_coeffs
        s_eff = sv - 1.0 if target == P_INV_R else sv
        A = composite_matrix(g, kind, sv, target)
        g0, g1, gu = _first_cell_avg_coeffs(g, kind, np.array([s_eff]))
        P = dense_matrix(KernelOperator(kind=kind, s=s_eff, grid=g))
        row0 = g0[0] * np.eye(len(r))[0] + g1[0] * np.eye(len(r))[1] + gu[0] * P[1]
        A[0] = row0
        sv_ref = np.linalg.svd(sw[:, None] * A / sw[None, :], compute_uv=False)[0]
        ok = abs(got - sv_ref) <= 1e-8 * max(sv_ref, 1.0)
        print(f"  {kind:8s} {target:7s} s={sv:+6.2f}: power={got:.12f} svd={sv_ref:.12f} "
              f"{'OK' if ok else 'MISMATCH'} (iters={est.iterations})")

# 2. shift identity on matrices
print("== shift identity ==")
for kind, s in [(ORIGIN, 0.9), (ORIGIN, 2.5), (ENDPOINT, -0.7), (ENDPOINT, 0.2)]:
    A = composite_matrix(g, kind, s, P_INV_R)
    B = dense_matrix(KernelOperator(kind=kind, s=s - 1.0, grid=g)) / r[:, None]
    print(f"  {kind:8s} s={s:+4.1f}: max|A-B| = {np.max(np.abs(A - B)):.3e}")
    # matrix-free columns vs dense
    cols = apply_composite(g, kind, s, P_INV_R, np.eye(len(r)))
    print(f"            apply vs dense: {np.max(np.abs(cols.T - A)):.3e}")

# 3. margins over the certified ranges, N=1024 and N=2048
print("== margins ==")
for n in (1024, 2048):
    gg = make_grid(theta=1.0, n=n, r_min=1e-6)
    t0 = time.time()
    worst = []
    for kind, target, lo, hi in [
        (ORIGIN, INV_R_P, 0.6, 10.0),
        (ORIGIN, P_INV_R, 0.6, 10.0),
        (ENDPOINT, INV_R_P, -10.0, -0.6),
        (ENDPOINT, P_INV_R, -10.0, -0.6),
    ]:
        ss = np.linspace(lo, hi, 25)
        est = operator_norm(gg, kind, ss, target)
        bounds = np.array([composite_bound(kind, float(sv), target) for sv in ss])
        margin = (bounds - np.atleast_1d(est.value)) / bounds
        i = int(np.argmin(margin))
        worst.append((kind, target, ss[i], margin[i], est.iterations))
        print(f"  N={n} {kind:8s} {target:7s}: worst margin {margin[i]*100:+.5f}% "
              f"at s={ss[i]:+.2f} (iters={est.iterations})")
    print(f"  N={n} total time: {time.time()-t0:.1f}s")

# 4. negative-side origin / positive-side endpoint chunks of the random range
#    (origin INV_R_P admits s>-0.5 only; endpoint INV_R_P s<-0.5 only, etc.)
print("== random-range rehearsal (200 draws, mixed) ==")
t0 = time.time()
rng = np.random.default_rng(0)
n_draws = 200
s_draws = rng.uniform(0.6, 10.0, n_draws) * rng.choice([-1.0, 1.0], n_draws)
jobs = {}
for sv in s_draws:
    # pick every (kind, target) admissible for this s
    for kind, target, guard in [
        (ORIGIN, INV_R_P, sv > -0.5),
        (ORIGIN, P_INV_R, sv > 0.5),
        (ENDPOINT, INV_R_P, sv < -0.5),
        (ENDPOINT, P_INV_R, sv < 0.5),
    ]:
        if guard:
            jobs.setdefault((kind, target), []).append(sv)
gg = make_grid(theta=1.0, n=2048, r_min=1e-6)
fails = 0
checks = 0
for (kind, target), ss in jobs.items():
    ss = np.array(ss)
    for sv in ss:
        cert = schur_certificate(gg, kind, float(sv), target)
        assert cert.passed, (kind, target, sv)
    est = operator_norm(gg, kind, ss, target)
    bounds = np.array([composite_bound(kind, float(sv), target) for sv in ss])
    bad = np.atleast_1d(est.value) > bounds * (1 + 1e-6)
    checks += len(ss)
    fails += int(bad.sum())
    print(f"  {kind:8s} {target:7s}: {len(ss):3d} values, iters={est.iterations}, "
          f"fails={int(bad.sum())}")
print(f"  total: {checks} checks, {fails} fails, {time.time()-t0:.1f}s")

# 5. Mellin examples
t0 = time.time()
g4 = make_grid(theta=1.0, n=4096, r_min=1e-8)
hardy = operator_norm(g4, ORIGIN, 0.0, INV_R_P)
s1 = operator_norm(g4, ORIGIN, 1.0, INV_R_P)
print(f"== Mellin: s=0 -> {hardy.value:.6f} (target 2, err {abs(hardy.value-2)/2*100:.2f}%), "
      f"s=1 -> {s1.value:.6f} (target 2/3, err {abs(s1.value-2/3)*1.5*100:.2f}%), "
      f"{time.time()-t0:.1f}s ==")
