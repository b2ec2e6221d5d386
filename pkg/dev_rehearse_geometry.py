import math
import time

import numpy as np

from conelab.cone_op import absorb_cone, validate_spec
from conelab.geometry import (CurvatureProfile, RadialProfile, WarpedMetricFamily,
                              density_rescale_check, generalized_cone_scal,
                              mode_reduce_suspension, suspension_scal)
from conelab.link import sphere_dirac_spectrum

t0 = time.time()

# --- suspension curvature, analytic path
for n in (2, 3, 5):
    prof = suspension_scal(n, n * (n - 1), "sin")
    err = np.max(np.abs(prof.scal - n * (n + 1)))
    print(f"suspension sin n={n}: max|scal - n(n+1)| = {err:.3e}  limit={prof.limit_estimate:.3e}")

# constant warp and exact cone
prof = suspension_scal(3, 11.0, lambda r: 1.0 + 0.0 * r)
print(f"rho=1: max|scal - scal_g| = {np.max(np.abs(prof.scal - 11.0)):.3e}")
prof = suspension_scal(3, 6.0, "linear")
print(f"rho=r, scal_g=n(n-1): max|scal| = {np.max(np.abs(prof.scal)):.3e}")

# FD path
for n in (2, 3, 5):
    prof = suspension_scal(n, n * (n - 1), np.sin)
    err = np.max(np.abs(prof.scal - n * (n + 1)))
    print(f"suspension FD n={n}: max err = {err:.3e}")

# sampled-array path
r = np.linspace(0.1, math.pi - 0.1, 500)
prof = suspension_scal(3, 6.0, np.sin(r), r=r)
print(f"sampled sin: max err = {np.max(np.abs(prof.scal - 12.0)):.3e}")

# vanishing warp error
try:
    suspension_scal(3, 6.0, "sin", r=np.array([0.5, 1.0, np.pi, 2.0, 2.5, 3.0]))
    print("vanish guard: MISSED")
except ValueError as e:
    print(f"vanish guard: ok ({e})")

# --- generalized cone
for n, c in ((2, 7.0), (3, 6.0), (5, 31.0)):
    fam = WarpedMetricFamily(n=n, scal_link=c)
    prof = generalized_cone_scal(fam)
    err = np.max(np.abs(prof.r2_scal - (c - n * (n - 1))))
    print(f"exact cone n={n} c={c}: max|r2scal - (c - n(n-1))| = {err:.3e} "
          f"limit err = {abs(prof.limit_estimate - (c - n * (n - 1))):.3e}")

quad = RadialProfile(kind="poly", coeffs=(1.0, 0.0, 1.0))
for n, c in ((2, 7.0), (3, 6.0)):
    fam = WarpedMetricFamily(n=n, scal_link=c, family=(quad,))
    prof = generalized_cone_scal(fam)
    print(f"lam=1+r^2 n={n}: limit={prof.limit_estimate:.8f} "
          f"target={c - n * (n - 1)} err={abs(prof.limit_estimate - (c - n * (n - 1))):.3e}")

# anisotropic flat link
fam = WarpedMetricFamily(n=2, scal_link=0.0,
                         family=(quad, RadialProfile(kind="poly", coeffs=(1.0, 0.0, -0.5))))
prof = generalized_cone_scal(fam)
print(f"anisotropic flat: limit={prof.limit_estimate:.3e} (target {0.0 - 2 * 1})")

# guards
try:
    generalized_cone_scal(WarpedMetricFamily(n=2, scal_link=2.0, family=(quad, RadialProfile())))
    print("flat-link guard: MISSED")
except ValueError as e:
    print(f"flat-link guard: ok ({e})")
try:
    generalized_cone_scal(WarpedMetricFamily(n=3, scal_link=6.0,
                                             family=(RadialProfile(kind="rlog", coeffs=(1.0,)),)))
    print("admissibility guard: MISSED")
except ValueError as e:
    print(f"admissibility guard: ok ({e})")

# custom callable profile (FD derivatives)
cust = RadialProfile(kind="custom", fn=lambda x: 1.0 + x * x)
fam = WarpedMetricFamily(n=3, scal_link=6.0, family=(cust,))
prof = generalized_cone_scal(fam)
print(f"custom lam=1+r^2: limit err = {abs(prof.limit_estimate - 0.0):.3e}")


# --- coordinate Christoffel oracle for the 1+r^2 flat-torus family
def scalar_curvature_fd(metric_fn, x0, h=1e-3):
    """scal at x0 for a coordinate metric g(x) via finite differences."""
    dim = len(x0)

    def g(x):
        return np.asarray(metric_fn(x), dtype=float)

    def dg(x):
        out = np.zeros((dim, dim, dim))
        for k in range(dim):
            e = np.zeros(dim); e[k] = h
            out[k] = (g(x + e) - g(x - e)) / (2 * h)
        return out

    def gamma(x):
        gi = np.linalg.inv(g(x))
        d = dg(x)  # d[k, a, b] = partial_k g_ab
        # Gamma^k_ij = 1/2 g^{kl} (d_i g_jl + d_j g_il - d_l g_ij)
        sym = d + d.transpose(1, 0, 2) - d.transpose(1, 2, 0)
        return 0.5 * np.einsum("kl,ijl->kij", gi, sym)

    gam = gamma(x0)
    dgam = np.zeros((dim, dim, dim, dim))
    for k in range(dim):
        e = np.zeros(dim); e[k] = h
        dgam[k] = (gamma(x0 + e) - gamma(x0 - e)) / (2 * h)
    # R_ij = d_k Gamma^k_ij - d_j Gamma^k_ik + Gamma^k_kl Gamma^l_ij - Gamma^k_jl Gamma^l_ik
    ric = (np.einsum("kkij->ij", dgam)
           - np.einsum("jkik->ij", dgam)
           + np.einsum("kkl,lij->ij", gam, gam)
           - np.einsum("kjl,lik->ij", gam, gam))
    return float(np.einsum("ij,ij->", np.linalg.inv(g(x0)), ric))


def torus_cone_metric(lam_fn, n):
    def metric(x):
        r = x[0]
        vals = np.ones(n + 1)
        vals[1:] = r * r * lam_fn(r)
        return np.diag(vals)
    return metric


lam_fn = lambda rr: 1.0 + rr * rr
for n in (2, 3):
    fam = WarpedMetricFamily(n=n, scal_link=0.0, family=(quad,))
    prof = generalized_cone_scal(fam, r=np.geomspace(0.05, 0.5, 40))
    metric = torus_cone_metric(lam_fn, n)
    errs = []
    for rr in (0.1, 0.2, 0.4):
        oracle = scalar_curvature_fd(metric, np.array([rr] + [0.0] * n))
        mine = prof.scal[np.argmin(np.abs(prof.r - rr))]
        exact_r = prof.r[np.argmin(np.abs(prof.r - rr))]
        oracle_at = scalar_curvature_fd(metric, np.array([exact_r] + [0.0] * n))
        errs.append(abs(mine - oracle_at))
    print(f"christoffel oracle n={n}: max |mine - oracle| = {max(errs):.3e}")

# isotropic curved-link oracle: round sphere link via suspension_scal cross-check
# dr^2 + r^2 lam(r) g_sphere == warped product with rho = r sqrt(lam)
for n, c in ((3, 6.0),):
    fam = WarpedMetricFamily(n=n, scal_link=c, family=(quad,))
    prof = generalized_cone_scal(fam, r=np.geomspace(0.05, 0.5, 40))
    rho = lambda rr: rr * math.sqrt(1.0 + rr * rr)
    prof2 = suspension_scal(n, c, rho, r=np.linspace(0.05, 0.5, 400))
    for rr in (0.1, 0.25, 0.45):
        a = prof.scal[np.argmin(np.abs(prof.r - rr))]
        b = prof2.scal[np.argmin(np.abs(prof2.r - rr))]
        ra = prof.r[np.argmin(np.abs(prof.r - rr))]
        rb = prof2.r[np.argmin(np.abs(prof2.r - rr))]
        print(f"  curved-link cross-check r~{rr}: cone({ra:.4f})={a:.6f} warp({rb:.4f})={b:.6f}")

# --- mode reduction
t1 = time.time()
link = sphere_dirac_spectrum(3, 10)
spec = mode_reduce_suspension(link, 1.0, 1.0)
rep = validate_spec(spec)
print(f"mode reduce (omega=1): theta={spec.theta} theta'={rep.theta_prime:.4f} "
      f"ac6={rep.ac6_holds} [{time.time() - t1:.1f}s]")

spec0 = mode_reduce_suspension(link, 1.0, 0.0)
rep0 = validate_spec(spec0)
print(f"mode reduce (omega=0): ac6={rep0.ac6_holds} theta'={rep0.theta_prime:.4f}")

spec20 = mode_reduce_suspension(sphere_dirac_spectrum(3, 20), 1.0, 0.0)
print(f"sphere(3,20) omega=0 passes validate: {validate_spec(spec20).ac6_holds}")

try:
    mode_reduce_suspension(link, 1.0, 1e6)
    print("theta floor guard: MISSED")
except ValueError as e:
    print(f"theta floor guard: ok ({e})")
from conelab.grid import make_grid
try:
    mode_reduce_suspension(link, 1.0, 500.0, grid=make_grid(1.0, 64, "log", r_min=1e-2))
    print("coarse-grid floor guard: MISSED")
except ValueError as e:
    print(f"coarse-grid floor guard: ok ({e})")

# diag value example
val = 1.0 / math.sin(0.1) - 1.0 / 0.1
print(f"(1/sin - 1/r)(0.1) = {val:.9f} (r/6 = {0.1 / 6:.9f})")

# --- density rescaling
t2 = time.time()
for n in (1, 3, 5):
    for s in (0.0, 1.5, 2.5):
        res = density_rescale_check(n, s=s)
        print(f"density rescale n={n} s={s}: residual = {res:.3e}")
print(f"density block {time.time() - t2:.1f}s")
print(f"TOTAL {time.time() - t0:.1f}s")
