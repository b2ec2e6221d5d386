import time

import numpy as np

from conelab.grid import make_grid, make_cutoff, random_smooth_sections
from conelab.link import sphere_dirac_spectrum
from conelab.cone_op import (
    ConeOperatorSpec, PerturbationProfile, SeparableCoupling, _spectral_norm,
    absorb_cone, absorb_section, exact_inverse_residual, neumann_inverse,
    parametrix_left_identity, parametrix_right_identity, validate_spec,
)


def banded_seeded(m: int, bw: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    c = rng.standard_normal((m, m))
    i = np.arange(m)
    c[np.abs(i[:, None] - i[None, :]) > bw] = 0.0
    return c / _spectral_norm(c)


t_all = time.time()
n_link, lam, omega = 3, 1.0, 1.0
spec0 = sphere_dirac_spectrum(n_link, 10)
m = spec0.total_multiplicity
print(f"modes: {m}")
c0 = banded_seeded(m, 64, 0)
scale = n_link * max(1.0, lam) * omega
coupling = SeparableCoupling(matrix=c0, profile=lambda r: scale * r**2 / np.sin(r))
pert = PerturbationProfile(diag="suspension", coupling=coupling, theta=1.0)
spec = ConeOperatorSpec(spectrum=spec0, theta=1.0, perturbation=pert)

grid = make_grid(1.0, 4096, "log")
rep = validate_spec(spec, grid)
rep80 = validate_spec(spec, grid, headroom=0.8)
print(f"theta_prime full: {rep.theta_prime:.6f}, 80%: {rep80.theta_prime:.6f} "
      f"(caps r/l: {rep.cap_right:.4f}/{rep.cap_left:.4f})")

ab = absorb_cone(spec, rep80.theta_prime, grid)
inner = ab.default_grid()
print(f"inner grid: n={inner.n}, theta={inner.theta:.6f}")

for degree in (2, 3):
    for support in ((0.25, 0.75), (0.2, 0.8), (0.3, 0.7)):
        u = random_smooth_sections(inner, spec0, 1, seed=11,
                                   support=support, degree=degree)[0]
        t0 = time.time()
        left = parametrix_left_identity(ab, u)
        psi = make_cutoff(0.9 * inner.theta, inner)
        right = parametrix_right_identity(ab, psi, u)
        t1 = time.time()
        print(f"deg={degree} supp={support}: left={left:.2e} right={right:.2e} "
              f"({t1-t0:.1f}s)")

u = random_smooth_sections(inner, spec0, 1, seed=11, support=(0.2, 0.8), degree=2)[0]
t0 = time.time()
inv = neumann_inverse(ab)
res = exact_inverse_residual(ab, u, inv)
print(f"exact inverse: q={inv.q:.4f} j_max={inv.j_max} residual={res:.2e} "
      f"({time.time()-t0:.1f}s)")
print(f"TOTAL {time.time()-t_all:.1f}s")
