"""Numerical Fredholm-index experiments for radial model operators.

Two complementary probes of the same index mechanism:

* a two-ended suspension mode model on (0, pi), where each link mode
  carries an effective exponent sliding from s0 at the r=0 end to s_pi
  at the r=pi end; the index is read off either from closed-form
  kernel/cokernel membership (`analytic_mode_index`) or from the SVD of
  a boundary-condition-free collocation scheme (`svd_index`);
* a glued cone-plus-bulk operator, where a right and a left global
  parametrix are assembled from an interior pseudo-inverse and the
  radial parametrix near the tip, with cutoff functions controlling
  the hand-off (`global_parametrix_check`).

Index jumps are localized by parameter scans, and deformation families
are traced to exhibit homotopy invariance together with operator-norm
continuity evidence.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .cone_op import (
    BulkBlock,
    ConeOperatorSpec,
    composite_ops,
    global_dense_factors,
    validate_spec,
)
from .grid import (
    Cutoff,
    RadialGrid,
    _cutoff_eval,
    first_derivative,
    make_cutoff,
    make_grid,
    make_two_ended_grid,
    random_smooth_sections,
)
from .link import GAP_HALF_WIDTH

__all__ = [
    "SuspensionModeModel",
    "IndexReport",
    "IndexJumpScan",
    "GlobalParametrixReport",
    "DeformationTrace",
    "analytic_mode_index",
    "svd_index",
    "index_jump_scan",
    "nested_cutoffs",
    "global_parametrix_check",
    "deform_index_trace",
    "toy_llarull_model",
    "build_model_suite",
]

# endpoint-decay acceptance for candidate kernel vectors, |u(r_1)| sqrt(r_1)
DECAY_TOL = 0.05
DEFAULT_THRESHOLD_REL = 1e-8
# the exponent ramp lives strictly between the ends, so both cone ends
# stay exactly in the constant-exponent class
RAMP_LO = np.pi / 3
RAMP_HI = 2 * np.pi / 3


def _smoothstep(x: np.ndarray) -> np.ndarray:
    """Quintic C2 monotone step from 0 at x<=0 to 1 at x>=1."""
    x = np.clip(x, 0.0, 1.0)
    return x ** 3 * (10.0 - 15.0 * x + 6.0 * x ** 2)


# ---------------------------------------------------------------------------
# two-ended suspension mode model


@dataclass(frozen=True)
class SuspensionModeModel:
    """Radial mode family d/dr + s(r)/sigma(r) on (0, pi).

    modes lists (s0, s_pi, mult): the effective link exponent of the
    mode near r=0 and near r=pi, with its multiplicity.  s(r) ramps
    smoothly and monotonically from s0 to s_pi inside (pi/3, 2pi/3), so
    near both ends the operator is exactly the constant-exponent model
    and closed-form kernel membership applies.  sigma defaults to
    sin(r); a custom denominator must vanish simple-zero-like at both
    ends with unit slope so the endpoint exponents keep their meaning.
    """

    modes: tuple[tuple[float, float, int], ...]
    denominator: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = ""

    def __post_init__(self):
        modes = tuple(
            (float(s0), float(spi), int(mult)) for s0, spi, mult in self.modes
        )
        object.__setattr__(self, "modes", modes)
        if not modes:
            raise ValueError("model needs at least one mode")
        for k, (s0, spi, mult) in enumerate(modes):
            if mult < 1:
                raise ValueError(f"mode {k} multiplicity must be positive")
            if abs(s0) <= GAP_HALF_WIDTH or abs(spi) <= GAP_HALF_WIDTH:
                raise ValueError(
                    "endpoint exponent in gap: mode %d has (%g, %g), both "
                    "|s| must exceed 1/2" % (k, s0, spi)
                )

    @property
    def total_multiplicity(self) -> int:
        return sum(mult for _, _, mult in self.modes)

    def exponent(self, k: int, r: np.ndarray) -> np.ndarray:
        s0, spi, _ = self.modes[k]
        t = _smoothstep((np.asarray(r, dtype=float) - RAMP_LO) / (RAMP_HI - RAMP_LO))
        return s0 + (spi - s0) * t

    def denominator_values(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.denominator is None:
            return np.sin(r)
        sig = np.asarray(self.denominator(r), dtype=float)
        if np.any(sig <= 0):
            raise ValueError("denominator must be positive inside (0, pi)")
        return sig

    def coefficient(self, k: int, r: np.ndarray) -> np.ndarray:
        """s(r)/sigma(r), the zeroth-order coefficient of mode k."""
        return self.exponent(k, r) / self.denominator_values(r)

    def to_json(self) -> str:
        if self.denominator is not None:
            raise ValueError("cannot serialize a custom denominator")
        return json.dumps(
            {"modes": [list(m) for m in self.modes], "name": self.name}
        )

    @classmethod
    def from_json(cls, text: str) -> "SuspensionModeModel":
        data = json.loads(text)
        return cls(
            modes=tuple(tuple(m) for m in data["modes"]),
            name=data.get("name", ""),
        )


def analytic_mode_index(model: SuspensionModeModel) -> int:
    """Closed-form index of the two-ended mode model.

    The kernel solution of d/dr + s(r)/sigma is exp(-int s/sigma),
    behaving like r^(-s0) near 0 and ((pi-r)/2)^(s_pi) near pi; it
    belongs to the domain iff it decays at both ends, i.e. s0 < -1/2
    and s_pi > 1/2.  The cokernel condition is the mirror image for
    the formal adjoint.  Each mode contributes mult * (ker - coker).
    """
    total = 0
    for s0, spi, mult in model.modes:
        ker = 1 if (s0 < -GAP_HALF_WIDTH and spi > GAP_HALF_WIDTH) else 0
        coker = 1 if (s0 > GAP_HALF_WIDTH and spi < -GAP_HALF_WIDTH) else 0
        total += mult * (ker - coker)
    return total


# ---------------------------------------------------------------------------
# SVD index


@dataclass(frozen=True)
class IndexReport:
    analytic_index: int
    svd_index: int
    near_zero_singulars: tuple[float, ...]
    threshold: float
    agree: bool

    def to_json(self) -> str:
        return json.dumps(
            {
                "analytic_index": self.analytic_index,
                "svd_index": self.svd_index,
                "near_zero_singulars": list(self.near_zero_singulars),
                "threshold": self.threshold,
                "agree": self.agree,
            }
        )


@dataclass(frozen=True)
class _ModeDecision:
    ker: int
    coker: int
    ambiguous: bool
    near: tuple[float, ...]


def _mode_system(model: SuspensionModeModel, k: int, n: int, r_min: float):
    """Box-scheme matrix of mode k: midpoint collocation on cells.

    (n-1) x n, no boundary rows at either end; the minimal-extension
    behavior is enforced afterwards through the endpoint-decay test
    rather than through boundary conditions.
    """
    grid = make_two_ended_grid(n, r_min)
    r = grid.r
    h = np.diff(r)
    mid = 0.5 * (r[:-1] + r[1:])
    c = model.coefficient(k, mid)
    a = np.zeros((grid.n - 1, grid.n))
    i = np.arange(grid.n - 1)
    a[i, i] = -1.0 / h + 0.5 * c
    a[i, i + 1] = 1.0 / h + 0.5 * c
    return grid, h, mid, a


def _mode_decision(
    model: SuspensionModeModel,
    k: int,
    n: int,
    threshold_rel: float,
    r_min: float,
) -> _ModeDecision:
    grid, h, mid, a = _mode_system(model, k, n, r_min)
    w = grid.w
    # conjugate to the weighted geometry: rows carry the cell measure,
    # columns the node quadrature weight
    at = (np.sqrt(h)[:, None] * a) / np.sqrt(w)[None, :]
    u, sig, vh = np.linalg.svd(at, full_matrices=True)
    rel = sig / sig[0]
    near = tuple(float(x) for x in np.sort(rel)[:2])
    # ambiguous when singular values encroach on the threshold from
    # both sides within a factor 10: the zero cluster and the bulk
    # cluster cannot be separated at this threshold
    below = np.any((rel > threshold_rel / 10.0) & (rel <= threshold_rel))
    above = np.any((rel >= threshold_rel) & (rel < threshold_rel * 10.0))
    ambiguous = bool(below and above)

    def node_decay(vec: np.ndarray) -> bool:
        # vec is unit in the weighted coordinates; undo the weighting
        # and score the endpoint mass |u(r_1)| sqrt(r_1)
        uu = vec / np.sqrt(w)
        d0 = abs(uu[0]) * math.sqrt(grid.r[0])
        d1 = abs(uu[-1]) * math.sqrt(np.pi - grid.r[-1])
        return d0 < DECAY_TOL and d1 < DECAY_TOL

    def cell_decay(vec: np.ndarray) -> bool:
        vv = vec / np.sqrt(h)
        d0 = abs(vv[0]) * math.sqrt(mid[0])
        d1 = abs(vv[-1]) * math.sqrt(np.pi - mid[-1])
        return d0 < DECAY_TOL and d1 < DECAY_TOL

    # kernel candidates: the structural null direction of the
    # (n-1) x n scheme plus any right vector under the threshold
    ker_vecs = [vh[-1]]
    ker_vecs += [vh[j] for j in np.nonzero(rel < threshold_rel)[0]]
    ker = sum(1 for v in ker_vecs if node_decay(v))
    # cokernel candidates: left vectors under the threshold
    cok_idx = np.nonzero(rel < threshold_rel)[0]
    coker = sum(1 for j in cok_idx if cell_decay(u[:, j]))
    return _ModeDecision(ker=ker, coker=coker, ambiguous=ambiguous, near=near)


def svd_index(
    model: SuspensionModeModel,
    N: int = 512,
    threshold_rel: float = DEFAULT_THRESHOLD_REL,
    r_min: float = 1e-6,
) -> IndexReport:
    """Index of the mode model from weighted SVDs of the box scheme.

    Each mode is discretized at N and at 2N nodes on the doubly
    log-refined grid; the kernel/cokernel decision must be identical at
    both resolutions, and no singular value may sit within 10x of the
    relative threshold at both, otherwise the rank decision is refused
    as unstable.  Kernel candidates must pass the endpoint-decay test,
    which substitutes for the minimal-extension domain condition.

    The truncation radius r_min balances two failure modes: the
    adjoint boundary-cut residual of a weakly decaying cokernel
    element scales like r_min^|s|, while an overly small r_min
    inflates sigma_max until the relative threshold starts swallowing
    genuine nonzero singular values.
    """
    if N < 512:
        raise ValueError("N must be at least 512")
    analytic = analytic_mode_index(model)
    total = 0
    near_all: list[float] = []
    cache: dict[tuple[float, float], tuple[_ModeDecision, _ModeDecision]] = {}
    for k, (s0, spi, mult) in enumerate(model.modes):
        key = (s0, spi)
        if key in cache and model.denominator is None:
            d1, d2 = cache[key]
        else:
            d1 = _mode_decision(model, k, N, threshold_rel, r_min)
            d2 = _mode_decision(model, k, 2 * N, threshold_rel, r_min)
            cache[key] = (d1, d2)
        if d1.ambiguous and d2.ambiguous:
            raise ValueError(
                "rank decision unstable: singular value within 10x of the "
                "threshold at both resolutions (mode %d)" % k
            )
        if (d1.ker, d1.coker) != (d2.ker, d2.coker):
            raise ValueError(
                "rank decision unstable: refinement N -> 2N changes the "
                "kernel/cokernel count (mode %d)" % k
            )
        total += mult * (d2.ker - d2.coker)
        near_all.extend(d2.near)
    return IndexReport(
        analytic_index=analytic,
        svd_index=total,
        near_zero_singulars=tuple(sorted(near_all)),
        threshold=threshold_rel,
        agree=(total == analytic),
    )


# ---------------------------------------------------------------------------
# index jump scan


@dataclass(frozen=True)
class IndexJumpScan:
    """Scan of a one-parameter model family for index jumps.

    jumps: midpoints of the sample brackets where the analytic index
    changes; gap_closures: sampled parameters where the model itself is
    rejected because an endpoint exponent enters the gap; crossings:
    interpolated parameter values where an endpoint exponent crosses
    +-1/2, the predicted jump locations.
    """

    ts: tuple[float, ...]
    indices: tuple[int | None, ...]
    jumps: tuple[float, ...]
    crossings: tuple[float, ...]
    gap_closures: tuple[float, ...]

    def max_jump_mismatch(self) -> float:
        """Largest distance from a detected jump to the nearest crossing."""
        if not self.jumps:
            return 0.0
        if not self.crossings:
            return math.inf
        cr = np.asarray(self.crossings)
        return float(max(np.min(np.abs(cr - t)) for t in self.jumps))


def index_jump_scan(
    family: Callable[[float], SuspensionModeModel],
    t_min: float,
    t_max: float,
    resolution: float = 1e-3,
) -> IndexJumpScan:
    """Locate index jumps of a model family along a parameter interval.

    The analytic index is sampled on a uniform grid of the given
    resolution.  An endpoint exponent crossing +-1/2 transversally
    drags the model through the closed-gap band |s| <= 1/2 where
    construction is rejected; the edges of such rejection runs are the
    detected crossings, and entering or leaving a run with a different
    (or previously undefined) index is a jump.  Between adjacent valid
    samples, crossings are interpolated from the endpoint exponents and
    index changes are bracketed directly.  A correct scan has every
    jump within one resolution step of a crossing.
    """
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    n_steps = int(round((t_max - t_min) / resolution))
    ts = t_min + resolution * np.arange(n_steps + 1)
    indices: list[int | None] = []
    endpoints: list[np.ndarray | None] = []
    gap_closures: list[float] = []
    for t in ts:
        try:
            model = family(float(t))
            indices.append(analytic_mode_index(model))
            endpoints.append(np.array([(m[0], m[1]) for m in model.modes]))
        except ValueError:
            indices.append(None)
            endpoints.append(None)
            gap_closures.append(float(t))
    jumps: list[float] = []
    crossings: list[float] = []
    # adjacent valid pairs: direct jump brackets and interpolated crossings
    for a in range(n_steps):
        b = a + 1
        if indices[a] is None or indices[b] is None:
            continue
        if indices[a] != indices[b]:
            jumps.append(0.5 * float(ts[a] + ts[b]))
        ea, eb = endpoints[a], endpoints[b]
        if ea.shape == eb.shape:
            for comp in range(ea.size):
                va, vb = ea.flat[comp], eb.flat[comp]
                for level in (-GAP_HALF_WIDTH, GAP_HALF_WIDTH):
                    if (va - level) * (vb - level) < 0:
                        frac = (level - va) / (vb - va)
                        crossings.append(float(ts[a] + frac * (ts[b] - ts[a])))
    # rejection runs: edges are gap-boundary crossings; index changes
    # across (or into) a run are jumps located at the run edges
    i = 0
    while i <= n_steps:
        if indices[i] is not None:
            i += 1
            continue
        j = i
        while j <= n_steps and indices[j] is None:
            j += 1
        left = indices[i - 1] if i > 0 else None
        right = indices[j] if j <= n_steps else None
        left_edge = 0.5 * float(ts[i - 1] + ts[i]) if i > 0 else None
        right_edge = 0.5 * float(ts[j - 1] + ts[j]) if j <= n_steps else None
        if left_edge is not None:
            crossings.append(left_edge)
        if right_edge is not None:
            crossings.append(right_edge)
        if left is None and right is not None and right_edge is not None:
            jumps.append(right_edge)
        elif right is None and left is not None and left_edge is not None:
            jumps.append(left_edge)
        elif left is not None and right is not None and left != right:
            jumps.extend(e for e in (left_edge, right_edge) if e is not None)
        i = j
    return IndexJumpScan(
        ts=tuple(float(t) for t in ts),
        indices=tuple(indices),
        jumps=tuple(jumps),
        crossings=tuple(sorted(set(round(c, 12) for c in crossings))),
        gap_closures=tuple(gap_closures),
    )


# ---------------------------------------------------------------------------
# nested cutoffs for the global parametrix


def _log_ramp_cutoff(
    support: float,
    grid: RadialGrid,
    slope: float | None = None,
    decades: float = 2.0,
) -> Cutoff:
    """Cutoff equal to 1 near 0 and supported in [0, support].

    Unlike make_cutoff, the support radius and the slope budget are
    independent: the ramp descends over a prescribed log-length, either
    1.05/slope (guaranteeing sup |r tau'| <= slope/1.05 < slope) or the
    given number of decades when no slope bound is requested.
    """
    if support <= 0 or support >= grid.theta:
        raise ValueError("cutoff support must sit inside the grid interval")
    if slope is not None:
        slope_len = 1.05 / slope
    else:
        slope_len = decades * math.log(10.0)
    w = 0.1 * slope_len
    ramp = (float(slope_len), float(w), float(math.log(support)))
    delta = float(math.exp(-(slope_len + 2 * w)))
    tau, r_dtau = _cutoff_eval(grid.r, float(support), delta, ramp)
    return Cutoff(
        eps=float(support), delta=delta, grid=grid, tau=tau, r_dtau=r_dtau, _ramp=ramp
    )


def nested_cutoffs(eps: float, grid: RadialGrid) -> tuple[Cutoff, Cutoff, Cutoff]:
    """Cutoff triple (phi, psi, chi) with exact nesting for parametrix glue.

    chi carries the slope budget eps with support eps; psi is supported
    inside chi's plateau with the same slope budget; phi is supported
    inside psi's plateau with a modest two-decade ramp (only chi and
    psi enter the norm bound, phi only needs support containment).
    Exact consequences used by the parametrix algebra: chi*psi = psi,
    chi'*psi = 0, psi*phi = phi, psi'*phi = 0.
    """
    chi = make_cutoff(eps, grid)
    plateau_chi = chi.delta * chi.eps
    psi = _log_ramp_cutoff(plateau_chi, grid, slope=eps)
    plateau_psi = psi.delta * psi.eps
    phi = _log_ramp_cutoff(plateau_psi, grid, decades=2.0)
    plateau_phi = phi.delta * phi.eps
    if grid.r[0] > plateau_phi / 4:
        raise ValueError(
            "grid r_min %.3g too coarse to resolve the innermost cutoff "
            "plateau %.3g; refine r_min below a quarter of it"
            % (grid.r[0], plateau_phi)
        )
    return phi, psi, chi


# ---------------------------------------------------------------------------
# global parametrix check


@dataclass(frozen=True)
class GlobalParametrixReport:
    """Residuals and remainders of the right/left global parametrix.

    x_norm is the weighted operator norm of the non-compact remainder
    X = chi {(1/r)S1 P} psi + chi' P psi of the right parametrix; its
    two summands are reported separately (the first vanishes when
    S1 = 0).  y_norm plays the same role on the left through the
    truncated Neumann inverse.  The compact remainders are returned as
    explicit dense matrices with their weighted norms and numerical
    ranks.  right_residual/left_residual measure the assembled identity
    K P_R = 1 + X + R resp. P_L K = 1 + Y + L on smooth probes
    supported away from the cutoff transition zones.
    """

    eps: float
    x_norm: float
    x_perturbation_norm: float
    x_commutator_norm: float
    y_norm: float
    right_residual: float
    left_residual: float
    compact_right: np.ndarray
    compact_left: np.ndarray
    compact_right_norm: float
    compact_left_norm: float
    compact_right_rank: int
    compact_left_rank: int

    @property
    def x_bound_ok(self) -> bool:
        """The design point of the construction: ||X|| <= 3/4 + slack."""
        return self.x_norm <= 0.75 + 0.05


def _dense_global_operator(
    spec: ConeOperatorSpec, grid: RadialGrid
) -> tuple[np.ndarray, int, int]:
    """Dense matrix of the glued operator on mode-major coefficients.

    Cone block: first-derivative stencils plus the diagonal s/r term
    plus the multiplication part of the perturbation; bulk rows couple
    the outermost node value of every mode through the glue matrix.
    """
    if not isinstance(spec.bulk, BulkBlock):
        raise ValueError("global parametrix check needs a spec with a bulk block")
    svec = spec.spectrum.mode_values()
    m, n = len(svec), grid.n
    nd = m * n
    bd = spec.bulk.matrix.shape[0]
    _, mb = global_dense_factors(spec, grid)
    dmat = first_derivative(grid, np.eye(n)).T
    kmat = np.zeros((nd + bd, nd + bd))
    for p in range(m):
        blk = slice(p * n, (p + 1) * n)
        kmat[blk, blk] = dmat + np.diag(svec[p] / grid.r)
    kmat[:nd, :nd] += mb
    kmat[nd:, nd:] = spec.bulk.matrix
    for p in range(m):
        kmat[nd:, p * n + n - 1] = spec.bulk.glue[:, p]
    return kmat, nd, bd


def _weighted_2norm(mat: np.ndarray, w: np.ndarray) -> float:
    s = np.sqrt(w)
    return float(np.linalg.norm((mat * s[:, None]) / s[None, :], 2))


def global_parametrix_check(
    spec: ConeOperatorSpec,
    grid: RadialGrid | None = None,
    cutoffs: tuple[Cutoff, Cutoff, Cutoff] | None = None,
    rcond: float = 1e-8,
    n_probe: int = 8,
    seed: int = 7,
) -> GlobalParametrixReport:
    """Assemble and test the right and left global parametrices.

    The right parametrix is (1-phi) P_int (1-psi) + chi P psi with
    P_int the weighted pseudo-inverse of the dense glued operator and
    P the radial parametrix near the tip; then K P_R = 1 + X + R with
    the norm-bounded X = chi {(1/r)S1 P} psi + chi' P psi.  The slope
    budget of the cutoffs is eps = (1/4) / ||(1/r)P||, the choice that
    caps ||X|| by 1/2 + 1/4 = 3/4.  The left parametrix replaces P by
    P V with the truncated Neumann inverse V, giving P_L K = 1 + Y + L
    with Y = -chi P V psi'.  The compact remainders collect the cutoff
    commutator -phi' P_int (1-psi) (resp. (1-phi) P_int psi') together
    with the pseudo-inverse defect projections (the glued operator has
    a near-kernel cluster; whatever the rank cut removes reappears as
    an explicit finite-rank term).  Residuals of both assembled
    identities are measured on smooth probes supported away from every
    cutoff transition zone.
    """
    if not isinstance(spec.bulk, BulkBlock):
        raise ValueError("global parametrix check needs a spec with a bulk block")
    svec = spec.spectrum.mode_values()
    m = len(svec)
    if grid is None:
        n_default = min(1024, (1 << 12) // m)
        grid = make_grid(spec.theta, n_default, "log", r_min=spec.theta * 1e-8)
    check = validate_spec(spec, grid)
    if not (check.gap_ok and check.ac6_holds):
        raise ValueError("perturbation too large")
    kit = composite_ops(spec, grid)
    eps = min(0.25 / kit.caps["invrP"], 0.5 * grid.theta)
    if cutoffs is None:
        cutoffs = nested_cutoffs(eps, grid)
    phi, psi, chi = cutoffs

    kmat, nd, bd = _dense_global_operator(spec, grid)
    n = grid.n
    w_glob = np.concatenate([np.tile(grid.w, m), np.ones(bd)])
    s_glob = np.sqrt(w_glob)
    # pseudo-inverse in the weighted geometry: conjugate, cut, conjugate
    # back; keep the defect projections onto the cut singular directions,
    # they are finite-rank pieces of the compact remainders
    uu, sig, vvh = np.linalg.svd(kmat * s_glob[:, None] / s_glob[None, :])
    keep = sig > rcond * sig[0]
    p_int = (vvh[keep].T / sig[keep]) @ uu[:, keep].T
    q_left = uu[:, ~keep] @ uu[:, ~keep].T  # K P_int = 1 - q_left
    q_right = vvh[~keep].T @ vvh[~keep]     # P_int K = 1 - q_right
    p_int = p_int / s_glob[:, None] * s_glob[None, :]
    q_left = q_left / s_glob[:, None] * s_glob[None, :]
    q_right = q_right / s_glob[:, None] * s_glob[None, :]

    mp, mb = global_dense_factors(spec, grid)
    mt = mb @ mp

    def pad(mat_cone: np.ndarray) -> np.ndarray:
        out = np.zeros((nd + bd, nd + bd))
        out[:nd, :nd] = mat_cone
        return out

    def diag_glob(node_values: np.ndarray) -> np.ndarray:
        return np.concatenate([np.tile(node_values, m), np.zeros(bd)])

    chi_g, psi_g, phi_g = (diag_glob(c.tau) for c in (chi, psi, phi))
    dchi_g, dpsi_g, dphi_g = (diag_glob(c.dtau) for c in (chi, psi, phi))
    mp_g = pad(mp)
    x_pert = chi_g[:, None] * pad(mt) * psi_g[None, :]
    x_comm = dchi_g[:, None] * mp_g * psi_g[None, :]
    x_mat = x_pert + x_comm

    p_right = ((1 - phi_g)[:, None] * p_int * (1 - psi_g)[None, :]) + (
        chi_g[:, None] * mp_g * psi_g[None, :]
    )
    compact_right = -dphi_g[:, None] * (p_int * (1 - psi_g)[None, :]) - (
        (1 - phi_g)[:, None] * q_left * (1 - psi_g)[None, :]
    )
    delta_right = kmat @ p_right - np.eye(nd + bd) - x_mat - compact_right

    ident = np.eye(nd)
    v_mat = np.linalg.solve(ident + mt, ident)  # closed-form Neumann limit
    pv_g = pad(mp @ v_mat)
    y_mat = -chi_g[:, None] * pv_g * dpsi_g[None, :]
    p_left = ((1 - phi_g)[:, None] * p_int * (1 - psi_g)[None, :]) + (
        chi_g[:, None] * pv_g * psi_g[None, :]
    )
    compact_left = (1 - phi_g)[:, None] * (p_int * dpsi_g[None, :]) - (
        (1 - phi_g)[:, None] * q_right * (1 - psi_g)[None, :]
    )
    delta_left = p_left @ kmat - np.eye(nd + bd) - y_mat - compact_left

    probes = random_smooth_sections(grid, spec.spectrum, n_probe, seed)
    right_res = 0.0
    left_res = 0.0
    for sec in probes:
        u = np.concatenate([sec.coeffs.reshape(-1), np.zeros(bd)])
        nu = math.sqrt(float(np.sum(w_glob * u ** 2)))
        rr = math.sqrt(float(np.sum(w_glob * (delta_right @ u) ** 2))) / nu
        ll = math.sqrt(float(np.sum(w_glob * (delta_left @ u) ** 2))) / nu
        right_res = max(right_res, rr)
        left_res = max(left_res, ll)

    def num_rank(mat: np.ndarray) -> int:
        sig = np.linalg.svd(mat * s_glob[:, None] / s_glob[None, :], compute_uv=False)
        if sig[0] == 0:
            return 0
        return int(np.sum(sig > 1e-10 * sig[0]))

    return GlobalParametrixReport(
        eps=float(eps),
        x_norm=_weighted_2norm(x_mat, w_glob),
        x_perturbation_norm=_weighted_2norm(x_pert, w_glob),
        x_commutator_norm=_weighted_2norm(x_comm, w_glob),
        y_norm=_weighted_2norm(y_mat, w_glob),
        right_residual=float(right_res),
        left_residual=float(left_res),
        compact_right=compact_right,
        compact_left=compact_left,
        compact_right_norm=_weighted_2norm(compact_right, w_glob),
        compact_left_norm=_weighted_2norm(compact_left, w_glob),
        compact_right_rank=num_rank(compact_right),
        compact_left_rank=num_rank(compact_left),
    )


# ---------------------------------------------------------------------------
# deformation traces


@dataclass(frozen=True)
class DeformationTrace:
    """Index along a deformation family with continuity evidence.

    step_norms[k] is the operator-norm distance between the sampled
    operators at ts[k] and ts[k+1]; max_step_norm summarizes it.  The
    homotopy statement is that indices is constant whenever every
    sampled parameter passes the gap-and-caps validation.
    """

    ts: tuple[float, ...]
    indices: tuple[int, ...]
    step_norms: tuple[float, ...]
    max_step_norm: float
    kind: str

    @property
    def constant(self) -> bool:
        return len(set(self.indices)) <= 1


def _spec_multiplier_norm(
    a: ConeOperatorSpec, b: ConeOperatorSpec, grid: RadialGrid
) -> float:
    """sup_r ||(S1_a(r) - S1_b(r))/r||, the norm of the difference.

    Only the multiplication part may differ along the supported spec
    families (the derivative and s/r terms cancel), so the operator
    distance is the largest per-node block norm.
    """
    _, mba = global_dense_factors(a, grid)
    _, mbb = global_dense_factors(b, grid)
    svec = a.spectrum.mode_values()
    m, n = len(svec), grid.n
    d = mba - mbb
    blocks = np.empty((n, m, m))
    for p in range(m):
        for q in range(m):
            blocks[:, p, q] = np.diag(d[p * n:(p + 1) * n, q * n:(q + 1) * n])
    return float(np.max(np.linalg.svd(blocks, compute_uv=False)[:, 0]))


def deform_index_trace(
    family: Callable[[float], "SuspensionModeModel | ConeOperatorSpec"],
    steps: int = 11,
    N: int = 512,
    grid_nodes: int = 512,
) -> DeformationTrace:
    """Trace the index along t in [0, 1] and certify continuity.

    Model families are re-indexed by the SVD scheme at every sample,
    with the box matrices at consecutive samples compared in the
    weighted operator norm.  Cone-spec families are validated (gap and
    caps) at every sample; their glued square blocks carry no boundary
    index flow, so the traced index is 0 and the content is the
    certificate chain plus the multiplier-norm continuity.  Any sample
    failing validation aborts with the offending parameter value.
    """
    if steps < 2:
        raise ValueError("need at least two samples")
    ts = np.linspace(0.0, 1.0, steps)
    indices: list[int] = []
    mats: list[np.ndarray] = []
    specs: list[ConeOperatorSpec] = []
    kind = ""
    grid: RadialGrid | None = None
    for t in ts:
        try:
            obj = family(float(t))
        except ValueError as err:
            raise ValueError(f"gap fails at t={float(t):.6g}: {err}") from err
        if isinstance(obj, SuspensionModeModel):
            kind = "model"
            report = svd_index(obj, N=N)
            indices.append(report.svd_index)
            blocks = []
            for k in range(len(obj.modes)):
                g, h, _, a = _mode_system(obj, k, N, 1e-5)
                blocks.append((np.sqrt(h)[:, None] * a) / np.sqrt(g.w)[None, :])
            mats.append(np.vstack(blocks))
        elif isinstance(obj, ConeOperatorSpec):
            kind = "spec"
            if grid is None:
                grid = obj.default_grid(grid_nodes)
            report = validate_spec(obj, grid)
            if not (report.gap_ok and report.ac6_holds):
                raise ValueError(
                    f"gap fails at t={float(t):.6g}: spectral gap or "
                    "perturbation caps violated"
                )
            indices.append(0)
            specs.append(obj)
        else:
            raise TypeError("family must yield models or cone specs")
    if kind == "model":
        step_norms = [
            float(np.linalg.norm(b - a, 2)) for a, b in zip(mats[:-1], mats[1:])
        ]
    else:
        step_norms = [
            _spec_multiplier_norm(a, b, grid)
            for a, b in zip(specs[:-1], specs[1:])
        ]
    return DeformationTrace(
        ts=tuple(float(t) for t in ts),
        indices=tuple(indices),
        step_norms=tuple(step_norms),
        max_step_norm=float(max(step_norms)),
        kind=kind,
    )


# ---------------------------------------------------------------------------
# model catalog


def toy_llarull_model(d: int) -> SuspensionModeModel:
    """Two-ended model with net mode flow 2d.

    Mimics the shape of the sphere index count: each unit of degree
    contributes a flow mode of multiplicity 2 (the Euler characteristic
    of the 2-sphere), so the expected index is exactly 2d.
    """
    if d == 0:
        modes = ((-1.0, 1.0, 1), (1.0, -1.0, 1))
    elif d > 0:
        s = 1.0 + 0.25 * d
        modes = ((-s, s, 2 * d),)
    else:
        s = 1.0 - 0.25 * d
        modes = ((s, -s, -2 * d),)
    return SuspensionModeModel(modes=modes, name=f"toy-llarull-{d:+d}")


def build_model_suite() -> Mapping[str, SuspensionModeModel]:
    """Shipped two-ended model catalog, mixed signs and multiplicities.

    Covers single up/down flow modes, multiplicity stacking, constant
    (index-zero) modes, asymmetric no-flow combinations, adjoint
    mirror pairs, near-gap exponents and the toy degree family.
    """

    def m(name: str, *modes: tuple[float, float, int]) -> SuspensionModeModel:
        return SuspensionModeModel(modes=tuple(modes), name=name)

    suite = {
        "up-unit": m("up-unit", (-1.0, 1.0, 1)),
        "down-unit": m("down-unit", (1.0, -1.0, 1)),
        "up-mult2": m("up-mult2", (-1.0, 1.0, 2)),
        "down-mult3": m("down-mult3", (1.0, -1.0, 3)),
        "constant-plus": m("constant-plus", (1.5, 1.5, 2)),
        "constant-minus": m("constant-minus", (-1.5, -1.5, 2)),
        "balanced-pair": m("balanced-pair", (-1.0, 1.0, 1), (1.0, -1.0, 1)),
        "spectator-up": m("spectator-up", (-2.0, 3.0, 1), (2.5, 2.5, 1)),
        "deep-flow": m("deep-flow", (-4.0, 5.0, 1)),
        "shallow-flow": m("shallow-flow", (-0.6, 0.6, 1)),
        "asym-up": m("asym-up", (-0.8, 2.0, 1)),
        "asym-none": m("asym-none", (-0.8, -2.0, 1)),
        "asym-down": m("asym-down", (2.0, -0.8, 2)),
        "doubled-zero": m("doubled-zero", (-2.0, -2.0, 1), (2.0, 2.0, 1)),
        "three-up-one-down": m(
            "three-up-one-down", (-1.5, 1.5, 3), (1.2, -1.2, 1)
        ),
        "wide-band": m("wide-band", (-3.0, 3.0, 1), (-1.0, 1.0, 1), (2.0, -2.0, 1)),
        "high-mult": m("high-mult", (-1.1, 2.2, 4)),
        "near-gap-pair": m("near-gap-pair", (-0.7, 0.7, 1), (0.7, -0.7, 1)),
        "mixed-bag": m("mixed-bag", (-2.0, 2.0, 2), (1.5, -1.5, 1), (3.0, 3.0, 1)),
    }
    for d in range(-2, 3):
        model = toy_llarull_model(d)
        suite[model.name] = model
    return suite
