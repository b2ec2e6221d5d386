"""Full cone operators, their parametrix, and certified inverses.

A cone operator acts on mode sections over (0, theta] as

    K u = d/dr u + (1/r) (S0 + S1(r)) u,

where S0 = diag(s) over the link modes and S1(r) collects the
perturbation: a relative diagonal part a(s, r) s plus an optional
mode-coupling matrix B(r).  The parametrix P applies the endpoint
kernel on modes s < -1/2 and the origin kernel on modes s > 1/2; the
composite operators built from P carry certified norm caps, and a
truncated Neumann series upgrades P to a two-sided inverse whenever
the perturbation stays below the spectral caps.

Absorbing the outer cone region into a bulk block is bookkeeping:
the absorbed slice is kept as a lazy dense block over its original
nodes and every operator application is evaluated on the reassembled
grid, so absorption changes validation scope (the caps are only
required on the retained cone) without perturbing any computed value.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .grid import Cutoff, ModeSection, RadialGrid, first_derivative, make_grid, truncate_grid
from .link import (GAP_HALF_WIDTH, LinkSpectrum, PerturbationCaps,
                   check_spectral_gap, perturbation_caps)
from .mode_kernels import (ENDPOINT, ORIGIN, KernelOperator, apply_P_modes,
                           apply_P_transpose_modes, dense_matrix)

NEUMANN_TAIL = 1e-10


def _spectral_norm(mat: np.ndarray, tol: float = 1e-12, maxit: int = 10000) -> float:
    """Largest singular value by power iteration on M^T M (deterministic seed)."""
    rng = np.random.default_rng(12345)
    v = rng.standard_normal(mat.shape[1])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(maxit):
        z = mat.T @ (mat @ v)
        nz = np.linalg.norm(z)
        if nz == 0:
            return 0.0
        if abs(nz - lam) <= tol * max(nz, 1.0):
            return float(np.sqrt(nz))
        lam = nz
        v = z / nz
    return float(np.sqrt(lam))


# ---------------------------------------------------------------------------
# perturbation data


@dataclass(frozen=True, eq=False)
class SeparableCoupling:
    """Mode coupling B(r) = beta(r) * C0 with a constant matrix C0."""

    matrix: np.ndarray
    profile: Callable[[np.ndarray], np.ndarray] | float = 1.0

    def beta(self, r: np.ndarray) -> np.ndarray:
        if callable(self.profile):
            return np.asarray(self.profile(r), dtype=float)
        return np.full_like(np.asarray(r, dtype=float), float(self.profile))

    def apply(self, r: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
        return (self.matrix @ coeffs) * self.beta(r)[None, :]

    def apply_transpose(self, r: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
        return (self.matrix.T @ coeffs) * self.beta(r)[None, :]

    def norm_bounds(self, svec: np.ndarray, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-node upper bounds for ||B(r) S0^{-1}|| and ||S0^{-1} B(r)||."""
        beta = np.abs(self.beta(r))
        right = _spectral_norm(self.matrix / svec[None, :])
        left = _spectral_norm(self.matrix / svec[:, None])
        return beta * right, beta * left


@dataclass(frozen=True, eq=False)
class SampledCoupling:
    """Mode coupling stored at sample radii, linearly interpolated."""

    r_nodes: np.ndarray
    values: np.ndarray  # (len(r_nodes), M, M)

    def _at(self, r: np.ndarray) -> np.ndarray:
        rn = self.r_nodes
        idx = np.clip(np.searchsorted(rn, r) - 1, 0, len(rn) - 2)
        t = np.clip((r - rn[idx]) / (rn[idx + 1] - rn[idx]), 0.0, 1.0)
        return (1 - t)[:, None, None] * self.values[idx] + t[:, None, None] * self.values[idx + 1]

    def apply(self, r: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
        B = self._at(np.asarray(r, dtype=float))
        return np.einsum("jmk,kj->mj", B, coeffs)

    def apply_transpose(self, r: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
        B = self._at(np.asarray(r, dtype=float))
        return np.einsum("jkm,kj->mj", B, coeffs)

    def norm_bounds(self, svec: np.ndarray, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        B = self._at(np.asarray(r, dtype=float))
        right = np.array([_spectral_norm(b / svec[None, :]) for b in B])
        left = np.array([_spectral_norm(b / svec[:, None]) for b in B])
        return right, left


Coupling = SeparableCoupling | SampledCoupling


@dataclass(frozen=True, eq=False)
class PerturbationProfile:
    """Relative diagonal part a(s, r) plus optional mode coupling.

    The diagonal part of S1(r) is a(s, r) * s on the s-eigenspace;
    builtins: "zero", "constant" (uses diag_value) and "suspension",
    the profile r/sin(r) - 1 shared by all modes.  A callable diag
    receives (s, r-array) and returns the values for that mode.
    """

    diag: str | Callable[[float, np.ndarray], np.ndarray] = "zero"
    diag_value: float = 0.0
    coupling: Coupling | None = None
    theta: float | None = None

    def diag_values(self, svec: np.ndarray, r: np.ndarray) -> np.ndarray:
        m, n = len(svec), len(r)
        if callable(self.diag):
            return np.stack([np.asarray(self.diag(float(s), r), dtype=float) for s in svec])
        if self.diag == "zero":
            return np.zeros((m, n))
        if self.diag == "constant":
            return np.full((m, n), float(self.diag_value))
        if self.diag == "suspension":
            with np.errstate(divide="ignore", invalid="ignore"):
                a = r / np.sin(r) - 1.0
            return np.broadcast_to(a, (m, n)).copy()
        raise ValueError(f"unknown diagonal profile {self.diag!r}")

    @property
    def is_zero(self) -> bool:
        trivial_diag = self.diag == "zero" or (self.diag == "constant" and self.diag_value == 0.0)
        return trivial_diag and self.coupling is None

    def relative_bounds(self, svec: np.ndarray, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-node upper bounds for ||S1(r) S0^{-1}|| and ||S0^{-1} S1(r)||."""
        a = np.max(np.abs(self.diag_values(svec, r)), axis=0)
        if self.coupling is None:
            return a, a.copy()
        cr, cl = self.coupling.norm_bounds(svec, r)
        return a + cr, a + cl


ZERO_PERTURBATION = PerturbationProfile()


# ---------------------------------------------------------------------------
# bulk blocks


@dataclass(frozen=True, eq=False)
class BulkBlock:
    """User-supplied finite block glued to the cone boundary.

    The glue matrix maps the mode coefficients at the outermost node
    into source terms for the bulk states.
    """

    matrix: np.ndarray
    glue: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix)
        g = np.asarray(self.glue)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("bulk matrix must be square")
        if g.ndim != 2 or g.shape[0] != m.shape[0]:
            raise ValueError("glue rows must match the bulk dimension")


@dataclass(frozen=True, eq=False)
class AbsorbedBulk:
    """Outer cone slice retained after absorb_cone, applied lazily.

    Stores the original grid and the split index k; operator actions
    reassemble the full grid so absorbed results match the un-absorbed
    ones exactly.  dense_matrix materializes the outer block and its
    boundary glue for inspection on small problems.
    """

    full_grid: RadialGrid
    k: int

    @property
    def inner_grid(self) -> RadialGrid:
        return truncate_grid(self.full_grid, self.full_grid.r[self.k - 1])[0]

    @property
    def outer_count(self) -> int:
        return self.full_grid.n - self.k

    def dense_matrix(self, spec: "ConeOperatorSpec") -> tuple[np.ndarray, np.ndarray]:
        """(block, glue): outer-slice operator and its trace coupling.

        block acts on outer coefficients flattened mode-major; glue
        maps the mode coefficients at the last retained cone node.
        Rows reproduce the reassembled-grid stencil exactly.
        """
        m = spec.spectrum.total_multiplicity
        n_out = self.outer_count
        if (m * n_out) ** 2 > 4_000_000:
            raise ValueError("bulk block too large to materialize")
        grid = self.full_grid
        k = self.k
        svec = spec.spectrum.mode_values()
        # first_derivative(grid, I)[j, i] is the stencil weight of node j in
        # the derivative at node i, so the derivative matrix is its transpose.
        D = first_derivative(grid, np.eye(grid.n)).T
        a = spec.perturbation.diag_values(svec, grid.r)
        block = np.zeros((m * n_out, m * n_out))
        glue = np.zeros((m * n_out, m))
        for i in range(m):
            rowsl = slice(i * n_out, (i + 1) * n_out)
            local = D[k:, k:] + np.diag((svec[i] / grid.r[k:]) * (1 + a[i, k:]))
            block[rowsl, rowsl] = local
            glue[rowsl, i] = D[k:, k - 1]
        if spec.perturbation.coupling is not None:
            cpl = spec.perturbation.coupling
            basis = np.eye(m)
            for j in range(n_out):
                rj = grid.r[k + j : k + j + 1]
                Bj = np.stack(
                    [cpl.apply(rj, basis[:, [col]])[:, 0] for col in range(m)], axis=1
                )
                for i in range(m):
                    block[i * n_out + j, j::n_out] += Bj[i, :] / rj[0]
        return block, glue


# ---------------------------------------------------------------------------
# operator specs


@dataclass(frozen=True, eq=False)
class ConeOperatorSpec:
    """Immutable description of a cone operator."""

    spectrum: LinkSpectrum
    theta: float
    perturbation: PerturbationProfile = ZERO_PERTURBATION
    bulk: BulkBlock | AbsorbedBulk | None = None
    chirality_tag: str = "plus"

    def __post_init__(self):
        if self.theta <= 0:
            raise ValueError("theta must be positive")
        if self.chirality_tag not in ("plus", "minus"):
            raise ValueError("chirality_tag must be 'plus' or 'minus'")
        pt = self.perturbation.theta
        if pt is not None and self.theta > pt * (1 + 1e-12):
            raise ValueError("perturbation profile not defined up to theta")

    def default_grid(self, n: int = 2048) -> RadialGrid:
        if isinstance(self.bulk, AbsorbedBulk):
            return self.bulk.inner_grid
        return make_grid(self.theta, n, "log")

    def to_json(self) -> str:
        pert = self.perturbation
        if callable(pert.diag):
            raise ValueError("callable perturbation profiles are not serializable")
        payload: dict = {
            "spectrum": json.loads(self.spectrum.to_json()),
            "theta": self.theta,
            "chirality_tag": self.chirality_tag,
            "perturbation": {"diag": pert.diag, "diag_value": pert.diag_value,
                             "theta": pert.theta},
        }
        cpl = pert.coupling
        if cpl is not None:
            if not isinstance(cpl, SeparableCoupling) or callable(cpl.profile):
                raise ValueError("only constant-profile separable couplings are serializable")
            payload["perturbation"]["coupling"] = {
                "matrix": np.asarray(cpl.matrix).tolist(),
                "profile": float(cpl.profile),
            }
        return json.dumps(payload, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "ConeOperatorSpec":
        data = json.loads(text)
        spectrum = LinkSpectrum(
            entries=tuple((float(s), int(m)) for s, m in data["spectrum"]["entries"]),
            label=data["spectrum"].get("label", ""),
        )
        p = data.get("perturbation", {})
        coupling = None
        if "coupling" in p:
            coupling = SeparableCoupling(matrix=np.array(p["coupling"]["matrix"]),
                                         profile=float(p["coupling"]["profile"]))
        pert = PerturbationProfile(diag=p.get("diag", "zero"),
                                   diag_value=p.get("diag_value", 0.0),
                                   coupling=coupling, theta=p.get("theta"))
        return ConeOperatorSpec(spectrum=spectrum, theta=float(data["theta"]),
                                perturbation=pert,
                                chirality_tag=data.get("chirality_tag", "plus"))


@dataclass(frozen=True)
class ValidationReport:
    gap_ok: bool
    min_abs_eigenvalue: float
    cap_right: float
    cap_left: float
    sup_right: float
    sup_left: float
    ac5_finite: bool
    ac6_holds: bool
    theta_prime: float | None
    margin_right: float
    margin_left: float


def validate_spec(spec: ConeOperatorSpec, grid: RadialGrid | None = None,
                  headroom: float = 1.0) -> ValidationReport:
    """Check the spectral gap and the perturbation caps on the grid.

    Reports the largest admissible truncation radius theta_prime: the
    outermost node below which both relative perturbation bounds stay
    within the spectral caps (None when even the innermost node fails).
    headroom < 1 tightens the caps by that factor, giving the radius at
    which the perturbation consumes only that share of its budget (the
    exact-inverse guarantee wants 0.8).  Report-style: never raises on
    an invalid spec.
    """
    if not 0.0 < headroom <= 1.0:
        raise ValueError("headroom must lie in (0, 1]")
    gap = check_spectral_gap(spec.spectrum)
    if not gap.has_gap:
        return ValidationReport(gap_ok=False, min_abs_eigenvalue=gap.min_abs_eigenvalue,
                                cap_right=math.nan, cap_left=math.nan,
                                sup_right=math.inf, sup_left=math.inf,
                                ac5_finite=False, ac6_holds=False, theta_prime=None,
                                margin_right=-math.inf, margin_left=-math.inf)
    caps = perturbation_caps(spec.spectrum)
    if isinstance(spec.bulk, AbsorbedBulk):
        grid = spec.bulk.inner_grid
    elif grid is None:
        grid = spec.default_grid()
    svec = spec.spectrum.mode_values()
    b_right, b_left = spec.perturbation.relative_bounds(svec, grid.r)
    pr = np.maximum.accumulate(b_right)
    pl = np.maximum.accumulate(b_left)
    sup_right = float(pr[-1])
    sup_left = float(pl[-1])
    ok = (pr <= caps.cap_right * headroom) & (pl <= caps.cap_left * headroom)
    idx = np.nonzero(ok)[0]
    theta_prime = float(grid.r[idx[-1]]) if len(idx) else None
    ac6 = bool(len(idx) and idx[-1] == grid.n - 1)
    return ValidationReport(
        gap_ok=True,
        min_abs_eigenvalue=gap.min_abs_eigenvalue,
        cap_right=caps.cap_right,
        cap_left=caps.cap_left,
        sup_right=sup_right,
        sup_left=sup_left,
        ac5_finite=bool(np.isfinite(sup_left)),
        ac6_holds=ac6,
        theta_prime=theta_prime,
        margin_right=caps.cap_right - sup_right,
        margin_left=caps.cap_left - sup_left,
    )


def absorb_cone(spec: ConeOperatorSpec, theta_prime: float,
                grid: RadialGrid | None = None) -> ConeOperatorSpec:
    """Move the cone slice [theta_prime, theta] into a lazy bulk block.

    Node positions are preserved, so operator actions on sections are
    unchanged; only the validation scope shrinks to (0, theta_prime].
    Absorbing an already absorbed spec re-splits the original grid.
    """
    if isinstance(spec.bulk, AbsorbedBulk):
        full = spec.bulk.full_grid
        if not 0 < theta_prime < spec.theta:
            raise ValueError("theta_prime out of range")
        inner, k = truncate_grid(full, theta_prime)
        return replace(spec, theta=float(inner.theta), bulk=AbsorbedBulk(full_grid=full, k=k))
    if spec.bulk is not None:
        raise ValueError("cannot absorb a spec with a user-supplied bulk block")
    if not 0 < theta_prime < spec.theta:
        raise ValueError("theta_prime out of range")
    if grid is None:
        grid = make_grid(spec.theta, 2048, "log")
    inner, k = truncate_grid(grid, theta_prime)
    if k >= grid.n:
        raise ValueError("theta_prime leaves no nodes to absorb")
    return replace(spec, theta=float(inner.theta), bulk=AbsorbedBulk(full_grid=grid, k=k))


def absorb_section(spec: ConeOperatorSpec, section: ModeSection) -> ModeSection:
    """Split a full-grid section into (cone, bulk) for an absorbed spec."""
    if not isinstance(spec.bulk, AbsorbedBulk):
        raise ValueError("spec has no absorbed bulk")
    ab = spec.bulk
    if section.grid.n != ab.full_grid.n:
        raise ValueError("grid mismatch: section does not live on the original grid")
    return ModeSection(grid=ab.inner_grid, spectrum=section.spectrum,
                       coeffs=section.coeffs[:, :ab.k], bulk=section.coeffs[:, ab.k:])


# ---------------------------------------------------------------------------
# work-space plumbing


def _cone_arrays(spec: ConeOperatorSpec, u: ModeSection):
    """Return (grid, coeffs, wrap) for the retained cone part only.

    Parametrix-based operations act here: on an absorbed spec the
    kernels integrate over (0, theta'] so the certified caps of the
    validated truncation apply.  The bulk part is passed through
    untouched by wrap.
    """
    if isinstance(spec.bulk, AbsorbedBulk):
        ab = spec.bulk
        if u.grid.n != ab.k or abs(u.grid.theta - spec.theta) > 1e-12 * spec.theta:
            raise ValueError("grid mismatch: section does not live on the spec's cone grid")
    elif abs(u.grid.theta - spec.theta) > 1e-12 * spec.theta:
        raise ValueError("grid mismatch: section interval differs from the spec's theta")

    def wrap(arr: np.ndarray) -> ModeSection:
        return ModeSection(grid=u.grid, spectrum=u.spectrum, coeffs=arr, bulk=u.bulk)

    return u.grid, u.coeffs, wrap


def _work_arrays(spec: ConeOperatorSpec, u: ModeSection):
    """Return (grid, coeffs, wrap) with any absorbed bulk re-attached."""
    if isinstance(spec.bulk, AbsorbedBulk):
        ab = spec.bulk
        if u.grid.n != ab.k or abs(u.grid.theta - spec.theta) > 1e-12 * spec.theta:
            raise ValueError("grid mismatch: section does not live on the spec's cone grid")
        bulk = u.bulk
        if bulk is None:
            bulk = np.zeros((u.coeffs.shape[0], ab.outer_count), dtype=u.coeffs.dtype)
        coeffs = np.concatenate([u.coeffs, bulk], axis=1)

        def wrap(arr: np.ndarray) -> ModeSection:
            return ModeSection(grid=u.grid, spectrum=u.spectrum,
                               coeffs=arr[:, :ab.k], bulk=arr[:, ab.k:])

        return ab.full_grid, coeffs, wrap
    if abs(u.grid.theta - spec.theta) > 1e-12 * spec.theta:
        raise ValueError("grid mismatch: section interval differs from the spec's theta")

    def wrap(arr: np.ndarray) -> ModeSection:
        return ModeSection(grid=u.grid, spectrum=u.spectrum, coeffs=arr, bulk=u.bulk)

    return u.grid, u.coeffs, wrap


def section_norm(spec: ConeOperatorSpec, u: ModeSection) -> float:
    """Weighted L2 norm over the cone and any absorbed outer slice."""
    grid, coeffs, _ = _work_arrays(spec, u)
    total = np.sum(grid.w * np.abs(coeffs) ** 2)
    if isinstance(spec.bulk, BulkBlock) and u.bulk is not None:
        total += np.sum(np.abs(u.bulk) ** 2)
    return float(np.sqrt(total))


def _apply_S1_over_r(spec, grid, svec, coeffs):
    """(1/r) S1(r) u as an array operation."""
    pert = spec.perturbation
    a = pert.diag_values(svec, grid.r)
    out = (svec[:, None] / grid.r) * a * coeffs
    if pert.coupling is not None:
        out = out + pert.coupling.apply(grid.r, coeffs) / grid.r
    return out


def _apply_S1_over_r_T(spec, grid, svec, coeffs):
    pert = spec.perturbation
    a = pert.diag_values(svec, grid.r)
    out = (svec[:, None] / grid.r) * a * coeffs
    if pert.coupling is not None:
        out = out + pert.coupling.apply_transpose(grid.r, coeffs) / grid.r
    return out


def _apply_K_arrays(spec, grid, svec, coeffs):
    a = spec.perturbation.diag_values(svec, grid.r)
    out = first_derivative(grid, coeffs) + (svec[:, None] / grid.r) * (1 + a) * coeffs
    if spec.perturbation.coupling is not None:
        out = out + spec.perturbation.coupling.apply(grid.r, coeffs) / grid.r
    return out


def _parametrix_split(svec: np.ndarray):
    plus = svec > GAP_HALF_WIDTH
    minus = svec < -GAP_HALF_WIDTH
    if not np.all(plus | minus):
        raise ValueError("mode inside spectral gap")
    return plus, minus


def _apply_P_arrays(grid, svec, coeffs):
    plus, minus = _parametrix_split(svec)
    out = np.zeros_like(coeffs, dtype=np.result_type(coeffs.dtype, float))
    if np.any(plus):
        out[plus] = apply_P_modes(grid, ORIGIN, svec[plus], coeffs[plus])
    if np.any(minus):
        out[minus] = apply_P_modes(grid, ENDPOINT, svec[minus], coeffs[minus])
    return out


def _apply_P_T_arrays(grid, svec, coeffs):
    plus, minus = _parametrix_split(svec)
    out = np.zeros_like(coeffs, dtype=np.result_type(coeffs.dtype, float))
    if np.any(plus):
        out[plus] = apply_P_transpose_modes(grid, ORIGIN, svec[plus], coeffs[plus])
    if np.any(minus):
        out[minus] = apply_P_transpose_modes(grid, ENDPOINT, svec[minus], coeffs[minus])
    return out


# ---------------------------------------------------------------------------
# public operator applications


def apply_K(spec: ConeOperatorSpec, u: ModeSection) -> ModeSection:
    """K u = d/dr u + (s/r)(1 + a(s, r)) u + (1/r) B(r) u (+ bulk block)."""
    grid, coeffs, wrap = _work_arrays(spec, u)
    svec = u.spectrum.mode_values()
    out = _apply_K_arrays(spec, grid, svec, coeffs)
    result = wrap(out)
    if isinstance(spec.bulk, BulkBlock):
        b = u.bulk if u.bulk is not None else np.zeros(spec.bulk.matrix.shape[0])
        result = result.copy_with(result.coeffs,
                                  bulk=spec.bulk.matrix @ b + spec.bulk.glue @ u.coeffs[:, -1])
    return result


def apply_parametrix(spec: ConeOperatorSpec, u: ModeSection) -> ModeSection:
    """Mode-wise parametrix: endpoint kernel below the gap, origin above.

    On an absorbed spec the kernels run over the retained cone
    (0, theta'] and the bulk part is passed through unchanged.
    """
    grid, coeffs, wrap = _cone_arrays(spec, u)
    svec = u.spectrum.mode_values()
    return wrap(_apply_P_arrays(grid, svec, coeffs))


# ---------------------------------------------------------------------------
# composite operators with certified caps


@dataclass(frozen=True, eq=False)
class CompositeKit:
    """Handles for the bounded composites built from the parametrix.

    Names: "S0P" = (1/r) S0 P, "PS0" = P (1/r) S0, "S1P" = (1/r) S1 P,
    "PS1" = P (1/r) S1, "invrP" = (1/r) P, "P" = the parametrix itself.
    caps maps each name to its certified norm bound.
    """

    spec: ConeOperatorSpec
    grid: RadialGrid
    svec: np.ndarray
    caps: dict

    def apply(self, name: str, coeffs: np.ndarray) -> np.ndarray:
        grid, svec, spec = self.grid, self.svec, self.spec
        r = grid.r
        if name == "P":
            return _apply_P_arrays(grid, svec, coeffs)
        if name == "invrP":
            return _apply_P_arrays(grid, svec, coeffs) / r
        if name == "S0P":
            return (svec[:, None] / r) * _apply_P_arrays(grid, svec, coeffs)
        if name == "PS0":
            return _apply_P_arrays(grid, svec, (svec[:, None] / r) * coeffs)
        if name == "S1P":
            return _apply_S1_over_r(spec, grid, svec, _apply_P_arrays(grid, svec, coeffs))
        if name == "PS1":
            return _apply_P_arrays(grid, svec, _apply_S1_over_r(spec, grid, svec, coeffs))
        raise ValueError(f"unknown composite {name!r}")

    def apply_adjoint(self, name: str, coeffs: np.ndarray) -> np.ndarray:
        grid, svec, spec = self.grid, self.svec, self.spec
        r, w = grid.r, grid.w

        def p_star(v):
            return _apply_P_T_arrays(grid, svec, w * v) / w

        if name == "P":
            return p_star(coeffs)
        if name == "invrP":
            return p_star(coeffs / r)
        if name == "S0P":
            return p_star((svec[:, None] / r) * coeffs)
        if name == "PS0":
            return (svec[:, None] / r) * p_star(coeffs)
        if name == "S1P":
            return p_star(_apply_S1_over_r_T(spec, grid, svec, coeffs))
        if name == "PS1":
            return _apply_S1_over_r_T(spec, grid, svec, p_star(coeffs))
        raise ValueError(f"unknown composite {name!r}")

    def apply_section(self, name: str, u: ModeSection) -> ModeSection:
        _, coeffs, wrap = _cone_arrays(self.spec, u)
        return wrap(self.apply(name, coeffs))

    def measured_norm(self, name: str, tol: float = 1e-10,
                      maxit: int = 10000, seed: int = 0) -> float:
        rng = np.random.default_rng(seed)
        v = rng.standard_normal((len(self.svec), self.grid.n))
        v /= np.sqrt(np.sum(self.grid.w * v**2))
        lam = 0.0
        for _ in range(maxit):
            z = self.apply_adjoint(name, self.apply(name, v))
            nz = float(np.sqrt(np.sum(self.grid.w * z**2)))
            if nz == 0.0:
                return 0.0
            if abs(nz - lam) <= tol * max(nz, 1.0):
                return float(np.sqrt(nz))
            lam = nz
            v = z / nz
        raise ValueError("operator norm power iteration did not converge "
                         f"after {maxit} steps")


def composite_ops(spec: ConeOperatorSpec, grid: RadialGrid | None = None) -> CompositeKit:
    """Composite handles with certified caps over the spec's spectrum.

    Absorbed specs always use their retained cone grid, where the
    validated caps apply.
    """
    if isinstance(spec.bulk, AbsorbedBulk):
        grid = spec.bulk.inner_grid
    elif grid is None:
        grid = spec.default_grid()
    svec = spec.spectrum.mode_values()
    _parametrix_split(svec)
    plus_half = np.abs(svec + 0.5)
    minus_half = np.abs(svec - 0.5)
    cap_s0p = float(np.max(np.abs(svec) / plus_half))
    cap_ps0 = float(np.max(np.abs(svec) / minus_half))
    b_right, b_left = spec.perturbation.relative_bounds(svec, grid.r)
    caps = {
        "P": float(np.max(1.0 / plus_half)) * grid.theta,
        "invrP": float(np.max(1.0 / plus_half)),
        "S0P": cap_s0p,
        "PS0": cap_ps0,
        "S1P": float(np.max(b_right)) * cap_s0p,
        "PS1": cap_ps0 * float(np.max(b_left)),
    }
    return CompositeKit(spec=spec, grid=grid, svec=svec, caps=caps)


# ---------------------------------------------------------------------------
# parametrix identities


def parametrix_right_identity(spec: ConeOperatorSpec, psi: Cutoff, u: ModeSection) -> float:
    """Relative residual of K(psi P u) = psi u + psi {(1/r)S1 P}u + psi' P u.

    Evaluated over the retained cone; with psi supported inside it,
    every term vanishes beyond the cutoff so nothing is lost.
    """
    grid, coeffs, _ = _cone_arrays(spec, u)
    svec = u.spectrum.mode_values()
    denom = float(np.sqrt(np.sum(grid.w * np.abs(coeffs) ** 2)))
    if denom == 0.0:
        return 0.0
    tau = psi.evaluate(grid.r)
    dtau = psi.evaluate_r_dtau(grid.r) / grid.r
    pu = _apply_P_arrays(grid, svec, coeffs)
    lhs = _apply_K_arrays(spec, grid, svec, tau * pu)
    s1pu = _apply_S1_over_r(spec, grid, svec, pu)
    rhs = tau * coeffs + tau * s1pu + dtau * pu
    return float(np.sqrt(np.sum(grid.w * np.abs(lhs - rhs) ** 2))) / denom


def parametrix_left_identity(spec: ConeOperatorSpec, u: ModeSection) -> float:
    """Relative residual of P K u = u + {P (1/r) S1}u (interior u).

    Evaluated over the retained cone part of the spec.
    """
    grid, coeffs, _ = _cone_arrays(spec, u)
    svec = u.spectrum.mode_values()
    denom = float(np.sqrt(np.sum(grid.w * np.abs(coeffs) ** 2)))
    if denom == 0.0:
        return 0.0
    lhs = _apply_P_arrays(grid, svec, _apply_K_arrays(spec, grid, svec, coeffs))
    rhs = coeffs + _apply_P_arrays(grid, svec, _apply_S1_over_r(spec, grid, svec, coeffs))
    return float(np.sqrt(np.sum(grid.w * np.abs(lhs - rhs) ** 2))) / denom


def commutation_check(spec: ConeOperatorSpec, j: int, u: ModeSection) -> float:
    """Relative difference of {P(1/r)S1}^j P u and P {(1/r)S1 P}^j u."""
    if j < 1:
        raise ValueError("j must be at least 1")
    grid, coeffs, _ = _cone_arrays(spec, u)
    svec = u.spectrum.mode_values()
    kit = composite_ops(spec, grid)
    lhs = _apply_P_arrays(grid, svec, coeffs)
    for _ in range(j):
        lhs = kit.apply("PS1", lhs)
    rhs = coeffs
    for _ in range(j):
        rhs = kit.apply("S1P", rhs)
    rhs = _apply_P_arrays(grid, svec, rhs)
    scale = max(
        float(np.sqrt(np.sum(grid.w * np.abs(lhs) ** 2))),
        float(np.sqrt(np.sum(grid.w * np.abs(rhs) ** 2))),
    )
    if scale == 0.0:
        return 0.0
    return float(np.sqrt(np.sum(grid.w * np.abs(lhs - rhs) ** 2))) / scale


def global_dense_factors(spec: ConeOperatorSpec,
                         grid: RadialGrid | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Dense (M_P, M_B) acting on mode-major flattened coefficients.

    M_P is the block-diagonal parametrix (one kernel matrix per mode),
    M_B the coupled (1/r) S1 multiplication; commutation and Neumann
    chains become literal matrix products, giving an independent oracle
    for the matrix-free applications.  Meant for small oracle grids:
    refuses problems past a hard size guard.
    """
    if isinstance(spec.bulk, AbsorbedBulk):
        grid = spec.bulk.inner_grid
    elif grid is None:
        grid = spec.default_grid()
    svec = spec.spectrum.mode_values()
    m, n = len(svec), grid.n
    if m * n > 1 << 12:
        raise ValueError("oracle matrices too large: modes * nodes must stay "
                         f"within {1 << 12}, got {m * n}")
    plus, minus = _parametrix_split(svec)
    mp = np.zeros((m * n, m * n))
    for p in range(m):
        kind = ORIGIN if plus[p] else ENDPOINT
        op = KernelOperator(kind=kind, s=float(svec[p]), grid=grid)
        mp[p * n:(p + 1) * n, p * n:(p + 1) * n] = dense_matrix(op)
    mb = np.zeros((m * n, m * n))
    r = grid.r
    a = spec.perturbation.diag_values(svec, r)
    for p in range(m):
        blk = slice(p * n, (p + 1) * n)
        mb[blk, blk] = np.diag(svec[p] * a[p] / r)
    cpl = spec.perturbation.coupling
    if cpl is not None:
        if isinstance(cpl, SeparableCoupling):
            cvals = cpl.beta(r)[:, None, None] * cpl.matrix[None, :, :]
        else:
            cvals = cpl._at(r)
        for p in range(m):
            for q in range(m):
                mb[p * n:(p + 1) * n, q * n:(q + 1) * n] += np.diag(cvals[:, p, q] / r)
    return mp, mb


# ---------------------------------------------------------------------------
# Neumann inverse


@dataclass(frozen=True, eq=False)
class NeumannInverse:
    """Truncated Neumann series V = sum_j (-1)^j {(1/r)S1 P}^j."""

    spec: ConeOperatorSpec
    kit: CompositeKit
    q: float
    j_max: int

    def apply_arrays(self, coeffs: np.ndarray) -> np.ndarray:
        acc = coeffs.copy()
        term = coeffs
        for _ in range(self.j_max):
            term = -self.kit.apply("S1P", term)
            acc = acc + term
        return acc

    def apply(self, u: ModeSection) -> ModeSection:
        _, coeffs, wrap = _cone_arrays(self.spec, u)
        return wrap(self.apply_arrays(coeffs))


def neumann_inverse(spec: ConeOperatorSpec, grid: RadialGrid | None = None,
                    measure_norm: bool | None = None) -> NeumannInverse:
    """Build V with the term count from the geometric tail bound.

    q is the smaller of the certified cap for {(1/r)S1 P} and (when
    affordable or requested) its measured discrete norm; j_max is the
    least count with q^(j_max+1) <= 1e-10.
    """
    report = validate_spec(spec, grid)
    kit = composite_ops(spec, grid)
    if spec.perturbation.is_zero:
        return NeumannInverse(spec=spec, kit=kit, q=0.0, j_max=0)
    if not (report.gap_ok and report.ac6_holds):
        raise ValueError("perturbation too large")
    q = min(kit.caps["S1P"], 0.5)
    if measure_norm is None:
        measure_norm = len(kit.svec) * kit.grid.n <= 1 << 18
    if measure_norm:
        q = min(q, kit.measured_norm("S1P"))
    if q <= 0.0:
        return NeumannInverse(spec=spec, kit=kit, q=0.0, j_max=0)
    j_max = max(0, math.ceil(math.log(NEUMANN_TAIL) / math.log(q)) - 1)
    return NeumannInverse(spec=spec, kit=kit, q=float(q), j_max=j_max)


def exact_inverse_residual(spec: ConeOperatorSpec, u: ModeSection,
                           inverse: NeumannInverse | None = None) -> float:
    """Relative residual of u = P V K u for interior-supported u."""
    if inverse is None:
        inverse = neumann_inverse(spec)
    grid, coeffs, _ = _cone_arrays(spec, u)
    svec = u.spectrum.mode_values()
    denom = float(np.sqrt(np.sum(grid.w * np.abs(coeffs) ** 2)))
    if denom == 0.0:
        return 0.0
    ku = _apply_K_arrays(spec, grid, svec, coeffs)
    rec = _apply_P_arrays(grid, svec, inverse.apply_arrays(ku))
    return float(np.sqrt(np.sum(grid.w * np.abs(rec - coeffs) ** 2))) / denom


# ---------------------------------------------------------------------------
# norm comparisons


@dataclass(frozen=True)
class NormReport:
    graph_norm: float
    h1_cone_norm: float
    ratio: float
    components: tuple[float, float, float]  # (|u|, |du|, |(1/r)S0 u|)


def norm_report(spec: ConeOperatorSpec, u: ModeSection) -> NormReport:
    """Graph norm of K against the weighted first-order cone norm."""
    grid, coeffs, _ = _work_arrays(spec, u)
    svec = u.spectrum.mode_values()

    def nrm(arr):
        return float(np.sqrt(np.sum(grid.w * np.abs(arr) ** 2)))

    base = nrm(coeffs)
    ku = nrm(_apply_K_arrays(spec, grid, svec, coeffs))
    du = nrm(first_derivative(grid, coeffs))
    s0u = nrm((svec[:, None] / grid.r) * coeffs)
    graph = math.hypot(base, ku)
    h1 = math.sqrt(base**2 + du**2 + s0u**2)
    ratio = graph / h1 if h1 > 0 else math.nan
    return NormReport(graph_norm=graph, h1_cone_norm=h1, ratio=ratio,
                      components=(base, du, s0u))
