"""Radial grids, quadrature, cutoff functions, and mode sections.

Grids discretize a radial interval (0, theta] with the left endpoint
excluded; quadrature weights account for the (0, r_1] sliver so that
integrating the constant 1 returns theta.  Sections store one
coefficient row per link mode.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable

import numpy as np

from .link import LinkSpectrum

DEFAULT_R_MIN_REL = 1e-6

# log-ramp slope constant for cutoffs; chosen so the two branches of the
# delta rule meet at eps = 1/2, where delta = 1/8.
CUTOFF_SLOPE_CONST = 0.5 * np.log(8.0)


@dataclass(frozen=True)
class RadialGrid:
    """Nodes and trapezoid-type quadrature weights on (0, theta]."""

    r: np.ndarray
    w: np.ndarray
    theta: float
    scheme: str
    r_min: float

    @property
    def n(self) -> int:
        return len(self.r)

    def integrate(self, values: np.ndarray) -> float | complex:
        return np.sum(self.w * values, axis=-1)

    def norm(self, values: np.ndarray) -> float:
        """Weighted L2 norm along the last axis, summed over leading axes."""
        return float(np.sqrt(np.sum(self.w * np.abs(values) ** 2)))

    def meta(self) -> dict:
        return {
            "n": self.n,
            "theta": self.theta,
            "scheme": self.scheme,
            "r_min": self.r_min,
        }


def _trapezoid_weights(r: np.ndarray, theta: float, close_right: bool) -> np.ndarray:
    w = np.zeros_like(r)
    dr = np.diff(r)
    w[:-1] += dr / 2
    w[1:] += dr / 2
    w[0] += r[0]  # (0, r_1] sliver, rectangle rule
    if close_right and theta > r[-1]:
        w[-1] += theta - r[-1]
    return w


def make_grid(
    theta: float,
    n: int,
    scheme: str = "log",
    r_min: float | None = None,
) -> RadialGrid:
    """Build a radial grid on (0, theta].

    scheme "uniform": equispaced nodes on [r_min, theta].
    scheme "log": half the nodes geometric on [r_min, theta/2), the
    rest uniform up to theta; resolves the conical end without losing
    the outer region.
    """
    if n < 16:
        raise ValueError("grid too small: need at least 16 nodes")
    if theta <= 0:
        raise ValueError("theta must be positive")
    if r_min is None:
        r_min = DEFAULT_R_MIN_REL * theta
    if r_min >= theta:
        raise ValueError("r_min must be smaller than theta")
    if scheme == "uniform":
        r = np.linspace(r_min, theta, n)
    elif scheme == "log":
        n_log = n // 2
        r = np.concatenate(
            [
                np.geomspace(r_min, theta / 2, n_log, endpoint=False),
                np.linspace(theta / 2, theta, n - n_log),
            ]
        )
    else:
        raise ValueError(f"unknown grid scheme {scheme!r}")
    w = _trapezoid_weights(r, theta, close_right=False)
    return RadialGrid(r=r, w=w, theta=float(theta), scheme=scheme, r_min=float(r_min))


def make_two_ended_grid(n: int, r_min: float = 1e-5) -> RadialGrid:
    """Grid on (0, pi) refined geometrically toward both endpoints.

    Used by the two-ended mode models whose radial coefficient is
    singular at 0 and at pi.
    """
    if n < 16:
        raise ValueError("grid too small: need at least 16 nodes")
    q = n // 4
    left = np.geomspace(r_min, np.pi / 4, q, endpoint=False)
    mid = np.linspace(np.pi / 4, 3 * np.pi / 4, n - 2 * q, endpoint=False)
    right = np.pi - np.geomspace(r_min, np.pi / 4, q, endpoint=False)[::-1]
    r = np.concatenate([left, mid, right])
    w = _trapezoid_weights(r, np.pi, close_right=True)
    return RadialGrid(r=r, w=w, theta=float(np.pi), scheme="two-ended", r_min=float(r_min))


def truncate_grid(grid: RadialGrid, theta_prime: float) -> tuple[RadialGrid, int]:
    """Restrict a grid to nodes <= theta_prime (snapped to a node).

    Returns the truncated grid and the number of retained nodes.  Node
    positions are preserved exactly so that operator actions on
    interior-supported sections are unchanged.
    """
    k = int(np.searchsorted(grid.r, theta_prime, side="right"))
    if k < 16:
        raise ValueError("truncation leaves fewer than 16 nodes")
    r = grid.r[:k].copy()
    w = _trapezoid_weights(r, r[-1], close_right=False)
    new = RadialGrid(r=r, w=w, theta=float(r[-1]), scheme=grid.scheme, r_min=grid.r_min)
    return new, k


def first_derivative(grid: RadialGrid, values: np.ndarray) -> np.ndarray:
    """Second-order first derivative along the last axis.

    Central three-point stencils on the nonuniform interior, one-sided
    second-order stencils at both ends.  No boundary condition rows.
    """
    r = grid.r
    v = np.asarray(values)
    out = np.empty_like(v, dtype=np.result_type(v.dtype, float))
    hm = r[1:-1] - r[:-2]
    hp = r[2:] - r[1:-1]
    am = -hp / (hm * (hm + hp))
    a0 = (hp - hm) / (hm * hp)
    ap = hm / (hp * (hm + hp))
    out[..., 1:-1] = am * v[..., :-2] + a0 * v[..., 1:-1] + ap * v[..., 2:]
    h0, h1 = r[1] - r[0], r[2] - r[1]
    out[..., 0] = (
        -(2 * h0 + h1) / (h0 * (h0 + h1)) * v[..., 0]
        + (h0 + h1) / (h0 * h1) * v[..., 1]
        - h0 / (h1 * (h0 + h1)) * v[..., 2]
    )
    hn, hn1 = r[-1] - r[-2], r[-2] - r[-3]
    out[..., -1] = (
        (2 * hn + hn1) / (hn * (hn + hn1)) * v[..., -1]
        - (hn + hn1) / (hn * hn1) * v[..., -2]
        + hn / (hn1 * (hn + hn1)) * v[..., -3]
    )
    return out


# ---------------------------------------------------------------------------
# cutoff family


def _bump_kernel_tables(m: int = 4001, mq: int = 401):
    x = np.linspace(-1.0, 1.0, m)
    k = np.zeros(m)
    inner = np.abs(x) < 1
    k[inner] = np.exp(-1.0 / (1.0 - x[inner] ** 2))
    cdf = np.concatenate([[0.0], np.cumsum((k[1:] + k[:-1]) / 2 * np.diff(x))])
    cdf /= cdf[-1]
    # coarser quadrature nodes for value integrals (kernel is flat at +-1,
    # so the trapezoid rule converges superalgebraically)
    xq = np.linspace(-1.0, 1.0, mq)
    kq = np.zeros(mq)
    inner = np.abs(xq) < 1
    kq[inner] = np.exp(-1.0 / (1.0 - xq[inner] ** 2))
    wq = np.full(mq, 2.0 / (mq - 1))
    wq[0] = wq[-1] = 1.0 / (mq - 1)
    wq *= kq
    wq /= wq.sum()
    return x, cdf, xq, wq


_KERNEL_X, _KERNEL_CDF, _KQ_X, _KQ_W = _bump_kernel_tables()


@dataclass(frozen=True)
class Cutoff:
    """Smooth radial cutoff: 1 on (0, delta*eps], 0 on [eps, inf).

    Built as a log-coordinate ramp mollified by convolution with a
    smooth probability kernel, so sup |r * tau'(r)| stays strictly
    below eps.  tau and r*tau' are sampled on the grid; the callables
    evaluate at arbitrary radii.
    """

    eps: float
    delta: float
    grid: RadialGrid
    tau: np.ndarray
    r_dtau: np.ndarray
    _ramp: tuple[float, float, float] = field(repr=False, default=(0.0, 0.0, 0.0))

    def evaluate(self, r: np.ndarray) -> np.ndarray:
        return _cutoff_eval(np.asarray(r, dtype=float), self.eps, self.delta, self._ramp)[0]

    def evaluate_r_dtau(self, r: np.ndarray) -> np.ndarray:
        return _cutoff_eval(np.asarray(r, dtype=float), self.eps, self.delta, self._ramp)[1]

    @property
    def dtau(self) -> np.ndarray:
        return self.r_dtau / self.grid.r


def _cutoff_eval(r, eps, delta, ramp):
    """Return (tau(r), r*tau'(r)) for the mollified log ramp."""
    slope_len, w, t0 = ramp  # ramp length after shrink, kernel half width, ln eps
    t = np.full_like(r, -np.inf)
    pos = r > 0
    t = np.where(pos, np.log(np.maximum(r, 1e-300)), t)
    # pre-mollification ramp R: 0 for t >= t0 - w, 1 for t <= t0 - w - slope_len
    # tau(t) = int R(t - w x) k(x) dx; R is piecewise linear so the integral
    # splits into kernel CDF terms evaluated at the clip points.
    a = (t - (t0 - w)) / w          # x above a: R(t - w x) leaves the 0 region
    b = (t - (t0 - w - slope_len)) / w
    Fa = np.interp(a, _KERNEL_X, _KERNEL_CDF, left=0.0, right=1.0)
    Fb = np.interp(b, _KERNEL_X, _KERNEL_CDF, left=0.0, right=1.0)
    tt = t[..., None] - w * _KQ_X
    Rv = np.clip(((t0 - w) - tt) / slope_len, 0.0, 1.0)
    tau = Rv @ _KQ_W
    tau = np.where(t <= t0 - w - slope_len - w, 1.0, tau)
    tau = np.where(t >= t0, 0.0, tau)
    # d tau / d t = -(1/slope_len) * P(kernel mass where R is on its ramp)
    mass = np.clip(Fb, 0, 1) - np.clip(Fa, 0, 1)
    r_dtau = -(1.0 / slope_len) * mass
    r_dtau = np.where((t >= t0) | (t <= t0 - w - slope_len - w), 0.0, r_dtau)
    return tau, r_dtau


def make_cutoff(eps: float, grid: RadialGrid) -> Cutoff:
    """Cutoff supported in [0, eps] with sup |r tau'| <= eps.

    delta = min(exp(-C1/eps), 1/8) with C1 = ln(8)/2; the mollifier
    width is carved out of the slope margin so that convolution cannot
    push the slope bound above eps.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if eps >= grid.theta:
        raise ValueError("cutoff support must sit inside the grid interval")
    delta = float(min(np.exp(-CUTOFF_SLOPE_CONST / eps), 1.0 / 8.0))
    L = np.log(1.0 / delta)
    margin = L - 1.0 / eps  # positive by construction of delta
    w = 0.45 * margin
    slope_len = L - 2 * w
    ramp = (float(slope_len), float(w), float(np.log(eps)))
    tau, r_dtau = _cutoff_eval(grid.r, eps, delta, ramp)
    return Cutoff(eps=float(eps), delta=delta, grid=grid, tau=tau, r_dtau=r_dtau, _ramp=ramp)


# ---------------------------------------------------------------------------
# mode sections


@dataclass
class ModeSection:
    """Coefficient rows over the grid, one per link mode.

    coeffs has shape (total multiplicity, grid.n); an optional bulk
    coefficient vector rides along for glued specs.
    """

    grid: RadialGrid
    spectrum: LinkSpectrum
    coeffs: np.ndarray
    bulk: np.ndarray | None = None

    def __post_init__(self):
        self.coeffs = np.atleast_2d(np.asarray(self.coeffs))
        m = self.spectrum.total_multiplicity
        if self.coeffs.shape != (m, self.grid.n):
            raise ValueError(
                "coeffs shape %r does not match (modes, nodes) = (%d, %d)"
                % (self.coeffs.shape, m, self.grid.n)
            )

    @property
    def mode_values(self) -> np.ndarray:
        return self.spectrum.mode_values()

    def norm(self) -> float:
        total = np.sum(self.grid.w * np.abs(self.coeffs) ** 2)
        if self.bulk is not None:
            total += np.sum(np.abs(self.bulk) ** 2)
        return float(np.sqrt(total))

    def copy_with(self, coeffs: np.ndarray, bulk=None) -> "ModeSection":
        return ModeSection(grid=self.grid, spectrum=self.spectrum, coeffs=coeffs, bulk=bulk)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["mode_index", "s", "r", "re", "im"])
        sv = self.mode_values
        for i in range(self.coeffs.shape[0]):
            for j, r in enumerate(self.grid.r):
                c = complex(self.coeffs[i, j])
                writer.writerow([i, repr(float(sv[i])), repr(float(r)),
                                 repr(c.real), repr(c.imag)])
        return buf.getvalue()

    def to_json(self) -> str:
        payload = {
            "grid": {"r": self.grid.r.tolist(), "theta": self.grid.theta,
                     "scheme": self.grid.scheme, "r_min": self.grid.r_min},
            "spectrum": json.loads(self.spectrum.to_json()),
            "coeffs_re": np.real(self.coeffs).tolist(),
            "coeffs_im": np.imag(self.coeffs).tolist(),
        }
        return json.dumps(payload, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "ModeSection":
        data = json.loads(text)
        r = np.array(data["grid"]["r"])
        grid = RadialGrid(
            r=r,
            w=_trapezoid_weights(r, data["grid"]["theta"], close_right=False),
            theta=data["grid"]["theta"],
            scheme=data["grid"]["scheme"],
            r_min=data["grid"]["r_min"],
        )
        spec = LinkSpectrum(
            entries=tuple((float(s), int(m)) for s, m in data["spectrum"]["entries"]),
            label=data["spectrum"].get("label", ""),
        )
        coeffs = np.array(data["coeffs_re"]) + 1j * np.array(data["coeffs_im"])
        if np.all(np.imag(coeffs) == 0):
            coeffs = np.real(coeffs)
        return ModeSection(grid=grid, spectrum=spec, coeffs=coeffs)


def mode_section_from(
    grid: RadialGrid,
    spectrum: LinkSpectrum,
    fill: Callable[[float, np.ndarray], np.ndarray] | np.ndarray,
) -> ModeSection:
    """Build a section from an array or a callable fill(s, r) per mode."""
    if callable(fill):
        sv = spectrum.mode_values()
        coeffs = np.stack([np.asarray(fill(float(s), grid.r)) for s in sv])
    else:
        coeffs = np.asarray(fill)
    return ModeSection(grid=grid, spectrum=spectrum, coeffs=coeffs)


def smooth_bump(r: np.ndarray, a: float, b: float) -> np.ndarray:
    """C-infinity bump supported on (a, b), unit peak."""
    x = (np.asarray(r) - a) / (b - a)
    out = np.zeros_like(x, dtype=float)
    m = (x > 0) & (x < 1)
    out[m] = np.exp(4.0 - 1.0 / (x[m] * (1 - x[m])))
    return out


def random_smooth_sections(
    grid: RadialGrid,
    spectrum: LinkSpectrum,
    count: int,
    seed: int,
    support: tuple[float, float] = (0.2, 0.8),
    degree: int = 2,
) -> list[ModeSection]:
    """Seeded smooth interior-supported probe sections.

    Coefficients are drawn per (section, mode, polynomial degree), so
    the same seed generates the same functions on any grid; probes are
    grid-transferable for refinement studies.  The defaults keep probes
    gentle (wide support, low degree) so identity residuals measure the
    scheme, not probe roughness.
    """
    rng = np.random.default_rng(seed)
    a = support[0] * grid.theta
    b = support[1] * grid.theta
    m = spectrum.total_multiplicity
    x = np.clip((grid.r - a) / (b - a) * 2 - 1, -1, 1)
    basis = np.stack([np.polynomial.chebyshev.Chebyshev.basis(d)(x) for d in range(degree + 1)])
    env = smooth_bump(grid.r, a, b)
    out = []
    for _ in range(count):
        c = rng.standard_normal((m, degree + 1)) / np.sqrt(m)
        coeffs = (c @ basis) * env
        out.append(ModeSection(grid=grid, spectrum=spectrum, coeffs=coeffs))
    return out
