"""Link operator spectra: gap checks and admissible perturbation caps.

The radial model treats the link only through the spectrum of its
self-adjoint operator: a finite list of (eigenvalue, multiplicity)
pairs.  Everything downstream (kernel exponents, composite norm caps,
mode indices) is a function of this list.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

GAP_HALF_WIDTH = 0.5


@dataclass(frozen=True)
class LinkSpectrum:
    """Finite spectrum of a self-adjoint link operator.

    entries: tuple of (eigenvalue, multiplicity), eigenvalues strictly
    increasing after normalization.  Multiplicities are positive ints.
    """

    entries: tuple[tuple[float, int], ...]
    label: str = ""

    def __post_init__(self):
        if len(self.entries) == 0:
            raise ValueError("empty link spectrum")
        merged: dict[float, int] = {}
        for s, m in self.entries:
            s = float(s)
            m = int(m)
            if not math.isfinite(s):
                raise ValueError("link eigenvalue must be finite")
            if m < 1:
                raise ValueError("multiplicity must be a positive integer")
            merged[s] = merged.get(s, 0) + m
        norm = tuple(sorted(merged.items()))
        object.__setattr__(self, "entries", norm)

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([s for s, _ in self.entries])

    @property
    def multiplicities(self) -> np.ndarray:
        return np.array([m for _, m in self.entries], dtype=int)

    @property
    def total_multiplicity(self) -> int:
        return int(self.multiplicities.sum())

    def mode_values(self) -> np.ndarray:
        """Eigenvalues repeated by multiplicity, one per mode row."""
        return np.repeat(self.eigenvalues, self.multiplicities)

    def to_json(self) -> str:
        return json.dumps(
            {"entries": [[s, m] for s, m in self.entries], "label": self.label},
            sort_keys=True,
        )

    @staticmethod
    def from_json(text: str) -> "LinkSpectrum":
        data = json.loads(text)
        return LinkSpectrum(
            entries=tuple((float(s), int(m)) for s, m in data["entries"]),
            label=data.get("label", ""),
        )


@dataclass(frozen=True)
class GapReport:
    has_gap: bool
    min_abs_eigenvalue: float
    violations: tuple[float, ...] = field(default=())


def check_spectral_gap(spectrum: LinkSpectrum) -> GapReport:
    """Check that no eigenvalue lies in [-1/2, 1/2].

    The radial kernels are only defined for modes clear of the gap, so
    every construction that consumes a spectrum starts here.
    """
    ev = spectrum.eigenvalues
    bad = tuple(float(s) for s in ev if abs(s) <= GAP_HALF_WIDTH)
    return GapReport(
        has_gap=(len(bad) == 0),
        min_abs_eigenvalue=float(np.min(np.abs(ev))),
        violations=bad,
    )


def sphere_dirac_spectrum(n: int, kmax: int) -> LinkSpectrum:
    """Dirac spectrum of the round unit n-sphere, truncated at level kmax.

    Eigenvalues +-(n/2 + k) for k = 0..kmax with multiplicity
    2^{floor(n/2)} * C(k + n - 1, k).
    """
    if n < 2:
        raise ValueError("link dimension must be at least 2")
    if kmax < 0:
        raise ValueError("kmax must be nonnegative")
    entries = []
    for k in range(kmax + 1):
        mult = (2 ** (n // 2)) * math.comb(k + n - 1, k)
        lam = n / 2 + k
        entries.append((lam, mult))
        entries.append((-lam, mult))
    return LinkSpectrum(entries=tuple(entries), label=f"sphere-S{n}-kmax{kmax}")


@dataclass(frozen=True)
class PerturbationCaps:
    """Largest admissible relative perturbation norms.

    cap_right bounds the norm of (perturbation) o (link operator)^{-1},
    cap_left the norm of (link operator)^{-1} o (perturbation).  Both
    are chosen so that the truncated inverse series stays summable with
    ratio at most 1/2.
    """

    cap_right: float
    cap_left: float


def perturbation_caps(spectrum: LinkSpectrum) -> PerturbationCaps:
    """inf over eigenvalues of |(2s+1)/(4s)| and |(2s-1)/(4s)|."""
    gap = check_spectral_gap(spectrum)
    if not gap.has_gap:
        raise ValueError(
            "spectral gap violated: eigenvalues %r lie in [-1/2, 1/2]"
            % (gap.violations,)
        )
    s = spectrum.eigenvalues
    cap_right = float(np.min(np.abs((2 * s + 1) / (4 * s))))
    cap_left = float(np.min(np.abs((2 * s - 1) / (4 * s))))
    return PerturbationCaps(cap_right=cap_right, cap_left=cap_left)
