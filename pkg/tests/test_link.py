"""Link spectra: construction, gap checks, and perturbation caps."""

import json
import math

import numpy as np
import pytest

from conelab.link import (
    LinkSpectrum,
    check_spectral_gap,
    perturbation_caps,
    sphere_dirac_spectrum,
)


def test_entries_merge_and_sort():
    spec = LinkSpectrum(entries=((2.0, 1), (-1.0, 2), (2.0, 3)))
    assert spec.entries == ((-1.0, 2), (2.0, 4))
    assert spec.total_multiplicity == 6
    assert list(spec.eigenvalues) == [-1.0, 2.0]
    assert list(spec.multiplicities) == [2, 4]


def test_entry_guards():
    with pytest.raises(ValueError, match="empty link spectrum"):
        LinkSpectrum(entries=())
    with pytest.raises(ValueError, match="must be finite"):
        LinkSpectrum(entries=((float("nan"), 1),))
    with pytest.raises(ValueError, match="positive integer"):
        LinkSpectrum(entries=((1.0, 0),))


def test_sphere_small_cases():
    # n = 2: eigenvalues +-(1 + k) with multiplicity 2*(k + 1)
    s2 = sphere_dirac_spectrum(2, 3)
    assert dict(s2.entries) == {
        -4.0: 8, -3.0: 6, -2.0: 4, -1.0: 2, 1.0: 2, 2.0: 4, 3.0: 6, 4.0: 8,
    }
    # n = 3: +-(3/2 + k) with multiplicity 2 * C(k + 2, k)
    s3 = sphere_dirac_spectrum(3, 2)
    assert dict(s3.entries) == {
        -3.5: 12, -2.5: 6, -1.5: 2, 1.5: 2, 2.5: 6, 3.5: 12,
    }
    assert s3.label == "sphere-S3-kmax2"


def test_sphere_guards():
    with pytest.raises(ValueError, match="at least 2"):
        sphere_dirac_spectrum(1, 4)
    with pytest.raises(ValueError, match="nonnegative"):
        sphere_dirac_spectrum(3, -1)


def test_gap_report():
    ok = check_spectral_gap(LinkSpectrum(entries=((0.75, 1), (-0.75, 1))))
    assert ok.has_gap and ok.min_abs_eigenvalue == pytest.approx(0.75)
    bad = check_spectral_gap(LinkSpectrum(entries=((0.4, 1), (2.0, 1))))
    assert not bad.has_gap
    assert list(bad.violations) == [0.4]


def test_caps_formula():
    # min over the spectrum of |(2s +- 1) / (4s)|
    spec = sphere_dirac_spectrum(3, 4)
    caps = perturbation_caps(spec)
    s = np.array(spec.eigenvalues)
    assert caps.cap_right == pytest.approx(np.min(np.abs((2 * s + 1) / (4 * s))))
    assert caps.cap_left == pytest.approx(np.min(np.abs((2 * s - 1) / (4 * s))))
    # for the 3-sphere the minimum sits at s = +-3/2
    assert caps.cap_right == pytest.approx(2 / 6)
    assert caps.cap_left == pytest.approx(2 / 6)


def test_caps_requires_gap():
    with pytest.raises(ValueError, match="spectral gap violated"):
        perturbation_caps(LinkSpectrum(entries=((0.25, 1),)))


def test_json_roundtrip():
    spec = sphere_dirac_spectrum(4, 3)
    blob = spec.to_json()
    back = LinkSpectrum.from_json(blob)
    assert back == spec
    payload = json.loads(blob)
    assert payload["label"] == "sphere-S4-kmax3"


def test_mode_values_expand_multiplicity():
    spec = LinkSpectrum(entries=((-1.0, 2), (2.0, 1)))
    assert list(spec.mode_values()) == [-1.0, -1.0, 2.0]


def test_sphere_multiplicity_growth():
    n = 5
    spec = sphere_dirac_spectrum(n, 6)
    for k in range(7):
        lam = n / 2 + k
        mult = dict(spec.entries)[lam]
        assert mult == 2 ** (n // 2) * math.comb(k + n - 1, k)
