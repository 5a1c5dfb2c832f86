import numpy as np
import pytest

from arraymem import (
    ISOTROPIC,
    TWO_LEVEL,
    DetectionMode,
    build_square_array,
    detection_field,
    mode_flux_norm,
    mode_norm,
    sample_mode,
    validate_projection,
)
from arraymem.errors import InvalidArgumentError
from arraymem.greens import K0
from arraymem.modes import mode_norm_realspace


def focus_amplitude(w0, e0=1.0):
    """Closed form of E^x at the focus from the radial antiderivative:
    E0 * 2/(k0 w0)^2 * (1 - exp(-(k0 w0)^2/4))."""
    a = (K0 * w0) ** 2 / 4.0
    return e0 * (1.0 - np.exp(-a)) / (2.0 * a)


def test_waist_and_tolerance_validation():
    with pytest.raises(InvalidArgumentError):
        DetectionMode(w0=0.0)
    with pytest.raises(InvalidArgumentError):
        DetectionMode(w0=1.0, quadrature_tolerance=0.0)
    with pytest.raises(InvalidArgumentError):
        DetectionMode(w0=1.0, quadrature_tolerance=1e-5)


def test_z_component_vanishes_on_axis():
    m = DetectionMode(w0=1.5)
    for z in (-2.0, 0.0, 3.7):
        f = detection_field(m, [0.0, 0.0, z])
        assert f[2] == 0.0


def test_focus_closed_form():
    for w0 in (0.8, 2.0, 5.0):
        m = DetectionMode(w0=w0)
        f = detection_field(m, [0.0, 0.0, 0.0])
        assert f[0] == pytest.approx(focus_amplitude(w0), rel=1e-10)


def test_y_component_identically_zero():
    m = DetectionMode(w0=2.0)
    f = detection_field(m, [0.7, -0.3, 1.2])
    assert f[1] == 0.0


def test_large_waist_paraxial_limit():
    w0 = 20.0
    m = DetectionMode(w0=w0)
    e00 = detection_field(m, [0.0, 0.0, 0.0])[0]
    for rho in np.linspace(0.0, w0, 9):
        val = detection_field(m, [rho, 0.0, 0.0])[0]
        want = e00 * np.exp(-(rho**2) / w0**2)
        assert abs(val - want) <= 1e-4 * abs(want)


def test_field_is_deterministic():
    m = DetectionMode(w0=1.3)
    a = detection_field(m, [0.4, 0.2, 1.1])
    b = detection_field(m, [0.4, 0.2, 1.1])
    assert np.array_equal(a, b)


def test_conjugate_mirror_symmetry():
    m = DetectionMode(w0=1.4)
    for rho, z in ((0.5, 0.8), (1.2, 2.5)):
        up = detection_field(m, [rho, 0.0, z])
        down = detection_field(m, [rho, 0.0, -z])
        assert down[0] == pytest.approx(np.conj(up[0]), rel=1e-12)
        assert down[2] == pytest.approx(-np.conj(up[2]), rel=1e-12)


def test_norm_scales_with_amplitude_squared():
    base = mode_norm(DetectionMode(w0=2.0, e0=1.0))
    assert mode_norm(DetectionMode(w0=2.0, e0=2.0)) == pytest.approx(
        4.0 * base, rel=1e-12
    )
    fbase = mode_flux_norm(DetectionMode(w0=2.0, e0=1.0))
    assert mode_flux_norm(DetectionMode(w0=2.0, e0=2.0)) == pytest.approx(
        4.0 * fbase, rel=1e-12
    )


def test_surface_norm_plane_independent():
    m = DetectionMode(w0=2.0)
    fk = mode_norm(m)
    assert mode_norm_realspace(m, 0.0) == pytest.approx(fk, rel=1e-8)
    assert mode_norm_realspace(m, 5.0) == pytest.approx(fk, rel=1e-8)


def test_two_quadratures_agree_at_w0_3():
    m = DetectionMode(w0=3.0)
    assert mode_norm_realspace(m, 0.0) == pytest.approx(mode_norm(m), rel=1e-8)


def test_flux_norm_below_surface_norm():
    # the obliquity factor strictly reduces every spectral weight
    for w0 in (1.0, 2.0, 4.0):
        m = DetectionMode(w0=w0)
        assert 0.0 < mode_flux_norm(m) < mode_norm(m)


def test_single_atom_sample_is_focus_value():
    g = build_square_array(1, 0.6)
    s = sample_mode(DetectionMode(w0=2.0), g)
    assert s.values[0] == pytest.approx(focus_amplitude(2.0), rel=1e-10)


def test_fourfold_symmetry_on_2x2():
    g = build_square_array(2, 0.6)
    s = sample_mode(DetectionMode(w0=1.5), g)
    mags = np.abs(s.values)
    np.testing.assert_allclose(mags, mags[0], rtol=1e-12)


def test_focal_plane_samples_are_real():
    g = build_square_array(5, 0.7)
    s = sample_mode(DetectionMode(w0=1.5), g)
    assert np.max(np.abs(s.values.imag)) <= 1e-10 * np.max(np.abs(s.values))


def test_isotropic_samples_shape_and_y_zero():
    g = build_square_array(3, 0.6)
    s = sample_mode(DetectionMode(w0=1.5), g, ISOTROPIC)
    assert s.values.shape == (9, 3)
    assert np.all(s.values[:, 1] == 0.0)
    # z-component is purely imaginary in the focal plane
    assert np.max(np.abs(s.values[:, 2].real)) <= 1e-12


def test_radial_monotonicity_on_lattice():
    g = build_square_array(10, 0.6)
    s = sample_mode(DetectionMode(w0=1.5), g)
    rho = np.hypot(g.positions[:, 0], g.positions[:, 1])
    order = np.argsort(rho)
    mags = np.abs(s.values)[order]
    rho_sorted = rho[order]
    for i in range(len(mags) - 1):
        if rho_sorted[i + 1] - rho_sorted[i] > 1e-9:
            assert mags[i + 1] <= mags[i] * (1 + 1e-12)


def test_projection_identity_x_dipole():
    chk = validate_projection(DetectionMode(w0=2.0), [0, 0, 0], [1, 0, 0], 5.0)
    assert chk.discrepancy < 1e-4


def test_projection_orthogonal_dipole_is_null():
    m = DetectionMode(w0=2.0)
    ref = validate_projection(m, [0, 0, 0], [1, 0, 0], 5.0)
    chk = validate_projection(m, [0, 0, 0], [0, 1, 0], 5.0)
    assert abs(chk.closed_form) == 0.0
    assert abs(chk.numeric) < 1e-6 * abs(ref.closed_form)


def test_projection_displaced_dipole_overlap_small():
    m = DetectionMode(w0=2.0)
    ref = validate_projection(m, [0, 0, 0], [1, 0, 0], 5.0)
    chk = validate_projection(m, [5 * m.w0, 0, 0], [1, 0, 0], 5.0)
    assert abs(chk.numeric) < 1e-3 * abs(ref.numeric)


def test_projection_requires_propagating_side():
    with pytest.raises(InvalidArgumentError):
        validate_projection(DetectionMode(w0=2.0), [0, 0, 1.0], [1, 0, 0], 0.5)


def test_sample_csv_rows():
    from arraymem.modes import samples_to_rows

    g = build_square_array(2, 0.6)
    s = sample_mode(DetectionMode(w0=1.5), g)
    rows = samples_to_rows(g, s)
    assert [r["site"] for r in rows] == [0, 1, 2, 3]
    assert rows[0]["x"] == pytest.approx(-0.3)
    assert rows[0]["re_e"] == pytest.approx(float(s.values[0].real))
