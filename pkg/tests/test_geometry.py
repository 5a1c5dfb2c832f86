import json

import numpy as np
import pytest

from arraymem import (
    Geometry,
    apply_position_disorder,
    build_square_array,
    remove_holes,
)
from arraymem.errors import InvalidArgumentError, SingularGeometryError


def test_single_site_lattice():
    g = build_square_array(1, 0.6)
    assert g.n_atoms == 1
    np.testing.assert_array_equal(g.positions, [[0.0, 0.0, 0.0]])
    np.testing.assert_array_equal(g.dipole_orientations, [[1.0, 0.0, 0.0]])


def test_two_by_two_symmetric_about_origin():
    g = build_square_array(2, 0.6)
    assert g.n_atoms == 4
    got = set(map(tuple, np.round(g.positions, 12)))
    want = {(x, y, 0.0) for x in (-0.3, 0.3) for y in (-0.3, 0.3)}
    assert got == want


def test_ten_by_ten_extent():
    g = build_square_array(10, 0.6)
    assert g.n_atoms == 100
    # (N-1) d / 2 by construction
    assert np.max(np.abs(g.positions)) == pytest.approx(2.7, abs=1e-14)


@pytest.mark.parametrize("n,d", [(0, 0.6), (-3, 0.6), (4, 0.0), (4, -1.0)])
def test_invalid_build_arguments(n, d):
    with pytest.raises(InvalidArgumentError):
        build_square_array(n, d)


def test_remove_no_holes_is_identity():
    g = build_square_array(10, 0.6)
    assert remove_holes(g, []) is g


def test_remove_twenty_holes_leaves_eighty():
    g = remove_holes(build_square_array(10, 0.6), list(range(20)))
    assert g.n_atoms == 80
    assert g.hole_indices == frozenset(range(20))


def test_double_removal_rejected():
    g = remove_holes(build_square_array(10, 0.6), [7])
    with pytest.raises(InvalidArgumentError):
        remove_holes(g, [7])
    with pytest.raises(InvalidArgumentError):
        remove_holes(build_square_array(10, 0.6), [3, 3])


def test_out_of_range_hole_rejected():
    with pytest.raises(InvalidArgumentError):
        remove_holes(build_square_array(10, 0.6), [100])


def test_index_map_tracks_original_sites():
    g = remove_holes(build_square_array(3, 0.5), [0, 4])
    m = g.index_map()
    assert 0 not in m and 4 not in m
    assert m[1] == 0 and m[8] == 6


def test_zero_sigma_keeps_geometry():
    g = build_square_array(5, 0.6)
    for seed in (0, 1, 123456789):
        assert apply_position_disorder(g, 0.0, seed) is g


def test_disorder_is_deterministic():
    g = build_square_array(6, 0.7)
    a = apply_position_disorder(g, 0.02, 42)
    b = apply_position_disorder(g, 0.02, 42)
    np.testing.assert_array_equal(a.positions, b.positions)
    c = apply_position_disorder(g, 0.02, 43)
    assert not np.array_equal(a.positions, c.positions)


def test_disorder_stays_in_plane():
    g = apply_position_disorder(build_square_array(8, 0.6), 0.05, 7)
    assert np.all(g.positions[:, 2] == 0.0)


def test_disorder_sample_std_matches_sigma():
    # law-of-large-numbers check on the RNG: 1e4 draws per axis
    d = 0.6
    sigma = 0.05 * d
    g = apply_position_disorder(build_square_array(100, d), sigma, 2024)
    delta = g.positions - build_square_array(100, d).positions
    for axis in (0, 1):
        assert abs(np.std(delta[:, axis]) - sigma) < 0.02 * sigma


def test_negative_sigma_rejected():
    with pytest.raises(InvalidArgumentError):
        apply_position_disorder(build_square_array(3, 0.6), -0.1, 1)


def test_double_disorder_rejected():
    g = apply_position_disorder(build_square_array(3, 0.6), 0.01, 1)
    with pytest.raises(InvalidArgumentError):
        apply_position_disorder(g, 0.01, 2)


def test_holes_and_disorder_commute():
    base = build_square_array(7, 0.55)
    holes = [3, 11, 40]
    a = apply_position_disorder(remove_holes(base, holes), 0.03, 5)
    b = remove_holes(apply_position_disorder(base, 0.03, 5), holes)
    np.testing.assert_array_equal(a.positions, b.positions)


def test_json_round_trip_regenerates_positions():
    g = apply_position_disorder(
        remove_holes(build_square_array(6, 0.65), [1, 17]), 0.02, 99
    )
    doc = g.to_json()
    g2 = Geometry.from_json(doc)
    np.testing.assert_array_equal(g.positions, g2.positions)
    assert g2.hole_indices == g.hole_indices
    assert g2.disorder_seed == 99

    # positions are optional on input
    slim = json.loads(doc)
    del slim["positions"]
    g3 = Geometry.from_json(json.dumps(slim))
    np.testing.assert_array_equal(g.positions, g3.positions)


def test_json_rejects_inconsistent_positions():
    g = build_square_array(3, 0.6)
    doc = json.loads(g.to_json())
    doc["positions"][0][0] += 0.1
    with pytest.raises(InvalidArgumentError):
        Geometry.from_json(json.dumps(doc))


def test_coincident_atoms_rejected():
    with pytest.raises(SingularGeometryError):
        Geometry(
            positions=np.zeros((2, 3)),
            dipole_orientations=np.tile([1.0, 0, 0], (2, 1)),
            lattice_constant=0.6,
            linear_size=2,
        )


def test_non_unit_dipole_rejected():
    with pytest.raises(InvalidArgumentError):
        Geometry(
            positions=np.array([[0.0, 0, 0]]),
            dipole_orientations=np.array([[1.0, 1.0, 0]]),
            lattice_constant=0.6,
            linear_size=1,
        )
