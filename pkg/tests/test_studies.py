import numpy as np
import pytest

from arraymem import (
    DetectionMode,
    apply_position_disorder,
    build_square_array,
    eigendecompose,
    interaction_matrix,
    k_matrix,
    max_efficiency,
    remove_holes,
    sample_mode,
)
from arraymem.errors import FitWindowError, InvalidArgumentError
from arraymem.retrieval import efficiency_of_spin_wave
from arraymem import studies


def eta_at(geometry, w0):
    dec = eigendecompose(interaction_matrix(geometry))
    samples = sample_mode(DetectionMode(w0=w0), geometry)
    return max_efficiency(k_matrix(dec, samples))


def test_single_atom_error_grows_with_waist():
    scan = studies.scan_waist(1, 0.6, [1.0, 1.5, 2.0, 3.0, 4.0])
    assert all(np.diff(scan.epsilon) > 0)


def test_scan_waist_rejects_bad_axis():
    with pytest.raises(InvalidArgumentError):
        studies.scan_waist(3, 0.6, [2.0, 1.0])
    with pytest.raises(InvalidArgumentError):
        studies.scan_waist(3, 0.6, [-1.0, 1.0])


def test_desk_scale_caps():
    with pytest.raises(InvalidArgumentError):
        studies.scan_waist(31, 0.6, [1.5])
    with pytest.raises(InvalidArgumentError):
        studies.optimal_waist(15, 0.6, model="isotropic")


def test_synthetic_fit_recovers_constant():
    w0s = list(np.geomspace(1.2, 4.0, 12))
    true_c = 1.9e-3
    eps = studies.model_error(20, 0.6, np.array(w0s), c=true_c)
    scan = studies.ScanResult(
        study="scan-waist",
        axis_name="w0",
        axis=w0s,
        eta=[1 - e for e in eps],
        epsilon=list(eps),
        rows=[],
        provenance={"N": 20, "d": 0.6},
    )
    fit = studies.fit_error_model(scan, 0.6)
    assert fit.parameters["C"] == pytest.approx(true_c, abs=1e-6 * true_c)


def test_fit_window_excluding_crossover_fits_better():
    # inject a mismatch bump at the crossover: the windowed fit must beat
    # an all-points fit on the clipping-free points
    w0s = np.geomspace(1.0, 3.5, 14)
    n, d, true_c = 12, 0.6, 2.0e-3
    clip = studies.clipping_error(n, d, w0s)
    eps = true_c / w0s**4 + clip + 0.3 * np.sqrt((true_c / w0s**4) * clip)
    scan = studies.ScanResult(
        study="scan-waist",
        axis_name="w0",
        axis=list(w0s),
        eta=[1 - e for e in eps],
        epsilon=list(eps),
        rows=[],
        provenance={"N": n, "d": d},
    )
    fit = studies.fit_error_model(scan, d)
    mask = clip < 0.1 * eps
    x_all = 1.0 / w0s**4
    y_all = eps - clip
    c_all = float(np.sum(x_all * y_all) / np.sum(x_all * x_all))
    resid_windowed = np.linalg.norm(y_all[mask] - fit.parameters["C"] * x_all[mask])
    resid_allfit = np.linalg.norm(y_all[mask] - c_all * x_all[mask])
    assert resid_windowed < resid_allfit


def test_fit_requires_clipping_free_points():
    w0s = [5.0, 6.0, 8.0]
    eps = studies.clipping_error(4, 0.6, np.array(w0s)) * 1.05
    scan = studies.ScanResult(
        study="scan-waist",
        axis_name="w0",
        axis=w0s,
        eta=[1 - e for e in eps],
        epsilon=list(eps),
        rows=[],
        provenance={"N": 4, "d": 0.6},
    )
    with pytest.raises(FitWindowError):
        studies.fit_error_model(scan, 0.6)


def test_optimal_waist_four_by_four():
    opt = studies.optimal_waist(4, 0.6)
    assert opt.epsilon < 0.01
    assert 0.5 < opt.w0 < 1.2
    assert not opt.bracket_fallback
    with pytest.raises(InvalidArgumentError):
        studies.optimal_waist(1, 0.6)


def test_scan_is_unimodal_around_optimum():
    scan = studies.scan_waist(4, 0.6, list(np.geomspace(0.5, 2.0, 9)))
    assert scan.provenance["unimodal"]


def test_zero_holes_loss_is_exactly_zero():
    g = build_square_array(6, 0.6)
    eta0 = eta_at(g, 1.2).eta_max
    eta_same = eta_at(remove_holes(g, []), 1.2).eta_max
    assert eta_same == eta0


def test_center_hole_hurts_more_than_corner():
    g = build_square_array(10, 0.6)
    eta0 = eta_at(g, 1.5).eta_max
    eta_corner = eta_at(remove_holes(g, [0]), 1.5).eta_max
    eta_center = eta_at(remove_holes(g, [44]), 1.5).eta_max
    assert eta_center < eta_corner < eta0


def test_hole_study_regression_behaviour():
    hs = studies.hole_study(6, 0.6, 1.0, [1, 3, 5], 6, seed=3)
    assert len(hs.rows) == 18
    for row in hs.rows:
        assert row["eta_def"] <= hs.eta_perfect + 1e-10
        assert row["rel_loss"] >= -1e-10
    assert 0.5 < hs.alpha.parameters["alpha"] < 2.0


def test_hole_study_rejects_too_many_holes():
    with pytest.raises(InvalidArgumentError):
        studies.hole_study(4, 0.6, 1.0, [4], 2)  # > 20% of 16 sites


def test_sigma_zero_disorder_loss_is_exactly_zero():
    g = build_square_array(5, 0.6)
    sol = eta_at(g, 1.2)

    def fixed_wave_eta(geometry):
        dec = eigendecompose(interaction_matrix(geometry))
        samples = sample_mode(DetectionMode(w0=1.2), geometry)
        return efficiency_of_spin_wave(k_matrix(dec, samples), sol.spin_wave)

    g_dis = apply_position_disorder(g, 0.0, 12345)
    assert fixed_wave_eta(g_dis) == fixed_wave_eta(g)


def test_disorder_study_reproducible_and_sigma_scaled():
    kwargs = dict(n_samples=4, seed=21, w0=1.2)
    a = studies.position_disorder_study(4, 0.6, [0.01, 0.04], **kwargs)
    b = studies.position_disorder_study(4, 0.6, [0.01, 0.04], **kwargs)
    assert a.rows == b.rows
    assert a.summary[0]["loss_mean"] < a.summary[1]["loss_mean"]


def test_disorder_stderr_shrinks_with_samples():
    small = studies.position_disorder_study(4, 0.6, [0.03], n_samples=25, seed=5, w0=1.2)
    large = studies.position_disorder_study(4, 0.6, [0.03], n_samples=100, seed=5, w0=1.2)
    assert large.summary[0]["eta_stderr"] < small.summary[0]["eta_stderr"]


def test_parallel_matches_serial():
    serial = studies.hole_study(5, 0.6, 1.0, [2], 4, seed=9, workers=1)
    parallel = studies.hole_study(5, 0.6, 1.0, [2], 4, seed=9, workers=2)
    assert serial.rows == parallel.rows


def test_isotropic_comparison_rows():
    rows = studies.isotropic_comparison([4], 0.6)
    row = rows[0]
    assert row["eps_isotropic"] > row["eps_two_level"]
    assert abs(row["w0_isotropic"] / row["w0_two_level"] - 1.0) < 0.2


def test_csv_bytes_are_deterministic(tmp_path):
    ds = studies.position_disorder_study(4, 0.6, [0.02], n_samples=3, seed=2, w0=1.2)
    p1 = tmp_path / "a.csv"
    p2 = tmp_path / "b.csv"
    fields = ["sigma", "sample", "seed", "eta_dis"]
    studies.write_csv(p1, fields, ds.rows)
    studies.write_csv(p2, fields, ds.rows)
    assert p1.read_bytes() == p2.read_bytes()
    # full double precision round-trips
    import csv

    with open(p1) as fh:
        rows = list(csv.DictReader(fh))
    assert float(rows[0]["eta_dis"]) == ds.rows[0]["eta_dis"]


def test_summary_json_is_readable(tmp_path):
    import json

    path = tmp_path / "s.json"
    studies.write_summary(path, {"value": np.float64(1.5), "arr": np.arange(3)})
    with open(path) as fh:
        doc = json.load(fh)
    assert doc["value"] == 1.5 and doc["arr"] == [0, 1, 2]


def test_artifact_stem_format():
    stem = studies.artifact_stem("holes", 10, 0.6, timestamp=False)
    assert stem == "holes_10_0.6"
    assert studies.artifact_stem("holes", 10, 0.6, timestamp=True).startswith(
        "holes_10_0.6_"
    )
