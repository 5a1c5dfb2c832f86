import json

import pytest

from arraymem.cli import main


def run(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_efficiency_defaults(tmp_path, capsys):
    code, out, _ = run(
        ["efficiency", "--out", str(tmp_path), "--no-timestamp"], capsys
    )
    assert code == 0
    assert "eta=" in out
    doc = json.loads((tmp_path / "efficiency_10_0.6.json").read_text())
    assert doc["config"]["geometry"]["N"] == 10
    assert doc["config"]["geometry"]["d"] == 0.6
    assert doc["config"]["mode"]["w0"] == 1.5
    assert doc["config"]["mode"]["two_sided"] is True
    assert 0.0 <= doc["solution"]["eta_max"] <= 1.0


def test_rejects_nonpositive_size(tmp_path, capsys):
    code, _, err = run(["efficiency", "--N", "0", "--out", str(tmp_path)], capsys)
    assert code == 2
    assert "geometry.N" in err


def test_rejects_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"geometry": {"N": 4, "shape": "hex"}}))
    code, _, err = run(["efficiency", "--config", str(cfg)], capsys)
    assert code == 2
    assert "geometry.shape" in err


def test_rejects_type_mismatch(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"mode": {"w0": "wide"}}))
    code, _, err = run(["efficiency", "--config", str(cfg)], capsys)
    assert code == 2
    assert "mode.w0" in err


def test_flag_overrides_config(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"mode": {"w0": 1.5}, "geometry": {"N": 3}}))
    code, out, _ = run(
        [
            "efficiency",
            "--config",
            str(cfg),
            "--w0",
            "2.5",
            "--out",
            str(tmp_path),
            "--no-timestamp",
        ],
        capsys,
    )
    assert code == 0
    assert "w0=2.5" in out
    doc = json.loads((tmp_path / "efficiency_3_0.6.json").read_text())
    assert doc["config"]["mode"]["w0"] == 2.5


def test_optimize_waist_four_by_four(tmp_path, capsys):
    code, out, _ = run(
        [
            "efficiency",
            "--N",
            "4",
            "--d",
            "0.6",
            "--optimize-waist",
            "--out",
            str(tmp_path),
            "--no-timestamp",
        ],
        capsys,
    )
    assert code == 0
    doc = json.loads((tmp_path / "efficiency_4_0.6.json").read_text())
    assert doc["solution"]["epsilon"] < 0.01


def test_scan_waist_writes_csv_and_fit(tmp_path, capsys):
    code, out, _ = run(
        [
            "scan-waist",
            "--N",
            "4",
            "--w0-min",
            "0.7",
            "--w0-max",
            "1.6",
            "--w0-points",
            "5",
            "--out",
            str(tmp_path),
            "--no-timestamp",
        ],
        capsys,
    )
    assert code == 0
    csv_text = (tmp_path / "scan-waist_4_0.6.csv").read_text()
    assert csv_text.startswith("w0,eta,epsilon")
    assert len(csv_text.strip().splitlines()) == 6


def test_holes_command(tmp_path, capsys):
    code, out, _ = run(
        [
            "holes",
            "--N",
            "5",
            "--w0",
            "1.0",
            "--hole-counts",
            "1,2",
            "--samples",
            "3",
            "--workers",
            "1",
            "--out",
            str(tmp_path),
            "--no-timestamp",
        ],
        capsys,
    )
    assert code == 0
    assert "alpha=" in out
    doc = json.loads((tmp_path / "holes_5_0.6.json").read_text())
    assert "alpha" in doc


def test_disorder_command_reproducible(tmp_path, capsys):
    argv = [
        "disorder",
        "--N",
        "4",
        "--w0",
        "1.2",
        "--sigma-list",
        "0.01,0.03",
        "--samples",
        "3",
        "--seed",
        "77",
        "--workers",
        "1",
        "--no-timestamp",
    ]
    code1, _, _ = run(argv + ["--out", str(tmp_path / "a")], capsys)
    code2, _, _ = run(argv + ["--out", str(tmp_path / "b")], capsys)
    assert code1 == code2 == 0
    a = (tmp_path / "a" / "disorder_4_0.6.csv").read_bytes()
    b = (tmp_path / "b" / "disorder_4_0.6.csv").read_bytes()
    assert a == b


def test_disorder_honors_config_file_waist(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"mode": {"w0": 1.3}}))
    code, _, _ = run(
        [
            "disorder",
            "--config",
            str(cfg),
            "--N",
            "4",
            "--sigma-list",
            "0.02",
            "--samples",
            "2",
            "--workers",
            "1",
            "--out",
            str(tmp_path),
            "--no-timestamp",
        ],
        capsys,
    )
    assert code == 0
    doc = json.loads((tmp_path / "disorder_4_0.6.json").read_text())
    assert doc["provenance"]["w0"] == 1.3


def test_finite_time_command(tmp_path, capsys):
    code, out, _ = run(
        [
            "finite-time",
            "--N",
            "4",
            "--Td",
            "10",
            "--out",
            str(tmp_path),
            "--no-timestamp",
        ],
        capsys,
    )
    assert code == 0
    assert "1 - eta_Td/eta" in out
    doc = json.loads((tmp_path / "finite-time_4_0.6.json").read_text())
    assert doc["final"]["relative_error"] < 0.05


def test_isotropic_command(tmp_path, capsys):
    code, out, _ = run(
        [
            "isotropic",
            "--N-list",
            "3",
            "--out",
            str(tmp_path),
            "--no-timestamp",
        ],
        capsys,
    )
    assert code == 0
    assert "isotropic error increase" in out


def test_validate_command(capsys):
    code, out, _ = run(["validate"], capsys)
    assert code == 0
    assert "checks passed" in out
    assert "FAIL" not in out


def test_hole_range_flag_parsing(tmp_path, capsys):
    from arraymem.cli import _int_list

    assert _int_list("1-4") == [1, 2, 3, 4]
    assert _int_list("2,5,9") == [2, 5, 9]
    assert _int_list("1-3,7") == [1, 2, 3, 7]
