from __future__ import annotations

import subprocess
import sys

import numpy as np
import pytest

from fresnel_locality.cli import EX_USAGE, main, parse_length


def run(*args: str) -> subprocess.CompletedProcess:
    return subprocess.run([sys.executable, "-m", "fresnel_locality", *args],
                          capture_output=True, text=True)


def value(text: str, key: str) -> float:
    for line in text.splitlines():
        k, sep, v = line.partition("=")
        if sep and k.strip() == key:
            return float(v)
    raise KeyError(key)


def test_parse_length():
    assert parse_length("500inv") == pytest.approx(0.002)
    assert parse_length("0.002") == 0.002
    import argparse

    for bad in ("0inv", "-1", "abc"):
        with pytest.raises(argparse.ArgumentTypeError):
            parse_length(bad)


def test_missing_required_flag_exits_64(tmp_path):
    res = run("constants", "--nu", "1.2", "--out", str(tmp_path))
    assert res.returncode == EX_USAGE
    with pytest.raises(SystemExit) as err:
        main(["map", "--f", "1e4"])
    assert err.value.code == EX_USAGE


def test_semantic_errors_exit_64(tmp_path):
    assert main(["constants", "--k", "7", "--nu", "0.5", "--out", str(tmp_path)]) == EX_USAGE
    assert main(["constants", "--k", "7", "--nu", "1.2", "--variant", "real_m", "--out", str(tmp_path)]) == EX_USAGE
    assert main(["verify", "--out", str(tmp_path)]) == EX_USAGE


def test_constants_example_1(tmp_path, capsys):
    code = main(["constants", "--k", "7", "--nu", "1.2", "--f", "2e3", "--omega-box", "0.05",
                 "--r", "190inv", "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert code == 0
    assert value(out, "c_stab") >= 0.988
    assert value(out, "guarantee") == pytest.approx(0.988, abs=1e-3)
    saved = (tmp_path / "constants.txt").read_text()
    assert saved == out
    cfg = (tmp_path / "config.txt").read_text()
    assert cfg.startswith("# config_hash=") and "k = 7" in cfg


def test_constants_k0_at_one(tmp_path, capsys):
    assert main(["constants", "--k", "0", "--nu", "1", "--out", str(tmp_path)]) == 0
    assert value(capsys.readouterr().out, "C_band") == pytest.approx(0.84356, abs=1e-5)


def test_constants_sweep_and_real(tmp_path, capsys):
    assert main(["constants", "--k", "7", "--f", "2e3", "--f-delta", "405", "--f-r", "0.0554",
                 "--sweep-nu", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "best_nu" in out and "c_sym_delta" in out
    assert main(["constants", "--k", "7", "--nu", "1.2", "--f", "1e4", "--r", "1000inv",
                 "--variant", "real_1d", "--m", "1", "--out", str(tmp_path)]) == 0
    assert value(capsys.readouterr().out, "c_stab") > 0


def test_outputs_are_byte_identical(tmp_path):
    args = ["map", "--f", "1e4", "--r", "500inv", "--pixels", "21"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("stability_complex.csv", "stability_complex.pgm", "stability_complex.meta.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    cfg_a = (tmp_path / "a" / "config.txt").read_text().splitlines()
    cfg_b = (tmp_path / "b" / "config.txt").read_text().splitlines()
    assert cfg_a[0] == cfg_b[0]
    assert [ln for ln in cfg_a if not ln.startswith("out")] == [ln for ln in cfg_b if not ln.startswith("out")]


def test_config_file_supplies_flags(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# example 1\nk = 7\nnu = 1.2\nf = 2e3\nomega-box = 0.05\nr = 190inv\n")
    assert main(["--config", str(cfg), "constants", "--out", str(tmp_path / "o")]) == 0
    assert value(capsys.readouterr().out, "c_stab") >= 0.988
    cfg.write_text("bogus = 1\n")
    assert main(["--config", str(cfg), "constants", "--k", "7", "--out", str(tmp_path)]) == EX_USAGE


def test_one_pixel_map_matches_constants(tmp_path, capsys):
    assert main(["map", "--f", "1e4", "--r", "500inv", "--pixels", "1", "--out", str(tmp_path)]) == 0
    pix = float((tmp_path / "stability_complex.csv").read_text().splitlines()[-1].split(",")[-1])
    capsys.readouterr()
    assert main(["constants", "--k", "7", "--nu", "1.2", "--f", "1e4", "--f-delta", "2500",
                 "--r", "500inv", "--m", "1", "--out", str(tmp_path / "c")]) == 0
    assert pix == pytest.approx(value(capsys.readouterr().out, "c_stab"), rel=1e-9)


def test_real_map_edges_and_corners(tmp_path):
    assert main(["map", "--f", "1e4", "--r", "0.002", "--variant", "real", "--pixels", "21",
                 "--out", str(tmp_path)]) == 0
    rows = [ln.split(",") for ln in (tmp_path / "stability_real.csv").read_text().splitlines()
            if ln and ln[0] not in "#x"]
    vals = {(float(x), float(y)): float(v) for x, y, v in rows}
    assert vals[(-0.5, 0.0)] > 0 and vals[(-0.5, -0.5)] == 0


def test_reproduce_fig4(tmp_path):
    assert main(["reproduce", "fig4", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "fig4_c_band.csv").read_text().splitlines()
    assert lines[2] == "nu,k0,k1,k3,k5,k7"
    assert len(lines) == 3 + 301
    assert "MISMATCH" not in (tmp_path / "manifest_fig4.txt").read_text()


def test_verify_command(tmp_path, capsys):
    assert main(["verify", "--scenario", "leakage_complex", "--seeds", "2", "--out", str(tmp_path)]) == 0
    assert "leakage_complex" in capsys.readouterr().out
    assert (tmp_path / "verify_records.txt").exists()


def test_sym_opnorm_command(tmp_path, capsys):
    assert main(["verify", "--scenario", "sym_opnorm", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    c = float(out.split("C_sym ~")[1].split()[0])
    assert abs(c - 0.721) <= 0.01


def test_propagate_gaussian(tmp_path, capsys):
    assert main(["propagate", "--gaussian", "0.08", "--f", "1e3", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    err = float(out.split("=")[1].split()[0])
    assert err < 1e-6
    from fresnel_locality.core import read_field

    field = read_field(tmp_path / "propagated.flf")
    assert field.grid.n == 4096 and np.isfinite(field.samples).all()
    assert main(["propagate", "--object", str(tmp_path / "propagated.flf"), "--f", "1e3",
                 "--out", str(tmp_path / "again")]) == 0
    assert main(["propagate", "--f", "1e3", "--out", str(tmp_path)]) == EX_USAGE
