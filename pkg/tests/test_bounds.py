from __future__ import annotations

import math

import numpy as np
import pytest

from fresnel_locality.bounds import (
    THETA_MAX,
    LeakageFilter,
    c_low_c_tot,
    c_stab_complex,
    c_stab_real,
    c_sym_bound,
    c_sym_delta,
    filter_eval,
    global_factor,
    resolution_map,
    stability_map,
    sweep_nu,
    sym_profile,
    wavepacket_resolution_bound,
    write_map_csv,
    write_pgm,
)
from fresnel_locality.geometry import DomainSpec
from fresnel_locality.specfun import theta_tilde

K = DomainSpec.cube(0.5, 2)


def test_simplified_filter_pass_band():
    for m in (1, 2):
        flt = LeakageFilter("simplified", 1e3, 100.0, m)
        val = filter_eval(flt, np.zeros(m))
        assert val == pytest.approx(math.sqrt(2 * m) * abs(theta_tilde(-10.0)), abs=1e-12)
        # the tails of theta_tilde decay like 1/|x|, so the pass band is small, not zero
        assert val < 0.06 * math.sqrt(m)


def test_box_filter_is_high_pass():
    f, fd = 1e3, 100.0
    flt = LeakageFilter("box", f, fd, 1)
    width = math.sqrt(f * fd)  # f Delta
    low = np.linspace(-width / 2, width / 2, 2001)
    high = np.concatenate([np.linspace(3 * width, 40 * width, 2001), -np.linspace(3 * width, 40 * width, 2001)])
    assert np.max(filter_eval(flt, low)) <= 0.11
    assert np.max(filter_eval(flt, low)) < 0.15 * np.min(filter_eval(flt, high))
    assert np.min(filter_eval(flt, high)) >= 0.9


def test_filters_agree_in_profile():
    f, fd = 1e3, 100.0
    u = np.linspace(0, math.sqrt(fd) / 2, 2001)
    a = filter_eval(LeakageFilter("simplified", f, fd, 1), math.sqrt(f) * u)
    b = filter_eval(LeakageFilter("box", f, fd, 1), math.sqrt(f) * u)
    assert np.max(np.abs(a - b)) <= 0.15


def test_filter_validation():
    with pytest.raises(ValueError):
        LeakageFilter("nope", 1.0)
    with pytest.raises(ValueError):
        LeakageFilter("halfspace", 1.0, 1.0, 2, normal=(1.0, 1.0))


def test_c_low_c_tot():
    for fd in (1.0, 25.0, 400.0, 1e4):
        for hw in (0.5, 3.0, 50.0):
            cl, ct = c_low_c_tot(fd, hw)
            assert cl <= ct <= math.sqrt(2) * THETA_MAX
    cl, _ = c_low_c_tot(1e4, 50.0)
    assert cl <= 0.05


def test_sym_profile():
    x = np.linspace(-5, 5, 1001)
    even = np.exp(-x**2)
    assert np.allclose(sym_profile(even, x), even)
    one_sided = np.where(x > 0, np.exp(-(x - 1) ** 2), 0.0)
    assert np.max(sym_profile(one_sided, x)) == pytest.approx(2**-0.5, abs=1e-6)
    with pytest.raises(ValueError):
        sym_profile(even, x + 0.1)
    x = np.linspace(-60, 60, 240001)
    assert np.max(sym_profile(theta_tilde(x), x)) <= 0.837 + 1e-3
    assert c_sym_bound() == pytest.approx(np.max(sym_profile(theta_tilde(x), x)), abs=1e-5)


def test_c_sym_delta():
    assert c_sym_delta(1e-10) < 1e-4
    # approaches the half-space value from above as f_delta grows
    tail = [c_sym_delta(fd) for fd in (1e4, 1e6, 1e8)]
    assert tail[0] > tail[1] > tail[2] > c_sym_bound()
    assert tail[2] - c_sym_bound() < 1e-4
    # rises monotonically for small f_delta, stays below 1 everywhere
    small = [c_sym_delta(fd) for fd in np.geomspace(1e-2, 5, 20)]
    assert all(b > a for a, b in zip(small, small[1:]))
    assert max(c_sym_delta(fd) for fd in np.geomspace(5, 1e4, 40)) < 0.96


def test_example_constants():
    # Example 1: f = 2e3, margin 0.45, 1/r = 190; Example 3: margin 1/4, 1/r = 2000
    ex1 = c_stab_complex(0.45**2 * 2e3, 2e3 / 190**2, 7, 1.2, 2)
    assert ex1.guarantee == pytest.approx(0.988, abs=1e-3)
    assert ex1.c_stab >= 0.988
    ex3 = c_stab_complex(0.25**2 * 4e4, 4e4 / 2000**2, 7, 1.25, 2)
    assert ex3.guarantee == pytest.approx(0.998, abs=1e-3)
    assert c_stab_complex(1e-8, 2e3 / 190**2, 7, 1.2).c_stab == 0.0


def test_constants_formulas():
    c = c_stab_complex(100.0, 0.5, 5, 1.3)
    assert c.c_stab**2 == pytest.approx(1 - c.c_low**2 - c.c_band**2 * (c.c_tot**2 - c.c_low**2))
    r = c_stab_real(1e4, 100.0, 0.5, 5, 1.3, 2, "real_m")
    inner = math.sqrt(r.c_low**2 + r.c_band**2 * (r.c_tot**2 - r.c_low**2))
    assert r.c_stab**2 == pytest.approx(1 - (r.c_sym + math.sqrt(2) * inner) ** 2)
    assert 0 <= r.c_stab <= 1
    one_d = c_stab_real(1e4, None, 1e4 / 1000**2, 7, 1.2, variant="real_1d")
    assert one_d.c_stab > 0 and one_d.f_delta == pytest.approx(2500)
    with pytest.raises(ValueError):
        c_stab_real(1e4, None, 1.0, 7, 1.2, variant="real_m")


def test_sweep_nu_picks_best():
    best, table = sweep_nu(405.0, 2e3 / 190**2, 7)
    assert best.c_stab == max(t.c_stab for t in table)


def test_stability_map_structure():
    f, r = 1e4, 1 / 500
    smap = stability_map(f, r, pixels=101)
    v = smap.values
    assert np.allclose(v, v.T) and np.allclose(v, v[::-1]) and np.allclose(v, v[:, ::-1])
    assert np.all((v >= 0) & (v <= 1))
    d0 = math.pi / (f * r)
    ax = smap.x
    dist = 0.5 - np.maximum.outer(np.abs(ax), np.abs(ax))
    assert np.all(v[dist < 0.5 * d0] == 0)
    assert np.all(v[dist >= 1.5 * d0] >= 0.9)
    coarse = stability_map(f, 1.0, pixels=11)
    assert coarse.values[5, 5] > 0.99


def test_resolution_map_vs_wave_packet_bound():
    f = 1e4
    rmap = resolution_map(f, 0.25, pixels=41)
    ax = rmap.x
    pts = np.stack(np.meshgrid(ax, ax, indexing="ij"), axis=-1)
    wp = wavepacket_resolution_bound(pts, K, f)
    inner = (np.abs(pts[..., 0]) < 0.5) & (np.abs(pts[..., 1]) < 0.5)
    g = global_factor(wp, rmap.values, inner)
    assert 1.0 <= g <= 1.4
    assert np.max(rmap.values) <= f / (2 * math.pi) * 1.25
    real = resolution_map(f, 0.25, variant="real", pixels=21)
    assert real.values[0, 0] == 0 and real.values[0, 10] > 0
    with pytest.raises(ValueError):
        resolution_map(f, 1.5)


def test_wavepacket_bound():
    f = 1e4
    assert wavepacket_resolution_bound((0, 0), K, f) == pytest.approx(f * 0.5 / math.pi)
    assert wavepacket_resolution_bound((0.5, 0), K, f) == 0
    assert wavepacket_resolution_bound((0.5, 0), K, f, "real") == pytest.approx(f * 0.5 / math.pi)
    pts = np.random.default_rng(3).uniform(-0.5, 0.5, (50, 2))
    assert np.all(wavepacket_resolution_bound(pts, K, f, "real") >= wavepacket_resolution_bound(pts, K, f) - 1e-9)


def test_map_export(tmp_path):
    smap = stability_map(1e4, 1 / 500, pixels=5)
    write_map_csv(tmp_path / "m.csv", smap, {"tag": "x"})
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert "# tag=x" in lines and lines.count("x,y,value") == 1 and len(lines) == 25 + 1 + len(smap.meta) + 1
    write_pgm(tmp_path / "m.pgm", smap, comment="hello")
    data = (tmp_path / "m.pgm").read_bytes()
    assert data.startswith(b"P5\n# hello\n5 5\n65535\n")
    assert len(data) == len(b"P5\n# hello\n5 5\n65535\n") + 2 * 25
