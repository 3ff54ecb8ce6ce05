import json

import numpy as np
import pytest

from parabnf.egorov_bnf import bnf_pipeline, resonant_project
from parabnf.harness import (CSV_HEADER, NumericalFailure, RunReport, ValidationError, amplitude_scan,
                             convergence_order, egorov_demo, energy_constant, export, identity_map,
                             load_config, pushforward_taylor, read_report, simulate)
from parabnf.models import linear_system, nls_system
from parabnf.torus import random_field


def probe(N, seed=0, support=3):
    p = random_field(N, np.random.default_rng(seed), decay=1.0, support=support).coeffs
    return p / np.linalg.norm(p)


def test_linear_norm_constant():
    sysm = linear_system(16)
    u0 = random_field(16, np.random.default_rng(0), decay=4.0, s=4, r=0.1).coeffs
    rep = simulate(sysm, u0, 100.0, 0.05)
    assert np.max(np.abs(rep.h_s_norm / rep.h_s_norm[0] - 1)) <= 1e-10
    assert rep.escape_time is None and not rep.blowup
    assert np.all(np.diff(rep.t) > 0)


@pytest.fixture(scope="module")
def nls16():
    return nls_system(N=16)


def test_nls_local_scale(nls16):
    r = 0.05
    u0 = random_field(16, np.random.default_rng(1), decay=6.0, s=4, r=r).coeffs
    rep = simulate(nls16, u0, 1 / r, 5e-3, record_every=20)
    assert np.max(rep.h_s_norm) <= 2 * r


def test_dt_halving(nls16):
    u0 = random_field(16, np.random.default_rng(1), decay=6.0, s=4, r=0.05).coeffs
    a = simulate(nls16, u0, 2.0, 1e-2, record_every=10 ** 6)
    b = simulate(nls16, u0, 2.0, 5e-3, record_every=10 ** 6)
    assert abs(a.h_s_norm[-1] - b.h_s_norm[-1]) <= 1e-6 * b.h_s_norm[-1]


def test_convergence_order(nls16):
    u0 = random_field(16, np.random.default_rng(1), decay=6.0, s=4, r=0.3).coeffs
    assert convergence_order(nls16, u0, 0.5, 0.02) >= 3.8


def test_blowup_is_reported():
    sysm = linear_system(4)
    sysm.nonlinear = lambda u: 1e3 * np.abs(u) ** 2 * u
    rep = simulate(sysm, np.full(9, 1.0 + 0j), 10.0, 0.1)
    assert rep.blowup and rep.last_valid_time < 10.0


def test_pushforward_identity_recovers_raw(nls16):
    p = probe(16)
    tay = pushforward_taylor(identity_map, identity_map, nls16.field, nls16.linear, p, 1e-3, (3, 5))
    raw = nls16.nonlinear(p)
    assert np.linalg.norm(tay[3]["coefficient"] - raw) <= 1e-6 * np.linalg.norm(raw)


def test_pushforward_linear_field_linear_map():
    sysm = linear_system(8)
    S = np.exp(0.3j * np.arange(17))
    p = probe(8)
    tay = pushforward_taylor(lambda u: S * u, lambda z: z / S, sysm.field, 0.0, p, 1e-2, (1, 2, 3))
    assert np.allclose(tay[1]["coefficient"], sysm.linear * p, atol=1e-9)
    assert tay[2]["at_r"] <= 1e-10 and tay[3]["at_r"] <= 1e-10


def test_pushforward_ill_conditioned():
    sysm = linear_system(4)
    with pytest.raises(NumericalFailure):
        pushforward_taylor(identity_map, identity_map, sysm.field, sysm.linear, probe(4), 1e-3,
                           (2, 3, 4, 5, 6, 7, 8, 9))


def test_bnf_removes_nonresonant_cubic(nls16):
    r = 1e-3
    tr, _ = bnf_pipeline(nls16, 1, K=12)
    res = resonant_project(tr.box_field)
    tay = pushforward_taylor(tr.forward, tr.inverse, nls16.field, nls16.linear, probe(16), r, (3, 4, 5, 6),
                             {3: lambda z: res.evaluate(z, 16)})
    assert tay[3]["at_r"] <= 1e-6 * r ** 2


def test_scan_linear_never_escapes():
    out = amplitude_scan(linear_system(8), [0.2, 0.1, 0.05], T_max=5.0, dt=0.05)
    assert all(row["raw"] == 5.0 for row in out["rows"])
    assert out["slope_raw"] is None


def test_scan_requires_descending():
    with pytest.raises(ValidationError):
        amplitude_scan(linear_system(8), [0.1, 0.2, 0.05])


def test_energy_constant_zero_for_constant_norm():
    rep = simulate(linear_system(8), probe(8), 1.0, 0.1)
    assert energy_constant(rep) <= 1e-10


def empty_report():
    z = np.zeros(0)
    return RunReport(z, z, z, np.zeros(0, int), None, False, 0.0)


def test_header_only_csv(tmp_path):
    export(empty_report(), "csv", tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text() == ",".join(CSV_HEADER) + "\n"


def test_csv_deterministic(nls16, tmp_path):
    u0 = random_field(16, np.random.default_rng(3), decay=6.0, s=4, r=0.05).coeffs
    a = simulate(nls16, u0, 0.5, 1e-2)
    b = simulate(nls16, u0, 0.5, 1e-2)
    export(a, "csv", tmp_path / "a.csv")
    export(b, "csv", tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_json_round_trip(nls16, tmp_path):
    u0 = random_field(16, np.random.default_rng(3), decay=6.0, s=4, r=0.05).coeffs
    rep = simulate(nls16, u0, 0.5, 1e-2, config={"model": "nls"})
    export(rep, "json", tmp_path / "r.json")
    data = read_report(tmp_path / "r.json")
    assert data["schema"] == 1
    back = np.array(data["h_s_norm"])
    assert np.max(np.abs(back / rep.h_s_norm - 1)) <= 1e-15
    assert data["config"] == {"model": "nls"}


def test_unwritable_path(tmp_path):
    with pytest.raises(ValidationError):
        export(empty_report(), "csv", tmp_path / "missing" / "dir" / "x.csv")


def test_config_file_and_overrides(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# demo\nmodel = nls\nmodes = 24\nr = 0.01  # small\n")
    cfg = load_config(p, {"modes": 16, "T": None})
    assert (cfg.modes, cfg.r, cfg.T) == (16, 0.01, 20.0)


@pytest.mark.parametrize("text", ["dt = 0\n", "r = -1\n", "bogus = 1\n", "modes = many\n", "catalog = nope\n",
                                  "just words\n"])
def test_config_validation(tmp_path, text):
    p = tmp_path / "bad.cfg"
    p.write_text(text)
    with pytest.raises(ValidationError):
        load_config(p)


def test_egorov_demo_zero_state():
    out = egorov_demo(0.02, N=8, modes_=())
    assert out["m_b"] == 0.0 and out["variance"] == [0.0]


def test_egorov_demo_rejects_large_r():
    with pytest.raises(ValidationError):
        egorov_demo(0.1)


def test_report_json_sorted(tmp_path):
    export({"b": 1, "a": np.float64(2.0)}, "json", tmp_path / "d.json")
    data = json.loads((tmp_path / "d.json").read_text())
    assert data == {"a": 2.0, "b": 1, "schema": 1}
