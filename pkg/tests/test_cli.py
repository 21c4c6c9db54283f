"""End-to-end tests of the command-line front end."""

import contextlib
import io
import json

import numpy as np
import numpy.testing as npt
import pytest

from beccavity import __version__, cli


BASE_MODEL = """\
[model]
omega_khz = 46.0
omega0_khz = 7.4
kappa_khz = 1250.0
v_khz = 121.65
phi_deg = 37.0
n_atoms = 2000
"""


def run_cli(argv):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        try:
            rc = cli.main(argv)
        except SystemExit as exc:  # argparse paths
            rc = int(exc.code or 0)
    return rc, out.getvalue(), err.getvalue()


def write_config(tmp_path, text, name="run.ini"):
    f = tmp_path / name
    f.write_text(text)
    return str(f)


# ---------------------------------------------------------------- spectrum


def test_spectrum_outputs_and_determinism(tmp_path):
    cfgf = write_config(tmp_path, BASE_MODEL)
    outs = []
    for sub in ("a", "b"):
        d = tmp_path / sub
        rc, _, err = run_cli(["spectrum", "--config", cfgf, "--out", str(d)])
        assert rc == 0, err
        outs.append(((d / "rapidities.json").read_bytes(),
                     (d / "lattice.csv").read_bytes()))
    assert outs[0] == outs[1]  # byte-identical reruns
    doc = json.loads(outs[0][0])
    assert doc["tool"] == f"beccavity {__version__}"
    assert len(doc["config_sha256"]) == 16
    assert doc["units"] == "angular kHz, time in ms"
    assert doc["branch"] == "normal"
    rap = doc["rapidities"]
    assert len(rap) == 6 and all(len(pair) == 2 for pair in rap)
    lat_lines = outs[0][1].decode().strip().splitlines()
    assert lat_lines[0].startswith(f"# beccavity {__version__} config_sha256=")
    assert lat_lines[1].split(",")[:3] == ["n1", "n2", "n3"]


def test_spectrum_superradiant_branch(tmp_path):
    cfgf = write_config(tmp_path, BASE_MODEL + "\n[spectrum]\nbranch = superradiant\n"
                                               "max_total_occupation = 1\n")
    rc, _, err = run_cli(["spectrum", "--config", cfgf, "--out", str(tmp_path)])
    assert rc == 0, err
    doc = json.loads((tmp_path / "rapidities.json").read_text())
    assert doc["branch"] == "superradiant"


# ---------------------------------------------------------------- closed


def test_closed_modes_values(tmp_path):
    cfg = """\
[model]
omega_khz = 46.0
omega0_khz = 7.4
kappa_khz = 0.0
lambda_d_khz = 4.0
lambda_s_khz = 0.0
"""
    cfgf = write_config(tmp_path, cfg)
    rc, _, err = run_cli(["closed", "--config", cfgf, "--out", str(tmp_path)])
    assert rc == 0, err
    lines = (tmp_path / "closed_modes.csv").read_text().strip().splitlines()
    assert lines[1] == "re_f,im_f,re_nu,im_nu,closed_phase"
    rows = [ln.split(",") for ln in lines[2:]]
    assert len(rows) == 3
    assert all(r[4] == "Normal" for r in rows)
    fs = sorted(float(r[0]) for r in rows)
    nus = sorted(float(r[2]) for r in rows)
    npt.assert_allclose(fs[0], -492.6398, rtol=1e-6)
    assert any(abs(f - (-13.69)) <= 1e-9 for f in fs)  # pure spin mode
    assert any(abs(nu - 7.4) <= 1e-9 for nu in nus)
    assert any(abs(nu - 44.3909810768) <= 1e-6 for nu in nus)


# ---------------------------------------------------------------- evolve


def test_evolve_timeseries_layout(tmp_path):
    cfgf = write_config(tmp_path, BASE_MODEL
                        + "\n[evolve]\nt_end_ms = 0.2\ndt_sample_ms = 0.1\n")
    rc, _, err = run_cli(["evolve", "--config", cfgf, "--out", str(tmp_path),
                          "--seed-amplitude", "0.2"])
    assert rc == 0, err
    lines = (tmp_path / "timeseries.csv").read_text().strip().splitlines()
    assert lines[0].startswith(f"# beccavity {__version__} config_sha256=")
    assert "units=angular_kHz_time_ms" in lines[0]
    assert lines[1].startswith("# params omega=")
    cols = lines[2].split(",")
    assert cols == ["t_ms", "re_a", "im_a", "re_b1", "im_b1", "re_b2", "im_b2",
                    "jx1", "jx2", "jz1", "jz2", "jxjx_c", "jxjy_c"]
    first = lines[3].split(",")
    npt.assert_allclose(float(first[0]), 0.0, atol=1e-12)
    npt.assert_allclose(float(first[1]), 0.2, rtol=1e-9)  # seeded cavity
    npt.assert_allclose(float(first[3]), 0.0, atol=1e-12)
    assert len(lines) == 3 + 3  # t = 0, 0.1, 0.2


# ---------------------------------------------------------------- phase diagram


PD_SECTION = """
[phase-diagram]
phi_min_deg = 20
phi_max_deg = 70
omega_min_khz = 5
omega_max_khz = 40
n_phi = 2
n_omega = 2
"""


def test_phase_diagram_smoke_and_meta(tmp_path):
    cfgf = write_config(tmp_path, BASE_MODEL + PD_SECTION)
    rc, _, err = run_cli(["phase-diagram", "--config", cfgf,
                          "--out", str(tmp_path)])
    assert rc == 0, err
    lines = (tmp_path / "phase_diagram.csv").read_text().strip().splitlines()
    assert lines[1].startswith("phi_deg,omega_khz,")
    assert len(lines) == 2 + 4
    meta = json.loads((tmp_path / "phase_diagram_meta.json").read_text())
    assert set(meta) == {"config_sha256", "failures", "grid", "n_failures",
                         "n_records", "params", "tool", "units"}
    assert meta["n_failures"] == 0
    # one record per cell per branch examined (normal + best superradiant)
    assert meta["n_records"] == 8


def test_phase_diagram_thread_invariance(tmp_path):
    cfgf = write_config(tmp_path, BASE_MODEL + PD_SECTION)
    body = {}
    for threads in ("1", "2"):
        d = tmp_path / ("t" + threads)
        rc, _, err = run_cli(["phase-diagram", "--config", cfgf,
                              "--out", str(d), "--threads", threads])
        assert rc == 0, err
        body[threads] = (d / "phase_diagram.csv").read_bytes()
    assert body["1"] == body["2"]


def test_phase_diagram_cell_failures_exit_two(tmp_path, monkeypatch):
    from beccavity import stability
    orig = stability.classify_closed_phase

    def boom(p, tol=1e-7):
        if abs(p.phi_deg - 20.0) < 1e-9:
            raise RuntimeError("synthetic failure")
        return orig(p, tol)

    monkeypatch.setattr(stability, "classify_closed_phase", boom)
    cfgf = write_config(tmp_path, BASE_MODEL + PD_SECTION)
    rc, _, err = run_cli(["phase-diagram", "--config", cfgf,
                          "--out", str(tmp_path)])
    assert rc == 2
    meta = json.loads((tmp_path / "phase_diagram_meta.json").read_text())
    assert meta["n_failures"] == 2
    assert meta["failures"]


# ---------------------------------------------------------------- finite


def test_finite_smoke_and_perturbative_gap(tmp_path):
    cfg = """\
[model]
omega_khz = 46.0
omega0_khz = 7.4
kappa_khz = 740.0
v_khz = 3.7
phi_deg = 30.0

[finite]
n_atoms = 2
fock_cutoff = 3
max_mode_order = 1
"""
    cfgf = write_config(tmp_path, cfg)
    rc, _, err = run_cli(["finite", "--config", cfgf, "--out", str(tmp_path)])
    assert rc == 0, err
    spec_lines = (tmp_path / "finite_spectrum.csv").read_text().strip().splitlines()
    assert spec_lines[1] == "re_lambda,im_lambda"
    assert len(spec_lines) == 2 + 36 * 36
    pert = (tmp_path / "perturbative_modes.csv").read_text().strip().splitlines()
    assert pert[1] == ("n_plus,n_minus,m_plus,m_minus,im_lambda1,"
                       "re_nearest,im_nearest,gap")
    rows = {tuple(int(x) for x in ln.split(",")[:4]): ln.split(",")[4:]
            for ln in pert[2:]}
    gap = float(rows[(1, 0, 0, 0)][3])
    npt.assert_allclose(gap, 0.0310048833921, rtol=1e-6)
    npt.assert_allclose(float(rows[(1, 0, 0, 0)][0]), -7.4, rtol=1e-12)


# ---------------------------------------------------------------- semiclassical


def test_semiclassical_header_and_seed_scaling(tmp_path):
    cfgf = write_config(tmp_path, BASE_MODEL
                        + "\n[semiclassical]\nt_end_ms = 0.02\n"
                          "dt_sample_ms = 0.01\n")
    rc, _, err = run_cli(["semiclassical", "--config", cfgf,
                          "--out", str(tmp_path)])
    assert rc == 0, err
    lines = (tmp_path / "semiclassical.csv").read_text().strip().splitlines()
    assert "variant=corrected" in lines[0]
    cols = lines[1].split(",")
    assert cols[:3] == ["t_ms", "re_alpha", "im_alpha"]
    first = lines[2].split(",")
    npt.assert_allclose(float(first[1]), 0.1 / np.sqrt(2000.0), rtol=1e-9)

    rc, _, _ = run_cli(["semiclassical", "--config", cfgf,
                        "--out", str(tmp_path), "--variant", "printed"])
    assert rc == 0
    head = (tmp_path / "semiclassical.csv").read_text().splitlines()[0]
    assert "variant=printed" in head


# ---------------------------------------------------------------- errors


def test_unknown_key_is_config_error(tmp_path):
    cfgf = write_config(tmp_path, BASE_MODEL + "bogus_key = 1\n")
    rc, _, err = run_cli(["spectrum", "--config", cfgf, "--out", str(tmp_path)])
    assert rc == 1
    assert "config error: [model] unknown key(s): bogus_key" in err


def test_invalid_params_is_config_error(tmp_path):
    cfgf = write_config(tmp_path, BASE_MODEL.replace("omega0_khz = 7.4",
                                                     "omega0_khz = -2"))
    rc, _, err = run_cli(["spectrum", "--config", cfgf, "--out", str(tmp_path)])
    assert rc == 1
    assert "config error: [model] invalid parameters:" in err


def test_unknown_section_is_config_error(tmp_path):
    cfgf = write_config(tmp_path, BASE_MODEL + "\n[bogus]\nx = 1\n")
    rc, _, err = run_cli(["spectrum", "--config", cfgf, "--out", str(tmp_path)])
    assert rc == 1
    assert "unknown section [bogus]" in err


def test_missing_model_key_is_config_error(tmp_path):
    cfgf = write_config(tmp_path, BASE_MODEL.replace("kappa_khz = 1250.0\n", ""))
    rc, _, err = run_cli(["spectrum", "--config", cfgf, "--out", str(tmp_path)])
    assert rc == 1
    assert "missing key 'kappa_khz'" in err


def test_unparseable_ini_is_config_error(tmp_path):
    cfgf = write_config(tmp_path, "omega_khz = 46\n")  # no section header
    rc, _, err = run_cli(["spectrum", "--config", cfgf, "--out", str(tmp_path)])
    assert rc == 1
    assert err.startswith("config error:")


def test_missing_config_file_is_fatal(tmp_path):
    rc, _, err = run_cli(["spectrum", "--config", str(tmp_path / "nope.ini"),
                          "--out", str(tmp_path)])
    assert rc == 1
    assert err.startswith("fatal: builtins.FileNotFoundError")
