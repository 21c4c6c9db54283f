"""Command-line front end: config ingestion and deterministic data files.

Subcommands map one-to-one onto the library: spectrum (rapidities and
eigenvalue lattice), evolve (moment time series), phase-diagram
(stability sweep), closed (closed-system modes), finite (exact
finite-N spectrum plus perturbative table), semiclassical (factorized
one-point flow).

Config files are INI-sectioned key=value text; every physical key
carries its unit in the name (omega_khz, t_end_ms) so files stay
self-describing. Outputs embed a metadata header (tool version, config
hash, units statement) and contain no timestamps: identical config and
build give identical bytes.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import hashlib
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, finite, linalg, model, moments, spectral, stability
from .model import ModelParams


class ConfigParseError(Exception):
    """Bad config file; message carries line/key diagnostics."""


_MODEL_KEYS = {"omega_khz", "omega0_khz", "kappa_khz", "lambda_d_khz",
               "lambda_s_khz", "v_khz", "phi_deg", "n_atoms"}
_SECTION_KEYS = {
    "model": _MODEL_KEYS,
    "spectrum": {"branch", "max_total_occupation"},
    "evolve": {"branch", "t_end_ms", "dt_sample_ms"},
    "phase-diagram": {"phi_min_deg", "phi_max_deg", "omega_min_khz",
                      "omega_max_khz", "n_phi", "n_omega"},
    "closed": set(),
    "finite": {"n_atoms", "fock_cutoff", "max_mode_order"},
    "semiclassical": {"t_end_ms", "dt_sample_ms"},
}


@dataclasses.dataclass
class RunConfig:
    """One parsed invocation: command, parameters, options, plumbing."""

    command: str
    params: ModelParams
    options: dict
    out_dir: Path
    threads: int = 1
    seed_amplitude: complex = 0.1
    variant: str = "corrected"
    config_sha: str = ""

    def __post_init__(self):
        if self.command not in _SECTION_KEYS or self.command == "model":
            raise ConfigParseError(f"unknown command {self.command!r}")
        if self.threads < 1:
            raise ConfigParseError("threads must be >= 1")


def _getfloat(cp, section, key, default=None):
    if not cp.has_option(section, key):
        if default is None:
            raise ConfigParseError(f"[{section}] missing key {key!r}")
        return default
    raw = cp.get(section, key)
    try:
        return float(raw)
    except ValueError:
        raise ConfigParseError(
            f"[{section}] key {key!r}: not a number: {raw!r}")


def _getint(cp, section, key, default):
    val = _getfloat(cp, section, key, float(default))
    if val != int(val):
        raise ConfigParseError(f"[{section}] key {key!r}: expected integer")
    return int(val)


def _model_from_config(cp) -> ModelParams:
    if not cp.has_section("model"):
        raise ConfigParseError("missing [model] section")
    keys = set(cp.options("model"))
    polar = {"v_khz", "phi_deg"} & keys
    cart = {"lambda_d_khz", "lambda_s_khz"} & keys
    if polar and cart:
        raise ConfigParseError(
            "[model] give v_khz/phi_deg or lambda_d_khz/lambda_s_khz, "
            "not both")
    common = dict(
        omega=_getfloat(cp, "model", "omega_khz"),
        omega0=_getfloat(cp, "model", "omega0_khz"),
        kappa=_getfloat(cp, "model", "kappa_khz"),
        n_atoms=_getfloat(cp, "model", "n_atoms", 2000.0),
    )
    try:
        if polar:
            if len(polar) != 2:
                raise ConfigParseError("[model] v_khz and phi_deg go together")
            return ModelParams.from_v_phi(
                v=_getfloat(cp, "model", "v_khz"),
                phi_deg=_getfloat(cp, "model", "phi_deg"), **common)
        if len(cart) != 2:
            raise ConfigParseError(
                "[model] need lambda_d_khz and lambda_s_khz (or v/phi)")
        return ModelParams(lambda_d=_getfloat(cp, "model", "lambda_d_khz"),
                           lambda_s=_getfloat(cp, "model", "lambda_s_khz"),
                           **common)
    except ValueError as exc:
        raise ConfigParseError(f"[model] invalid parameters: {exc}")


def load_config(path, command: str, out_dir, threads: int,
                seed_amplitude: complex, variant: str) -> RunConfig:
    """Parse an INI config file into a RunConfig for one command."""
    text = Path(path).read_text()
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigParseError(str(exc))
    for section in cp.sections():
        if section not in _SECTION_KEYS:
            raise ConfigParseError(f"unknown section [{section}]")
        bad = set(cp.options(section)) - _SECTION_KEYS[section]
        if bad:
            raise ConfigParseError(
                f"[{section}] unknown key(s): {', '.join(sorted(bad))}")
    params = _model_from_config(cp)
    options = {}
    if cp.has_section(command):
        options = dict(cp.items(command))
    sha = hashlib.sha256(text.encode()).hexdigest()[:16]
    options["_cp"] = cp
    return RunConfig(command=command, params=params, options=options,
                     out_dir=Path(out_dir), threads=threads,
                     seed_amplitude=seed_amplitude, variant=variant,
                     config_sha=sha)


def _header(cfg: RunConfig) -> str:
    return ("# beccavity %s config_sha256=%s units=angular_kHz_time_ms "
            "variant=%s\n" % (__version__, cfg.config_sha, cfg.variant))


def _write(cfg: RunConfig, name: str, text: str):
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    (cfg.out_dir / name).write_text(text)


def _pick_branch(cfg: RunConfig, kind: str):
    """Build the generator for the requested branch kind."""
    p = cfg.params
    if kind == "normal":
        return model.build_normal_liouvillian(p)
    branches = model.filter_physical_branches(model.solve_shift_equations(p))
    best = None
    for b in branches:
        if b.kind == "Normal":
            continue
        l = model.build_superradiant_liouvillian(p, b)
        a, _ = moments.drift_and_diffusion(l)
        mre, _ = stability.one_point_stability(a)
        key = (mre, abs(b.alpha))
        if best is None or key < best[0]:
            best = (key, l)
    if best is None:
        raise model.RootFindingFailure("no physical superradiant branch")
    return best[1]


def _run_spectrum(cfg: RunConfig) -> int:
    cp = cfg.options["_cp"]
    kind = cp.get("spectrum", "branch", fallback="normal")
    max_occ = _getint(cp, "spectrum", "max_total_occupation", 2) \
        if cp.has_section("spectrum") else 2
    l = _pick_branch(cfg, kind)
    sd = spectral.rapidities(spectral.assemble_structure(l))
    payload = json.loads(spectral.rapidities_to_json(sd))
    doc = {"tool": f"beccavity {__version__}",
           "config_sha256": cfg.config_sha,
           "units": "angular kHz, time in ms",
           "branch": kind,
           "rapidities": payload}
    _write(cfg, "rapidities.json", json.dumps(doc, indent=1) + "\n")
    lat = spectral.eigenvalue_lattice(sd, max_total_occupation=max_occ)
    _write(cfg, "lattice.csv", _header(cfg) + spectral.lattice_to_csv(lat))
    return 0


def _run_evolve(cfg: RunConfig) -> int:
    cp = cfg.options["_cp"]
    has = cp.has_section("evolve")
    kind = cp.get("evolve", "branch", fallback="normal") if has else "normal"
    t_end = _getfloat(cp, "evolve", "t_end_ms", 1.0) if has else 1.0
    dt = _getfloat(cp, "evolve", "dt_sample_ms", 1e-3) if has else 1e-3
    l = _pick_branch(cfg, kind)
    a, d = moments.drift_and_diffusion(l)
    init = moments.initial_state(cfg.seed_amplitude)
    traj = moments.evolve_moments(a, d, init, t_end=t_end, dt_sample=dt)
    _write(cfg, "timeseries.csv",
           _header(cfg) + moments.timeseries_to_csv(traj, cfg.params,
                                                    l.branch))
    return 0


def _run_phase_diagram(cfg: RunConfig) -> int:
    cp = cfg.options["_cp"]
    s = "phase-diagram"
    has = cp.has_section(s)

    def gf(key, dflt):
        return _getfloat(cp, s, key, dflt) if has else dflt

    def gi(key, dflt):
        return _getint(cp, s, key, dflt) if has else dflt

    grid = ((gf("phi_min_deg", 0.0), gf("phi_max_deg", 90.0)),
            (gf("omega_min_khz", 2.0), gf("omega_max_khz", 50.0)),
            (gi("n_phi", 181), gi("n_omega", 200)))
    records = stability.sweep_phase_diagram(grid, cfg.params,
                                            threads=cfg.threads)
    _write(cfg, "phase_diagram.csv",
           _header(cfg) + stability.records_to_csv(records))
    meta = stability.sweep_metadata(records, grid, cfg.params)
    meta["tool"] = f"beccavity {__version__}"
    meta["config_sha256"] = cfg.config_sha
    _write(cfg, "phase_diagram_meta.json", json.dumps(meta, indent=1) + "\n")
    return 2 if meta["n_failures"] else 0


def _run_closed(cfg: RunConfig) -> int:
    f = stability.closed_frequencies(cfg.params)
    label = stability.classify_closed_phase(cfg.params)
    buf = io.StringIO()
    buf.write(_header(cfg))
    buf.write("re_f,im_f,re_nu,im_nu,closed_phase\n")
    for root in f:
        nu = 2.0 * np.sqrt(-root + 0j)
        buf.write(f"{root.real:.12g},{root.imag:.12g},"
                  f"{nu.real:.12g},{nu.imag:.12g},{label}\n")
    _write(cfg, "closed_modes.csv", buf.getvalue())
    return 0


def _run_finite(cfg: RunConfig) -> int:
    cp = cfg.options["_cp"]
    has = cp.has_section("finite")
    n_atoms = _getint(cp, "finite", "n_atoms", 2) if has else 2
    cutoff = _getint(cp, "finite", "fock_cutoff", 2) if has else 2
    order = _getint(cp, "finite", "max_mode_order", 2) if has else 2
    fm = finite.FiniteModel(n_atoms=n_atoms, fock_cutoff=cutoff,
                            params=cfg.params)
    spec = finite.finite_spectrum(fm)
    _write(cfg, "finite_spectrum.csv",
           _header(cfg) + finite.spectrum_to_csv(spec))
    occs = [(n_p, n_m, m_p, m_m)
            for n_p in range(order + 1) for n_m in range(order + 1)
            for m_p in range(order + 1) for m_m in range(order + 1)
            if 0 < n_p + n_m + m_p + m_m <= order
            and max(n_p, n_m, m_p, m_m) <= n_atoms]
    occs.insert(0, (0, 0, 0, 0))
    modes = finite.perturbative_splitting(fm, occs)
    _write(cfg, "perturbative_modes.csv",
           _header(cfg) + finite.perturbative_table_csv(modes, spec))
    return 0


def _run_semiclassical(cfg: RunConfig) -> int:
    cp = cfg.options["_cp"]
    has = cp.has_section("semiclassical")
    t_end = _getfloat(cp, "semiclassical", "t_end_ms", 1.0) if has else 1.0
    dt = _getfloat(cp, "semiclassical", "dt_sample_ms", 1e-3) if has else 1e-3
    rtn = np.sqrt(cfg.params.n_atoms)
    init = moments.SemiclassicalState(
        alpha=cfg.seed_amplitude / rtn, beta1=0.0, beta2=0.0,
        w1=-0.5, w2=-0.5)
    times, states, diverged = moments.integrate_semiclassical(
        cfg.params, init, t_end=t_end, dt_sample=dt, variant=cfg.variant)
    buf = io.StringIO()
    buf.write(_header(cfg))
    if diverged:
        buf.write("# diverged=true\n")
    buf.write("t_ms,re_alpha,im_alpha,re_beta1,im_beta1,"
              "re_beta2,im_beta2,w1,w2\n")
    for t, st in zip(times, states):
        buf.write(f"{t:.9g},{st.alpha.real:.12g},{st.alpha.imag:.12g},"
                  f"{st.beta1.real:.12g},{st.beta1.imag:.12g},"
                  f"{st.beta2.real:.12g},{st.beta2.imag:.12g},"
                  f"{st.w1:.12g},{st.w2:.12g}\n")
    _write(cfg, "semiclassical.csv", buf.getvalue())
    return 0


_RUNNERS = {
    "spectrum": _run_spectrum,
    "evolve": _run_evolve,
    "phase-diagram": _run_phase_diagram,
    "closed": _run_closed,
    "finite": _run_finite,
    "semiclassical": _run_semiclassical,
}


def run(cfg: RunConfig) -> int:
    """Execute one configured command; returns the process exit code."""
    return _RUNNERS[cfg.command](cfg)


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="beccavity",
        description="Spectra, moments and stability maps of a two-BEC "
                    "lossy-cavity model (angular kHz, time in ms).")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in _RUNNERS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="INI config path")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--threads", type=int,
                        default=os.cpu_count() or 1)
        sp.add_argument("--seed-amplitude", type=float, default=0.1,
                        help="initial cavity amplitude <a(0)>")
        sp.add_argument("--variant", choices=("printed", "corrected"),
                        default="corrected",
                        help="semiclassical equation variant")
    return ap


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.command, args.out, args.threads,
                          args.seed_amplitude, args.variant)
        return run(cfg)
    except ConfigParseError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # fatal numeric errors with provenance
        print(f"fatal: {type(exc).__module__}.{type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
