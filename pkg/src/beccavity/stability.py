"""Stability classification over parameter grids and closed-system phases.

One-point stability inspects the drift of the first moments; two-point
stability inspects pair sums of a generator's eigenvalues, which is the
spectrum acting on second moments. For sweeps the two-point sector is
fed the pair generator (pair-creation couplings doubled), whose
eigenvalues are minus twice the structure rapidities; this is what makes
a branch with stable means still show growing correlations.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from . import linalg, model, moments
from .model import ModelParams, QuadraticLiouvillian

NORMAL = "Normal"
SUPERRADIANT = "Superradiant"
INACCESSIBLE = "Inaccessible"


@dataclass
class StabilityRecord:
    """Stability data of one branch at one grid cell."""

    phi_deg: float
    omega: float
    max_re_one_point: float
    im_at_max_one_point: float
    max_re_two_point: float
    branch_kind: str
    closed_phase: str
    error: str = ""


def one_point_stability(a_drift) -> tuple:
    """Largest eigenvalue real part of a drift and its frequency.

    Returns (max_re, im_at_max) with the imaginary part reported as the
    nonnegative representative of the conjugate pair at the arg-max.
    """
    vals = linalg.eigvals_complex(np.asarray(a_drift, dtype=complex))
    idx = int(np.argmax(vals.real))
    return float(vals.real[idx]), float(abs(vals.imag[idx]))


def two_point_stability(a_drift) -> float:
    """Max real part over all pair sums of the generator eigenvalues."""
    vals = linalg.eigvals_complex(np.asarray(a_drift, dtype=complex))
    re = vals.real
    return float((re[:, None] + re[None, :]).max())


def two_point_generator(l: QuadraticLiouvillian) -> np.ndarray:
    """Generator fed to the two-point sector (pair couplings doubled)."""
    l2 = dataclasses.replace(l, k=2.0 * l.k)
    a, _ = moments.drift_and_diffusion(l2)
    return a


def closed_cubic_coefficients(p: ModelParams) -> np.ndarray:
    """Ascending coefficients of the closed-system cubic in f.

    The kappa -> 0 limit of the degree-six rapidity polynomial contains
    only even powers; substituting f = chi^2 yields this cubic.
    """
    from .spectral import normal_rapidity_polynomial
    c = normal_rapidity_polynomial(p.with_kappa(0.0))
    if max(abs(c[1]), abs(c[3]), abs(c[5])) > 1e-9 * max(abs(c).max(), 1.0):
        raise AssertionError("odd powers survive the closed limit")
    return np.array([c[0], c[2], c[4], c[6]])


def closed_frequencies(p: ModelParams) -> np.ndarray:
    """Roots f of the closed-system cubic (kappa ignored).

    The Bogoliubov frequencies follow as nu = 2 sqrt(-f); a root with
    f < 0 real is an oscillatory mode, f > 0 real an exponential one,
    complex f signals breakdown of the expansion.
    """
    if p.lambda_d == 0.0 and p.lambda_s == 0.0:
        # decoupled cubic factors exactly; sidesteps the sqrt(eps) splitting
        # a numeric root finder puts on the double condensate root
        roots = np.array([-(p.omega ** 2) / 4.0, -(p.omega0 ** 2) / 4.0,
                          -(p.omega0 ** 2) / 4.0], dtype=complex)
    else:
        roots = linalg.poly_roots(closed_cubic_coefficients(p))
    return linalg.sort_eigs(roots)


def _real_frequencies(vals, scale: float, tol: float) -> bool:
    # real Bogoliubov frequencies: squared values real and nonpositive
    if np.max(np.abs(np.imag(vals))) > tol * scale:
        return False
    return bool(np.max(np.real(vals)) <= tol * scale)


def classify_closed_phase(p: ModelParams, tol: float = 1e-7) -> str:
    """Phase label of the closed system at these couplings.

    Normal when the unshifted cubic has all-real nonpositive roots
    (real frequencies); Superradiant when only a shifted expansion
    point yields real frequencies; Inaccessible when no expansion
    point does. On the lambda_s = 0 line the Normal region ends at
    the single coupling V = sqrt(omega*omega0/18).
    """
    from . import spectral
    f = closed_frequencies(p)
    scale = max(1.0, float(np.max(np.abs(f))))
    if _real_frequencies(f, scale, tol):
        return NORMAL
    p0 = p.with_kappa(0.0)
    try:
        branches = model.filter_physical_branches(
            model.solve_shift_equations(p0))
    except model.RootFindingFailure:
        branches = []
    for b in branches:
        if b.kind == NORMAL:
            continue
        try:
            l = model.build_superradiant_liouvillian(p0, b)
        except model.NonvanishingLinearTerm:
            continue
        chi = linalg.eigvals_complex(spectral.assemble_structure(l).x)
        chi2 = chi ** 2
        s2 = max(1.0, float(np.max(np.abs(chi2))))
        if _real_frequencies(chi2, s2, tol):
            return SUPERRADIANT
    return INACCESSIBLE


def _cell_records(p: ModelParams, phi: float, omega_val: float):
    closed = classify_closed_phase(p)
    records = []

    def stab(l):
        a1, _ = moments.drift_and_diffusion(l)
        mre, imx = one_point_stability(a1)
        tre = two_point_stability(two_point_generator(l))
        return mre, imx, tre

    l_norm = model.build_normal_liouvillian(p)
    mre, imx, tre = stab(l_norm)
    records.append(StabilityRecord(
        phi_deg=phi, omega=omega_val, max_re_one_point=mre,
        im_at_max_one_point=imx, max_re_two_point=tre,
        branch_kind="normal", closed_phase=closed))

    try:
        branches = model.filter_physical_branches(
            model.solve_shift_equations(p))
    except model.RootFindingFailure:
        branches = []
    best = None
    for b in branches:
        if b.kind == NORMAL:
            continue
        try:
            l_sr = model.build_superradiant_liouvillian(p, b)
        except model.NonvanishingLinearTerm:
            continue
        vals = stab(l_sr)
        key = (vals[0], abs(b.alpha))
        if best is None or key < best[0]:
            best = (key, vals)
    if best is not None:
        mre, imx, tre = best[1]
        records.append(StabilityRecord(
            phi_deg=phi, omega=omega_val, max_re_one_point=mre,
            im_at_max_one_point=imx, max_re_two_point=tre,
            branch_kind="superradiant", closed_phase=closed))
    return records


def default_grid():
    """Fig-1-style grid: phi 0-90 deg in 0.5 deg steps, omega 2-50."""
    return ((0.0, 90.0), (2.0, 50.0), (181, 200))


def sweep_phase_diagram(grid, p_base: ModelParams, threads: int = 1):
    """Stability records over a (phi, omega) grid at fixed V.

    grid = ((phi_min, phi_max), (omega_min, omega_max),
    (n_phi, n_omega)) with at least 2 points per axis. Per-cell failures
    are recorded in an error record for that cell; the sweep never
    aborts. Rows come back in deterministic phi-major order regardless
    of scheduling.
    """
    (phi_lo, phi_hi), (om_lo, om_hi), (n_phi, n_om) = grid
    if n_phi < 2 or n_om < 2:
        raise ValueError("resolution must be >= 2 per axis")
    v = p_base.v
    phis = np.linspace(phi_lo, phi_hi, n_phi)
    omegas = np.linspace(om_lo, om_hi, n_om)
    cells = [(float(ph), float(om)) for ph in phis for om in omegas]

    def run_cell(cell):
        ph, om = cell
        try:
            p = ModelParams.from_v_phi(
                v=v, phi_deg=ph, omega=om, omega0=p_base.omega0,
                kappa=p_base.kappa, n_atoms=p_base.n_atoms)
            return _cell_records(p, ph, om)
        except Exception as exc:  # recorded, not raised
            nan = float("nan")
            return [StabilityRecord(
                phi_deg=ph, omega=om, max_re_one_point=nan,
                im_at_max_one_point=nan, max_re_two_point=nan,
                branch_kind="error", closed_phase="", error=str(exc))]

    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as ex:
            per_cell = list(ex.map(run_cell, cells))
    else:
        per_cell = [run_cell(c) for c in cells]
    out = []
    for recs in per_cell:
        out.extend(recs)
    return out


def records_to_csv(records) -> str:
    """Phase-diagram CSV, one row per grid cell."""
    cellmap = {}
    order = []
    for r in records:
        key = (r.phi_deg, r.omega)
        if key not in cellmap:
            cellmap[key] = []
            order.append(key)
        cellmap[key].append(r)
    buf = io.StringIO()
    buf.write("phi_deg,omega_khz,max_re_normal_1pt,im_normal_1pt,"
              "max_re_sr_1pt,max_re_best_2pt,closed_phase\n")
    for key in order:
        recs = cellmap[key]
        normal = next((r for r in recs if r.branch_kind == "normal"), None)
        sr = next((r for r in recs if r.branch_kind == "superradiant"), None)
        twos = [r.max_re_two_point for r in recs
                if r.branch_kind in ("normal", "superradiant")]
        best2 = min(twos) if twos else float("nan")
        closed = recs[0].closed_phase

        def fmt(x):
            return "nan" if x is None or not math.isfinite(x) else f"{x:.12g}"

        row = [f"{key[0]:.10g}", f"{key[1]:.10g}",
               fmt(normal.max_re_one_point if normal else None),
               fmt(normal.im_at_max_one_point if normal else None),
               fmt(sr.max_re_one_point if sr else None),
               fmt(best2), closed]
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def sweep_metadata(records, grid, p_base: ModelParams) -> dict:
    """JSON-ready sidecar describing a sweep and its failures."""
    failures = [{"phi_deg": r.phi_deg, "omega": r.omega, "error": r.error}
                for r in records if r.branch_kind == "error"]
    (phi_lo, phi_hi), (om_lo, om_hi), (n_phi, n_om) = grid
    return {
        "grid": {"phi_deg": [phi_lo, phi_hi, n_phi],
                 "omega_khz": [om_lo, om_hi, n_om]},
        "params": {"v": p_base.v, "omega0": p_base.omega0,
                   "kappa": p_base.kappa, "n_atoms": p_base.n_atoms},
        "n_records": len(records),
        "n_failures": len(failures),
        "failures": failures,
        "units": "angular kHz, time in ms",
    }
