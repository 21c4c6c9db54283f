"""Exact finite-N, truncated-Fock representation of the dissipative model.

Builds the dense Liouvillian superoperator on (cavity Fock) x (two
maximal-j Dicke ladders), diagonalizes it, evaluates the degenerate
first-order splitting of the stationary subspace at large loss, and
deforms the generator with a photon counting field for the leading-order
emission current.

Vectorization is row-major: vec(A rho B) = (A kron B^T) vec(rho), so the
Hilbert-Schmidt adjoint of the generator is the conjugate transpose of
its matrix.
"""

from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .model import ModelParams

DEFAULT_BUDGET = 4096 ** 2  # max superoperator entries


class DimensionBudgetExceeded(Exception):
    """Requested superoperator would exceed the memory budget."""


def memory_budget() -> int:
    """Max superoperator entries, overridable via GL_MEM_BUDGET."""
    raw = os.environ.get("GL_MEM_BUDGET", "")
    if raw:
        try:
            return int(float(raw))
        except ValueError:
            raise ValueError(f"GL_MEM_BUDGET must be a number, got {raw!r}")
    return DEFAULT_BUDGET


@dataclass(frozen=True)
class FiniteModel:
    """Truncated finite-size instance: N atoms per condensate.

    dims = (fock_cutoff + 1)(n_atoms + 1)^2 with both spins in the
    maximal sector j = N/2.
    """

    n_atoms: int
    fock_cutoff: int
    params: ModelParams
    dims: int = field(init=False)

    def __post_init__(self):
        if self.n_atoms < 1 or self.fock_cutoff < 0:
            raise ValueError("need n_atoms >= 1 and fock_cutoff >= 0")
        d = (self.fock_cutoff + 1) * (self.n_atoms + 1) ** 2
        object.__setattr__(self, "dims", d)
        if d * d > memory_budget():
            raise DimensionBudgetExceeded(
                f"superoperator {d}^2 x {d}^2 entries exceed budget "
                f"{memory_budget()} (set GL_MEM_BUDGET to raise)")


def _destroy(n: int) -> np.ndarray:
    a = np.zeros((n, n))
    for i in range(1, n):
        a[i - 1, i] = math.sqrt(i)
    return a


def _spin_ops(n_atoms: int):
    """(J+, J-, Jz) in the maximal j = N/2 ladder, m ascending."""
    j = n_atoms / 2.0
    dim = n_atoms + 1
    jp = np.zeros((dim, dim))
    jz = np.zeros((dim, dim))
    for kk in range(dim):
        m = -j + kk
        jz[kk, kk] = m
        if kk + 1 < dim:
            jp[kk + 1, kk] = math.sqrt(j * (j + 1) - m * (m + 1))
    return jp, jp.T, jz


def _operators(fm: FiniteModel):
    """Cavity and spin operators lifted to the product space."""
    nc = fm.fock_cutoff + 1
    ns = fm.n_atoms + 1
    a = _destroy(nc)
    jp, jm, jz = _spin_ops(fm.n_atoms)
    ic, isp = np.eye(nc), np.eye(ns)
    lift_c = lambda o: np.kron(o, np.kron(isp, isp))
    lift_1 = lambda o: np.kron(ic, np.kron(o, isp))
    lift_2 = lambda o: np.kron(ic, np.kron(isp, o))
    return {
        "a": lift_c(a),
        "jp1": lift_1(jp), "jm1": lift_1(jm), "jz1": lift_1(jz),
        "jp2": lift_2(jp), "jm2": lift_2(jm), "jz2": lift_2(jz),
    }


def finite_hamiltonian(fm: FiniteModel) -> np.ndarray:
    """Full finite-N Hamiltonian on the truncated product space.

    The spin-cavity coupling uses the ladder sum (J+ + J-), whose
    large-N bosonization reproduces the quadratic generator of the rest
    of the package without extra factors.
    """
    p = fm.params
    ops = _operators(fm)
    a = ops["a"]
    ad = a.T
    rtn = math.sqrt(fm.n_atoms)
    kd = ops["jp1"] + ops["jm1"] + ops["jp2"] + ops["jm2"]
    ks = ops["jp1"] + ops["jm1"] - ops["jp2"] - ops["jm2"]
    h = (p.omega * (ad @ a)
         + p.omega0 * (ops["jz1"] + ops["jz2"])
         + (p.lambda_d / rtn) * ((ad + a) @ kd)
         + (1j * p.lambda_s / rtn) * ((a - ad) @ ks))
    return h


def build_finite_liouvillian(fm: FiniteModel, chi: float = 0.0,
                             h_extra: np.ndarray | None = None) -> np.ndarray:
    """Dense dims^2 x dims^2 generator matrix acting on vec(rho).

    chi multiplies the recycling term 2 L rho L+ by exp(-i chi)
    (counting emitted photons); h_extra optionally adds a Hermitian term
    to the Hamiltonian (used by tests to drive the cavity).
    """
    if fm.dims ** 2 > memory_budget():
        raise DimensionBudgetExceeded(f"dims^2 = {fm.dims ** 2} over budget")
    h = finite_hamiltonian(fm)
    if h_extra is not None:
        h = h + np.asarray(h_extra, dtype=complex)
    ops = _operators(fm)
    a = ops["a"]
    ad_a = a.T @ a
    ident = np.eye(fm.dims)
    kap = fm.params.kappa
    lmat = (-1j * (np.kron(h, ident) - np.kron(ident, h.T))
            + kap * (2.0 * np.exp(-1j * chi) * np.kron(a, a.conj())
                     - np.kron(ad_a, ident) - np.kron(ident, ad_a.T)))
    return lmat


def deform_with_counting_field(fm: FiniteModel, chi: float) -> np.ndarray:
    """Generator with the photon-counting tilt on the recycling term."""
    return build_finite_liouvillian(fm, chi=chi)


def finite_spectrum(fm: FiniteModel,
                    lmat: np.ndarray | None = None) -> np.ndarray:
    """All generator eigenvalues, sorted by real part descending.

    Raises NonConvergence if any eigenvalue has a real part beyond the
    positivity tolerance (the generator must be contractive).
    """
    if lmat is None:
        lmat = build_finite_liouvillian(fm)
    vals = linalg.eigvals_complex(lmat)
    scale = float(np.linalg.norm(lmat, ord="fro"))
    tol = max(1e-10, 1e-13 * scale)
    if vals.real.max() > tol:
        raise linalg.NonConvergence(
            f"positive real part {vals.real.max():.3e} exceeds {tol:.3e}")
    order = np.lexsort((vals.imag, -vals.real))
    return vals[order]


def converge_fock_cutoff(p: ModelParams, n_atoms: int, n_start: int = 1,
                         tol: float = 1e-6, n_track: int = 10):
    """Double the Fock cutoff until the slowest eigenvalues settle.

    Returns (model, spectrum, cutoff_used). The slowest n_track
    eigenvalues (largest real part) must move less than tol between
    consecutive doublings.
    """
    cutoff = n_start
    prev = None
    while True:
        fm = FiniteModel(n_atoms=n_atoms, fock_cutoff=cutoff, params=p)
        spec = finite_spectrum(fm)
        head = spec[:n_track]
        if prev is not None and len(prev) >= len(head):
            move = np.max(np.abs(head - prev[:len(head)]))
            if move < tol:
                return fm, spec, cutoff
        prev = head
        cutoff *= 2


@dataclass
class PerturbativeMode:
    """First-order splitting of one stationary-subspace mode."""

    n_plus: int
    n_minus: int
    m_plus: int
    m_minus: int
    lambda1: complex

    def __post_init__(self):
        if min(self.n_plus, self.n_minus, self.m_plus, self.m_minus) < 0:
            raise ValueError("occupations must be nonnegative")
        if abs(self.lambda1.real) > 1e-10 * max(1.0, abs(self.lambda1)):
            raise ValueError(
                f"first-order eigenvalue not imaginary: {self.lambda1}")


def perturbative_splitting(fm: FiniteModel, modes) -> list:
    """First-order eigenvalues of the degenerate stationary subspace.

    Right modes are spin-raised projectors on the cavity vacuum; left
    modes carry the cavity identity. Each pair is normalized
    biorthogonally, tr(sigma+ rho) = 1, and the first-order eigenvalue
    is the Hamiltonian matrix element -i tr(sigma+ [H, rho]).
    """
    p = fm.params
    ops = _operators(fm)
    nc = fm.fock_cutoff + 1
    ns = fm.n_atoms + 1
    vac_c = np.zeros((nc, nc))
    vac_c[0, 0] = 1.0
    ground_s = np.zeros((ns, ns))
    ground_s[0, 0] = 1.0
    p_right = np.kron(vac_c, np.kron(ground_s, ground_s))
    p_left = np.kron(np.eye(nc), np.kron(ground_s, ground_s))
    h = finite_hamiltonian(fm)
    out = []
    for occ in modes:
        n_p, n_m, m_p, m_m = occ
        if max(n_p, n_m, m_p, m_m) > fm.n_atoms:
            raise ValueError(f"occupations {occ} exceed the spin ladder")
        raise_l = (np.linalg.matrix_power(ops["jp1"], n_p)
                   @ np.linalg.matrix_power(ops["jp2"], n_m))
        raise_r = (np.linalg.matrix_power(ops["jp1"], m_p)
                   @ np.linalg.matrix_power(ops["jp2"], m_m))
        rho = raise_l @ p_right @ raise_r.conj().T
        sig = raise_l @ p_left @ raise_r.conj().T
        norm = np.trace(sig.conj().T @ rho)
        if abs(norm) < 1e-14 * max(1.0, np.abs(rho).max()):
            raise ValueError(f"mode {occ} is not biorthogonally "
                             f"normalizable (tr = {norm:.3e})")
        lam1 = -1j * np.trace(sig.conj().T @ (h @ rho - rho @ h)) / norm
        out.append(PerturbativeMode(n_plus=n_p, n_minus=n_m, m_plus=m_p,
                                    m_minus=m_m, lambda1=complex(lam1)))
    return out


def photon_current(fm: FiniteModel, step: float = 1e-5) -> float:
    """Leading-order photon emission current from the tilted generator.

    Central finite difference of the leading eigenvalue at chi = 0:
    current = -d lambda0 / d(i chi). Positive means photons leave.
    """
    lam = []
    for chi in (step, -step):
        vals = linalg.eigvals_complex(deform_with_counting_field(fm, chi))
        lam.append(vals[np.argmax(vals.real)])
    return float((1j * (lam[0] - lam[1]) / (2 * step)).real)


# -- factored first-moment flow ----------------------------------------------

def factored_moment_rhs(p: ModelParams, n_atoms: float):
    """Adjoint-generator flow of first moments with factorized products.

    State vector: (⟨a⟩, ⟨J-,+⟩, ⟨J-,-⟩, ⟨Jz,+⟩, ⟨Jz,-⟩), unscaled.
    Products of means replace means of products, exact to leading order
    in 1/N; this is the finite-N shadow of the semiclassical flow.
    """
    rtn = math.sqrt(n_atoms)
    ld, ls = p.lambda_d, p.lambda_s

    def rhs(t, y):
        a, jm1, jm2 = y[0], y[1], y[2]
        jz1, jz2 = y[3].real, y[4].real
        jp1, jp2 = np.conj(jm1), np.conj(jm2)
        q0 = np.conj(a) + a
        q0p = np.conj(a) - a
        c1 = ld * q0 - 1j * ls * q0p
        c2 = ld * q0 + 1j * ls * q0p
        da = (-(p.kappa + 1j * p.omega) * a
              - (1j / rtn) * (ld * (jp1 + jm1 + jp2 + jm2)
                              - 1j * ls * (jp1 + jm1 - jp2 - jm2)))
        djm1 = -1j * p.omega0 * jm1 + (2j / rtn) * jz1 * c1
        djm2 = -1j * p.omega0 * jm2 + (2j / rtn) * jz2 * c2
        djz1 = (1j / rtn) * c1 * (jm1 - jp1)
        djz2 = (1j / rtn) * c2 * (jm2 - jp2)
        return np.array([da, djm1, djm2, djz1.real, djz2.real],
                        dtype=complex)

    return rhs


def evolve_first_moments(p: ModelParams, n_atoms: float, a0: complex,
                         t_end: float, n_samples: int = 200):
    """Integrate the factored flow from the spin ground state.

    Starts at ⟨J-,±⟩ = 0, ⟨Jz,±⟩ = -N/2 with a cavity seed a0; returns
    (times, 5 x n array of moments).
    """
    y0 = np.array([a0, 0, 0, -n_atoms / 2, -n_atoms / 2], dtype=complex)
    rhs = factored_moment_rhs(p, n_atoms)
    t_eval = np.linspace(0.0, t_end, n_samples)
    traj = linalg.integrate_ode(rhs, y0, (0.0, t_end), tol=1e-10,
                                t_eval=t_eval, norm_guard=1e12)
    return traj.t, traj.y


# -- exports ------------------------------------------------------------------

def spectrum_to_csv(vals) -> str:
    """Eigenvalue CSV with re, im columns."""
    buf = io.StringIO()
    buf.write("re_lambda,im_lambda\n")
    for v in np.asarray(vals):
        buf.write(f"{v.real:.12g},{v.imag:.12g}\n")
    return buf.getvalue()


def perturbative_table_csv(modes, spectrum) -> str:
    """Comparison of first-order modes against exact eigenvalues."""
    spec = np.asarray(spectrum)
    buf = io.StringIO()
    buf.write("n_plus,n_minus,m_plus,m_minus,im_lambda1,"
              "re_nearest,im_nearest,gap\n")
    for m in modes:
        dist = np.abs(spec - m.lambda1)
        j = int(np.argmin(dist))
        buf.write(f"{m.n_plus},{m.n_minus},{m.m_plus},{m.m_minus},"
                  f"{m.lambda1.imag:.12g},{spec[j].real:.12g},"
                  f"{spec[j].imag:.12g},{dist[j]:.12g}\n")
    return buf.getvalue()
