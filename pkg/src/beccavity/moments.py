"""First- and second-moment dynamics of the quadratic generator.

The drift here is the Heisenberg flow of the quadratic Hamiltonian plus
cavity loss acting on the doubled vector v = (a, b1, b2, a+, b1+, b2+):

    d<v>/dt = A <v>,        dC/dt = A C + C A^T + D,

with C the symmetrically ordered second-moment matrix and D the
(symmetrized) dissipator inhomogeneity. Note that A is not minus twice
a sub-multiset of the structure-matrix rapidities: the spectral side of
the package doubles the pair-creation couplings, the dynamic side here
does not, and the two satisfy eig(A) = -2 eig(X(h, k/2)) exactly.

Spin observables are reconstructed to leading order in 1/N around the
expansion branch: J+ ~ sqrt(N) b+, J_z = b+b - N/2, with branch shifts
entering as c-number displacements.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from . import linalg
from .model import (MeanFieldBranch, ModelParams, NORMAL_BRANCH,
                    QuadraticLiouvillian)

_SWAP = np.block([
    [np.zeros((3, 3)), np.eye(3)],
    [np.eye(3), np.zeros((3, 3))],
])

OMEGA_SYMPLECTIC = np.block([
    [np.zeros((3, 3)), np.eye(3)],
    [-np.eye(3), np.zeros((3, 3))],
])


class DegenerateDenominator(Exception):
    """Squeezing denominator collapsed below resolution."""


def vacuum_covariance() -> np.ndarray:
    """Symmetrically ordered covariance of the joint vacuum."""
    c = np.zeros((6, 6), dtype=complex)
    c[:3, 3:] = 0.5 * np.eye(3)
    c[3:, :3] = 0.5 * np.eye(3)
    return c


@dataclass
class MomentState:
    """First moments, symmetric second moments, and a time stamp."""

    first: np.ndarray
    second: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.first = np.asarray(self.first, dtype=complex).reshape(6)
        self.second = np.asarray(self.second, dtype=complex).reshape(6, 6)

    def conjugation_defect(self) -> float:
        """How far the state is from v[3:] = conj(v[:3]) symmetry."""
        d1 = np.max(np.abs(self.first - _SWAP @ self.first.conj()))
        d2 = np.max(np.abs(self.second - _SWAP @ self.second.conj() @ _SWAP))
        d3 = np.max(np.abs(self.second - self.second.T))
        return float(max(d1, d2, d3))

    def connected(self) -> np.ndarray:
        """Connected symmetric covariance (means subtracted)."""
        return self.second - np.outer(self.first, self.first)

    def uncertainty_defect(self) -> float:
        """Most negative eigenvalue of the physicality form (>= ~0)."""
        g = (self.connected() + 0.5 * OMEGA_SYMPLECTIC) @ _SWAP
        vals = np.linalg.eigvalsh(0.5 * (g + g.conj().T))
        return float(-min(vals.min(), 0.0))


def initial_state(seed_amplitude: complex = 0.1,
                  a_squared: complex | None = None) -> MomentState:
    """Vacuum-covariance initial state with a cavity seed.

    seed_amplitude sets <a(0)>; a zero seed stays zero forever under the
    linear flow, so the default puts a small coherent displacement on
    the cavity. a_squared optionally imposes <a^2(0)> via a squeezed
    cavity vacuum (photon number chosen minimally for physicality).
    """
    first = np.zeros(6, dtype=complex)
    first[0] = seed_amplitude
    first[3] = np.conj(seed_amplitude)
    second = vacuum_covariance()
    if a_squared is not None:
        z = complex(a_squared)
        # squeezed vacuum: <a^2> = -exp(i th) cosh r sinh r, <a+a> = sinh^2 r
        cs = abs(z)
        nbar = 0.5 * (math.sqrt(1 + 4 * cs ** 2) - 1)
        second[0, 0] = z
        second[3, 3] = np.conj(z)
        second[0, 3] = second[3, 0] = nbar + 0.5
    second += np.outer(first, first)
    return MomentState(first=first, second=second, time=0.0)


def drift_and_diffusion(l: QuadraticLiouvillian):
    """Drift A and symmetric diffusion D of the moment flow.

    A = [[-i h - m, -i conj(k)], [i k, i conj(h) - m]];
    D couples only through the dissipator, D = [[0, m], [m, 0]].
    """
    h, k, m = l.h, l.k, l.m
    a = np.block([
        [-1j * h - m, -1j * k.conj()],
        [1j * k, 1j * h.conj() - m.conj()],
    ])
    z3 = np.zeros_like(m)
    d = np.block([[z3, m], [m.conj(), z3]])
    return a, d


@dataclass
class MomentTrajectory:
    """Sampled moment evolution; divergence is flagged, not erased."""

    states: list
    diverged: bool = False
    message: str = ""

    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.states])

    def first_series(self, idx: int) -> np.ndarray:
        return np.array([s.first[idx] for s in self.states])


OVERFLOW_GUARD = 1e12


def evolve_moments(a_drift, d_diffusion, init: MomentState, t_end: float,
                   dt_sample: float, tol: float = 1e-9) -> MomentTrajectory:
    """Integrate the linear moment flow and sample every dt_sample.

    Trajectories exceeding the 1e12 overflow guard are truncated at the
    guard crossing and flagged diverged; the partial data is kept for
    growth-rate fits.
    """
    if init.conjugation_defect() > 1e-7 * max(1.0, float(np.max(np.abs(init.second)))):
        raise ValueError("initial state violates conjugation symmetry")
    a = np.asarray(a_drift, dtype=complex)
    d = np.asarray(d_diffusion, dtype=complex)

    def rhs(t, y):
        f = y[:6]
        c = y[6:].reshape(6, 6)
        df = a @ f
        dc = a @ c + c @ a.T + d
        return np.concatenate([df, dc.ravel()])

    y0 = np.concatenate([init.first, init.second.ravel()])
    n_samp = max(2, int(round(t_end / dt_sample)) + 1)
    t_eval = np.linspace(0.0, t_end, n_samp)
    traj = linalg.integrate_ode(rhs, y0, (0.0, t_end), tol=tol,
                                t_eval=t_eval, norm_guard=OVERFLOW_GUARD)
    states = []
    for i, t in enumerate(traj.t):
        states.append(MomentState(first=traj.y[:6, i],
                                  second=traj.y[6:, i].reshape(6, 6),
                                  time=float(t)))
    return MomentTrajectory(states=states, diverged=traj.diverged,
                            message=traj.message)


def growth_rate(traj: MomentTrajectory, idx: int = 1,
                window_frac: float = 0.5) -> float:
    """Log-linear exponential growth-rate fit for one first moment."""
    t = traj.times()
    y = np.abs(traj.first_series(idx))
    keep = y > 0
    t, y = t[keep], y[keep]
    n0 = int(len(t) * (1 - window_frac))
    t, y = t[n0:], np.log(y[n0:])
    if len(t) < 2:
        return 0.0
    return float(np.polyfit(t, y, 1)[0])


def oscillation_amplitude(values, final_fraction: float = 1 / 3) -> float:
    """Max minus min over the trailing fraction of a series."""
    v = np.asarray(values, dtype=float)
    n0 = int(len(v) * (1 - final_fraction))
    tail = v[n0:]
    return float(tail.max() - tail.min())


# -- spin observables --------------------------------------------------------

@dataclass
class SpinObservables:
    """Leading-order collective spin data for both condensates."""

    jx: tuple
    jy: tuple
    jz: tuple
    jxjx_c: float
    jxjy_c: float
    xi_y: tuple
    time: float = 0.0


def _mode_gaussian(ms: MomentState, p: ModelParams, b: MeanFieldBranch,
                   i: int):
    """Mean and connected normal-ordered pair data of condensate mode i.

    Returns (M, n_delta, s): total displacement, <delta+ delta>, and
    <delta delta> for the zero-mean fluctuation delta.
    """
    shift = [b.beta1, b.beta2][i - 1] / math.sqrt(2)
    m_tot = math.sqrt(p.n_atoms) * shift + ms.first[i]
    cc = ms.connected()
    n_delta = cc[3 + i, i] - 0.5
    s = cc[i, i]
    return m_tot, n_delta, s


def spin_observables(ms: MomentState, p: ModelParams,
                     b: MeanFieldBranch = NORMAL_BRANCH) -> SpinObservables:
    """Collective spin expectations and connected cross-correlators.

    J+ is linearized as sqrt(N) b+ around the branch displacement, so
    every result is leading order in 1/N. Connected correlators subtract
    the product of means and therefore vanish on product states.
    """
    n = p.n_atoms
    rtn = math.sqrt(n)
    jx, jy, jz, xiy = [], [], [], []
    for i in (1, 2):
        m_tot, nd, s = _mode_gaussian(ms, p, b, i)
        jx.append(rtn * ((m_tot + np.conj(m_tot)) / 2).real)
        jy.append(rtn * ((np.conj(m_tot) - m_tot) / (2j)).real)
        jz.append(float((abs(m_tot) ** 2 + nd.real) - n / 2))
        xiy.append(_xi_y_mode(p, m_tot, nd, s))
    cc = ms.connected()
    # cross correlators: modes commute, so plain and symmetric agree
    jxjx = 0.25 * n * (cc[1, 2] + cc[1, 5] + cc[4, 2] + cc[4, 5])
    jxjy = 0.25 * n * (-1j) * (cc[1, 5] - cc[1, 2] + cc[4, 5] - cc[4, 2])
    return SpinObservables(jx=tuple(jx), jy=tuple(jy), jz=tuple(jz),
                           jxjx_c=float(jxjx.real), jxjy_c=float(jxjy.real),
                           xi_y=tuple(xiy), time=ms.time)


def _xi_y_mode(p: ModelParams, m_tot: complex, nd: complex, s: complex,
               tol: float = 1e-12) -> float:
    """Squeezing parameter N (dJy)^2 / (<Jz^2> + <Jx^2>) for one mode."""
    n = p.n_atoms
    nd = nd.real
    mm = abs(m_tot) ** 2
    # Gaussian (Wick) quartics with nonzero mean
    cross = np.conj(m_tot) ** 2 * s
    nbnb = mm ** 2 + 2 * mm * nd + 2 * cross.real + mm * (2 * nd + 1) \
        + 2 * nd ** 2 + nd + abs(s) ** 2
    nb = mm + nd
    jz2 = nbnb - n * nb + n ** 2 / 4
    jx2 = 0.25 * n * ((m_tot + np.conj(m_tot)).real ** 2
                      + 2 * s.real + 2 * nd + 1)
    # mean part cancels in the variance; only fluctuations remain
    dy2 = 0.25 * n * (2 * nd + 1 - 2 * s.real)
    denom = jz2 + jx2
    if denom < tol * n ** 2:
        raise DegenerateDenominator(f"denominator {denom:.3e}")
    return float(n * dy2 / denom)


def spin_squeezing_y(ms: MomentState, p: ModelParams,
                     b: MeanFieldBranch = NORMAL_BRANCH) -> tuple:
    """y-direction squeezing parameter for each condensate.

    Evaluates N (dJ_y)^2 / (<J_z^2> + <J_x^2>) with Gaussian-state
    factorization of the quartic denominator.

    Raises
    ------
    DegenerateDenominator
        When the denominator drops below 1e-12 N^2.
    """
    out = []
    for i in (1, 2):
        m_tot, nd, s = _mode_gaussian(ms, p, b, i)
        out.append(_xi_y_mode(p, m_tot, nd, s))
    return tuple(out)


# -- semiclassical flow ------------------------------------------------------

@dataclass
class SemiclassicalState:
    """Factorized one-point state in per-atom scaling.

    alpha = <a>/sqrt(N); beta_i = <J_-,i>/N; w_i = <J_z,i>/N in
    [-1/2, 1/2]. The spin length fixes w_i^2 + |beta_i|^2 = 1/4 for
    states on the Bloch sphere.
    """

    alpha: complex
    beta1: complex
    beta2: complex
    w1: float
    w2: float

    def to_vec(self) -> np.ndarray:
        return np.array([self.alpha, self.beta1, self.beta2,
                         self.w1, self.w2], dtype=complex)

    @classmethod
    def from_vec(cls, y) -> "SemiclassicalState":
        return cls(alpha=complex(y[0]), beta1=complex(y[1]),
                   beta2=complex(y[2]), w1=float(y[3].real),
                   w2=float(y[4].real))


def semiclassical_rhs(s: SemiclassicalState, p: ModelParams,
                      variant: str = "corrected") -> SemiclassicalState:
    """Time derivative of the factorized one-point flow.

    variant="printed" integrates the published five equations verbatim;
    variant="corrected" (default) replaces the w2 appearing in the
    beta1 equation with w1, which restores exact conservation of
    w_i^2 + |beta_i|^2 for both modes (dissipation touches only the
    cavity). The default was selected by that conservation check.
    """
    if variant not in ("printed", "corrected"):
        raise ValueError(f"unknown variant {variant!r}")
    ld, ls = p.lambda_d, p.lambda_s
    al, b1, b2 = s.alpha, s.beta1, s.beta2
    w1, w2 = s.w1, s.w2
    q0 = np.conj(al) + al      # real
    q0p = np.conj(al) - al     # imaginary
    dal = (al * (-p.kappa - 1j * p.omega)
           - 1j * ld * (np.conj(b1) + np.conj(b2) + b1 + b2)
           + ls * (np.conj(b1) - np.conj(b2) + b1 - b2))
    dw1 = (-ls * q0p * (b1 - np.conj(b1))
           + 1j * ld * q0 * (b1 - np.conj(b1))).real
    dw2 = (ls * q0p * (b2 - np.conj(b2))
           + 1j * ld * q0 * (b2 - np.conj(b2))).real
    w_in_b1 = w2 if variant == "printed" else w1
    db1 = 2j * ld * w1 * q0 - 2 * ls * w_in_b1 * q0p - 1j * p.omega0 * b1
    db2 = 2j * ld * w2 * q0 + 2 * ls * w2 * q0p - 1j * p.omega0 * b2
    return SemiclassicalState(alpha=dal, beta1=db1, beta2=db2,
                              w1=dw1, w2=dw2)


def integrate_semiclassical(p: ModelParams, init: SemiclassicalState,
                            t_end: float, dt_sample: float = 1e-3,
                            variant: str = "corrected", tol: float = 1e-10):
    """Integrate the semiclassical flow; returns (times, states)."""
    def rhs(t, y):
        d = semiclassical_rhs(SemiclassicalState.from_vec(y), p, variant)
        return d.to_vec()

    n_samp = max(2, int(round(t_end / dt_sample)) + 1)
    t_eval = np.linspace(0.0, t_end, n_samp)
    traj = linalg.integrate_ode(rhs, init.to_vec(), (0.0, t_end), tol=tol,
                                t_eval=t_eval, norm_guard=OVERFLOW_GUARD)
    states = [SemiclassicalState.from_vec(traj.y[:, i])
              for i in range(traj.t.size)]
    return traj.t, states, traj.diverged


def adiabatic_eliminate(p: ModelParams,
                        l: QuadraticLiouvillian | None = None) -> np.ndarray:
    """Reduced 4x4 condensate drift after removing the fast cavity.

    Sets the cavity rows of the full drift stationary and substitutes
    the resulting cavity amplitude into the condensate rows. Row order
    of the result is (b1, b2, b1+, b2+).
    """
    from .model import build_normal_liouvillian
    if l is None:
        l = build_normal_liouvillian(p)
    a, _ = drift_and_diffusion(l)
    cav = [0, 3]
    bec = [1, 2, 4, 5]
    acc = a[np.ix_(cav, cav)]
    acb = a[np.ix_(cav, bec)]
    abc = a[np.ix_(bec, cav)]
    abb = a[np.ix_(bec, bec)]
    return abb - abc @ np.linalg.solve(acc, acb)


def printed_one_point_drift(p: ModelParams) -> np.ndarray:
    """Comparison mode: the one-point equations as printed in-text.

    These carry explicit 1/sqrt(N) prefactors and the opposite relative
    sign of the spin-mode coupling compared to the quadratic generator
    (a gauge choice made before bosonization). Not used by production
    evolution; retained for documented side-by-side comparison.
    """
    rtn = math.sqrt(p.n_atoms)
    ld, ls = p.lambda_d / rtn, p.lambda_s / rtn
    a = np.zeros((6, 6), dtype=complex)
    # d<a>/dt = -(kappa + i omega)<a> - i lD (q1* + q1) + lS (q2* + q2)
    a[0, 0] = -(p.kappa + 1j * p.omega)
    for j, sgn in ((1, 1.0), (2, -1.0)):
        a[0, j] += -1j * ld + ls * sgn
        a[0, 3 + j] += -1j * ld + ls * sgn
    # d<b_j>/dt = -i omega0 <b_j> - i lD q0 + (-1)^(j-1) lS q0'
    for j, sgn in ((1, 1.0), (2, -1.0)):
        a[j, j] = -1j * p.omega0
        a[j, 3] += -1j * ld + sgn * ls
        a[j, 0] += -1j * ld - sgn * ls
    a[3:, :3] = a[:3, 3:].conj()
    a[3:, 3:] = a[:3, :3].conj()
    return a


# -- exports ------------------------------------------------------------------

def timeseries_to_csv(traj: MomentTrajectory, p: ModelParams,
                      b: MeanFieldBranch = NORMAL_BRANCH) -> str:
    """Time-series CSV with a parameter fingerprint header."""
    buf = io.StringIO()
    buf.write("# params omega=%.10g omega0=%.10g lambda_d=%.10g "
              "lambda_s=%.10g kappa=%.10g n_atoms=%.10g units=angular_kHz_ms\n"
              % (p.omega, p.omega0, p.lambda_d, p.lambda_s, p.kappa,
                 p.n_atoms))
    if traj.diverged:
        buf.write("# diverged=true\n")
    names = ["a", "b1", "b2"]
    cols = ["t_ms"]
    for nm in names:
        cols += [f"re_{nm}", f"im_{nm}"]
    cols += ["jx1", "jx2", "jz1", "jz2", "jxjx_c", "jxjy_c"]
    buf.write(",".join(cols) + "\n")
    for st in traj.states:
        obs = spin_observables(st, p, b)
        row = [f"{st.time:.9g}"]
        for i in range(3):
            row += [f"{st.first[i].real:.12g}", f"{st.first[i].imag:.12g}"]
        row += [f"{obs.jx[0]:.12g}", f"{obs.jx[1]:.12g}",
                f"{obs.jz[0]:.12g}", f"{obs.jz[1]:.12g}",
                f"{obs.jxjx_c:.12g}", f"{obs.jxjy_c:.12g}"]
        buf.write(",".join(row) + "\n")
    return buf.getvalue()
