"""Dense complex linear algebra and ODE integration primitives.

Everything here is sized for the small dense problems that show up
downstream: 6 or 12 dimensional structure matrices, degree-6
polynomials, and Liouvillian matrices up to a few thousand rows.
Wrappers around numpy/scipy enforce the contracts the rest of the
package relies on (residual bounds, deterministic orderings, typed
errors).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp


class LinalgError(Exception):
    """Base class for kernel failures."""


class NonConvergence(LinalgError):
    """Eigen-iteration failed to converge."""


class NonDiagonalizable(LinalgError):
    """Eigenvector matrix too ill-conditioned to trust a similarity."""


class DegenerateLeadingCoefficient(LinalgError):
    """Polynomial has no usable leading coefficient."""


class SingularPencil(LinalgError):
    """Sylvester pencil is singular: spec(a^T) meets -spec(b)."""


class StepUnderflow(LinalgError):
    """Adaptive integrator needs steps below the resolvable floor."""


_COND_CAP = 1e12


def _as_square(m) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def sort_eigs(vals: np.ndarray, vecs: np.ndarray | None = None):
    """Sort eigenvalues lexicographically by (real, imag) ascending."""
    order = np.lexsort((vals.imag, vals.real))
    if vecs is None:
        return vals[order]
    return vals[order], vecs[:, order]


def eig_complex(m) -> tuple[np.ndarray, np.ndarray]:
    """Full eigendecomposition of a dense complex matrix.

    Parameters
    ----------
    m : (n, n) array_like
        Complex matrix.

    Returns
    -------
    vals : (n,) ndarray
        Eigenvalues sorted by (real, imaginary) ascending.
    vecs : (n, n) ndarray
        Unit-norm eigenvectors, column k belonging to vals[k].

    Raises
    ------
    NonConvergence
        If the QR iteration fails.
    NonDiagonalizable
        If the eigenvector matrix has condition number above 1e12,
        i.e. the matrix is (numerically) defective.
    """
    m = _as_square(m)
    try:
        vals, vecs = np.linalg.eig(m)
    except np.linalg.LinAlgError as exc:
        raise NonConvergence(str(exc)) from exc
    cond = np.linalg.cond(vecs)
    if not np.isfinite(cond) or cond > _COND_CAP:
        raise NonDiagonalizable(f"eigenvector condition number {cond:.3e}")
    vals, vecs = sort_eigs(vals, vecs)
    # residual check keeps silent LAPACK misbehaviour from propagating
    scale = max(np.linalg.norm(m), 1.0)
    resid = np.linalg.norm(m @ vecs - vecs * vals[None, :])
    if resid > 1e-10 * scale * m.shape[0]:
        raise NonConvergence(f"eigen residual {resid:.3e} exceeds tolerance")
    return vals, vecs


def eigvals_complex(m) -> np.ndarray:
    """Eigenvalues only, sorted by (real, imag); no diagonalizability demand."""
    m = _as_square(m)
    try:
        vals = np.linalg.eigvals(m)
    except np.linalg.LinAlgError as exc:
        raise NonConvergence(str(exc)) from exc
    return sort_eigs(vals)


def poly_roots(coeffs) -> np.ndarray:
    """Roots of a polynomial given ascending-degree coefficients.

    Parameters
    ----------
    coeffs : sequence of complex
        c[0] + c[1] z + ... + c[n] z^n.

    Returns
    -------
    (n,) ndarray
        Roots after one Newton polish step, sorted by (real, imag).

    Raises
    ------
    DegenerateLeadingCoefficient
        If, after stripping negligible leading terms, degree < 1.
    """
    c = np.asarray(coeffs, dtype=complex)
    if c.ndim != 1 or c.size == 0:
        raise DegenerateLeadingCoefficient("empty coefficient vector")
    scale = np.max(np.abs(c))
    if scale == 0:
        raise DegenerateLeadingCoefficient("zero polynomial")
    # strip leading (highest-degree) coefficients that are numerically zero
    keep = np.nonzero(np.abs(c) > 1e-14 * scale)[0]
    if keep.size == 0 or keep[-1] == 0:
        raise DegenerateLeadingCoefficient("degree < 1 after normalization")
    c = c[: keep[-1] + 1]
    roots = np.roots(c[::-1])
    dp = np.polyder(np.poly1d(c[::-1]))
    p = np.poly1d(c[::-1])
    dpr = dp(roots)
    good = np.abs(dpr) > 1e-30
    polished = roots.copy()
    polished[good] = roots[good] - p(roots[good]) / dpr[good]
    # keep the polish only where it actually helped
    worse = np.abs(p(polished)) > np.abs(p(roots))
    polished[worse] = roots[worse]
    return sort_eigs(polished)


def polyval(coeffs, z):
    """Evaluate ascending-degree coefficients at z (scalar or array)."""
    c = np.asarray(coeffs, dtype=complex)
    return np.polyval(c[::-1], z)


def solve_sylvester(a, b, c) -> np.ndarray:
    """Solve a^T Z + Z b = c for Z.

    Parameters
    ----------
    a, b : square array_like
    c : array_like, shape (a.n, b.n)

    Returns
    -------
    ndarray
        Z with residual norm at most 1e-9 * norm(c).

    Raises
    ------
    SingularPencil
        When an eigenvalue of a^T equals the negative of an eigenvalue
        of b, so the pencil has no unique solution. Downstream this
        signals an undamped or unstable mode with no stationary
        covariance.
    """
    a = _as_square(a)
    b = _as_square(b)
    c = np.asarray(c, dtype=complex)
    at = a.T
    la = eigvals_complex(at)
    lb = eigvals_complex(b)
    sep = np.abs(la[:, None] + lb[None, :])
    scale = max(np.max(np.abs(la)), np.max(np.abs(lb)), 1.0)
    if np.min(sep) < 1e-12 * scale:
        raise SingularPencil(
            f"spectra separation {np.min(sep):.3e} below tolerance"
        )
    z = scipy.linalg.solve_sylvester(at, b, c)
    cnorm = np.linalg.norm(c)
    resid = np.linalg.norm(at @ z + z @ b - c)
    if cnorm > 0 and resid > 1e-9 * max(cnorm, np.linalg.norm(z) * scale):
        raise SingularPencil(f"solve residual {resid:.3e} too large")
    return z


@dataclass
class Trajectory:
    """Sampled solution of an ODE initial-value problem.

    Attributes
    ----------
    t : (m,) ndarray
        Sample times actually covered (may stop early on divergence).
    y : (n, m) ndarray
        State at each sample time.
    diverged : bool
        True when integration was cut short by step underflow or a
        norm guard; t/y then hold the partial trajectory.
    message : str
        Integrator disposition, for logs.
    """

    t: np.ndarray
    y: np.ndarray
    diverged: bool = False
    message: str = ""
    events: list = field(default_factory=list)


def integrate_ode(rhs, y0, t_span, tol=1e-9, t_eval=None, norm_guard=None,
                  max_step=np.inf) -> Trajectory:
    """Adaptively integrate dy/dt = rhs(t, y) over complex state vectors.

    Parameters
    ----------
    rhs : callable(t, y) -> dy
    y0 : array_like
        Initial state (complex allowed).
    t_span : (t0, t1)
    tol : float
        Local error tolerance per step (both rtol and atol scale).
    t_eval : array_like, optional
        Dense-output sample times. Defaults to 200 uniform points.
    norm_guard : float, optional
        Terminate (flag diverged) when max|y| exceeds this value.

    Returns
    -------
    Trajectory

    Raises
    ------
    StepUnderflow
        Only when not even a partial trajectory could be produced.
    """
    y0 = np.asarray(y0, dtype=complex)
    t0, t1 = float(t_span[0]), float(t_span[1])
    span = abs(t1 - t0)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if t_eval is None:
        t_eval = np.linspace(t0, t1, 200)
    t_eval = np.asarray(t_eval, dtype=float)

    events = None
    if norm_guard is not None:
        def hit_guard(t, y):
            return np.max(np.abs(y)) - norm_guard
        hit_guard.terminal = True
        hit_guard.direction = 1
        events = [hit_guard]

    sol = solve_ivp(
        rhs, (t0, t1), y0, method="RK45", t_eval=t_eval,
        rtol=tol, atol=tol * 1e-2, max_step=max_step, events=events,
    )
    guard_hit = events is not None and len(sol.t_events[0]) > 0
    if sol.success or guard_hit:
        return Trajectory(
            t=sol.t, y=sol.y, diverged=guard_hit,
            message="guard" if guard_hit else sol.message,
        )
    # failure: solve_ivp stops when the step drops below ~1e-14*span
    if sol.t.size == 0:
        raise StepUnderflow(sol.message)
    return Trajectory(t=sol.t, y=sol.y, diverged=True, message=sol.message)
