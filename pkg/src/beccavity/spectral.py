"""Spectral decomposition of the quadratic generator.

The quadratic open-system generator is diagonalized through a 6x6
structure matrix X whose eigenvalues (the rapidities chi_k) generate the
full eigenvalue lattice lambda = -2 sum_r n_r chi_r. The stationary
Gaussian two-point data Z solves the Sylvester equation X^T Z + Z X = Y.

Z stores normally ordered moments: with the doubled vector
v = (a, b1, b2, a+, b1+, b2+), Z[i, 3+j] = <a_j+ a_i>, Z[i, j] = <a_i a_j>,
Z[3+i, 3+j] = <a_i+ a_j+>. Symmetric-ordered covariances are obtained by
adding the half-identity corner blocks (see moments module).
"""

from __future__ import annotations

import io
import itertools
import json
import warnings
from dataclasses import dataclass

import numpy as np

from . import linalg
from .linalg import NonDiagonalizable, SingularPencil
from .model import ModelParams, QuadraticLiouvillian


@dataclass
class StructureMatrices:
    """Doubled-space structure blocks of the generator."""

    x: np.ndarray
    y: np.ndarray
    kappa: float = 0.0


@dataclass
class SpectralData:
    """Rapidities and stationary Gaussian data of one generator.

    covariance is None when the Sylvester pencil is singular, which is
    the generic situation in unstable phases (no stationary Gaussian
    state exists).
    """

    rapidities: np.ndarray
    mode_matrix: np.ndarray | None
    covariance: np.ndarray | None
    diagonalizable: bool
    kappa: float = 0.0


@dataclass
class EigenvalueLattice:
    """Occupation-labelled eigenvalues lambda = -2 sum n_r chi_r."""

    entries: list  # (n_vector tuple, complex lambda)


def _sort_rapidities(vals: np.ndarray, vecs: np.ndarray | None = None):
    # descending real part, then ascending imaginary part
    order = np.lexsort((vals.imag, -vals.real))
    if vecs is None:
        return vals[order], None
    return vals[order], vecs[:, order]


def assemble_structure(l: QuadraticLiouvillian) -> StructureMatrices:
    """Build the doubled structure matrices X and Y from (h, k, m).

    X = 1/2 [[i h* + m, -2i k], [2i k*, -i h + m*]],
    Y = 1/2 [[-2i k*, 0], [0, 2i k]].
    """
    h, k, m = l.h, l.k, l.m
    x = 0.5 * np.block([
        [1j * h.conj() + m, -2j * k],
        [2j * k.conj(), -1j * h + m.conj()],
    ])
    z3 = np.zeros_like(k)
    y = 0.5 * np.block([
        [-2j * k.conj(), z3],
        [z3, 2j * k],
    ])
    kappa = l.params.kappa if l.params is not None else float(m[0, 0].real)
    return StructureMatrices(x=x, y=y, kappa=kappa)


def rapidities(s: StructureMatrices) -> SpectralData:
    """Diagonalize X and solve for the stationary two-point data.

    At exceptional points the rapidities are still reported from the
    eigenvalues (diagonalizable=False); the covariance is attempted via
    the Sylvester solve and marked absent on a singular pencil.
    """
    diag = True
    vecs = None
    try:
        vals, vecs = linalg.eig_complex(s.x)
    except NonDiagonalizable:
        vals = linalg.eigvals_complex(s.x)
        diag = False
    vals, vecs = _sort_rapidities(vals, vecs)
    cov = None
    try:
        cov = linalg.solve_sylvester(s.x, s.x, s.y)
    except SingularPencil:
        cov = None
    return SpectralData(rapidities=vals, mode_matrix=vecs, covariance=cov,
                        diagonalizable=diag, kappa=s.kappa)


def normal_rapidity_polynomial(p: ModelParams) -> np.ndarray:
    """Degree-6 rapidity polynomial of the unshifted generator.

    Returns ascending-degree coefficients c[0..6]; the rapidities of the
    normal-phase structure matrix are exactly its roots.
    """
    ld, ls = p.lambda_d, p.lambda_s
    om, om0, kap = p.omega, p.omega0, p.kappa
    v2 = ld ** 2 + ls ** 2
    c = np.zeros(7, dtype=complex)
    c[6] = 64.0
    c[5] = -64.0 * kap
    c[4] = 16.0 * (-12 * v2 + kap ** 2 + om ** 2 + 2 * om0 ** 2)
    c[3] = 96.0 * kap * v2 - 32.0 * kap * om0 ** 2
    c[2] = 4.0 * (2 * om0 ** 2 * (-6 * v2 + kap ** 2 + om ** 2)
                  - 20 * om * om0 * v2 + 36 * v2 ** 2 + om0 ** 4)
    c[1] = 24.0 * kap * om0 ** 2 * v2 - 4.0 * kap * om0 ** 4
    c[0] = om0 ** 2 * (-20 * om * om0 * v2
                       + 4 * (9 * ld ** 2 + ls ** 2) * (ld ** 2 + 9 * ls ** 2)
                       + om0 ** 2 * (kap ** 2 + om ** 2))
    return c


def superradiant_gamma_sq(sd: SpectralData, rel_tol: float = 1e-9) -> float:
    """Slow-decay scale Gamma^2 extracted from the rapidity real parts.

    Defined as kappa/2 times the smallest nonzero rapidity real-part
    magnitude; used where no closed-form coupling expression exists.
    """
    re = np.abs(sd.rapidities.real)
    scale = max(np.max(re), 1.0)
    nz = re[re > rel_tol * scale]
    if nz.size == 0:
        return 0.0
    return 0.5 * sd.kappa * float(np.min(nz))


def large_kappa_eigenvalue(p: ModelParams, n1: int, n2: int,
                           gamma_sq: float | None = None) -> complex:
    """Leading large-loss form of a lattice eigenvalue.

    Returns i n1 omega0 + 2 n2 Gamma^2 / kappa. In the unshifted case
    Gamma^2 = lambda_d^2 + lambda_s^2; for a shifted branch pass the
    numerically extracted gamma_sq (see superradiant_gamma_sq).
    """
    if p.kappa < 10 * p.omega0:
        warnings.warn("large-loss expansion used below kappa/omega0 = 10",
                      stacklevel=2)
    if gamma_sq is None:
        gamma_sq = p.lambda_d ** 2 + p.lambda_s ** 2
    return 1j * n1 * p.omega0 + 2.0 * n2 * gamma_sq / p.kappa


def eigenvalue_lattice(sd: SpectralData,
                       max_total_occupation: int) -> EigenvalueLattice:
    """Enumerate lattice eigenvalues up to a total occupation cap.

    Raises
    ------
    NonDiagonalizable
        Refused at exceptional points; a Jordan lattice would not be a
        simple occupation sum.
    """
    if not sd.diagonalizable:
        raise NonDiagonalizable("lattice undefined at an exceptional point")
    chis = sd.rapidities
    entries = []
    cap = int(max_total_occupation)
    for total in range(cap + 1):
        for n in _compositions(total, len(chis)):
            lam = -2.0 * complex(np.dot(n, chis))
            entries.append((n, lam))
    entries.sort(key=lambda e: (-e[1].real, e[1].imag, e[0]))
    return EigenvalueLattice(entries=entries)


def _compositions(total: int, length: int):
    """All nonnegative integer vectors of given length summing to total."""
    if length == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _compositions(total - head, length - 1):
            yield (head,) + rest


# -- exports ----------------------------------------------------------------

def lattice_to_csv(lat: EigenvalueLattice) -> str:
    """CSV with the occupation vector and Re/Im of each eigenvalue."""
    buf = io.StringIO()
    nlen = len(lat.entries[0][0]) if lat.entries else 6
    cols = [f"n{i+1}" for i in range(nlen)] + ["re_lambda", "im_lambda"]
    buf.write(",".join(cols) + "\n")
    for n, lam in lat.entries:
        buf.write(",".join(str(v) for v in n))
        buf.write(f",{lam.real:.12g},{lam.imag:.12g}\n")
    return buf.getvalue()


def rapidities_to_json(sd: SpectralData) -> str:
    """Rapidities as a JSON array of [re, im] pairs."""
    pairs = [[float(c.real), float(c.imag)] for c in sd.rapidities]
    return json.dumps(pairs)


def match_root_sets(a, b) -> float:
    """Greedy bipartite max-distance between two equal-size root multisets.

    Pairing by sorted order misassigns conjugate pairs with equal real
    parts, so matching is done by repeatedly pairing the globally
    nearest remaining pair.
    """
    a = list(np.asarray(a, dtype=complex))
    b = list(np.asarray(b, dtype=complex))
    if len(a) != len(b):
        raise ValueError("root multisets differ in size")
    worst = 0.0
    while a:
        d = np.abs(np.subtract.outer(np.array(a), np.array(b)))
        i, j = np.unravel_index(np.argmin(d), d.shape)
        worst = max(worst, float(d[i, j]))
        a.pop(i)
        b.pop(j)
    return worst
