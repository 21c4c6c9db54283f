"""Model parameters, mean-field shift branches, and quadratic generators.

The physical system is a two-component condensate (modes b1, b2, each of
collective spin length N/2) coupled to one lossy cavity mode a. After the
collective-spin modes are bosonized and expanded around a (possibly
shifted) reference configuration, the generator is quadratic and is fully
described by three 3x3 coefficient blocks plus a residual linear term:

    h[i, j]  coefficient of  a_i^dag a_j   (Hermitian)
    k[i, j]  coefficient of  a_i a_j       (symmetric; full mixed second
             derivative stored in both slots)
    m[i, j]  dissipator bilinear, kappa at the cavity diagonal

Mode order is (a, b1, b2); doubled vectors use (a, b1, b2, a+, b1+, b2+).
Rates are angular kHz, time is ms, hbar = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize


class ModelError(Exception):
    pass


class RootFindingFailure(ModelError):
    """Multistart search exhausted its seed budget without any root."""


class NonvanishingLinearTerm(ModelError):
    """Requested expansion point does not null the linear generator term."""


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of the condensate-cavity model.

    All rates are angular frequencies in kHz. lambda_d couples the
    density (sum) spin quadrature to the cavity x-quadrature, lambda_s
    couples the spin (difference) quadrature to the p-quadrature.
    """

    omega: float
    omega0: float
    lambda_d: float
    lambda_s: float
    kappa: float
    n_atoms: float = 2000.0

    def __post_init__(self):
        if not all(np.isfinite([self.omega, self.omega0, self.lambda_d,
                                self.lambda_s, self.kappa, self.n_atoms])):
            raise ValueError("parameters must be finite reals")
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")
        if self.omega0 <= 0:
            raise ValueError("omega0 must be > 0")
        if self.n_atoms < 1:
            raise ValueError("n_atoms must be >= 1")

    @classmethod
    def from_v_phi(cls, v: float, phi_deg: float, omega: float, omega0: float,
                   kappa: float, n_atoms: float = 2000.0) -> "ModelParams":
        """Build from the polar coupling parametrization (V, phi)."""
        phi = math.radians(phi_deg)
        return cls(omega=omega, omega0=omega0,
                   lambda_d=v * math.cos(phi), lambda_s=v * math.sin(phi),
                   kappa=kappa, n_atoms=n_atoms)

    @property
    def v(self) -> float:
        return math.hypot(self.lambda_d, self.lambda_s)

    @property
    def phi_deg(self) -> float:
        return math.degrees(math.atan2(self.lambda_s, self.lambda_d))

    def with_kappa(self, kappa: float) -> "ModelParams":
        return replace(self, kappa=kappa)


@dataclass(frozen=True)
class MeanFieldBranch:
    """One stationary expansion point of the mean-field flow.

    alpha is the cavity displacement per sqrt(N); beta1, beta2 are the
    condensate displacements in the convention where beta*conj(beta)
    ranges over [0, 2] as the spin sweeps from south to north pole
    (<J_z>/N = (|beta|^2 - 1)/2).
    """

    alpha: complex
    beta1: complex
    beta2: complex
    kind: str = "Normal"
    physical: bool = True

    def shifts(self) -> np.ndarray:
        return np.array([self.alpha, self.beta1, self.beta2], dtype=complex)

    @property
    def max_shift(self) -> float:
        return float(np.max(np.abs(self.shifts())))


NORMAL_BRANCH = MeanFieldBranch(0j, 0j, 0j, kind="Normal", physical=True)


@dataclass
class QuadraticLiouvillian:
    """Quadratic open-system generator around a mean-field branch."""

    h: np.ndarray
    k: np.ndarray
    m: np.ndarray
    g: np.ndarray
    branch: MeanFieldBranch = NORMAL_BRANCH
    params: ModelParams | None = None

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=complex)
        self.k = np.asarray(self.k, dtype=complex)
        self.m = np.asarray(self.m, dtype=complex)
        self.g = np.asarray(self.g, dtype=complex)
        scale = max(np.max(np.abs(self.h)), np.max(np.abs(self.k)), 1.0)
        if np.max(np.abs(self.h - self.h.conj().T)) > 1e-9 * scale:
            raise ValueError("h must be Hermitian")
        if np.max(np.abs(self.k - self.k.T)) > 1e-9 * scale:
            raise ValueError("k must be symmetric")
        ev = np.linalg.eigvalsh(0.5 * (self.m + self.m.conj().T))
        if ev.min() < -1e-12 * max(1.0, abs(ev).max()):
            raise ValueError("m must be positive semidefinite")


# ---------------------------------------------------------------------------
# mean-field energy surface
#
# Classical variables x = (x0, x1, x2): cavity amplitude per sqrt(N) and
# the two spin variables with |x_i| <= 1 (x_i = beta_i / sqrt(2)).
# Energy per atom:
#   E = omega|x0|^2 + omega0(|x1|^2+|x2|^2) + g1 u(x1) + g2 u(x2),
#   u(x) = (x + x*) sqrt(1 - |x|^2),
#   g1 = 2 lD Re x0 - 2 lS Im x0,   g2 = 2 lD Re x0 + 2 lS Im x0.
# The cavity flow additionally carries the loss -kappa x0.
# ---------------------------------------------------------------------------


def _gammas(p: ModelParams) -> tuple[complex, complex]:
    # d g_i / d conj(x0)
    return p.lambda_d - 1j * p.lambda_s, p.lambda_d + 1j * p.lambda_s


def _gvals(p: ModelParams, x0: complex) -> tuple[float, float]:
    g1 = 2 * p.lambda_d * x0.real - 2 * p.lambda_s * x0.imag
    g2 = 2 * p.lambda_d * x0.real + 2 * p.lambda_s * x0.imag
    return g1, g2


def _u(x: complex) -> float:
    return (x + np.conj(x)).real * math.sqrt(max(0.0, 1.0 - abs(x) ** 2))


def _u_xbar(x: complex) -> complex:
    w = math.sqrt(max(1e-300, 1.0 - abs(x) ** 2))
    return (2 - 3 * abs(x) ** 2 - x ** 2) / (2 * w)


def _u_x(x: complex) -> complex:
    w = math.sqrt(max(1e-300, 1.0 - abs(x) ** 2))
    return (2 - 3 * abs(x) ** 2 - np.conj(x) ** 2) / (2 * w)


def _u_xx(x: complex) -> complex:
    w = math.sqrt(max(1e-300, 1.0 - abs(x) ** 2))
    return -np.conj(x) * (4 - 3 * abs(x) ** 2 + np.conj(x) ** 2) / (4 * w ** 3)


def _u_xxbar(x: complex) -> complex:
    w = math.sqrt(max(1e-300, 1.0 - abs(x) ** 2))
    return -(x + np.conj(x)).real * (4 - 3 * abs(x) ** 2) / (4 * w ** 3)


def classical_energy(p: ModelParams, x: np.ndarray) -> float:
    """Mean-field energy per atom at shift configuration x = (x0, x1, x2)."""
    g1, g2 = _gvals(p, x[0])
    return float(
        p.omega * abs(x[0]) ** 2
        + p.omega0 * (abs(x[1]) ** 2 + abs(x[2]) ** 2)
        + g1 * _u(x[1]) + g2 * _u(x[2])
    )


def mean_field_flow(p: ModelParams, x: np.ndarray) -> np.ndarray:
    """Stationarity defect of the shifted expansion point.

    Zero exactly when the linear term of the shifted generator cancels:
    dx0/dt = -i dE/dx0* - kappa x0 and dx_i/dt = -i dE/dx_i*.
    """
    x0, x1, x2 = complex(x[0]), complex(x[1]), complex(x[2])
    g1, g2 = _gvals(p, x0)
    gam1, gam2 = _gammas(p)
    f0 = -1j * (p.omega * x0 + gam1 * _u(x1) + gam2 * _u(x2)) - p.kappa * x0
    f1 = -1j * (p.omega0 * x1 + g1 * _u_xbar(x1))
    f2 = -1j * (p.omega0 * x2 + g2 * _u_xbar(x2))
    return np.array([f0, f1, f2], dtype=complex)


def shift_residual(p: ModelParams, branch: MeanFieldBranch) -> float:
    """Independent evaluation of the shift equations in beta variables.

    Written directly in the beta convention (beta = sqrt(2) x) rather
    than through mean_field_flow, so solver and checker share no code.
    """
    a = complex(branch.alpha)
    bs = [complex(branch.beta1), complex(branch.beta2)]
    ld, ls, w0 = p.lambda_d, p.lambda_s, p.omega0
    g = [2 * ld * a.real - 2 * ls * a.imag, 2 * ld * a.real + 2 * ls * a.imag]
    gam = [ld - 1j * ls, ld + 1j * ls]
    resid = []
    cav = 2 * (p.kappa + 1j * p.omega) * a
    for i, b in enumerate(bs):
        bb = (b * np.conj(b)).real
        if bb > 2:
            return float("inf")
        root = math.sqrt(max(0.0, 2 - bb))
        cav += 1j * gam[i] * (b + np.conj(b)).real * root
        resid.append(2 * w0 * b * root + g[i] * (4 - 3 * bb - b ** 2))
    resid.append(cav)
    return float(np.max(np.abs(resid)))


def _branch_from_x(x: np.ndarray, tol: float = 1e-8) -> MeanFieldBranch:
    a, x1, x2 = complex(x[0]), complex(x[1]), complex(x[2])
    b1, b2 = math.sqrt(2) * x1, math.sqrt(2) * x2
    if max(abs(a), abs(b1), abs(b2)) < tol:
        return NORMAL_BRANCH
    phys = (abs(b1) ** 2 <= 2 + 1e-12) and (abs(b2) ** 2 <= 2 + 1e-12)
    return MeanFieldBranch(alpha=a, beta1=b1, beta2=b2,
                           kind="Superradiant", physical=bool(phys))


def _flow_real(p: ModelParams, xr: np.ndarray) -> np.ndarray:
    x = xr[:3] + 1j * xr[3:]
    f = mean_field_flow(p, x)
    return np.concatenate([f.real, f.imag])


def _seed_list(p: ModelParams, n_random: int, rng: np.random.Generator):
    """Structured seeds plus random fill, as (x0, x1, x2) complex triples."""
    gam1, gam2 = _gammas(p)
    seeds = [np.zeros(3, dtype=complex)]
    grid = [-0.9, -0.6, -0.3, 0.3, 0.6, 0.9]
    denom = p.kappa + 1j * p.omega
    if abs(denom) < 1e-12:
        denom = 1.0
    for m1 in grid:
        for m2 in grid:
            u1, u2 = _u(m1), _u(m2)
            x0 = -1j * (gam1 * u1 + gam2 * u2) / denom
            seeds.append(np.array([x0, m1, m2], dtype=complex))
    for _ in range(n_random):
        re = rng.uniform(-0.95, 0.95, size=3)
        im = rng.uniform(-0.95, 0.95, size=3)
        seeds.append(re + 1j * im)
    return seeds


def solve_shift_equations(p: ModelParams, n_random: int = 40,
                          seed: int = 7, max_seeds: int = 10_000,
                          tol: float = 1e-10) -> list[MeanFieldBranch]:
    """Find all stationary expansion points of the mean-field flow.

    Multistart damped-Newton search over (Re, Im) of the three shift
    amplitudes. The trivial (Normal) branch is always included; solutions
    equal up to 1e-6 are merged, as are pairs related by the global
    sign flip (x1, x2) -> (-x1, -x2), x0 -> -x0 which generates the same
    quadratic expansion.

    Raises
    ------
    RootFindingFailure
        If no seed within the budget converges to any root.
    """
    rng = np.random.default_rng(seed)
    seeds = _seed_list(p, n_random, rng)[:max_seeds]
    found: list[np.ndarray] = []
    converged_any = False
    for s in seeds:
        xr0 = np.concatenate([s.real, s.imag])
        sol = optimize.root(lambda v: _flow_real(p, v), xr0, method="hybr",
                            tol=tol)
        if not sol.success:
            continue
        x = sol.x[:3] + 1j * sol.x[3:]
        if np.max(np.abs(mean_field_flow(p, x))) > 1e-8:
            continue
        if np.max(np.abs(x[1:])) > 1.0 + 1e-9:
            continue  # outside the spin sphere, never physical
        converged_any = True
        is_new = True
        for prev in found:
            if (np.max(np.abs(prev - x)) < 1e-6
                    or np.max(np.abs(prev + x)) < 1e-6):
                is_new = False
                break
        if is_new:
            found.append(x)
    if not converged_any:
        raise RootFindingFailure(
            f"no stationary point found from {len(seeds)} seeds")
    branches = [_branch_from_x(x) for x in found]
    # normal branch first, then by descending shift magnitude, stable order
    branches.sort(key=lambda b: (b.kind != "Normal", -b.max_shift,
                                 b.alpha.real, b.alpha.imag))
    if not any(b.kind == "Normal" for b in branches):
        branches.insert(0, NORMAL_BRANCH)
    return branches


def filter_physical_branches(
        branches: list[MeanFieldBranch]) -> list[MeanFieldBranch]:
    """Keep branches whose spin shifts stay on the physical Bloch sphere.

    Retains |beta_i|^2 in [0, 2] (spin expectation inside the sphere);
    marginally-outside values from roundoff are clipped into range.
    """
    out = []
    for b in branches:
        bb1 = abs(b.beta1) ** 2
        bb2 = abs(b.beta2) ** 2
        if bb1 <= 2 + 1e-9 and bb2 <= 2 + 1e-9:
            out.append(replace(b, physical=True))
    return out


def build_normal_liouvillian(p: ModelParams) -> QuadraticLiouvillian:
    """Quadratic generator of the unshifted (normal) expansion.

    h and k carry the bilinear coefficients of the bosonized Hamiltonian
    in mode order (a, b1, b2); m holds the single loss entry kappa at the
    cavity diagonal; the linear term g vanishes identically.
    """
    ld, ls = p.lambda_d, p.lambda_s
    h = np.array([
        [p.omega, ld - 1j * ls, ld + 1j * ls],
        [ld + 1j * ls, p.omega0, 0],
        [ld - 1j * ls, 0, p.omega0],
    ], dtype=complex)
    k = np.zeros((3, 3), dtype=complex)
    k[0, 1] = k[1, 0] = ld + 1j * ls
    k[0, 2] = k[2, 0] = ld - 1j * ls
    m = np.zeros((3, 3), dtype=complex)
    m[0, 0] = p.kappa
    return QuadraticLiouvillian(h=h, k=k, m=m, g=np.zeros(6, dtype=complex),
                                branch=NORMAL_BRANCH, params=p)


def build_superradiant_liouvillian(p: ModelParams, b: MeanFieldBranch,
                                   tol: float = 1e-8) -> QuadraticLiouvillian:
    """Quadratic generator expanded around a shifted branch.

    Coefficients are the exact second derivatives of the shifted energy
    surface (closed form); the dissipator is unchanged by the shift. The
    k block stores the full mixed derivative d2E/dx_i dx_j in both
    symmetric slots, so the zero-shift limit reproduces
    build_normal_liouvillian entry for entry.

    Raises
    ------
    NonvanishingLinearTerm
        When the branch does not actually null the linear term.
    """
    x = b.shifts()
    x[1] /= math.sqrt(2)
    x[2] /= math.sqrt(2)
    flow = mean_field_flow(p, x)
    gnorm = float(np.max(np.abs(flow)))
    scale = max(abs(p.omega), p.omega0, abs(p.lambda_d), abs(p.lambda_s),
                p.kappa, 1.0)
    if gnorm > tol * scale:
        raise NonvanishingLinearTerm(
            f"linear residual {gnorm:.3e} at the requested branch")
    if max(abs(x[1]), abs(x[2])) > 1 - 1e-9:
        raise NonvanishingLinearTerm(
            "branch sits on the sphere boundary; expansion is singular")

    x0, x1, x2 = x
    g1, g2 = _gvals(p, x0)
    gam = _gammas(p)
    gv = (g1, g2)
    h = np.zeros((3, 3), dtype=complex)
    k = np.zeros((3, 3), dtype=complex)
    h[0, 0] = p.omega
    for j, xj in enumerate((x1, x2)):
        ux = _u_x(xj)
        h[0, j + 1] = gam[j] * ux
        h[j + 1, 0] = np.conj(gam[j] * ux)
        h[j + 1, j + 1] = p.omega0 + gv[j] * _u_xxbar(xj)
        k[0, j + 1] = k[j + 1, 0] = np.conj(gam[j]) * ux
        k[j + 1, j + 1] = gv[j] * _u_xx(xj)
    m = np.zeros((3, 3), dtype=complex)
    m[0, 0] = p.kappa
    g = np.concatenate([flow, flow.conj()])
    return QuadraticLiouvillian(h=h, k=k, m=m, g=g, branch=b, params=p)


# -- parameter files --------------------------------------------------------

_PARAM_KEYS = {"omega", "omega0", "lambda_d", "lambda_s", "kappa",
               "n_atoms", "v", "phi_deg"}


def parse_params_text(text: str) -> ModelParams:
    """Parse a flat key-value parameter document.

    Accepts lines of the form ``key = value`` or ``key: value``; blank
    lines and #-comments ignored. Couplings are given either directly
    (lambda_d, lambda_s) or in polar form (v, phi_deg), never both.
    """
    vals: dict[str, float] = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        for sep in ("=", ":"):
            if sep in line:
                key, _, val = line.partition(sep)
                break
        else:
            raise ValueError(f"line {ln}: expected 'key = value', got {raw!r}")
        key = key.strip().lower()
        if key not in _PARAM_KEYS:
            raise ValueError(f"line {ln}: unknown key {key!r}")
        if key in vals:
            raise ValueError(f"line {ln}: duplicate key {key!r}")
        try:
            vals[key] = float(val.strip())
        except ValueError as exc:
            raise ValueError(f"line {ln}: bad number for {key!r}") from exc

    polar = {"v", "phi_deg"} & vals.keys()
    cart = {"lambda_d", "lambda_s"} & vals.keys()
    if polar and cart:
        raise ValueError("give (v, phi_deg) or (lambda_d, lambda_s), not both")
    if len(polar) == 1 or len(cart) == 1:
        raise ValueError("coupling specification incomplete")
    if not polar and not cart:
        raise ValueError("missing couplings: (v, phi_deg) or (lambda_d, lambda_s)")
    for req in ("omega", "omega0", "kappa"):
        if req not in vals:
            raise ValueError(f"missing required key {req!r}")
    n_atoms = vals.get("n_atoms", 2000.0)
    if polar:
        return ModelParams.from_v_phi(vals["v"], vals["phi_deg"],
                                      omega=vals["omega"], omega0=vals["omega0"],
                                      kappa=vals["kappa"], n_atoms=n_atoms)
    return ModelParams(omega=vals["omega"], omega0=vals["omega0"],
                       lambda_d=vals["lambda_d"], lambda_s=vals["lambda_s"],
                       kappa=vals["kappa"], n_atoms=n_atoms)


def load_params(path) -> ModelParams:
    """Load ModelParams from a flat key-value file."""
    with open(path, "r", encoding="utf-8") as fh:
        return parse_params_text(fh.read())
