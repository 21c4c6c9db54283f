"""Tests for model parameters, quadratic generators, and mean-field shifts."""

import numpy as np
import numpy.testing as npt
import pytest

from beccavity import model
from beccavity.model import ModelParams, NORMAL_BRANCH


FIG1 = ModelParams.from_v_phi(121.65, 37.0, 30.0, 7.4, 1250.0, 2000)


# ---------------------------------------------------------------- params


def test_params_polar_roundtrip():
    p = ModelParams.from_v_phi(121.65, 37.0, 30.0, 7.4, 1250.0, 2000)
    npt.assert_allclose(p.v, 121.65, rtol=1e-12)
    npt.assert_allclose(p.phi_deg, 37.0, rtol=1e-12)
    npt.assert_allclose(np.hypot(p.lambda_d, p.lambda_s), 121.65, rtol=1e-12)


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(10.0, 7.4, 1.0, 1.0, -1.0)
    with pytest.raises(ValueError):
        ModelParams(10.0, 0.0, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        ModelParams(10.0, 7.4, 1.0, 1.0, 1.0, n_atoms=0.0)
    with pytest.raises(ValueError):
        ModelParams(np.nan, 7.4, 1.0, 1.0, 1.0)


# ---------------------------------------------------------------- parser


def test_parse_params_text_equals_and_colon():
    text = """
omega = 46.0
omega0: 7.4
kappa = 1250
v = 121.65
phi_deg = 37
"""
    p = model.parse_params_text(text)
    npt.assert_allclose(p.omega, 46.0)
    npt.assert_allclose(p.v, 121.65, rtol=1e-12)
    npt.assert_allclose(p.phi_deg, 37.0, rtol=1e-12)
    npt.assert_allclose(p.n_atoms, 2000.0)  # default


def test_parse_params_text_cartesian():
    p = model.parse_params_text(
        "omega=46\nomega0=7.4\nkappa=0\nlambda_d=3.0\nlambda_s=4.0\n")
    npt.assert_allclose(p.v, 5.0, rtol=1e-12)


def test_parse_params_text_unknown_key():
    with pytest.raises(ValueError, match=r"line 6: unknown key 'wat'"):
        model.parse_params_text(
            "\nomega=46\nomega0=7.4\nkappa=0\nv=1\nwat=3\nphi_deg=0\n")


def test_parse_params_text_bad_number():
    with pytest.raises(ValueError, match=r"line 5: bad number for 'kappa'"):
        model.parse_params_text(
            "\nomega=46\nomega0=7.4\nv=1\nkappa=abc\nphi_deg=0\n")


def test_parse_params_text_mixed_coupling_forms():
    with pytest.raises(ValueError,
                       match=r"give \(v, phi_deg\) or \(lambda_d, lambda_s\), not both"):
        model.parse_params_text(
            "omega=46\nomega0=7.4\nkappa=0\nv=1\nphi_deg=0\nlambda_d=1\nlambda_s=0\n")


def test_parse_params_text_incomplete_coupling():
    with pytest.raises(ValueError, match="coupling specification incomplete"):
        model.parse_params_text("omega=46\nomega0=7.4\nkappa=0\nv=1\n")


def test_parse_params_text_duplicate_key():
    with pytest.raises(ValueError, match=r"line 2: duplicate key 'omega'"):
        model.parse_params_text("omega=46\nomega=47\nomega0=7.4\nkappa=0\nv=1\nphi_deg=0\n")


def test_load_params_file(tmp_path):
    f = tmp_path / "p.txt"
    f.write_text("omega=46\nomega0=7.4\nkappa=10\nv=2\nphi_deg=30\n")
    p = model.load_params(f)
    npt.assert_allclose(p.kappa, 10.0)


# ---------------------------------------------------------------- normal generator


def test_normal_generator_coupling_entries():
    p = ModelParams(46.0, 7.4, 3.0, 4.0, 10.0, 2000)
    l = model.build_normal_liouvillian(p)
    npt.assert_allclose(l.h[0, 0], 46.0)
    npt.assert_allclose(l.h[1, 1], 7.4)
    npt.assert_allclose(l.h[2, 2], 7.4)
    npt.assert_allclose(l.h[0, 1], 3.0 - 4.0j)
    npt.assert_allclose(l.h[0, 2], 3.0 + 4.0j)
    npt.assert_allclose(l.h[1, 2], 0.0)
    npt.assert_allclose(l.k[0, 1], 3.0 + 4.0j)
    npt.assert_allclose(l.k[0, 2], 3.0 - 4.0j)
    npt.assert_allclose(l.k[1, 2], 0.0)
    npt.assert_allclose(np.diag(l.k), 0.0)
    # loss matrix has the single cavity entry
    expect_m = np.zeros((3, 3))
    expect_m[0, 0] = 10.0
    npt.assert_allclose(l.m, expect_m)
    npt.assert_allclose(l.g, 0.0)


def test_normal_generator_structure_constraints():
    l = model.build_normal_liouvillian(FIG1)
    npt.assert_allclose(l.h, l.h.conj().T, atol=1e-14)
    npt.assert_allclose(l.k, l.k.T, atol=1e-14)
    w = np.linalg.eigvalsh(l.m)
    assert np.min(w) >= -1e-12


def test_normal_generator_decoupled_is_diagonal():
    p = ModelParams(11.0, 7.4, 0.0, 0.0, 3.0, 2000)
    l = model.build_normal_liouvillian(p)
    npt.assert_allclose(l.h, np.diag([11.0, 7.4, 7.4]))
    npt.assert_allclose(l.k, 0.0)


def test_quadratic_liouvillian_validation():
    l = model.build_normal_liouvillian(FIG1)
    bad_h = l.h.copy()
    bad_h[0, 1] += 1.0  # breaks hermiticity
    with pytest.raises(ValueError, match="Hermitian"):
        model.QuadraticLiouvillian(bad_h, l.k, l.m, l.g, l.branch, l.params)
    bad_k = l.k.copy()
    bad_k[0, 1] += 1.0  # breaks symmetry
    with pytest.raises(ValueError):
        model.QuadraticLiouvillian(l.h, bad_k, l.m, l.g, l.branch, l.params)


# ---------------------------------------------------------------- energy / flow


def test_classical_energy_real_valued():
    p = ModelParams(10.0, 7.4, 2.0, 0.0, 0.0, 2000)
    x = np.array([1.0 + 0.0j, 0.5j, -0.5j])
    e = complex(model.classical_energy(p, x))
    assert abs(e.imag) <= 1e-12
    assert np.isfinite(e.real)


def test_mean_field_flow_is_wirtinger_gradient_of_energy():
    # flow = -i dE/d(conj x) - kappa * x0 on the cavity component
    p = ModelParams.from_v_phi(8.0, 25.0, 46.0, 7.4, 30.0, 2000)
    rng = np.random.default_rng(9)
    x = rng.normal(size=3) + 1j * rng.normal(size=3)
    f = model.mean_field_flow(p, x)
    h = 1e-6
    grad = np.zeros(3, dtype=complex)
    for i in range(3):
        for part, w in ((1.0, 0.5), (1.0j, 0.5j)):
            dx = np.zeros(3, dtype=complex)
            dx[i] = h * part
            de = (model.classical_energy(p, x + dx)
                  - model.classical_energy(p, x - dx)) / (2 * h)
            grad[i] += w * de
    expect = -1j * grad
    expect[0] -= p.kappa * x[0]
    npt.assert_allclose(f, expect, atol=1e-5)


# ---------------------------------------------------------------- shifts


def test_trivial_branch_always_first():
    branches = model.solve_shift_equations(FIG1)
    b0 = branches[0]
    assert b0.kind == "Normal"
    npt.assert_allclose([b0.alpha, b0.beta1, b0.beta2], 0.0, atol=1e-14)


def test_branch_residuals_vanish():
    branches = model.solve_shift_equations(FIG1)
    assert len(branches) >= 2  # superradiant roots exist here
    for b in branches:
        assert model.shift_residual(FIG1, b) <= 1e-8


def test_branches_are_deduplicated():
    branches = model.solve_shift_equations(FIG1)
    pts = [np.array([b.alpha, b.beta1, b.beta2]) for b in branches]
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            assert np.linalg.norm(pts[i] - pts[j]) > 1e-6


def test_closed_symmetric_branch_analytic():
    # closed system, phi = 0: |beta|^2 = 1 - omega*omega0 / (8 V^2)
    p = ModelParams.from_v_phi(5.0, 0.0, 10.0, 7.4, 0.0, 2000)
    branches = model.filter_physical_branches(model.solve_shift_equations(p))
    sr = [b for b in branches if b.kind == "Superradiant"]
    assert sr
    target = 1.0 - 10.0 * 7.4 / (8.0 * 25.0)
    best = min(sr, key=lambda b: abs(abs(b.beta1) ** 2 - target))
    npt.assert_allclose(abs(best.beta1) ** 2, 0.63, atol=1e-9)
    npt.assert_allclose(abs(best.beta2) ** 2, 0.63, atol=1e-9)
    npt.assert_allclose(abs(best.alpha), 0.9290317540321215, atol=1e-9)
    assert abs(best.alpha.imag) <= 1e-9  # real at phi = 0


def test_lossy_branch_matches_energy_minimisation():
    # frozen against a direct Nelder-Mead minimisation of |mean_field_flow|^2
    p = ModelParams.from_v_phi(8.0, 0.0, 46.0, 7.4, 30.0, 2000)
    branches = model.filter_physical_branches(model.solve_shift_equations(p))
    sr = [b for b in branches if b.kind == "Superradiant"]
    assert sr
    b = min(sr, key=lambda b: abs(b.beta1 - (-0.22886178665579962)))
    npt.assert_allclose(b.beta1, -0.22886178665579962, atol=1e-6)
    npt.assert_allclose(b.beta2, -0.22886178665579962, atol=1e-6)
    npt.assert_allclose(b.alpha, 0.07794210460117533 + 0.050831807348592606j,
                        atol=1e-6)


def test_shifts_vanish_at_large_loss():
    # superradiance needs V^2 > omega0 sqrt(kappa^2 + omega^2) / something finite;
    # at fixed V the condensate shift dies as kappa grows
    for kappa, expect_sr in ((2e3, True), (2e4, False), (2e5, False)):
        p = ModelParams.from_v_phi(121.65, 37.0, 30.0, 7.4, kappa, 2000)
        branches = model.filter_physical_branches(model.solve_shift_equations(p))
        shifts = max((abs(b.beta1) for b in branches), default=0.0)
        if expect_sr:
            assert shifts > 0.5
        else:
            assert len(branches) == 1
            npt.assert_allclose(shifts, 0.0, atol=1e-12)


def test_filter_removes_unphysical_branch():
    fake = model.MeanFieldBranch(alpha=0.1 + 0j, beta1=np.sqrt(3.0) + 0j,
                                 beta2=0.2 + 0j, kind="Superradiant", physical=True)
    kept = model.filter_physical_branches([NORMAL_BRANCH, fake])
    assert len(kept) == 1
    assert kept[0].kind == "Normal"


# ---------------------------------------------------------------- shifted generator


def test_superradiant_generator_on_normal_branch_matches_normal():
    l0 = model.build_normal_liouvillian(FIG1)
    l1 = model.build_superradiant_liouvillian(FIG1, NORMAL_BRANCH)
    npt.assert_allclose(l1.h, l0.h, atol=1e-12)
    npt.assert_allclose(l1.k, l0.k, atol=1e-12)
    npt.assert_allclose(l1.m, l0.m, atol=1e-12)


def test_superradiant_generator_matches_energy_hessian():
    # h is the mixed Wirtinger Hessian of the classical energy at the shifted
    # point, k the holomorphic one; check by central finite differences
    branches = model.filter_physical_branches(model.solve_shift_equations(FIG1))
    b = next(b for b in branches if b.kind == "Superradiant")
    l = model.build_superradiant_liouvillian(FIG1, b)
    x0 = np.array([b.alpha, b.beta1 / np.sqrt(2.0), b.beta2 / np.sqrt(2.0)])

    h = 1e-5
    hr = np.zeros((6, 6))
    def e_real(u):
        x = x0 + u[:3] + 1j * u[3:]
        return float(np.real(model.classical_energy(FIG1, x)))
    for i in range(6):
        for j in range(6):
            u = np.zeros(6)
            u[i] += h
            u[j] += h
            epp = e_real(u)
            u[j] -= 2 * h
            epm = e_real(u)
            u[i] -= 2 * h
            u[j] += 2 * h
            emp = e_real(u)
            u[j] -= 2 * h
            emm = e_real(u)
            hr[i, j] = (epp - epm - emp + emm) / (4 * h * h)
    hrr, hii = hr[:3, :3], hr[3:, 3:]
    hri, hir = hr[:3, 3:], hr[3:, :3]
    mixed = 0.25 * ((hrr + hii) + 1j * (hir - hri))
    holo = 0.25 * ((hrr - hii) - 1j * (hri + hir))
    scale = np.max(np.abs(l.h))
    npt.assert_allclose(l.h, mixed, atol=1e-4 * scale)
    npt.assert_allclose(l.k, holo, atol=1e-4 * scale)


def test_superradiant_generator_continuous_in_shift():
    # scaling the shifts towards zero takes the generator to the normal one,
    # linearly in the scale
    l0 = model.build_normal_liouvillian(FIG1)
    branches = model.filter_physical_branches(model.solve_shift_equations(FIG1))
    b = next(b for b in branches if b.kind == "Superradiant")
    devs = []
    for s in (0.3, 0.03, 0.003):
        bs = model.MeanFieldBranch(alpha=s * b.alpha, beta1=s * b.beta1,
                                   beta2=s * b.beta2, kind="Superradiant",
                                   physical=True)
        ls = model.build_superradiant_liouvillian(FIG1, bs, tol=1e18)
        devs.append(max(np.max(np.abs(ls.h - l0.h)), np.max(np.abs(ls.k - l0.k))))
    assert devs[0] > devs[1] > devs[2]
    assert devs[2] < 2e-3


def test_superradiant_generator_rejects_non_stationary_point():
    junk = model.MeanFieldBranch(alpha=0.3 + 0j, beta1=0.4 + 0j, beta2=0.1 + 0j,
                                 kind="Superradiant", physical=True)
    with pytest.raises(model.NonvanishingLinearTerm):
        model.build_superradiant_liouvillian(FIG1, junk)
