import math

import numpy as np
import pytest
from scipy.integrate import lebedev_rule, quad as quad1
from scipy.linalg import eigh, null_space

from binarykin.collision import AngularKernel, QuadratureSpec
from binarykin.equilibrium import bimaxwellian_on_grid, build_invariant_basis
from binarykin.errors import AssemblyError, ConfigurationError, ContractError
from binarykin.kinematics import MassPair
from binarykin.linop import (KernelSplitConfig, apply_K, assemble_L, collocation_matrix, estimate_coercivity,
                             eval_nu, frequency_matrix, ks_ratio, nu_on_grid, probe_derivative_estimates,
                             split_Ks_Kc)
from binarykin.vgrid import MultiIndex, VelocityGrid

M11 = MassPair(1.0, 1.0)
M78 = MassPair(7.0, 8.0)


@pytest.fixture(scope="module")
def L78():
    g = VelocityGrid.for_masses(7.0, 7)
    basis = build_invariant_basis(M78, g)
    return assemble_L(M78, AngularKernel(), QuadratureSpec(), g, basis), basis


def _nu_spherical(masses, gamma, v, kernel_total=2 * math.pi):
    """Frequency by spherical coordinates centred at v: Lebedev in angle, adaptive in radius."""
    x, w = lebedev_rule(59)
    v = np.asarray(v, dtype=float)
    total = 0.0
    for m in (masses.m_alpha, masses.m_beta):
        def radial(r):
            p = v[:, None] + r * x
            mu = (m / (2 * math.pi)) ** 1.5 * np.exp(-0.5 * m * np.sum(p * p, axis=0))
            return r ** (2 + gamma) * np.sum(w * mu)
        val, _ = quad1(radial, 0, np.linalg.norm(v) + 30 / math.sqrt(m), limit=200, epsabs=1e-13, epsrel=1e-11)
        total += val
    return kernel_total * total


# ------------------------------------------------------------------- nu


def test_nu_closed_form_at_origin(kernel):
    q = QuadratureSpec(gamma=-1.0)
    per_beta = 2 * math.pi * math.sqrt(2 / math.pi)
    assert per_beta == pytest.approx(5.013256549, rel=1e-9)
    assert eval_nu(M11, kernel, q, "A", [0, 0, 0]) == pytest.approx(2 * per_beta, rel=1e-10)
    assert eval_nu(M11, kernel, q, "B", [0, 0, 0]) == pytest.approx(10.026513098, rel=1e-9)


@pytest.mark.parametrize("gamma", [-0.5, -1.0, -2.0])
@pytest.mark.parametrize("v", [[0.3, 0.0, 0.0], [1.0, -2.0, 0.5], [4.0, 1.0, 0.0]])
def test_nu_against_spherical_quadrature(kernel, gamma, v):
    q = QuadratureSpec(gamma=gamma)
    assert eval_nu(M78, kernel, q, "A", v) == pytest.approx(_nu_spherical(M78, gamma, v), rel=1e-6)


def test_nu_rotation_invariant(kernel, quad, rng):
    v = rng.normal(size=3) * 2
    Rm, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    assert eval_nu(M78, kernel, quad, "A", Rm @ v) == pytest.approx(eval_nu(M78, kernel, quad, "A", v), rel=1e-10)


@pytest.mark.parametrize("gamma", [-0.5, -1.0, -2.0])
def test_nu_comparable_to_weight(kernel, gamma):
    q = QuadratureSpec(gamma=gamma)
    ratios = [eval_nu(M78, kernel, q, "A", [s, 0, 0]) / (1 + s) ** gamma for s in (2.0, 4.0, 8.0, 16.0)]
    assert min(ratios) > 0
    assert max(ratios) / min(ratios) < 4


def test_lattice_frequency_converges(kernel, quad):
    exact = eval_nu(M78, kernel, quad, "A", [0, 0, 0])
    err = []
    for n in (13, 17, 25):   # coarser grids are pre-asymptotic
        g = VelocityGrid.for_masses(7.0, n)
        err.append(abs(nu_on_grid(M78, kernel, quad, g)[g.size // 2] - exact) / exact)
    assert err[2] < err[1] < err[0] < 0.05
    assert err[0] / err[2] > 2


def test_frequency_matrix_reproduces_nu(kernel, quad):
    g = VelocityGrid.for_masses(7.0, 5)
    mu = bimaxwellian_on_grid(M78, g).sum(axis=0)
    assert np.allclose(frequency_matrix(kernel, quad, g) @ mu, nu_on_grid(M78, kernel, quad, g), rtol=1e-13)


# ------------------------------------------------------------- K and split


def test_apply_K_zero_and_batches(kernel, quad):
    g = VelocityGrid.for_masses(7.0, 5)
    assert np.all(apply_K(M78, kernel, quad, np.zeros((2, g.size)), grid=g) == 0)
    f = np.random.default_rng(1).normal(size=(3, 2, g.size))
    out = apply_K(M78, kernel, quad, f, grid=g)
    assert np.allclose(out[1], apply_K(M78, kernel, quad, f[1], grid=g), rtol=1e-12, atol=1e-14 * np.max(np.abs(out)))
    with pytest.raises(ContractError):
        apply_K(M78, kernel, quad, f[0, 0], grid=g)


def test_chi_ramp():
    c = KernelSplitConfig(epsilon=0.3)
    r = np.linspace(0, 1, 2001)
    chi = c.chi(r)
    assert np.all(chi[r <= 0.3] == 0) and np.all(chi[r >= 0.6] == 1)
    assert np.all(np.diff(chi) >= 0)
    for edge in (0.3, 0.6):   # flat to second order at both ends of the ramp
        jump = [abs(c.chi(edge + h) - c.chi(edge - h)) for h in (1e-3, 5e-4)]
        assert jump[0] / jump[1] == pytest.approx(8.0, rel=0.05)


def test_split_configuration_errors(kernel, quad):
    g = VelocityGrid.for_masses(7.0, 5)
    f = np.zeros((2, g.size))
    with pytest.raises(ConfigurationError, match="epsilon"):
        split_Ks_Kc(KernelSplitConfig(epsilon=1.5), M78, kernel, quad, f, grid=g)
    with pytest.raises(ConfigurationError, match="m_trunc"):
        split_Ks_Kc(KernelSplitConfig(m_trunc=0.5), M78, kernel, quad, f, grid=g)
    with pytest.raises(ConfigurationError):
        KernelSplitConfig(epsilon=-1)
    with pytest.raises(ConfigurationError):
        KernelSplitConfig(chi_profile="step")


@pytest.mark.parametrize("eps,m", [(0.5, 2.0), (0.25, 6.0), (0.125, 8.0)])
def test_partition_identity(kernel, quad, eps, m):
    g = VelocityGrid.for_masses(7.0, 5)
    f = np.random.default_rng(2).normal(size=(4, 2, g.size))
    ks, kc, ratio = split_Ks_Kc(KernelSplitConfig(eps, m), M78, kernel, quad, f, grid=g)
    Kf = apply_K(M78, kernel, quad, f, grid=g)
    assert np.max(np.abs(ks + kc - Kf)) <= 1e-10 * np.max(np.abs(Kf))
    assert np.isfinite(ratio) and ratio > 0


def test_ks_ratio_monotone(kernel, quad):
    g = VelocityGrid.for_masses(7.0, 7)
    def r(eps, m):
        Ks = collocation_matrix(M78, kernel, quad, g, "Ks", KernelSplitConfig(eps, m))
        return ks_ratio(Ks, g, quad.gamma)
    along_eps = [r(e, 6.0) for e in (0.5, 0.25, 0.125)]
    along_m = [r(0.25, m) for m in (2.0, 4.0, 8.0)]
    assert along_eps[0] >= along_eps[1] >= along_eps[2]
    assert along_m[0] >= along_m[1] >= along_m[2]
    K = collocation_matrix(M78, kernel, quad, g, "K")
    assert along_eps[-1] < ks_ratio(K, g, quad.gamma)


def test_weighted_K_ratio_stable(kernel, quad):
    ratios = []
    for n in (5, 7):
        g = VelocityGrid.for_masses(7.0, n)
        K = collocation_matrix(M78, kernel, quad, g, "K")
        ratios.append([ks_ratio(K, g, quad.gamma, l) for l in (0.0, 1.0)])
    ratios = np.array(ratios)
    assert np.all(np.isfinite(ratios))
    assert np.all(np.abs(ratios[1] / ratios[0] - 1) < 0.5)


def test_matrix_budget(kernel, quad):
    with pytest.raises(AssemblyError, match="budget"):
        collocation_matrix(M78, kernel, quad, VelocityGrid.for_masses(7.0, 41), "K")
    with pytest.raises(ContractError):
        collocation_matrix(M78, kernel, quad, VelocityGrid.for_masses(7.0, 5), "Q")
    with pytest.raises(ConfigurationError):
        collocation_matrix(M78, kernel, quad.replace(mode="monte-carlo"), VelocityGrid.for_masses(7.0, 5))


# ------------------------------------------------------------- assembled L


def test_assembled_L_structure(L78):
    L, basis = L78
    A = L.matrix
    assert np.max(np.abs(A - A.T)) <= 1e-10 * np.max(np.abs(A))
    assert np.linalg.eigvalsh(A)[0] >= -1e-8 * np.max(np.abs(A))
    rng = np.random.default_rng(3)
    for _ in range(5):
        assert L.rayleigh(rng.normal(size=(2, L.grid.size))) >= -1e-8
    # invariants sit in the kernel only up to discretization error, well below the gap
    delta = estimate_coercivity(L, basis).delta_hat
    for c in basis.basis:
        assert abs(L.rayleigh(c)) <= 0.2 * delta


def test_kernel_residuals_and_asymmetry_shrink(kernel, quad):
    out = []
    for n in (7, 9):
        g = VelocityGrid.for_masses(7.0, n)
        L = assemble_L(M78, kernel, quad, g)
        out.append((np.max(L.kernel_residuals), np.max(L.collocation_residuals), L.asymmetry))
    assert out[1][1] < out[0][1]
    assert out[1][2] < out[0][2]
    assert out[1][0] < out[0][0]


def test_apply_matches_matrix(L78):
    L, _ = L78
    f = np.random.default_rng(4).normal(size=(2, L.grid.size))
    W = np.tile(L.grid.weights, 2)
    Lf = L.apply(f)
    assert np.allclose(Lf.ravel(), (L.K_matrix @ f.ravel()) + np.tile(L.nu_diag, 2) * f.ravel(), rtol=1e-10,
                       atol=1e-12 * np.max(np.abs(Lf)))
    assert (Lf.ravel() * W) @ f.ravel() == pytest.approx(L.rayleigh(f) * np.sum(W * f.ravel() ** 2), rel=1e-10)


# ---------------------------------------------------------- coercivity


def _delta_oracle(L, basis):
    """Deflated pencil by an explicit null-space basis and a generalized eigensolve."""
    g = L.grid
    W = np.tile(g.weights, 2)
    d = np.tile((1 + g.speed) ** L.quad.gamma, 2)
    Z = null_space(basis.basis.reshape(6, -1) * np.sqrt(W))   # y = W^(1/2) f
    return eigh(Z.T @ L.matrix @ Z, Z.T @ (d[:, None] * Z), eigvals_only=True, subset_by_index=[0, 0])[0]


def test_coercivity_against_null_space_oracle(L78):
    L, basis = L78
    res = estimate_coercivity(L, basis)
    assert res.delta_hat > 0
    assert res.delta_hat == pytest.approx(_delta_oracle(L, basis), rel=1e-8)
    assert res.cross_check_gap <= 1e-8
    assert res.orthogonality <= 1e-8
    assert res.kernel_rayleigh_max <= 0.2 * res.delta_hat
    # frozen from the oracle above (n = 7, masses 7/8, gamma = -1, |cos| kernel, degree-7 directions)
    assert res.delta_hat == pytest.approx(8.003296724215364, rel=1e-8)


def test_coercivity_minimizer_is_nu_normalized(L78):
    L, basis = L78
    res = estimate_coercivity(L, basis)
    g = L.grid
    w = (1 + g.speed) ** L.quad.gamma
    f = res.eigvec
    assert np.sum(f * f * g.weights * w) == pytest.approx(1.0, rel=1e-10)
    assert L.rayleigh(f) * np.sum(f * f * g.weights) == pytest.approx(res.delta_hat, rel=1e-8)


def test_coercivity_stable_across_resolution(kernel, quad):
    vals = []
    for n in (9, 11):
        g = VelocityGrid.for_masses(1.0, n)
        basis = build_invariant_basis(M11, g)
        vals.append(estimate_coercivity(assemble_L(M11, kernel, quad, g, basis), basis).delta_hat)
    assert min(vals) > 0
    assert abs(vals[1] - vals[0]) / vals[1] < 0.2


def test_coercivity_full_spectrum(L78):
    L, basis = L78
    res = estimate_coercivity(L, basis, full_spectrum=True)
    assert res.spectrum[0] == pytest.approx(res.delta_hat, rel=1e-10)
    assert np.all(np.diff(res.spectrum) >= 0)
    assert res.spectrum.size == 2 * L.grid.size - 6


def test_coercivity_grid_mismatch(L78, masses78):
    L, _ = L78
    with pytest.raises(ContractError):
        estimate_coercivity(L, build_invariant_basis(masses78, VelocityGrid.for_masses(7.0, 5)))


# ------------------------------------------------------ derivative probes


def test_probe_on_invariant(kernel, quad):
    g = VelocityGrid.for_masses(7.0, 7)
    basis = build_invariant_basis(M78, g)
    p = probe_derivative_estimates(M78, kernel, quad, basis.basis[2], MultiIndex(beta=(1, 0, 0)), grid=g)
    assert p.feasible()
    assert np.all(np.isfinite(p.lhs_nu))


@pytest.mark.parametrize("l", [0.0, 1.0])
def test_probe_random_smooth_samples(kernel, quad, l):
    g = VelocityGrid.for_masses(7.0, 7)
    rng = np.random.default_rng(5)
    sq = bimaxwellian_on_grid(M78, g, sqrt=True)
    v = g.nodes
    samples = []
    for _ in range(20):
        c = rng.normal(size=(2, 4))
        samples.append(sq * (c[:, :1] + c[:, 1:2] * v[:, 0] + c[:, 2:3] * np.sin(v[:, 1]) + c[:, 3:] * v[:, 2] ** 2))
    p = probe_derivative_estimates(M78, kernel, quad, samples, MultiIndex(beta=(0, 1, 0)), l, grid=g)
    assert p.feasible(0.5)
    assert np.all(np.diff(p.c_nu) <= 1e-12) and np.all(np.diff(p.c_K) <= 1e-12)   # C_eta shrinks as eta grows
    with pytest.raises(ContractError):
        probe_derivative_estimates(M78, kernel, quad, samples, MultiIndex(beta=(2, 0, 0)), grid=g)
