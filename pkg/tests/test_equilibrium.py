import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from binarykin.equilibrium import (bimaxwellian_on_grid, build_invariant_basis, conservation_functionals,
                                   inner_v, macroscopic_moments, maxwellian, maxwellian_eval, project_P0,
                                   raw_invariants, reconstruct)
from binarykin.errors import AssemblyError, ContractError
from binarykin.kinematics import MassPair
from binarykin.vgrid import DistributionPair, SpatialGrid, VelocityGrid


@pytest.fixture(scope="module")
def basis11():
    return build_invariant_basis(MassPair(1, 1), VelocityGrid.for_masses(1.0, 15))


@pytest.fixture(scope="module")
def basis78():
    m = MassPair(7, 8)
    return build_invariant_basis(m, VelocityGrid.for_masses(7.0, 11))


def test_maxwellian_values():
    a, b = maxwellian_eval(MassPair(1, 1), [0, 0, 0])
    assert a == b == pytest.approx((2 * math.pi) ** -1.5) == pytest.approx(0.063493636, rel=1e-8)
    a, b = maxwellian_eval(MassPair(7, 8), [1, 0, 0])
    assert a == pytest.approx(7 ** 1.5 * (2 * math.pi) ** -1.5 * math.exp(-3.5), rel=1e-14)
    assert b == pytest.approx(8 ** 1.5 * (2 * math.pi) ** -1.5 * math.exp(-4.0), rel=1e-14)
    g = VelocityGrid.for_masses(1.0, 25)
    assert float(np.sum(maxwellian(1.0, g.nodes) * g.weights)) == pytest.approx(1.0, abs=1e-8)


def test_basis_orthonormal(basis11, basis78):
    for b in (basis11, basis78):
        np.testing.assert_allclose(b.gram(), np.eye(6), atol=1e-8)


def test_basis_parity(basis11):
    raw = raw_invariants(basis11.masses, basis11.grid)
    v1 = raw[2] / math.sqrt(inner_v(basis11.grid, raw[2], raw[2]))
    np.testing.assert_allclose(basis11.basis[2], v1, atol=1e-12)


def test_energy_overlaps_species_masses(basis78):
    raw = raw_invariants(basis78.masses, basis78.grid)
    assert inner_v(basis78.grid, raw[5], raw[0]) > 0


def test_rank_deficiency_is_reported():
    with pytest.raises(AssemblyError, match="numerically dependent"):
        build_invariant_basis(MassPair(7, 8), VelocityGrid(50.0, 3))


def _field(basis, data):
    return DistributionPair(basis.grid, SpatialGrid(1, data.shape[1]), data)


def test_projection_examples(basis78):
    g = basis78.grid
    f = _field(basis78, np.broadcast_to(basis78.basis[3][:, None, :], (2, 4, g.size)).copy())
    np.testing.assert_allclose(project_P0(basis78, f).data, f.data, atol=1e-10)
    rnd = _field(basis78, np.random.default_rng(0).standard_normal((2, 4, g.size)))
    p = project_P0(basis78, rnd)
    np.testing.assert_allclose(project_P0(basis78, p).data, p.data, atol=1e-10)
    defl = DistributionPair(g, rnd.xgrid, rnd.data - p.data)
    assert np.max(np.abs(project_P0(basis78, defl).data)) <= 1e-10
    with pytest.raises(ContractError):
        project_P0(basis78, DistributionPair.zeros(VelocityGrid(1.0, 3), SpatialGrid(1, 4)))


@given(st.integers(0, 10**6))
def test_projection_self_adjoint(seed):
    basis = build_invariant_basis(MassPair(7, 8), VelocityGrid.for_masses(7.0, 7))
    rng = np.random.default_rng(seed)
    f, g = rng.standard_normal((2, 2, basis.grid.size))
    pf, pg = project_P0(basis, f), project_P0(basis, g)
    lhs, rhs = inner_v(basis.grid, pf, g), inner_v(basis.grid, f, pg)
    norm = math.sqrt(inner_v(basis.grid, f, f) * inner_v(basis.grid, g, g))
    assert abs(lhs - rhs) <= 1e-10 * norm


def test_conservation_functionals(basis78):
    m, g = basis78.masses, basis78.grid
    xg = SpatialGrid(1, 6)
    assert np.all(conservation_functionals(m, DistributionPair.zeros(g, xg)) == 0)
    sq = bimaxwellian_on_grid(m, g, sqrt=True)
    odd = DistributionPair.from_velocity(g, xg, g.nodes[:, 0][None, :] * sq)
    c = conservation_functionals(m, odd)
    assert np.max(np.abs(c[[0, 1, 3, 4, 5]])) <= 1e-14 * np.abs(c[2])
    one = DistributionPair.from_velocity(g, xg, basis78.basis[0])
    expected = xg.measure * inner_v(g, basis78.basis[0], raw_invariants(m, g)[0])
    assert conservation_functionals(m, one)[0] == pytest.approx(expected, rel=1e-12)


def test_macroscopic_moments_examples(basis78):
    m, g = basis78.masses, basis78.grid
    sq = bimaxwellian_on_grid(m, g, sqrt=True)
    mac = macroscopic_moments(basis78, np.stack([sq[0], np.zeros(g.size)]))
    np.testing.assert_allclose(mac.a, [[1, 0]], atol=1e-8)
    np.testing.assert_allclose(mac.b, 0, atol=1e-8)
    np.testing.assert_allclose(mac.c, 0, atol=1e-8)
    mac = macroscopic_moments(basis78, raw_invariants(m, g)[3])
    np.testing.assert_allclose(mac.b, [[0, 1, 0]], atol=1e-8)
    np.testing.assert_allclose(mac.a, 0, atol=1e-8)
    f = np.random.default_rng(1).standard_normal((2, g.size))
    micro = f - project_P0(basis78, f)
    mac = macroscopic_moments(basis78, micro)
    for part in (mac.a, mac.b, mac.c):
        np.testing.assert_allclose(part, 0, atol=1e-8)


@given(st.integers(0, 10**6))
def test_reconstruction_matches_projection(seed):
    basis = build_invariant_basis(MassPair(7, 8), VelocityGrid.for_masses(7.0, 7))
    f = np.random.default_rng(seed).standard_normal((3, 2, basis.grid.size))
    back = reconstruct(basis, macroscopic_moments(basis, np.moveaxis(f, 0, 1)))
    p = project_P0(basis, f)
    assert np.max(np.abs(back - p)) <= 1e-8 * np.max(np.abs(p))
