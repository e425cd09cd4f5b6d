"""Bi-Maxwellian equilibrium, collision invariants and the projection onto them."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AssemblyError, ContractError
from .kinematics import MassPair
from .vgrid import DistributionPair, SpatialGrid, VelocityGrid

__all__ = [
    "maxwellian",
    "sqrt_maxwellian",
    "maxwellian_eval",
    "bimaxwellian_on_grid",
    "raw_invariants",
    "InvariantBasis",
    "build_invariant_basis",
    "inner_v",
    "project_P0",
    "conservation_functionals",
    "MacroState",
    "macroscopic_moments",
    "reconstruct",
    "INVARIANT_NAMES",
]

INVARIANT_NAMES = ("e1", "e2", "v1m", "v2m", "v3m", "v2sqm")
PIVOT_TOL = 1e-10


def maxwellian(m: float, v) -> np.ndarray:
    """``m^{3/2} (2 pi)^{-3/2} exp(-m |v|^2 / 2)`` over the last axis of ``v``."""
    v = np.asarray(v, dtype=float)
    return (m / (2.0 * np.pi)) ** 1.5 * np.exp(-0.5 * m * np.sum(v * v, axis=-1))


def sqrt_maxwellian(m: float, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return (m / (2.0 * np.pi)) ** 0.75 * np.exp(-0.25 * m * np.sum(v * v, axis=-1))


def maxwellian_eval(masses: MassPair, v) -> tuple[float, float]:
    return float(maxwellian(masses.m_alpha, v)), float(maxwellian(masses.m_beta, v))


def bimaxwellian_on_grid(masses: MassPair, grid: VelocityGrid, sqrt: bool = False) -> np.ndarray:
    """``(mu^A, mu^B)`` (or their square roots) on the grid, shape (2, N)."""
    fn = sqrt_maxwellian if sqrt else maxwellian
    return np.stack([fn(masses.m_alpha, grid.nodes), fn(masses.m_beta, grid.nodes)])


def raw_invariants(masses: MassPair, grid: VelocityGrid) -> np.ndarray:
    """The six sqrt(mu)-weighted invariants in their fixed order, shape (6, 2, N)."""
    sq = bimaxwellian_on_grid(masses, grid, sqrt=True)
    m = np.array([masses.m_alpha, masses.m_beta])[:, None]
    v = grid.nodes
    out = np.zeros((6, 2, grid.size))
    out[0, 0] = sq[0]
    out[1, 1] = sq[1]
    for d in range(3):
        out[2 + d] = m * v[:, d][None, :] * sq
    out[5] = m * (v * v).sum(axis=1)[None, :] * sq
    return out


def inner_v(grid: VelocityGrid, f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Grid ``L^2_v`` pairing summed over species; broadcasts over leading axes.

    ``f`` and ``g`` have shape ``(..., 2, N)``.
    """
    return np.einsum("...sv,...sv,v->...", f, g, grid.weights)


@dataclass(frozen=True)
class InvariantBasis:
    """Orthonormal collision invariants ``chi_j`` on a velocity grid.

    ``raw = coeff @ basis`` with ``coeff`` upper triangular (the Gram-Schmidt
    factor), so the change of basis is invertible by construction.
    """

    masses: MassPair
    grid: VelocityGrid
    basis: np.ndarray
    raw: np.ndarray
    coeff: np.ndarray

    def coefficients(self, f: np.ndarray) -> np.ndarray:
        """``<f, chi_j>`` for ``f`` of shape (..., 2, N) -> (..., 6)."""
        w = self.grid.weights
        return np.einsum("...sv,jsv,v->...j", f, self.basis, w)

    def gram(self) -> np.ndarray:
        return inner_v(self.grid, self.basis[:, None], self.basis[None, :])


def build_invariant_basis(masses: MassPair, grid: VelocityGrid) -> InvariantBasis:
    """Modified Gram-Schmidt on the raw invariants in their fixed order."""
    raw = raw_invariants(masses, grid)
    w = grid.weights
    q = raw.copy()
    coeff = np.zeros((6, 6))
    for k in range(6):
        norm0 = np.sqrt(np.einsum("sv,sv,v->", raw[k], raw[k], w))
        for j in range(k):
            r = np.einsum("sv,sv,v->", q[j], q[k], w)
            coeff[j, k] = r
            q[k] -= r * q[j]
        nrm = np.sqrt(np.einsum("sv,sv,v->", q[k], q[k], w))
        if not np.isfinite(nrm) or nrm <= PIVOT_TOL * max(norm0, 1.0):
            raise AssemblyError(
                f"invariant {INVARIANT_NAMES[k]} is numerically dependent on the previous ones "
                f"(pivot {nrm:.3e}); the velocity grid is too coarse or too small")
        coeff[k, k] = nrm
        q[k] /= nrm
    return InvariantBasis(masses, grid, q, raw, coeff.T)


def _as_array(f) -> np.ndarray:
    return f.data if isinstance(f, DistributionPair) else np.asarray(f, dtype=float)


def project_P0(basis: InvariantBasis, f):
    """Orthogonal projection onto span(chi_j), pointwise in x.

    Accepts a :class:`DistributionPair` or an array of shape (..., 2, N).
    """
    if isinstance(f, DistributionPair):
        if f.vgrid != basis.grid:
            raise ContractError("field and basis live on different velocity grids")
        arr = np.moveaxis(f.data, 1, 0)
        out = np.einsum("xj,jsv->xsv", basis.coefficients(arr), basis.basis)
        return DistributionPair(f.vgrid, f.xgrid, np.moveaxis(out, 0, 1).copy())
    arr = np.asarray(f, dtype=float)
    if arr.shape[-1] != basis.grid.size:
        raise ContractError("field and basis live on different velocity grids")
    return np.einsum("...j,jsv->...sv", basis.coefficients(arr), basis.basis)


def conservation_functionals(masses: MassPair, f: DistributionPair, xgrid: SpatialGrid | None = None) -> np.ndarray:
    """Total species masses, momentum and energy carried by the perturbation ``f``."""
    xg = f.xgrid if xgrid is None else xgrid
    grid = f.vgrid
    raw = raw_invariants(masses, grid)
    raw[5] *= 0.5
    per_x = np.einsum("sxv,jsv,v->xj", f.data, raw, grid.weights)
    return per_x.sum(axis=0) * xg.cell_volume


@dataclass(frozen=True)
class MacroState:
    """Fields ``a`` (n_x, 2), ``b`` (n_x, 3) and ``c`` (n_x,)."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def summary(self) -> dict:
        def stats(arr):
            return {"min": float(np.min(arr)), "max": float(np.max(arr)), "mean": float(np.mean(arr))}

        return {
            "a_A": stats(self.a[:, 0]), "a_B": stats(self.a[:, 1]),
            "b_1": stats(self.b[:, 0]), "b_2": stats(self.b[:, 1]), "b_3": stats(self.b[:, 2]),
            "c": stats(self.c),
        }


def macroscopic_moments(basis: InvariantBasis, f) -> MacroState:
    """Solve the raw-invariant Gram system for ``(a, b, c)`` at every x."""
    arr = _as_array(f)
    if arr.ndim == 2:
        arr = arr[:, None, :]
    arr = np.moveaxis(arr, 1, 0)
    raw = basis.raw
    gram = inner_v(basis.grid, raw[:, None], raw[None, :])
    rhs = np.einsum("xsv,jsv,v->xj", arr, raw, basis.grid.weights)
    try:
        sol = np.linalg.solve(gram, rhs.T).T
    except np.linalg.LinAlgError as exc:
        raise AssemblyError(f"singular invariant Gram system: {exc}") from exc
    if not np.all(np.isfinite(sol)):
        raise AssemblyError("invariant Gram system produced non-finite moments")
    return MacroState(sol[:, 0:2].copy(), sol[:, 2:5].copy(), sol[:, 5].copy())


def reconstruct(basis: InvariantBasis, macro: MacroState) -> np.ndarray:
    """``(a:sqrt mu) + (b.v)(m:sqrt mu) + c |v|^2 (m:sqrt mu)``, shape (n_x, 2, N)."""
    coef = np.concatenate([macro.a, macro.b, macro.c[:, None]], axis=1)
    return np.einsum("xj,jsv->xsv", coef, basis.raw)
