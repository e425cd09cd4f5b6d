"""Phase-space grids, weighted norms, finite differences and the energy functional.

Velocity fields live on a uniform Cartesian lattice ``[-R, R]^3`` with ``n``
points per axis (``n`` odd, so the origin is a node).  Nodes are flattened in
C order, ``p = (i * n + j) * n + k`` with ``i`` the ``v_x`` index.

Spatial fields live on the periodic box ``[-pi, pi)^d`` with ``d`` equal to 1
or 3.  A :class:`DistributionPair` stores ``f^A`` and ``f^B`` as one array of
shape ``(2, n_x, n_v)``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, ContractError

__all__ = [
    "VelocityGrid",
    "SpatialGrid",
    "DistributionPair",
    "WeightSpec",
    "MultiIndex",
    "weighted_norm_nu",
    "weighted_norm_l2",
    "finite_diff",
    "multi_indices",
    "derivative_norms",
    "energy_functional",
    "energy_from_norms",
    "octahedral_group",
]

# Truncation radius in units of the thermal speed 1/sqrt(m_min).
THERMAL_RADIUS = 6.0


@dataclass(frozen=True)
class VelocityGrid:
    """Uniform trapezoid lattice on ``[-radius, radius]^3``."""

    radius: float
    points_per_axis: int

    def __post_init__(self) -> None:
        if not np.isfinite(self.radius) or self.radius <= 0:
            raise ConfigurationError(f"velocity radius must be positive, got {self.radius!r}")
        n = self.points_per_axis
        if n < 3 or n % 2 == 0:
            raise ConfigurationError(f"points_per_axis must be odd and >= 3, got {n!r}")

    @classmethod
    def for_masses(cls, m_min: float, points_per_axis: int, radius: float | None = None) -> "VelocityGrid":
        """Grid whose radius covers the lighter species' Maxwellian."""
        if radius is None:
            radius = THERMAL_RADIUS / np.sqrt(m_min)
        return cls(float(radius), int(points_per_axis))

    @property
    def n(self) -> int:
        return self.points_per_axis

    @property
    def size(self) -> int:
        return self.points_per_axis ** 3

    @property
    def spacing(self) -> float:
        return 2.0 * self.radius / (self.points_per_axis - 1)

    @cached_property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.radius, self.radius, self.points_per_axis)

    @cached_property
    def nodes(self) -> np.ndarray:
        a = self.axis
        vx, vy, vz = np.meshgrid(a, a, a, indexing="ij")
        return np.ascontiguousarray(np.stack([vx.ravel(), vy.ravel(), vz.ravel()], axis=1))

    @cached_property
    def speed(self) -> np.ndarray:
        return np.linalg.norm(self.nodes, axis=1)

    @cached_property
    def weights(self) -> np.ndarray:
        w1 = np.full(self.n, self.spacing)
        w1[0] *= 0.5
        w1[-1] *= 0.5
        return np.einsum("i,j,k->ijk", w1, w1, w1).ravel()

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Quadrature over the trailing (velocity) axis."""
        return values @ self.weights

    def describe(self) -> dict:
        return {"v_radius": self.radius, "v_points": self.points_per_axis}

    @cached_property
    def index_offsets(self) -> np.ndarray:
        """Integer lattice coordinates relative to the centre node, shape (N, 3)."""
        c = (self.n - 1) // 2
        idx = np.arange(self.n) - c
        ii, jj, kk = np.meshgrid(idx, idx, idx, indexing="ij")
        return np.stack([ii.ravel(), jj.ravel(), kk.ravel()], axis=1)

    @cached_property
    def symmetry(self) -> "LatticeSymmetry":
        return LatticeSymmetry.build(self)


def octahedral_group() -> list[tuple[tuple[int, int, int], tuple[int, int, int]]]:
    """The 48 signed axis permutations as ``(perm, signs)`` pairs."""
    out = []
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1, -1), repeat=3):
            out.append((perm, signs))
    return out


@dataclass(frozen=True)
class LatticeSymmetry:
    """Node permutations induced by the cube group and a fundamental domain.

    ``perms[g, p]`` is the node reached from ``p`` under element ``g``.  The
    fundamental domain holds nodes with ``x >= y >= z >= 0``; each carries the
    weight ``|orbit| / 48`` so that summing ``g``-images over the domain
    reproduces a sum over all nodes.
    """

    perms: np.ndarray
    domain: np.ndarray
    domain_weight: np.ndarray

    @classmethod
    def build(cls, grid: VelocityGrid) -> "LatticeSymmetry":
        n = grid.n
        c = (n - 1) // 2
        off = grid.index_offsets
        group = octahedral_group()
        perms = np.empty((len(group), grid.size), dtype=np.int64)
        for g, (perm, signs) in enumerate(group):
            img = np.stack([signs[d] * off[:, perm[d]] for d in range(3)], axis=1) + c
            perms[g] = (img[:, 0] * n + img[:, 1]) * n + img[:, 2]
        x, y, z = off[:, 0], off[:, 1], off[:, 2]
        domain = np.flatnonzero((x >= y) & (y >= z) & (z >= 0))
        orbit = np.array([np.unique(perms[:, p]).size for p in domain])
        return cls(perms, domain.astype(np.int64), orbit / float(len(group)))


@dataclass(frozen=True)
class SpatialGrid:
    """Periodic grid on ``[-pi, pi)^dims``."""

    dims: int = 1
    points_per_axis: int = 16

    def __post_init__(self) -> None:
        if self.dims not in (1, 3):
            raise ConfigurationError(f"spatial dims must be 1 or 3, got {self.dims!r}")
        if self.points_per_axis < 1:
            raise ConfigurationError("spatial points_per_axis must be >= 1")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dims

    @property
    def size(self) -> int:
        return self.points_per_axis ** self.dims

    @property
    def spacing(self) -> float:
        return 2.0 * np.pi / self.points_per_axis

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dims

    @property
    def measure(self) -> float:
        return (2.0 * np.pi) ** self.dims

    @cached_property
    def axis(self) -> np.ndarray:
        return -np.pi + self.spacing * np.arange(self.points_per_axis)

    @cached_property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(size, dims)``."""
        grids = np.meshgrid(*([self.axis] * self.dims), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def describe(self) -> dict:
        return {"x_dims": self.dims, "x_points": self.points_per_axis}


@dataclass
class DistributionPair:
    """``f = (f^A, f^B)`` sampled on ``SpatialGrid x VelocityGrid``."""

    vgrid: VelocityGrid
    xgrid: SpatialGrid
    data: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=float)
        expected = (2, self.xgrid.size, self.vgrid.size)
        if self.data.shape != expected:
            raise ContractError(f"field shape {self.data.shape} does not match grids {expected}")

    @classmethod
    def zeros(cls, vgrid: VelocityGrid, xgrid: SpatialGrid) -> "DistributionPair":
        return cls(vgrid, xgrid, np.zeros((2, xgrid.size, vgrid.size)))

    @classmethod
    def from_velocity(cls, vgrid: VelocityGrid, xgrid: SpatialGrid, fv: np.ndarray,
                      profile: np.ndarray | None = None) -> "DistributionPair":
        """Tensor product of a velocity pair ``fv`` (2, n_v) and an x profile."""
        fv = np.asarray(fv, dtype=float)
        prof = np.ones(xgrid.size) if profile is None else np.asarray(profile, dtype=float)
        return cls(vgrid, xgrid, fv[:, None, :] * prof[None, :, None])

    def copy(self) -> "DistributionPair":
        return DistributionPair(self.vgrid, self.xgrid, self.data.copy())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.data)))

    def field(self) -> np.ndarray:
        """View with explicit axes ``(2, *x_shape, n, n, n)``."""
        n = self.vgrid.n
        return self.data.reshape((2,) + self.xgrid.shape + (n, n, n))

    def check_same_grid(self, other: "DistributionPair") -> None:
        if self.vgrid != other.vgrid or self.xgrid != other.xgrid:
            raise ContractError("fields live on different grids")


@dataclass(frozen=True)
class WeightSpec:
    """Velocity weight ``w(v) = (1 + |v|)^gamma`` raised to the power ``l``."""

    gamma: float
    l: float = 0.0

    def __post_init__(self) -> None:
        if not (-3.0 < self.gamma < 0.0):
            raise ConfigurationError(f"gamma must lie in (-3, 0), got {self.gamma!r}")
        if self.l < 0:
            raise ConfigurationError(f"weight power l must be >= 0, got {self.l!r}")

    def w(self, speed: np.ndarray) -> np.ndarray:
        return (1.0 + np.asarray(speed)) ** self.gamma

    def with_l(self, l: float) -> "WeightSpec":
        return WeightSpec(self.gamma, l)


@dataclass(frozen=True)
class MultiIndex:
    """Derivative orders: ``alpha`` in x, ``beta`` in v."""

    alpha: tuple[int, int, int] = (0, 0, 0)
    beta: tuple[int, int, int] = (0, 0, 0)

    def __post_init__(self) -> None:
        if any(a < 0 for a in self.alpha + self.beta):
            raise ContractError("derivative orders must be nonnegative")

    @property
    def order_x(self) -> int:
        return sum(self.alpha)

    @property
    def order_v(self) -> int:
        return sum(self.beta)

    @property
    def order(self) -> int:
        return self.order_x + self.order_v

    def label(self) -> str:
        return "dx{}{}{}_dv{}{}{}".format(*self.alpha, *self.beta)


def _vol_weights(f: DistributionPair) -> np.ndarray:
    return f.vgrid.weights * f.xgrid.cell_volume


def weighted_norm_nu(weights: WeightSpec, f: DistributionPair, species_sum: bool = False) -> float:
    """``(sum |w^l f|^2 w dx dv)^(1/2)``.

    With ``species_sum`` the species norms are added instead
    (``||f^A|| + ||f^B||``).
    """
    w = weights.w(f.vgrid.speed)
    dens = (w ** (2.0 * weights.l + 1.0)) * _vol_weights(f)
    per_species = np.einsum("sxv,v->s", f.data * f.data, dens)
    if species_sum:
        return float(np.sum(np.sqrt(per_species)))
    return float(np.sqrt(np.sum(per_species)))


def weighted_norm_l2(weights: WeightSpec, f: DistributionPair, species_sum: bool = False) -> float:
    """``(sum |w^l f|^2 dx dv)^(1/2)``."""
    w = weights.w(f.vgrid.speed)
    dens = (w ** (2.0 * weights.l)) * _vol_weights(f)
    per_species = np.einsum("sxv,v->s", f.data * f.data, dens)
    if species_sum:
        return float(np.sum(np.sqrt(per_species)))
    return float(np.sqrt(np.sum(per_species)))


_MAX_ORDER = 2


def _diff_periodic(a: np.ndarray, axis: int, h: float, order: int) -> np.ndarray:
    if order == 1:
        return (np.roll(a, -1, axis=axis) - np.roll(a, 1, axis=axis)) / (2.0 * h)
    return (np.roll(a, -1, axis=axis) - 2.0 * a + np.roll(a, 1, axis=axis)) / (h * h)


def _diff_bounded(a: np.ndarray, axis: int, h: float, order: int) -> np.ndarray:
    a = np.moveaxis(a, axis, 0)
    out = np.empty_like(a)
    if order == 1:
        out[1:-1] = (a[2:] - a[:-2]) / (2.0 * h)
        out[0] = (-3.0 * a[0] + 4.0 * a[1] - a[2]) / (2.0 * h)
        out[-1] = (3.0 * a[-1] - 4.0 * a[-2] + a[-3]) / (2.0 * h)
    else:
        out[1:-1] = (a[2:] - 2.0 * a[1:-1] + a[:-2]) / (h * h)
        out[0] = (2.0 * a[0] - 5.0 * a[1] + 4.0 * a[2] - a[3]) / (h * h)
        out[-1] = (2.0 * a[-1] - 5.0 * a[-2] + 4.0 * a[-3] - a[-4]) / (h * h)
    return np.moveaxis(out, 0, axis)


def finite_diff(f: DistributionPair, index: MultiIndex) -> DistributionPair:
    """Second-order centred differences; periodic in x, one-sided at the v boundary."""
    if any(a > _MAX_ORDER for a in index.alpha + index.beta) or index.order_v > _MAX_ORDER \
            or index.order_x > _MAX_ORDER:
        raise ContractError(f"unsupported derivative order {index.label()} (max {_MAX_ORDER})")
    xdims = f.xgrid.dims
    if any(index.alpha[d] for d in range(xdims, 3)):
        raise ContractError(f"x-derivative along an absent axis for dims={xdims}")
    a = f.field()
    for d in range(xdims):
        if index.alpha[d]:
            a = _diff_periodic(a, 1 + d, f.xgrid.spacing, index.alpha[d])
    vaxis0 = 1 + xdims
    for d in range(3):
        if index.beta[d]:
            a = _diff_bounded(a, vaxis0 + d, f.vgrid.spacing, index.beta[d])
    return DistributionPair(f.vgrid, f.xgrid, np.ascontiguousarray(a).reshape(f.data.shape))


def multi_indices(order: int, xdims: int = 1, velocity: bool = True) -> list[MultiIndex]:
    """All multi-indices with total order ``<= order`` along the active axes."""
    out = []
    xs = [t for t in itertools.product(range(order + 1), repeat=3) if sum(t) <= order
          and all(t[d] == 0 for d in range(xdims, 3))]
    vs = [t for t in itertools.product(range(order + 1), repeat=3) if sum(t) <= order] if velocity \
        else [(0, 0, 0)]
    for a in xs:
        for b in vs:
            if sum(a) + sum(b) <= order:
                out.append(MultiIndex(tuple(a), tuple(b)))
    out.sort(key=lambda m: (m.order, m.alpha[::-1], m.beta[::-1]))
    return out


def derivative_norms(f: DistributionPair, order: int, gamma: float,
                     velocity: bool = True) -> dict[MultiIndex, tuple[float, float]]:
    """Squared ``(L2, nu)`` norms of ``w^{|beta|} d f`` for every multi-index."""
    out = {}
    for mi in multi_indices(order, f.xgrid.dims, velocity):
        g = f if mi.order == 0 else finite_diff(f, mi)
        spec = WeightSpec(gamma, float(mi.order_v))
        out[mi] = (weighted_norm_l2(spec, g) ** 2, weighted_norm_nu(spec, g) ** 2)
    return out


def energy_from_norms(times: Sequence[float], l2sq: np.ndarray, nusq: np.ndarray) -> np.ndarray:
    """``E(t_k) = sum_mi (1/2 l2sq[k] + int_0^t_k nusq)`` with trapezoid in time.

    ``l2sq`` and ``nusq`` have shape ``(n_times, n_indices)``.
    """
    t = np.asarray(times, dtype=float)
    l2 = np.sum(np.asarray(l2sq, dtype=float), axis=1)
    nu = np.sum(np.asarray(nusq, dtype=float), axis=1)
    if t.size == 0:
        raise ContractError("empty history")
    integral = np.zeros_like(t)
    if t.size > 1:
        integral[1:] = np.cumsum(0.5 * (nu[1:] + nu[:-1]) * np.diff(t))
    return 0.5 * l2 + integral


def energy_functional(history: Iterable[tuple[float, DistributionPair]], order: int,
                      weights: WeightSpec, velocity: bool = True) -> float:
    """Energy ``E[f(t)]`` at the last time of ``history``."""
    times, l2, nu = [], [], []
    for t, f in history:
        norms = derivative_norms(f, order, weights.gamma, velocity)
        times.append(t)
        l2.append([v[0] for v in norms.values()])
        nu.append([v[1] for v in norms.values()])
    if not times:
        raise ContractError("energy functional needs a non-empty history")
    return float(energy_from_norms(times, np.array(l2), np.array(nu))[-1])
