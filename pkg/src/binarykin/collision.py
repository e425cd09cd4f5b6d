"""Nonlinear collision operators, the perturbation forms and their functionals.

Deterministic quadrature: the pre-collision partner ``v_*`` runs over the
velocity lattice with trapezoid weights, the direction over a fixed Lebedev
set folded onto a hemisphere (``omega`` and ``-omega`` give the same outcome).
The coincident node is dropped and replaced by a local correction so that the
lattice sum of ``|u|^gamma`` matches its integral.  Values of F at ``v'`` and
``v_*'`` come from trilinear interpolation.  In the default ``relative`` mode
the interpolant is taken on ``F / mu`` and multiplied by the analytic
Maxwellian: linear in F with nonnegative weights and exact on the
Maxwellian, so the bi-Maxwellian is an exact discrete equilibrium.  Points
past the box keep the ratio at the boundary.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.integrate import lebedev_rule
from scipy.special import roots_legendre

from . import _engine
from .equilibrium import maxwellian, sqrt_maxwellian
from .errors import ConfigurationError, ContractError, DomainError, NumericalError
from .kinematics import MassPair, sample_sphere
from .vgrid import DistributionPair, VelocityGrid

__all__ = [
    "AngularKernel",
    "QuadratureSpec",
    "SingularConstants",
    "singular_constants",
    "species_index",
    "eval_Q",
    "eval_Q_mc",
    "eval_Gamma",
    "collision_operator",
    "conservative_correction",
    "entropy_production",
    "entropy_production_oracle",
    "collision_invariant_pairing",
    "pairing_oracle",
    "invariant_functions",
    "random_positive_state",
    "hemisphere_rule",
]

_FAMILIES = {"abscos": _engine.B_ABS, "cos2": _engine.B_SQUARE}
_INTERPOLATION = ("relative", "raw")
_MODES = ("deterministic", "monte-carlo")


@dataclass(frozen=True)
class AngularKernel:
    """Cutoff angular factor ``b(cos theta) = C_b |cos theta|`` or ``C_b cos^2 theta``."""

    family: str = "abscos"
    c_b: float = 1.0

    def __post_init__(self) -> None:
        if self.family not in _FAMILIES:
            raise ConfigurationError(f"kernel family must be one of {sorted(_FAMILIES)}, got {self.family!r}")
        if not np.isfinite(self.c_b) or self.c_b <= 0:
            raise ConfigurationError(f"c_b must be positive, got {self.c_b!r}")

    @property
    def code(self) -> int:
        return _FAMILIES[self.family]

    def __call__(self, cos_theta) -> np.ndarray:
        c = np.abs(np.asarray(cos_theta, dtype=float))
        return self.c_b * (c if self.family == "abscos" else c * c)

    @property
    def total(self) -> float:
        """Integral of b over the unit sphere."""
        if self.family == "abscos":
            return 2.0 * np.pi * self.c_b
        return 4.0 * np.pi * self.c_b / 3.0


@dataclass(frozen=True)
class QuadratureSpec:
    """Quadrature choices for every collision integral.

    ``singular_box`` is the half-width (in lattice cells) of the box used to
    calibrate the coincident-node correction.
    """

    gamma: float = -1.0
    sphere_degree: int = 7
    mode: str = "deterministic"
    seed: int = 0
    interpolation: str = "relative"
    singular_box: int = 2
    mc_points: int = 32
    mc_batches: int = 8

    def __post_init__(self) -> None:
        if not (-3.0 < self.gamma < 0.0):
            raise ConfigurationError(f"gamma must lie in the open interval (-3, 0), got {self.gamma!r}")
        if self.mode not in _MODES:
            raise ConfigurationError(f"quadrature mode must be one of {_MODES}, got {self.mode!r}")
        if self.interpolation not in _INTERPOLATION:
            raise ConfigurationError(f"interpolation must be one of {_INTERPOLATION}, got {self.interpolation!r}")
        if self.singular_box < 1:
            raise ConfigurationError("singular_box must be >= 1")
        if self.mc_points < 2 or self.mc_batches < 2:
            raise ConfigurationError("mc_points and mc_batches must be >= 2")

    def replace(self, **changes) -> "QuadratureSpec":
        from dataclasses import replace

        return replace(self, **changes)


@lru_cache(maxsize=None)
def hemisphere_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Lebedev directions with one member of each ``+-omega`` pair, weights doubled."""
    try:
        x, w = lebedev_rule(degree)
    except (ValueError, NotImplementedError) as exc:
        raise ConfigurationError(f"no Lebedev rule of degree {degree}: {exc}") from exc
    x = x.T
    keep = []
    for p in x:
        nz = p[np.abs(p) > 1e-12]
        keep.append(nz[0] > 0)
    keep = np.array(keep)
    if 2 * keep.sum() != len(x):
        raise ConfigurationError(f"Lebedev rule of degree {degree} is not centrally symmetric")
    dirs = np.ascontiguousarray(x[keep])
    return dirs, 2.0 * w[keep]


def _directions(quad: QuadratureSpec, batch: int = 0) -> tuple[np.ndarray, np.ndarray]:
    if quad.mode == "deterministic":
        return hemisphere_rule(quad.sphere_degree)
    dirs = sample_sphere(quad.seed * 1_000_003 + batch, quad.mc_points)
    return np.ascontiguousarray(dirs), np.full(quad.mc_points, 4.0 * np.pi / quad.mc_points)


# --------------------------------------------------------------- singular node


@lru_cache(maxsize=None)
def _box_integral(gamma: float, order: int = 64) -> float:
    """Integral of |u|^gamma over [-1, 1]^3 (six pyramids, exact radial part)."""
    x, w = roots_legendre(order)
    yy, zz = np.meshgrid(x, x, indexing="ij")
    face = np.sum(np.outer(w, w) * (1.0 + yy * yy + zz * zz) ** (0.5 * gamma))
    return 6.0 * face / (3.0 + gamma)


@dataclass(frozen=True)
class SingularConstants:
    """Coincident-node corrections for ``|u|^gamma`` and for its ``chi``-masked part.

    Both are returned per unit angular total (multiply by ``AngularKernel.total``).
    """

    full: float
    chi: float


@lru_cache(maxsize=None)
def _lattice_sums(half: int, gamma: float) -> float:
    r = np.arange(-half, half + 1)
    ii, jj, kk = np.meshgrid(r, r, r, indexing="ij")
    d = np.sqrt(ii * ii + jj * jj + kk * kk).ravel()
    d = d[d > 0]
    return float(np.sum(d ** gamma))


def singular_constants(grid: VelocityGrid, gamma: float, box: int = 2,
                       eps: float | None = None) -> SingularConstants:
    h = grid.spacing
    half = box + 0.5
    full = h ** (3.0 + gamma) * (half ** (3.0 + gamma) * _box_integral(gamma) - _lattice_sums(box, gamma))
    if eps is None:
        return SingularConstants(full, full)
    from scipy.integrate import quad as quad1

    chi = np.vectorize(lambda r: _engine.chi_ramp(r, eps))
    cont, _ = quad1(lambda r: r ** (2.0 + gamma) * (1.0 - _engine.chi_ramp(r, eps)), 0.0, 2.0 * eps,
                    points=[eps], limit=200)
    cont *= 4.0 * np.pi
    reach = int(np.ceil(2.0 * eps / h)) + 1
    r = np.arange(-reach, reach + 1)
    ii, jj, kk = np.meshgrid(r, r, r, indexing="ij")
    d = h * np.sqrt(ii * ii + jj * jj + kk * kk).ravel()
    d = d[d > 0]
    lattice = h ** 3 * np.sum(d ** gamma * (1.0 - chi(d)))
    return SingularConstants(full, full - (cont - lattice))


# ------------------------------------------------------------------ plumbing


def species_index(label) -> int:
    if label in (0, "A", "a"):
        return 0
    if label in (1, "B", "b"):
        return 1
    raise ContractError(f"species label must be A/B or 0/1, got {label!r}")


def _species_masses(masses: MassPair) -> tuple[float, float]:
    return masses.m_alpha, masses.m_beta


def _as_columns(F, grid: VelocityGrid, name: str) -> tuple[np.ndarray, tuple]:
    """Reshape (..., N) into an (X, N) block of batch rows."""
    arr = np.asarray(F, dtype=float)
    if arr.shape[-1] != grid.size:
        raise ContractError(f"{name} has {arr.shape[-1]} velocity nodes, grid has {grid.size}")
    lead = arr.shape[:-1]
    return np.ascontiguousarray(arr.reshape(-1, grid.size)), lead


def _check_finite(arr: np.ndarray, grid: VelocityGrid, what: str) -> None:
    if np.all(np.isfinite(arr)):
        return
    bad = np.argwhere(~np.isfinite(arr))[0]
    node = int(bad[-1]) if arr.ndim else 0
    raise NumericalError(f"{what} is not finite at velocity node {node} (v = {grid.nodes[node].tolist()})")


def _is_symmetric(grid: VelocityGrid, *cols: np.ndarray) -> bool:
    perms = grid.symmetry.perms
    for c in cols:
        scale = max(np.max(np.abs(c)), 1e-300)
        for p in perms:
            if np.max(np.abs(c[:, p] - c)) > 1e-13 * scale:
                return False
    return True


def _integer_directions(dirs: np.ndarray) -> np.ndarray | None:
    """Integer vectors parallel to each direction, or None if some direction is irrational."""
    out = np.empty_like(dirs)
    for k, d in enumerate(dirs):
        scale = np.min(np.abs(d[np.abs(d) > 1e-12]))
        e = d / scale
        if np.max(np.abs(e - np.round(e))) > 1e-9 or np.max(np.abs(e)) > 4:
            return None
        out[k] = np.round(e)
    return out


@dataclass(frozen=True)
class _LatticeTables:
    evec: np.ndarray
    qnorm: np.ndarray
    sproj: np.ndarray
    span: int
    gam: np.ndarray
    ang: np.ndarray


@lru_cache(maxsize=8)
def _difference_powers(grid: VelocityGrid, gamma: float):
    """Lattice differences ``v_j - v_i``, their lengths and ``|u|^gamma`` (0 at u = 0)."""
    n = grid.n
    r = np.arange(-(n - 1), n)
    dx, dy, dz = np.meshgrid(r, r, r, indexing="ij")
    diff = grid.spacing * np.stack([dx.ravel(), dy.ravel(), dz.ravel()], axis=1)
    dist = np.linalg.norm(diff, axis=1)
    gam = np.zeros_like(dist)
    nz = dist > 0
    gam[nz] = dist[nz] ** gamma
    return diff, dist, gam


@lru_cache(maxsize=8)
def _lattice_tables(grid: VelocityGrid, kernel: AngularKernel, degree: int, gamma: float):
    dirs, dwt = hemisphere_rule(degree)
    evec = _integer_directions(dirs)
    if evec is None:
        return None
    diff, dist, gam = _difference_powers(grid, gamma)
    nz = dist > 0
    cos = np.zeros((len(dirs), dist.size))
    cos[:, nz] = (dirs @ diff[nz].T) / dist[nz]
    bk = dwt[:, None] * kernel(cos) / kernel.c_b
    tot = bk.sum(axis=0)
    ang = np.zeros_like(bk)
    ang[:, nz] = bk[:, nz] / tot[nz]
    sproj = (evec @ grid.index_offsets.T).round().astype(np.int64)
    span = int(2 * np.max(np.abs(sproj)))
    return _LatticeTables(np.ascontiguousarray(evec), np.sum(evec * evec, axis=1), np.ascontiguousarray(sproj),
                          span, gam, np.ascontiguousarray(ang))


def _row_groups(tables: _LatticeTables, rows: np.ndarray):
    K = tables.sproj.shape[0]
    proj = tables.sproj[:, rows]
    order = np.argsort(proj, axis=1, kind="stable")
    sigmas = [np.unique(proj[k]) for k in range(K)]
    G = max(len(u) for u in sigmas)
    start = np.zeros((K, G + 1), dtype=np.int64)
    sigma = np.zeros((K, G), dtype=np.int64)
    for k in range(K):
        sorted_proj = proj[k, order[k]]
        u = sigmas[k]
        sigma[k, :len(u)] = u
        start[k, :len(u)] = np.searchsorted(sorted_proj, u, side="left")
        start[k, len(u):] = rows.size
    return np.ascontiguousarray(order.astype(np.int64)), start, sigma


@dataclass
class _PairSetup:
    grid: VelocityGrid
    kernel: AngularKernel
    quad: QuadratureSpec
    m_a: float
    m_b: float
    csing: float = field(init=False)

    def __post_init__(self) -> None:
        self.csing = singular_constants(self.grid, self.quad.gamma, self.quad.singular_box).full

    @property
    def ca(self) -> float:
        return 2.0 * self.m_a / (self.m_a + self.m_b)

    @property
    def cb(self) -> float:
        return 2.0 * self.m_b / (self.m_a + self.m_b)

    def run(self, rows, Ga, Gb, rel, pre, La, Lb, dirs, dwt):
        g = self.grid
        X = Ga.shape[0]
        gain = np.zeros((rows.size, X))
        loss = np.zeros((rows.size, X))
        tables = None
        if self.quad.mode == "deterministic":
            tables = _lattice_tables(g, self.kernel, self.quad.sphere_degree, self.quad.gamma)
        if tables is not None:
            order, start, sigma = _row_groups(tables, rows)
            _engine.gain_lattice(rows, order, start, sigma, g.index_offsets, tables.sproj, tables.evec,
                                 tables.qnorm, tables.span, g.nodes, g.weights, -g.radius, g.spacing, g.n,
                                 tables.gam, tables.ang, self.ca, self.cb, Ga, Gb, rel, self.m_a, self.m_b,
                                 pre, self.kernel.total, gain)
            _engine.loss_lattice(rows, g.index_offsets, g.n, g.weights, tables.gam, pre, self.kernel.total,
                                 self.csing, La, Lb, gain, loss)
            return gain, loss
        fn = _engine.gain_loss_single if X == 1 else _engine.gain_loss
        fn(rows, g.nodes, g.weights, -g.radius, g.spacing, g.n, self.quad.gamma,
           dirs, dwt, self.kernel.code, self.kernel.total, self.csing, self.ca, self.cb,
           Ga, Gb, rel, self.m_a, self.m_b, pre, La, Lb, gain, loss)
        return gain, loss


def _evaluate(setup: _PairSetup, Ga, Gb, rel, pre, La, Lb, batch=0, symmetric=False):
    """Gain/loss at every node, using the fundamental domain when allowed."""
    g = setup.grid
    dirs, dwt = _directions(setup.quad, batch)
    if symmetric and setup.quad.mode == "deterministic":
        sym = g.symmetry
        gain_fd, loss_fd = setup.run(sym.domain, Ga, Gb, rel, pre, La, Lb, dirs, dwt)
        gain = np.empty((g.size, Ga.shape[0]))
        loss = np.empty_like(gain)
        for p in sym.perms:
            gain[p[sym.domain]] = gain_fd
            loss[p[sym.domain]] = loss_fd
        return gain, loss
    rows = np.arange(g.size, dtype=np.int64)
    return setup.run(rows, Ga, Gb, rel, pre, La, Lb, dirs, dwt)


def _relative_source(F: np.ndarray, m: float, grid: VelocityGrid) -> np.ndarray:
    """F / mu; nodes where mu underflows carry no information and get 0."""
    mu = maxwellian(m, grid.nodes)[None, :]
    out = np.zeros(np.broadcast_shapes(F.shape, mu.shape))
    np.divide(F, mu, out=out, where=mu > 0)
    return out


def _q_parts(masses, kernel, quad, F_alpha, F_beta, species_pair, grid, batch=0):
    a, b = (species_index(s) for s in species_pair)
    ms = _species_masses(masses)
    Fa, lead = _as_columns(F_alpha, grid, "F_alpha")
    Fb, lead_b = _as_columns(F_beta, grid, "F_beta")
    if lead != lead_b:
        raise ContractError("F_alpha and F_beta have different batch shapes")
    _check_finite(Fa, grid, "F_alpha")
    _check_finite(Fb, grid, "F_beta")
    setup = _PairSetup(grid, kernel, quad, ms[a], ms[b])
    rel = quad.interpolation == "relative"
    rel = quad.interpolation == "relative"
    if rel:
        Ga, Gb = _relative_source(Fa, ms[a], grid), _relative_source(Fb, ms[b], grid)
    else:
        Ga, Gb = np.ascontiguousarray(Fa), np.ascontiguousarray(Fb)
    pre = np.ones(grid.size)
    symmetric = _is_symmetric(grid, Fa, Fb)
    gain, loss = _evaluate(setup, Ga, Gb, rel, pre, Fa, Fb, batch, symmetric)
    _check_finite(gain, grid, "collision gain")
    return gain, loss, lead


def _restore(arr: np.ndarray, lead: tuple, grid: VelocityGrid) -> np.ndarray:
    return arr.T.reshape(lead + (grid.size,))


def eval_Q(masses: MassPair, kernel: AngularKernel, quad: QuadratureSpec, F_alpha, F_beta,
           species_pair=("A", "B"), *, grid: VelocityGrid) -> np.ndarray:
    """``Q^{ab}(F^a, F^b)`` at every lattice node; leading axes of F are batched."""
    if quad.mode == "monte-carlo":
        return eval_Q_mc(masses, kernel, quad, F_alpha, F_beta, species_pair, grid=grid)[0]
    gain, loss, lead = _q_parts(masses, kernel, quad, F_alpha, F_beta, species_pair, grid)
    return _restore(gain - loss, lead, grid)


def eval_Q_mc(masses: MassPair, kernel: AngularKernel, quad: QuadratureSpec, F_alpha, F_beta,
              species_pair=("A", "B"), *, grid: VelocityGrid) -> tuple[np.ndarray, np.ndarray]:
    """Monte-Carlo directions: batch mean and its standard error at every node."""
    if quad.mode != "monte-carlo":
        quad = quad.replace(mode="monte-carlo")
    samples = []
    for k in range(quad.mc_batches):
        gain, loss, lead = _q_parts(masses, kernel, quad, F_alpha, F_beta, species_pair, grid, batch=k)
        samples.append(_restore(gain - loss, lead, grid))
    samples = np.stack(samples)
    mean = samples.mean(axis=0)
    stderr = samples.std(axis=0, ddof=1) / np.sqrt(quad.mc_batches)
    return mean, stderr


def eval_Gamma(masses: MassPair, kernel: AngularKernel, quad: QuadratureSpec, f_alpha, f_beta,
               species_pair=("A", "B"), *, grid: VelocityGrid) -> tuple[np.ndarray, np.ndarray]:
    """Gain and loss parts of ``mu_a^{-1/2} Q^{ab}(sqrt(mu_a) f^a, sqrt(mu_b) f^b)``.

    The energy identity turns ``sqrt(mu_a(v') mu_b(v_*')) / sqrt(mu_a(v))`` into
    ``sqrt(mu_b(v_*))``, so nothing is ever divided by a small Maxwellian.
    """
    a, b = (species_index(s) for s in species_pair)
    ms = _species_masses(masses)
    fa, lead = _as_columns(f_alpha, grid, "f_alpha")
    fb, lead_b = _as_columns(f_beta, grid, "f_beta")
    if lead != lead_b:
        raise ContractError("f_alpha and f_beta have different batch shapes")
    _check_finite(fa, grid, "f_alpha")
    _check_finite(fb, grid, "f_beta")
    setup = _PairSetup(grid, kernel, quad, ms[a], ms[b])
    pre = sqrt_maxwellian(ms[b], grid.nodes)
    gain, loss = _evaluate(setup, fa, fb, False, pre, fa, fb, symmetric=_is_symmetric(grid, fa, fb))
    _check_finite(gain, grid, "Gamma gain")
    return _restore(gain, lead, grid), _restore(loss, lead, grid)


def collision_operator(masses: MassPair, kernel: AngularKernel, quad: QuadratureSpec, F,
                       *, grid: VelocityGrid) -> np.ndarray:
    """``(C F)^a = sum_b Q^{ab}(F^a, F^b)`` for F of shape (2, N)."""
    F = np.asarray(F, dtype=float)
    if F.shape != (2, grid.size):
        raise ContractError(f"expected a species pair of shape (2, {grid.size}), got {F.shape}")
    out = np.zeros_like(F)
    for a in range(2):
        for b in range(2):
            out[a] += eval_Q(masses, kernel, quad, F[a], F[b], (a, b), grid=grid)
    return out


def _pair_field(F, grid: VelocityGrid) -> np.ndarray:
    if isinstance(F, DistributionPair):
        if F.vgrid != grid:
            raise ContractError("distribution and quadrature grid differ")
        if F.data.shape[1] != 1:
            raise ContractError("expected a distribution at a single spatial point")
        return F.data[:, 0, :]
    F = np.asarray(F, dtype=float)
    if F.shape != (2, grid.size):
        raise ContractError(f"expected a species pair of shape (2, {grid.size}), got {F.shape}")
    return F


def conservative_correction(masses: MassPair, grid: VelocityGrid, C) -> np.ndarray:
    """Remove the discrete invariant pairings of a collision field.

    ``C`` has shape (2, N) or (2, X, N).  The smallest change in the
    ``mu``-weighted sense, ``dC^a = mu^a sum_j lam_j Psi_j^a``, is subtracted
    so that ``<C, Psi_j> = 0`` holds exactly for all six invariants; the tails
    are left almost untouched.
    """
    C = np.asarray(C, dtype=float)
    flat = C[:, None, :] if C.ndim == 2 else C
    if flat.ndim != 3 or flat.shape[0] != 2 or flat.shape[2] != grid.size:
        raise ContractError(f"expected shape (2, N) or (2, X, N) with N = {grid.size}, got {C.shape}")
    ms = _species_masses(masses)
    mu = np.stack([maxwellian(m, grid.nodes) for m in ms])
    psi = invariant_functions(masses, grid)
    wpsi = psi * grid.weights
    gram = np.einsum("jsv,ksv,sv->jk", wpsi, psi, mu)
    lam = np.linalg.solve(gram, np.einsum("jsv,sxv->jx", wpsi, flat))
    out = flat - np.einsum("jx,jsv,sv->sxv", lam, psi, mu)
    return out[:, 0, :] if C.ndim == 2 else out


def entropy_production(masses: MassPair, kernel: AngularKernel, quad: QuadratureSpec, F,
                       *, grid: VelocityGrid, conservative: bool = True) -> float:
    """``sum_{a,b} <Q^{ab}(F^a, F^b), log F^a>`` in the strong (node) form.

    ``log mu`` is a combination of invariants, so any quadrature error in the
    invariant pairings of C leaks into this sum with large weights.  By
    default that part is removed first (:func:`conservative_correction`);
    ``conservative=False`` gives the uncorrected sum.
    """
    F = _pair_field(F, grid)
    if np.any(~(F > 0)):
        node = int(np.argwhere(~(F > 0))[0, 1])
        raise DomainError(f"entropy needs F > 0; violated at velocity node {node}")
    C = collision_operator(masses, kernel, quad, F, grid=grid)
    if conservative:
        C = conservative_correction(masses, grid, C)
    return float(np.sum(C * np.log(F) * grid.weights))


def entropy_production_oracle(masses: MassPair, kernel: AngularKernel, quad: QuadratureSpec, F,
                              *, grid: VelocityGrid) -> float:
    """Symmetrized form ``-1/4 sum W (P' - P) log(P'/P)`` per ordered pair; nonpositive term by term."""
    F = _pair_field(F, grid)
    if np.any(~(F > 0)):
        raise DomainError("entropy needs F > 0")
    ms = _species_masses(masses)
    dirs, dwt = hemisphere_rule(quad.sphere_degree)
    rel = quad.interpolation == "relative"
    total = 0.0
    for a in range(2):
        for b in range(2):
            ma, mb = ms[a], ms[b]
            Fa, Fb = F[a][None, :], F[b][None, :]
            Ga = _relative_source(Fa, ma, grid) if rel else np.ascontiguousarray(Fa)
            Gb = _relative_source(Fb, mb, grid) if rel else np.ascontiguousarray(Fb)
            total += _engine.weak_entropy(grid.nodes, grid.weights, -grid.radius, grid.spacing, grid.n,
                                          quad.gamma, dirs, dwt, kernel.code, kernel.total,
                                          2 * ma / (ma + mb), 2 * mb / (ma + mb), ma, mb, Ga, Gb, rel,
                                          F[a], F[b])
    return total


def invariant_functions(masses: MassPair, grid: VelocityGrid) -> np.ndarray:
    """Unweighted invariants ``(e1, e2, m v1, m v2, m v3, m |v|^2)``, shape (6, 2, N)."""
    v = grid.nodes
    m = np.array(_species_masses(masses))[:, None]
    out = np.zeros((6, 2, grid.size))
    out[0, 0] = 1.0
    out[1, 1] = 1.0
    for d in range(3):
        out[2 + d] = m * v[None, :, d]
    out[5] = m * np.sum(v * v, axis=1)[None, :]
    return out


def collision_invariant_pairing(masses: MassPair, kernel: AngularKernel, quad: QuadratureSpec, F,
                                *, grid: VelocityGrid) -> np.ndarray:
    """``<C F, Psi_j>`` for the six invariants, strong form."""
    F = _pair_field(F, grid)
    C = collision_operator(masses, kernel, quad, F, grid=grid)
    psi = invariant_functions(masses, grid)
    return np.einsum("sv,jsv,v->j", C, psi, grid.weights)


def pairing_oracle(masses: MassPair, kernel: AngularKernel, quad: QuadratureSpec, F,
                   *, grid: VelocityGrid) -> np.ndarray:
    """Weak-form pairing with exact post-collision bookkeeping; vanishes to rounding."""
    F = _pair_field(F, grid)
    ms = _species_masses(masses)
    dirs, dwt = hemisphere_rule(quad.sphere_degree)
    out = np.zeros(6)
    for a in range(2):
        for b in range(2):
            ma, mb = ms[a], ms[b]
            part = np.zeros(6)
            _engine.weak_pairing(grid.nodes, grid.weights, quad.gamma, dirs, dwt, kernel.code, kernel.total,
                                 2 * ma / (ma + mb), 2 * mb / (ma + mb), ma, mb, F[a], F[b], part)
            out += 0.5 * part
    return out


def random_positive_state(masses: MassPair, grid: VelocityGrid, seed: int,
                          temperature: Sequence[float] = (0.8, 1.2)) -> np.ndarray:
    """Sum of two randomly shifted and heated Maxwellians per species, shape (2, N)."""
    rng = np.random.default_rng(seed)
    out = np.zeros((2, grid.size))
    for s, m in enumerate(_species_masses(masses)):
        for _ in range(2):
            T = rng.uniform(*temperature)
            shift = rng.uniform(-0.3, 0.3, size=3) / np.sqrt(m)
            weight = rng.uniform(0.3, 0.7)
            d = grid.nodes - shift
            out[s] += weight * (m / (2 * np.pi * T)) ** 1.5 * np.exp(-0.5 * m * np.sum(d * d, axis=1) / T)
    return out
