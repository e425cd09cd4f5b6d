"""Linearized collision operator ``L = nu + K`` on the velocity lattice.

Two discretizations are provided.  The *collocation* matrix evaluates
``nu f + K1 f + K2 f`` at the nodes with the lattice, directions and
coincident-node correction of the nonlinear operator; f is interpolated
trilinearly at post-collision points and the sqrt(mu) factors are exact.  It
agrees with the linearization of the discrete Gamma up to the interpolation
error of sqrt(mu).  The
*Galerkin* matrix discretizes the symmetric bilinear form

    <L f, g> = sum over ordered pairs (a, b) of 1/4 iiint B Dab[f] Dab[g]

with ``Dab[f] = sqrt(mu_b)(v_*') f^a(v') + sqrt(mu_a)(v') f^b(v_*')
- sqrt(mu_b)(v_*) f^a(v) - sqrt(mu_a)(v) f^b(v_*)``; it is symmetric and
positive semidefinite by construction and is what the coercivity estimate uses.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import linalg as sla
from scipy.integrate import quad as quad1

from . import _engine
from .collision import (AngularKernel, QuadratureSpec, _difference_powers, hemisphere_rule, singular_constants,
                        species_index)
from .equilibrium import InvariantBasis, bimaxwellian_on_grid
from .errors import AssemblyError, ConfigurationError, ContractError, NumericalError
from .kinematics import MassPair
from .vgrid import MultiIndex, VelocityGrid

__all__ = [
    "KernelSplitConfig",
    "AssembledL",
    "CoercivityResult",
    "eval_nu",
    "nu_on_grid",
    "frequency_matrix",
    "collocation_matrix",
    "apply_K",
    "split_Ks_Kc",
    "ks_ratio",
    "assemble_L",
    "estimate_coercivity",
    "probe_derivative_estimates",
    "MEMORY_BUDGET_BYTES",
]

MEMORY_BUDGET_BYTES = 2 * 1024 ** 3


@dataclass(frozen=True)
class KernelSplitConfig:
    """Cutoff scale ``epsilon`` of the ramp chi and truncation radius ``m_trunc``."""

    epsilon: float = 0.25
    m_trunc: float = 6.0
    chi_profile: str = "smootherstep"

    def __post_init__(self) -> None:
        if not np.isfinite(self.epsilon) or self.epsilon <= 0:
            raise ConfigurationError(f"epsilon must be positive, got {self.epsilon!r}")
        if not np.isfinite(self.m_trunc) or self.m_trunc <= 0:
            raise ConfigurationError(f"m_trunc must be positive, got {self.m_trunc!r}")
        if self.chi_profile != "smootherstep":
            raise ConfigurationError(f"unknown chi profile {self.chi_profile!r}")

    def chi(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        s = np.clip((r - self.epsilon) / self.epsilon, 0.0, 1.0)
        return s ** 3 * (10.0 + s * (-15.0 + 6.0 * s))

    def check_split(self) -> None:
        if not self.epsilon < 1.0:
            raise ConfigurationError(f"the K split needs epsilon < 1, got {self.epsilon}")
        if not self.m_trunc > 1.0:
            raise ConfigurationError(f"the K split needs m_trunc > 1, got {self.m_trunc}")


# ------------------------------------------------------------- frequency nu


def _radial_angle_average(speed: float, r: np.ndarray | float, gamma: float) -> float:
    """(1/2pi) * integral over the sphere of |v - r omega|^gamma, for |v| = speed."""
    if speed == 0.0:
        return 2.0 * r ** gamma
    a, b = speed + r, abs(speed - r)
    if abs(gamma + 2.0) < 1e-12:
        return math.log(a / b) / (speed * r) if b > 0 else math.inf
    p = gamma + 2.0
    return (a ** p - b ** p) / (p * speed * r)


def eval_nu(masses: MassPair, kernel: AngularKernel, quad: QuadratureSpec, species, v) -> float:
    """Collision frequency from the exact radial reduction; the same for both species."""
    species_index(species)
    gamma = quad.gamma
    speed = float(np.linalg.norm(np.asarray(v, dtype=float)))
    total = 0.0
    for m in (masses.m_alpha, masses.m_beta):
        norm = (m / (2.0 * np.pi)) ** 1.5

        def integrand(r, m=m, norm=norm):
            if r == 0.0:
                return 0.0
            return 2.0 * np.pi * r * r * norm * math.exp(-0.5 * m * r * r) * _radial_angle_average(speed, r, gamma)

        upper = speed + 40.0 / math.sqrt(m)
        pts = [speed] if speed > 0 else None
        val, err = quad1(integrand, 0.0, upper, points=pts, limit=400, epsabs=1e-13, epsrel=1e-12)
        if not np.isfinite(val):
            raise NumericalError(f"collision frequency integral failed at |v| = {speed}")
        total += val
    return kernel.total * total


def nu_on_grid(masses: MassPair, kernel: AngularKernel, quad: QuadratureSpec, grid: VelocityGrid) -> np.ndarray:
    """Discrete frequency ``nu_h(v_i)``: lattice sum with the coincident-node correction."""
    return _nu_cached(masses, kernel, quad.gamma, quad.singular_box, grid).copy()


@lru_cache(maxsize=16)
def _nu_cached(masses, kernel, gamma, box, grid):
    mu = bimaxwellian_on_grid(masses, grid).sum(axis=0)[None, :]
    _, _, gam = _difference_powers(grid, gamma)
    rows = np.arange(grid.size, dtype=np.int64)
    gain = np.zeros((grid.size, 1))
    loss = np.zeros((grid.size, 1))
    c1 = singular_constants(grid, gamma, box).full
    _engine.loss_lattice(rows, grid.index_offsets, grid.n, grid.weights, gam, np.ones(grid.size),
                         kernel.total, c1, np.ones((1, grid.size)), np.ascontiguousarray(mu), gain, loss)
    return loss[:, 0]


def _frequency_rows(kernel, gamma, box, grid, rows) -> np.ndarray:
    nodes = grid.nodes
    diff = nodes[rows][:, None, :] - nodes[None, :, :]
    dist = np.linalg.norm(diff, axis=2)
    with np.errstate(divide="ignore"):
        out = np.where(dist > 0, dist ** gamma, 0.0) * grid.weights[None, :]
    c1 = singular_constants(grid, gamma, box).full
    out[np.arange(len(rows)), rows] = c1
    return kernel.total * out


def frequency_matrix(kernel: AngularKernel, quad: QuadratureSpec, grid: VelocityGrid) -> np.ndarray:
    """``Lambda`` with ``(Lambda g)(v_i) = sum_j B W_j g_j`` including the local correction."""
    _budget(grid.size ** 2, "frequency matrix")
    return _frequency_rows(kernel, quad.gamma, quad.singular_box, grid, np.arange(grid.size))


def _budget(entries: int, what: str) -> None:
    if 8 * entries > MEMORY_BUDGET_BYTES:
        raise AssemblyError(f"{what} needs {8 * entries / 1e9:.2f} GB, above the "
                            f"{MEMORY_BUDGET_BYTES / 1e9:.2f} GB budget; use a coarser grid")


# ------------------------------------------------------------ collocation


_MASK = {"all": _engine.MASK_ALL, "compact": _engine.MASK_COMPACT, "small": _engine.MASK_SMALL}


def _k_rows(masses, kernel, quad, grid, row_species, row_nodes, mode, split):
    """Rows of K1 + K2 (not nu) for the given (species, node) pairs."""
    ms = (masses.m_alpha, masses.m_beta)
    sq = bimaxwellian_on_grid(masses, grid, sqrt=True)
    N = grid.size
    dirs, dwt = hemisphere_rule(quad.sphere_degree)
    eps = split.epsilon if split else 1.0
    mtrunc = split.m_trunc if split else 0.0
    consts = singular_constants(grid, quad.gamma, quad.singular_box, eps if split else None)
    out = np.zeros((len(row_nodes), 2 * N))
    for a in (0, 1):
        sel = np.flatnonzero(row_species == a)
        if sel.size == 0:
            continue
        rows = np.ascontiguousarray(row_nodes[sel])
        block = np.zeros((sel.size, 2 * N))
        for b in (0, 1):
            ma, mb = ms[a], ms[b]
            _engine.k1_rows(rows, grid.nodes, grid.speed, grid.weights, quad.gamma, kernel.total,
                            consts.full, consts.chi, sq[a], sq[b], b * N, mode, eps, mtrunc, block)
            _engine.k2_rows(rows, grid.nodes, grid.speed, grid.weights, -grid.radius, grid.spacing, grid.n,
                            quad.gamma, dirs, dwt, kernel.code, kernel.total, consts.full, consts.chi,
                            2 * ma / (ma + mb), 2 * mb / (ma + mb), ma, mb, sq[a], sq[b], a * N, b * N,
                            mode, eps, mtrunc, block)
        out[sel] = block
    return out


def _expand(grid: VelocityGrid, fd_rows: np.ndarray, species: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    N = grid.size
    full = np.zeros((2 * N, 2 * N))
    _engine.expand_rows(fd_rows, species, nodes, grid.symmetry.perms, 2, N, full)
    return full


def collocation_matrix(masses: MassPair, kernel: AngularKernel, quad: QuadratureSpec, grid: VelocityGrid,
                       part: str = "K", split: KernelSplitConfig | None = None) -> np.ndarray:
    """Dense collocation matrix of ``K`` (part="K"), ``K_c``/``K_s`` or ``L`` (part="L").

    Only fundamental-domain rows are integrated; the rest follow from the
    cube symmetry of the lattice and the quadrature.
    """
    if part not in ("K", "L", "Kc", "Ks"):
        raise ContractError(f"unknown operator part {part!r}")
    if quad.mode != "deterministic":
        raise ConfigurationError("matrix assembly needs the deterministic quadrature")
    if part in ("Kc", "Ks") and split is None:
        raise ContractError("K_c / K_s need a KernelSplitConfig")
    _budget(4 * grid.size ** 2, "collocation matrix")
    mode = {"K": "all", "L": "all", "Kc": "compact", "Ks": "small"}[part]
    sym = grid.symmetry
    dom = sym.domain
    species = np.repeat(np.array([0, 1], dtype=np.int64), dom.size)
    nodes = np.concatenate([dom, dom]).astype(np.int64)
    fd = _k_rows(masses, kernel, quad, grid, species, nodes, _MASK[mode], split if mode != "all" else None)
    M = _expand(grid, fd, species, nodes)
    if part == "L":
        nu = nu_on_grid(masses, kernel, quad, grid)
        M[np.diag_indices_from(M)] += np.concatenate([nu, nu])
    return M


def apply_K(masses: MassPair, kernel: AngularKernel, quad: QuadratureSpec, f, *, grid: VelocityGrid) -> np.ndarray:
    """``(K f)`` for a species pair ``f`` of shape (2, N) (or batched (..., 2, N))."""
    f = np.asarray(f, dtype=float)
    if f.shape[-2:] != (2, grid.size):
        raise ContractError(f"expected (..., 2, {grid.size}), got {f.shape}")
    M = _cached_matrix(masses, kernel, quad, grid, "K", None)
    flat = f.reshape(-1, 2 * grid.size)
    return (flat @ M.T).reshape(f.shape)


@lru_cache(maxsize=8)
def _cached_matrix(masses, kernel, quad, grid, part, split):
    M = collocation_matrix(masses, kernel, quad, grid, part, split)
    M.setflags(write=False)
    return M


def split_Ks_Kc(config: KernelSplitConfig, masses: MassPair, kernel: AngularKernel, quad: QuadratureSpec, f,
                *, grid: VelocityGrid, l: float = 0.0):
    """``(K_s f, K_c f, ratio)`` with the measured weighted operator ratio of ``K_s``."""
    config.check_split()
    f = np.asarray(f, dtype=float)
    if f.shape[-2:] != (2, grid.size):
        raise ContractError(f"expected (..., 2, {grid.size}), got {f.shape}")
    Ks = _cached_matrix(masses, kernel, quad, grid, "Ks", config)
    Kc = _cached_matrix(masses, kernel, quad, grid, "Kc", config)
    flat = f.reshape(-1, 2 * grid.size)
    ks_f = (flat @ Ks.T).reshape(f.shape)
    kc_f = (flat @ Kc.T).reshape(f.shape)
    return ks_f, kc_f, ks_ratio(Ks, grid, quad.gamma, l)


def ks_ratio(Ks: np.ndarray, grid: VelocityGrid, gamma: float, l: float = 0.0) -> float:
    """``sup |<w^{2l} K_s f, g>| / (|w^l f|_nu |w^l g|_nu)`` on the grid."""
    w = (1.0 + grid.speed) ** gamma
    W = grid.weights
    num = np.tile(W * w ** (2 * l), 2)
    den = np.tile(np.sqrt(W * w ** (2 * l + 1)), 2)
    S = (num[:, None] * Ks) / den[:, None] / den[None, :]
    return float(np.linalg.norm(S, 2))


# --------------------------------------------------------------- Galerkin


def galerkin_matrix(masses: MassPair, kernel: AngularKernel, quad: QuadratureSpec, grid: VelocityGrid) -> np.ndarray:
    """Symmetric PSD matrix ``B`` with ``g^T B f ~ <L f, g>_{L^2}``."""
    if quad.mode != "deterministic":
        raise ConfigurationError("matrix assembly needs the deterministic quadrature")
    N = grid.size
    _budget(2 * (2 * N) ** 2, "Galerkin matrix")
    ms = (masses.m_alpha, masses.m_beta)
    sq = bimaxwellian_on_grid(masses, grid, sqrt=True)
    dirs, dwt = hemisphere_rule(quad.sphere_degree)
    sym = grid.symmetry
    rows = np.ascontiguousarray(sym.domain)
    upper = np.zeros((2 * N, 2 * N))
    for a, b, factor in ((0, 0, 0.25), (1, 1, 0.25), (0, 1, 0.5)):
        ma, mb = ms[a], ms[b]
        _engine.galerkin_rows(rows, sym.domain_weight, grid.nodes, grid.weights, -grid.radius, grid.spacing,
                              grid.n, quad.gamma, dirs, dwt, kernel.code, kernel.total,
                              2 * ma / (ma + mb), 2 * mb / (ma + mb), ma, mb, sq[a], sq[b], a * N, b * N,
                              factor, upper)
    partial = upper + upper.T
    partial[np.diag_indices_from(partial)] *= 0.5
    del upper
    B = np.zeros_like(partial)
    _engine.symmetrize_group(partial, sym.perms, 2, N, B)
    return 0.5 * (B + B.T)


@dataclass(frozen=True)
class AssembledL:
    """Assembled linearized operator on one grid.

    ``matrix`` is the Galerkin operator in the symmetric scaling
    ``W^{-1/2} B W^{-1/2}`` (acts on ``W^{1/2} f``).  ``K_matrix`` is
    ``W^{-1} B - diag(nu)``.  The collocation matrix, its asymmetry in the
    ``W`` inner product and both sets of invariant residuals are kept for
    reporting.
    """

    masses: MassPair
    kernel: AngularKernel
    quad: QuadratureSpec
    grid: VelocityGrid
    nu_diag: np.ndarray
    matrix: np.ndarray
    K_matrix: np.ndarray
    collocation: np.ndarray
    asymmetry: float
    kernel_residuals: np.ndarray
    collocation_residuals: np.ndarray
    metadata: dict = field(default_factory=dict)

    def apply(self, f: np.ndarray) -> np.ndarray:
        """Galerkin ``L f`` for ``f`` of shape (2, N)."""
        s = np.tile(np.sqrt(self.grid.weights), 2)
        return ((self.matrix @ (s * f.ravel())) / s).reshape(f.shape)

    def rayleigh(self, f: np.ndarray) -> float:
        """``<L f, f> / <f, f>`` in L^2_v."""
        s = np.tile(np.sqrt(self.grid.weights), 2)
        y = s * np.asarray(f, dtype=float).ravel()
        return float(y @ self.matrix @ y / (y @ y))


def _nu_norm(grid: VelocityGrid, gamma: float, f: np.ndarray) -> float:
    w = (1.0 + grid.speed) ** gamma
    return float(np.sqrt(np.sum(f * f * (grid.weights * w)[None, :])))


def assemble_L(masses: MassPair, kernel: AngularKernel, quad: QuadratureSpec, grid: VelocityGrid,
               basis: InvariantBasis | None = None) -> AssembledL:
    from .equilibrium import build_invariant_basis

    if basis is None:
        basis = build_invariant_basis(masses, grid)
    N = grid.size
    B = galerkin_matrix(masses, kernel, quad, grid)
    W = np.tile(grid.weights, 2)
    s = np.sqrt(W)
    A = B / s[:, None] / s[None, :]
    nu = nu_on_grid(masses, kernel, quad, grid)
    K = B / W[:, None]
    K[np.diag_indices_from(K)] -= np.concatenate([nu, nu])
    C = collocation_matrix(masses, kernel, quad, grid, "L")
    Cs = s[:, None] * C / s[None, :]
    asym = float(np.linalg.norm(Cs - Cs.T) / np.linalg.norm(Cs))
    chi = basis.basis.reshape(6, 2 * N)
    res = np.array([_nu_norm(grid, quad.gamma, ((B @ c) / W).reshape(2, N)) for c in chi])
    cres = np.array([_nu_norm(grid, quad.gamma, (C @ c).reshape(2, N)) for c in chi])
    meta = {"grid": grid.describe(), "gamma": quad.gamma, "kernel": kernel.family, "c_b": kernel.c_b,
            "masses": [masses.m_alpha, masses.m_beta], "sphere_degree": quad.sphere_degree}
    return AssembledL(masses, kernel, quad, grid, nu, A, K, C, asym, res, cres, meta)


# ------------------------------------------------------------ coercivity


@dataclass(frozen=True)
class CoercivityResult:
    delta_hat: float
    eigvec: np.ndarray
    orthogonality: float
    residual: float
    cross_check: float
    kernel_rayleigh_max: float
    spectrum: np.ndarray

    @property
    def cross_check_gap(self) -> float:
        return abs(self.cross_check - self.delta_hat) / abs(self.delta_hat)


def _deflated_pencil(L: AssembledL, basis: InvariantBasis):
    grid = L.grid
    N = grid.size
    W = np.tile(grid.weights, 2)
    d = np.tile((1.0 + grid.speed) ** L.quad.gamma, 2)
    C = (np.sqrt(W)[None, :] * basis.basis.reshape(6, 2 * N)).T
    H = L.matrix / np.sqrt(d)[:, None] / np.sqrt(d)[None, :]
    Ct, _ = np.linalg.qr(C / np.sqrt(d)[:, None])
    return H, Ct, W, d


def estimate_coercivity(L: AssembledL, basis: InvariantBasis, *, full_spectrum: bool = False,
                        max_iter: int = 500, tol: float = 1e-10) -> CoercivityResult:
    """Smallest eigenvalue of ``<L f, f> / |f|_nu^2`` over f L^2-orthogonal to the invariants.

    Dense symmetric eigensolve of the deflated pencil, cross-checked by
    shift-inverted power iteration on the same operator.
    """
    if basis.grid != L.grid:
        raise ContractError("basis and operator live on different grids")
    H, Ct, W, d = _deflated_pencil(L, basis)
    P = np.eye(H.shape[0]) - Ct @ Ct.T
    Hp = P @ H @ P
    Hp = 0.5 * (Hp + Hp.T)
    shift = 10.0 * float(np.max(np.abs(np.diag(H)))) + 1.0
    Hd = Hp + shift * (Ct @ Ct.T)
    if full_spectrum:
        vals, vecs = sla.eigh(Hd)
        lam, z = vals[0], vecs[:, 0]
        spectrum = np.sort(vals[vals < 0.5 * shift])
    else:
        vals, vecs = sla.eigh(Hd, subset_by_index=[0, 0])
        lam, z = vals[0], vecs[:, 0]
        spectrum = vals
    resid = float(np.linalg.norm(Hd @ z - lam * z))
    if resid > 1e-6 * max(1.0, abs(lam)):
        raise NumericalError(f"eigensolve did not converge (residual {resid:.3e})")
    check = _inverse_iteration(Hd, lam, max_iter, tol)
    y = z / np.sqrt(d)
    f = y / np.sqrt(W)
    f /= np.sqrt(np.sum(W * d * f * f))
    orth = float(np.max(np.abs(basis.coefficients(f.reshape(2, -1)))))
    # Rayleigh quotients of L restricted to the invariant span
    Ck = (np.sqrt(W)[None, :] * basis.basis.reshape(6, -1)).T
    sub = Ck.T @ L.matrix @ Ck
    ker = float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (sub + sub.T)))))
    return CoercivityResult(float(lam), f.reshape(2, -1), orth, resid, check, ker, spectrum)


def _inverse_iteration(H: np.ndarray, guess: float, max_iter: int, tol: float) -> float:
    """Independent route: Rayleigh-quotient refinement from a shifted LU solve."""
    n = H.shape[0]
    sigma = guess - 1e-3 * max(abs(guess), 1e-6)
    lu = sla.lu_factor(H - sigma * np.eye(n))
    x = np.random.default_rng(12345).standard_normal(n)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(max_iter):
        y = sla.lu_solve(lu, x)
        y /= np.linalg.norm(y)
        new = float(y @ H @ y)
        if abs(new - lam) <= tol * max(1.0, abs(new)):
            return new
        lam, x = new, y
    raise NumericalError(f"inverse iteration hit {max_iter} iterations (last change {abs(new - lam):.3e})")


# --------------------------------------------------- derivative estimates


@dataclass(frozen=True)
class DerivativeProbe:
    eta_grid: np.ndarray
    c_nu: np.ndarray
    c_K: np.ndarray
    lhs_nu: np.ndarray
    lhs_K: np.ndarray

    def feasible(self, eta_max: float = 0.5) -> bool:
        sel = self.eta_grid <= eta_max
        return bool(np.any(np.isfinite(self.c_nu[sel])) and np.any(np.isfinite(self.c_K[sel])))


def _v_derivative(grid: VelocityGrid, f: np.ndarray, axis: int) -> np.ndarray:
    n, h = grid.n, grid.spacing
    arr = f.reshape(f.shape[:-1] + (n, n, n))
    ax = arr.ndim - 3 + axis
    return np.gradient(arr, h, axis=ax, edge_order=2).reshape(f.shape)


def probe_derivative_estimates(masses: MassPair, kernel: AngularKernel, quad: QuadratureSpec, f_samples,
                               beta: MultiIndex, l: float = 0.0, *, grid: VelocityGrid,
                               eta_grid=(0.05, 0.1, 0.2, 0.3, 0.4, 0.5)) -> DerivativeProbe:
    """Measured constants of the weighted derivative estimates for ``nu`` and ``K``.

    For each eta the smallest ``C_eta`` is found such that, for all samples,
    ``<w^{2l} d(nu f), d f> >= |w^l d f|_nu^2 - eta S - C_eta |w^l f|_nu^2`` and
    ``|<w^{2l} d(K f), d f>| <= eta S + C_eta |w^l f|_nu^2`` where S sums
    ``|w^l d' f|_nu^2`` over ``|d'| <= |d|``.
    """
    if beta.order_x != 0 or beta.order_v != 1:
        raise ContractError("the probe expects a first-order velocity derivative")
    axis = int(np.flatnonzero(np.asarray(beta.beta))[0])
    samples = np.asarray(f_samples, dtype=float)
    if samples.ndim == 2:
        samples = samples[None]
    w = (1.0 + grid.speed) ** quad.gamma
    W = grid.weights
    nu = nu_on_grid(masses, kernel, quad, grid)
    K = _cached_matrix(masses, kernel, quad, grid, "K", None)

    def pair(a, b):
        return float(np.sum(a * b * (W * w ** (2 * l))[None, :]))

    def nusq(a):
        return float(np.sum(a * a * (W * w ** (2 * l + 1))[None, :]))

    lhs_nu, lhs_k, main, S, base = [], [], [], [], []
    for f in samples:
        df = _v_derivative(grid, f, axis)
        lhs_nu.append(pair(_v_derivative(grid, nu[None, :] * f, axis), df))
        lhs_k.append(pair(_v_derivative(grid, (K @ f.ravel()).reshape(2, -1), axis), df))
        main.append(nusq(df))
        S.append(nusq(df) + nusq(f))
        base.append(nusq(f))
    lhs_nu, lhs_k, main, S, base = map(np.asarray, (lhs_nu, lhs_k, main, S, base))
    etas = np.asarray(eta_grid, dtype=float)
    c_nu = np.array([np.max(np.maximum(0.0, main - eta * S - lhs_nu) / base) for eta in etas])
    c_k = np.array([np.max(np.maximum(0.0, np.abs(lhs_k) - eta * S) / base) for eta in etas])
    return DerivativeProbe(etas, c_nu, c_k, lhs_nu, lhs_k)
