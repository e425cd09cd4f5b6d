"""Time integration of the perturbation system on a periodic domain.

One step is Strang splitting: half a step of semi-Lagrangian transport, a
collision step, another half step of transport.  The collision step keeps
``nu f`` and the loss part of ``Gamma`` implicit (both are multiplications by
a frequency) and ``K f`` and the gain part explicit, then refines the new
state with a few fixed-point sweeps:

    f_{k+1} = (f_old - dt K f_k + dt Gamma_gain(f_k, f_k)) / (1 + dt nu + dt lambda[f_k])

Each sweep is sign-preserving for ``F = mu + sqrt(mu) f`` up to the explicit
terms.  A final projection restores the six collision invariants at every x,
so that the discrete operators conserve exactly what the continuous ones do.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _engine
from .collision import (AngularKernel, QuadratureSpec, _difference_powers, conservative_correction, eval_Gamma, eval_Q,
                        singular_constants)
from .equilibrium import (INVARIANT_NAMES, InvariantBasis, bimaxwellian_on_grid, build_invariant_basis,
                          conservation_functionals, project_P0, raw_invariants)
from .errors import ConfigurationError, ContractError, NumericalError
from .kinematics import MassPair
from .linop import AssembledL, assemble_L, collocation_matrix, nu_on_grid
from .vgrid import DistributionPair, MultiIndex, SpatialGrid, VelocityGrid, finite_diff, multi_indices, \
    weighted_norm_l2, weighted_norm_nu, WeightSpec

__all__ = [
    "SolverConfig",
    "MonitorRecord",
    "Operators",
    "RunResult",
    "build_operators",
    "transport",
    "collision_step",
    "step",
    "run",
    "coercivity_time_integral",
    "conservation_drift",
    "sweep_residual",
    "swap_species",
    "micro_initial",
]

DRIFT_FLOOR = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 0.05
    t_end: float = 1.0
    x_dims: int = 1
    x_points: int = 12
    v_points: int = 9
    v_radius: float | None = None
    inner_iterations: int = 2
    order: int = 1
    cfl: float = 0.9
    blowup_factor: float = 1e3
    monitor_entropy: bool = True
    monitor_coercivity: bool = True
    moment_correction: bool = True
    collisions: bool = True

    def __post_init__(self) -> None:
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if not (self.t_end >= 0 and math.isfinite(self.t_end)):
            raise ConfigurationError(f"t_end must be >= 0, got {self.t_end}")
        if self.x_dims not in (1, 3):
            raise ConfigurationError(f"x_dims must be 1 or 3, got {self.x_dims}")
        if self.x_points < 4:
            raise ConfigurationError(f"x_points must be >= 4 for cubic transport, got {self.x_points}")
        if self.v_points < 3 or self.v_points % 2 == 0:
            raise ConfigurationError(f"v_points must be odd and >= 3, got {self.v_points}")
        if self.inner_iterations < 1:
            raise ConfigurationError(f"inner_iterations must be >= 1, got {self.inner_iterations}")
        if self.order not in (0, 1, 2):
            raise ConfigurationError(f"order must be 0, 1 or 2, got {self.order}")
        if not self.cfl > 0:
            raise ConfigurationError(f"cfl must be positive, got {self.cfl}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def grids(self, masses: MassPair) -> tuple[VelocityGrid, SpatialGrid]:
        vg = VelocityGrid.for_masses(masses.m_min, self.v_points, self.v_radius)
        return vg, SpatialGrid(self.x_dims, self.x_points)

    def check_cfl(self, vgrid: VelocityGrid, xgrid: SpatialGrid) -> float:
        number = self.dt * float(vgrid.speed.max()) / xgrid.spacing
        if number > self.cfl:
            raise ConfigurationError(
                f"CFL number {number:.3f} exceeds the limit {self.cfl} (dt={self.dt}, h_x={xgrid.spacing:.4f}, "
                f"max|v|={vgrid.speed.max():.3f})")
        return number


@dataclass(frozen=True)
class MonitorRecord:
    t: float
    conservation: np.ndarray
    entropy_production: float
    energy_E: float
    instantaneous_norms: dict
    coercivity_numerator: float
    coercivity_denominator: float
    min_F: float
    picard_residual: float = 0.0

    def row(self) -> list:
        return ([self.t, *self.conservation, self.entropy_production, self.energy_E,
                 *self.instantaneous_norms.values(), self.coercivity_numerator, self.coercivity_denominator,
                 self.min_F, self.picard_residual])

    def header(self) -> list[str]:
        return (["t", *(f"cons_{n}" for n in INVARIANT_NAMES), "entropy_production", "energy_E",
                 *(f"norm_{k}" for k in self.instantaneous_norms), "coercivity_numerator",
                 "coercivity_denominator", "min_F", "picard_residual"])

    @property
    def instantaneous_total(self) -> float:
        return float(sum(self.instantaneous_norms.values()))


@dataclass
class Operators:
    """Everything the collision step and the monitors need, built once per run."""

    masses: MassPair
    kernel: AngularKernel
    quad: QuadratureSpec
    vgrid: VelocityGrid
    basis: InvariantBasis
    nu: np.ndarray
    K: np.ndarray
    L: AssembledL | None
    sqrt_mu: np.ndarray
    mu: np.ndarray
    csing: float
    gam: np.ndarray = field(repr=False)


def build_operators(masses: MassPair, kernel: AngularKernel, quad: QuadratureSpec, vgrid: VelocityGrid,
                    *, with_galerkin: bool = True) -> Operators:
    basis = build_invariant_basis(masses, vgrid)
    nu = nu_on_grid(masses, kernel, quad, vgrid)
    K = collocation_matrix(masses, kernel, quad, vgrid, "K")
    L = assemble_L(masses, kernel, quad, vgrid, basis) if with_galerkin else None
    _, _, gam = _difference_powers(vgrid, quad.gamma)
    csing = singular_constants(vgrid, quad.gamma, quad.singular_box).full
    return Operators(masses, kernel, quad, vgrid, basis, nu, K, L,
                     bimaxwellian_on_grid(masses, vgrid, sqrt=True), bimaxwellian_on_grid(masses, vgrid),
                     csing, gam)


# ------------------------------------------------------------------ transport


def _lagrange_weights(t: np.ndarray) -> np.ndarray:
    """Cubic Lagrange weights for stencil offsets -1, 0, 1, 2 at ``t`` in [0, 1)."""
    return np.stack([
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ])


def _shift_axis(a: np.ndarray, axis: int, shift: np.ndarray) -> np.ndarray:
    """``a(x - shift)`` along a periodic ``axis``; ``shift`` (in cells) per velocity node (last axis)."""
    a = np.moveaxis(a, axis, -2)
    nx = a.shape[-2]
    d = -shift
    base = np.floor(d)
    w = _lagrange_weights(d - base)
    base = base.astype(np.int64)
    out = np.zeros_like(a)
    cols = np.arange(a.shape[-1])
    for j, wj in zip((-1, 0, 1, 2), w):
        idx = (np.arange(nx)[:, None] + base[None, :] + j) % nx
        out += wj * a[..., idx, cols[None, :]]
    return np.moveaxis(out, -2, axis)


def transport(f: DistributionPair, tau: float) -> DistributionPair:
    """Exact-in-time advection ``f(x - v tau)`` with cubic interpolation, one axis at a time."""
    xg, vg = f.xgrid, f.vgrid
    a = f.data.reshape((2,) + xg.shape + (vg.size,))
    for d in range(xg.dims):
        a = _shift_axis(a, 1 + d, vg.nodes[:, d] * tau / xg.spacing)
    return DistributionPair(vg, xg, np.ascontiguousarray(a).reshape(f.data.shape))


# ------------------------------------------------------------------ collision


def _loss_frequency(ops: Operators, f: np.ndarray) -> np.ndarray:
    """``lambda[f](v) = int B sqrt(mu_b)(v_*) f^b(v_*)`` summed over b, shape (X, N)."""
    g = ops.vgrid
    src = np.ascontiguousarray(np.einsum("sv,sxv->xv", ops.sqrt_mu, f))
    X = src.shape[0]
    rows = np.arange(g.size, dtype=np.int64)
    gain = np.zeros((g.size, X))
    loss = np.zeros((g.size, X))
    _engine.loss_lattice(rows, g.index_offsets, g.n, g.weights, ops.gam, np.ones(g.size), ops.kernel.total,
                         ops.csing, np.ones((X, g.size)), src, gain, loss)
    return loss.T


def _gain(ops: Operators, f: np.ndarray) -> np.ndarray:
    out = np.zeros_like(f)
    for a in range(2):
        for b in range(2):
            gain, _ = eval_Gamma(ops.masses, ops.kernel, ops.quad, f[a], f[b], (a, b), grid=ops.vgrid)
            out[a] += gain
    return out


def _apply_K(ops: Operators, f: np.ndarray) -> np.ndarray:
    X, N = f.shape[1], f.shape[2]
    flat = np.moveaxis(f, 0, 1).reshape(X, 2 * N)
    return np.moveaxis((flat @ ops.K.T).reshape(X, 2, N), 1, 0)


def _sweep(ops: Operators, f_old: np.ndarray, f_k: np.ndarray, dt: float) -> np.ndarray:
    num = f_old - dt * _apply_K(ops, f_k) + dt * _gain(ops, f_k)
    den = 1.0 + dt * ops.nu[None, None, :] + dt * _loss_frequency(ops, f_k)[None, :, :]
    return num / den


def collision_step(ops: Operators, f: np.ndarray, dt: float, sweeps: int,
                   moment_correction: bool = True) -> tuple[np.ndarray, float]:
    """Collision substep on ``f`` of shape (2, X, N); returns the state and the last sweep change."""
    f_old = f
    f_k = f
    change = 0.0
    for _ in range(sweeps):
        f_next = _sweep(ops, f_old, f_k, dt)
        change = float(np.max(np.abs(f_next - f_k)))
        f_k = f_next
    if moment_correction:
        arr = np.moveaxis(f_k, 0, 1)
        fix = project_P0(ops.basis, np.moveaxis(f_old, 0, 1)) - project_P0(ops.basis, arr)
        f_k = np.moveaxis(arr + fix, 1, 0)
    return np.ascontiguousarray(f_k), change


def step(config: SolverConfig, state: DistributionPair, ops: Operators) -> tuple[DistributionPair, float]:
    """One Strang step; returns the new state and the last fixed-point change."""
    if state.vgrid != ops.vgrid:
        raise ContractError("state and operators live on different velocity grids")
    if not state.is_finite():
        raise NumericalError("state contains non-finite values")
    config.check_cfl(state.vgrid, state.xgrid)
    half = transport(state, 0.5 * config.dt)
    change = 0.0
    data = half.data
    if config.collisions:
        data, change = collision_step(ops, half.data, config.dt, config.inner_iterations, config.moment_correction)
    return transport(DistributionPair(state.vgrid, state.xgrid, data), 0.5 * config.dt), change


# ------------------------------------------------------------------ monitors


def _entropy(ops: Operators, f: DistributionPair) -> float:
    """``sum_x <C F, log F> dx`` with ``F = mu + sqrt(mu) f``; NaN if F is not positive."""
    F = ops.mu[:, None, :] + ops.sqrt_mu[:, None, :] * f.data
    if np.any(F <= 0):
        return float("nan")
    C = np.zeros_like(F)
    for a in range(2):
        for b in range(2):
            C[a] += eval_Q(ops.masses, ops.kernel, ops.quad, F[a], F[b], (a, b), grid=ops.vgrid)
    C = conservative_correction(ops.masses, ops.vgrid, C)
    return float(np.sum(C * np.log(F) * ops.vgrid.weights)) * f.xgrid.cell_volume


def _x_indices(config: SolverConfig, xdims: int) -> list[MultiIndex]:
    return multi_indices(config.order, xdims, velocity=False)


def _coercivity_parts(ops: Operators, config: SolverConfig, f: DistributionPair) -> tuple[float, float]:
    if ops.L is None:
        return float("nan"), float("nan")
    s = np.tile(np.sqrt(ops.vgrid.weights), 2)
    num = den = 0.0
    for mi in _x_indices(config, f.xgrid.dims):
        g = f if mi.order == 0 else finite_diff(f, mi)
        flat = np.moveaxis(g.data, 0, 1).reshape(g.data.shape[1], -1) * s[None, :]
        num += float(np.einsum("xi,ij,xj->", flat, ops.L.matrix, flat)) * f.xgrid.cell_volume
        den += weighted_norm_nu(WeightSpec(ops.quad.gamma), g) ** 2
    return num, den


def _norms(config: SolverConfig, gamma: float, f: DistributionPair) -> tuple[dict, dict]:
    l2, nu = {}, {}
    for mi in multi_indices(config.order, f.xgrid.dims):
        g = f if mi.order == 0 else finite_diff(f, mi)
        spec = WeightSpec(gamma, float(mi.order_v))
        l2[mi.label()] = weighted_norm_l2(spec, g) ** 2
        nu[mi.label()] = weighted_norm_nu(spec, g) ** 2
    return l2, nu


class _Monitor:
    def __init__(self, config: SolverConfig, ops: Operators):
        self.config = config
        self.ops = ops
        self.dissipation = 0.0
        self.prev = None

    def record(self, t: float, f: DistributionPair, change: float) -> MonitorRecord:
        ops, cfg = self.ops, self.config
        l2, nu = _norms(cfg, ops.quad.gamma, f)
        nu_total = sum(nu.values())
        if self.prev is not None:
            t0, nu0 = self.prev
            self.dissipation += 0.5 * (nu_total + nu0) * (t - t0)
        self.prev = (t, nu_total)
        energy = 0.5 * sum(l2.values()) + self.dissipation
        num, den = _coercivity_parts(ops, cfg, f) if cfg.monitor_coercivity else (float("nan"),) * 2
        ent = _entropy(ops, f) if cfg.monitor_entropy else float("nan")
        F = ops.mu[:, None, :] + ops.sqrt_mu[:, None, :] * f.data
        return MonitorRecord(t, conservation_functionals(ops.masses, f), ent, energy, l2, num, den,
                             float(F.min()), change)


@dataclass
class RunResult:
    records: list[MonitorRecord]
    final: DistributionPair
    status: str = "ok"
    diagnosis: str = ""
    sweep_residual: float = float("nan")

    @property
    def sup_ratio(self) -> float:
        """``sup_t`` of the instantaneous norm total over its initial value."""
        first = self.records[0].instantaneous_total
        if first == 0.0:
            return 0.0 if all(r.instantaneous_total == 0.0 for r in self.records) else float("inf")
        return max(r.instantaneous_total for r in self.records) / first


def sweep_residual(ops: Operators, f: DistributionPair, dt: float) -> float:
    """Relative change between the second and third fixed-point sweeps from ``f``."""
    f2, _ = collision_step(ops, f.data, dt, 2, moment_correction=False)
    f3, _ = collision_step(ops, f.data, dt, 3, moment_correction=False)
    scale = float(np.max(np.abs(f.data)))
    return float(np.max(np.abs(f3 - f2))) / scale if scale > 0 else 0.0


def run(config: SolverConfig, f_init: DistributionPair, ops: Operators, *,
        energy_limit: float | None = None) -> RunResult:
    """Integrate to ``t_end`` emitting a :class:`MonitorRecord` per step."""
    if f_init.vgrid != ops.vgrid:
        raise ContractError("initial state and operators live on different velocity grids")
    if not f_init.is_finite():
        raise NumericalError("initial state contains non-finite values")
    config.check_cfl(f_init.vgrid, f_init.xgrid)
    monitor = _Monitor(config, ops)
    records = [monitor.record(0.0, f_init, 0.0)]
    if energy_limit is not None and records[0].energy_E > energy_limit:
        raise ConfigurationError(f"initial energy {records[0].energy_E:.3e} exceeds the small-data limit "
                                 f"{energy_limit:.3e}")
    try:
        residual = sweep_residual(ops, f_init, config.dt) if config.collisions else 0.0
    except NumericalError:
        residual = float("nan")   # the first step reports the failure
    f = f_init
    base = records[0].instantaneous_total
    for k in range(1, config.n_steps + 1):
        t = k * config.dt
        try:
            new, change = step(config, f, ops)
            finite = new.is_finite()
        except NumericalError as exc:
            finite, reason = False, str(exc)
        else:
            reason = "state"
        if not finite:
            return RunResult(records, f, "nan", f"non-finite {reason} at t={t:.6g}; last valid record kept",
                             residual)
        rec = monitor.record(t, new, change)
        if base > 0 and rec.instantaneous_total > config.blowup_factor * base:
            records.append(rec)
            return RunResult(records, new, "blowup",
                             f"instantaneous norm grew by {rec.instantaneous_total / base:.3e} at t={t:.6g}",
                             residual)
        records.append(rec)
        f = new
    return RunResult(records, f, "ok", "", residual)


def coercivity_time_integral(records, window=None) -> tuple[float, float, float]:
    """Trapezoid integrals of the coercivity numerator and denominator over ``window``.

    Returns ``(lhs, rhs, lhs / rhs)``; the ratio is NaN when ``rhs`` vanishes.
    """
    recs = list(records)
    if window is not None:
        t0, t1 = window
        recs = [r for r in recs if t0 - 1e-12 <= r.t <= t1 + 1e-12]
    if len(recs) < 2:
        raise ContractError("coercivity time integral needs at least two records in the window")
    t = np.array([r.t for r in recs])
    num = np.array([r.coercivity_numerator for r in recs])
    den = np.array([r.coercivity_denominator for r in recs])
    lhs = float(np.trapezoid(num, t)) if hasattr(np, "trapezoid") else float(np.trapz(num, t))
    rhs = float(np.trapezoid(den, t)) if hasattr(np, "trapezoid") else float(np.trapz(den, t))
    return lhs, rhs, (lhs / rhs if rhs > 0 else float("nan"))


def conservation_drift(masses: MassPair, records, f_init: DistributionPair) -> np.ndarray:
    """Per-unit-time drift of each conserved functional relative to its content scale.

    The scale of functional ``j`` is ``int |f| |psi_j|`` at t=0, so that
    functionals whose initial value is zero still have a meaningful relative
    drift.  Drifts below ``DRIFT_FLOOR`` are round-off.
    """
    recs = list(records)
    if len(recs) < 2:
        raise ContractError("drift needs at least two records")
    raw = raw_invariants(masses, f_init.vgrid)
    raw[5] *= 0.5
    scale = np.einsum("sxv,jsv,v->j", np.abs(f_init.data), np.abs(raw), f_init.vgrid.weights) \
        * f_init.xgrid.cell_volume
    c0 = recs[0].conservation
    span = recs[-1].t - recs[0].t
    worst = np.max(np.abs(np.array([r.conservation for r in recs]) - c0[None, :]), axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(scale > 0, worst / scale, worst)
    return rel / span if span > 0 else rel


def swap_species(f: DistributionPair) -> DistributionPair:
    return DistributionPair(f.vgrid, f.xgrid, f.data[::-1].copy())


def micro_initial(ops: Operators, xgrid: SpatialGrid, amplitude: float = 1e-3,
                  macro_fraction: float = 0.0) -> DistributionPair:
    """``amplitude * cos(x_1) * g`` with ``g`` a unit-norm microscopic (shear-like) mode.

    ``macro_fraction`` mixes in the energy invariant.
    """
    vg = ops.vgrid
    v = vg.nodes
    m = np.array([ops.masses.m_alpha, ops.masses.m_beta])[:, None]
    g = m * (v[:, 0] * v[:, 1])[None, :] * ops.sqrt_mu
    g = g - project_P0(ops.basis, g)
    g /= math.sqrt(float(np.sum(g * g * vg.weights[None, :])))
    if macro_fraction:
        g = g + macro_fraction * ops.basis.basis[5]
    profile = np.cos(xgrid.coords[:, 0])
    return DistributionPair.from_velocity(vg, xgrid, amplitude * g, profile)
