"""Verification and run commands shared by the CLI, the selftest and the acceptance suite.

Every function returns plain data (dicts and row lists) with an error or
tolerance estimate next to each measured number; writing files is left to
the caller except for :func:`simulate` and :func:`selftest`, which own an
output directory.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import exp1

from .collision import (AngularKernel, QuadratureSpec, _q_parts, collision_invariant_pairing, entropy_production,
                        entropy_production_oracle, pairing_oracle, random_positive_state)
from .config import RunConfig, parse_config
from .equilibrium import (INVARIANT_NAMES, bimaxwellian_on_grid, build_invariant_basis, conservation_functionals,
                          macroscopic_moments, project_P0, raw_invariants, reconstruct)
from .errors import ConfigurationError
from .fieldio import field_to_text, read_field, write_field, write_table
from .kernels import eval_kernel_k1, eval_kernel_k2, verify_kernel_decay
from .kinematics import MassPair, conservation_residuals, jacobian_determinant, post_collision_batch, sample_sphere
from .linop import KernelSplitConfig, assemble_L, collocation_matrix, estimate_coercivity, ks_ratio
from .solver import (DRIFT_FLOOR, build_operators, coercivity_time_integral, conservation_drift, micro_initial,
                     run)
from .vgrid import DistributionPair, SpatialGrid, VelocityGrid

__all__ = [
    "kinematics_check",
    "qtest",
    "QTEST_HEADER",
    "moments_report",
    "coercivity_report",
    "CoercivityReport",
    "kernel_decay_rows",
    "DECAY_HEADER",
    "initial_state",
    "simulate",
    "SimulationOutput",
    "selftest",
]

EPS = float(np.finfo(float).eps)


# ------------------------------------------------------------ kinematics


def kinematics_check(samples: int = 10**6, seed: int = 0, masses: MassPair | None = None, *,
                     jacobian_samples: int = 100, chunk: int = 1000) -> dict:
    """Worst conservation residuals over seeded random collisions.

    With ``masses=None`` every chunk of ``chunk`` collisions draws its own
    pair from [0.1, 10].
    """
    if samples < 1 or jacobian_samples < 1:
        raise ConfigurationError("sample counts must be >= 1")
    rng = np.random.default_rng(seed)
    mom = energy = speed = 0.0
    mom_scale = 0.0
    done = 0
    while done < samples:
        k = min(chunk, samples - done)
        mp = masses or MassPair(*rng.uniform(0.1, 10.0, size=2))
        v, vs = rng.standard_normal((k, 3)), rng.standard_normal((k, 3))
        omega = rng.standard_normal((k, 3))
        omega /= np.linalg.norm(omega, axis=1, keepdims=True)
        vp, vsp = post_collision_batch(mp, v, vs, omega)
        r = conservation_residuals(mp, v, vs, vp, vsp)
        mom = max(mom, float(r[0].max()))
        energy = max(energy, float(r[1].max()))
        speed = max(speed, float(r[2].max()))
        p = mp.m_alpha * np.abs(v) + mp.m_beta * np.abs(vs)
        mom_scale = max(mom_scale, float(p.max()))
        done += k
    jrng = np.random.default_rng(seed + 1)
    omegas = sample_sphere(seed + 2, jacobian_samples)
    fd_step = 1e-5
    jac = 0.0
    zmax = 0.0
    for i in range(jacobian_samples):
        mp = masses or MassPair(*jrng.uniform(0.1, 10.0, size=2))
        v, vs = jrng.standard_normal(3), jrng.standard_normal(3)
        jac = max(jac, abs(jacobian_determinant(mp, v, vs, omegas[i], fd_step) + 1.0))
        zmax = max(zmax, float(np.max(np.abs(np.concatenate([v, vs])))))
    return {
        "samples": int(samples),
        "seed": int(seed),
        "masses": "uniform[0.1,10]" if masses is None else [masses.m_alpha, masses.m_beta],
        "momentum_residual_max": mom,
        "momentum_roundoff_bound": 16 * EPS * mom_scale,
        "energy_residual_max": energy,
        "energy_roundoff_bound": 32 * EPS,
        "relative_speed_residual_max": speed,
        "relative_speed_roundoff_bound": 16 * EPS,
        "jacobian_samples": int(jacobian_samples),
        "jacobian_det_plus_one_max": jac,
        # the map is linear, so central differences only carry cancellation error
        "jacobian_fd_error_bound": 6 * 4 * EPS * max(zmax, 1.0) / fd_step,
    }


# --------------------------------------------------------------- Q tests

QTEST_HEADER = ["check", "resolution", "residual", "max_abs", "observed_order", "tolerance"]


def _nu_norm(grid: VelocityGrid, gamma: float, q: np.ndarray) -> float:
    w = (1.0 + grid.speed) ** gamma
    return float(np.sqrt(np.sum(q * q * grid.weights * w)))


def _annihilation(masses: MassPair, kernel: AngularKernel, quad: QuadratureSpec, n: int):
    grid = VelocityGrid.for_masses(masses.m_min, n)
    mu = bimaxwellian_on_grid(masses, grid)
    nu_res = abs_res = floor = 0.0
    for a in range(2):
        for b in range(2):
            gain, loss, lead = _q_parts(masses, kernel, quad, mu[a], mu[b], (a, b), grid)
            q = (gain - loss).reshape(-1)
            nu_res = max(nu_res, _nu_norm(grid, quad.gamma, q))
            abs_res = max(abs_res, float(np.max(np.abs(q))))
            scale = _nu_norm(grid, quad.gamma, np.abs(gain).reshape(-1) + np.abs(loss).reshape(-1))
            floor = max(floor, EPS * math.sqrt(grid.size) * scale)
    return grid, nu_res, abs_res, floor


def _order(prev, cur, h_prev, h_cur) -> float:
    if prev is None or prev <= 0 or cur <= 0:
        return float("nan")
    return math.log(prev / cur) / math.log(h_prev / h_cur)


def qtest(masses: MassPair = MassPair(7.0, 8.0), gamma: float = -1.0, *, resolutions=(17, 25, 33),
          pairing_resolutions=(9, 11, 13), states: int = 5, seed: int = 0,
          kernel: AngularKernel | None = None) -> list[list]:
    """Rows of the annihilation and pairing convergence table.

    ``annihilation`` uses the production (relative) interpolation,
    ``annihilation_raw`` interpolates F itself and shows the discretization
    order.  For the annihilation rows the order is taken from ``max_abs``;
    the tolerance is the round-off floor of the summed gain and loss.  For
    the pairing rows the residual is ``max_j |<C F, Psi_j>|`` over the
    states, and the tolerance is the weak-form oracle value, which is pure
    round-off.
    """
    kernel = kernel or AngularKernel()
    rows = []
    for mode, check in (("relative", "annihilation"), ("raw", "annihilation_raw")):
        quad = QuadratureSpec(gamma=gamma, interpolation=mode)
        prev = None
        for n in resolutions:
            grid, nu_res, abs_res, floor = _annihilation(masses, kernel, quad, n)
            order = _order(prev[1], abs_res, prev[0], grid.spacing) if prev else float("nan")
            rows.append([check, n, nu_res, abs_res, order, floor])
            prev = (grid.spacing, abs_res)
    quad = QuadratureSpec(gamma=gamma)
    prev = None
    for n in pairing_resolutions:
        grid = VelocityGrid.for_masses(masses.m_min, n)
        worst = oracle = 0.0
        for k in range(states):
            F = random_positive_state(masses, grid, seed + k)
            worst = max(worst, float(np.max(np.abs(collision_invariant_pairing(masses, kernel, quad, F,
                                                                                grid=grid)))))
            oracle = max(oracle, float(np.max(np.abs(pairing_oracle(masses, kernel, quad, F, grid=grid)))))
        order = _order(prev[1], worst, prev[0], grid.spacing) if prev else float("nan")
        rows.append(["pairing", n, worst, worst, order, oracle])
        prev = (grid.spacing, worst)
    return rows


# --------------------------------------------------------------- moments


def moments_report(f: DistributionPair, masses: MassPair) -> dict:
    """Conservation functionals and the macroscopic field summary of a state."""
    values = conservation_functionals(masses, f)
    raw = raw_invariants(masses, f.vgrid)
    raw[5] *= 0.5
    content = np.einsum("sxv,jsv,v->j", np.abs(f.data), np.abs(raw), f.vgrid.weights) * f.xgrid.cell_volume
    basis = build_invariant_basis(masses, f.vgrid)
    macro = macroscopic_moments(basis, f.data)
    fp = project_P0(basis, np.moveaxis(f.data, 0, 1))
    back = reconstruct(basis, macro)
    scale = float(np.max(np.abs(fp))) or 1.0
    return {
        "functionals": {n: float(x) for n, x in zip(INVARIANT_NAMES, values)},
        "functional_roundoff": {n: EPS * math.sqrt(f.data.size) * float(c) for n, c in zip(INVARIANT_NAMES,
                                                                                            content)},
        "macro": macro.summary(),
        "reconstruction_residual": float(np.max(np.abs(fp - back))) / scale,
        "microscopic_fraction": _micro_fraction(basis, f),
        "grid": {"velocity": f.vgrid.describe(), "space": f.xgrid.describe()},
        "masses": [masses.m_alpha, masses.m_beta],
    }


def _micro_fraction(basis, f: DistributionPair) -> float:
    total = float(np.sum(f.data ** 2 * f.vgrid.weights))
    if total == 0.0:
        return 0.0
    micro = f.data - np.moveaxis(project_P0(basis, np.moveaxis(f.data, 0, 1)), 1, 0)
    return float(np.sum(micro ** 2 * f.vgrid.weights)) / total


# ------------------------------------------------------------- coercivity


@dataclass
class CoercivityReport:
    summary: dict
    spectrum: np.ndarray


def coercivity_report(masses: MassPair, gamma: float = -1.0, n: int = 9, *, epsilon: float = 0.25,
                      m_trunc: float = 6.0, kernel: AngularKernel | None = None,
                      full_spectrum: bool = False) -> CoercivityReport:
    kernel = kernel or AngularKernel()
    quad = QuadratureSpec(gamma=gamma)
    split = KernelSplitConfig(epsilon, m_trunc)
    grid = VelocityGrid.for_masses(masses.m_min, n)
    basis = build_invariant_basis(masses, grid)
    L = assemble_L(masses, kernel, quad, grid, basis)
    res = estimate_coercivity(L, basis, full_spectrum=full_spectrum)
    Ks = collocation_matrix(masses, kernel, quad, grid, "Ks", split)
    eig_tol = EPS * float(np.linalg.norm(L.matrix, 2)) * L.matrix.shape[0]
    summary = {
        "delta_hat": res.delta_hat,
        "delta_hat_tolerance": max(abs(res.cross_check - res.delta_hat), res.residual, eig_tol),
        "delta_hat_cross_check": res.cross_check,
        "asymmetry": L.asymmetry,
        "kernel_residuals": [float(x) for x in L.kernel_residuals],
        "collocation_kernel_residuals": [float(x) for x in L.collocation_residuals],
        "kernel_rayleigh_max": res.kernel_rayleigh_max,
        "orthogonality": res.orthogonality,
        "eigen_residual": res.residual,
        "ks_ratio": ks_ratio(Ks, grid, gamma),
        "epsilon": epsilon,
        "m_trunc": m_trunc,
        "gamma": gamma,
        "masses": [masses.m_alpha, masses.m_beta],
        "grid": grid.describe(),
    }
    spec = np.asarray(res.spectrum, dtype=float)
    return CoercivityReport(summary, np.column_stack([np.arange(spec.size), spec, np.full(spec.size, eig_tol)]))


# ---------------------------------------------------------------- decay

DECAY_HEADER = ["speed", "integral", "normalized", "abserr"]


def kernel_decay_rows(masses: MassPair, gamma: float, speeds, s: float = 0.0, *, epsilon: float = 0.25,
                      m_trunc: float = 6.0, species_pair=("A", "B")) -> list[list]:
    rows = verify_kernel_decay(masses, KernelSplitConfig(epsilon, m_trunc), gamma, speeds, s,
                               species_pair=species_pair)
    return [[r.speed, r.integral, r.normalized, r.abserr] for r in rows]


# ------------------------------------------------------------- simulate


def initial_state(cfg: RunConfig, ops, xgrid: SpatialGrid) -> DistributionPair:
    vg = ops.vgrid
    if cfg.initial == "zero":
        return DistributionPair.zeros(vg, xgrid)
    if cfg.initial == "micro":
        return micro_initial(ops, xgrid, cfg.amplitude, cfg.macro_fraction)
    x1 = xgrid.coords[:, 0]
    if cfg.initial == "invariant":
        return DistributionPair.from_velocity(vg, xgrid, cfg.amplitude * ops.basis.basis[5], np.cos(x1))
    # random: smooth quadratic-in-v modes with a random phase per species
    rng = np.random.default_rng(cfg.seed)
    v = vg.nodes
    data = np.empty((2, xgrid.size, vg.size))
    for s in range(2):
        c0, c1, A = rng.standard_normal(), rng.standard_normal(3), rng.standard_normal((3, 3))
        g = ops.sqrt_mu[s] * (c0 + v @ c1 + 0.5 * np.einsum("vi,ij,vj->v", v, A + A.T, v))
        g /= math.sqrt(float(np.sum(g * g * vg.weights)))
        phase = rng.uniform(0.0, 2.0 * math.pi)
        data[s] = cfg.amplitude * np.cos(x1 + phase)[:, None] * g[None, :]
    return DistributionPair(vg, xgrid, data)


@dataclass
class SimulationOutput:
    result: object
    summary: dict
    paths: dict


def simulate(cfg: RunConfig, output_dir=None, *, figures: bool | None = None) -> SimulationOutput:
    """Run the configured simulation and write monitors.csv, final_state.csv and summary.json."""
    out = Path(output_dir if output_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    scfg = cfg.solver
    masses = cfg.masses
    vg, xg = scfg.grids(masses)
    ops = build_operators(masses, cfg.angular, cfg.quad, vg, with_galerkin=cfg.monitor_coercivity)
    f0 = initial_state(cfg, ops, xg)
    res = run(scfg, f0, ops)
    recs = res.records
    meta = {"status": res.status, "seed": cfg.seed, "gamma": cfg.gamma, "mass_a": cfg.mass_a,
            "mass_b": cfg.mass_b, "dt": cfg.dt, "sweep_residual": res.sweep_residual}
    paths = {"monitors": write_table(out / "monitors.csv", recs[0].header(), [r.row() for r in recs], meta),
             "final_state": write_field(out / "final_state.csv", res.final,
                                        {"mass_a": cfg.mass_a, "mass_b": cfg.mass_b, "gamma": cfg.gamma,
                                         "t": recs[-1].t})}
    drift = conservation_drift(masses, recs, f0) if len(recs) > 1 else np.zeros(6)
    summary = {
        "status": res.status,
        "diagnosis": res.diagnosis,
        "steps": len(recs) - 1,
        "t_final": recs[-1].t,
        "drift_per_unit_time": {n: float(x) for n, x in zip(INVARIANT_NAMES, drift)},
        "drift_floor": DRIFT_FLOOR,
        "sup_norm_ratio": res.sup_ratio,
        "min_F": min(r.min_F for r in recs),
        "sweep_residual": res.sweep_residual,
    }
    if cfg.monitor_coercivity and len(recs) > 1:
        lhs, rhs, ratio = coercivity_time_integral(recs)
        summary.update(coercivity_lhs=lhs, coercivity_rhs=rhs, coercivity_ratio=ratio)
    paths["summary"] = out / "summary.json"
    paths["summary"].write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if cfg.figures if figures is None else figures:
        from . import report

        paths["monitors_png"] = report.plot_monitors(recs, out / "monitors.png")
        paths["final_state_png"] = report.plot_state(res.final, out / "final_state.png")
    return SimulationOutput(res, summary, paths)


# -------------------------------------------------------------- selftest

SELFTEST_HEADER = ["check", "value", "tolerance", "passed"]


def _selftest_rows(seed: int, workdir: Path) -> list[list]:
    rows = []

    def add(name, value, tol, ok):
        rows.append([name, float(value), float(tol), bool(ok)])

    kc = kinematics_check(20000, seed, jacobian_samples=20)
    for key in ("momentum_residual_max", "energy_residual_max", "relative_speed_residual_max"):
        add(key, kc[key], 1e-12, kc[key] <= 1e-12)
    add("jacobian_det_plus_one_max", kc["jacobian_det_plus_one_max"], 1e-6, kc["jacobian_det_plus_one_max"] <= 1e-6)

    masses, kernel, quad = MassPair(7.0, 8.0), AngularKernel(), QuadratureSpec()
    _, nu_res, _, _ = _annihilation(masses, kernel, quad, 9)
    add("annihilation_nu_norm_n9", nu_res, 1e-10, nu_res <= 1e-10)

    grid = VelocityGrid.for_masses(masses.m_min, 7)
    worst_oracle = 0.0
    worst_sym = worst_strong = -np.inf
    for k in range(3):
        F = random_positive_state(masses, grid, seed + k)
        worst_oracle = max(worst_oracle, float(np.max(np.abs(pairing_oracle(masses, kernel, quad, F, grid=grid)))))
        worst_sym = max(worst_sym, entropy_production_oracle(masses, kernel, quad, F, grid=grid))
        worst_strong = max(worst_strong, entropy_production(masses, kernel, quad, F, grid=grid))
    add("pairing_oracle_n7", worst_oracle, 1e-10, worst_oracle <= 1e-10)
    add("entropy_production_symmetrized_max_n7", worst_sym, 1e-6, worst_sym <= 1e-6)
    add("entropy_production_max_n7", worst_strong, 1e-6, worst_strong <= 1e-6)
    eq = entropy_production(masses, kernel, quad, bimaxwellian_on_grid(masses, grid), grid=grid)
    add("entropy_production_equilibrium_n7", abs(eq), 1e-4, abs(eq) <= 1e-4)

    basis = build_invariant_basis(masses, grid)
    L = assemble_L(masses, kernel, quad, grid, basis)
    lam_min = float(np.linalg.eigvalsh(L.matrix)[0])
    add("rayleigh_min_n7", lam_min, -1e-8, lam_min >= -1e-8)
    co = estimate_coercivity(L, basis)
    add("delta_hat_n7", co.delta_hat, 0.0, co.delta_hat > 0)
    add("minimizer_orthogonality_n7", co.orthogonality, 1e-8, co.orthogonality <= 1e-8)

    k1 = eval_kernel_k1(MassPair(1.0, 1.0), None, ("A", "B"), [0.0, 0.0, 0.0], [1.0, 0.0, 0.0])
    exact = math.exp(-0.25) * math.pi * math.exp(0.5) * float(exp1(0.5))
    add("k1_closed_form_error", abs(k1 - exact) / exact, 1e-8, abs(k1 - exact) <= 1e-8 * exact)
    rng = np.random.default_rng(seed)
    split = KernelSplitConfig()
    sym = 0.0
    for _ in range(5):
        v, u = rng.standard_normal(3), rng.standard_normal(3)
        a = eval_kernel_k1(MassPair(1.0, 1.0), split, ("A", "A"), v, u)
        b = eval_kernel_k2(MassPair(1.0, 1.0), split, ("A", "A"), v, u)
        sym = max(sym, abs(a - b) / abs(a))
    add("kernel_parallel_perpendicular_symmetry", sym, 1e-8, sym <= 1e-8)

    defaults = parse_config("")
    ok = (defaults.gamma, defaults.mass_a, defaults.mass_b, defaults.epsilon, defaults.m_trunc) == \
        (-1.0, 7.0, 8.0, 0.25, 6.0)
    try:
        parse_config("gamma = -3.5")
        ok = False
    except ConfigurationError as exc:
        ok = ok and "gamma" in str(exc)
    add("config_defaults_and_range", 0.0, 0.0, ok)

    cfg = RunConfig(v_points=5, x_points=6, dt=0.05, t_end=0.1, seed=seed, figures=True)
    sim = simulate(cfg, workdir / "simulation")
    state, _ = read_field(sim.paths["final_state"])
    same = field_to_text(state) == field_to_text(sim.result.final)
    add("field_round_trip", 0.0, 0.0, same and np.array_equal(state.data, sim.result.final.data))
    drift = max(sim.summary["drift_per_unit_time"].values())
    add("simulation_drift_per_unit_time", drift, 1e-6, sim.summary["status"] == "ok" and drift <= 1e-6)
    add("simulation_min_F", sim.summary["min_F"], -1e-8, sim.summary["min_F"] >= -1e-8)
    add("simulation_sup_norm_ratio", sim.summary["sup_norm_ratio"], 3.0, sim.summary["sup_norm_ratio"] <= 3.0)
    return rows


def selftest(output_dir, seed: int = 0) -> tuple[bool, list[list]]:
    """Quick deterministic property suite; writes selftest.csv and a small run into ``output_dir``."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = _selftest_rows(seed, out)
    passed = all(r[3] for r in rows)
    write_table(out / "selftest.csv", SELFTEST_HEADER, rows, {"seed": seed, "passed": passed})
    return passed, rows
