"""Flat ``key = value`` run configuration."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path

from .collision import AngularKernel, QuadratureSpec
from .errors import ConfigurationError
from .kinematics import MassPair
from .linop import KernelSplitConfig
from .solver import SolverConfig

__all__ = ["RunConfig", "ConfigParseError", "parse_config", "load_config", "DEFAULTS", "KEY_DOCS"]


class ConfigParseError(ConfigurationError):
    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        self.line = line
        self.key = key
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


def _flag(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _opt_float(text: str) -> float | None:
    return None if text.strip().lower() in ("auto", "none", "") else float(text)


# key: (parser, default, help)
_SCHEMA = {
    "gamma": (float, -1.0, "soft-potential exponent, open interval (-3, 0)"),
    "mass_a": (float, 7.0, "mass of species A"),
    "mass_b": (float, 8.0, "mass of species B"),
    "kernel": (str, "abscos", "angular factor: abscos (C_b|cos|) or cos2 (C_b cos^2)"),
    "c_b": (float, 1.0, "angular constant C_b"),
    "epsilon": (float, 0.25, "cutoff scale of chi in the K split"),
    "m_trunc": (float, 6.0, "truncation radius of the K split"),
    "v_points": (int, 9, "velocity points per axis (odd)"),
    "v_radius": (_opt_float, None, "velocity box half-width; auto = 6/sqrt(min mass)"),
    "x_dims": (int, 1, "spatial dimensions, 1 or 3"),
    "x_points": (int, 12, "spatial points per axis"),
    "sphere_degree": (int, 7, "Lebedev degree of the sphere rule"),
    "quadrature": (str, "deterministic", "deterministic or monte-carlo"),
    "interpolation": (str, "relative", "relative or raw"),
    "singular_box": (int, 2, "half-width of the coincident-node calibration box"),
    "dt": (float, 0.05, "time step"),
    "t_end": (float, 1.0, "final time"),
    "inner_iterations": (int, 2, "fixed-point sweeps per collision step"),
    "order": (int, 1, "derivative order N of the energy functional"),
    "cfl": (float, 0.9, "transport CFL limit"),
    "initial": (str, "micro", "initial data: micro, invariant, random or zero"),
    "amplitude": (float, 1e-3, "initial perturbation amplitude"),
    "macro_fraction": (float, 0.0, "energy-invariant admixture of the micro initial data"),
    "monitor_entropy": (_flag, True, "record entropy production"),
    "monitor_coercivity": (_flag, True, "record the coercivity quotients"),
    "moment_correction": (_flag, True, "restore the invariants after each collision step"),
    "seed": (int, 0, "seed of the random initial data"),
    "output_dir": (str, ".", "directory for monitors.csv, final_state.csv and figures"),
    "figures": (_flag, True, "render PNG figures next to the CSV output"),
}

DEFAULTS = {k: v[1] for k, v in _SCHEMA.items()}
KEY_DOCS = {k: v[2] for k, v in _SCHEMA.items()}
_INITIAL = ("micro", "invariant", "random", "zero")


@dataclass(frozen=True)
class RunConfig:
    gamma: float = -1.0
    mass_a: float = 7.0
    mass_b: float = 8.0
    kernel: str = "abscos"
    c_b: float = 1.0
    epsilon: float = 0.25
    m_trunc: float = 6.0
    v_points: int = 9
    v_radius: float | None = None
    x_dims: int = 1
    x_points: int = 12
    sphere_degree: int = 7
    quadrature: str = "deterministic"
    interpolation: str = "relative"
    singular_box: int = 2
    dt: float = 0.05
    t_end: float = 1.0
    inner_iterations: int = 2
    order: int = 1
    cfl: float = 0.9
    initial: str = "micro"
    amplitude: float = 1e-3
    macro_fraction: float = 0.0
    monitor_entropy: bool = True
    monitor_coercivity: bool = True
    moment_correction: bool = True
    seed: int = 0
    output_dir: str = "."
    figures: bool = True

    @property
    def masses(self) -> MassPair:
        return MassPair(self.mass_a, self.mass_b)

    @property
    def angular(self) -> AngularKernel:
        return AngularKernel(self.kernel, self.c_b)

    @property
    def quad(self) -> QuadratureSpec:
        return QuadratureSpec(gamma=self.gamma, sphere_degree=self.sphere_degree, mode=self.quadrature,
                              seed=self.seed, interpolation=self.interpolation, singular_box=self.singular_box)

    @property
    def split(self) -> KernelSplitConfig:
        return KernelSplitConfig(self.epsilon, self.m_trunc)

    @property
    def solver(self) -> SolverConfig:
        return SolverConfig(dt=self.dt, t_end=self.t_end, x_dims=self.x_dims, x_points=self.x_points,
                            v_points=self.v_points, v_radius=self.v_radius,
                            inner_iterations=self.inner_iterations, order=self.order, cfl=self.cfl,
                            monitor_entropy=self.monitor_entropy, monitor_coercivity=self.monitor_coercivity,
                            moment_correction=self.moment_correction)

    def validate(self, check_paths: bool = True) -> "RunConfig":
        def bad(key, msg):
            raise ConfigParseError(f"{key} {msg}", key=key)

        if not -3.0 < self.gamma < 0.0:
            bad("gamma", f"= {self.gamma} must lie in the open interval (-3, 0)")
        for key in ("mass_a", "mass_b", "c_b", "epsilon", "m_trunc", "dt", "cfl", "amplitude"):
            val = getattr(self, key)
            if not (math.isfinite(val) and val > 0):
                bad(key, f"= {val} must be positive and finite")
        if not (math.isfinite(self.t_end) and self.t_end >= 0):
            bad("t_end", f"= {self.t_end} must be >= 0")
        if self.v_radius is not None and not (math.isfinite(self.v_radius) and self.v_radius > 0):
            bad("v_radius", f"= {self.v_radius} must be positive or auto")
        for key in ("v_points", "x_points", "inner_iterations", "sphere_degree"):
            if getattr(self, key) < 2:
                bad(key, f"= {getattr(self, key)} must be >= 2")
        if self.v_points % 2 == 0:
            bad("v_points", f"= {self.v_points} must be odd")
        if self.x_points < 4:
            bad("x_points", f"= {self.x_points} must be >= 4")
        if self.x_dims not in (1, 3):
            bad("x_dims", f"= {self.x_dims} must be 1 or 3")
        if self.order not in (0, 1, 2):
            bad("order", f"= {self.order} must be 0, 1 or 2")
        if self.singular_box < 1:
            bad("singular_box", f"= {self.singular_box} must be >= 1")
        if self.kernel not in ("abscos", "cos2"):
            bad("kernel", f"= {self.kernel!r} must be abscos or cos2")
        if self.quadrature not in ("deterministic", "monte-carlo"):
            bad("quadrature", f"= {self.quadrature!r} must be deterministic or monte-carlo")
        if self.interpolation not in ("relative", "raw"):
            bad("interpolation", f"= {self.interpolation!r} must be relative or raw")
        if self.initial not in _INITIAL:
            bad("initial", f"= {self.initial!r} must be one of {', '.join(_INITIAL)}")
        if self.seed < 0:
            bad("seed", f"= {self.seed} must be >= 0")
        if check_paths:
            out = Path(self.output_dir)
            probe = out if out.exists() else out.parent if str(out.parent) else Path(".")
            if not probe.exists() or not os.access(probe, os.W_OK):
                bad("output_dir", f"= {self.output_dir!r} is not writable")
        return self


def parse_config(text: str, *, check_paths: bool = False) -> RunConfig:
    """Parse and validate a flat configuration; unknown or repeated keys are errors."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigParseError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, _, val = (part.strip() for part in line.partition("="))
        if not key:
            raise ConfigParseError("missing key before '='", lineno)
        if key not in _SCHEMA:
            raise ConfigParseError(f"unknown key {key!r}", lineno, key)
        if key in values:
            raise ConfigParseError(f"key {key!r} given twice", lineno, key)
        parser = _SCHEMA[key][0]
        try:
            values[key] = parser(val)
        except ValueError as exc:
            raise ConfigParseError(f"bad value for {key}: {exc}", lineno, key) from None
    cfg = RunConfig(**values)
    try:
        return cfg.validate(check_paths=check_paths)
    except ConfigParseError as exc:
        line = _line_of(text, exc.key)
        raise ConfigParseError(str(exc), line, exc.key) from None


def _line_of(text: str, key: str | None) -> int | None:
    if key is None:
        return None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if raw.split("#", 1)[0].partition("=")[0].strip() == key:
            return lineno
    return None


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise FileNotFoundError(f"config file not found: {p}") from None
    return parse_config(text, check_paths=True)

