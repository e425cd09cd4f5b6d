"""Elastic collision kinematics for particles of unequal mass.

The transform works in the omega representation: for a pre-collision pair
``(v, v_star)`` and a unit vector ``omega`` the post-collision velocities are

    v'      = v      - 2 m_b / (m_a + m_b) * ((v - v_star) . omega) omega
    v_star' = v_star + 2 m_a / (m_a + m_b) * ((v - v_star) . omega) omega

where ``v`` belongs to the species of mass ``m_a`` and ``v_star`` to the
species of mass ``m_b``.  Momentum ``m_a v + m_b v_star`` and kinetic energy
``m_a |v|^2 + m_b |v_star|^2`` are conserved exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractError, NumericalError

__all__ = [
    "MassPair",
    "CollisionOutcome",
    "post_collision",
    "post_collision_batch",
    "jacobian_determinant",
    "sample_sphere",
    "conservation_residuals",
]

_UNIT_TOL = 1e-12


@dataclass(frozen=True)
class MassPair:
    """Masses of the two colliding species (dimensionless units)."""

    m_alpha: float
    m_beta: float

    def __post_init__(self) -> None:
        for name in ("m_alpha", "m_beta"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0.0:
                raise ConfigurationError(f"{name} must be a positive finite mass, got {value!r}")

    @property
    def total(self) -> float:
        return self.m_alpha + self.m_beta

    @property
    def coef_alpha(self) -> float:
        """Coefficient 2 m_alpha / (m_alpha + m_beta) moving ``v_star``."""
        return 2.0 * self.m_alpha / self.total

    @property
    def coef_beta(self) -> float:
        """Coefficient 2 m_beta / (m_alpha + m_beta) moving ``v``."""
        return 2.0 * self.m_beta / self.total

    @property
    def m_min(self) -> float:
        return min(self.m_alpha, self.m_beta)

    def swapped(self) -> "MassPair":
        return MassPair(self.m_beta, self.m_alpha)


@dataclass(frozen=True)
class CollisionOutcome:
    v_prime: np.ndarray
    v_star_prime: np.ndarray


def _check_unit(omega: np.ndarray) -> None:
    norms = np.linalg.norm(omega, axis=-1)
    bad = np.abs(norms - 1.0) > _UNIT_TOL
    if np.any(bad):
        worst = float(np.max(np.abs(norms - 1.0)))
        raise ContractError(f"omega must be a unit vector (|omega| - 1 = {worst:.3e})")


def post_collision_batch(masses: MassPair, v, v_star, omega, *, check: bool = True):
    """Vectorized transform over the leading axes of ``(..., 3)`` arrays."""
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if check:
        _check_unit(omega)
    proj = np.sum((v - v_star) * omega, axis=-1, keepdims=True)
    v_prime = v - masses.coef_beta * proj * omega
    v_star_prime = v_star + masses.coef_alpha * proj * omega
    return v_prime, v_star_prime


def post_collision(masses: MassPair, v, v_star, omega) -> CollisionOutcome:
    """Post-collision velocities for a single pair."""
    vp, vsp = post_collision_batch(masses, v, v_star, omega)
    return CollisionOutcome(vp, vsp)


def conservation_residuals(masses: MassPair, v, v_star, v_prime, v_star_prime):
    """Momentum (abs), energy (rel) and relative-speed (rel) residuals per sample."""
    ma, mb = masses.m_alpha, masses.m_beta
    mom = ma * v_prime + mb * v_star_prime - (ma * v + mb * v_star)
    mom_res = np.max(np.abs(mom), axis=-1)
    e_in = ma * np.sum(v * v, axis=-1) + mb * np.sum(v_star * v_star, axis=-1)
    e_out = ma * np.sum(v_prime * v_prime, axis=-1) + mb * np.sum(v_star_prime * v_star_prime, axis=-1)
    energy_res = np.abs(e_out - e_in) / np.maximum(e_in, np.finfo(float).tiny)
    g_in = np.linalg.norm(v - v_star, axis=-1)
    g_out = np.linalg.norm(v_prime - v_star_prime, axis=-1)
    speed_res = np.abs(g_out - g_in) / np.maximum(g_in, np.finfo(float).tiny)
    return mom_res, energy_res, speed_res


def jacobian_determinant(masses: MassPair, v, v_star, omega, fd_step: float = 1e-5) -> float:
    """Central-difference determinant of ``(v, v_star) -> (v', v_star')`` at fixed omega."""
    if not (0.0 < fd_step <= 1e-3) or not np.isfinite(fd_step):
        raise NumericalError(f"fd_step must lie in (0, 1e-3], got {fd_step!r}")
    omega = np.asarray(omega, dtype=float)
    _check_unit(omega)
    z0 = np.concatenate([np.asarray(v, float), np.asarray(v_star, float)])
    jac = np.empty((6, 6))
    for k in range(6):
        dz = np.zeros(6)
        dz[k] = fd_step
        zp, zm = z0 + dz, z0 - dz
        fp = np.concatenate(post_collision_batch(masses, zp[:3], zp[3:], omega, check=False))
        fm = np.concatenate(post_collision_batch(masses, zm[:3], zm[3:], omega, check=False))
        jac[:, k] = (fp - fm) / (2.0 * fd_step)
    det = float(np.linalg.det(jac))
    if not np.isfinite(det):
        raise NumericalError("finite-difference Jacobian is not finite")
    return det


def sample_sphere(seed: int, n: int) -> np.ndarray:
    """Seeded uniform samples on the unit sphere, shape ``(n, 3)``."""
    if n < 1:
        raise ContractError("sample count must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 3))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return x
