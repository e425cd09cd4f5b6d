"""Pointwise integral kernels of the K2 operator and their decay certificate.

After the substitution ``u = v_* - v``, ``u_par = (u . w) w``, ``u_perp = u - u_par``
the post-collisional part of K2 splits into a kernel in ``u_par`` alone
(``k1``, three degrees of freedom in ``u_par``), an exponentially decaying
unequal-mass kernel ``k2`` in ``(u_perp, u_par)``, and an equal-species kernel
``k2_aa`` that is ``k1`` with the roles of the two components swapped.

The angular measure bookkeeping lives in :class:`KernelPoint`.  Every kernel
here is shape-only: Maxwellian normalization constants are not included.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import i0e, roots_legendre

from .collision import AngularKernel, species_index
from .errors import ConfigurationError, ContractError, NumericalError
from .kinematics import MassPair

__all__ = [
    "KernelPoint",
    "KernelValue",
    "eval_kernel_k1",
    "eval_kernel_k2",
    "kernel_k1",
    "kernel_k2",
    "measured_decay_constant",
    "DecayRow",
    "verify_kernel_decay",
]

_TINY = 1e-300
_WINDOW = 12.0  # Gaussian half-width (in units of 1/sqrt(m)) kept by the radial integral


def _norm(x) -> float:
    return float(np.linalg.norm(x))


def _coefficients(masses: MassPair, pair) -> tuple[float, float]:
    a, b = (species_index(s) for s in pair)
    m = (masses.m_alpha, masses.m_beta)
    return m[a], m[b]


@dataclass(frozen=True)
class KernelPoint:
    """One argument of the kernels together with every derived vector.

    ``orientation="parallel"`` gives ``u_par`` three degrees of freedom and
    keeps ``u_perp`` in the plane orthogonal to it (``k1`` and the unequal
    mass ``k2``).  ``orientation="perpendicular"`` is the swapped chart used by
    the equal-species ``k2``.  ``v`` is split along the free component:
    ``v_par`` is its projection on the line of ``u_par`` and ``v_perp`` the rest
    (swapped for the perpendicular chart).
    """

    m_a: float
    m_b: float
    v: np.ndarray
    u_par: np.ndarray
    u_perp: np.ndarray
    orientation: str = "parallel"

    @classmethod
    def build(cls, masses: MassPair, species_pair, v, u_par, u_perp=None, orientation: str = "parallel"):
        if orientation not in ("parallel", "perpendicular"):
            raise ContractError(f"unknown orientation {orientation!r}")
        m_a, m_b = _coefficients(masses, species_pair)
        v = np.asarray(v, dtype=float).reshape(3)
        u_par = np.asarray(u_par, dtype=float).reshape(3)
        u_perp = np.zeros(3) if u_perp is None else np.asarray(u_perp, dtype=float).reshape(3)
        scale = max(_norm(u_par) * _norm(u_perp), 1.0)
        if abs(float(u_par @ u_perp)) > 1e-12 * scale:
            raise ContractError("u_par and u_perp must be orthogonal")
        return cls(m_a, m_b, v, u_par, u_perp, orientation)

    @property
    def axis(self) -> np.ndarray:
        """Unit vector along the free (three-dimensional) component."""
        free = self.u_par if self.orientation == "parallel" else self.u_perp
        n = _norm(free)
        if n == 0.0:
            raise NumericalError(f"the {self.orientation} component vanishes: the kernel is singular there")
        return free / n

    @property
    def v_par(self) -> np.ndarray:
        e = self.axis
        if self.orientation == "parallel":
            return (self.v @ e) * e
        return self.v - (self.v @ e) * e

    @property
    def v_perp(self) -> np.ndarray:
        return self.v - self.v_par

    @property
    def u(self) -> np.ndarray:
        return self.u_par + self.u_perp

    @property
    def cos_theta(self) -> float:
        """Cosine between ``u`` and the collision direction ``omega``."""
        return _norm(self.u_par) / max(_norm(self.u), _TINY)

    @property
    def share(self) -> float:
        """``m_b / (m_a + m_b)``."""
        return self.m_b / (self.m_a + self.m_b)

    @property
    def zeta_par(self) -> np.ndarray:
        if self.orientation == "parallel":
            return self.v_par + self.share * self.u_par
        return self.v_par

    @property
    def zeta_perp(self) -> np.ndarray:
        if self.orientation == "parallel":
            return self.v_perp
        return self.v_perp + self.share * self.u_perp

    def _xi_eta(self, sign: float):
        ra, rb = math.sqrt(self.m_a), math.sqrt(self.m_b)
        cv = 0.5 * (rb + sign * ra)
        cu = 0.5 * rb + sign * ra * self.share
        par = cv * self.v_par + cu * self.u_par
        perp = cv * self.v_perp + 0.5 * rb * self.u_perp
        return par, perp

    @property
    def xi(self) -> tuple[np.ndarray, np.ndarray]:
        """``(xi_par, xi_perp)``."""
        return self._xi_eta(+1.0)

    @property
    def eta(self) -> tuple[np.ndarray, np.ndarray]:
        """``(eta_par, eta_perp)``."""
        return self._xi_eta(-1.0)

    @property
    def measure_factor(self) -> float:
        """Density of ``du domega`` against ``du_perp du_par`` in this chart."""
        a = _norm(self.u_par)
        if self.orientation == "parallel":
            return 2.0 / (a * a)
        return 2.0 / (a * _norm(self.u_perp))

    def post_velocities(self) -> tuple[np.ndarray, np.ndarray]:
        """Arguments at which the two ``f`` factors of K2 are read."""
        c = 2.0 * self.share
        lam = (self.m_b - self.m_a) / (self.m_a + self.m_b)
        return self.v + c * self.u_par, self.v + self.u_perp + lam * self.u_par


@dataclass(frozen=True)
class KernelValue:
    value: float
    abserr: float

    def __float__(self) -> float:
        return self.value


def _chi(config, r: float) -> float:
    return 1.0 if config is None else float(config.chi(r))


def _b_over_cos(kernel: AngularKernel, cos_t: float) -> float:
    return kernel.c_b if kernel.family == "abscos" else kernel.c_b * cos_t


def _plane_integral(normal: float, rho: float, m: float, gamma: float, config, kernel: AngularKernel,
                    normal_is_parallel: bool) -> tuple[float, float]:
    """``int_{R^2} exp(-m/2 |y + zeta|^2) G(normal, |y|) dy`` with ``|zeta| = rho``.

    The angular part is done analytically (a modified Bessel function), the
    radial part adaptively.  ``G = (normal^2 + r^2)^((gamma-1)/2) chi b/|cos|``
    where the collision angle is measured from the parallel component.
    """
    def integrand(r):
        s = math.sqrt(normal * normal + r * r)
        cos_t = (normal if normal_is_parallel else r) / max(s, _TINY)
        g = s ** (gamma - 1.0) * _chi(config, s) * _b_over_cos(kernel, cos_t)
        return r * math.exp(-0.5 * m * (r - rho) ** 2) * i0e(m * r * rho) * g

    width = _WINDOW / math.sqrt(m)
    lo = max(0.0, rho - width)
    if config is not None:
        lo = max(lo, math.sqrt(max(config.epsilon ** 2 - normal ** 2, 0.0)))
    hi = max(rho + width, lo + width)
    points = [rho]
    if config is not None:
        points.append(math.sqrt(max(4.0 * config.epsilon ** 2 - normal ** 2, 0.0)))
    if normal < 1.0:
        points.append(normal)
    points = sorted({p for p in points if lo < p < hi})
    val, err = quad(integrand, lo, hi, points=points or None, limit=400, epsabs=1e-14, epsrel=1e-12)
    return 2.0 * math.pi * val, 2.0 * math.pi * err


def kernel_k1(masses: MassPair, config, species_pair, v, u_par, *, gamma: float = -1.0,
              kernel: AngularKernel | None = None) -> KernelValue:
    """``k1_ab(v, u_par)`` with its quadrature error estimate.

    ``config`` is a :class:`~binarykin.linop.KernelSplitConfig` or ``None``
    for no cutoff (``chi = 1``).
    """
    _check_gamma(gamma)
    kernel = kernel or AngularKernel()
    p = KernelPoint.build(masses, species_pair, v, u_par)
    a = _norm(p.u_par)
    if a == 0.0:
        raise NumericalError("k1 is singular at u_par = 0")
    zpar = _norm(p.zeta_par)
    ratio = p.m_a / (p.m_a + p.m_b)
    pre = math.exp(-0.5 * p.m_b * (zpar ** 2 + (ratio * a) ** 2)) / a
    if pre == 0.0:
        return KernelValue(0.0, 0.0)
    inner, err = _plane_integral(a, _norm(p.zeta_perp), p.m_b, gamma, config, kernel, normal_is_parallel=True)
    return KernelValue(pre * inner, pre * err)


def eval_kernel_k1(masses: MassPair, config, species_pair, v, u_par, *, gamma: float = -1.0,
                   kernel: AngularKernel | None = None) -> float:
    return kernel_k1(masses, config, species_pair, v, u_par, gamma=gamma, kernel=kernel).value


def kernel_k2(masses: MassPair, config, species_pair, v, u_perp, u_par=None, *, gamma: float = -1.0,
              kernel: AngularKernel | None = None) -> KernelValue:
    """``k2`` for either branch.

    Distinct species: pointwise in ``(v, u_perp, u_par)`` with ``u_par`` in
    R^3 and ``u_perp`` orthogonal to it.  Same species: ``k2_aa(v, u_perp)``
    with ``u_perp`` in R^3 and a plane integral over ``u_par``; ``u_par`` is
    ignored.

    The unequal branch keeps the exponent ``-(|xi|^2 + |eta|^2)/4``.  Since
    ``sqrt(m_a) v' = xi - eta`` and ``sqrt(m_b) v_* = xi + eta``, the product
    ``sqrt(mu_a(v')) sqrt(mu_b(v_*))`` decays twice as fast; the kernel is an
    upper envelope of it.
    """
    _check_gamma(gamma)
    kernel = kernel or AngularKernel()
    a, b = (species_index(s) for s in species_pair)
    if a != b:
        if u_par is None:
            raise ContractError("the unequal-species k2 needs u_par")
        p = KernelPoint.build(masses, species_pair, v, u_par, u_perp)
        up = _norm(p.u_par)
        if up == 0.0:
            raise NumericalError("k2 is singular at u_par = 0")
        (xp, xq), (ep, eq) = p.xi, p.eta
        expo = -0.25 * (xp @ xp + ep @ ep + xq @ xq + eq @ eq)
        s = _norm(p.u)
        val = (math.exp(expo) / up * _chi(config, s) * s ** (gamma - 1.0)
               * _b_over_cos(kernel, p.cos_theta))
        return KernelValue(val, 0.0)
    u_perp = np.asarray(u_perp, dtype=float).reshape(3)
    p = KernelPoint.build(masses, species_pair, v, np.zeros(3), u_perp, orientation="perpendicular")
    n = _norm(p.u_perp)
    if n == 0.0:
        raise NumericalError("k2 is singular at u_perp = 0")
    pre = math.exp(-0.5 * p.m_b * (_norm(p.zeta_perp) ** 2 + 0.25 * n * n)) / n
    if pre == 0.0:
        return KernelValue(0.0, 0.0)
    inner, err = _plane_integral(n, _norm(p.zeta_par), p.m_b, gamma, config, kernel, normal_is_parallel=False)
    return KernelValue(pre * inner, pre * err)


def eval_kernel_k2(masses: MassPair, config, species_pair, v, u_perp, u_par=None, *, gamma: float = -1.0,
                   kernel: AngularKernel | None = None) -> float:
    return kernel_k2(masses, config, species_pair, v, u_perp, u_par, gamma=gamma, kernel=kernel).value


def measured_decay_constant(masses: MassPair, species_pair=("A", "B")) -> float:
    """Largest ``c`` with ``(|xi|^2 + |eta|^2)/4 >= c (|v|^2 + |u|^2)``.

    The exponent of the unequal-mass ``k2`` is a quadratic form in
    ``(v_par, u_par)`` and, separately, in ``(v_perp, u_perp)``; the constant
    is the smallest eigenvalue over both blocks.
    """
    m_a, m_b = _coefficients(masses, species_pair)
    ra, rb = math.sqrt(m_a), math.sqrt(m_b)
    share = m_b / (m_a + m_b)
    blocks = []
    for cu_plus, cu_minus in ((0.5 * rb + ra * share, 0.5 * rb - ra * share), (0.5 * rb, 0.5 * rb)):
        xi = np.array([0.5 * (rb + ra), cu_plus])
        eta = np.array([0.5 * (rb - ra), cu_minus])
        blocks.append(0.25 * (np.outer(xi, xi) + np.outer(eta, eta)))
    return float(min(np.linalg.eigvalsh(q)[0] for q in blocks))


# ---------------------------------------------------------------- decay table


@dataclass(frozen=True)
class DecayRow:
    speed: float
    integral: float
    normalized: float
    abserr: float


def _composite(breaks: np.ndarray, order: int):
    """Gauss-Legendre nodes on consecutive segments of ``breaks`` (..., B)."""
    x, w = roots_legendre(order)
    a = breaks[..., :-1, None]
    h = 0.5 * (breaks[..., 1:, None] - a)
    return a + h * (x + 1.0), h * w


def _inner_batch(normal, rho, m, gamma, config, kernel, order):
    """Vectorized ``_plane_integral`` for the parallel chart (batch of pairs)."""
    eps = config.epsilon
    width = _WINDOW / math.sqrt(m)
    lo = np.sqrt(np.maximum(eps * eps - normal ** 2, 0.0))
    ramp = np.sqrt(np.maximum(4 * eps * eps - normal ** 2, 0.0))
    window = rho[:, None] + width * np.linspace(-1.0, 1.0, 25)[None, :]
    breaks = np.concatenate([lo[:, None], ramp[:, None], window], axis=1)
    breaks = np.sort(np.maximum(breaks, lo[:, None]), axis=1)
    r, w = _composite(breaks, order)
    s = np.sqrt(normal[:, None, None] ** 2 + r * r)
    cos_t = normal[:, None, None] / np.maximum(s, _TINY)
    bc = kernel.c_b if kernel.family == "abscos" else kernel.c_b * cos_t
    g = s ** (gamma - 1.0) * config.chi(s) * bc
    f = r * np.exp(-0.5 * m * (r - rho[:, None, None]) ** 2) * i0e(m * r * rho[:, None, None]) * g
    return 2.0 * math.pi * np.sum(f * w, axis=(1, 2))


def _decay_integral(m_a, m_b, speed, gamma, s, config, kernel, order):
    share = m_b / (m_a + m_b)
    ratio = m_a / (m_a + m_b)
    c = 2.0 * share
    eps = config.epsilon
    # |u_par| from the cutoff radius outwards; the Gaussian in ratio*|u_par| bounds the range
    a_hi = _WINDOW / (ratio * math.sqrt(m_b)) + eps
    a_breaks = np.concatenate([[eps, 2 * eps], np.linspace(2 * eps, a_hi, 33)[1:]])
    a, wa = _composite(a_breaks, order)
    a, wa = a.ravel(), wa.ravel()
    # t = cos(angle between u_par and v); the prefactor peaks at t = -share*a/speed
    if speed > 0:
        width = 1.0 / (math.sqrt(m_b) * speed)
        centre = -share * a / speed
        t_breaks = centre[:, None] + _WINDOW * width * np.linspace(-1.0, 1.0, 17)[None, :]
        t_breaks = np.concatenate([-np.ones((a.size, 1)), t_breaks, np.ones((a.size, 1))], axis=1)
        t_breaks = np.sort(np.clip(t_breaks, -1.0, 1.0), axis=1)
    else:
        t_breaks = np.tile(np.linspace(-1.0, 1.0, 3), (a.size, 1))
    t, wt = _composite(t_breaks, order)
    t, wt = t.reshape(a.size, -1), wt.reshape(a.size, -1)
    aa = np.broadcast_to(a[:, None], t.shape)
    zpar = speed * t + share * aa
    pre = np.exp(-0.5 * m_b * (zpar ** 2 + (ratio * aa) ** 2)) / aa
    rho = speed * np.sqrt(np.clip(1.0 - t * t, 0.0, None))
    keep = pre > 1e-300
    inner = np.zeros(t.shape)
    inner[keep] = _inner_batch(aa[keep], rho[keep], m_b, gamma, config, kernel, order)
    vstar = np.sqrt(np.maximum(speed ** 2 + 2 * c * aa * speed * t + (c * aa) ** 2, 0.0))
    wratio = ((1.0 + speed) / (1.0 + vstar)) ** (gamma * s)
    dens = 2.0 * math.pi * (a * a * wa)[:, None] * wt
    return float(np.sum(dens * pre * inner * wratio))


def verify_kernel_decay(masses: MassPair, config, gamma: float, sample_speeds, s: float = 0.0, *,
                        species_pair=("A", "B"), kernel: AngularKernel | None = None) -> list[DecayRow]:
    """``I(v) = int |k1(v, u_par)| w^s(v)/w^s(v_*) du_par`` along a ray in v.

    ``v_* = v + 2 m_b/(m_a+m_b) u_par``; the normalized column is
    ``I(v) (1+|v|)^(2-gamma)``.  The error column is the difference between
    two Gauss-Legendre orders on the same breakpoints.
    """
    _check_gamma(gamma)
    if config is None or not config.epsilon > 0:
        raise ConfigurationError("kernel decay needs a cutoff with epsilon > 0")
    if s > 0:
        raise ConfigurationError(f"weight power s must be <= 0, got {s}")
    kernel = kernel or AngularKernel()
    m_a, m_b = _coefficients(masses, species_pair)
    rows = []
    for speed in sample_speeds:
        speed = float(speed)
        if speed < 0 or not np.isfinite(speed):
            raise ConfigurationError(f"sample speeds must be finite and >= 0, got {speed}")
        fine = _decay_integral(m_a, m_b, speed, gamma, s, config, kernel, 12)
        coarse = _decay_integral(m_a, m_b, speed, gamma, s, config, kernel, 8)
        err = abs(fine - coarse)
        if not np.isfinite(fine) or err > 1e-3 * abs(fine):
            raise NumericalError(f"decay integral at |v| = {speed} did not converge "
                                 f"(value {fine:.6e}, estimated error {err:.2e})")
        rows.append(DecayRow(speed, fine, fine * (1.0 + speed) ** (2.0 - gamma), err))
    return rows


def _check_gamma(gamma: float) -> None:
    if not -3.0 < gamma < 0.0:
        raise ConfigurationError("gamma must lie in the open interval (-3, 0)")
