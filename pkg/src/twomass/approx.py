"""Rational approximations: Pade delays, Oustaloup filters, partial compensator."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .lti import Polynomial, RationalTF

__all__ = [
    "OustaloupSpec", "CompensatorSpec", "pade_delay", "oustaloup",
    "oustaloup_corners", "partial_compensator",
]


def pade_delay(tau: float, order: int = 2) -> RationalTF:
    """All-pass Pade approximation of ``exp(-tau*s)`` of order 1 or 2."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    if order == 1:
        return RationalTF(Polynomial([2.0, -tau]), Polynomial([2.0, tau]))
    if order == 2:
        return RationalTF(Polynomial([12.0, -6.0 * tau, tau * tau]),
                          Polynomial([12.0, 6.0 * tau, tau * tau]))
    raise ValueError(f"unsupported Pade order {order}")


@dataclass(frozen=True)
class OustaloupSpec:
    alpha: float
    omega_l: float
    omega_h: float
    n_cells: int = 1

    def __post_init__(self):
        if not 0 < self.omega_l < self.omega_h:
            raise ValueError("need 0 < omega_l < omega_h")
        if abs(self.alpha) > 1:
            raise ValueError("|alpha| must not exceed 1")
        if self.n_cells < 1:
            raise ValueError("n_cells must be >= 1")


def oustaloup_corners(spec: OustaloupSpec) -> tuple[np.ndarray, np.ndarray]:
    """Zero and pole corner frequencies (rad/s), ``2N+1`` each."""
    N, a = spec.n_cells, spec.alpha
    k = np.arange(2 * N + 1)
    ratio = spec.omega_h / spec.omega_l
    zeros = spec.omega_l * ratio ** ((k + (1 - a) / 2) / (2 * N + 1))
    poles = spec.omega_l * ratio ** ((k + (1 + a) / 2) / (2 * N + 1))
    return zeros, poles


def oustaloup(spec: OustaloupSpec) -> RationalTF:
    """Recursive pole/zero approximation of ``s**alpha`` on ``[omega_l, omega_h]``.

    The gain is fixed so that the magnitude at the geometric band centre
    equals ``centre**alpha`` exactly.
    """
    if spec.alpha == 0:
        return RationalTF.gain(1.0)
    zc, pc = oustaloup_corners(spec)
    h = RationalTF.from_zpk(-zc, -pc, 1.0)
    wc = math.sqrt(spec.omega_l * spec.omega_h)
    k = wc**spec.alpha / abs(h(1j * wc))
    return h * k


@dataclass(frozen=True)
class CompensatorSpec:
    """Partial compensation of a right-half-plane zero at ``z``.

    ``construction`` selects how the fractional element is rationalized:

    ``"split"``
        ``(1 + s/z)**(-1/nu) = (1 + s/z)**(1 - 1/nu) / (1 + s/z)`` with the
        fractional numerator approximated in the shifted variable ``s + z``.
    ``"direct"``
        Oustaloup filter of exponent ``-1/nu`` in the shifted variable.

    ``anchor`` fixes the gain: ``"dc"`` gives unit static gain, ``"band"``
    keeps the Oustaloup centre-band normalization of the shifted filter.
    """

    z: float
    nu: float = 2
    omega_l: float = 0.05
    omega_h: float = 50.0
    n_cells: int = 1
    construction: str = "split"
    anchor: str = "dc"

    def __post_init__(self):
        if not self.z > 0:
            raise ValueError("z must be positive")
        if not self.nu >= 2:
            raise ValueError("nu must be >= 2")
        if self.construction not in ("split", "direct"):
            raise ValueError(f"unknown construction {self.construction!r}")
        if self.anchor not in ("dc", "band"):
            raise ValueError(f"unknown anchor {self.anchor!r}")


def _shifted(h: RationalTF, a: float) -> RationalTF:
    return RationalTF(h.num.shift(a), h.den.shift(a))


def partial_compensator(spec: CompensatorSpec) -> tuple[RationalTF, RationalTF]:
    """Rational fractional element ``Q ~ (1 + s/z)**(1/nu)`` and its inverse.

    Returns ``(q, q_inv)``.  The inverse is the factor that enters the
    controller; every pole and zero is real and strictly negative.
    """
    z = spec.z
    if not spec.omega_l < z < spec.omega_h:
        warnings.warn(f"compensated zero {z:g} rad/s lies outside the approximation band", stacklevel=2)
    if math.isinf(spec.nu):
        one = RationalTF.gain(1.0)
        return one, one
    a = 1.0 / spec.nu
    if spec.construction == "split":
        frac = oustaloup(OustaloupSpec(1.0 - a, spec.omega_l, spec.omega_h, spec.n_cells))
        q_inv = _shifted(frac, z) * RationalTF(Polynomial([1.0]), Polynomial([z, 1.0]))
    else:
        frac = oustaloup(OustaloupSpec(-a, spec.omega_l, spec.omega_h, spec.n_cells))
        q_inv = _shifted(frac, z)
    if spec.anchor == "dc":
        q_inv = q_inv * (1.0 / q_inv.dcgain())
    else:
        # both constructions approximate (s + z)**(-a) = z**(-a) * (1 + s/z)**(-a)
        q_inv = q_inv * z**a
    return q_inv.inv(), q_inv
