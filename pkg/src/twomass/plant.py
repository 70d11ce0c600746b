"""Two-mass oscillator: linear model, delay, and static input nonlinearities."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import trapezoid

from .lti import RationalTF, StateSpaceModel, ss_to_tf

__all__ = [
    "PlantParams", "PlantState", "build_plant", "plant_tf", "input_gain",
    "mean_inverse_gain", "gravity_feedforward", "eigenfrequency",
]


@dataclass(frozen=True)
class PlantParams:
    """Physical constants of the actuator/load pair.

    ``uss_fit`` holds ascending coefficients of the steady-state input
    voltage ``u_ss(x1)`` in V over m.  ``None`` selects the analytic
    gravity-balance voltage, i.e. a unit input gain everywhere.
    """

    k: float = 200.0
    m: float = 0.6
    M: float = 0.75
    eta: float = 200.0
    zeta: float = 0.02
    psi: float = 17.16
    R: float = 5.23
    g: float = 9.81
    tau_n: float | None = None
    uss_fit: tuple | None = None
    k_m: float = 1.3
    x1_range: tuple = (0.0, 0.020)
    u_range: tuple = (0.0, 10.0)

    def __post_init__(self):
        for name in ("k", "m", "M", "eta", "psi", "R"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.zeta < 0 or self.g < 0:
            raise ValueError("zeta and g must be nonnegative")
        if self.k_m <= 0:
            raise ValueError("k_m must be positive")
        if self.uss_fit is not None:
            object.__setattr__(self, "uss_fit", tuple(float(c) for c in self.uss_fit))
        if self.tau_n is None:
            object.__setattr__(self, "tau_n", 2.0 * math.pi / eigenfrequency(self))
        elif not self.tau_n >= 0:
            raise ValueError("tau_n must be nonnegative")

    def replace(self, **changes) -> "PlantParams":
        if "tau_n" not in changes and any(k in changes for k in ("k", "m", "M", "eta", "zeta")):
            changes["tau_n"] = None
        return replace(self, **changes)

    @property
    def damping_ratio_ok(self) -> bool:
        return self.zeta < self.eta / 100.0


@dataclass(frozen=True)
class PlantState:
    x1: float = 0.0
    x2: float = 0.0
    x3: float = 0.0
    x4: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2, self.x3, self.x4])


def _matrices(p: PlantParams):
    k, m, M, eta, zeta = p.k, p.m, p.M, p.eta, p.zeta
    A = np.array([
        [0.0, 1.0, 0.0, 0.0],
        [-k / m, -(eta + zeta) / m, k / m, zeta / m],
        [0.0, 0.0, 0.0, 1.0],
        [k / M, zeta / M, -k / M, -zeta / M],
    ])
    B = np.array([[0.0], [p.psi / (p.R * m)], [0.0], [0.0]])
    C = np.array([[0.0, 0.0, 1.0, 0.0]])
    E = np.array([[0.0, 0.0], [1.0 / m, 0.0], [0.0, 0.0], [0.0, 1.0 / M]])
    return A, B, C, E


def build_plant(p: PlantParams) -> tuple[StateSpaceModel, np.ndarray]:
    """Linear model ``x' = Ax + Bu + E[d, D]``, ``y = Cx``.

    Returns the input/output realization and the gravity input matrix ``E``.
    """
    A, B, C, E = _matrices(p)
    E.setflags(write=False)
    return StateSpaceModel(A, B, C, [[0.0]]), E


def eigenfrequency(p: PlantParams) -> float:
    """Imaginary part of the lightly damped pole pair (rad/s)."""
    A, *_ = _matrices(p)
    ev = np.linalg.eigvals(A)
    return float(np.max(np.abs(ev.imag)))


def plant_tf(p: PlantParams, tau: float | None = 0.0) -> RationalTF:
    """``G_yu`` with the delay field set to ``tau`` (``None`` means ``tau_n``)."""
    g = ss_to_tf(build_plant(p)[0])
    tau = p.tau_n if tau is None else tau
    return g.with_delay(tau)


def _uss(p: PlantParams, x1):
    return np.polynomial.polynomial.polyval(np.asarray(x1, dtype=float), p.uss_fit)


def input_gain(p: PlantParams, x1):
    """State-dependent input gain ``(m+M) g R / (psi * u_ss(x1))``."""
    if p.uss_fit is None:
        return np.ones_like(np.asarray(x1, dtype=float))
    uss = _uss(p, x1)
    if np.any(uss <= 0):
        raise ValueError("u_ss must be positive on the evaluated positions")
    return (p.m + p.M) * p.g * p.R / (p.psi * uss)


def mean_inverse_gain(p: PlantParams, n: int = 1001) -> float:
    """Trapezoidal mean of ``1/k_u`` over the admissible ``x1`` range."""
    lo, hi = p.x1_range
    x = np.linspace(lo, hi, n)
    return float(trapezoid(1.0 / input_gain(p, x), x) / (hi - lo))


def gravity_feedforward(p: PlantParams) -> float:
    """Voltage ``(m+M) g R / psi`` that balances both weights."""
    return (p.m + p.M) * p.g * p.R / p.psi
