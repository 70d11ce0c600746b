"""Reference trajectories, band-limited disturbances, jitter and error metrics."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from math import factorial

import numpy as np

__all__ = [
    "ReferenceSpec", "DisturbanceSpec", "MetricsReport", "transition_coefficients",
    "transition_reference", "disturbance_signal", "jitter", "compute_metrics",
    "metrics_table_csv", "metrics_table_json",
]

JITTER_AMPLITUDE = 0.4
JITTER_FREQUENCY = 450.0


def transition_coefficients(order: int = 7) -> np.ndarray:
    """Coefficients of ``x**k``, ``k = (order+1)/2 .. order``, of the smoothstep.

    ``c_k = n!/(d-1)! * (-1)**(k-d) / (k (k-d)! (n-k)!)`` with
    ``n = order`` and ``d = (n+1)/2`` derivatives matched at both ends.
    For ``order = 7`` this is ``840 (-1)**(k-4) / (k (k-4)! (7-k)!)``.
    """
    if order < 1 or order % 2 == 0:
        raise ValueError("order must be odd and positive")
    n, d = order, (order + 1) // 2
    lead = factorial(n) / factorial(d - 1)
    return np.array([lead * (-1) ** (k - d) / (k * factorial(k - d) * factorial(n - k))
                     for k in range(d, n + 1)])


_COEF = np.concatenate([np.zeros(4), transition_coefficients(7)])
_POLY = [np.polynomial.Polynomial(_COEF).deriv(j) for j in range(8)]


@dataclass(frozen=True)
class ReferenceSpec:
    """Set-point profile made of smooth transitions.

    Transitions start at each entry of ``start_times`` and alternate between
    ``r0 -> r1`` and ``r1 -> r0``.  Before the first one the value is ``r0``.
    """

    r0: float = 0.005
    r1: float = 0.010
    t_transition: float = 2.0
    start_times: tuple = (1.0,)

    def __post_init__(self):
        if not self.t_transition > 0:
            raise ValueError("t_transition must be positive")
        st = tuple(float(t) for t in self.start_times)
        if any(b < a + self.t_transition for a, b in zip(st, st[1:])):
            raise ValueError("transitions must not overlap")
        object.__setattr__(self, "start_times", st)

    def __call__(self, t, derivative: int = 0) -> np.ndarray:
        return transition_reference(self, t, derivative)


def transition_reference(spec: ReferenceSpec, t, derivative: int = 0) -> np.ndarray:
    """Reference value or analytic derivative (up to order 7) at times ``t``."""
    if not 0 <= derivative <= 7:
        raise ValueError("derivative must be in 0..7")
    t = np.asarray(t, dtype=float)
    out = np.full(t.shape, spec.r0 if derivative == 0 else 0.0)
    T = spec.t_transition
    for i, t0 in enumerate(spec.start_times):
        step = (spec.r1 - spec.r0) * (1 if i % 2 == 0 else -1)
        x = np.clip((t - t0) / T, 0.0, 1.0)
        if derivative == 0:
            out = out + step * _POLY[0](x)
        else:
            inside = (t > t0) & (t < t0 + T)
            out = out + np.where(inside, step * _POLY[derivative](x) / T**derivative, 0.0)
    return out


@dataclass(frozen=True)
class DisturbanceSpec:
    band: tuple = (0.1, 20.0)
    amplitude_peak: float = 1.0
    seed: int = 0
    start_time: float = 2.0

    def __post_init__(self):
        lo, hi = self.band
        if not 0 < lo < hi:
            raise ValueError("band must satisfy 0 < lo < hi")
        if self.amplitude_peak < 0:
            raise ValueError("amplitude_peak must be nonnegative")


def disturbance_signal(spec: DisturbanceSpec, t_grid) -> np.ndarray:
    """Band-limited random-phase noise on a uniform grid.

    Bins inside the band get unit magnitude and uniformly drawn phases; the
    inverse real FFT is rescaled to the requested peak.  The signal is zero
    before ``start_time`` and the random part spans the samples after it.
    """
    t = np.asarray(t_grid, dtype=float)
    out = np.zeros(t.size)
    active = t >= spec.start_time
    n = int(np.count_nonzero(active))
    if n < 2:
        return out
    dt = float(t[1] - t[0])
    w = 2.0 * math.pi * np.fft.rfftfreq(n, dt)
    lo, hi = spec.band
    if hi > math.pi / dt:
        raise ValueError("band exceeds the Nyquist frequency of the grid")
    sel = (w >= lo) & (w <= hi)
    if not np.any(sel):
        raise ValueError("no frequency bin falls inside the disturbance band")
    rng = np.random.default_rng(spec.seed)
    spec_ = np.zeros(w.size, dtype=complex)
    spec_[sel] = np.exp(1j * rng.uniform(0.0, 2.0 * math.pi, int(np.count_nonzero(sel))))
    d = np.fft.irfft(spec_, n)
    peak = np.max(np.abs(d))
    out[active] = d * (spec.amplitude_peak / peak) if peak > 0 else 0.0
    return out


def jitter(t, amplitude: float = JITTER_AMPLITUDE, omega: float = JITTER_FREQUENCY) -> np.ndarray:
    """Zero-mean square-wave dither ``A sign(sin(omega t))``."""
    return amplitude * np.sign(np.sin(omega * np.asarray(t, dtype=float)))


@dataclass(frozen=True)
class MetricsReport:
    e_rms: float
    e_max_abs: float
    u_max_abs: float
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        if min(self.e_rms, self.e_max_abs, self.u_max_abs) < 0:
            raise ValueError("metrics must be nonnegative")
        if self.e_rms > self.e_max_abs * (1 + 1e-12):
            raise ValueError("e_rms cannot exceed e_max_abs")

    def as_dict(self) -> dict:
        return {**self.labels, "e_rms": self.e_rms, "e_max_abs": self.e_max_abs,
                "u_max_abs": self.u_max_abs}


def compute_metrics(e, u, labels: dict | None = None) -> MetricsReport:
    """RMS and peak absolute error plus peak absolute control effort."""
    e = np.asarray(e, dtype=float).ravel()
    u = np.asarray(u, dtype=float).ravel()
    if e.size == 0 or u.size == 0:
        raise ValueError("metrics need nonempty samples")
    e_max = float(np.max(np.abs(e)))
    e_rms = min(float(np.sqrt(np.mean(e * e))), e_max)
    return MetricsReport(e_rms, e_max, float(np.max(np.abs(u))), dict(labels or {}))


_COLUMNS = ("experiment", "controller", "tau_factor", "e_rms_mm", "e_max_abs_mm", "u_max_abs_V", "status")


def _rows(reports):
    for rep in reports:
        lab = rep.labels
        yield (lab.get("experiment", ""), lab.get("controller", ""),
               f"{lab.get('tau_factor', float('nan')):.2f}",
               f"{1e3 * rep.e_rms:.6f}", f"{1e3 * rep.e_max_abs:.6f}", f"{rep.u_max_abs:.6f}",
               lab.get("status", "ok"))


def metrics_table_csv(reports) -> str:
    """One row per scenario: errors in mm, effort in V."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_COLUMNS)
    w.writerows(_rows(reports))
    return buf.getvalue()


def metrics_table_json(reports) -> str:
    rows = []
    for rep in reports:
        lab = rep.labels
        rows.append({"experiment": lab.get("experiment", ""), "controller": lab.get("controller", ""),
                     "tau_factor": lab.get("tau_factor"), "e_rms_mm": 1e3 * rep.e_rms,
                     "e_max_abs_mm": 1e3 * rep.e_max_abs, "u_max_abs_V": rep.u_max_abs,
                     "status": lab.get("status", "ok")})
    return json.dumps(rows, indent=2, sort_keys=True) + "\n"
