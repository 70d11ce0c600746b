"""Fixed-step closed-loop simulation of both controller topologies."""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels_py
from .controllers import ControllerSet, canonical_hinf_controller, feedforward_ustar, plan_feedforward
from .lti import ImproperSystemError, LTIError, RationalTF, StateSpaceModel, tf_row_to_ss
from .plant import PlantParams, PlantState, build_plant, gravity_feedforward, mean_inverse_gain
from .signals import (DisturbanceSpec, MetricsReport, ReferenceSpec, compute_metrics,
                      disturbance_signal, jitter)

try:  # compiled kernel when available
    from . import _kernels as _kernels_c
except ImportError:  # pragma: no cover - depends on the build
    _kernels_c = None

__all__ = [
    "SimulationError", "DiscreteController", "Scenario", "SimResult", "MatrixRow",
    "discretize_controller", "simulate", "run_matrix", "default_matrix", "get_kernel",
    "delay_samples", "T_S", "KERNEL_IMPL",
]

T_S = 2e-4
BLOWUP = 1e3


def get_kernel(name: str | None = None):
    """Kernel module by name (``"cython"`` or ``"python"``); default prefers compiled.

    The environment variable ``TWOMASS_KERNEL=python`` forces the fallback.
    """
    name = name or os.environ.get("TWOMASS_KERNEL") or "auto"
    if name == "python":
        return _kernels_py
    if name == "cython":
        if _kernels_c is None:
            raise ImportError("compiled kernel is not built")
        return _kernels_c
    if name != "auto":
        raise ValueError(f"unknown kernel {name!r}")
    return _kernels_c if _kernels_c is not None else _kernels_py


KERNEL_IMPL = get_kernel().IMPLEMENTATION


class SimulationError(RuntimeError):
    """Simulation aborted (state blow-up or invalid setup)."""


def delay_samples(tau: float, t_s: float = T_S) -> int:
    """Ring-buffer length ``ceil(tau / T_s)``, robust to representation error."""
    return int(math.ceil(tau / t_s - 1e-9)) if tau > 0 else 0


# ---------------------------------------------------------------------------
# controller discretization

@dataclass(frozen=True, eq=False)
class DiscreteController:
    Ad: np.ndarray
    Bd: np.ndarray
    Cd: np.ndarray
    Dd: np.ndarray
    t_s: float

    def freq_response(self, w) -> np.ndarray:
        """``H(exp(j w T_s))`` with shape ``(len(w), outputs, inputs)``."""
        z = np.exp(1j * np.atleast_1d(np.asarray(w, dtype=float)) * self.t_s)
        eye = np.eye(self.Ad.shape[0])
        return np.array([self.Cd @ np.linalg.solve(zi * eye - self.Ad, self.Bd) + self.Dd for zi in z])

    def steady_state(self, w0) -> np.ndarray:
        """State with ``x = Ad x + Bd w0`` and zero output, in the least-squares sense."""
        n = self.Ad.shape[0]
        w0 = np.asarray(w0, dtype=float)
        M = np.vstack([self.Ad - np.eye(n), self.Cd])
        rhs = -np.concatenate([self.Bd @ w0, self.Dd @ w0])
        return np.linalg.lstsq(M, rhs, rcond=None)[0]


def _bilinear(m: StateSpaceModel, t_s: float):
    n = m.n_states
    eye = np.eye(n)
    ima = eye - 0.5 * t_s * m.A
    Ad = np.linalg.solve(ima, eye + 0.5 * t_s * m.A)
    Bd = np.linalg.solve(ima, t_s * m.B)
    Cd = np.linalg.solve(ima.T, m.C.T).T
    Dd = m.D + 0.5 * m.C @ Bd
    return Ad, Bd, Cd, Dd


def discretize_controller(c, t_s: float = T_S) -> DiscreteController:
    """Bilinear (Tustin) discretization of a proper controller.

    ``c`` is a :class:`RationalTF`, a row of transfer functions with a
    common denominator, or a :class:`StateSpaceModel`.
    """
    if isinstance(c, StateSpaceModel):
        m = c
    else:
        row = [c] if isinstance(c, RationalTF) else list(c)
        for g in row:
            if not g.is_proper:
                raise ImproperSystemError("cannot discretize an improper controller")
            if g.delay:
                raise LTIError("controller must be delay-free")
        m = tf_row_to_ss(row)
    m = m.balanced_scaling()
    return DiscreteController(*_bilinear(m, t_s), t_s)


# ---------------------------------------------------------------------------
# scenarios

_DEFAULT_TRACKING = ReferenceSpec(0.005, 0.010, 2.0, (1.0, 7.0, 13.0))


@dataclass(frozen=True)
class Scenario:
    """One closed-loop run.

    ``controller`` is ``"fo"`` (error feedback plus feedforward) or
    ``"hinf"`` (2DOF).  ``x0`` defaults to the reference equilibrium for
    tracking and to ``[0.01, 0, 0.01, 0]`` for disturbance runs.
    """

    controller: str = "fo"
    experiment: str = "tracking"
    tau_factor: float = 1.0
    x0: PlantState | None = None
    horizon: float = 20.0
    reference: ReferenceSpec | None = None
    disturbance: DisturbanceSpec | None = None
    jitter_on: bool = False
    ku_nonlinearity_on: bool = False
    ff_shift: str = "+tau_n"
    use_feedforward: bool = True
    hard_stop: bool = True
    saturate: bool = True
    t_s: float = T_S

    def __post_init__(self):
        if self.controller not in ("fo", "hinf"):
            raise ValueError(f"unknown controller {self.controller!r}")
        if self.experiment not in ("tracking", "disturbance"):
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if not self.tau_factor >= 0 or not self.horizon > 0 or not self.t_s > 0:
            raise ValueError("tau_factor, horizon and t_s must be positive")
        if self.experiment == "tracking" and self.reference is None:
            object.__setattr__(self, "reference", _DEFAULT_TRACKING)
        if self.experiment == "disturbance" and self.disturbance is None:
            object.__setattr__(self, "disturbance", DisturbanceSpec())
        if self.x0 is None:
            if self.experiment == "disturbance":
                x0 = PlantState(0.01, 0.0, 0.01, 0.0)
            else:
                r0 = float(self.reference(np.array(0.0)))
                x0 = PlantState(r0, 0.0, r0, 0.0)
            object.__setattr__(self, "x0", x0)

    @property
    def label(self) -> str:
        return f"{self.experiment}_{self.controller}_tau{self.tau_factor:.2f}"

    def labels(self) -> dict:
        return {"experiment": self.experiment, "controller": self.controller,
                "tau_factor": self.tau_factor}


@dataclass(frozen=True, eq=False)
class SimResult:
    t: np.ndarray
    r: np.ndarray
    y: np.ndarray
    e: np.ndarray
    u: np.ndarray
    u_plant: np.ndarray
    x: np.ndarray
    kernel: str = ""

    def __post_init__(self):
        n = self.t.size
        for name in ("r", "y", "e", "u", "u_plant"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} has inconsistent length")
        if self.x.shape != (n, 4):
            raise ValueError("x must have shape (N, 4)")
        for name in ("t", "r", "y", "e", "u", "u_plant", "x"):
            getattr(self, name).setflags(write=False)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "r", "y", "e", "u", "u_plant", "x1", "x2", "x3", "x4"])
            cols = np.column_stack([self.t, self.r, self.y, self.e, self.u, self.u_plant, self.x])
            for row in cols:
                w.writerow([repr(float(v)) for v in row])

    def metrics(self, labels: dict | None = None) -> MetricsReport:
        return compute_metrics(self.e, self.u, labels)


def simulate(sc: Scenario, p: PlantParams | None = None, controllers: ControllerSet | None = None,
             kernel: str | None = None) -> SimResult:
    """Run one scenario on the nonlinear sampled loop.

    Raises
    ------
    SimulationError
        When a state exceeds ``1e3`` in magnitude (closed loop unstable).
    """
    p = PlantParams() if p is None else p
    cs = canonical_hinf_controller() if controllers is None else controllers
    kern = get_kernel(kernel)
    t_s = sc.t_s
    N = int(round(sc.horizon / t_s)) + 1
    t = np.arange(N) * t_s
    x0 = sc.x0.as_array()

    if sc.experiment == "tracking":
        r = sc.reference(t)
    else:
        r = np.full(N, x0[2])

    ff = np.zeros(N)
    if sc.controller == "fo":
        dc = discretize_controller(cs.c_fo, t_s)
        dc = replace(dc, Bd=np.hstack([dc.Bd, np.zeros_like(dc.Bd)]),
                     Dd=np.hstack([dc.Dd, np.zeros_like(dc.Dd)]))
        topology = 1
        w0 = np.array([r[0] - x0[2], 0.0])
        if sc.experiment == "tracking" and sc.use_feedforward:
            ff = feedforward_ustar(plan_feedforward(sc.reference, t, p, sc.ff_shift), p)
    else:
        dc = discretize_controller([cs.c_inf_1, cs.c_inf_2], t_s)
        topology = 0
        w0 = np.array([r[0], x0[2]])
    xc0 = dc.steady_state(w0)

    dist = np.zeros(N)
    if sc.experiment == "disturbance":
        dist = disturbance_signal(sc.disturbance, t)
    jit = jitter(t) if sc.jitter_on else np.zeros(N)

    uss = np.zeros(0)
    ku_num = 1.0
    pre_gain = 1.0
    if sc.ku_nonlinearity_on:
        if p.uss_fit is not None:
            uss = np.asarray(p.uss_fit, dtype=float)
            ku_num = gravity_feedforward(p)
        pre_gain = mean_inverse_gain(p) / p.k_m
    u_lo, u_hi = p.u_range if sc.saturate else (-np.inf, np.inf)

    m, _ = build_plant(p)
    n_delay = delay_samples(sc.tau_factor * p.tau_n, t_s)
    y, u, up, X, status, n_done = kern.run_loop(
        m.A, m.B, dc.Ad, dc.Bd, dc.Cd, dc.Dd, x0, xc0, r, ff, dist, jit, topology, n_delay,
        gravity_feedforward(p), float(u_lo), float(u_hi), p.x1_range[0], p.x1_range[1],
        bool(sc.hard_stop), uss, ku_num, pre_gain, t_s, BLOWUP)
    if status != 0:
        raise SimulationError(f"{sc.label}: state magnitude exceeded {BLOWUP:g} at t = {t[n_done - 1]:.4f} s")
    return SimResult(t, r, y, r - y, u, up, X, kern.IMPLEMENTATION)


# ---------------------------------------------------------------------------
# scenario matrix

@dataclass(frozen=True, eq=False)
class MatrixRow:
    scenario: Scenario
    result: SimResult | None
    metrics: MetricsReport
    error: str | None = None


def default_matrix(seed: int = 0, ff_shift: str = "+tau_n", peak: float = 1.0,
                   tau_factors=(0.9, 1.0, 1.1), **flags) -> list[Scenario]:
    """Both controllers times three delays times both experiments (12 runs)."""
    out = []
    for exp in ("disturbance", "tracking"):
        for ctrl in ("hinf", "fo"):
            for f in tau_factors:
                dist = DisturbanceSpec(amplitude_peak=peak, seed=seed) if exp == "disturbance" else None
                out.append(Scenario(controller=ctrl, experiment=exp, tau_factor=f, disturbance=dist,
                                    ff_shift=ff_shift, **flags))
    return out


def _run_one(args):
    sc, p, cs, kernel, keep = args
    labels = sc.labels()
    try:
        res = simulate(sc, p, cs, kernel)
    except (SimulationError, LTIError, ValueError) as exc:
        nan = MetricsReport(0.0, 0.0, 0.0, {**labels, "status": f"error: {exc}"})
        return MatrixRow(sc, None, nan, str(exc))
    return MatrixRow(sc, res if keep else None, res.metrics(labels))


def run_matrix(scenarios, p: PlantParams | None = None, controllers: ControllerSet | None = None,
               workers: int | None = None, kernel: str | None = None,
               keep_results: bool = True) -> list[MatrixRow]:
    """Run every scenario; failures are recorded per row instead of raised.

    Results come back in input order regardless of ``workers``.
    """
    p = PlantParams() if p is None else p
    cs = canonical_hinf_controller() if controllers is None else controllers
    jobs = [(sc, p, cs, kernel, keep_results) for sc in scenarios]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_run_one, jobs))
    return [_run_one(j) for j in jobs]
