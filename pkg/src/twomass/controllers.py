"""Controller construction and analysis for the delayed two-mass loop.

Two controllers are handled:

* a two-degree-of-freedom H-infinity controller ``u = C1 r + C2 y`` whose
  channels share one state vector, and
* a fractional-order loop-shaping controller ``u = C_FO (r - y) + u*`` with
  flatness-based feedforward ``u*``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .approx import CompensatorSpec, pade_delay, partial_compensator
from .lti import (LTIError, Polynomial, RationalTF, StateSpaceModel, _check_stable,
                  closed_loop_rhp_count, hinf_norm, hinf_norm_ss, peak_gain, tf_row_to_ss, tf_to_ss)
from .plant import PlantParams, build_plant, plant_tf
from .signals import ReferenceSpec

__all__ = [
    "ToleranceError", "WeightSet", "GeneralizedPlant", "NormCheck", "ControllerSet",
    "FeedforwardPlan", "SensitivityResult", "build_weights", "surrogate_plant",
    "build_generalized_plant", "lft", "closed_loop_norm_check", "integrator_augment",
    "canonical_hinf_controller", "build_fpp", "build_kpil", "canonical_cfo", "assemble_cfo",
    "compare_response", "plan_feedforward", "feedforward_ustar", "ff_transfer", "sensitivity_yd",
    "FF_SHIFTS",
]


class ToleranceError(LTIError):
    """An assembled controller deviates from its reference beyond tolerance."""


# ---------------------------------------------------------------------------
# H-infinity design data

@dataclass(frozen=True)
class WeightSet:
    w1: RationalTF
    w2: RationalTF

    def __post_init__(self):
        if not abs(self.w1.dcgain()) > abs(self.w1.high_frequency_gain):
            raise ValueError("w1 must be low-pass (|W1(0)| > |W1(inf)|)")
        if not abs(self.w2.dcgain()) < abs(self.w2.high_frequency_gain):
            raise ValueError("w2 must be high-pass (|W2(0)| < |W2(inf)|)")


def build_weights() -> WeightSet:
    """Performance weight on the tracking error and robustness weight on the input."""
    w1 = RationalTF.from_factors(0.01, [[15.0, 1.0]], [[1.5e-3, 1.0]])
    w2 = RationalTF.from_factors(0.95, [[3.0, 1.0]], [[2850.0, 1.0]])
    return WeightSet(w1, w2)


def surrogate_plant(p: PlantParams, order: int = 2) -> RationalTF:
    """Delay-free design model ``G_yu`` times a Pade approximation of ``exp(-tau_n s)``."""
    return plant_tf(p) * pade_delay(p.tau_n, order)


@dataclass(frozen=True, eq=False)
class GeneralizedPlant:
    """Interconnection with inputs ``(r, d_u, u)`` and outputs ``(z1, z2, r, y)``.

    ``blocks[i][j]`` is the transfer function from input ``j`` to output ``i``.
    """

    g_tilde: RationalTF
    weights: WeightSet
    blocks: tuple = field(init=False)

    INPUTS = ("r", "d_u", "u")
    OUTPUTS = ("z1", "z2", "r", "y")

    def __post_init__(self):
        if self.g_tilde.delay:
            raise LTIError("the generalized plant takes a rational delay surrogate, not a pure delay")
        g, w1, w2 = self.g_tilde, self.weights.w1, self.weights.w2
        zero, one = RationalTF.gain(0.0), RationalTF.gain(1.0)
        blocks = (
            (-w1, w1 * g, w1 * g),
            (zero, w2, w2),
            (one, zero, zero),
            (zero, g, g),
        )
        object.__setattr__(self, "blocks", blocks)

    def evaluate(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=complex))
        out = np.empty((s.size, 4, 3), dtype=complex)
        for i, row in enumerate(self.blocks):
            for j, b in enumerate(row):
                out[:, i, j] = b(s)
        return out

    def to_ss(self) -> StateSpaceModel:
        """Realization with states ``[x_G, x_W1, x_W2]`` sharing ``G`` between rows."""
        G = tf_to_ss(self.g_tilde)
        W1 = tf_to_ss(self.weights.w1)
        W2 = tf_to_ss(self.weights.w2)
        ng, n1, n2 = G.n_states, W1.n_states, W2.n_states
        n = ng + n1 + n2
        ig, i1, i2 = slice(0, ng), slice(ng, ng + n1), slice(ng + n1, n)
        # v = d_u + u drives G and W2; W1 sees y - r
        Bv = np.array([[0.0, 1.0, 1.0]])
        Br = np.array([[1.0, 0.0, 0.0]])
        Cy = np.zeros((1, n))
        Cy[:, ig] = G.C
        Dy = G.D @ Bv
        A = np.zeros((n, n))
        B = np.zeros((n, 3))
        A[ig, ig] = G.A
        B[ig] = G.B @ Bv
        A[i1, :] += W1.B @ Cy
        A[i1, i1] += W1.A
        B[i1] = W1.B @ (Dy - Br)
        A[i2, i2] = W2.A
        B[i2] = W2.B @ Bv
        C = np.zeros((4, n))
        D = np.zeros((4, 3))
        C[0] = W1.D @ Cy
        C[0, i1] += W1.C[0]
        D[0] = W1.D @ (Dy - Br)
        C[1, i2] = W2.C[0]
        D[1] = W2.D @ Bv
        D[2] = Br
        C[3] = Cy[0]
        D[3] = Dy
        return StateSpaceModel(A, B, C, D)


def build_generalized_plant(g_tilde: RationalTF, w: WeightSet) -> GeneralizedPlant:
    return GeneralizedPlant(g_tilde, w)


def lft(P: StateSpaceModel, K: StateSpaceModel, n_meas: int, n_ctrl: int) -> StateSpaceModel:
    """Lower linear fractional transformation ``F_l(P, K)``.

    The last ``n_meas`` outputs and ``n_ctrl`` inputs of ``P`` connect to ``K``.
    """
    nz = P.n_outputs - n_meas
    nw = P.n_inputs - n_ctrl
    B1, B2 = P.B[:, :nw], P.B[:, nw:]
    C1, C2 = P.C[:nz], P.C[nz:]
    D11, D12 = P.D[:nz, :nw], P.D[:nz, nw:]
    D21, D22 = P.D[nz:, :nw], P.D[nz:, nw:]
    if K.n_inputs != n_meas or K.n_outputs != n_ctrl:
        raise LTIError("controller dimensions do not match the measurement/control partition")
    M = np.eye(n_ctrl) - K.D @ D22
    if np.linalg.cond(M) > 1e12:
        raise LTIError("ill-posed interconnection: I - D_K D22 is singular")
    Zi = np.linalg.inv(M)
    n, nk = P.n_states, K.n_states
    # u = Ux [x; xk] + Uw w,  y = Yx [x; xk] + Yw w
    Ux = Zi @ np.hstack([K.D @ C2, K.C])
    Uw = Zi @ K.D @ D21
    Yx = np.hstack([C2, np.zeros((n_meas, nk))]) + D22 @ Ux
    Yw = D21 + D22 @ Uw
    A = np.zeros((n + nk, n + nk))
    A[:n, :n] = P.A
    A[:n] += B2 @ Ux
    A[n:, n:] = K.A
    A[n:] += K.B @ Yx
    B = np.vstack([B1 + B2 @ Uw, K.B @ Yw])
    C = np.hstack([C1, np.zeros((nz, nk))]) + D12 @ Ux
    D = D11 + D12 @ Uw
    return StateSpaceModel(A, B, C, D)


@dataclass(frozen=True)
class NormCheck:
    gamma: float
    channel_peaks: dict

    def as_dict(self) -> dict:
        return {"gamma": self.gamma,
                "channels": {k: {"peak": v[0], "omega": v[1]} for k, v in self.channel_peaks.items()}}


def closed_loop_norm_check(p, c: StateSpaceModel | "ControllerSet",
                           band=(1e-4, 1e5)) -> NormCheck:
    """H-infinity norm of the closed performance channel ``(r, d_u) -> (z1, z2)``.

    ``p`` is a :class:`GeneralizedPlant` or any state-space model whose last
    two outputs are measurements and last input is the control.
    """
    P = (p.to_ss() if isinstance(p, GeneralizedPlant) else p).balanced_scaling()
    K = (c.hinf_ss() if isinstance(c, ControllerSet) else c).balanced_scaling()
    cl = lft(P, K, n_meas=K.n_inputs, n_ctrl=K.n_outputs).balanced_scaling()
    if cl.n_states:
        _check_stable(cl.poles())
    gamma = hinf_norm_ss(cl, rtol=1e-7, check_stability=False)
    out_names = GeneralizedPlant.OUTPUTS if isinstance(p, GeneralizedPlant) else None
    in_names = GeneralizedPlant.INPUTS if isinstance(p, GeneralizedPlant) else None
    peaks = {}
    for i in range(cl.n_outputs):
        for j in range(cl.n_inputs):
            name = f"{out_names[i]}<-{in_names[j]}" if out_names else f"{i}<-{j}"
            peaks[name] = peak_gain(lambda w, i=i, j=j: cl.evaluate(1j * w)[:, i, j], band,
                                    per_decade=40, rtol=1e-6)
    return NormCheck(gamma, peaks)


def integrator_augment(c_hat: RationalTF, epsilon: float = 1.5e-3) -> tuple[RationalTF, RationalTF]:
    """Append ``1/(s + epsilon)`` and its implementation form ``1/s``.

    Returns ``(c_eps, c_prime)``.
    """
    if not 0 < epsilon <= 2e-3:
        raise ValueError("epsilon must lie in (0, 2e-3]")
    c_eps = c_hat * RationalTF(Polynomial([1.0]), Polynomial([epsilon, 1.0]))
    c_prime = c_hat * RationalTF(Polynomial([1.0]), Polynomial([0.0, 1.0]))
    return c_eps, c_prime


def _quad(b: float, c: float) -> list:
    return [c, b, 1.0]


def _lin(a: float) -> list:
    """Ascending coefficients of ``s + a``."""
    return [a, 1.0]


_HINF_DEN = [[0.0, 1.0], _lin(507.2), _lin(72.68), _quad(9.086, 63.62), _quad(307.9, 1.36e5)]
_HINF_C1 = (-0.030643, [_lin(-538.6), _lin(31.93), _lin(8.538), _quad(-32.18, 1.846e4), _quad(-314.0, 1.923e5)])
_HINF_C2 = (-3.3043, [_lin(-3.893e4), _lin(-1534.0), _lin(62.69), _lin(7.822), _lin(0.6413),
                      _quad(0.5762, 257.6)])
_CFO = (120.2, [_lin(14.09), _lin(6.092), _lin(5.292), _lin(2.0), _lin(0.6667), _quad(1.027, 267.4)],
        [[0.0, 1.0], _lin(6.0), _lin(5.484), _lin(5.203), _lin(8.015), _lin(9.0), _lin(33.32)])


def canonical_cfo() -> RationalTF:
    """Fractional-order loop-shaping controller with its fixed coefficients."""
    k, num, den = _CFO
    return RationalTF.from_factors(k, num, den)


@dataclass(frozen=True)
class ControllerSet:
    """Reference channel ``c_inf_1``, output channel ``c_inf_2`` and ``c_fo``.

    The H-infinity channels act as ``u = c_inf_1 r + c_inf_2 y``; the
    FO controller acts on the error ``r - y``.
    """

    c_inf_1: RationalTF
    c_inf_2: RationalTF
    c_fo: RationalTF
    dc_balance: float = 1.0

    TOPOLOGY = {"hinf": "two_dof_hinf", "fo": "error_feedback_with_ff"}

    def __post_init__(self):
        d1, d2 = self.c_inf_1.den.coef, self.c_inf_2.den.coef
        if d1.shape != d2.shape or not np.allclose(d1, d2, rtol=1e-12, atol=0.0):
            raise LTIError("H-infinity channels must share their denominator")
        for c in (self.c_inf_1, self.c_inf_2, self.c_fo):
            if not c.is_proper:
                raise LTIError("controllers must be proper")

    def hinf_ss(self) -> StateSpaceModel:
        """Shared-state realization with inputs ``(r, y)``."""
        return tf_row_to_ss([self.c_inf_1, self.c_inf_2])

    def loop(self, name: str) -> RationalTF:
        """Controller seen by the plant output in negative feedback."""
        if name == "fo":
            return self.c_fo
        if name == "hinf":
            return -self.c_inf_2
        raise ValueError(f"unknown controller {name!r}")

    def to_json(self) -> str:
        def zpk(g: RationalTF) -> dict:
            z, p = g.zeros(), g.poles()
            k = g.num.leading / g.den.leading
            return {"gain": k, "zeros": [[float(v.real), float(v.imag)] for v in z],
                    "poles": [[float(v.real), float(v.imag)] for v in p], "delay": g.delay}
        return json.dumps({"c_inf_1": zpk(self.c_inf_1), "c_inf_2": zpk(self.c_inf_2),
                           "c_fo": zpk(self.c_fo), "dc_balance": self.dc_balance}, indent=2)


def canonical_hinf_controller(balance_dc: bool = True, c_fo: RationalTF | None = None) -> ControllerSet:
    """Reference 2DOF H-infinity controller together with the FO controller.

    With ``balance_dc`` the reference channel gain is rescaled so that
    ``C1(0) r + C2(0) y`` vanishes exactly at ``y = r``.  The reference
    coefficients are rounded to four or five digits, which otherwise
    leaves a static tracking offset of a fraction of a percent.
    """
    den = Polynomial.product(_HINF_DEN)
    k1, f1 = _HINF_C1
    k2, f2 = _HINF_C2
    n1 = Polynomial.product(f1, k1)
    n2 = Polynomial.product(f2, k2)
    scale = 1.0
    if balance_dc:
        scale = -n2(0.0) / n1(0.0)
        n1 = n1 * scale
    c1 = RationalTF(n1, den)
    c2 = RationalTF(n2, den)
    cs = ControllerSet(c1, c2, canonical_cfo() if c_fo is None else c_fo, float(scale))
    fixed = (c1, c2) if c_fo is not None else (c1, c2, cs.c_fo)
    for c in fixed:
        if c.order != 7:
            raise LTIError(f"expected controller order 7, got {c.order}")
    for c in (c1, c2, cs.c_fo):
        if np.min(np.abs(c.poles())) > 1e-12:
            raise LTIError("controller lacks the integrator pole")
    return cs


# ---------------------------------------------------------------------------
# FO loop shaping

def build_fpp() -> RationalTF:
    """Notch prefilter cancelling the plant resonance; numerator degree exceeds denominator."""
    return RationalTF.from_factors(0.034, [_quad(1.027, 267.4)], [_lin(9.0)])


def build_kpil() -> RationalTF:
    """PI controller with lead element."""
    return RationalTF.from_factors(213.0, [_lin(2.0), _lin(2.0 / 3.0)], [[0.0, 1.0], _lin(6.0)])


def compare_response(a: RationalTF, b: RationalTF, band=(0.05, 50.0), points: int = 200):
    """Worst relative magnitude and phase deviation of ``a`` against ``b``.

    Returns ``(mag_dev, phase_dev_deg, w_mag, w_phase)``.
    """
    w = np.geomspace(band[0], band[1], points)
    ratio = a(1j * w) / b(1j * w)
    mag = np.abs(np.abs(ratio) - 1.0)
    ph = np.abs(np.degrees(np.angle(ratio)))
    i, j = int(np.argmax(mag)), int(np.argmax(ph))
    return float(mag[i]), float(ph[j]), float(w[i]), float(w[j])


def assemble_cfo(comp: CompensatorSpec, check: bool = True, mag_tol: float = 0.05,
                 phase_tol_deg: float = 3.0) -> RationalTF:
    """``K_PIL * F_pp * Q^-1`` with the rationalized partial compensator.

    Raises
    ------
    ToleranceError
        If ``check`` is set and the response leaves the tolerance band
        around the reference controller on ``[0.05, 50]`` rad/s.
    """
    _, q_inv = partial_compensator(comp)
    c = build_kpil() * build_fpp() * q_inv
    if check:
        mag, ph, wm, wp = compare_response(c, canonical_cfo())
        if mag > mag_tol or ph > phase_tol_deg:
            raise ToleranceError(f"assembled controller deviates by {100 * mag:.2f}% at {wm:.4g} rad/s "
                                 f"and {ph:.2f} deg at {wp:.4g} rad/s")
    return c


# ---------------------------------------------------------------------------
# feedforward

FF_SHIFTS = ("lagged", "-tau_n", "0", "+tau_n")

# terms kept in the series inverse of (k + zeta s); (zeta/k)**4 is below roundoff
_LIFT_TERMS = 3


@dataclass(frozen=True, eq=False)
class FeedforwardPlan:
    """Sampled reference derivatives and the consistent state trajectory.

    ``derivs[j]`` holds ``r^(j)`` at ``t + shift``; ``r3`` is the third
    derivative used in the input formula (at ``t - tau_n`` for the lagged
    shift); ``x_star`` has shape ``(4, len(t))``.
    """

    t: np.ndarray
    derivs: np.ndarray
    r3: np.ndarray
    x_star: np.ndarray
    shift: str


def _lift(p: PlantParams, d: np.ndarray) -> np.ndarray:
    """States reproducing the load trajectory ``x3 = r``.

    The load row gives ``k x1 + zeta x1' = f`` with ``f = M r'' + zeta r' + k r``;
    its stable solution is the series ``x1 = sum (-zeta/k)**j f^(j) / k``.
    """
    k, zeta, M = p.k, p.zeta, p.M

    def f(j):
        return M * d[j + 2] + zeta * d[j + 1] + k * d[j]

    q = -zeta / k
    x1 = sum(q**j * f(j) for j in range(_LIFT_TERMS + 1)) / k
    x2 = sum(q**j * f(j + 1) for j in range(_LIFT_TERMS + 1)) / k
    return np.vstack([x1, x2, d[0], d[1]])


def plan_feedforward(ref: ReferenceSpec, t, p: PlantParams, ff_shift: str = "lagged") -> FeedforwardPlan:
    """Sample the reference and build the flat-output state trajectory.

    ``ff_shift`` selects the time base: ``"lagged"`` takes ``x*`` at ``t``
    and ``r'''`` at ``t - tau_n``; the other modes shift the whole
    trajectory by ``-tau_n``, ``0`` or ``+tau_n``.
    """
    if ff_shift not in FF_SHIFTS:
        raise ValueError(f"ff_shift must be one of {FF_SHIFTS}")
    t = np.asarray(t, dtype=float)
    shift = {"lagged": 0.0, "-tau_n": -p.tau_n, "0": 0.0, "+tau_n": p.tau_n}[ff_shift]
    ts = t + shift
    nd = _LIFT_TERMS + 3
    derivs = np.vstack([ref(ts, j) for j in range(nd + 1)])
    r3 = ref(t - p.tau_n, 3) if ff_shift == "lagged" else derivs[3]
    return FeedforwardPlan(t, derivs, r3, _lift(p, derivs), ff_shift)


def feedforward_ustar(plan: FeedforwardPlan, p: PlantParams) -> np.ndarray:
    """``u* = (r''' - C A^3 x*) / (C A^2 B)``."""
    m, _ = build_plant(p)
    A, B, C = m.A, m.B, m.C
    ca2b = (C @ A @ A @ B).item()
    if abs(ca2b) < 1e-14 * max(1.0, np.linalg.norm(A) ** 2 * np.linalg.norm(B)):
        raise LTIError("relative degree exceeds three (zeta = 0); feedforward undefined")
    ca3 = (C @ A @ A @ A).ravel()
    return (plan.r3 - ca3 @ plan.x_star) / ca2b


def ff_transfer(c_fo: RationalTF, p: PlantParams, w) -> np.ndarray:
    """``F_FO(jw) = C_FO(jw) + exp(-jw tau_n) / G_yu(jw)``; evaluated pointwise only."""
    w = np.asarray(w, dtype=float)
    s = 1j * w
    g = plant_tf(p)
    return c_fo(s) + np.exp(-s * p.tau_n) * g.den(s) / g.num(s)


# ---------------------------------------------------------------------------
# disturbance sensitivity

@dataclass(frozen=True, eq=False)
class SensitivityResult:
    peak: float
    omega_peak: float
    rhp_count: int
    delay_model: str
    _evaluate: object = field(repr=False)

    @property
    def stable(self) -> bool:
        return self.rhp_count == 0

    def evaluate(self, w) -> np.ndarray:
        return self._evaluate(np.asarray(w, dtype=float))


def sensitivity_yd(c: RationalTF, p: PlantParams, tau: float | None = None,
                   delay_model: str = "exact", band=(1e-3, 1e3)) -> SensitivityResult:
    """Input-disturbance-to-output sensitivity ``G / (1 + C G_d G)``.

    ``c`` acts in negative feedback; ``delay_model`` is ``"exact"``,
    ``"pade1"`` or ``"pade2"``.  Stability is judged from the Nyquist
    winding number of ``1 + L``.
    """
    tau = p.tau_n if tau is None else tau
    g = plant_tf(p)
    pd = None
    if delay_model == "exact":
        def delay(s):
            return np.exp(-s * tau)
    elif delay_model in ("pade1", "pade2"):
        pd = pade_delay(tau, int(delay_model[-1])) if tau > 0 else RationalTF.gain(1.0)
        delay = pd
    else:
        raise ValueError(f"unknown delay model {delay_model!r}")

    def loop(s):
        return c(s) * g(s) * delay(s)

    def sens(w):
        s = 1j * w
        return g(s) / (1.0 + loop(s))

    rhp = closed_loop_rhp_count(loop)
    if pd is not None and rhp == 0:
        l_tf = c * g * pd
        s_tf = RationalTF(g.num * c.den * pd.den, l_tf.den + l_tf.num).minreal(1e-9)
        peak = hinf_norm(s_tf, rtol=1e-8)
        _, wpk = peak_gain(sens, band, rtol=1e-6)
        return SensitivityResult(peak, wpk, rhp, delay_model, sens)
    peak, wpk = peak_gain(sens, band, rtol=1e-6)
    return SensitivityResult(peak, wpk, rhp, delay_model, sens)
