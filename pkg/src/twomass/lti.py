"""Polynomial and LTI system algebra.

Transfer functions carry an optional pure input delay ``exp(-delay*s)``
which is evaluated exactly in every frequency-domain routine and is never
approximated implicitly; see :mod:`twomass.approx` for rational surrogates.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import numpy.polynomial.polynomial as npp
from scipy import linalg

__all__ = [
    "LTIError", "ImproperSystemError", "DelayError", "AlgebraicLoopError",
    "UnstableSystemError", "MarginallyStableError",
    "Polynomial", "RationalTF", "StateSpaceModel", "FrequencyResponse",
    "MarginReport", "tf_interconnect", "series", "parallel", "feedback",
    "tf_to_ss", "tf_row_to_ss", "ss_to_tf", "poles_zeros", "freq_response",
    "stability_margins", "hinf_norm", "hinf_norm_ss", "peak_gain",
    "log_grid", "closed_loop_rhp_count",
]


class LTIError(ValueError):
    """Base class for invalid LTI operations."""


class ImproperSystemError(LTIError):
    pass


class DelayError(LTIError):
    pass


class AlgebraicLoopError(LTIError):
    pass


class UnstableSystemError(LTIError):
    pass


class MarginallyStableError(UnstableSystemError):
    pass


_TRIM_RTOL = 1e-12


def _trim(c: np.ndarray, rtol: float = _TRIM_RTOL) -> np.ndarray:
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if c.size == 0:
        return np.zeros(1)
    scale = np.max(np.abs(c))
    if scale == 0.0:
        return np.zeros(1)
    nz = np.nonzero(np.abs(c) > rtol * scale)[0]
    return c[: nz[-1] + 1].copy()


@dataclass(frozen=True, eq=False)
class Polynomial:
    """Real polynomial with coefficients in ascending powers of ``s``."""

    coef: np.ndarray

    def __post_init__(self):
        c = _trim(self.coef)
        c.setflags(write=False)
        object.__setattr__(self, "coef", c)

    @classmethod
    def from_roots(cls, roots, gain: float = 1.0) -> "Polynomial":
        roots = np.atleast_1d(np.asarray(roots, dtype=complex))
        if roots.size == 0:
            return cls([gain])
        c = npp.polyfromroots(roots)
        return cls(gain * np.real_if_close(c, tol=1e6).real)

    @classmethod
    def product(cls, factors: Sequence[Sequence[float]], gain: float = 1.0) -> "Polynomial":
        """Multiply ascending-coefficient factors, e.g. ``[[10, 1], [267.4, 1.027, 1]]``."""
        c = np.array([gain], dtype=float)
        for f in factors:
            c = npp.polymul(c, np.asarray(f, dtype=float))
        return cls(c)

    @property
    def degree(self) -> int:
        return self.coef.size - 1

    @property
    def is_zero(self) -> bool:
        return self.coef.size == 1 and self.coef[0] == 0.0

    @property
    def leading(self) -> float:
        return float(self.coef[-1])

    def __call__(self, s):
        return npp.polyval(s, self.coef)

    def __add__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(npp.polyadd(self.coef, _as_poly(other).coef))

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(npp.polysub(self.coef, _as_poly(other).coef))

    def __mul__(self, other) -> "Polynomial":
        if np.isscalar(other):
            return Polynomial(self.coef * float(other))
        return Polynomial(npp.polymul(self.coef, _as_poly(other).coef))

    __rmul__ = __mul__

    def __neg__(self) -> "Polynomial":
        return Polynomial(-self.coef)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.coef.shape == other.coef.shape and bool(np.all(self.coef == other.coef))

    def __hash__(self):
        return hash(self.coef.tobytes())

    def divmod(self, other: "Polynomial") -> tuple["Polynomial", "Polynomial"]:
        q, r = npp.polydiv(self.coef, _as_poly(other).coef)
        return Polynomial(q), Polynomial(r)

    def shift(self, a: float) -> "Polynomial":
        """Return ``p(s + a)``."""
        out = np.zeros(1)
        lin = np.array([a, 1.0])
        for c in self.coef[::-1]:
            out = npp.polyadd(npp.polymul(out, lin), [c])
        return Polynomial(out)

    def deriv(self) -> "Polynomial":
        return Polynomial(npp.polyder(self.coef))

    def roots(self) -> np.ndarray:
        return _balanced_roots(self.coef)

    def __repr__(self):
        return f"Polynomial({np.array2string(self.coef, precision=6)})"


def _as_poly(p) -> Polynomial:
    if isinstance(p, Polynomial):
        return p
    return Polynomial(np.atleast_1d(p))


def _balanced_roots(coef: np.ndarray) -> np.ndarray:
    c = _trim(coef)
    if c.size == 1:
        if c[0] == 0.0:
            raise LTIError("roots of the zero polynomial are undefined")
        return np.zeros(0, dtype=complex)
    n = c.size - 1
    # vanishing low-order coefficients are exact roots at s=0
    n0 = int(np.argmax(c != 0.0))
    c = c[n0:]
    m = c.size - 1
    roots = [np.zeros(n0, dtype=complex)]
    if m > 0:
        comp = np.zeros((m, m))
        comp[1:, :-1] = np.eye(m - 1)
        comp[:, -1] = -c[:-1] / c[-1]
        bal, _ = linalg.matrix_balance(comp, permute=False)
        roots.append(linalg.eigvals(bal))
    r = np.concatenate(roots)
    assert r.size == n
    return _conj_clean(r)


def _conj_clean(r: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    r = np.asarray(r, dtype=complex)
    small = np.abs(r.imag) <= tol * np.maximum(1.0, np.abs(r))
    r = np.where(small, r.real + 0j, r)
    return r[np.lexsort((r.imag, r.real))]


@dataclass(frozen=True, eq=False)
class RationalTF:
    """SISO transfer function ``num(s)/den(s) * exp(-delay*s)``.

    Common factors are kept; use :meth:`minreal` to cancel them.
    """

    num: Polynomial
    den: Polynomial
    delay: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "num", _as_poly(self.num))
        object.__setattr__(self, "den", _as_poly(self.den))
        if self.den.is_zero:
            raise LTIError("denominator is the zero polynomial")
        if not self.delay >= 0.0:
            raise DelayError(f"delay must be nonnegative, got {self.delay}")
        object.__setattr__(self, "delay", float(self.delay))

    # construction -------------------------------------------------------
    @classmethod
    def gain(cls, k: float) -> "RationalTF":
        return cls(Polynomial([k]), Polynomial([1.0]))

    @classmethod
    def s(cls) -> "RationalTF":
        return cls(Polynomial([0.0, 1.0]), Polynomial([1.0]))

    @classmethod
    def pure_delay(cls, tau: float) -> "RationalTF":
        return cls(Polynomial([1.0]), Polynomial([1.0]), tau)

    @classmethod
    def from_zpk(cls, zeros, poles, k: float, delay: float = 0.0) -> "RationalTF":
        return cls(Polynomial.from_roots(zeros, k), Polynomial.from_roots(poles), delay)

    @classmethod
    def from_factors(cls, gain: float, num_factors, den_factors, delay: float = 0.0) -> "RationalTF":
        """Build from ascending-coefficient factor lists, as given in factored form."""
        return cls(Polynomial.product(num_factors, gain), Polynomial.product(den_factors), delay)

    # properties ---------------------------------------------------------
    @property
    def order(self) -> int:
        return max(self.num.degree, self.den.degree)

    @property
    def relative_degree(self) -> int:
        return self.den.degree - self.num.degree

    @property
    def is_proper(self) -> bool:
        return self.num.degree <= self.den.degree

    @property
    def high_frequency_gain(self) -> float:
        return self.num.leading / self.den.leading

    def poles(self) -> np.ndarray:
        return self.den.roots()

    def zeros(self) -> np.ndarray:
        if self.num.is_zero:
            return np.zeros(0, dtype=complex)
        return self.num.roots()

    def __call__(self, s):
        s = np.asarray(s, dtype=complex)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = self.num(s) / self.den(s)
        if self.delay:
            val = val * np.exp(-self.delay * s)
        return val

    def dcgain(self) -> float:
        d0 = self.den.coef[0]
        if d0 == 0.0:
            return math.inf
        return float(self.num.coef[0] / d0)

    # algebra ------------------------------------------------------------
    def __mul__(self, other) -> "RationalTF":
        if np.isscalar(other):
            return RationalTF(self.num * float(other), self.den, self.delay)
        return series(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __add__(self, other) -> "RationalTF":
        if np.isscalar(other):
            other = RationalTF.gain(float(other))
        return parallel(self, other)

    __radd__ = __add__

    def __neg__(self) -> "RationalTF":
        return RationalTF(-self.num, self.den, self.delay)

    def __sub__(self, other) -> "RationalTF":
        return self + (-other)

    def inv(self) -> "RationalTF":
        """Algebraic inverse of the rational part; rejects nonzero delay."""
        if self.delay:
            raise DelayError("inverse of a pure delay is non-causal")
        if self.num.is_zero:
            raise LTIError("inverse of the zero transfer function")
        return RationalTF(self.den, self.num)

    def without_delay(self) -> "RationalTF":
        return RationalTF(self.num, self.den)

    def with_delay(self, tau: float) -> "RationalTF":
        return RationalTF(self.num, self.den, tau)

    def normalized(self) -> "RationalTF":
        a = self.den.leading
        return RationalTF(self.num * (1.0 / a), self.den * (1.0 / a), self.delay)

    def minreal(self, tol: float = 1e-7) -> "RationalTF":
        """Cancel pole/zero pairs closer than ``tol`` (relative)."""
        if self.num.is_zero:
            return RationalTF(Polynomial([0.0]), Polynomial([1.0]), self.delay)
        z = list(self.zeros())
        p = list(self.poles())
        keep_z = []
        for zi in z:
            dist = [abs(zi - pj) for pj in p]
            if dist:
                j = int(np.argmin(dist))
                if dist[j] <= tol * max(1.0, abs(p[j])):
                    p.pop(j)
                    continue
            keep_z.append(zi)
        k = self.num.leading / self.den.leading
        return RationalTF.from_zpk(keep_z, p, k, self.delay)

    def __repr__(self):
        d = f", delay={self.delay:g}" if self.delay else ""
        return f"RationalTF(num={self.num.coef.tolist()}, den={self.den.coef.tolist()}{d})"


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """Continuous-time realization ``x' = Ax + Bu, y = Cx + Du``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = A.shape[0]
        try:
            B = np.asarray(self.B, dtype=float).reshape(n, -1) if n else np.zeros((0, np.atleast_2d(self.D).shape[1]))
            C = np.asarray(self.C, dtype=float).reshape(-1, n) if n else np.zeros((np.atleast_2d(self.D).shape[0], 0))
        except ValueError as exc:
            raise LTIError(f"B or C does not match {n} states: {exc}") from None
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        if A.shape != (n, n):
            raise LTIError(f"A must be square, got {A.shape}")
        if D.shape != (C.shape[0], B.shape[1]):
            raise LTIError(f"inconsistent dimensions A{A.shape} B{B.shape} C{C.shape} D{D.shape}")
        for name, mat in zip("ABCD", (A, B, C, D)):
            mat.setflags(write=False)
            object.__setattr__(self, name, mat)

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.B.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.C.shape[0]

    def poles(self) -> np.ndarray:
        return _conj_clean(linalg.eigvals(self.A)) if self.n_states else np.zeros(0, complex)

    def evaluate(self, s) -> np.ndarray:
        """Transfer matrix at each point of ``s``; shape ``(len(s), p, m)``."""
        s = np.atleast_1d(np.asarray(s, dtype=complex))
        n = self.n_states
        out = np.empty((s.size, self.n_outputs, self.n_inputs), dtype=complex)
        eye = np.eye(n)
        for i, si in enumerate(s):
            if n:
                out[i] = self.C @ np.linalg.solve(si * eye - self.A, self.B) + self.D
            else:
                out[i] = self.D
        return out

    def sigma_max(self, w) -> np.ndarray:
        """Largest singular value of the frequency response on ``w`` (rad/s)."""
        G = self.evaluate(1j * np.atleast_1d(w))
        return np.array([np.linalg.norm(g, 2) for g in G])

    def transform(self, T: np.ndarray, Ti: np.ndarray | None = None) -> "StateSpaceModel":
        """Similarity transform ``x = T z``."""
        Ti = np.linalg.inv(T) if Ti is None else Ti
        return StateSpaceModel(Ti @ self.A @ T, Ti @ self.B, self.C @ T, self.D)

    def balanced_scaling(self) -> "StateSpaceModel":
        """Diagonal similarity that balances the row/column norms of A."""
        if self.n_states == 0:
            return self
        _, (scale, _) = linalg.matrix_balance(self.A, permute=False, separate=True)
        return self.transform(np.diag(scale), np.diag(1.0 / scale))

    def select(self, output: int = 0, input: int = 0) -> "StateSpaceModel":
        return StateSpaceModel(self.A, self.B[:, [input]], self.C[[output], :], self.D[[output]][:, [input]])


@dataclass(frozen=True, eq=False)
class FrequencyResponse:
    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if w.ndim != 1 or v.shape != w.shape:
            raise LTIError("one complex value per grid point is required")
        if np.any(w <= 0) or np.any(np.diff(w) <= 0):
            raise LTIError("grid must be positive and strictly increasing")
        object.__setattr__(self, "grid", w)
        object.__setattr__(self, "values", v)

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    @property
    def mag_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 20.0 * np.log10(self.magnitude)

    @property
    def phase_deg(self) -> np.ndarray:
        return np.degrees(np.unwrap(np.angle(self.values)))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["omega_rad_s", "re", "im", "mag_db", "phase_deg"])
            for row in zip(self.grid, self.values.real, self.values.imag, self.mag_db, self.phase_deg):
                wr.writerow([repr(float(x)) for x in row])


@dataclass(frozen=True)
class MarginReport:
    """Classical stability margins of a loop transfer function.

    ``gain_crossovers`` and ``phase_crossovers`` list every crossing found
    in the search band; the scalar fields describe the critical ones.
    """

    omega_c: float
    phase_margin_deg: float
    gain_margin: float
    omega_pc: float
    gain_crossovers: tuple = field(default=())
    phase_crossovers: tuple = field(default=())

    @property
    def stable_margins(self) -> bool:
        return self.phase_margin_deg > 0 and self.gain_margin > 1

    def as_dict(self) -> dict:
        return {
            "omega_c": self.omega_c, "phase_margin_deg": self.phase_margin_deg,
            "gain_margin": self.gain_margin, "omega_pc": self.omega_pc,
            "gain_crossovers": list(self.gain_crossovers),
            "phase_crossovers": list(self.phase_crossovers),
        }


# ---------------------------------------------------------------------------
# interconnection

def series(g1: RationalTF, g2: RationalTF) -> RationalTF:
    return RationalTF(g1.num * g2.num, g1.den * g2.den, g1.delay + g2.delay)


def parallel(g1: RationalTF, g2: RationalTF) -> RationalTF:
    if not math.isclose(g1.delay, g2.delay, rel_tol=0.0, abs_tol=1e-15):
        raise DelayError("parallel connection of unequal pure delays; rationalize them first")
    return RationalTF(g1.num * g2.den + g2.num * g1.den, g1.den * g2.den, g1.delay)


def feedback(g1: RationalTF, g2: RationalTF | None = None, sign: int = -1) -> RationalTF:
    """Closed loop ``g1 / (1 - sign*g1*g2)``; negative feedback by default."""
    g2 = RationalTF.gain(1.0) if g2 is None else g2
    if g1.delay or g2.delay:
        raise AlgebraicLoopError("pure delay inside a feedback loop has no rational closure")
    den = g1.den * g2.den - (g1.num * g2.num) * float(sign)
    if den.is_zero:
        raise LTIError("degenerate closed-loop denominator (1 + g1*g2 == 0)")
    return RationalTF(g1.num * g2.den, den)


def tf_interconnect(kind: str, g1: RationalTF, g2: RationalTF) -> RationalTF:
    try:
        op = {"series": series, "parallel": parallel, "feedback": feedback}[kind]
    except KeyError:
        raise LTIError(f"unknown interconnection {kind!r}") from None
    return op(g1, g2)


# ---------------------------------------------------------------------------
# realizations

def tf_to_ss(g: RationalTF) -> StateSpaceModel:
    """Controllable canonical realization of a proper delay-free SISO system."""
    if g.delay:
        raise DelayError("state-space realization of a pure delay is not supported")
    if not g.is_proper:
        raise ImproperSystemError(f"improper transfer function (relative degree {g.relative_degree})")
    g = g.normalized()
    n = g.den.degree
    if n == 0:
        return StateSpaceModel(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[g.num.coef[0] / g.den.coef[0]]])
    q, r = g.num.divmod(g.den)
    a = g.den.coef
    A = np.zeros((n, n))
    A[:-1, 1:] = np.eye(n - 1)
    A[-1, :] = -a[:-1]
    B = np.zeros((n, 1))
    B[-1, 0] = 1.0
    c = np.zeros(n)
    c[: r.coef.size] = r.coef
    return StateSpaceModel(A, B, c.reshape(1, n), [[q.coef[0]]])


def tf_row_to_ss(gs: Sequence[RationalTF]) -> StateSpaceModel:
    """Shared-state (observable canonical) realization of ``[g1 g2 ...]``.

    All entries must have the same denominator, as for a controller whose
    channels come from one state vector.
    """
    den = gs[0].den
    for g in gs:
        if g.delay:
            raise DelayError("realization of a pure delay is not supported")
        if not np.allclose(g.den.coef, den.coef, rtol=1e-12, atol=0.0):
            raise LTIError("row realization needs a common denominator")
        if not g.is_proper:
            raise ImproperSystemError("improper entry in transfer row")
    a = den.coef / den.leading
    n = den.degree
    A = np.zeros((n, n))
    A[1:, :-1] = np.eye(n - 1)
    A[:, -1] = -a[:-1]
    B = np.zeros((n, len(gs)))
    D = np.zeros((1, len(gs)))
    for j, g in enumerate(gs):
        b = np.zeros(n + 1)
        b[: g.num.coef.size] = g.num.coef / den.leading
        D[0, j] = b[n]
        B[:, j] = b[:n] - b[n] * a[:n]
    C = np.zeros((1, n))
    if n:
        C[0, -1] = 1.0
    return StateSpaceModel(A, B, C, D)


def _faddeev_leverrier(A: np.ndarray):
    n = A.shape[0]
    coeffs = np.zeros(n + 1)
    coeffs[n] = 1.0
    Ms = []
    M = np.eye(n)
    for k in range(1, n + 1):
        Ms.append(M)
        AM = A @ M
        coeffs[n - k] = -np.trace(AM) / k
        M = AM + coeffs[n - k] * np.eye(n)
    return coeffs, Ms


def ss_to_tf(m: StateSpaceModel, output: int = 0, input: int = 0) -> RationalTF:
    """Transfer function of one SISO channel via Faddeev-LeVerrier.

    The adjugate expansion ``adj(sI - A) = sum M_k s^(n-1-k)`` gives the
    numerator coefficients ``C M_k B`` directly.
    """
    sub = m.select(output, input).balanced_scaling()
    n = sub.n_states
    d = float(sub.D[0, 0])
    if n == 0:
        return RationalTF(Polynomial([d]), Polynomial([1.0]))
    den, Ms = _faddeev_leverrier(sub.A)
    num = np.zeros(n + 1)
    for k, Mk in enumerate(Ms):
        num[n - 1 - k] = (sub.C @ Mk @ sub.B).item()
    num = num + d * den
    # coefficients this far below the largest one are accumulated roundoff
    for c in (num, den):
        c[np.abs(c) < 1e-11 * np.max(np.abs(c))] = 0.0
    return RationalTF(Polynomial(num), Polynomial(den))


def poles_zeros(g: RationalTF) -> tuple[np.ndarray, np.ndarray]:
    if g.num.is_zero:
        raise LTIError("zeros of the zero transfer function are undefined")
    return g.poles(), g.zeros()


# ---------------------------------------------------------------------------
# frequency domain

def log_grid(w_min: float, w_max: float, per_decade: int = 100) -> np.ndarray:
    n = max(2, int(math.ceil(per_decade * math.log10(w_max / w_min))) + 1)
    return np.logspace(math.log10(w_min), math.log10(w_max), n)


def freq_response(g: RationalTF, grid) -> FrequencyResponse:
    """Evaluate ``g(jw)``; the delay enters exactly as ``exp(-j*w*delay)``.

    Points on a pole return an infinite-magnitude value instead of raising.
    """
    w = np.asarray(grid, dtype=float)
    s = 1j * w
    n = g.num(s)
    d = g.den(s)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = n / d
    val = np.where(d == 0, complex(np.inf, 0.0), val)
    if g.delay:
        val = val * np.exp(-1j * w * g.delay)
    return FrequencyResponse(w, val)


def _phase_rad(g: RationalTF, w: np.ndarray) -> np.ndarray:
    """Unwrapped phase assembled factor by factor, each term continuous in w."""
    w = np.asarray(w, dtype=float)
    s = 1j * w
    ph = np.full(s.shape, 0.0 if g.high_frequency_gain > 0 else -math.pi)
    for z in g.zeros():
        ph += np.angle(s - z)
    for p in g.poles():
        ph -= np.angle(s - p)
    return ph - w * g.delay


def _log_mag(g: RationalTF, w) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.abs(g.without_delay()(1j * np.asarray(w, dtype=float))))


def _bisect(f: Callable[[float], float], lo: float, hi: float, rtol: float) -> float:
    # geometric bisection on a bracketing interval of log-frequency
    flo = f(lo)
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        fm = f(mid)
        if (fm >= 0) == (flo >= 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo <= rtol * lo:
            break
    return math.sqrt(lo * hi)


def _search_grid(g: RationalTF, band, per_decade: int) -> np.ndarray:
    w = log_grid(band[0], band[1], per_decade)
    if g.delay:
        # keep the delay phase increment per step below pi/8
        step = math.pi / (8.0 * g.delay)
        w = np.union1d(w, np.arange(band[0], band[1], step)[1:])
    ph = _phase_rad(g, w)
    for _ in range(8):
        bad = np.nonzero(np.abs(np.diff(ph)) > math.pi / 8)[0]
        if bad.size == 0:
            break
        mids = np.sqrt(w[bad] * w[bad + 1])
        w = np.union1d(w, mids)
        ph = _phase_rad(g, w)
    return w


def stability_margins(l: RationalTF, band=(1e-3, 1e3), per_decade: int = 100,
                      rtol: float = 1e-10) -> MarginReport:
    """Gain/phase margins with crossover bracketing and bisection.

    Parameters
    ----------
    l
        Open-loop transfer function; its delay is kept exact.
    band
        Search band in rad/s.
    per_decade
        Log-grid density used for bracketing (at least 60).
    rtol
        Relative tolerance on each crossover frequency.

    Returns
    -------
    MarginReport
        Phase margin at the gain crossover with the smallest margin, gain
        margin at the phase crossover closest to unit gain (smallest
        ``|log GM|``).  Infinite margins are reported when no crossing
        exists in ``band``.
    """
    per_decade = max(60, per_decade)
    w = _search_grid(l, band, per_decade)
    lm = _log_mag(l, w)
    ph = _phase_rad(l, w)

    gain_x = []
    # exact zeros on the grid count as positive so they are bracketed once
    pos = lm >= 0
    idx = np.nonzero(pos[:-1] != pos[1:])[0]
    for i in idx:
        wc = _bisect(lambda x: float(_log_mag(l, [x])[0]), w[i], w[i + 1], rtol)
        pm = math.degrees(float(_phase_rad(l, [wc])[0])) + 180.0
        pm = 180.0 - ((180.0 - pm) % 360.0)
        gain_x.append((wc, pm))

    phase_x = []
    turns = np.floor((ph + math.pi) / (2 * math.pi))
    idx = np.nonzero(np.diff(turns) != 0)[0]
    for i in idx:
        k = max(turns[i], turns[i + 1])
        f = lambda x, k=k: float(_phase_rad(l, [x])[0]) + math.pi - 2 * math.pi * k
        wpc = _bisect(f, w[i], w[i + 1], rtol)
        gm = float(np.exp(-_log_mag(l, [wpc])[0]))
        phase_x.append((wpc, gm))

    if gain_x:
        omega_c, pm = min(gain_x, key=lambda t: t[1])
    else:
        omega_c, pm = math.nan, math.inf
    if phase_x:
        omega_pc, gm = min(phase_x, key=lambda t: abs(math.log(t[1])))
    else:
        omega_pc, gm = math.nan, math.inf
    return MarginReport(omega_c, pm, gm, omega_pc, tuple(gain_x), tuple(phase_x))


def _check_stable(poles: np.ndarray, tol: float = 1e-9) -> None:
    if poles.size == 0:
        return
    scale = np.maximum(1.0, np.abs(poles))
    re = poles.real / scale
    if np.any(re > tol):
        raise UnstableSystemError(f"unstable poles {poles[re > tol]}")
    if np.any(re >= -tol):
        raise MarginallyStableError(f"poles on the imaginary axis {poles[re >= -tol]}")


def _hamiltonian(A, B, C, D, gamma):
    m = B.shape[1]
    p = C.shape[0]
    R = D.T @ D - gamma**2 * np.eye(m)
    S = D @ D.T - gamma**2 * np.eye(p)
    Ri = np.linalg.inv(R)
    Si = np.linalg.inv(S)
    top = np.hstack([A - B @ Ri @ D.T @ C, -gamma * B @ Ri @ B.T])
    bot = np.hstack([gamma * C.T @ Si @ C, -A.T + C.T @ D @ Ri @ B.T])
    return np.vstack([top, bot])


def hinf_norm_ss(m: StateSpaceModel, rtol: float = 1e-6, check_stability: bool = True) -> float:
    """H-infinity norm of a stable state-space model by Hamiltonian bisection.

    ``gamma`` is an upper bound iff the Hamiltonian has no eigenvalue on the
    imaginary axis.  Candidate axis eigenvalues are confirmed by evaluating
    the singular value there, which also tightens the lower bound.
    """
    m = m.balanced_scaling()
    A, B, C, D = m.A, m.B, m.C, m.D
    sd = float(np.linalg.norm(D, 2)) if D.size else 0.0
    if m.n_states == 0:
        return sd
    poles = m.poles()
    if check_stability:
        _check_stable(poles)
    probe = np.concatenate([[0.0], np.abs(poles), np.abs(poles.imag)])
    probe = np.unique(probe[np.isfinite(probe)])
    lo = max(sd, float(np.max(m.sigma_max(probe))))
    if lo == 0.0:
        return 0.0
    hi = 2.0 * lo

    def has_crossing(gamma):
        nonlocal lo
        H = _hamiltonian(A, B, C, D, gamma)
        ev = linalg.eigvals(H)
        tol = 1e-8 * max(1.0, np.linalg.norm(H, 1))
        cand = ev[(np.abs(ev.real) < tol) & (ev.imag >= 0)]
        if cand.size == 0:
            return False
        sig = m.sigma_max(np.abs(cand.imag))
        smax = float(np.max(sig))
        lo = max(lo, smax)
        return smax >= gamma * (1.0 - 1e-9)

    while has_crossing(hi):
        hi *= 2.0
    while hi - lo > rtol * lo:
        gamma = 0.5 * (lo + hi)
        if has_crossing(gamma):
            lo = max(lo, gamma)
        else:
            hi = gamma
    return 0.5 * (lo + hi)


def hinf_norm(g: RationalTF, rtol: float = 1e-6) -> float:
    """H-infinity norm of a stable SISO transfer function.

    Exact common factors are cancelled before the stability test.  A pure
    input delay has unit magnitude on the imaginary axis and leaves the
    norm unchanged, so the rational part is passed to the Hamiltonian
    bisection.  Loops that contain a delay go through :func:`peak_gain`.
    """
    r = g.without_delay().minreal(1e-9)
    if not r.is_proper:
        raise ImproperSystemError("H-infinity norm of an improper system is infinite")
    _check_stable(r.poles())
    return hinf_norm_ss(tf_to_ss(r), rtol=rtol, check_stability=False)


def peak_gain(evaluate: Callable[[np.ndarray], np.ndarray], band=(1e-3, 1e3),
              per_decade: int = 200, rtol: float = 1e-4, max_rounds: int = 40) -> tuple[float, float]:
    """Supremum of ``|evaluate(w)|`` on ``band`` by adaptive grid refinement.

    The grid is refined around the current peak until the peak value
    changes by less than ``rtol`` (relative).  Returns ``(peak, w_peak)``.
    """
    w = log_grid(band[0], band[1], per_decade)
    mag = np.abs(evaluate(w))
    i = int(np.argmax(mag))
    peak, wpk = float(mag[i]), float(w[i])
    lo_i, hi_i = max(i - 1, 0), min(i + 1, w.size - 1)
    lo, hi = w[lo_i], w[hi_i]
    for _ in range(max_rounds):
        ww = np.geomspace(lo, hi, 2 * per_decade + 1)
        mm = np.abs(evaluate(ww))
        j = int(np.argmax(mm))
        new_peak = float(mm[j])
        changed = abs(new_peak - peak) > rtol * max(peak, 1e-300)
        if new_peak >= peak:
            peak, wpk = new_peak, float(ww[j])
        lo = ww[max(j - 1, 0)]
        hi = ww[min(j + 1, ww.size - 1)]
        if not changed and hi / lo < 1.0 + 1e-6:
            break
    return peak, wpk


def closed_loop_rhp_count(loop: Callable[[np.ndarray], np.ndarray], open_rhp_poles: int = 0,
                          w_min: float = 1e-4, w_max: float = 1e4, points: int = 40001,
                          indent: float | None = None) -> int:
    """Number of closed-loop right-half-plane poles from the Nyquist winding.

    ``loop`` evaluates ``L(s)`` at complex ``s`` (delays allowed).  The
    D-contour is indented to the right around ``s = 0`` with radius
    ``indent`` (defaults to ``w_min``); ``L`` must vanish at infinity.
    """
    r = w_min if indent is None else indent
    w = np.geomspace(w_max, r, points)
    s_axis = 1j * w
    theta = np.linspace(math.pi / 2, 0.0, 401)[1:]
    s_ind = r * np.exp(1j * theta)
    s = np.concatenate([s_axis, s_ind])
    f = 1.0 + loop(s)
    arg = np.unwrap(np.angle(f))
    delta_upper = arg[-1] - arg[0]
    # the path runs against the clockwise D-contour; the lower half mirrors it
    n_cw = 2.0 * delta_upper / (2 * math.pi)
    return int(round(n_cw)) + open_rhp_poles
