"""Lyapunov equations, Hankel singular values and balanced truncation."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .lti import LTIError, StateSpaceModel, UnstableSystemError

__all__ = [
    "LyapunovError", "GramianPair", "HankelSpectrum", "lyap_solve", "gramians",
    "balanced_realization", "balanced_truncate", "truncation_bound",
]


class LyapunovError(LTIError):
    """Residual of a Lyapunov solve exceeds its tolerance."""


@dataclass(frozen=True, eq=False)
class GramianPair:
    controllability: np.ndarray
    observability: np.ndarray

    def __post_init__(self):
        for name in ("controllability", "observability"):
            g = np.asarray(getattr(self, name), dtype=float)
            if g.ndim != 2 or g.shape[0] != g.shape[1]:
                raise ValueError(f"{name} gramian must be square")
            scale = max(1.0, float(np.max(np.abs(g)))) if g.size else 1.0
            if not np.allclose(g, g.T, rtol=0, atol=1e-10 * scale):
                raise ValueError(f"{name} gramian is not symmetric")
            g = 0.5 * (g + g.T)
            if g.size and np.min(np.linalg.eigvalsh(g)) < -1e-10 * scale:
                raise ValueError(f"{name} gramian is not positive semidefinite")
            g.setflags(write=False)
            object.__setattr__(self, name, g)


@dataclass(frozen=True, eq=False)
class HankelSpectrum:
    singular_values: np.ndarray

    def __post_init__(self):
        sv = np.asarray(self.singular_values, dtype=float).ravel()
        if np.any(sv < 0):
            raise ValueError("Hankel singular values must be nonnegative")
        if np.any(np.diff(sv) > 0):
            raise ValueError("Hankel singular values must be descending")
        sv.setflags(write=False)
        object.__setattr__(self, "singular_values", sv)

    def tail_bound(self, r: int) -> float:
        """``2 * sum(sigma[r:])``, the truncation error bound at order ``r``."""
        return 2.0 * float(np.sum(self.singular_values[r:]))

    def to_json(self) -> str:
        return json.dumps([float(v) for v in self.singular_values])

    @classmethod
    def from_json(cls, text: str) -> "HankelSpectrum":
        return cls(np.array(json.loads(text), dtype=float))


def _require_hurwitz(A: np.ndarray) -> None:
    ev = np.linalg.eigvals(A)
    if ev.size and np.max(ev.real) >= 0:
        raise UnstableSystemError(f"A is not Hurwitz (max Re = {np.max(ev.real):.3g})")


def lyap_solve(A, Q, check: bool = True) -> np.ndarray:
    """Solve ``A P + P A^T + Q = 0`` by Bartels-Stewart on a complex Schur form.

    With ``A = U T U^H`` the transformed equation is triangular and is solved
    column by column from the right.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n) or Q.shape != (n, n):
        raise ValueError("A and Q must be square of equal size")
    _require_hurwitz(A)
    T, U = linalg.schur(A, output="complex")
    F = U.conj().T @ Q @ U
    X = np.zeros((n, n), dtype=complex)
    eye = np.eye(n)
    for j in range(n - 1, -1, -1):
        rhs = -F[:, j] - X[:, j + 1:] @ T[j, j + 1:].conj()
        X[:, j] = linalg.solve_triangular(T + T[j, j].conj() * eye, rhs)
    P = (U @ X @ U.conj().T).real
    P = 0.5 * (P + P.T)
    if check:
        res = np.linalg.norm(A @ P + P @ A.T + Q)
        tol = 1e-8 * (np.linalg.norm(A) * np.linalg.norm(P) + np.linalg.norm(Q))
        if res > tol:
            raise LyapunovError(f"Lyapunov residual {res:.3g} exceeds {tol:.3g}")
    return P


def gramians(m: StateSpaceModel) -> GramianPair:
    """Controllability and observability Gramians of a stable model."""
    Wc = lyap_solve(m.A, m.B @ m.B.T)
    Wo = lyap_solve(m.A.T, m.C.T @ m.C)
    return GramianPair(Wc, Wo)


def _factor(W: np.ndarray) -> np.ndarray:
    """Square factor ``L`` with ``W = L L^T``; falls back to eigh when not definite."""
    try:
        return linalg.cholesky(W, lower=True)
    except linalg.LinAlgError:
        lam, V = np.linalg.eigh(W)
        return V * np.sqrt(np.clip(lam, 0.0, None))


def _balance(m: StateSpaceModel, r: int):
    g = gramians(m)
    Lc = _factor(g.controllability)
    Lo = _factor(g.observability)
    U, sv, Vt = linalg.svd(Lo.T @ Lc)
    spectrum = HankelSpectrum(sv)
    if sv[0] > 0 and sv[-1] / sv[0] < 1e-12:
        warnings.warn("Gramian product is nearly singular; the realization is close to non-minimal",
                      stacklevel=3)
    if sv[r - 1] <= 0:
        raise LTIError(f"order {r} exceeds the minimal order of the model")
    s = 1.0 / np.sqrt(sv[:r])
    T = Lc @ Vt[:r].T * s
    Ti = (U[:, :r] * s).T @ Lo.T
    red = StateSpaceModel(Ti @ m.A @ T, Ti @ m.B, m.C @ T, m.D)
    return red, spectrum


def balanced_realization(m: StateSpaceModel) -> tuple[StateSpaceModel, HankelSpectrum]:
    """Square-root balanced realization of a stable, minimal model."""
    return _balance(m, m.n_states)


def balanced_truncate(m: StateSpaceModel, target_order: int) -> tuple[StateSpaceModel, HankelSpectrum]:
    """Balanced truncation to ``target_order`` states.

    The square-root method works on Cholesky factors of both Gramians and the
    SVD of their product, so the balancing transform is never inverted
    explicitly.  The error obeys ``||m - m_r||_inf <= 2 * sum(sigma[r:])``.

    Raises
    ------
    UnstableSystemError
        If ``m`` has a pole in the closed right half-plane.  Integrators
        must be moved to ``-eps`` by the caller.
    """
    n = m.n_states
    if not 1 <= target_order <= n:
        raise ValueError(f"target_order must lie in [1, {n}]")
    return _balance(m, target_order)


def truncation_bound(spectrum: HankelSpectrum, r: int) -> float:
    return spectrum.tail_bound(r)
