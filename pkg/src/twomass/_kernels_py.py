"""Pure-Python closed-loop kernel; reference semantics for the compiled one.

Both implementations expose :func:`run_loop` and :func:`rk4_open_loop`
with identical signatures and results up to floating-point reassociation.
"""

from __future__ import annotations

import math

import numpy as np

STATUS_OK = 0
STATUS_BLOWUP = 1

IMPLEMENTATION = "python"


def _ku(x1, uss, ku_num):
    if uss.size == 0:
        return 1.0
    v = 0.0
    for c in uss[::-1]:
        v = v * x1 + c
    return ku_num / v


def run_loop(A, B, Ad, Bd, Cd, Dd, x0, xc0, r, ff, dist, jit, topology, n_delay,
             u_d, u_lo, u_hi, x1_lo, x1_hi, hard_stop, uss, ku_num, pre_gain, Ts, blowup):
    """Fixed-step closed loop with a delayed, saturated plant input.

    Per step ``n``: measure ``y = x3``; the controller sees ``[r, y]``
    (topology 0) or ``[r - y, 0]`` (topology 1) and outputs
    ``u = pre_gain * (Cd xc + Dd w + ff)``; ``u`` enters a ring buffer of
    ``n_delay`` samples pre-filled with ``u_0``; the plant receives
    ``k_u(x1) sat(u_d + u_delayed + d + j) - u_d`` held over the step and
    is advanced by one classical RK4 step.

    Returns ``(y, u, u_plant, X, status, n_done)`` where ``u`` and
    ``u_plant`` are absolute voltages (``u_d`` added back).
    """
    A = [[float(v) for v in row] for row in np.asarray(A)]
    b = [float(v) for v in np.asarray(B).ravel()]
    Ad = np.ascontiguousarray(Ad, dtype=float)
    Bd = np.ascontiguousarray(Bd, dtype=float)
    Cd = np.ascontiguousarray(Cd, dtype=float).ravel()
    Dd = np.ascontiguousarray(Dd, dtype=float).ravel()
    uss = np.asarray(uss, dtype=float)
    N = len(r)
    y_out = np.zeros(N)
    u_out = np.zeros(N)
    up_out = np.zeros(N)
    X = np.zeros((N, 4))
    x = [float(v) for v in x0]
    xc = np.array(xc0, dtype=float)
    buf = [0.0] * max(n_delay, 1)
    head = 0
    h = Ts
    status = STATUS_OK
    n_done = N

    def f(x, src):
        v = _ku(x[0], uss, ku_num) * src - u_d
        return [A[i][0] * x[0] + A[i][1] * x[1] + A[i][2] * x[2] + A[i][3] * x[3] + b[i] * v
                for i in range(4)]

    for n in range(N):
        y = x[2]
        if topology == 0:
            w0, w1 = r[n], y
        else:
            w0, w1 = r[n] - y, 0.0
        u = pre_gain * (float(Cd @ xc) + Dd[0] * w0 + Dd[1] * w1 + ff[n])
        xc = Ad @ xc + Bd[:, 0] * w0 + Bd[:, 1] * w1
        if n_delay > 0:
            if n == 0:
                buf = [u] * n_delay
            ud = buf[head]
            buf[head] = u
            head = (head + 1) % n_delay
        else:
            ud = u
        src = min(max(u_d + ud + dist[n] + jit[n], u_lo), u_hi)
        y_out[n] = y
        u_out[n] = u + u_d
        up_out[n] = _ku(x[0], uss, ku_num) * src
        X[n] = x
        k1 = f(x, src)
        k2 = f([x[i] + 0.5 * h * k1[i] for i in range(4)], src)
        k3 = f([x[i] + 0.5 * h * k2[i] for i in range(4)], src)
        k4 = f([x[i] + h * k3[i] for i in range(4)], src)
        x = [x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) for i in range(4)]
        if hard_stop:
            if x[0] < x1_lo:
                x[0] = x1_lo
                x[1] = max(x[1], 0.0)
            elif x[0] > x1_hi:
                x[0] = x1_hi
                x[1] = min(x[1], 0.0)
        if not all(math.isfinite(v) and abs(v) <= blowup for v in x):
            status = STATUS_BLOWUP
            n_done = n + 1
            break
    return y_out, u_out, up_out, X, status, n_done


def rk4_open_loop(A, B, x0, u, Ts):
    """RK4 on ``x' = Ax + Bu`` with ``u`` held over each step; returns ``(N+1, n)`` states."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(B, dtype=float).ravel()
    x = np.array(x0, dtype=float)
    out = np.empty((len(u) + 1, x.size))
    out[0] = x
    h = Ts
    for n, un in enumerate(u):
        k1 = A @ x + b * un
        k2 = A @ (x + 0.5 * h * k1) + b * un
        k3 = A @ (x + 0.5 * h * k2) + b * un
        k4 = A @ (x + h * k3) + b * un
        x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[n + 1] = x
    return out
