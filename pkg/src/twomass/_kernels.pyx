# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled closed-loop kernel; mirrors :mod:`twomass._kernels_py` step for step."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, isfinite

cnp.import_array()

cdef enum:
    _OK = 0
    _BLOWUP = 1

STATUS_OK = _OK
STATUS_BLOWUP = _BLOWUP

IMPLEMENTATION = "cython"


cdef inline double _ku(double x1, const double[::1] uss, double ku_num) noexcept nogil:
    cdef Py_ssize_t i
    cdef double v = 0.0
    if uss.shape[0] == 0:
        return 1.0
    for i in range(uss.shape[0] - 1, -1, -1):
        v = v * x1 + uss[i]
    return ku_num / v


cdef inline void _f(const double[:, ::1] A, const double[::1] b, double* x, double src,
                    const double[::1] uss, double ku_num, double u_d, double* out) noexcept nogil:
    cdef double v = _ku(x[0], uss, ku_num) * src - u_d
    cdef int i
    for i in range(4):
        out[i] = A[i, 0] * x[0] + A[i, 1] * x[1] + A[i, 2] * x[2] + A[i, 3] * x[3] + b[i] * v


def run_loop(A, B, Ad, Bd, Cd, Dd, x0, xc0, r, ff, dist, jit, int topology, int n_delay,
             double u_d, double u_lo, double u_hi, double x1_lo, double x1_hi, bint hard_stop,
             uss, double ku_num, double pre_gain, double Ts, double blowup):
    cdef const double[:, ::1] A_ = np.ascontiguousarray(A, dtype=np.float64)
    cdef const double[::1] b_ = np.ascontiguousarray(np.asarray(B, dtype=np.float64).ravel())
    cdef const double[:, ::1] Ad_ = np.ascontiguousarray(Ad, dtype=np.float64)
    cdef const double[:, ::1] Bd_ = np.ascontiguousarray(Bd, dtype=np.float64)
    cdef const double[::1] Cd_ = np.ascontiguousarray(np.asarray(Cd, dtype=np.float64).ravel())
    cdef const double[::1] Dd_ = np.ascontiguousarray(np.asarray(Dd, dtype=np.float64).ravel())
    cdef const double[::1] r_ = np.ascontiguousarray(r, dtype=np.float64)
    cdef const double[::1] ff_ = np.ascontiguousarray(ff, dtype=np.float64)
    cdef const double[::1] d_ = np.ascontiguousarray(dist, dtype=np.float64)
    cdef const double[::1] j_ = np.ascontiguousarray(jit, dtype=np.float64)
    cdef const double[::1] uss_ = np.ascontiguousarray(uss, dtype=np.float64)
    cdef Py_ssize_t N = r_.shape[0]
    cdef Py_ssize_t nc = Ad_.shape[0]
    y_arr = np.zeros(N)
    u_arr = np.zeros(N)
    up_arr = np.zeros(N)
    X_arr = np.zeros((N, 4))
    cdef double[::1] y_out = y_arr
    cdef double[::1] u_out = u_arr
    cdef double[::1] up_out = up_arr
    cdef double[:, ::1] X = X_arr
    xc_arr = np.array(xc0, dtype=np.float64)
    xn_arr = np.zeros(nc)
    buf_arr = np.zeros(max(n_delay, 1))
    cdef double[::1] xc = xc_arr
    cdef double[::1] xn = xn_arr
    cdef double[::1] buf = buf_arr
    cdef double x[4]
    cdef double xt[4]
    cdef double k1[4]
    cdef double k2[4]
    cdef double k3[4]
    cdef double k4[4]
    cdef Py_ssize_t n, i, k, head = 0
    cdef double y, w0, w1, u, ud, src, acc, h = Ts
    cdef int status = _OK
    cdef Py_ssize_t n_done = N
    cdef bint bad
    x0_ = np.asarray(x0, dtype=np.float64)
    for i in range(4):
        x[i] = x0_[i]
    with nogil:
        for n in range(N):
            y = x[2]
            if topology == 0:
                w0 = r_[n]
                w1 = y
            else:
                w0 = r_[n] - y
                w1 = 0.0
            acc = 0.0
            for i in range(nc):
                acc = acc + Cd_[i] * xc[i]
            u = pre_gain * (acc + Dd_[0] * w0 + Dd_[1] * w1 + ff_[n])
            for i in range(nc):
                acc = Bd_[i, 0] * w0 + Bd_[i, 1] * w1
                for k in range(nc):
                    acc = acc + Ad_[i, k] * xc[k]
                xn[i] = acc
            for i in range(nc):
                xc[i] = xn[i]
            if n_delay > 0:
                if n == 0:
                    for i in range(n_delay):
                        buf[i] = u
                ud = buf[head]
                buf[head] = u
                head = head + 1
                if head == n_delay:
                    head = 0
            else:
                ud = u
            src = u_d + ud + d_[n] + j_[n]
            if src < u_lo:
                src = u_lo
            elif src > u_hi:
                src = u_hi
            y_out[n] = y
            u_out[n] = u + u_d
            up_out[n] = _ku(x[0], uss_, ku_num) * src
            for i in range(4):
                X[n, i] = x[i]
            _f(A_, b_, x, src, uss_, ku_num, u_d, k1)
            for i in range(4):
                xt[i] = x[i] + 0.5 * h * k1[i]
            _f(A_, b_, xt, src, uss_, ku_num, u_d, k2)
            for i in range(4):
                xt[i] = x[i] + 0.5 * h * k2[i]
            _f(A_, b_, xt, src, uss_, ku_num, u_d, k3)
            for i in range(4):
                xt[i] = x[i] + h * k3[i]
            _f(A_, b_, xt, src, uss_, ku_num, u_d, k4)
            for i in range(4):
                x[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            if hard_stop:
                if x[0] < x1_lo:
                    x[0] = x1_lo
                    if x[1] < 0.0:
                        x[1] = 0.0
                elif x[0] > x1_hi:
                    x[0] = x1_hi
                    if x[1] > 0.0:
                        x[1] = 0.0
            bad = False
            for i in range(4):
                if not isfinite(x[i]) or fabs(x[i]) > blowup:
                    bad = True
            if bad:
                status = _BLOWUP
                n_done = n + 1
                break
    return y_arr, u_arr, up_arr, X_arr, status, n_done


def rk4_open_loop(A, B, x0, u, double Ts):
    cdef const double[:, ::1] A_ = np.ascontiguousarray(A, dtype=np.float64)
    cdef const double[::1] b_ = np.ascontiguousarray(np.asarray(B, dtype=np.float64).ravel())
    cdef const double[::1] u_ = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t n_st = A_.shape[0]
    cdef Py_ssize_t N = u_.shape[0]
    out_arr = np.empty((N + 1, n_st))
    cdef double[:, ::1] out = out_arr
    x_arr = np.array(x0, dtype=np.float64)
    cdef double[::1] x = x_arr
    cdef double[::1] xt = np.zeros(n_st)
    cdef double[:, ::1] kk = np.zeros((4, n_st))
    cdef Py_ssize_t n, i, j, s
    cdef double acc, h = Ts, un
    cdef double c[4]
    c[0] = 0.0
    c[1] = 0.5
    c[2] = 0.5
    c[3] = 1.0
    for i in range(n_st):
        out[0, i] = x[i]
    with nogil:
        for n in range(N):
            un = u_[n]
            for s in range(4):
                for i in range(n_st):
                    xt[i] = x[i] + (c[s] * h * kk[s - 1, i] if s > 0 else 0.0)
                for i in range(n_st):
                    acc = b_[i] * un
                    for j in range(n_st):
                        acc = acc + A_[i, j] * xt[j]
                    kk[s, i] = acc
            for i in range(n_st):
                x[i] = x[i] + h / 6.0 * (kk[0, i] + 2.0 * kk[1, i] + 2.0 * kk[2, i] + kk[3, i])
                out[n + 1, i] = x[i]
    return out_arr
