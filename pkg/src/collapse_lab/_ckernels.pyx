# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in :mod:`collapse_lab._pykernels`."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, log1p, fabs, pow, sqrt, fmax, fmin

from .errors import NumericFailure

cnp.import_array()

DEF MAX_NEWTON = 100


cdef int _radial_root(double a, double nu, double p, double* out) noexcept nogil:
    cdef double t, g, dg, step, u, r
    cdef int it
    if a == 0.0:
        out[0] = 0.0
        return 0
    if p > 2.0:
        t = fmin(a, pow(a / nu, 1.0 / (p - 1.0)))
        for it in range(MAX_NEWTON):
            g = t + nu * pow(t, p - 1.0) - a
            dg = 1.0 + nu * (p - 1.0) * pow(t, p - 2.0)
            step = g / dg
            t = fmax(t - step, 0.0)
            if fabs(step) <= 1e-15 * a:
                out[0] = fmax(t, 0.0)
                return 0
        return 1
    r = 1.0 / (p - 1.0)
    u = fmin(pow(a, p - 1.0), a / nu)
    for it in range(MAX_NEWTON):
        g = pow(u, r) + nu * u - a
        dg = r * pow(u, r - 1.0) + nu
        step = g / dg
        u = fmax(u - step, 0.0)
        if fabs(step) <= 1e-15 * fmax(u, 1e-300):
            out[0] = pow(fmax(u, 0.0), r)
            return 0
    return 1


cdef int _excess(const double[::1] a, double nu, double p, double target,
                 double[::1] t, double* f) noexcept nogil:
    cdef Py_ssize_t i
    cdef double s = 0.0
    for i in range(a.shape[0]):
        if _radial_root(a[i], nu, p, &t[i]):
            return 1
        s += pow(t[i], p)
    f[0] = s - target
    return 0


def project_lp_ball(z, double R, double p):
    cdef double[::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef Py_ssize_t n = zv.shape[0], i
    cdef double s = 0.0, target = pow(R, p)
    out_arr = np.array(zv, dtype=np.float64)
    cdef double[::1] out = out_arr
    for i in range(n):
        s += pow(fabs(zv[i]), p)
    if s <= target:
        return out_arr
    if p == 2.0:
        s = R / sqrt(s)
        for i in range(n):
            out[i] = zv[i] * s
        return out_arr
    a_arr = np.abs(out_arr)
    cdef double[::1] a = a_arr
    t_arr = np.empty(n)
    cdef double[::1] t = t_arr
    cdef double lo = 0.0, hi = 1.0, nu, f, df, cand, ti
    cdef int it, ok = 0
    if _excess(a, hi, p, target, t, &f):
        raise NumericFailure("inner Newton iteration for the l^p projection did not converge")
    while f > 0.0:
        lo = hi
        hi = 2.0 * hi
        if _excess(a, hi, p, target, t, &f):
            raise NumericFailure("inner Newton iteration for the l^p projection did not converge")
        if hi > 1e300:
            raise NumericFailure("could not bracket the l^p projection multiplier")
    nu = hi
    for it in range(MAX_NEWTON):
        if fabs(f) <= 1e-14 * target:
            ok = 1
            break
        if f > 0.0:
            lo = nu
        else:
            hi = nu
        df = 0.0
        for i in range(n):
            ti = t[i]
            if ti > 0.0:
                df -= p * pow(ti, p - 1.0) * pow(ti, p - 1.0) / (1.0 + nu * (p - 1.0) * pow(ti, p - 2.0))
        cand = nu - f / df if df < 0.0 else -1.0
        if not (lo < cand < hi):
            cand = 0.5 * (lo + hi)
        if cand == nu:
            ok = 1
            break
        nu = cand
        if _excess(a, nu, p, target, t, &f):
            raise NumericFailure("inner Newton iteration for the l^p projection did not converge")
    if not ok:
        raise NumericFailure("outer Newton iteration for the l^p projection did not converge")
    for i in range(n):
        if zv[i] > 0.0:
            out[i] = t[i]
        elif zv[i] < 0.0:
            out[i] = -t[i]
        else:
            out[i] = 0.0
    return out_arr


cdef inline void _rhs(double a1, double a2, double a3, double p1, double p2, double p3,
                      double* d) noexcept nogil:
    cdef double e = p3 * exp(a2 - a3)
    d[0] = p1 * exp(-a1)
    d[1] = p2 * exp(-a2) - e
    d[2] = e


def rk4_three_neuron(a0, weights, t_out, double dt, bint stretch):
    cdef double a1 = float(a0[0]), a2 = float(a0[1]), a3 = float(a0[2])
    cdef double p1 = float(weights[0]), p2 = float(weights[1]), p3 = float(weights[2])
    cdef double[::1] tv = np.ascontiguousarray(t_out, dtype=np.float64)
    out_arr = np.empty((tv.shape[0], 3))
    cdef double[:, ::1] out = out_arr
    cdef double t = 0.0, h, target
    cdef double k1[3]
    cdef double k2[3]
    cdef double k3[3]
    cdef double k4[3]
    cdef long nsteps = 0
    cdef Py_ssize_t n
    cdef bint last
    with nogil:
        for n in range(tv.shape[0]):
            target = tv[n]
            while t < target:
                h = dt * fmax(1.0, t) if stretch else dt
                last = 0
                if t + h > target or target - (t + h) < 1e-12 * h:
                    h = target - t
                    last = 1
                _rhs(a1, a2, a3, p1, p2, p3, k1)
                _rhs(a1 + 0.5 * h * k1[0], a2 + 0.5 * h * k1[1], a3 + 0.5 * h * k1[2], p1, p2, p3, k2)
                _rhs(a1 + 0.5 * h * k2[0], a2 + 0.5 * h * k2[1], a3 + 0.5 * h * k2[2], p1, p2, p3, k3)
                _rhs(a1 + h * k3[0], a2 + h * k3[1], a3 + h * k3[2], p1, p2, p3, k4)
                a1 += h * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]) / 6.0
                a2 += h * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]) / 6.0
                a3 += h * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]) / 6.0
                t = target if last else t + h
                nsteps += 1
            out[n, 0] = a1
            out[n, 1] = a2
            out[n, 2] = a3
    return out_arr, nsteps


cdef inline double _logaddexp0(double s) noexcept nogil:
    # log(1 + exp(s)) without overflow
    if s > 0.0:
        return s + log1p(exp(-s))
    return log1p(exp(s))


def relu_risk_grad(a, w, b, x, xi, weights):
    cdef double[::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] xiv = np.ascontiguousarray(xi, dtype=np.float64)
    cdef double[::1] pv = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t m = av.shape[0], n = xv.shape[0], i, j
    h_arr = np.zeros(n)
    dh_arr = np.empty(n)
    ga_arr = np.zeros(m)
    gw_arr = np.zeros(m)
    gb_arr = np.zeros(m)
    cdef double[::1] h = h_arr
    cdef double[::1] dh = dh_arr
    cdef double[::1] ga = ga_arr
    cdef double[::1] gw = gw_arr
    cdef double[::1] gb = gb_arr
    cdef double pre, s, risk = 0.0, inv_m = 1.0 / m, g
    with nogil:
        for i in range(m):
            for j in range(n):
                pre = wv[i] * xv[j] + bv[i]
                if pre > 0.0:
                    h[j] += av[i] * pre
        for j in range(n):
            h[j] *= inv_m
            s = -2.0 * xiv[j] * h[j]
            risk += pv[j] * _logaddexp0(s)
            dh[j] = pv[j] * (-2.0 * xiv[j]) * exp(-_logaddexp0(-s))
        for i in range(m):
            for j in range(n):
                pre = wv[i] * xv[j] + bv[i]
                if pre > 0.0:
                    ga[i] += pre * dh[j]
                    g = av[i] * dh[j]
                    gw[i] += g * xv[j]
                    gb[i] += g
            ga[i] *= inv_m
            gw[i] *= inv_m
            gb[i] *= inv_m
    return risk, ga_arr, gw_arr, gb_arr, h_arr
