"""Pure-Python/numpy implementations of the hot kernels.

These are the reference fallback for :mod:`collapse_lab._ckernels`; both
modules expose the same functions with the same signatures.
"""
import math

import numpy as np

from .errors import NumericFailure

MAX_NEWTON = 100


def _radial_root(a, nu, p):
    """Solve ``t + nu * t**(p-1) = a`` for ``t >= 0``, elementwise."""
    if p > 2.0:
        # Convex increasing in t. Both starting candidates lie right of the
        # root, so Newton decreases monotonically; the clamp only absorbs
        # roundoff when the root is tiny.
        t = np.minimum(a, (a / nu) ** (1.0 / (p - 1.0)))
        for _ in range(MAX_NEWTON):
            g = t + nu * t ** (p - 1.0) - a
            dg = 1.0 + nu * (p - 1.0) * t ** (p - 2.0)
            step = g / dg
            t = np.maximum(t - step, 0.0)
            if np.all(np.abs(step) <= 1e-15 * np.maximum(a, 1e-300)):
                return np.maximum(t, 0.0)
        raise NumericFailure("inner Newton iteration for the l^p projection did not converge")
    # p < 2: solve in u = t^(p-1), where the equation is convex in u
    r = 1.0 / (p - 1.0)
    u = np.minimum(a ** (p - 1.0), a / nu)
    for _ in range(MAX_NEWTON):
        g = u**r + nu * u - a
        dg = r * u ** (r - 1.0) + nu
        step = g / dg
        u = np.maximum(u - step, 0.0)
        if np.all(np.abs(step) <= 1e-15 * np.maximum(u, 1e-300)):
            return np.maximum(u, 0.0) ** r
    raise NumericFailure("inner Newton iteration for the l^p projection did not converge")


def project_lp_ball(z, R, p):
    z = np.asarray(z, dtype=np.float64)
    a = np.abs(z)
    if np.sum(a**p) <= R**p:
        return z.copy()
    if p == 2.0:
        return z * (R / math.sqrt(z @ z))
    nz = a > 0
    a = a[nz]
    target = R**p

    def excess(nu):
        t = _radial_root(a, nu, p)
        return t, np.sum(t**p) - target

    lo, hi = 0.0, 1.0
    t, f = excess(hi)
    while f > 0.0:
        lo, hi = hi, 2.0 * hi
        t, f = excess(hi)
        if hi > 1e300:
            raise NumericFailure("could not bracket the l^p projection multiplier")
    nu = hi
    for _ in range(MAX_NEWTON):
        if abs(f) <= 1e-14 * target:
            break
        if f > 0.0:
            lo = nu
        else:
            hi = nu
        # d t_i / d nu from the radial equation; coordinates that underflowed
        # to zero contribute nothing
        tp = t[t > 0.0]
        df = -np.sum(p * tp ** (2.0 * p - 2.0) / (1.0 + nu * (p - 1.0) * tp ** (p - 2.0)))
        cand = nu - f / df if df < 0.0 else -1.0
        if not (lo < cand < hi):
            cand = 0.5 * (lo + hi)
        if cand == nu:
            break
        nu = cand
        t, f = excess(nu)
    else:
        raise NumericFailure("outer Newton iteration for the l^p projection did not converge")
    out = np.zeros_like(z)
    out[nz] = np.sign(z[nz]) * t
    return out


def _three_neuron_rhs(a1, a2, a3, p1, p2, p3):
    e = p3 * math.exp(a2 - a3)
    return p1 * math.exp(-a1), p2 * math.exp(-a2) - e, e


def rk4_three_neuron(a0, weights, t_out, dt, stretch):
    """Classic RK4 for the three-coefficient flow, sampled at times ``t_out``.

    With ``stretch`` the step is ``dt * max(1, t)``; the vector field decays
    like ``1/t`` so the relative step stays fixed.
    """
    a1, a2, a3 = (float(v) for v in a0)
    p1, p2, p3 = (float(v) for v in weights)
    t_out = np.asarray(t_out, dtype=np.float64)
    out = np.empty((t_out.size, 3))
    t = 0.0
    nsteps = 0
    for n, target in enumerate(t_out):
        while t < target:
            h = dt * max(1.0, t) if stretch else dt
            if t + h > target or target - (t + h) < 1e-12 * h:
                h = target - t
            k1 = _three_neuron_rhs(a1, a2, a3, p1, p2, p3)
            k2 = _three_neuron_rhs(a1 + 0.5 * h * k1[0], a2 + 0.5 * h * k1[1], a3 + 0.5 * h * k1[2], p1, p2, p3)
            k3 = _three_neuron_rhs(a1 + 0.5 * h * k2[0], a2 + 0.5 * h * k2[1], a3 + 0.5 * h * k2[2], p1, p2, p3)
            k4 = _three_neuron_rhs(a1 + h * k3[0], a2 + h * k3[1], a3 + h * k3[2], p1, p2, p3)
            a1 += h * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]) / 6.0
            a2 += h * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]) / 6.0
            a3 += h * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]) / 6.0
            t = target if h == target - t else t + h
            nsteps += 1
        out[n] = (a1, a2, a3)
    return out, nsteps


def relu_risk_grad(a, w, b, x, xi, weights):
    """Logistic risk of a mean-field ReLU network and its particle gradient.

    ``h(x) = mean_i a_i relu(w_i x + b_i)``, loss ``log(1 + exp(-2 xi h))``.
    The ReLU derivative at 0 is taken as 0. Returns ``(risk, ga, gw, gb, h)``.
    """
    m = a.size
    pre = np.outer(w, x) + b[:, None]
    act = np.maximum(pre, 0.0)
    h = a @ act / m
    s = -2.0 * xi * h
    risk = float(weights @ np.logaddexp(0.0, s))
    # d loss / d h = -2 xi sigmoid(s)
    sig = np.exp(-np.logaddexp(0.0, -s))
    dh = weights * (-2.0 * xi) * sig
    ga = act @ dh / m
    g = (pre > 0.0) * (a[:, None] * dh[None, :]) / m
    gw = g @ x
    gb = g.sum(axis=1)
    return risk, ga, gw, gb, h
