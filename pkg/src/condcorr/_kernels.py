"""Compiled inner loops for the correlation recursions and the Gaussian likelihood."""
import math

import numpy as np
from numba import njit

LOG_2PI = math.log(2.0 * math.pi)


@njit(cache=True)
def _rescale(q, r):
    n = q.shape[0]
    d = np.empty(n)
    for i in range(n):
        qii = q[i, i]
        d[i] = math.sqrt(qii) if qii > 0.0 else math.nan
    for i in range(n):
        r[i, i] = 1.0 if d[i] == d[i] else math.nan
        for j in range(i + 1, n):
            v = q[i, j] / (d[i] * d[j])
            r[i, j] = v
            r[j, i] = v


@njit(cache=True)
def corr_recursion(eps, a, b, phi, r_bar, q_init, gated):
    """Corrected-DCC recursion, optionally with the Hadamard news gate.

    Q_t = (1-a-b) R + a * G_t o (D_{t-1} e_{t-1} e_{t-1}' D_{t-1}) + b Q_{t-1}
    where D_t = diag(sqrt(q_ii,t)) and G_t = exp(phi (R_{t-1} - 1)) if gated.
    Evaluated as R + a (news - R) + b (Q_{t-1} - R) so that a = 0 keeps Q_t = R bit for bit.
    """
    t_len, n = eps.shape
    q = np.empty((t_len, n, n))
    r = np.empty((t_len, n, n))
    for i in range(n):
        for j in range(n):
            q[0, i, j] = q_init[i, j]
    _rescale(q[0], r[0])
    u = np.empty(n)
    for t in range(1, t_len):
        for i in range(n):
            qii = q[t - 1, i, i]
            u[i] = (math.sqrt(qii) if qii > 0.0 else math.nan) * eps[t - 1, i]
        for i in range(n):
            for j in range(i, n):
                shock = u[i] * u[j]
                if gated:
                    shock *= math.exp(phi * (r[t - 1, i, j] - 1.0))
                rb = r_bar[i, j]
                v = rb + a * (shock - rb) + b * (q[t - 1, i, j] - rb)
                q[t, i, j] = v
                q[t, j, i] = v
        _rescale(q[t], r[t])
    return q, r


@njit(cache=True)
def gaussian_corr_obs_loglik(eps, r):
    """Per-observation log-density of e_t ~ N(0, R_t); -inf where R_t is not PD."""
    t_len, n = eps.shape
    out = np.empty(t_len)
    low = np.empty((n, n))
    z = np.empty(n)
    for t in range(t_len):
        ok = True
        logdet = 0.0
        for j in range(n):
            s = r[t, j, j]
            for k in range(j):
                s -= low[j, k] * low[j, k]
            if not s > 0.0:
                ok = False
                break
            ljj = math.sqrt(s)
            low[j, j] = ljj
            logdet += 2.0 * math.log(ljj)
            for i in range(j + 1, n):
                s2 = r[t, i, j]
                for k in range(j):
                    s2 -= low[i, k] * low[j, k]
                low[i, j] = s2 / ljj
        if not ok:
            out[t] = -math.inf
            continue
        quad = 0.0
        for i in range(n):
            s = eps[t, i]
            for k in range(i):
                s -= low[i, k] * z[k]
            z[i] = s / low[i, i]
            quad += z[i] * z[i]
        out[t] = -0.5 * (n * LOG_2PI + logdet + quad)
    return out


@njit(cache=True)
def schur_stable(tail):
    """Roots of z^k + c1 z^(k-1) + ... + ck strictly inside the unit circle (step-down test)."""
    k = tail.shape[0]
    a = np.empty(k + 1)
    a[0] = 1.0
    a[1:] = tail
    work = np.empty(k + 1)
    for m in range(k, 0, -1):
        r = a[m]
        if not abs(r) < 1.0:
            return False
        for i in range(m):
            work[i] = (a[i] - r * a[m - i]) / (1.0 - r * r)
        for i in range(m):
            a[i] = work[i]
    return True


@njit(cache=True)
def arma_objective(theta, z, p, q):
    """log(mean e_t^2) of conditional ARMA residuals and its exact gradient.

    e_t = x_t - sum ar_i x_{t-i} - sum ma_j e_{t-j} with x = z - mu and zero
    pre-sample values; derivatives follow the same recursion.
    """
    k = theta.shape[0]
    grad = np.zeros(k)
    if not (schur_stable(-theta[1:1 + p]) and schur_stable(theta[1 + p:])):
        return math.inf, grad
    n = z.shape[0]
    mu = theta[0]
    e = np.empty(n)
    de = np.zeros((n, k))
    ss = 0.0
    for t in range(n):
        v = z[t] - mu
        d0 = -1.0
        for i in range(1, p + 1):
            if t - i >= 0:
                v -= theta[i] * (z[t - i] - mu)
                d0 += theta[i]
        for j in range(1, q + 1):
            if t - j >= 0:
                v -= theta[p + j] * e[t - j]
        e[t] = v
        # d e_t / d theta, before the MA feedback of past derivatives
        de[t, 0] = d0
        for i in range(1, p + 1):
            if t - i >= 0:
                de[t, i] = -(z[t - i] - mu)
        for j in range(1, q + 1):
            if t - j >= 0:
                de[t, p + j] = -e[t - j]
        for j in range(1, q + 1):
            if t - j >= 0:
                for m in range(k):
                    de[t, m] -= theta[p + j] * de[t - j, m]
        ss += v * v
    s2 = ss / n
    if not s2 > 0.0:
        return math.inf, grad
    for t in range(n):
        for m in range(k):
            grad[m] += de[t, m] * e[t]
    for m in range(k):
        grad[m] *= 2.0 / (n * s2)
    return math.log(s2), grad
