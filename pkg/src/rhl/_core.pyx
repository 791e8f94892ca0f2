# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: risk-set sweep for the Breslow partial likelihood and
Fritsch-Carlson monotone slopes.

Signatures and return values mirror :mod:`rhl._core_py` exactly.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, sqrt

cnp.import_array()


def risk_set_sweep(const double[::1] start, const double[::1] stop, const long[::1] status,
                   const double[:, ::1] X, const double[::1] eta):
    """Log partial likelihood, score and hessian under Breslow ties.

    Also returns the distinct event times, the event count at each and the
    risk-set sum of ``exp(eta)`` there, which is what the Breslow baseline
    needs.

    One pass backwards in time keeps running risk-set sums: a row joins once
    ``u <= stop`` and leaves once ``u <= start``, so the cost is linear in the
    number of rows.
    """
    cdef Py_ssize_t n = start.shape[0]
    cdef Py_ssize_t p = X.shape[1]
    cdef Py_ssize_t r, e, a, b, ia, ir, ie, m = 0
    cdef double u, d, sum_eta, wr, loglik = 0.0, s0 = 0.0

    # descending orders
    cdef long[::1] by_start = np.argsort(np.asarray(start), kind="stable")[::-1].astype(np.int64)
    cdef long[::1] by_stop = np.argsort(np.asarray(stop), kind="stable")[::-1].astype(np.int64)
    ev_np = np.flatnonzero(np.asarray(status) == 1)
    ev_np = ev_np[np.argsort(np.asarray(stop)[ev_np], kind="stable")][::-1].astype(np.int64)
    cdef long[::1] ev = ev_np
    cdef Py_ssize_t n_ev = ev.shape[0]
    cdef double[::1] w = np.exp(np.asarray(eta))

    grad_np = np.zeros(p)
    hess_np = np.zeros((p, p))
    cdef double[::1] grad = grad_np
    cdef double[:, ::1] hess = hess_np
    cdef double[::1] s1 = np.zeros(p)
    cdef double[:, ::1] s2 = np.zeros((p, p))
    cdef double[::1] xsum = np.zeros(p)

    times_np = np.empty(n_ev)
    counts_np = np.empty(n_ev)
    s0_np = np.empty(n_ev)
    cdef double[::1] times = times_np
    cdef double[::1] counts = counts_np
    cdef double[::1] s0_out = s0_np

    ia = 0
    ir = 0
    ie = 0
    while ie < n_ev:
        u = stop[ev[ie]]
        while ir < n and stop[by_stop[ir]] >= u:
            r = by_stop[ir]
            wr = w[r]
            s0 += wr
            for a in range(p):
                s1[a] += wr * X[r, a]
                for b in range(a + 1):
                    s2[a, b] += wr * X[r, a] * X[r, b]
            ir += 1
        while ia < n and start[by_start[ia]] >= u:
            r = by_start[ia]
            wr = w[r]
            s0 -= wr
            for a in range(p):
                s1[a] -= wr * X[r, a]
                for b in range(a + 1):
                    s2[a, b] -= wr * X[r, a] * X[r, b]
            ia += 1

        d = 0.0
        sum_eta = 0.0
        for a in range(p):
            xsum[a] = 0.0
        while ie < n_ev and stop[ev[ie]] == u:
            e = ev[ie]
            d += 1.0
            sum_eta += eta[e]
            for a in range(p):
                xsum[a] += X[e, a]
            ie += 1

        loglik += sum_eta - d * log(s0)
        for a in range(p):
            grad[a] += xsum[a] - d * s1[a] / s0
            for b in range(a + 1):
                hess[a, b] -= d * (s2[a, b] / s0 - s1[a] * s1[b] / (s0 * s0))
        times[m] = u
        counts[m] = d
        s0_out[m] = s0
        m += 1

    for a in range(p):
        for b in range(a):
            hess[b, a] = hess[a, b]
    return (loglik, grad_np, hess_np, times_np[:m][::-1].copy(),
            counts_np[:m][::-1].copy(), s0_np[:m][::-1].copy())


def fc_slopes(const double[::1] x, const double[::1] y):
    """Fritsch-Carlson knot slopes for a monotone piecewise cubic."""
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t k
    cdef double alpha, beta, s, tau
    m_np = np.zeros(n)
    cdef double[::1] m = m_np
    if n < 2:
        return m_np
    delta_np = np.empty(n - 1)
    cdef double[::1] delta = delta_np
    for k in range(n - 1):
        delta[k] = (y[k + 1] - y[k]) / (x[k + 1] - x[k])
    m[0] = delta[0]
    m[n - 1] = delta[n - 2]
    for k in range(1, n - 1):
        if delta[k - 1] * delta[k] <= 0.0:
            m[k] = 0.0
        else:
            m[k] = 0.5 * (delta[k - 1] + delta[k])
    for k in range(n - 1):
        if delta[k] == 0.0:
            m[k] = 0.0
            m[k + 1] = 0.0
            continue
        alpha = m[k] / delta[k]
        beta = m[k + 1] / delta[k]
        if alpha < 0.0:
            m[k] = 0.0
            alpha = 0.0
        if beta < 0.0:
            m[k + 1] = 0.0
            beta = 0.0
        s = alpha * alpha + beta * beta
        if s > 9.0:
            tau = 3.0 / sqrt(s)
            m[k] = tau * alpha * delta[k]
            m[k + 1] = tau * beta * delta[k]
    return m_np
