"""Pure-Python (numpy) versions of the kernels in ``_core.pyx``.

The risk-set sums here come from reverse cumulative sums over rows sorted by
start and by stop: rows at risk at ``u`` are those with ``stop >= u`` minus
those with ``start >= u``.
"""

import numpy as np


def _tail_sums(keys, values, at):
    """Sum of ``values`` over rows whose key is ``>= at`` (vectorised over ``at``)."""
    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]
    tail = np.cumsum(values[order][::-1], axis=0)[::-1]
    tail = np.concatenate([tail, np.zeros((1,) + tail.shape[1:])], axis=0)
    return tail[np.searchsorted(sorted_keys, at, side="left")]


def risk_set_sweep(start, stop, status, X, eta):
    start = np.asarray(start, dtype=float)
    stop = np.asarray(stop, dtype=float)
    X = np.asarray(X, dtype=float)
    eta = np.asarray(eta, dtype=float)
    p = X.shape[1]

    ev = np.flatnonzero(np.asarray(status) == 1)
    ev = ev[np.argsort(stop[ev], kind="stable")]
    if ev.size == 0:
        empty = np.empty(0)
        return 0.0, np.zeros(p), np.zeros((p, p)), empty, empty, empty
    ev_times = stop[ev]
    times, first = np.unique(ev_times, return_index=True)
    counts = np.diff(np.append(first, ev.size)).astype(float)
    sum_eta = np.add.reduceat(eta[ev], first)
    xsum = np.add.reduceat(X[ev], first, axis=0)

    w = np.exp(eta)
    wx = w[:, None] * X
    wxx = wx[:, :, None] * X[:, None, :]
    s0 = _tail_sums(stop, w, times) - _tail_sums(start, w, times)
    s1 = _tail_sums(stop, wx, times) - _tail_sums(start, wx, times)
    s2 = _tail_sums(stop, wxx, times) - _tail_sums(start, wxx, times)

    loglik = float(np.sum(sum_eta - counts * np.log(s0)))
    mean1 = s1 / s0[:, None]
    grad = np.sum(xsum - counts[:, None] * mean1, axis=0)
    hess = -np.sum(
        counts[:, None, None]
        * (s2 / s0[:, None, None] - mean1[:, :, None] * mean1[:, None, :]),
        axis=0,
    )
    hess = 0.5 * (hess + hess.T)
    return loglik, grad, hess, times, counts, s0


def fc_slopes(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    m = np.zeros(n)
    if n < 2:
        return m
    delta = np.diff(y) / np.diff(x)
    m[0] = delta[0]
    m[-1] = delta[-1]
    inner = delta[:-1] * delta[1:] > 0.0
    m[1:-1] = np.where(inner, 0.5 * (delta[:-1] + delta[1:]), 0.0)
    # sequential: each interval may shrink the slope shared with the next
    for k in range(n - 1):
        dk = delta[k]
        if dk == 0.0:
            m[k] = 0.0
            m[k + 1] = 0.0
            continue
        alpha = m[k] / dk
        beta = m[k + 1] / dk
        if alpha < 0.0:
            m[k] = alpha = 0.0
        if beta < 0.0:
            m[k + 1] = beta = 0.0
        s = alpha * alpha + beta * beta
        if s > 9.0:
            tau = 3.0 / np.sqrt(s)
            m[k] = tau * alpha * dk
            m[k + 1] = tau * beta * dk
    return m
