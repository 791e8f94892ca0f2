import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rhl import _core_py, kernels

try:
    from rhl import _core
except ImportError:  # extension not built
    _core = None

needs_compiled = pytest.mark.skipif(_core is None, reason="compiled extension not built")


def random_rows(rng, n, p):
    start = np.round(rng.uniform(0, 1, n), 2)
    stop = np.minimum(start + np.round(rng.uniform(0.01, 0.5, n), 2), 1.0)
    stop = np.where(stop <= start, start + 0.01, stop)
    status = (rng.uniform(size=n) < 0.6).astype(np.int64)
    status[0] = 1
    X = rng.normal(size=(n, p))
    eta = X @ rng.normal(scale=0.5, size=p)
    return start, stop, status, X, eta


def brute_force_sweep(start, stop, status, X, eta):
    """Direct enumeration of every risk set."""
    times = np.unique(stop[status == 1])
    ll, p = 0.0, X.shape[1]
    grad, hess = np.zeros(p), np.zeros((p, p))
    counts, s0s = [], []
    for u in times:
        risk = (start < u) & (u <= stop)
        dead = (stop == u) & (status == 1)
        w = np.exp(eta[risk])
        s0 = w.sum()
        xbar = w @ X[risk] / s0
        cov = (X[risk] * w[:, None]).T @ X[risk] / s0 - np.outer(xbar, xbar)
        d = dead.sum()
        ll += eta[dead].sum() - d * np.log(s0)
        grad += X[dead].sum(axis=0) - d * xbar
        hess -= d * cov
        counts.append(d)
        s0s.append(s0)
    return ll, grad, hess, times, np.array(counts, float), np.array(s0s)


@pytest.mark.parametrize("backend", [_core_py, pytest.param(_core, marks=needs_compiled)],
                         ids=["python", "compiled"])
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 40), p=st.integers(1, 4))
def test_sweep_matches_enumeration(backend, seed, n, p):
    args = random_rows(np.random.default_rng(seed), n, p)
    got = backend.risk_set_sweep(*args)
    want = brute_force_sweep(*args)
    for g, w in zip(got, want):
        np.testing.assert_allclose(g, w, rtol=1e-10, atol=1e-12)


def test_sweep_without_events_is_empty():
    start, stop = np.array([0.0]), np.array([1.0])
    out = _core_py.risk_set_sweep(start, stop, np.array([0]), np.zeros((1, 1)), np.zeros(1))
    assert out[0] == 0.0 and out[3].size == 0


def test_nelson_aalen_with_shrinking_risk_set():
    # events at 1 (three rows at risk) and 2 (one row at risk)
    start = np.array([0.0, 0.0, 0.0])
    stop = np.array([1.0, 2.0, 1.0])
    status = np.array([1, 1, 0], dtype=np.int64)
    backends = [_core_py] + ([_core] if _core is not None else [])
    for b in backends:
        _, _, _, times, counts, s0 = b.risk_set_sweep(start, stop, status, np.zeros((3, 0)), np.zeros(3))
        np.testing.assert_array_equal(times, [1.0, 2.0])
        assert np.sum(counts / s0) == pytest.approx(4 / 3, abs=1e-15)


@needs_compiled
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 30))
def test_fc_slopes_backends_agree(seed, n):
    rng = np.random.default_rng(seed)
    x = np.cumsum(rng.uniform(0.01, 1, n))
    y = np.cumsum(rng.choice([0.0, 1.0], n) * rng.uniform(0, 2, n))
    np.testing.assert_allclose(_core.fc_slopes(x, y), _core_py.fc_slopes(x, y), rtol=1e-13, atol=1e-14)


@needs_compiled
def test_compiled_backend_is_default():
    if os.environ.get("RHL_PURE_PYTHON") == "1":
        pytest.skip("pure-Python backend forced")
    assert kernels.BACKEND == "compiled"


def test_environment_forces_python_backend():
    env = dict(os.environ, RHL_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "from rhl import kernels; print(kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"
