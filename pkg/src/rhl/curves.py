"""Curves on a shared time grid, step functions and monotone interpolation."""

from dataclasses import dataclass

import numpy as np

from .kernels import fc_slopes


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous step function, zero before its first jump."""

    jump_times: np.ndarray
    cum_values: np.ndarray

    def __post_init__(self):
        t = _frozen(self.jump_times)
        v = _frozen(self.cum_values)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("jump_times and cum_values must be 1-d of equal length")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("jump_times must be strictly increasing")
        if v.size and (v[0] < 0 or np.any(np.diff(v) < 0)):
            raise ValueError("cum_values must be nonnegative and nondecreasing")
        object.__setattr__(self, "jump_times", t)
        object.__setattr__(self, "cum_values", v)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.jump_times, t, side="right")
        padded = np.concatenate([[0.0], self.cum_values])
        return padded[idx]

    @property
    def increments(self):
        return np.diff(self.cum_values, prepend=0.0)


@dataclass(frozen=True)
class GridCurve:
    """A function sampled on a strictly increasing grid.

    Curves flagged ``cumulative`` must start at 0 and be nondecreasing.
    """

    grid: np.ndarray
    values: np.ndarray
    cumulative: bool = False

    def __post_init__(self):
        g = _frozen(self.grid)
        v = _frozen(self.values)
        if g.ndim != 1 or g.shape != v.shape:
            raise ValueError("grid and values must be 1-d of equal length")
        if g.size < 2 or np.any(np.diff(g) <= 0):
            raise ValueError("grid must be strictly increasing with >= 2 points")
        if self.cumulative and (v[0] != 0.0 or np.any(np.diff(v) < 0)):
            raise ValueError("cumulative curve must start at 0 and be nondecreasing")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.grid.size

    def integral(self):
        return float(trapezoid_weights(self.grid) @ self.values)


def trapezoid_weights(grid):
    """Trapezoid-rule quadrature weights for ``grid``."""
    grid = np.asarray(grid, dtype=float)
    h = np.diff(grid)
    w = np.zeros_like(grid)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


def cumulative_trapezoid(grid, values):
    """Running trapezoid integral, starting at 0."""
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    out = np.zeros_like(values)
    out[1:] = np.cumsum(0.5 * np.diff(grid) * (values[1:] + values[:-1]))
    return out


def inner(grid, f, g):
    """Quadrature inner product; ``f`` and ``g`` may be stacked along axis 0."""
    w = trapezoid_weights(grid)
    return np.asarray(f) * w @ np.asarray(g).T


class MonotoneCubic:
    """Piecewise cubic Hermite interpolant with Fritsch-Carlson slopes.

    Exact at the knots, C1, and monotone wherever the data are.  Outside the
    knot range the end values are held constant.

    Parameters
    ----------
    x : array_like
        Strictly increasing knots.
    y : array_like
        Values at the knots.
    """

    def __init__(self, x, y):
        x = np.ascontiguousarray(x, dtype=float)
        y = np.ascontiguousarray(y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or x.size == 0:
            raise ValueError("x and y must be non-empty 1-d arrays of equal length")
        if np.any(np.diff(x) <= 0):
            raise ValueError("knots must be strictly increasing")
        self.x = x
        self.y = y
        self.slopes = np.asarray(fc_slopes(x, y))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        x, y, m = self.x, self.y, self.slopes
        if x.size == 1:
            return np.full(t.shape, y[0])
        k = np.clip(np.searchsorted(x, t, side="right") - 1, 0, x.size - 2)
        h = x[k + 1] - x[k]
        s = np.clip((t - x[k]) / h, 0.0, 1.0)
        s2 = s * s
        s3 = s2 * s
        out = (
            (2 * s3 - 3 * s2 + 1) * y[k]
            + (s3 - 2 * s2 + s) * h * m[k]
            + (3 * s2 - 2 * s3) * y[k + 1]
            + (s3 - s2) * h * m[k + 1]
        )
        # knots are reproduced exactly; beyond the range hold the end values
        out = np.where(t <= x[0], y[0], out)
        out = np.where(t >= x[-1], y[-1], out)
        return out
