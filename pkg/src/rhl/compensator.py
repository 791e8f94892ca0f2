"""Per-unit compensator reconstruction from a fitted AG model.

For a unit with rows ``(s_r, e_r]`` carrying linear predictor ``eta_r``
(frozen at ``s_r``), the compensator is

    Lambda_hat(t) = sum_{r: s_r < t} exp(eta_r) [L0(min(e_r, t)) - L0(s_r)]

with ``L0`` the smoothed baseline.  When the rows are the inter-event
intervals this is exactly the interval sum over ``k = 0..N(t-)``.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .curves import GridCurve, MonotoneCubic
from .dataio import fmt
from .errors import EmptyDataset, GridOutsideBaseline, MissingColumn

_EDGE_TOL = 1e-12


@dataclass(frozen=True)
class CompensatorSet:
    """Grid-aligned curves, one row per unit, ordered by (cluster, unit)."""

    grid: np.ndarray
    curves: np.ndarray
    unit_ids: tuple
    cluster_ids: tuple

    def __post_init__(self):
        grid = np.array(self.grid, dtype=float)
        curves = np.array(self.curves, dtype=float)
        unit_ids = tuple(str(u) for u in self.unit_ids)
        cluster_ids = tuple(str(c) for c in self.cluster_ids)
        if curves.ndim != 2 or curves.shape != (len(unit_ids), grid.size):
            raise ValueError("curves must be n_units x len(grid)")
        if len(cluster_ids) != len(unit_ids):
            raise ValueError("one cluster label per unit required")
        order = sorted(range(len(unit_ids)), key=lambda k: (cluster_ids[k], unit_ids[k]))
        curves = curves[order]
        grid.setflags(write=False)
        curves.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "curves", curves)
        object.__setattr__(self, "unit_ids", tuple(unit_ids[k] for k in order))
        object.__setattr__(self, "cluster_ids", tuple(cluster_ids[k] for k in order))

    def __len__(self):
        return len(self.unit_ids)

    def curve(self, unit_id):
        k = self.unit_ids.index(str(unit_id))
        return GridCurve(self.grid, self.curves[k])

    def clusters(self):
        return list(dict.fromkeys(self.cluster_ids))


def _weights(unit, fit):
    if fit is None or not fit.spec.names:
        return np.ones(len(unit))
    return np.exp(fit.linear_predictor(unit))


def _reconstruct(start, stop, weights, base, grid):
    """Vectorised interval sum for one unit whose rows tile the window."""
    k = np.searchsorted(start, grid, side="left")  # rows starting strictly before t
    k = np.clip(k, 1, len(start)) - 1
    l0_start = base(start)
    # summation by parts over the tiling, sum_r w_r [L0(e_r) - L0(s_r)] with
    # e_r = s_{r+1}: exact when all weights coincide
    dw = np.diff(weights)
    offset = np.concatenate([[weights[0] * l0_start[0]], weights[0] * l0_start[0] + np.cumsum(dw * l0_start[1:])])
    values = weights[k] * base(np.minimum(grid, stop[k])) - offset[k]
    values = np.where(grid > start[0], values, 0.0)
    # rounding guard only; every term is nondecreasing in t
    return np.maximum.accumulate(values)


def _baseline_function(baseline):
    return MonotoneCubic(baseline.grid, baseline.values)


def _check_grid(grid, baseline, start, stop):
    lo, hi = baseline.grid[0] - _EDGE_TOL, baseline.grid[-1] + _EDGE_TOL
    if grid[0] < lo or grid[-1] > hi or start[0] < lo or stop[-1] > hi:
        raise GridOutsideBaseline(
            f"evaluation needs [{min(grid[0], start[0])}, {max(grid[-1], stop[-1])}] but the "
            f"baseline covers [{baseline.grid[0]}, {baseline.grid[-1]}]"
        )


def reconstruct_compensator(unit, fit, baseline, grid, _base=None):
    """Compensator of a single unit on ``grid``.

    Parameters
    ----------
    unit : RecurrentEventDataset
        Rows of one unit (e.g. ``dataset.unit(uid)``).
    fit : AGFit or None
        ``None`` means all coefficients zero.
    baseline : GridCurve
        Smoothed cumulative baseline; evaluated between its grid points with
        the same monotone interpolant used to smooth it.
    grid : array_like

    Returns
    -------
    GridCurve
    """
    grid = np.asarray(grid, dtype=float)
    _check_grid(grid, baseline, unit.start, unit.stop)
    base = _base or _baseline_function(baseline)
    values = _reconstruct(
        np.asarray(unit.start), np.asarray(unit.stop), _weights(unit, fit), base, grid
    )
    return GridCurve(grid, values, cumulative=True)


def reconstruct_all(dataset, fit, baseline, grid):
    """Compensators of every unit, ordered by (cluster_id, unit_id)."""
    grid = np.asarray(grid, dtype=float)
    _check_grid(grid, baseline, dataset.start, dataset.stop)
    base = _baseline_function(baseline)
    weights = _weights(dataset, fit)
    start, stop = np.asarray(dataset.start), np.asarray(dataset.stop)
    units, clusters, rows = [], [], []
    for uid, sl in dataset.unit_slices().items():
        units.append(uid)
        clusters.append(dataset.cluster_id[sl.start])
        rows.append(_reconstruct(start[sl], stop[sl], weights[sl], base, grid))
    return CompensatorSet(grid, np.vstack(rows), tuple(units), tuple(clusters))


def write_long_csv(cset, path):
    """``cluster_id,unit_id,t,value`` rows, grid-major within each unit."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["cluster_id", "unit_id", "t", "value"])
        for c, u, row in zip(cset.cluster_ids, cset.unit_ids, cset.curves):
            for t, v in zip(cset.grid, row):
                out.writerow([c, u, fmt(t), fmt(v)])
    return path


def read_long_csv(path):
    """Inverse of :func:`write_long_csv`; every unit must share one grid."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"cluster_id", "unit_id", "t", "value"} - set(reader.fieldnames or [])
        if missing:
            raise MissingColumn(f"{path}: missing columns {sorted(missing)}")
        data = {}
        for r in reader:
            key = (r["cluster_id"], r["unit_id"])
            data.setdefault(key, ([], []))
            data[key][0].append(float(r["t"]))
            data[key][1].append(float(r["value"]))
    if not data:
        raise EmptyDataset(f"{path} has no curves")
    grids = [np.array(t) for t, _ in data.values()]
    grid = grids[0]
    if any(g.shape != grid.shape or np.any(g != grid) for g in grids):
        raise ValueError(f"{path}: curves are not on a shared grid")
    keys = list(data)
    return CompensatorSet(
        grid,
        np.array([data[k][1] for k in keys]),
        tuple(k[1] for k in keys),
        tuple(k[0] for k in keys),
    )
