"""Two-level functional principal component analysis of grid-aligned curves.

Curves are modelled as ``mu(t) + Z_i(t) + W_ij(t)`` with ``Z_i`` shared by
the units of cluster ``i``.  Covariances are method-of-moments estimates on
the grid; eigenfunctions come from the quadrature-weighted eigenproblem and
are orthonormal under the trapezoid inner product.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .curves import GridCurve, trapezoid_weights
from .dataio import fmt
from .errors import (
    BasisMismatch,
    ComponentOutOfRange,
    EigenFailure,
    EmptyDataset,
    InsufficientClusters,
    MissingColumn,
)

DEFAULT_PVE = 0.99


def estimate_mean(curves):
    """Pointwise mean of all curves in a :class:`CompensatorSet`."""
    if len(curves) == 0:
        raise ValueError("need at least one curve")
    return GridCurve(curves.grid, np.mean(curves.curves, axis=0))


def _cluster_index(labels):
    labels = [str(c) for c in labels]
    clusters = list(dict.fromkeys(labels))
    lookup = {c: k for k, c in enumerate(clusters)}
    return clusters, np.array([lookup[c] for c in labels])


def covariance_split(centered, cluster_labels):
    """Between- and within-cluster covariance surfaces on the grid.

    ``K_between`` averages, cluster by cluster, the cross-products of
    distinct units in the same cluster (each cluster weighted equally,
    clusters of size one skipped); ``K_total`` averages each centred curve's
    own outer product; ``K_within = K_total - K_between``.

    Parameters
    ----------
    centered : ndarray, shape (n, G)
        Curves minus the overall mean.
    cluster_labels : sequence of length n

    Returns
    -------
    K_between, K_within : ndarray, shape (G, G)
    """
    centered = np.asarray(centered, dtype=float)
    clusters, idx = _cluster_index(cluster_labels)
    sizes = np.bincount(idx, minlength=len(clusters))
    if len(clusters) < 2 or np.all(sizes < 2):
        raise InsufficientClusters(
            "need >= 2 clusters and at least one cluster with >= 2 units"
        )
    G = centered.shape[1]
    K_between = np.zeros((G, G))
    used = 0
    for k in range(len(clusters)):
        if sizes[k] < 2:
            continue
        block = centered[idx == k]
        total = block.sum(axis=0)
        pairs = np.outer(total, total) - block.T @ block
        K_between += pairs / (sizes[k] * (sizes[k] - 1))
        used += 1
    K_between /= used
    K_total = centered.T @ centered / centered.shape[0]
    K_between = 0.5 * (K_between + K_between.T)
    K_total = 0.5 * (K_total + K_total.T)
    return K_between, K_total - K_between


def _orient(phi, w):
    """Flip so the integral is >= 0 (first nonzero value positive on ties)."""
    area = w @ phi
    scale = max(np.max(np.abs(phi)), 1.0)
    if abs(area) <= 1e-12 * scale:
        nz = np.flatnonzero(np.abs(phi) > 1e-12 * scale)
        return -phi if nz.size and phi[nz[0]] < 0 else phi
    return -phi if area < 0 else phi


def eigen_decompose(K, weights):
    """Eigenpairs of the integral operator with kernel ``K``.

    Solves ``sum_t K(s, t) w_t phi(t) = lambda phi(s)`` through the symmetric
    matrix ``W^1/2 K W^1/2``.  Eigenfunctions satisfy
    ``sum_t w_t phi_a(t) phi_b(t) = delta_ab``.

    Returns
    -------
    eigenvalues : ndarray
        Descending, negative ones clipped to 0.
    eigenfunctions : ndarray, shape (G, G)
        Column ``k`` pairs with ``eigenvalues[k]``.
    clipped : float
        Total magnitude of the clipped negative eigenvalues.
    """
    K = np.asarray(K, dtype=float)
    w = np.asarray(weights, dtype=float)
    if np.any(w <= 0):
        raise ValueError("quadrature weights must be positive")
    root = np.sqrt(w)
    A = root[:, None] * K * root[None, :]
    A = 0.5 * (A + A.T)
    try:
        vals, vecs = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from None
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    clipped = float(-vals[vals < 0].sum())
    vals = np.clip(vals, 0.0, None)
    phis = vecs / root[:, None]
    phis = np.column_stack([_orient(phis[:, k], w) for k in range(phis.shape[1])])
    return vals, phis, clipped


def truncate_by_pve(eigenvalues, pve):
    """Smallest count whose cumulative eigenvalue share reaches ``pve``."""
    if not 0.0 < pve <= 1.0:
        raise ValueError("pve must lie in (0, 1]")
    lam = np.clip(np.asarray(eigenvalues, dtype=float), 0.0, None)
    total = lam.sum()
    if total <= 0.0:
        return 0
    if pve == 1.0:
        return int(np.count_nonzero(lam > 0))
    share = np.cumsum(lam) / total
    # a share that is pve up to rounding counts as reaching it
    return int(np.argmax(share >= pve - 1e-12) + 1)


@dataclass(frozen=True)
class ScoreTable:
    """Level-1 scores per cluster and level-2 scores per unit."""

    cluster_ids: tuple
    xi: np.ndarray
    unit_ids: tuple
    unit_cluster_ids: tuple
    zeta: np.ndarray

    def level1(self, cluster_id):
        return self.xi[self.cluster_ids.index(str(cluster_id))]

    def level2(self, unit_id):
        return self.zeta[self.unit_ids.index(str(unit_id))]


def estimate_scores(centered, cluster_labels, grid, phi1, phi2):
    """Projection scores.

    ``xi_ik`` is the inner product of cluster ``i``'s mean centred curve
    with ``phi1[k]``; ``zeta_ijl`` projects what level 1 leaves of curve
    ``ij`` onto ``phi2[l]``.  Eigenfunctions are stacked as rows.
    """
    centered = np.asarray(centered, dtype=float)
    grid = np.asarray(grid, dtype=float)
    phi1 = np.atleast_2d(np.asarray(phi1, dtype=float)).reshape(-1, grid.size)
    phi2 = np.atleast_2d(np.asarray(phi2, dtype=float)).reshape(-1, grid.size)
    if centered.shape[1] != grid.size:
        raise BasisMismatch("curves and basis are on different grids")
    w = trapezoid_weights(grid)
    clusters, idx = _cluster_index(cluster_labels)
    means = np.vstack([centered[idx == k].mean(axis=0) for k in range(len(clusters))])
    xi = means * w @ phi1.T
    level1_fit = xi[idx] @ phi1
    zeta = (centered - level1_fit) * w @ phi2.T
    return xi, zeta


@dataclass(frozen=True)
class MFPCAResult:
    grid: np.ndarray
    mean: GridCurve
    cluster_ids: tuple
    unit_ids: tuple
    unit_cluster_ids: tuple
    eigenvalues1: np.ndarray
    eigenfunctions1: np.ndarray
    xi: np.ndarray
    eigenvalues2: np.ndarray
    eigenfunctions2: np.ndarray
    zeta: np.ndarray
    pve1: float
    pve2: float
    explained1: float
    explained2: float
    total_variance1: float
    total_variance2: float
    rho: float
    residual_fraction: float
    clipped1: float = 0.0
    clipped2: float = 0.0
    all_eigenvalues1: np.ndarray = field(default=None, repr=False)
    all_eigenvalues2: np.ndarray = field(default=None, repr=False)

    @property
    def K(self):
        return len(self.eigenvalues1)

    @property
    def L(self):
        return len(self.eigenvalues2)

    def eigenfunction(self, level, component):
        """Component numbering starts at 1."""
        phis = self._level(level)[1]
        if not 1 <= component <= phis.shape[0]:
            raise ComponentOutOfRange(f"level {level} has {phis.shape[0]} retained components")
        return GridCurve(self.grid, phis[component - 1])

    def _level(self, level):
        if level == 1:
            return self.eigenvalues1, self.eigenfunctions1
        if level == 2:
            return self.eigenvalues2, self.eigenfunctions2
        raise ValueError("level must be 1 or 2")

    @property
    def scores(self):
        return ScoreTable(self.cluster_ids, self.xi, self.unit_ids, self.unit_cluster_ids, self.zeta)

    def report(self):
        return {
            "K": self.K,
            "L": self.L,
            "pve1": self.pve1,
            "pve2": self.pve2,
            "explained1": self.explained1,
            "explained2": self.explained2,
            "eigenvalues1": [float(v) for v in self.eigenvalues1],
            "eigenvalues2": [float(v) for v in self.eigenvalues2],
            "total_variance_between": self.total_variance1,
            "total_variance_within": self.total_variance2,
            "rho": self.rho,
            "residual_fraction": self.residual_fraction,
            "clipped_negative_eigenvalues": {"level1": self.clipped1, "level2": self.clipped2},
            "n_clusters": len(self.cluster_ids),
            "n_units": len(self.unit_ids),
        }


def mfpca(curves, pve1=DEFAULT_PVE, pve2=DEFAULT_PVE):
    """Decompose a :class:`CompensatorSet`.

    Diagnostics: ``rho`` is the level-1 share of retained eigenvalue mass;
    ``total_variance1``/``2`` are the summed (clipped) eigenvalues of each
    level; ``residual_fraction`` is the squared quadrature norm of what the
    truncated expansion misses, relative to the centred curves.
    """
    grid = np.asarray(curves.grid)
    mean = estimate_mean(curves)
    centered = curves.curves - mean.values
    K_between, K_within = covariance_split(centered, curves.cluster_ids)
    w = trapezoid_weights(grid)
    lam1, phi1, clip1 = eigen_decompose(K_between, w)
    lam2, phi2, clip2 = eigen_decompose(K_within, w)
    K = truncate_by_pve(lam1, pve1)
    L = truncate_by_pve(lam2, pve2)
    phi1, phi2 = phi1[:, :K].T, phi2[:, :L].T
    xi, zeta = estimate_scores(centered, curves.cluster_ids, grid, phi1, phi2)

    clusters, idx = _cluster_index(curves.cluster_ids)
    recon = xi[idx] @ phi1 + zeta @ phi2
    denom = float(np.sum((centered**2) @ w))
    resid = float(np.sum(((centered - recon) ** 2) @ w))
    kept = lam1[:K].sum() + lam2[:L].sum()
    tot1, tot2 = float(lam1.sum()), float(lam2.sum())
    return MFPCAResult(
        grid=grid,
        mean=mean,
        cluster_ids=tuple(clusters),
        unit_ids=tuple(curves.unit_ids),
        unit_cluster_ids=tuple(curves.cluster_ids),
        eigenvalues1=lam1[:K],
        eigenfunctions1=phi1,
        xi=xi,
        eigenvalues2=lam2[:L],
        eigenfunctions2=phi2,
        zeta=zeta,
        pve1=pve1,
        pve2=pve2,
        explained1=float(lam1[:K].sum() / tot1) if tot1 > 0 else 0.0,
        explained2=float(lam2[:L].sum() / tot2) if tot2 > 0 else 0.0,
        total_variance1=tot1,
        total_variance2=tot2,
        rho=float(lam1[:K].sum() / kept) if kept > 0 else 0.0,
        residual_fraction=resid / denom if denom > 0 else 0.0,
        clipped1=clip1,
        clipped2=clip2,
        all_eigenvalues1=lam1,
        all_eigenvalues2=lam2,
    )


def perturbation_curves(result, level, component):
    """``mean +/- sqrt(lambda) * phi`` for a retained component."""
    lam, _ = result._level(level)
    phi = result.eigenfunction(level, component)
    amp = np.sqrt(lam[component - 1]) * phi.values
    m = result.mean.values
    return GridCurve(result.grid, m + amp), GridCurve(result.grid, m - amp)


# --------------------------------------------------------------------------
# exports


def _writer(path):
    fh = Path(path).open("w", newline="", encoding="utf-8")
    return fh, csv.writer(fh, lineterminator="\n")


def write_eigenfunctions(result, path):
    """Long format ``level,component,t,value``, one block per component."""
    fh, out = _writer(path)
    with fh:
        out.writerow(["level", "component", "t", "value"])
        for level, phis in ((1, result.eigenfunctions1), (2, result.eigenfunctions2)):
            for k, phi in enumerate(phis, start=1):
                for t, v in zip(result.grid, phi):
                    out.writerow([level, k, fmt(t), fmt(v)])
    return Path(path)


def read_eigenfunctions(path):
    """``{(level, component): GridCurve}`` from :func:`write_eigenfunctions` output."""
    blocks = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            key = (int(r["level"]), int(r["component"]))
            blocks.setdefault(key, ([], []))
            blocks[key][0].append(float(r["t"]))
            blocks[key][1].append(float(r["value"]))
    return {k: GridCurve(np.array(t), np.array(v)) for k, (t, v) in blocks.items()}


def write_perturbations(result, path):
    """``level,component,sign,t,value`` for every retained component."""
    fh, out = _writer(path)
    with fh:
        out.writerow(["level", "component", "sign", "t", "value"])
        for level, m in ((1, result.K), (2, result.L)):
            for k in range(1, m + 1):
                plus, minus = perturbation_curves(result, level, k)
                for sign, curve in (("+", plus), ("-", minus)):
                    for t, v in zip(result.grid, curve.values):
                        out.writerow([level, k, sign, fmt(t), fmt(v)])
    return Path(path)


SCORE_COLUMNS = ("level", "cluster_id", "unit_id", "component", "score")


def write_scores(result, path):
    """Level-1 rows leave ``unit_id`` empty."""
    table = result.scores if hasattr(result, "scores") else result
    fh, out = _writer(path)
    with fh:
        out.writerow(SCORE_COLUMNS)
        for c, row in zip(table.cluster_ids, table.xi):
            for k, v in enumerate(row, start=1):
                out.writerow([1, c, "", k, fmt(v)])
        for c, u, row in zip(table.unit_cluster_ids, table.unit_ids, table.zeta):
            for k, v in enumerate(row, start=1):
                out.writerow([2, c, u, k, fmt(v)])
    return Path(path)


def read_scores(path):
    """Rebuild a :class:`ScoreTable` from :func:`write_scores` output."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(SCORE_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise MissingColumn(f"{path}: missing columns {sorted(missing)}")
        rows = list(reader)
    if not rows:
        raise EmptyDataset(f"{path} has no scores")
    l1, l2, owner = {}, {}, {}
    for r in rows:
        k, v = int(r["component"]), float(r["score"])
        if int(r["level"]) == 1:
            l1.setdefault(r["cluster_id"], {})[k] = v
        else:
            l2.setdefault(r["unit_id"], {})[k] = v
            owner[r["unit_id"]] = r["cluster_id"]

    def matrix(d, keys):
        m = max((max(v) for v in d.values()), default=0)
        return np.array([[d[key].get(k, 0.0) for k in range(1, m + 1)] for key in keys]).reshape(len(keys), m)

    clusters = list(dict.fromkeys([r["cluster_id"] for r in rows if int(r["level"]) == 1]))
    units = list(dict.fromkeys([r["unit_id"] for r in rows if int(r["level"]) == 2]))
    return ScoreTable(
        tuple(clusters),
        matrix(l1, clusters),
        tuple(units),
        tuple(owner[u] for u in units),
        matrix(l2, units),
    )
