"""Andersen-Gill proportional-intensity model for recurrent events.

The intensity of unit ``j`` in cluster ``i`` is
``Y_ij(t) lambda_0(t) exp(beta' x_ij(t) + theta' z_ij(t))``; ``beta`` and
``theta`` are estimated by maximising the Breslow partial likelihood with
Newton's method, and ``Lambda_0`` by the Breslow estimator.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats

from .curves import GridCurve, MonotoneCubic, StepFunction
from .errors import (
    NoEvents,
    NotConverged,
    NumericalOverflow,
    SingularInformation,
    UnitMismatch,
)
from .kernels import risk_set_sweep

MAX_ETA = 700.0


@dataclass(frozen=True)
class CovariateSpec:
    """Columns entering the ``beta`` (x) and ``theta`` (z) terms."""

    x_names: tuple = ()
    z_names: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "x_names", tuple(self.x_names))
        object.__setattr__(self, "z_names", tuple(self.z_names))
        overlap = set(self.x_names) & set(self.z_names)
        if overlap:
            raise ValueError(f"columns in both x and z: {sorted(overlap)}")

    @property
    def names(self):
        return self.x_names + self.z_names

    def design(self, dataset):
        """Row-wise design matrix, values taken at each row's start."""
        if not self.names:
            return np.zeros((len(dataset), 0))
        return np.column_stack([dataset.column(n) for n in self.names])


@dataclass(frozen=True)
class AGFit:
    beta: np.ndarray
    theta: np.ndarray
    covariance: np.ndarray
    loglik: float
    iterations: int
    converged: bool
    spec: CovariateSpec = field(default_factory=CovariateSpec)
    gradient: np.ndarray = None
    tie_method: str = "breslow"

    @property
    def coefficients(self):
        return np.concatenate([self.beta, self.theta])

    @property
    def standard_errors(self):
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    @property
    def p_values(self):
        se = self.standard_errors
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(se > 0, self.coefficients / se, np.nan)
        return 2.0 * stats.norm.sf(np.abs(z))

    def linear_predictor(self, dataset):
        return self.spec.design(dataset) @ self.coefficients

    def report(self):
        """Plain-dict fit summary (JSON-serialisable)."""
        return {
            "tie_method": self.tie_method,
            "loglik": self.loglik,
            "iterations": self.iterations,
            "converged": self.converged,
            "coefficients": [
                {
                    "name": name,
                    "term": "x" if name in self.spec.x_names else "z",
                    "estimate": float(b),
                    "std_error": float(se),
                    "p_value": float(p),
                }
                for name, b, se, p in zip(
                    self.spec.names, self.coefficients, self.standard_errors, self.p_values
                )
            ],
        }


def _centered_design(dataset, spec):
    X = spec.design(dataset)
    # location shifts cancel in every risk-set ratio
    return X - X.mean(axis=0) if X.shape[1] else X


def _sweep(dataset, X, coeffs):
    eta = X @ coeffs if X.shape[1] else np.zeros(len(dataset))
    if eta.size and np.max(np.abs(eta)) > MAX_ETA:
        raise NumericalOverflow(
            f"|linear predictor| reaches {np.max(np.abs(eta)):.3g}; rescale the covariates"
        )
    shift = float(eta.max()) if eta.size else 0.0
    out = risk_set_sweep(
        np.ascontiguousarray(dataset.start),
        np.ascontiguousarray(dataset.stop),
        np.ascontiguousarray(dataset.status, dtype=np.int64),
        np.ascontiguousarray(X, dtype=float),
        np.ascontiguousarray(eta - shift),
    )
    return out, shift


def log_partial_likelihood(dataset, spec, coeffs):
    """Breslow log partial likelihood with its gradient and hessian.

    The risk set at an event time ``t`` is every row with
    ``start < t <= stop``; rows carry covariate values measured at their
    start.

    Returns
    -------
    value : float
    gradient : ndarray, shape (p,)
    hessian : ndarray, shape (p, p)
    """
    coeffs = np.asarray(coeffs, dtype=float).reshape(-1)
    if coeffs.size != len(spec.names):
        raise ValueError(f"expected {len(spec.names)} coefficients, got {coeffs.size}")
    if not np.any(dataset.status == 1):
        raise NoEvents("dataset has no events")
    X = _centered_design(dataset, spec)
    (value, grad, hess, *_), _shift = _sweep(dataset, X, coeffs)
    # the sweep saw eta - shift; the partial likelihood is shift-invariant
    return float(value), np.asarray(grad), np.asarray(hess)


def fit_ag(dataset, spec=None, tol=1e-8, max_iter=50, max_halvings=30):
    """Fit the model by Newton-Raphson with step halving from zero.

    Stops when the gradient sup-norm is at most ``tol`` or the relative
    change of the log partial likelihood drops below 1e-12.

    Raises
    ------
    NotConverged
        ``max_iter`` Newton steps without meeting either criterion.
    SingularInformation
        The observed information is not positive definite, typically a
        column that is constant within every risk set or a monotone
        likelihood (separation).
    """
    spec = spec or CovariateSpec()
    for name in spec.names:
        dataset.column(name)
    if not np.any(dataset.status == 1):
        raise NoEvents("dataset has no events")
    X = _centered_design(dataset, spec)
    p = X.shape[1]

    def evaluate(b):
        (value, grad, hess, *_), _ = _sweep(dataset, X, b)
        return float(value), np.asarray(grad), np.asarray(hess)

    coeffs = np.zeros(p)
    ll, grad, hess = evaluate(coeffs)
    converged = p == 0 or np.max(np.abs(grad)) <= tol
    iterations = 0
    while not converged:
        if iterations >= max_iter:
            raise NotConverged(
                f"no convergence after {max_iter} iterations (|grad| = {np.max(np.abs(grad)):.3g})"
            )
        iterations += 1
        step = _newton_step(hess, grad, spec)
        for _ in range(max_halvings + 1):
            trial = coeffs + step
            try:
                ll_new, grad_new, hess_new = evaluate(trial)
            except NumericalOverflow:
                ll_new = -math.inf
            # tolerate rounding-level decreases near the optimum
            if math.isfinite(ll_new) and ll_new >= ll - 1e-12 * max(1.0, abs(ll)):
                break
            step = step / 2
        else:
            raise NotConverged("step halving could not increase the partial likelihood")
        rel = abs(ll_new - ll) / max(abs(ll_new), 1.0)
        coeffs, ll, grad, hess = trial, ll_new, grad_new, hess_new
        converged = np.max(np.abs(grad)) <= tol or rel <= 1e-12

    if p:
        info = -hess
        try:
            cov = linalg.cho_solve(linalg.cho_factor(info), np.eye(p))
        except linalg.LinAlgError:
            raise SingularInformation(_separation_message(spec, hess)) from None
        cov = 0.5 * (cov + cov.T)
    else:
        cov = np.zeros((0, 0))
    q = len(spec.x_names)
    return AGFit(
        beta=coeffs[:q],
        theta=coeffs[q:],
        covariance=cov,
        loglik=ll,
        iterations=iterations,
        converged=True,
        spec=spec,
        gradient=grad,
    )


def _newton_step(hess, grad, spec):
    try:
        return linalg.cho_solve(linalg.cho_factor(-hess), grad)
    except linalg.LinAlgError:
        raise SingularInformation(_separation_message(spec, hess)) from None


def _separation_message(spec, hess):
    diag = np.diag(-hess)
    flat = [n for n, d in zip(spec.names, diag) if d <= 1e-12 * max(1.0, np.max(np.abs(diag)))]
    msg = "observed information is not positive definite"
    if flat:
        msg += f"; no within-risk-set variation in {flat}"
    return msg + " (possible monotone likelihood / separation)"


def breslow_baseline(dataset, spec, fit):
    """Breslow estimate of the baseline cumulative hazard.

    Jumps by ``d_k / sum_{risk set} exp(eta_hat)`` at each distinct event time;
    the baseline refers to covariate value zero.
    """
    if not np.any(dataset.status == 1):
        return StepFunction(np.empty(0), np.empty(0))
    X = spec.design(dataset)
    (_, _, _, times, counts, s0), shift = _sweep(dataset, X, fit.coefficients)
    jumps = np.asarray(counts) / (np.asarray(s0) * math.exp(shift))
    return StepFunction(np.asarray(times), np.cumsum(jumps))


def smooth_baseline(step, grid):
    """Monotone C1 curve through ``(0, 0)`` and every ``(t_k, Lambda_0(t_k))``.

    Evaluated on ``grid``; constant after the last jump.
    """
    grid = np.asarray(grid, dtype=float)
    if grid[0] > 0.0:
        raise ValueError("grid must start at or before 0")
    if step.jump_times.size == 0:
        return GridCurve(grid, np.zeros_like(grid), cumulative=True)
    knots = np.concatenate([[0.0], step.jump_times])
    vals = np.concatenate([[0.0], step.cum_values])
    if step.jump_times[0] == 0.0:
        knots, vals = knots[1:], vals[1:]
    values = MonotoneCubic(knots, vals)(grid)
    values[grid <= 0.0] = 0.0
    # rounding guard: the interpolant is monotone up to last-ulp noise
    values = np.maximum.accumulate(values)
    return GridCurve(grid, values, cumulative=True)


def martingale_residuals(dataset, compensators):
    """``N_ij(T) - Lambda_hat_ij(T)`` per unit, in the compensator set's order."""
    counts = dataset.event_counts()
    if set(counts) != set(compensators.unit_ids):
        raise UnitMismatch("dataset and compensators cover different units")
    final = compensators.curves[:, -1]
    return np.array([counts[u] for u in compensators.unit_ids], dtype=float) - final
