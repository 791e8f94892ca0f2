"""Logistic regression of a student outcome on covariates and functional scores.

The linear predictor is

    logit(p) = gamma' w + sum_k xi_ik alpha1_k + sum_l zeta_ijl alpha2_l

where ``w`` holds the student covariates (intercept, one-hot categorical
levels against their reference level, admission score and first-semester
credits) and the scores come from the school (level 1) and course (level 2)
decomposition.
"""

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg, special, stats

from .dataio import CATEGORICAL_LEVELS, NUMERIC_FIELDS, fmt
from .errors import (
    ComponentOutOfRange,
    DegenerateOutcome,
    NotConverged,
    RankDeficient,
    SeparationWarning,
    UnmatchedGroupLabel,
)

INTERCEPT = "(Intercept)"
SEPARATION_BOUND = 30.0
_ROUNDING = 1e-12


def student_columns():
    """Covariate column names in design order, intercept first."""
    names = [INTERCEPT]
    for field_name, levels in CATEGORICAL_LEVELS.items():
        names += [f"{field_name}:{lvl}" for lvl in levels[1:]]
    return names + list(NUMERIC_FIELDS)


def score_columns(K, L):
    return [f"xi_{k}" for k in range(1, K + 1)] + [f"zeta_{l}" for l in range(1, L + 1)]


@dataclass(frozen=True)
class DesignMatrix:
    X: np.ndarray
    columns: tuple
    y: np.ndarray
    student_ids: tuple
    K: int = 0
    L: int = 0
    dropped: tuple = ()

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        y = np.array(self.y, dtype=float)
        if X.ndim != 2 or X.shape[0] != y.size or X.shape[1] != len(self.columns):
            raise ValueError("design shape does not match outcome and column names")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "student_ids", tuple(self.student_ids))

    def __len__(self):
        return self.y.size

    def subset(self, rows):
        rows = np.asarray(rows)
        return DesignMatrix(
            self.X[rows], self.columns, self.y[rows],
            tuple(self.student_ids[r] for r in rows), self.K, self.L, self.dropped,
        )

    def select(self, columns):
        """Keep ``columns`` (in this design's order)."""
        keep = [c for c in self.columns if c in set(columns)]
        idx = [self.columns.index(c) for c in keep]
        K = sum(c.startswith("xi_") for c in keep)
        L = sum(c.startswith("zeta_") for c in keep)
        return DesignMatrix(self.X[:, idx], keep, self.y, self.student_ids, K, L, self.dropped)


def _score_lookup(scores):
    table = scores.scores if hasattr(scores, "scores") else scores
    level1 = {str(c): table.xi[k] for k, c in enumerate(table.cluster_ids)}
    level2 = {str(u): table.zeta[k] for k, u in enumerate(table.unit_ids)}
    return level1, level2, table.xi.shape[1], table.zeta.shape[1]


def build_design(students, scores=None, K=2, L=1, drop_constant=True):
    """Assemble the design for ``students``.

    Columns: intercept, one-hot levels (reference level omitted) in the
    fixed field order, ``admission_score``, ``ects1sem``, then ``xi_1..K``
    matched on the school label and ``zeta_1..L`` matched on the course
    label.

    Parameters
    ----------
    students : PredictionDataset
    scores : MFPCAResult or ScoreTable, optional
        Required when ``K + L > 0``.
    K, L : int
        Leading components to include per level.
    drop_constant : bool
        Drop non-intercept columns that are constant over the students
        (e.g. an unobserved category level); their names are kept in
        ``dropped``.
    """
    if K < 0 or L < 0:
        raise ValueError("K and L must be >= 0")
    recs = students.records
    cols = {INTERCEPT: np.ones(len(recs))}
    for field_name, levels in CATEGORICAL_LEVELS.items():
        vals = [getattr(r, field_name) for r in recs]
        for lvl in levels[1:]:
            cols[f"{field_name}:{lvl}"] = np.array([v == lvl for v in vals], dtype=float)
    for name in NUMERIC_FIELDS:
        cols[name] = np.array([getattr(r, name) for r in recs], dtype=float)
    if K or L:
        if scores is None:
            raise ValueError("scores are required when K + L > 0")
        level1, level2, K_avail, L_avail = _score_lookup(scores)
        if K > K_avail or L > L_avail:
            raise ComponentOutOfRange(f"asked for K={K}, L={L}; scores have {K_avail}, {L_avail}")
        for r in recs:
            if K and r.school_id not in level1:
                raise UnmatchedGroupLabel(f"student {r.student_id}: school {r.school_id!r} has no scores")
            if L and r.course_id not in level2:
                raise UnmatchedGroupLabel(f"student {r.student_id}: course {r.course_id!r} has no scores")
        for k in range(K):
            cols[f"xi_{k + 1}"] = np.array([level1[r.school_id][k] for r in recs])
        for l in range(L):
            cols[f"zeta_{l + 1}"] = np.array([level2[r.course_id][l] for r in recs])
    dropped = ()
    if drop_constant:
        dropped = tuple(n for n, v in cols.items() if n != INTERCEPT and np.ptp(v) == 0)
        for n in dropped:
            del cols[n]
    K_kept = sum(n.startswith("xi_") for n in cols)
    L_kept = sum(n.startswith("zeta_") for n in cols)
    return DesignMatrix(
        np.column_stack(list(cols.values())),
        tuple(cols),
        students.outcome,
        tuple(r.student_id for r in recs),
        K_kept,
        L_kept,
        dropped,
    )


@dataclass(frozen=True)
class LogisticFit:
    columns: tuple
    coefficients: np.ndarray
    standard_errors: np.ndarray
    p_values: np.ndarray
    loglik: float
    aic: float
    converged: bool
    iterations: int
    gradient: np.ndarray
    separation: bool = False

    def linear_predictor(self, design):
        if tuple(design.columns) != self.columns:
            raise ValueError("design columns differ from the fitted columns")
        return design.X @ self.coefficients

    def predict_proba(self, design):
        return special.expit(self.linear_predictor(design))

    def table(self):
        """Rows of (parameter, estimate, std_error, p_value)."""
        return [
            (name, float(b), float(se), float(p))
            for name, b, se, p in zip(self.columns, self.coefficients, self.standard_errors, self.p_values)
        ]

    def report(self):
        return {
            "coefficients": [
                {"parameter": n, "estimate": b, "std_error": _finite(se), "p_value": _finite(p)}
                for n, b, se, p in self.table()
            ],
            "loglik": self.loglik,
            "aic": self.aic,
            "converged": self.converged,
            "iterations": self.iterations,
            "separation": self.separation,
        }


def _finite(x):
    return float(x) if math.isfinite(x) else None


def bernoulli_loglik(eta, y):
    """Sum of ``y * eta - log(1 + exp(eta))``, computed stably."""
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def fit_logistic(design, tol=1e-8, max_iter=100, max_halvings=30):
    """Maximum likelihood by Newton-Raphson (IRLS) from zero.

    Converged when the score's sup-norm is at most ``tol``.  Standard
    errors come from the inverse observed information and p-values are
    two-sided Wald tests.

    Quasi-separation is not an error: once a coefficient passes +-30 or the
    information becomes numerically singular, iteration stops, a
    :class:`SeparationWarning` is issued and the fit is returned with
    ``separation=True`` and ``converged=False``.

    Raises
    ------
    RankDeficient
        The design does not have full column rank.
    NotConverged
        ``max_iter`` iterations without meeting the tolerance.
    """
    X, y = design.X, design.y
    n, p = X.shape
    if p == 0:
        raise RankDeficient("design has no columns")
    if np.linalg.matrix_rank(X) < p:
        raise RankDeficient(f"design of {p} columns has rank {np.linalg.matrix_rank(X)}")
    beta = np.zeros(p)
    eta = X @ beta
    ll = bernoulli_loglik(eta, y)
    separation = False
    converged = False
    it = 0
    while True:
        mu = special.expit(eta)
        grad = X.T @ (y - mu)
        info = (X * (mu * (1 - mu))[:, None]).T @ X
        if np.max(np.abs(grad)) <= tol:
            converged = True
            break
        if it >= max_iter:
            raise NotConverged(f"no convergence after {max_iter} iterations")
        if np.max(np.abs(beta)) > SEPARATION_BOUND or _ill_conditioned(info):
            separation = True
            break
        it += 1
        try:
            step = linalg.cho_solve(linalg.cho_factor(info), grad)
        except linalg.LinAlgError:
            separation = True
            break
        for _ in range(max_halvings + 1):
            trial = beta + step
            ll_new = bernoulli_loglik(X @ trial, y)
            # near the optimum the change is below the rounding of ll itself
            if ll_new >= ll - _ROUNDING * max(1.0, abs(ll)):
                break
            step = step / 2
        else:
            separation = True
            break
        beta, ll = trial, ll_new
        eta = X @ beta
    if separation:
        warnings.warn(
            "possible separation: coefficients diverge or the information is singular",
            SeparationWarning,
            stacklevel=2,
        )
    try:
        cov = linalg.cho_solve(linalg.cho_factor(info), np.eye(p))
        se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except linalg.LinAlgError:
        se = np.full(p, np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, beta / se, np.nan)
    pvals = 2.0 * stats.norm.sf(np.abs(z))
    return LogisticFit(
        columns=design.columns,
        coefficients=beta,
        standard_errors=se,
        p_values=pvals,
        loglik=ll,
        aic=2.0 * p - 2.0 * ll,
        converged=converged,
        iterations=it,
        gradient=grad,
        separation=separation,
    )


def _ill_conditioned(info):
    return np.linalg.cond(info) > 1e14


def roc_auc(scores, outcomes):
    """Probability a random positive outscores a random negative, ties 1/2.

    Raises
    ------
    DegenerateOutcome
        Only one class is present.
    """
    scores = np.asarray(scores, dtype=float)
    y = np.asarray(outcomes).astype(int)
    n1 = int(np.sum(y == 1))
    n0 = int(np.sum(y == 0))
    if n1 == 0 or n0 == 0:
        raise DegenerateOutcome("AUC needs both outcome classes")
    ranks = stats.rankdata(scores)  # ties get their average rank
    return float((ranks[y == 1].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


@dataclass(frozen=True)
class ClassificationMetrics:
    auc: float
    accuracy: float
    sensitivity: float
    specificity: float
    precision: float
    threshold: float
    tp: int
    fp: int
    tn: int
    fn: int
    n: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "n", self.tp + self.fp + self.tn + self.fn)

    def to_dict(self):
        out = {}
        for k in ("auc", "accuracy", "sensitivity", "specificity", "precision", "threshold"):
            out[k] = _finite(getattr(self, k)) if getattr(self, k) is not None else None
        out["confusion"] = {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}
        out["n"] = self.n
        return out


def _ratio(a, b):
    return a / b if b else math.nan


def classification_metrics(probabilities, outcomes, threshold=0.5):
    """Confusion-matrix metrics at ``threshold`` (``p >= threshold`` is positive).

    Ratios with an empty denominator are NaN.  The AUC is ``None`` when one
    outcome class is absent.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    p = np.asarray(probabilities, dtype=float)
    y = np.asarray(outcomes).astype(int)
    pred = p >= threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    tn = int(np.sum(~pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    try:
        auc = roc_auc(p, y)
    except DegenerateOutcome:
        auc = None
    return ClassificationMetrics(
        auc=auc,
        accuracy=_ratio(tp + tn, y.size),
        sensitivity=_ratio(tp, tp + fn),
        specificity=_ratio(tn, tn + fp),
        precision=_ratio(tp, tp + fp),
        threshold=float(threshold),
        tp=tp, fp=fp, tn=tn, fn=fn,
    )


def evaluate(fit, design, threshold=0.5, strict=True):
    """Metrics of ``fit`` on ``design``.

    With ``strict`` a single-class outcome raises :class:`DegenerateOutcome`
    instead of reporting the AUC as ``None``.
    """
    if strict:
        y = design.y
        if y.size == 0 or np.all(y == y[0]):
            raise DegenerateOutcome("AUC undefined: only one outcome class present")
    return classification_metrics(fit.predict_proba(design), design.y, threshold)


def split_rows(n, fraction, seed):
    """Deterministic random split into (train, test) row indices."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("holdout fraction must lie in (0, 1)")
    perm = np.random.default_rng(np.random.SeedSequence(int(seed))).permutation(n)
    n_test = max(1, int(round(fraction * n)))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


@dataclass(frozen=True)
class ModelComparison:
    with_scores: LogisticFit
    without_scores: LogisticFit
    metrics_with: ClassificationMetrics
    metrics_without: ClassificationMetrics
    holdout_with: ClassificationMetrics = None
    holdout_without: ClassificationMetrics = None

    @property
    def delta_aic(self):
        """AIC(with) - AIC(without); negative favours the scores."""
        return self.with_scores.aic - self.without_scores.aic

    @property
    def delta_auc(self):
        a, b = self.metrics_with.auc, self.metrics_without.auc
        return None if a is None or b is None else a - b

    def report(self):
        out = {
            "with_scores": {"fit": self.with_scores.report(), "in_sample": self.metrics_with.to_dict()},
            "without_scores": {"fit": self.without_scores.report(), "in_sample": self.metrics_without.to_dict()},
            "delta_aic": self.delta_aic,
            "delta_auc": self.delta_auc,
        }
        if self.holdout_with is not None:
            out["with_scores"]["holdout"] = self.holdout_with.to_dict()
            out["without_scores"]["holdout"] = self.holdout_without.to_dict()
        return out


def compare_models(design_with, design_without, threshold=0.5, holdout_fraction=None, seed=0,
                   tol=1e-8):
    """Fit both nested designs on the same students and compare.

    In-sample metrics are always reported.  With ``holdout_fraction`` both
    models are refitted on a random training split and scored on the
    remaining rows as well.
    """
    if design_with.student_ids != design_without.student_ids:
        raise ValueError("designs must cover the same students in the same order")
    if not set(design_without.columns) <= set(design_with.columns):
        raise ValueError("the design without scores must be nested in the one with scores")
    fit_w = fit_logistic(design_with, tol=tol)
    fit_wo = fit_logistic(design_without, tol=tol)
    kw = {}
    if holdout_fraction:
        train, test = split_rows(len(design_with), holdout_fraction, seed)
        for key, d in (("holdout_with", design_with), ("holdout_without", design_without)):
            f = fit_logistic(d.subset(train), tol=tol)
            kw[key] = classification_metrics(f.predict_proba(d.subset(test)), d.y[test], threshold)
    return ModelComparison(
        with_scores=fit_w,
        without_scores=fit_wo,
        metrics_with=classification_metrics(fit_w.predict_proba(design_with), design_with.y, threshold),
        metrics_without=classification_metrics(fit_wo.predict_proba(design_without), design_without.y, threshold),
        **kw,
    )


def write_report_csv(fit, path):
    """Coefficient table: ``parameter,estimate,std_error,p_value``."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["parameter", "estimate", "std_error", "p_value"])
        for name, b, se, p in fit.table():
            out.writerow([name, fmt(b), fmt(se), fmt(p)])
    return path
