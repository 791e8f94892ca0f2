"""Acceptance criteria 1-9.

Each ``test_criterion_N_*`` prints a PASS/FAIL line in the terminal summary,
with the measured quantities attached.
"""

import filecmp
import math
from collections import Counter

import numpy as np
import pytest
from scipy import stats

from oracles import coordinate_search, enumerated_loglik, micro_dataset
from rhl.agmodel import CovariateSpec, breslow_baseline, fit_ag, log_partial_likelihood
from rhl.cli import main
from rhl.compensator import CompensatorSet
from rhl.curves import GridCurve, inner
from rhl.mfpca import covariance_split, mfpca, truncate_by_pve
from rhl.predict import build_design, compare_models, fit_logistic, roc_auc
from rhl.simulate import basis_level1, basis_level2, integrate_intensity, simulate_cohort, thinning_sample
from test_predict import design, table_design

SEEDS = range(10)
COHORT_SEEDS = range(20)


def test_criterion_1_component_counts(study, record_property):
    default = study(0)
    true_counts = (default.mfpca_true.K, default.mfpca_true.L)
    recon = [(study(s).mfpca_reconstructed.K, study(s).mfpca_reconstructed.L) for s in SEEDS]
    seconds = max(study(s).seconds for s in SEEDS)
    k_mode = Counter(k for k, _ in recon).most_common(1)[0][0]
    l_mode = Counter(l for _, l in recon).most_common(1)[0][0]
    record_property(
        "detail",
        f"true {true_counts} at the default seed; reconstructed modal (K, L) = ({k_mode}, {l_mode}) "
        f"over {len(recon)} seeds, counts {dict(Counter(recon))}; slowest seed {seconds:.1f} s",
    )
    assert true_counts == (4, 2)
    assert all(k in {2, 3, 4} and l in {1, 2, 3} for k, l in recon)
    assert seconds <= 60


def test_criterion_2_eigenfunction_recovery(study, record_property):
    true_align = study(0).alignment["level1_true"]
    recon = np.array([study(s).alignment["level1_reconstructed"] for s in SEEDS])
    hits = int(np.sum(recon >= 0.75))
    oracle_hits = int(np.sum([study(s).alignment["level1_true"] >= 0.75 for s in SEEDS]))
    record_property(
        "detail",
        f"true-curve alignment {true_align:.3f} at the default seed; reconstructed >= 0.75 on "
        f"{hits}/{len(recon)} seeds (true curves themselves: {oracle_hits}/{len(recon)}); "
        f"reconstructed values {np.round(recon, 3).tolist()}",
    )
    assert true_align >= 0.90
    assert hits >= 8


def test_criterion_3_partial_likelihood_oracle(record_property):
    worst_coef, worst_grad = 0.0, 0.0
    for seed in range(20):
        p = 1 + seed % 5
        ds = micro_dataset(seed, p)
        assert len(ds) <= 50
        names = tuple(f"x{k}" for k in range(p))
        spec = CovariateSpec(x_names=names)
        fit = fit_ag(ds, spec)
        oracle = coordinate_search(lambda b: enumerated_loglik(ds, names, b), p)
        worst_coef = max(worst_coef, float(np.max(np.abs(fit.coefficients - oracle))))
        b = oracle + 0.3 * np.random.default_rng(seed).normal(size=p)
        _, grad, _ = log_partial_likelihood(ds, spec, b)
        h = 1e-5
        for k in range(p):
            e = np.zeros(p)
            e[k] = h
            fd = (enumerated_loglik(ds, names, b + e) - enumerated_loglik(ds, names, b - e)) / (2 * h)
            worst_grad = max(worst_grad, abs(grad[k] - fd) / max(1.0, abs(grad[k])))
    record_property("detail", f"max |beta - oracle| {worst_coef:.2e}; max gradient rel. error {worst_grad:.2e}")
    assert worst_coef <= 1e-3
    assert worst_grad <= 1e-5


def test_criterion_4_breslow_is_nelson_aalen(five_units, record_property):
    step = breslow_baseline(five_units, CovariateSpec(), fit_ag(five_units))
    # hand computation: 5 units always at risk; 2, 1, 2, 1 events
    expected = [2 / 5, 2 / 5 + 1 / 5, 2 / 5 + 1 / 5 + 2 / 5, 2 / 5 + 1 / 5 + 2 / 5 + 1 / 5]
    record_property("detail", f"cumulative hazard {step.cum_values.tolist()}")
    np.testing.assert_array_equal(step.jump_times, [0.2, 0.4, 0.6, 0.8])
    np.testing.assert_array_equal(step.cum_values, expected)


def test_criterion_5_thinning(record_property):
    grid = np.linspace(0.0, 1.0, 1001)
    flat = GridCurve(grid, np.full(grid.size, 100.0))
    counts = np.array([thinning_sample(flat, (5, r)).size for r in range(2000)])
    mean, fano = counts.mean(), counts.var(ddof=1) / counts.mean()

    ramp = GridCurve(grid, 200.0 * grid)
    Lam = integrate_intensity(ramp)
    gaps = []
    r = 0
    while sum(g.size for g in gaps) < 5000:
        t = thinning_sample(ramp, (6, r))
        gaps.append(np.diff(np.interp(np.r_[0.0, t], grid, Lam.values)))
        r += 1
    gaps = np.concatenate(gaps)
    ks = stats.kstest(gaps, "expon")
    record_property("detail", f"mean {mean:.3f}, Fano {fano:.3f}; KS p = {ks.pvalue:.3f} on {gaps.size} gaps")
    assert abs(mean - 100) <= 0.67
    assert 0.9 <= fano <= 1.1
    assert ks.pvalue > 0.01


def _exact_model(seed, I=20, J=4):
    grid = np.linspace(0.0, 1.0, 1001)
    rng = np.random.default_rng(seed)
    phi1, phi2 = basis_level1(grid)[:2], basis_level2(grid)[:2]
    xi = rng.normal(size=(I, 2)) * [1.0, 0.7]
    zeta = rng.normal(size=(I * J, 2)) * [0.8, 0.5]
    idx = np.repeat(np.arange(I), J)
    curves = 5 * grid + xi[idx] @ phi1 + zeta @ phi2
    return CompensatorSet(grid, curves, [f"u{k:03d}" for k in range(I * J)], [f"c{i:02d}" for i in idx])


def test_criterion_6_mfpca_algebra(study, record_property):
    gram_err, split_err = 0.0, 0.0
    for res in (study(0).mfpca_true, study(0).mfpca_reconstructed, mfpca(_exact_model(0))):
        for phis in (res.eigenfunctions1, res.eigenfunctions2):
            gram = inner(res.grid, phis, phis)
            gram_err = max(gram_err, float(np.max(np.abs(gram - np.eye(len(phis))))))
    for cs in (study(0).true, study(0).reconstructed, _exact_model(1)):
        centered = cs.curves - cs.curves.mean(axis=0)
        Kb, Kw = covariance_split(centered, cs.cluster_ids)
        total = centered.T @ centered / len(centered)
        split_err = max(split_err, float(np.max(np.abs(Kb + Kw - total))))
    exact = mfpca(_exact_model(2))
    count = truncate_by_pve(0.9 ** np.arange(4), 0.99)
    record_property(
        "detail",
        f"Gram error {gram_err:.1e}; split error {split_err:.1e}; residual fraction "
        f"{exact.residual_fraction:.2e} with (K, L) = ({exact.K}, {exact.L}); PVE count {count}",
    )
    assert gram_err <= 1e-8
    assert split_err <= 1e-10
    assert exact.residual_fraction <= 0.02
    assert count == 4


def test_criterion_7_logistic_oracle(record_property):
    a, b, c, d = 10, 5, 4, 12
    slope = fit_logistic(table_design(a, b, c, d)).coefficients[1]
    slope_err = abs(slope - math.log(a * d / (b * c)))
    rng = np.random.default_rng(0)
    X = rng.normal(size=(300, 3))
    y = (rng.uniform(size=300) < 1 / (1 + np.exp(-(X @ [0.5, -1.0, 0.2])))).astype(float)
    dm = design(X, y)
    rate_err = abs(fit_logistic(dm).predict_proba(dm).mean() - y.mean())
    auc = roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])
    record_property("detail", f"slope error {slope_err:.1e}; rate error {rate_err:.1e}; AUC {auc}")
    assert slope_err <= 1e-6
    assert rate_err <= 1e-8
    assert auc == pytest.approx(0.75, abs=1e-15)


def test_criterion_8_synthetic_cohort(study, record_property):
    inside = total = aic_wins = auc_wins = 0
    for seed in COHORT_SEEDS:
        res = study(seed).mfpca_reconstructed
        K, L = min(2, res.K), min(1, res.L)
        students, truth = simulate_cohort(res, K, L, students_per_unit=25, seed=seed)
        with_scores = build_design(students, res, K, L)
        without = build_design(students, None, 0, 0)
        without = without.select([c for c in without.columns if c in with_scores.columns])
        cmp = compare_models(with_scores, without)
        fit = cmp.with_scores
        for name, b, se in zip(fit.columns, fit.coefficients, fit.standard_errors):
            total += 1
            inside += abs(b - truth[name]) <= 3 * se
        aic_wins += cmp.delta_aic < 0
        auc_wins += cmp.delta_auc >= 0
    share = inside / total
    record_property(
        "detail",
        f"{inside}/{total} coefficients ({share:.1%}) within 3 SE; lower AIC with scores in "
        f"{aic_wins}/{len(COHORT_SEEDS)} seeds; AUC not lower in {auc_wins}/{len(COHORT_SEEDS)}",
    )
    assert share >= 0.90
    assert aic_wins >= 18


def test_criterion_9_determinism(tmp_path, record_property):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["pipeline", "--seed", "11", "--out", str(a)]) == 0
    assert main(["pipeline", "--seed", "11", "--out", str(b)]) == 0
    names = sorted(p.name for p in a.iterdir())
    match, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
    record_property("detail", f"{len(match)} files identical, {len(mismatch) + len(errors)} differ")
    assert names == sorted(p.name for p in b.iterdir())
    assert not mismatch and not errors
