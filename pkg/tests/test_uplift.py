import numpy as np
import pytest

from salesopt import datagen
from salesopt.datagen import BaselineSpec, EffectSpec, GenConfig, generate_population
from salesopt.uplift import (
    BaseSpec,
    InsufficientDataError,
    RidgeRegressor,
    decile_assignments,
    fit_base,
    fit_dr_learner,
    fit_s_learner,
    fit_t_learner,
    fit_x_learner,
    ite_rmse,
    propensity_fit,
    uplift_deciles,
)


def synthetic(n, seed=1, noise=0.0, share=0.5, effect=None, baseline=None, confounding=0.0):
    cfg = GenConfig(
        n_accounts=n,
        n_reps=2,
        seed=seed,
        noise_sd=noise,
        treatment_share=share,
        effect=effect or EffectSpec(),
        baseline=baseline or BaselineSpec(),
        confounding=confounding,
    )
    accounts, _ = generate_population(cfg)
    X = np.array([a.x for a in accounts])
    a = datagen.assign_treatment(accounts, cfg)
    y = datagen.simulate_outcomes(accounts, a, cfg)
    tau = np.array([acc.true_ite for acc in accounts])
    return X, y, a, tau


CONSTANT_EFFECT = EffectSpec(intercept=2.5, coefs=(0.0, 0.0, 0.0))


# --- base regressors -------------------------------------------------------


def test_exact_linear_fit():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(60, 3))
    y = 2.0 * X[:, 0]
    model = fit_base(X, y, BaseSpec(ridge_lambda=0.0))
    assert model.coefs[0] == pytest.approx(2.0, abs=1e-8)
    assert model.coefs[1] == pytest.approx(0.0, abs=1e-8)


def test_huge_lambda_shrinks_coefficients_to_zero():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(80, 4))
    y = X @ np.array([1.0, 2.0, -1.0, 0.5]) + 3.0
    model = fit_base(X, y, BaseSpec(ridge_lambda=1e12))
    assert np.max(np.abs(model.coefs)) < 1e-6


def test_ridge_matches_normal_equation_oracle():
    # Independent oracle: evaluate the penalized normal equations directly.
    rng = np.random.default_rng(2)
    X = rng.normal(size=(50, 4))
    y = rng.normal(size=50)
    lam = 1.0
    design = np.column_stack([np.ones(50), X])
    gram = design.T @ design + lam * np.diag([0.0, 1, 1, 1, 1])
    beta = np.linalg.solve(gram, design.T @ y)
    expected = design @ beta
    model = fit_base(X, y, BaseSpec(ridge_lambda=lam))
    assert np.max(np.abs(model.predict(X) - expected)) < 1e-6


def test_constant_column_never_crashes():
    X = np.column_stack([np.ones(30), np.arange(30.0)])
    y = np.arange(30.0)
    model = fit_base(X, y, BaseSpec(ridge_lambda=0.0))
    assert np.all(np.isfinite(model.predict(X)))


def test_stumps_fit_step_function():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(400, 2))
    y = np.where(X[:, 0] > 0, 4.0, 0.0)
    model = fit_base(X, y, BaseSpec(kind="stumps", rounds=100, learning_rate=0.3))
    rmse = np.sqrt(np.mean((model.predict(X) - y) ** 2))
    assert rmse < 0.5
    again = fit_base(X, y, BaseSpec(kind="stumps", rounds=100, learning_rate=0.3))
    assert np.array_equal(model.predict(X), again.predict(X))


# --- T-learner -------------------------------------------------------------


def test_t_learner_symmetric_arms_give_zero_ite():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(200, 3))
    y = X @ np.array([1.0, -1.0, 0.5])
    a = np.repeat([0, 1], 100)
    model = fit_t_learner(X, y, a)
    assert np.max(np.abs(model.predict_ite(X))) < 1e-8


def test_t_learner_recovers_linear_effect_exactly():
    X, y, a, tau = synthetic(4000, noise=0.0)
    model = fit_t_learner(X, y, a)
    assert np.max(np.abs(model.predict_ite(X) - tau)) < 1e-6


def test_t_learner_beats_zero_predictor_on_noisy_data():
    X, y, a, tau = synthetic(20_000, noise=2.0)
    model = fit_t_learner(X, y, a)
    mae = np.mean(np.abs(model.predict_ite(X) - tau))
    zero_mae = np.mean(np.abs(tau))
    assert mae < zero_mae


def test_t_learner_insufficient_arm_is_named():
    X = np.random.default_rng(5).normal(size=(50, 6))
    y = X[:, 0]
    a = np.zeros(50)
    a[:3] = 1  # 3 treated rows < 7 needed
    with pytest.raises(InsufficientDataError, match="treatment arm"):
        fit_t_learner(X, y, a)


# --- S-learner -------------------------------------------------------------


def test_s_learner_zeroed_treatment_coefficient_gives_zero_ite():
    X, y, a, _ = synthetic(2000, noise=1.0, effect=CONSTANT_EFFECT)
    model = fit_s_learner(X, y, a)
    stripped = RidgeRegressor(
        intercept=model.model.intercept,
        coefs=np.concatenate([model.model.coefs[:-1], [0.0]]),
    )
    zeroed = type(model)(model=stripped, n_features=model.n_features)
    assert np.max(np.abs(zeroed.predict_ite(X))) == 0.0


def test_s_learner_matches_t_learner_on_constant_effect():
    X, y, a, tau = synthetic(4000, noise=0.0, effect=CONSTANT_EFFECT)
    s = fit_s_learner(X, y, a)
    t = fit_t_learner(X, y, a)
    assert np.max(np.abs(s.predict_ite(X) - t.predict_ite(X))) < 1e-6
    assert np.max(np.abs(s.predict_ite(X) - tau)) < 1e-6


def test_s_learner_rejects_constant_treatment():
    X = np.random.default_rng(6).normal(size=(100, 3))
    with pytest.raises(InsufficientDataError):
        fit_s_learner(X, X[:, 0], np.ones(100))


# --- X-learner -------------------------------------------------------------


def test_x_learner_recovers_linear_effect_exactly():
    X, y, a, tau = synthetic(4000, noise=0.0)
    model = fit_x_learner(X, y, a)
    assert np.max(np.abs(model.predict_ite(X) - tau)) < 1e-6


def test_x_learner_fixed_blend_is_convex_combination():
    X, y, a, _ = synthetic(4000, noise=0.0, effect=CONSTANT_EFFECT)
    model = fit_x_learner(X, y, a, g=0.5)
    t0 = model.tau0.predict(X)
    t1 = model.tau1.predict(X)
    assert np.max(np.abs(t0 - t1)) < 1e-8  # noiseless constant effect: both stages agree
    assert np.max(np.abs(model.predict_ite(X) - t1)) < 1e-8


def test_x_learner_beats_t_learner_under_arm_imbalance():
    # 95/5 imbalance with a ridge penalty: the thin arm's outcome model
    # carries shrinkage bias on the large baseline, while the X-learner's
    # effect regression only shrinks the (small) effect coefficients.
    spec = BaseSpec(ridge_lambda=200.0)
    wins = []
    for seed in range(10):
        X, y, a, tau = synthetic(20_000, seed=seed, noise=2.0, share=0.05)
        x_rmse = ite_rmse(fit_x_learner(X, y, a, spec), X, tau)
        t_rmse = ite_rmse(fit_t_learner(X, y, a, spec), X, tau)
        wins.append((x_rmse, t_rmse))
    med_x = np.median([w[0] for w in wins])
    med_t = np.median([w[1] for w in wins])
    assert med_x <= med_t


# --- DR-learner ------------------------------------------------------------


def test_dr_pseudo_outcome_mean_is_unbiased_for_ate():
    X, y, a, tau = synthetic(20_000, noise=1.0)
    model = fit_dr_learner(X, y, a)
    e = model.propensity.predict_proba(X)
    from salesopt.uplift import dr_pseudo_outcomes

    phi = dr_pseudo_outcomes(X, y, a, model.f0, model.f1, e)
    se = phi.std() / np.sqrt(len(phi))
    assert abs(phi.mean() - tau.mean()) < 3 * se


def test_dr_pseudo_outcome_exact_with_perfect_nuisances():
    X, y, a, tau = synthetic(4000, noise=0.0)
    model = fit_dr_learner(X, y, a)
    assert np.max(np.abs(model.predict_ite(X) - tau)) < 1e-6


def test_dr_beats_s_learner_under_confounding():
    results = []
    for seed in range(10):
        X, y, a, tau = synthetic(20_000, seed=seed, noise=2.0, confounding=1.5)
        dr = ite_rmse(fit_dr_learner(X, y, a), X, tau)
        s = ite_rmse(fit_s_learner(X, y, a), X, tau)
        results.append((dr, s))
    assert np.median([r[0] for r in results]) <= np.median([r[1] for r in results])


# --- propensity ------------------------------------------------------------


def test_propensity_calibrated_under_randomization():
    X, _, a, _ = synthetic(5000, noise=1.0, share=0.3)
    model = propensity_fit(X, a)
    assert abs(model.predict_proba(X).mean() - a.mean()) < 0.02


def test_propensity_separable_auc():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(2000, 3))
    a = (X[:, 1] > 0).astype(float)
    e = propensity_fit(X, a).predict_proba(X)
    ranks = np.argsort(np.argsort(e)) + 1
    n1 = int(a.sum())
    n0 = len(a) - n1
    auc = (ranks[a == 1].sum() - n1 * (n1 + 1) / 2) / (n1 * n0)
    assert auc >= 0.95


def test_propensity_constant_features_returns_base_rate():
    X = np.zeros((200, 2))
    a = np.zeros(200)
    a[:80] = 1
    e = propensity_fit(X, a).predict_proba(X)
    assert np.allclose(e, 0.4, atol=1e-6)


def test_propensity_requires_both_classes():
    with pytest.raises(ValueError):
        propensity_fit(np.zeros((10, 1)), np.ones(10))


# --- deciles ---------------------------------------------------------------


def test_oracle_scores_give_strictly_increasing_deciles():
    X, y, a, tau = synthetic(
        20_000, noise=0.0, baseline=BaselineSpec(intercept=10.0, coefs=(0.0,) * 8)
    )
    rows = uplift_deciles(tau, y, a)
    uplifts = [r.uplift for r in rows]
    assert all(u is not None for u in uplifts)
    assert all(b > a_ for a_, b in zip(uplifts, uplifts[1:]))


def test_random_scores_show_no_decile_trend():
    # A single Spearman over 10 decile points has null sd ~1/3, so the
    # no-trend check averages the signed correlation over 10 score draws.
    from scipy.stats import spearmanr

    X, y, a, tau = synthetic(20_000, noise=1.0)
    rng = np.random.default_rng(9)
    rhos = []
    for _ in range(10):
        rows = uplift_deciles(rng.normal(size=len(y)), y, a)
        rho, _ = spearmanr([r.decile for r in rows], [r.uplift for r in rows])
        rhos.append(rho)
    assert abs(np.mean(rhos)) < 0.3


def test_equal_scores_split_by_input_order():
    y = np.arange(100.0)
    a = np.tile([0, 1], 50)
    rows = uplift_deciles(np.zeros(100), y, a)
    assert [r.n for r in rows] == [10] * 10
    # with scores tied, bins follow input order: decile k covers rows 10k..10k+9
    assert rows[0].uplift == pytest.approx(1.0)
    assert rows[9].uplift == pytest.approx(1.0)


def test_empty_arm_reported_as_undefined():
    y = np.arange(20.0)
    a = np.array([1, 1] + [0, 1] * 9, dtype=float)  # first bin is treated-only
    scores = np.arange(20.0)
    rows = uplift_deciles(scores, y, a)
    assert rows[0].uplift is None  # undefined, not silently dropped
    assert rows[0].n == 2
    assert rows[1].uplift is not None


# --- module-level properties ----------------------------------------------


def test_all_learners_agree_on_randomized_noiseless_data():
    X, y, a, tau = synthetic(5000, noise=0.0, effect=CONSTANT_EFFECT)
    for fitter in (fit_t_learner, fit_s_learner, fit_x_learner, fit_dr_learner):
        model = fitter(X, y, a)
        assert np.max(np.abs(model.predict_ite(X) - tau)) < 1e-6, model.learner_kind


def test_t_learner_row_order_invariance():
    X, y, a, _ = synthetic(2000, noise=1.0)
    model = fit_t_learner(X, y, a)
    perm = np.random.default_rng(10).permutation(len(y))
    shuffled = fit_t_learner(X[perm], y[perm], a[perm])
    assert np.max(np.abs(model.predict_ite(X) - shuffled.predict_ite(X))) < 1e-8


def test_t_learner_decile_membership_stable_under_bootstrap():
    X, y, a, _ = synthetic(20_000, noise=2.0)
    reference = decile_assignments(fit_t_learner(X, y, a).predict_ite(X))
    rng = np.random.default_rng(11)
    for _ in range(5):
        idx = rng.integers(0, len(y), len(y))
        refit = fit_t_learner(X[idx], y[idx], a[idx])
        bins = decile_assignments(refit.predict_ite(X))
        agreement = np.mean(np.abs(bins - reference) <= 1)
        assert agreement >= 0.8
