"""IRLS fitting: exact numerics, family contracts, inference tables."""

import numpy as np
import pytest

from funsens import ConfigError, Family, FitError, fit_glm, realize_design, parse_formula
from funsens.glm import coefficient_tests, deviance_residuals


def gaussian_data(seed=0, n=200):
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(n), rng.normal(size=n), rng.uniform(-2, 2, n)])
    beta = np.array([1.0, -2.0, 0.5])
    y = X @ beta + 0.3 * rng.normal(size=n)
    return X, y


def test_irls_equals_ols_to_1e10():
    X, y = gaussian_data()
    fit = fit_glm(X, y, Family.gaussian_identity())
    ols, *_ = np.linalg.lstsq(X, y, rcond=None)
    assert np.max(np.abs(fit.coefficients - ols) / np.abs(ols)) < 1e-10
    assert fit.n_iter <= 2


def test_noiseless_linear_exact():
    x = np.linspace(0, 1, 50)
    X = np.column_stack([np.ones(50), x])
    fit = fit_glm(X, 2.0 + 3.0 * x, Family.gaussian_identity())
    assert fit.coefficients == pytest.approx([2.0, 3.0], abs=1e-12)
    assert np.all(fit.p_values < 1e-30)
    assert np.all(deviance_residuals(fit) == pytest.approx(0.0, abs=1e-10))


def test_gamma_intercept_is_log_mean():
    y = np.array([0.5, 1.5, 2.5, 4.0, 9.5])
    fit = fit_glm(np.ones((5, 1)), y, Family.gamma_log())
    assert fit.coefficients[0] == pytest.approx(np.log(y.mean()), abs=1e-10)


def test_gamma_requires_positive_response():
    with pytest.raises(ConfigError, match="strictly positive"):
        fit_glm(np.ones((3, 1)), np.array([1.0, 0.0, 2.0]), Family.gamma_log())


def test_unknown_family_rejected():
    with pytest.raises(ConfigError, match="unknown family"):
        Family("poisson_log")


def test_deviance_trace_monotone():
    rng = np.random.default_rng(1)
    n = 300
    x = rng.uniform(0, 2, n)
    mu = np.exp(0.5 + 0.8 * x)
    y = rng.gamma(shape=2.0, scale=mu / 2.0)
    fit = fit_glm(np.column_stack([np.ones(n), x]), y, Family.gamma_log())
    trace = np.asarray(fit.deviance_trace)
    assert trace.size >= 2
    # trace[0] is the deviance at initialization; IRLS iterates never increase it
    iterates = trace[1:]
    assert np.all(np.diff(iterates) <= 1e-12 * (1.0 + iterates[:-1]))


def test_nested_model_deviance():
    X, y = gaussian_data(seed=2)
    small = fit_glm(X[:, :2], y, Family.gaussian_identity())
    big = fit_glm(X, y, Family.gaussian_identity())
    assert big.deviance <= small.deviance + 1e-12


def test_rescaling_covariate_invariance():
    X, y = gaussian_data(seed=3)
    fit = fit_glm(X, y, Family.gaussian_identity())
    scaled = X.copy()
    scaled[:, 1] *= 10.0
    refit = fit_glm(scaled, y, Family.gaussian_identity())
    assert refit.coefficients[1] == pytest.approx(fit.coefficients[1] / 10.0, rel=1e-10)
    assert np.max(np.abs(refit.mu - fit.mu)) < 1e-10


def test_rank_deficiency_names_columns():
    X, y = gaussian_data(seed=4)
    X = np.column_stack([X, X[:, 1]])
    with pytest.raises(FitError, match="collinear") as err:
        fit_glm(X, y, Family.gaussian_identity(), column_names=["c0", "c1", "c2", "dup"])
    assert "dup" in str(err.value)


def test_weighted_fit_matches_weighted_ols():
    X, y = gaussian_data(seed=5)
    w = np.random.default_rng(5).uniform(0.5, 2.0, y.size)
    fit = fit_glm(X, y, Family.gaussian_identity(), weights=w)
    sw = np.sqrt(w)
    ols, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    assert fit.coefficients == pytest.approx(ols, rel=1e-10)
    assert np.array_equal(fit.prior_weights, w)


def test_coefficient_tests_rows():
    X, y = gaussian_data(seed=6)
    fit = fit_glm(X, y, Family.gaussian_identity(), column_names=["(Intercept)", "a", "b"])
    rows = coefficient_tests(fit)
    assert [r["term"] for r in rows] == ["(Intercept)", "a", "b"]
    for r in rows:
        assert set(r) == {"term", "estimate", "std_error", "t_value", "p_value"}
        assert r["std_error"] > 0
        assert 0.0 <= r["p_value"] <= 1.0
        assert r["t_value"] == pytest.approx(r["estimate"] / r["std_error"])


def test_pure_noise_covariate_p_value_null():
    hits = 0
    for seed in range(40):
        rng = np.random.default_rng(seed)
        X = np.column_stack([np.ones(100), rng.normal(size=100)])
        y = rng.normal(size=100)  # unrelated to the covariate
        fit = fit_glm(X, y, Family.gaussian_identity())
        if fit.p_values[1] > 0.05:
            hits += 1
    assert hits >= 33  # ~95% of seeds, with binomial slack


def test_deviance_residuals_identity():
    X, y = gaussian_data(seed=7)
    w = np.random.default_rng(7).uniform(0.5, 2.0, y.size)
    fit = fit_glm(X, y, Family.gaussian_identity(), weights=w)
    expected = (y - fit.mu) * np.sqrt(w)
    assert deviance_residuals(fit) == pytest.approx(expected, abs=1e-12)
    d = fit.family.unit_deviance(y, fit.mu) * w
    assert d.sum() == pytest.approx(fit.deviance, rel=1e-8)


def test_mean_component_table_shape(learning_data):
    design = realize_design(
        parse_formula("Y ~ X1 + I(X2^2) + I(X1^3) + I(X2^4)"), learning_data
    )
    fit = fit_glm(
        design.matrix,
        design.response,
        Family.gaussian_identity(),
        column_names=design.column_names,
    )
    beta = dict(zip(fit.column_names, fit.coefficients))
    assert 1.0 < beta["(Intercept)"] < 3.0
    assert 3.5 < beta["X1"] < 6.0
    assert 1.2 < beta["I(X2^2)"] < 2.8
    assert -0.8 < beta["I(X1^3)"] < -0.3
    assert -0.45 < beta["I(X2^4)"] < -0.1
    # every term overwhelmingly significant (printed tables show < 2e-16;
    # the intercept's exact p drifts with the sample)
    assert np.all(fit.p_values < 1e-12)
    assert 0.55 < fit.d_expl < 0.85


def test_predict_applies_inverse_link():
    y = np.array([1.0, 2.0, 4.0])
    fit = fit_glm(np.ones((3, 1)), y, Family.gamma_log())
    assert fit.predict([[1.0]]) == pytest.approx([y.mean()], rel=1e-8)
    with pytest.raises(ConfigError, match="columns"):
        fit.predict([[1.0, 2.0]])
