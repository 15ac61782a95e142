""" Tests for the propensity model, entire numbers and strata

"""
import numpy as np
import pytest
from scipy.special import expit

from aiida_finebalance.exceptions import ConvergenceError, ValidationError
from aiida_finebalance.utils.ingest import CovariateKind, CovariateTable
from aiida_finebalance.utils.propensity import (
    EPSILON,
    INTERCEPT,
    entire_number,
    fit_propensity,
    from_scores,
    ratio_rule,
    stratify,
)


def make_table(x, z):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    names = tuple(f"x{j + 1}" for j in range(x.shape[1]))
    return CovariateTable(
        ids=tuple(f"s{i}" for i in range(len(z))),
        z=np.asarray(z, dtype=int),
        values=x,
        missing_mask=np.zeros(x.shape, dtype=bool),
        covariate_names=names,
        covariate_kinds=(CovariateKind.CONTINUOUS,) * x.shape[1],
        sources=names,
        imputed=True,
    )


def simulated_table(seed=7, n=400):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 2))
    z = (rng.random(n) < expit(-1.0 + 0.8 * x[:, 0] - 0.5 * x[:, 1])).astype(int)
    return make_table(x, z)


def test_entire_number():
    """A score of 1/4 gives three controls per treated subject."""
    assert entire_number(0.25) == pytest.approx(3.0)
    assert entire_number(0.5) == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        entire_number(0.0)


def test_ratio_rule():
    assert ratio_rule(3.0, 5) == 3
    assert ratio_rule(0.4, 5) == 1
    assert ratio_rule(11.9, 5) == 5
    assert ratio_rule(0.4, 5, alpha=2) == 2
    for nu in np.linspace(0.01, 12, 97):
        assert ratio_rule(nu, 4) == max(1, min(int(np.floor(nu)), 4))


def test_stratify_small_example():
    """Scores 1/2, 1/3 and 1/4 fall into strata 1, 2 and 3 for K = 3."""
    partition = stratify(from_scores([0.5, 0.3333333333, 0.25, 0.9, 1 / 3]), 3)
    assert list(partition.assignment) == [1, 2, 3, 1, 2]
    assert partition.sizes() == {1: 2, 2: 2, 3: 1}
    assert partition.intervals[3] == (0.0, 0.25, True)


@pytest.mark.parametrize("K", range(2, 11))
def test_stratify_partitions_unit_interval(K):
    """Every score lands in one stratum; middle strata match the entire-number interval."""
    scores = np.linspace(EPSILON, 1 - EPSILON, 100_000)
    result = from_scores(scores)
    assignment = stratify(result, K).assignment
    assert set(np.unique(assignment)) <= set(range(1, K + 1))
    nu = result.entire_numbers
    for k in range(2, K):
        inside = assignment == k
        assert np.all((nu[inside] >= k - 1e-9) & (nu[inside] < k + 1 + 1e-9))
        interior = (nu > k + 1e-9) & (nu < k + 1 - 1e-9)
        assert np.all(assignment[interior] == k)
    assert np.all(assignment[nu < 2 - 1e-9] == 1)
    assert np.all(assignment[nu > K + 1e-9] == K)


def test_stratify_rejects_small_K():
    with pytest.raises(ValidationError):
        stratify(from_scores([0.5]), 1)


def test_from_scores_clamps():
    result = from_scores([0.0, 1.0, 0.5])
    assert result.scores[0] == EPSILON
    assert result.scores[1] == 1 - EPSILON
    assert result.source == "external"
    with pytest.raises(ValidationError):
        from_scores([0.2, 1.5])


def penalized_loglik(X, z, beta, ridge):
    eta = X @ beta
    return np.sum(z * eta - np.logaddexp(0.0, eta)) - ridge / 2 * np.sum(beta[1:] ** 2)


def numeric_gradient(table, coefficients, ridge, step=1e-5):
    """Central differences of the penalized log-likelihood at the fitted coefficients."""
    X = np.column_stack([np.ones(len(table)), table.values])
    beta = np.array([coefficients[name] for name in (INTERCEPT,) + table.covariate_names])
    z = np.asarray(table.z, dtype=float)
    gradient = np.zeros_like(beta)
    for j in range(len(beta)):
        shift = np.zeros_like(beta)
        shift[j] = step
        upper = penalized_loglik(X, z, beta + shift, ridge)
        lower = penalized_loglik(X, z, beta - shift, ridge)
        gradient[j] = (upper - lower) / (2 * step)
    return gradient


def test_fit_propensity_stationary():
    """The penalized log-likelihood is flat at the fitted coefficients."""
    table = simulated_table()
    result = fit_propensity(table)
    assert result.converged
    assert set(result.coefficients) == {INTERCEPT, "x1", "x2"}
    assert result.coefficients["x1"] > 0 > result.coefficients["x2"]
    np.testing.assert_allclose(numeric_gradient(table, result.coefficients, 0.0), 0.0, atol=1e-4)
    np.testing.assert_allclose(result.entire_numbers, (1 - result.scores) / result.scores)


def test_fit_propensity_ridge_shrinks():
    table = simulated_table()
    plain = fit_propensity(table)
    ridged = fit_propensity(table, ridge=50.0)
    assert abs(ridged.coefficients["x1"]) < abs(plain.coefficients["x1"])
    np.testing.assert_allclose(numeric_gradient(table, ridged.coefficients, 50.0), 0.0, atol=1e-4)


def test_fit_propensity_drops_constant_column():
    table = simulated_table()
    values = np.column_stack([table.values, np.ones(len(table))])
    wide = make_table(values, table.z)
    result = fit_propensity(wide)
    assert result.coefficients["x3"] == 0.0
    assert result.coefficients["x1"] == pytest.approx(fit_propensity(table).coefficients["x1"])


def test_separation():
    """Perfectly separated groups fail without a ridge and warn with one."""
    x = np.arange(20, dtype=float)
    z = (x >= 10).astype(int)
    table = make_table(x, z)
    with pytest.raises(ConvergenceError, match="ridge"):
        fit_propensity(table)
    result = fit_propensity(table, ridge=1.0)
    assert result.converged
    assert np.all((result.scores >= EPSILON) & (result.scores <= 1 - EPSILON))


def test_separation_small_ridge():
    """A ridge of 0.01 is enough for a finite fit of separated groups."""
    table = make_table([-1.5, -1.0, -0.5, 0.5, 1.0, 1.5], [0, 0, 0, 1, 1, 1])
    result = fit_propensity(table, ridge=0.01)
    assert result.converged
    assert all(np.isfinite(value) for value in result.coefficients.values())
    assert result.coefficients["x1"] > 0
    assert np.all(result.scores[:3] < 0.5) and np.all(result.scores[3:] > 0.5)
    np.testing.assert_allclose(numeric_gradient(table, result.coefficients, 0.01), 0.0, atol=1e-4)


def test_binary_covariate_closed_form():
    """With one binary covariate the fitted scores are the treated fractions of its two groups."""
    x = [0, 0, 0, 0, 1, 1, 1, 1]
    z = [1, 1, 1, 0, 1, 0, 0, 0]
    result = fit_propensity(make_table(x, z))
    assert result.converged
    np.testing.assert_allclose(result.scores, [0.75] * 4 + [0.25] * 4, atol=1e-6)
    assert result.coefficients[INTERCEPT] == pytest.approx(np.log(3), abs=1e-6)
    assert result.coefficients["x1"] == pytest.approx(-2 * np.log(3), abs=1e-6)


def test_constant_covariates():
    """Only the intercept is fitted and every score is the treated fraction."""
    x = np.full((10, 2), 2.0)
    z = [1, 1, 1, 0, 0, 0, 0, 0, 0, 0]
    result = fit_propensity(make_table(x, z))
    assert result.converged
    np.testing.assert_allclose(result.scores, 0.3, atol=1e-9)
    assert result.coefficients["x1"] == result.coefficients["x2"] == 0.0
