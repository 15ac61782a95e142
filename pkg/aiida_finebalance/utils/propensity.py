"""
Propensity score model, entire numbers and the entire-number strata.

The entire number of a subject is the inverse odds ``(1 - e) / e`` of its
propensity score ``e``; it is the number of controls available per treated
subject at that covariate value and decides the ratio each treated subject
is matched at.
"""
from dataclasses import dataclass, field
import math
from typing import Dict, List, Tuple

import numpy as np
from scipy.special import expit

from aiida.common.log import AIIDA_LOGGER

from aiida_finebalance.exceptions import ConvergenceError, ValidationError

LOGGER = AIIDA_LOGGER.getChild("finebalance.propensity")

EPSILON = 1e-6
TOLERANCE = 1e-8
MAX_ITERATIONS = 100
INTERCEPT = "(Intercept)"
# lower bound on IRLS weights, keeps the working response finite
MIN_WEIGHT = 1e-12


@dataclass(frozen=True)
class PropensityResult:
    """Fitted (or supplied) propensity scores and their entire numbers."""

    coefficients: Dict[str, float]
    scores: np.ndarray
    entire_numbers: np.ndarray
    score_sd: float
    converged: bool = True
    iterations: int = 0
    warnings: Tuple[str, ...] = ()
    source: str = "fitted"

    def __post_init__(self):
        self.scores.setflags(write=False)
        self.entire_numbers.setflags(write=False)


@dataclass(frozen=True)
class StratumPartition:
    """Assignment of every subject to one entire-number stratum.

    ``intervals[k]`` is ``(low, high, low_closed)``; the upper end is always
    closed.
    """

    K: int
    assignment: np.ndarray
    intervals: Dict[int, Tuple[float, float, bool]] = field(default_factory=dict)

    def __post_init__(self):
        self.assignment.setflags(write=False)

    def members(self, k: int) -> np.ndarray:
        """Row indices of the subjects in stratum ``k``."""
        return np.flatnonzero(self.assignment == k)

    def sizes(self) -> Dict[int, int]:
        """Number of subjects per stratum, empty strata included."""
        return {k: int(np.sum(self.assignment == k)) for k in range(1, self.K + 1)}


def entire_number(score: float) -> float:
    """Inverse odds of a propensity score.

    :param score: propensity score strictly inside (0, 1)
    :returns: ``(1 - score) / score``
    :raises ValidationError: if the score is outside (0, 1)
    """
    if not 0.0 < score < 1.0:
        raise ValidationError(f"Propensity score {score} is outside (0, 1).")
    return (1.0 - score) / score


def ratio_rule(nu: float, beta: int, alpha: int = 1) -> int:
    """Number of controls for a treated subject with entire number ``nu``.

    ``max(alpha, min(floor(nu), beta))``; with ``alpha = 1`` this is the
    rule ``max(1, min(floor(nu), beta))``.
    """
    return max(alpha, min(math.floor(nu), beta))


def stratify(result: PropensityResult, K: int) -> StratumPartition:
    """Partition subjects into the strata ``S_1 .. S_K``.

    ``S_1 = (1/3, 1]``, ``S_k = (1/(k+2), 1/(k+1)]`` for ``2 <= k <= K-1`` and
    ``S_K = [0, 1/(K+1)]``. A score equal to ``1/(k+1)`` belongs to ``S_k``.
    """
    if K < 2:
        raise ValidationError(f"K must be at least 2, got {K}.")
    scores = np.asarray(result.scores, dtype=float)
    bounds = 1.0 / np.arange(3, K + 2)
    assignment = 1 + np.sum(scores[:, None] <= bounds[None, :], axis=1)

    intervals = {1: (1.0 / 3.0, 1.0, False)}
    for k in range(2, K):
        intervals[k] = (1.0 / (k + 2), 1.0 / (k + 1), False)
    intervals[K] = (0.0, 1.0 / (K + 1), True)

    partition = StratumPartition(K=K, assignment=assignment.astype(int), intervals=intervals)
    LOGGER.info(f"Stratum sizes for K={K}: {partition.sizes()}")
    return partition


def _result(coefficients, scores, warnings=(), converged=True, iterations=0, source="fitted"):
    scores = np.clip(np.asarray(scores, dtype=float), EPSILON, 1.0 - EPSILON)
    score_sd = float(np.std(scores, ddof=1)) if len(scores) > 1 else 0.0
    return PropensityResult(
        coefficients=coefficients,
        scores=scores,
        entire_numbers=(1.0 - scores) / scores,
        score_sd=score_sd,
        converged=converged,
        iterations=iterations,
        warnings=tuple(warnings),
        source=source,
    )


def from_scores(scores) -> PropensityResult:
    """Wrap externally supplied propensity scores.

    Scores must lie in [0, 1]; they are clamped to ``[1e-6, 1 - 1e-6]``.
    """
    scores = np.asarray(scores, dtype=float)
    if np.any(np.isnan(scores)) or np.any(scores < 0.0) or np.any(scores > 1.0):
        raise ValidationError("Supplied propensity scores must all lie in [0, 1].")
    LOGGER.info(f"Using {len(scores)} supplied propensity scores")
    return _result({}, scores, source="external")


def design_matrix(table) -> Tuple[np.ndarray, List[str], List[str]]:
    """Intercept plus every non-constant covariate column.

    :returns: the design matrix, the names of its columns and the names of
        the dropped constant columns
    """
    keep = [j for j in range(table.values.shape[1]) if np.ptp(table.values[:, j]) > 0.0]
    dropped = [name for j, name in enumerate(table.covariate_names) if j not in keep]
    X = np.column_stack([np.ones(len(table)), table.values[:, keep]])
    names = [INTERCEPT] + [table.covariate_names[j] for j in keep]
    return X, names, dropped


def fit_propensity(table, ridge: float = 0.0) -> PropensityResult:
    """Fit a logistic propensity model by iteratively reweighted least squares.

    Each Newton step solves the weighted least-squares problem, stacked with
    ``sqrt(ridge)`` rows for the penalized coefficients, with
    :func:`numpy.linalg.lstsq`.

    :param table: imputed covariate table
    :param ridge: non-negative ridge penalty on the non-intercept coefficients
    :returns: fitted result; scores clamped to ``[1e-6, 1 - 1e-6]``
    :raises ConvergenceError: when the fit does not converge and ``ridge`` is 0
    """
    if ridge < 0:
        raise ValidationError(f"Ridge penalty must be non-negative, got {ridge}.")
    if np.any(np.isnan(table.values)):
        raise ValidationError("Covariate table must be imputed before fitting the propensity model.")

    X, names, dropped = design_matrix(table)
    if dropped:
        LOGGER.info(f"Dropped constant columns from the propensity model: {dropped}")
    z = np.asarray(table.z, dtype=float)
    n_params = X.shape[1]
    penalty_rows = np.sqrt(ridge) * np.eye(n_params)[1:]

    beta = np.zeros(n_params)
    # intercept-only start at the log odds of treatment
    treated_fraction = z.mean()
    beta[0] = math.log(treated_fraction / (1.0 - treated_fraction))

    converged = False
    iteration = 0
    for iteration in range(1, MAX_ITERATIONS + 1):
        eta = X @ beta
        p = expit(eta)
        w = np.maximum(p * (1.0 - p), MIN_WEIGHT)
        root_w = np.sqrt(w)
        lhs = np.vstack([root_w[:, None] * X, penalty_rows])
        rhs = np.concatenate([root_w * eta + (z - p) / root_w, np.zeros(n_params - 1)])
        new_beta = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
        change = np.max(np.abs(new_beta - beta))
        beta = new_beta
        if not np.all(np.isfinite(beta)):
            break
        if change < TOLERANCE:
            converged = True
            break
    LOGGER.debug(f"IRLS stopped after {iteration} iterations (converged={converged})")

    warnings = []
    if not converged:
        if ridge == 0:
            raise ConvergenceError(
                f"Propensity model did not converge in {MAX_ITERATIONS} iterations; "
                "the covariates may separate the groups, retry with a positive ridge value."
            )
        warnings.append(f"Propensity model did not converge in {MAX_ITERATIONS} iterations.")

    raw_scores = expit(X @ beta)
    if ridge == 0 and np.any((raw_scores <= EPSILON) | (raw_scores >= 1.0 - EPSILON)):
        warnings.append("Some propensity scores reached the clamp bounds; the covariates may "
                        "separate treated from control subjects.")
    for message in warnings:
        LOGGER.warning(message)

    coefficients = {name: 0.0 for name in dropped}
    coefficients.update({name: float(value) for name, value in zip(names, beta)})
    return _result(coefficients, raw_scores, warnings=warnings, converged=converged,
                   iterations=iteration)
