"""
Treated x control distance matrices.

Distances are rank-based Mahalanobis distances: covariates are replaced by
their ranks over the whole sample and the rank covariance is rescaled so each
diagonal entry equals the variance of untied ranks. A propensity caliper is
added as a graduated penalty rather than a hard exclusion.
"""
from dataclasses import dataclass
import os
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import rankdata

from aiida.common.log import AIIDA_LOGGER

from aiida_finebalance.exceptions import ValidationError

LOGGER = AIIDA_LOGGER.getChild("finebalance.distance")

PINV_RCOND = 1e-10
DEFAULT_CALIPER = 0.5
PENALTY_FACTOR = 1000.0


@dataclass(frozen=True)
class DistanceMatrix:
    """Distances between the treated and control subjects of one stratum."""

    stratum: int
    treated_ids: Tuple[str, ...]
    control_ids: Tuple[str, ...]
    d: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float)
        if d.shape != (len(self.treated_ids), len(self.control_ids)):
            raise ValidationError(
                f"Distance matrix of shape {d.shape} does not match "
                f"{len(self.treated_ids)} treated and {len(self.control_ids)} control IDs."
            )
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise ValidationError(f"Distances in stratum {self.stratum} must be finite and non-negative.")
        d.setflags(write=False)
        object.__setattr__(self, "d", d)

    @property
    def shape(self):
        return self.d.shape

    def transpose(self) -> "DistanceMatrix":
        """Swap the roles of treated and control subjects."""
        return DistanceMatrix(self.stratum, self.control_ids, self.treated_ids, self.d.T.copy())


def rank_transform(table, column_subset: Optional[Sequence[str]] = None) -> np.ndarray:
    """Replace each column by its ranks over all subjects, ties averaged.

    :param table: imputed covariate table
    :param column_subset: names of the columns to rank, default all
    :returns: ``(n_subjects, n_columns)`` matrix of ranks
    """
    names = list(column_subset) if column_subset else list(table.covariate_names)
    columns = np.column_stack([table.column(name) for name in names])
    if np.any(np.isnan(columns)):
        raise ValidationError("Covariates must be imputed before ranking.")
    return rankdata(columns, method="average", axis=0)


def rank_covariance_inverse(ranks: np.ndarray) -> np.ndarray:
    """Pseudoinverse of the rescaled rank covariance matrix.

    The sample covariance of the ranks is rescaled so that every diagonal
    entry equals ``(N**2 - 1) / 12``; columns without variance get a zero
    scale factor.
    """
    ranks = np.atleast_2d(np.asarray(ranks, dtype=float))
    n = ranks.shape[0]
    if n < 2:
        raise ValidationError("Rank-based Mahalanobis distance needs at least 2 subjects.")
    cov = np.atleast_2d(np.cov(ranks, rowvar=False, ddof=1))
    untied = (n * n - 1) / 12.0
    diagonal = np.diag(cov)
    scale = np.zeros_like(diagonal)
    positive = diagonal > 0
    scale[positive] = np.sqrt(untied / diagonal[positive])
    rescaled = cov * np.outer(scale, scale)
    return np.linalg.pinv(rescaled, rcond=PINV_RCOND, hermitian=True)


def rank_mahalanobis(ranks, treated_idx, control_idx, inverse=None,
                     ids: Optional[Sequence[str]] = None, stratum: int = 0) -> DistanceMatrix:
    """Rank-based Mahalanobis distances between treated and control rows.

    :param ranks: rank matrix of the full sample
    :param treated_idx: row indices of the treated subjects
    :param control_idx: row indices of the control subjects
    :param inverse: precomputed :func:`rank_covariance_inverse` of ``ranks``
    :param ids: subject IDs of the rows, default the row numbers
    :param stratum: label stored on the result
    """
    ranks = np.asarray(ranks, dtype=float)
    if ranks.ndim == 1:
        ranks = ranks[:, None]
    if inverse is None:
        inverse = rank_covariance_inverse(ranks)
    treated_idx = np.asarray(treated_idx, dtype=int)
    control_idx = np.asarray(control_idx, dtype=int)
    diff = ranks[treated_idx][:, None, :] - ranks[control_idx][None, :, :]
    squared = np.einsum("tcp,pq,tcq->tc", diff, inverse, diff)
    d = np.sqrt(np.maximum(squared, 0.0))
    if ids is None:
        ids = [str(i) for i in range(ranks.shape[0])]
    return DistanceMatrix(
        stratum=stratum,
        treated_ids=tuple(ids[i] for i in treated_idx),
        control_ids=tuple(ids[i] for i in control_idx),
        d=d,
    )


def default_penalty_scale(d: np.ndarray) -> float:
    """1000 times the median distance, or 1000 when the median is zero."""
    median = float(np.median(d)) if np.size(d) else 0.0
    return PENALTY_FACTOR * (median if median > 0 else 1.0)


def apply_caliper(dm: DistanceMatrix, treated_scores, control_scores, score_sd: float,
                  width_multiplier: float = DEFAULT_CALIPER,
                  penalty_scale: Optional[float] = None) -> DistanceMatrix:
    """Add a graduated propensity caliper penalty.

    With ``w = width_multiplier * score_sd``, every pair whose score gap
    exceeds ``w`` gets ``penalty_scale * (gap - w) / w`` added; pairs within
    the caliper are left unchanged.
    """
    if width_multiplier <= 0:
        raise ValidationError(f"Caliper multiplier must be positive, got {width_multiplier}.")
    width = width_multiplier * score_sd
    if width <= 0 or dm.d.size == 0:
        return dm
    if penalty_scale is None:
        penalty_scale = default_penalty_scale(dm.d)
    elif penalty_scale <= 0:
        raise ValidationError(f"Penalty scale must be positive, got {penalty_scale}.")
    gap = np.abs(np.asarray(treated_scores, dtype=float)[:, None]
                 - np.asarray(control_scores, dtype=float)[None, :])
    outside = gap > width
    d = np.array(dm.d)
    d[outside] += penalty_scale * (gap[outside] - width) / width
    if outside.any():
        LOGGER.debug(f"Stratum {dm.stratum}: {int(outside.sum())} of {outside.size} pairs outside the caliper")
    return DistanceMatrix(dm.stratum, dm.treated_ids, dm.control_ids, d)


class RankMahalanobisDistance:
    """Builds caliper-penalized rank Mahalanobis matrices per stratum.

    Ranks and the rank covariance are computed once, on the full sample.
    """

    def __init__(self, table, propensity, width_multiplier=DEFAULT_CALIPER, penalty_scale=None,
                 columns=None):
        self.ids = table.ids
        self.ranks = rank_transform(table, columns)
        self.inverse = rank_covariance_inverse(self.ranks)
        self.scores = np.asarray(propensity.scores)
        self.score_sd = propensity.score_sd
        self.width_multiplier = width_multiplier
        self.penalty_scale = penalty_scale

    def build(self, stratum, treated_idx, control_idx) -> DistanceMatrix:
        """Distance matrix for the given rows of one stratum."""
        dm = rank_mahalanobis(self.ranks, treated_idx, control_idx, inverse=self.inverse,
                              ids=self.ids, stratum=stratum)
        return apply_caliper(dm, self.scores[treated_idx], self.scores[control_idx], self.score_sd,
                             self.width_multiplier, self.penalty_scale)


def load_distance_file(path, delimiter: str = ",") -> pd.DataFrame:
    """Read a user supplied treated x control distance table.

    The first column holds treated IDs, the header row control IDs. Blank
    cells mark pairs that are never compared and load as NaN.
    """
    if not os.path.isfile(path):
        raise ValidationError(f"Distance file {path} does not exist.")
    try:
        raw = pd.read_csv(path, sep=delimiter, dtype=str, keep_default_na=False, index_col=0,
                          encoding="utf-8")
    except pd.errors.EmptyDataError as exc:
        raise ValidationError(f"Distance file {path} is empty.") from exc
    raw.index = [str(i).strip() for i in raw.index]
    raw.columns = [str(c).strip() for c in raw.columns]
    try:
        frame = raw.apply(lambda column: pd.to_numeric(column.str.strip().replace("", np.nan)))
    except ValueError as exc:
        raise ValidationError(f"Distance file {path} contains non-numeric entries.") from exc
    return frame.astype(float)


class FileDistance:
    """Serves distance matrices from a user supplied distance file.

    Distances are used as given; no caliper is applied.
    """

    def __init__(self, table, path, delimiter: str = ","):
        self.ids = table.ids
        self.path = path
        self.frame = load_distance_file(path, delimiter)

    def build(self, stratum, treated_idx, control_idx) -> DistanceMatrix:
        """Distance matrix for the given rows of one stratum."""
        treated_ids = [self.ids[i] for i in treated_idx]
        control_ids = [self.ids[i] for i in control_idx]
        missing = [i for i in treated_ids if i not in self.frame.index]
        missing += [c for c in control_ids if c not in self.frame.columns]
        if missing:
            raise ValidationError(f"Subjects {missing} are absent from distance file {self.path}.")
        block = self.frame.loc[list(treated_ids), list(control_ids)].to_numpy(dtype=float)
        if np.any(np.isnan(block)):
            raise ValidationError(
                f"Distance file {self.path} has blank cells for pairs within stratum {stratum}."
            )
        return DistanceMatrix(stratum, tuple(treated_ids), tuple(control_ids), block)
