"""
Covariate balance diagnostics for unmatched and matched samples.
"""
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from aiida.common.log import AIIDA_LOGGER

from aiida_finebalance.exceptions import ValidationError

LOGGER = AIIDA_LOGGER.getChild("finebalance.diagnostics")

DEFAULT_DRAWS = 1000
DEFAULT_SEED = 20120901
# null statistics within this distance of the observed one count as ties
TIE_TOLERANCE = 1e-12
STRATIFIED_TEST = "stratified permutation (one treated per matched set)"
TWO_SAMPLE_TEST = "two-sample permutation of treatment labels"


@dataclass(frozen=True)
class BalanceRow:
    covariate: str
    mean_treated: float
    mean_control: float
    std_diff: float
    p_value: float
    zero_variance: bool = False


@dataclass(frozen=True)
class BalanceReport:
    """One row per covariate plus the effective sample size."""

    sample_label: str
    rows: Tuple[BalanceRow, ...]
    effective_sample_size: float
    metadata: Dict[str, object] = field(default_factory=dict)

    def row(self, covariate: str) -> BalanceRow:
        for entry in self.rows:
            if entry.covariate == covariate:
                return entry
        raise KeyError(covariate)

    @property
    def std_diffs(self) -> Dict[str, float]:
        return {entry.covariate: entry.std_diff for entry in self.rows}

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "covariate": [r.covariate for r in self.rows],
                "mean_control": [r.mean_control for r in self.rows],
                "mean_treated": [r.mean_treated for r in self.rows],
                "std_diff": [r.std_diff for r in self.rows],
                "p_value": [r.p_value for r in self.rows],
                "zero_variance": [r.zero_variance for r in self.rows],
            }
        )

    def to_csv(self, path, delimiter: str = ","):
        self.to_frame().to_csv(path, sep=delimiter, index=False, float_format="%.6f",
                               lineterminator="\n")

    def to_text(self) -> str:
        """Aligned plain-text table with a short header."""
        frame = self.to_frame().drop(columns="zero_variance")
        body = frame.to_string(index=False, float_format=lambda value: f"{value:.3f}")
        header = (f"Balance ({self.sample_label}); p-values: {self.metadata.get('test', '')}\n"
                  f"Effective sample size: {self.effective_sample_size:.2f} pairs\n")
        return header + body + "\n"


def _matched_rows(result, table):
    if not result.sets:
        raise ValidationError("The match contains no matched sets.")
    index = table.index_of()
    treated = [index[s.treated_id] for s in result.sets]
    controls = [[index[c] for c in s.control_ids] for s in result.sets]
    return treated, controls


def weighted_means(result, table) -> Tuple[np.ndarray, np.ndarray]:
    """Treated and control means of every covariate in a variable-ratio match.

    Each matched set counts once: a control in a set with ``k`` controls gets
    weight ``1/k``.
    """
    treated, controls = _matched_rows(result, table)
    values = np.asarray(table.values, dtype=float)
    mean_treated = values[treated].mean(axis=0)
    mean_control = np.mean([values[rows].mean(axis=0) for rows in controls], axis=0)
    return mean_treated, mean_control


def pooled_sd(table) -> np.ndarray:
    """``sqrt((s_t**2 + s_c**2) / 2)`` per covariate on the unmatched sample."""
    values = np.asarray(table.values, dtype=float)
    z = np.asarray(table.z)
    var_t = values[z == 1].var(axis=0, ddof=1) if np.sum(z == 1) > 1 else np.zeros(values.shape[1])
    var_c = values[z == 0].var(axis=0, ddof=1) if np.sum(z == 0) > 1 else np.zeros(values.shape[1])
    return np.sqrt((var_t + var_c) / 2.0)


def std_diff(mean_t: float, mean_c: float, pooled_sd_before: float) -> float:
    """Standardized difference; 0 when the pooled SD is not positive."""
    if not pooled_sd_before > 0:
        return 0.0
    return (mean_t - mean_c) / pooled_sd_before


def effective_sample_size(result) -> float:
    """Pair-equivalent size ``sum 2k / (k + 1)`` over the matched sets."""
    total = sum((Fraction(2 * s.k_i, s.k_i + 1) for s in result.sets), Fraction(0))
    return float(total)


def _padded_sets(result, table, column):
    treated, controls = _matched_rows(result, table)
    x = table.column(column)
    sizes = np.array([1 + len(rows) for rows in controls])
    padded = np.zeros((len(treated), sizes.max()))
    for row, (t, rows) in enumerate(zip(treated, controls)):
        padded[row, 0] = x[t]
        padded[row, 1:1 + len(rows)] = x[rows]
    return padded, sizes


def _set_statistic(padded, sizes, picked):
    # treated value minus the mean of the rest of its set, averaged over sets
    k = sizes - 1
    return np.mean(picked * sizes / k - padded.sum(axis=1) / k, axis=-1)


def permutation_pvalue(result, table, covariate: str, draws: int = DEFAULT_DRAWS, seed=DEFAULT_SEED) -> float:
    """Two-sided Monte-Carlo p-value for the weighted mean difference.

    Within every matched set one unit is relabelled treated uniformly at
    random; the p-value is ``(count + 1) / (draws + 1)``.

    :param seed: integer or :class:`numpy.random.SeedSequence`
    """
    if draws < 1:
        raise ValidationError(f"Number of permutation draws must be positive, got {draws}.")
    padded, sizes = _padded_sets(result, table, covariate)
    observed = _set_statistic(padded, sizes, padded[:, 0])
    rng = np.random.default_rng(seed)
    chosen = rng.integers(0, sizes, size=(draws, len(sizes)))
    null = _set_statistic(padded, sizes, padded[np.arange(len(sizes))[None, :], chosen])
    count = int(np.sum(np.abs(null) >= abs(observed) - TIE_TOLERANCE))
    return (count + 1) / (draws + 1)


def two_sample_pvalue(table, covariate: str, draws: int = DEFAULT_DRAWS, seed=DEFAULT_SEED) -> float:
    """Two-sided permutation p-value for the difference in group means."""
    x = table.column(covariate)
    z = np.asarray(table.z)
    observed = x[z == 1].mean() - x[z == 0].mean()
    rng = np.random.default_rng(seed)
    labels = rng.permuted(np.tile(z, (draws, 1)), axis=1)
    n_t = z.sum()
    sum_t = labels @ x
    null = sum_t / n_t - (x.sum() - sum_t) / (len(z) - n_t)
    count = int(np.sum(np.abs(null) >= abs(observed) - TIE_TOLERANCE))
    return (count + 1) / (draws + 1)


def qq_uniform(pvalues: Sequence[float]) -> List[Tuple[float, float]]:
    """Pairs ``((i - 0.5) / n, p_(i))`` of uniform quantiles and sorted p-values."""
    pvalues = np.sort(np.asarray(pvalues, dtype=float))
    if pvalues.size == 0:
        raise ValidationError("Cannot build a QQ plot from no p-values.")
    if np.any(pvalues < 0) or np.any(pvalues > 1):
        raise ValidationError("p-values must lie in [0, 1].")
    n = len(pvalues)
    return [((i + 0.5) / n, float(p)) for i, p in enumerate(pvalues)]


def balance_report(table, result=None, draws: int = DEFAULT_DRAWS, seed=DEFAULT_SEED,
                   sd_before: Optional[np.ndarray] = None) -> BalanceReport:
    """Balance of every covariate before (``result=None``) or after matching.

    Standardized differences always use the pooled SD of the unmatched
    sample. Each covariate draws its permutations from its own stream
    spawned from ``seed``.
    """
    if sd_before is None:
        sd_before = pooled_sd(table)
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    streams = root.spawn(len(table.covariate_names))
    z = np.asarray(table.z)
    values = np.asarray(table.values, dtype=float)
    if result is None:
        label, test = "unmatched", TWO_SAMPLE_TEST
        mean_t = values[z == 1].mean(axis=0)
        mean_c = values[z == 0].mean(axis=0)
        n_t, n_c = int(z.sum()), int(len(z) - z.sum())
        ess = 2.0 * n_t * n_c / (n_t + n_c)
    else:
        label, test = "matched", STRATIFIED_TEST
        mean_t, mean_c = weighted_means(result, table)
        ess = effective_sample_size(result)

    rows = []
    for j, name in enumerate(table.covariate_names):
        if result is None:
            p_value = two_sample_pvalue(table, name, draws, streams[j])
        else:
            p_value = permutation_pvalue(result, table, name, draws, streams[j])
        rows.append(BalanceRow(
            covariate=name,
            mean_treated=float(mean_t[j]),
            mean_control=float(mean_c[j]),
            std_diff=float(std_diff(mean_t[j], mean_c[j], sd_before[j])),
            p_value=float(p_value),
            zero_variance=not sd_before[j] > 0,
        ))
    flagged = [r.covariate for r in rows if abs(r.std_diff) >= 0.1]
    LOGGER.info(f"{label} balance: {len(flagged)} of {len(rows)} covariates with |std diff| >= 0.1")
    metadata = {"test": test, "draws": draws, "seed": root.entropy, "spawn_key": list(root.spawn_key)}
    return BalanceReport(label, tuple(rows), ess, metadata)
