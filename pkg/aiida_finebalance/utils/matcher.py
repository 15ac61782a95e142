"""
Variable-ratio matching with fine balance.

Subjects are grouped into entire-number strata. Within a stratum every
treated subject is matched to the same number of controls by a minimum-cost
flow that first minimizes the deviation from fine balance on a nominal
variable and then the total distance. Strata with too few controls are
handled by optimal subset matching, propensity trimming or an error.

The optimal variable-ratio match is kept as a baseline: a single flow over
all subjects lets every treated subject take between ``alpha`` and ``K``
controls, with the total number of controls fixed.
"""
from dataclasses import dataclass, field
from enum import Enum
import os
import re
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from aiida.common.log import AIIDA_LOGGER

from aiida_finebalance.exceptions import InfeasibleError, ValidationError
from aiida_finebalance.utils.distance import DistanceMatrix, RankMahalanobisDistance
from aiida_finebalance.utils.ingest import CovariateKind
from aiida_finebalance.utils.netflow import MAX_COST, FlowNetwork, integerize, solve_mcf
from aiida_finebalance.utils.propensity import ratio_rule

LOGGER = AIIDA_LOGGER.getChild("finebalance.matcher")

NO_COMMON_SUPPORT = "no_common_support"
NO_CONTROLS_IN_STRATUM = "no_controls_in_stratum"
TRIMMED_ABOVE_CONTROL_MAX = "trimmed_above_control_max"
TRIMMED_BELOW_TREATED_MIN = "trimmed_below_treated_min"
UNMATCHED = "unmatched"


class CommonSupportPolicy(str, Enum):
    """What to do with a stratum holding fewer controls than treated."""

    SUBSET = "subset"
    TRIM = "trim"
    FAIL = "fail"


class MatchMethod(str, Enum):
    """How the number of controls per treated subject is chosen."""

    ENTIRE_NUMBER = "entire_number"
    OPTIMAL_VARIABLE = "optimal_variable"


def natural_key(identifier: str):
    """Sort key ordering ``t2`` before ``t10``."""
    return [int(part) if part.isdigit() else part for part in re.split(r"(\d+)", identifier)]


@dataclass(frozen=True)
class FineBalanceSpec:
    """Nominal balance variable: one level per subject ID."""

    name: str
    labels: Dict[str, str]

    def __post_init__(self):
        if len(self.levels) < 2:
            raise ValidationError(
                f"Fine balance variable '{self.name}' needs at least 2 levels, found {self.levels}."
            )

    @property
    def levels(self) -> Tuple[str, ...]:
        return tuple(sorted(set(self.labels.values()), key=natural_key))

    def level_of(self, subject_id: str) -> str:
        try:
            return self.labels[subject_id]
        except KeyError as exc:
            raise ValidationError(f"Subject '{subject_id}' has no level of '{self.name}'.") from exc


@dataclass(frozen=True)
class CaliperSettings:
    width_multiplier: float = 0.5
    penalty_scale: Optional[float] = None


@dataclass(frozen=True)
class MatchConfig:
    """Options of :func:`variable_ratio_match`.

    ``K`` is the largest number of controls per treated subject and ``alpha``
    the smallest. ``pair_only`` puts every subject into a single stratum
    matched 1:1, the conventional optimal pair match. ``n_controls`` fixes
    the total number of controls of the ``optimal_variable`` method.
    """

    K: int = 5
    alpha: int = 1
    fine_balance: Optional[FineBalanceSpec] = None
    policy: CommonSupportPolicy = CommonSupportPolicy.SUBSET
    caliper: CaliperSettings = field(default_factory=CaliperSettings)
    cost_scale: int = 10_000
    pair_only: bool = False
    small_stratum: int = 20
    method: MatchMethod = MatchMethod.ENTIRE_NUMBER
    n_controls: Optional[int] = None

    def __post_init__(self):
        if self.K < 2:
            raise ValidationError(f"K must be at least 2, got {self.K}.")
        if not 1 <= self.alpha <= self.K:
            raise ValidationError(f"alpha must lie in [1, K={self.K}], got {self.alpha}.")
        object.__setattr__(self, "policy", CommonSupportPolicy(self.policy))
        object.__setattr__(self, "method", MatchMethod(self.method))
        if self.method == MatchMethod.OPTIMAL_VARIABLE and (self.fine_balance is not None or self.pair_only):
            raise ValidationError("The optimal_variable method takes neither fine balance nor pair_only.")
        if self.n_controls is not None and self.n_controls < 1:
            raise ValidationError(f"n_controls must be at least 1, got {self.n_controls}.")


@dataclass(frozen=True)
class MatchedSet:
    """One treated subject and its controls."""

    stratum: int
    treated_id: str
    control_ids: Tuple[str, ...]

    @property
    def k_i(self) -> int:
        return len(self.control_ids)


@dataclass(frozen=True)
class Discard:
    """A subject left out of the match, with a reason code."""

    subject_id: str
    stratum: int
    reason: str


@dataclass(frozen=True)
class StratumSummary:
    """How one stratum was matched."""

    stratum: int
    n_treated: int
    n_controls: int
    target_ratio: int
    ratio: int
    n_sets: int
    deviation: int
    excess: int
    total_distance: float
    method: str
    small: bool = False


@dataclass(frozen=True)
class MatchResult:
    """Union of the per-stratum matches plus everything that was discarded."""

    sets: Tuple[MatchedSet, ...] = ()
    discarded_treated: Tuple[Discard, ...] = ()
    discarded_controls: Tuple[Discard, ...] = ()
    strata: Tuple[StratumSummary, ...] = ()
    warnings: Tuple[str, ...] = ()

    @property
    def deviations(self) -> Dict[int, int]:
        return {summary.stratum: summary.deviation for summary in self.strata}

    @property
    def matched_treated(self) -> Tuple[str, ...]:
        return tuple(s.treated_id for s in self.sets)

    @property
    def matched_controls(self) -> Tuple[str, ...]:
        return tuple(c for s in self.sets for c in s.control_ids)

    def ratio_counts(self) -> Dict[int, int]:
        """Number of matched sets per control count."""
        counts: Dict[int, int] = {}
        for matched in self.sets:
            counts[matched.k_i] = counts.get(matched.k_i, 0) + 1
        return dict(sorted(counts.items()))


@dataclass(frozen=True)
class StratumMatch:
    """Output of a single network solve."""

    sets: Tuple[MatchedSet, ...]
    deviation: int
    excess: int
    total_cost: int
    total_distance: float


class RatioDecision(NamedTuple):
    ratio: int
    scarce: bool


@dataclass(frozen=True)
class TrimResult:
    keep: np.ndarray
    discards: Tuple[Discard, ...]


def interact(table, columns: Sequence[str]) -> FineBalanceSpec:
    """Nominal variable whose levels are the observed combinations of ``columns``.

    Missing cells count as their own ``NA`` level.

    :raises ValidationError: if a column is continuous
    """
    if not columns:
        raise ValidationError("At least one fine balance column is required.")
    per_column = []
    for name in columns:
        if name not in table.raw_labels and table.kind_of(name) == CovariateKind.CONTINUOUS:
            raise ValidationError(f"Fine balance column '{name}' is continuous; it must be discrete.")
        per_column.append(table.labels(name))
    labels = {
        subject_id: "|".join(column[i] for column in per_column)
        for i, subject_id in enumerate(table.ids)
    }
    return FineBalanceSpec(name=":".join(columns), labels=labels)


def reduce_ratio(n_treated: int, n_controls: int, k_target: int) -> RatioDecision:
    """Highest ratio not above ``k_target`` the controls can supply.

    ``scarce`` is set when there are fewer controls than treated subjects.
    """
    if n_treated < 1:
        raise ValidationError("reduce_ratio needs at least one treated subject.")
    ratio = max(1, min(k_target, n_controls // n_treated))
    return RatioDecision(ratio, n_controls < n_treated)


def _overflow_price(costs: np.ndarray, scale: int) -> int:
    price = scale * (1 + int(costs.sum()))
    if price > MAX_COST:
        # still larger than any attainable total distance
        price = 1 + int(costs.sum())
    return price


def _chosen_controls(dm: DistanceMatrix, solution, pair_arcs, costs):
    """Controls routed to each treated row, with the integer and real totals."""
    chosen: Dict[int, List[int]] = {t: [] for t in range(dm.shape[0])}
    total_cost = 0
    total_distance = 0.0
    for arc_index, (t, c) in pair_arcs.items():
        if solution.flow[arc_index]:
            chosen[t].append(c)
            total_cost += int(costs[t, c])
            total_distance += float(dm.d[t, c])
    return chosen, total_cost, total_distance


def _matched_sets(dm: DistanceMatrix, chosen) -> Tuple[MatchedSet, ...]:
    return tuple(
        MatchedSet(
            stratum=dm.stratum,
            treated_id=dm.treated_ids[t],
            control_ids=tuple(sorted((dm.control_ids[c] for c in controls), key=natural_key)),
        )
        for t, controls in chosen.items()
    )


def fixed_ratio_match(dm: DistanceMatrix, k: int, fb: Optional[FineBalanceSpec] = None,
                      scale: int = 10_000, debug_path=None) -> StratumMatch:
    """Optimal 1:k match of every treated row of ``dm``.

    With ``fb`` the flow first minimizes the fine-balance deviation
    ``sum_b |matched_b - k * n_b|`` and then the total distance; without it
    only the distance.

    :raises InfeasibleError: when fewer than ``k`` controls per treated exist
    """
    n_treated, n_controls = dm.shape
    if k < 1:
        raise ValidationError(f"Matching ratio must be at least 1, got {k}.")
    if n_controls < k * n_treated:
        raise InfeasibleError(
            f"Stratum {dm.stratum}: {n_controls} controls cannot supply {k} controls "
            f"to each of {n_treated} treated subjects."
        )
    if n_treated == 0:
        return StratumMatch((), 0, 0, 0, 0.0)

    costs = integerize(dm.d, scale)
    net = FlowNetwork()
    treated_nodes = [net.add_node(k, label=f"t:{i}") for i in dm.treated_ids]
    control_nodes = [net.add_node(0, label=f"c:{c}") for c in dm.control_ids]
    sink = net.add_node(-k * n_treated, label="sink")

    pair_arcs = {}
    for t, t_node in enumerate(treated_nodes):
        for c, c_node in enumerate(control_nodes):
            pair_arcs[net.add_arc(t_node, c_node, 1, int(costs[t, c]))] = (t, c)

    overflow_arcs = []
    targets: Dict[str, int] = {}
    if fb is None:
        for c_node in control_nodes:
            net.add_arc(c_node, sink, 1, 0)
    else:
        treated_levels = [fb.level_of(i) for i in dm.treated_ids]
        control_levels = [fb.level_of(c) for c in dm.control_ids]
        levels = sorted(set(treated_levels) | set(control_levels), key=natural_key)
        price = _overflow_price(costs, scale)
        level_nodes = {level: net.add_node(0, label=f"level:{level}") for level in levels}
        for c_node, level in zip(control_nodes, control_levels):
            net.add_arc(c_node, level_nodes[level], 1, 0)
        for level, node in level_nodes.items():
            targets[level] = k * treated_levels.count(level)
            available = control_levels.count(level)
            net.add_arc(node, sink, targets[level], 0)
            overflow_arcs.append(net.add_arc(node, sink, available, price))

    if debug_path is not None:
        net.dump(debug_path)
    solution = solve_mcf(net)
    if not solution.feasible:
        raise InfeasibleError(f"Stratum {dm.stratum}: the matching network has no feasible flow.")

    chosen, total_cost, total_distance = _chosen_controls(dm, solution, pair_arcs, costs)

    deviation = excess = 0
    if fb is not None:
        matched = {level: 0 for level in targets}
        for controls in chosen.values():
            for c in controls:
                matched[fb.level_of(dm.control_ids[c])] += 1
        deviation = sum(abs(matched[level] - target) for level, target in targets.items())
        excess = sum(solution.flow[arc] for arc in overflow_arcs)

    sets = _matched_sets(dm, chosen)
    LOGGER.debug(f"Stratum {dm.stratum}: 1:{k} match of {n_treated} treated, "
                 f"distance {total_distance:.4f}, deviation {deviation}")
    return StratumMatch(sets, deviation, excess, total_cost, total_distance)


def subset_match(dm: DistanceMatrix, fb: Optional[FineBalanceSpec] = None,
                 scale: int = 10_000, debug_path=None) -> Tuple[StratumMatch, Tuple[Discard, ...]]:
    """Pair match every control to a distinct treated subject.

    Roles are swapped so the controls are the units that must all be
    matched; the treated subjects left over are discarded with reason
    ``no_common_support``.
    """
    n_treated, n_controls = dm.shape
    if n_controls == 0:
        discards = tuple(Discard(i, dm.stratum, NO_COMMON_SUPPORT) for i in dm.treated_ids)
        return StratumMatch((), 0, 0, 0, 0.0), discards
    if n_controls > n_treated:
        raise ValidationError(
            f"Stratum {dm.stratum}: subset matching needs at least as many treated as controls."
        )
    swapped = fixed_ratio_match(dm.transpose(), 1, fb, scale, debug_path)
    sets = tuple(
        MatchedSet(dm.stratum, pair.control_ids[0], (pair.treated_id,)) for pair in swapped.sets
    )
    kept = {pair.treated_id for pair in sets}
    discards = tuple(Discard(i, dm.stratum, NO_COMMON_SUPPORT) for i in dm.treated_ids if i not in kept)
    matched = StratumMatch(sets, swapped.deviation, swapped.excess, swapped.total_cost,
                           swapped.total_distance)
    return matched, discards


def optimal_variable_match(dm: DistanceMatrix, alpha: int = 1, beta: int = 5,
                           n_controls: Optional[int] = None, scale: int = 10_000,
                           debug_path=None) -> StratumMatch:
    """Optimal variable-ratio match of every treated row of ``dm``.

    Each treated subject receives between ``alpha`` and ``beta`` controls and
    ``n_controls`` controls are used in total, chosen to minimize the total
    distance. The total defaults to ``min(n_c, beta * n_t)``.

    :raises InfeasibleError: if the total cannot be split within the bounds
    """
    n_treated, n_available = dm.shape
    if not 1 <= alpha <= beta:
        raise ValidationError(f"Bounds must satisfy 1 <= alpha <= beta, got alpha={alpha}, beta={beta}.")
    if n_treated == 0:
        return StratumMatch((), 0, 0, 0, 0.0)
    upper = min(n_available, beta * n_treated)
    total = upper if n_controls is None else n_controls
    if not alpha * n_treated <= total <= upper:
        raise InfeasibleError(
            f"Stratum {dm.stratum}: {total} controls cannot be split among {n_treated} treated subjects "
            f"with {alpha} to {beta} each from {n_available} available."
        )

    costs = integerize(dm.d, scale)
    net = FlowNetwork()
    # the pool hands out the controls beyond each subject's first alpha
    pool = net.add_node(total - alpha * n_treated, label="pool")
    treated_nodes = [net.add_node(alpha, label=f"t:{i}") for i in dm.treated_ids]
    control_nodes = [net.add_node(0, label=f"c:{c}") for c in dm.control_ids]
    sink = net.add_node(-total, label="sink")
    if beta > alpha:
        for t_node in treated_nodes:
            net.add_arc(pool, t_node, beta - alpha, 0)
    pair_arcs = {}
    for t, t_node in enumerate(treated_nodes):
        for c, c_node in enumerate(control_nodes):
            pair_arcs[net.add_arc(t_node, c_node, 1, int(costs[t, c]))] = (t, c)
    for c_node in control_nodes:
        net.add_arc(c_node, sink, 1, 0)

    if debug_path is not None:
        net.dump(debug_path)
    solution = solve_mcf(net)
    if not solution.feasible:
        raise InfeasibleError(f"Stratum {dm.stratum}: the matching network has no feasible flow.")

    chosen, total_cost, total_distance = _chosen_controls(dm, solution, pair_arcs, costs)
    sets = _matched_sets(dm, chosen)
    LOGGER.debug(f"Stratum {dm.stratum}: variable match of {n_treated} treated to {total} controls, "
                 f"distance {total_distance:.4f}")
    return StratumMatch(sets, 0, 0, total_cost, total_distance)


def trim_scores(result, table) -> TrimResult:
    """Drop subjects outside the common range of the propensity scores.

    Treated subjects scoring above the largest control score and controls
    scoring below the smallest treated score are discarded.

    :raises InfeasibleError: if trimming leaves either group empty
    """
    scores = np.asarray(result.scores)
    z = np.asarray(table.z)
    control_max = scores[z == 0].max()
    treated_min = scores[z == 1].min()
    above = (z == 1) & (scores > control_max)
    below = (z == 0) & (scores < treated_min)
    keep = ~(above | below)
    if not np.any(keep & (z == 1)) or not np.any(keep & (z == 0)):
        raise InfeasibleError("Propensity trimming leaves no treated or no control subjects.")
    discards = [Discard(table.ids[i], 0, TRIMMED_ABOVE_CONTROL_MAX) for i in np.flatnonzero(above)]
    discards += [Discard(table.ids[i], 0, TRIMMED_BELOW_TREATED_MIN) for i in np.flatnonzero(below)]
    if discards:
        LOGGER.warning(f"Propensity trimming discarded {int(above.sum())} treated and "
                       f"{int(below.sum())} control subjects")
    return TrimResult(keep=keep, discards=tuple(discards))


def _strata(table, partition, config, keep):
    """Row indices of the treated and controls of each stratum."""
    z = np.asarray(table.z)
    assignment = np.ones(len(table), dtype=int) if config.pair_only else np.asarray(partition.assignment)
    labels = [1] if config.pair_only else list(range(1, partition.K + 1))
    strata = {}
    for k in labels:
        members = (assignment == k) & keep
        strata[k] = (np.flatnonzero(members & (z == 1)), np.flatnonzero(members & (z == 0)))
    return strata


def variable_ratio_match(table, propensity, partition, config: MatchConfig,
                         distance=None, debug_dir=None) -> MatchResult:
    """Match every entire-number stratum at its own fixed ratio.

    :param table: imputed covariate table
    :param propensity: propensity result for the table's rows
    :param partition: entire-number strata, ignored when ``config.pair_only``
    :param config: matching options
    :param distance: builder with ``build(stratum, treated_idx, control_idx)``;
        default rank Mahalanobis distance with the configured caliper
    :param debug_dir: directory to dump each stratum's network into
    :raises InfeasibleError: under the ``fail`` policy when a stratum has
        fewer controls than treated subjects
    """
    if distance is None:
        distance = RankMahalanobisDistance(table, propensity, config.caliper.width_multiplier,
                                           config.caliper.penalty_scale)
    keep = np.ones(len(table), dtype=bool)
    strata = _strata(table, partition, config, keep)
    scarce = [k for k, (t, c) in strata.items() if len(t) and len(c) < len(t)]

    if scarce and config.policy == CommonSupportPolicy.FAIL:
        k = scarce[0]
        raise InfeasibleError(
            f"Stratum {k} has {len(strata[k][0])} treated but only {len(strata[k][1])} controls "
            "and the common support policy is 'fail'."
        )

    discarded_treated: List[Discard] = []
    discarded_controls: List[Discard] = []
    warnings: List[str] = []
    if scarce and config.policy == CommonSupportPolicy.TRIM:
        trimmed = trim_scores(propensity, table)
        keep = trimmed.keep
        strata = _strata(table, partition, config, keep)
        assignment = np.asarray(partition.assignment)
        index = table.index_of()
        for discard in trimmed.discards:
            stratum = 1 if config.pair_only else int(assignment[index[discard.subject_id]])
            target = discarded_treated if discard.reason == TRIMMED_ABOVE_CONTROL_MAX else discarded_controls
            target.append(Discard(discard.subject_id, stratum, discard.reason))

    sets: List[MatchedSet] = []
    summaries: List[StratumSummary] = []
    for k, (treated_idx, control_idx) in strata.items():
        if len(treated_idx) == 0:
            continue
        target_ratio = 1 if config.pair_only else ratio_rule(k, config.K, config.alpha)
        n_treated, n_controls = len(treated_idx), len(control_idx)
        debug_path = None if debug_dir is None else os.path.join(debug_dir, f"stratum_{k}.net")

        if n_controls == 0:
            message = f"Stratum {k} has {n_treated} treated and no controls; all are discarded"
            LOGGER.warning(message)
            warnings.append(message)
            discarded_treated.extend(
                Discard(table.ids[i], k, NO_CONTROLS_IN_STRATUM) for i in treated_idx)
            summaries.append(StratumSummary(k, n_treated, 0, target_ratio, 0, 0, 0, 0, 0.0, "none"))
            continue

        dm = distance.build(k, treated_idx, control_idx)
        decision = reduce_ratio(n_treated, n_controls, target_ratio)
        if decision.scarce:
            matched, dropped = subset_match(dm, config.fine_balance, config.cost_scale, debug_path)
            discarded_treated.extend(dropped)
            method = "subset"
            message = (f"Stratum {k}: {n_controls} controls for {n_treated} treated, "
                       f"subset matching discarded {len(dropped)} treated")
            LOGGER.warning(message)
            warnings.append(message)
        else:
            if decision.ratio < target_ratio:
                message = (f"Stratum {k}: ratio reduced from 1:{target_ratio} to 1:{decision.ratio} "
                           f"({n_treated} treated, {n_controls} controls)")
                LOGGER.warning(message)
                warnings.append(message)
            matched = fixed_ratio_match(dm, decision.ratio, config.fine_balance, config.cost_scale,
                                        debug_path)
            method = "fixed_ratio"

        small = n_treated + n_controls < config.small_stratum
        if small:
            message = f"Stratum {k} holds only {n_treated + n_controls} subjects"
            LOGGER.warning(message)
            warnings.append(message)
        LOGGER.info(f"Stratum {k}: {len(matched.sets)} sets at 1:{decision.ratio}, "
                    f"deviation {matched.deviation}")
        summaries.append(StratumSummary(
            stratum=k, n_treated=n_treated, n_controls=n_controls, target_ratio=target_ratio,
            ratio=decision.ratio, n_sets=len(matched.sets), deviation=matched.deviation,
            excess=matched.excess, total_distance=matched.total_distance, method=method, small=small,
        ))
        sets.extend(matched.sets)

    used = {c for matched in sets for c in matched.control_ids}
    already = {d.subject_id for d in discarded_controls}
    assignment = np.ones(len(table), dtype=int) if config.pair_only else np.asarray(partition.assignment)
    for i in np.asarray(table.controls):
        subject_id = table.ids[i]
        if subject_id not in used and subject_id not in already:
            discarded_controls.append(Discard(subject_id, int(assignment[i]), UNMATCHED))

    sets.sort(key=lambda s: (s.stratum, natural_key(s.treated_id)))
    discarded_treated.sort(key=lambda d: (d.stratum, natural_key(d.subject_id)))
    discarded_controls.sort(key=lambda d: (d.stratum, natural_key(d.subject_id)))
    LOGGER.info(f"Matched {len(sets)} treated subjects; discarded {len(discarded_treated)} treated "
                f"and left {len(discarded_controls)} controls unmatched")
    return MatchResult(
        sets=tuple(sets),
        discarded_treated=tuple(discarded_treated),
        discarded_controls=tuple(discarded_controls),
        strata=tuple(summaries),
        warnings=tuple(warnings),
    )


def optimal_variable_ratio_match(table, propensity, config: MatchConfig,
                                 distance=None, debug_dir=None) -> MatchResult:
    """Optimal variable-ratio match of all subjects in a single stratum.

    Every treated subject receives between ``config.alpha`` and ``config.K``
    controls; ``config.n_controls`` fixes the total. Nothing is stratified,
    fine balanced or trimmed.

    :raises InfeasibleError: if the requested total cannot be met
    """
    if distance is None:
        distance = RankMahalanobisDistance(table, propensity, config.caliper.width_multiplier,
                                           config.caliper.penalty_scale)
    treated_idx = np.asarray(table.treated)
    control_idx = np.asarray(table.controls)
    debug_path = None if debug_dir is None else os.path.join(debug_dir, "stratum_1.net")
    dm = distance.build(1, treated_idx, control_idx)
    matched = optimal_variable_match(dm, config.alpha, config.K, config.n_controls, config.cost_scale,
                                     debug_path)
    sets = sorted(matched.sets, key=lambda s: natural_key(s.treated_id))
    used = {c for s in sets for c in s.control_ids}
    discarded_controls = sorted((Discard(table.ids[i], 1, UNMATCHED) for i in control_idx
                                 if table.ids[i] not in used), key=lambda d: natural_key(d.subject_id))
    summary = StratumSummary(
        stratum=1, n_treated=len(treated_idx), n_controls=len(control_idx), target_ratio=config.K,
        ratio=max((s.k_i for s in sets), default=0), n_sets=len(sets), deviation=0, excess=0,
        total_distance=matched.total_distance, method=MatchMethod.OPTIMAL_VARIABLE.value,
    )
    LOGGER.info(f"Optimal variable-ratio match of {len(sets)} treated subjects to {len(used)} controls")
    return MatchResult(sets=tuple(sets), discarded_controls=tuple(discarded_controls), strata=(summary,))
