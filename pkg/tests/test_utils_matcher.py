""" Tests for fixed-ratio, subset and variable-ratio matching

"""
import itertools

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from aiida_finebalance.exceptions import InfeasibleError, ValidationError
from aiida_finebalance.utils.distance import DistanceMatrix, FileDistance
from aiida_finebalance.utils.ingest import ColumnSchema, impute_with_indicators, load_table
from aiida_finebalance.utils.matcher import (
    NO_COMMON_SUPPORT,
    NO_CONTROLS_IN_STRATUM,
    UNMATCHED,
    FineBalanceSpec,
    MatchConfig,
    fixed_ratio_match,
    interact,
    natural_key,
    optimal_variable_match,
    optimal_variable_ratio_match,
    reduce_ratio,
    subset_match,
    trim_scores,
    variable_ratio_match,
)
from aiida_finebalance.utils.netflow import integerize
from aiida_finebalance.utils.propensity import from_scores, stratify

SCALE = 10_000


def sets_of(result):
    return {s.treated_id: s.control_ids for s in result.sets}


def random_instance(rng, n_treated, n_controls, n_levels):
    d = np.round(rng.random((n_treated, n_controls)) * 10, 1)
    ids_t = tuple(f"t{i + 1}" for i in range(n_treated))
    ids_c = tuple(f"c{i + 1}" for i in range(n_controls))
    levels = [f"L{i}" for i in range(n_levels)]
    labels = {subject: str(rng.choice(levels)) for subject in ids_t + ids_c}
    # at least two levels overall
    labels[ids_c[0]], labels[ids_t[0]] = levels[0], levels[1]
    return DistanceMatrix(1, ids_t, ids_c, d), FineBalanceSpec("v", labels)


def brute_force(dm, k, fb=None):
    """Lexicographic optimum (deviation, integer cost) over all 1:k assignments."""
    costs = integerize(dm.d, SCALE)
    n_treated, n_controls = dm.shape
    best = None
    for order in itertools.permutations(range(n_controls), k * n_treated):
        groups = [order[t * k:(t + 1) * k] for t in range(n_treated)]
        if any(list(g) != sorted(g) for g in groups):
            continue
        cost = sum(int(costs[t, c]) for t, g in enumerate(groups) for c in g)
        deviation = 0
        if fb is not None:
            levels = set(fb.labels.values())
            for level in levels:
                target = k * sum(fb.level_of(i) == level for i in dm.treated_ids)
                matched = sum(fb.level_of(dm.control_ids[c]) == level for c in order)
                deviation += abs(matched - target)
        key = (deviation, cost)
        if best is None or key < best:
            best = key
    return best


def brute_force_variable(dm, alpha, beta, total):
    """Smallest integer cost over all splits of ``total`` controls with alpha <= k_i <= beta."""
    costs = integerize(dm.d, SCALE)
    n_treated, n_controls = dm.shape
    best = None
    # -1 leaves a control unused
    for owners in itertools.product(range(-1, n_treated), repeat=n_controls):
        counts = [owners.count(t) for t in range(n_treated)]
        if sum(counts) != total or not all(alpha <= k <= beta for k in counts):
            continue
        cost = sum(int(costs[t, c]) for c, t in enumerate(owners) if t >= 0)
        if best is None or cost < best:
            best = cost
    return best


def brute_force_subset(dm, fb):
    """Lexicographic optimum (deviation, integer cost) over all injective maps of controls to treated.

    The deviation compares, per level, the controls with the treated subjects they are paired to.
    """
    costs = integerize(dm.d, SCALE)
    n_treated, n_controls = dm.shape
    levels = set(fb.labels.values())
    best = None
    for owners in itertools.permutations(range(n_treated), n_controls):
        cost = sum(int(costs[t, c]) for c, t in enumerate(owners))
        deviation = 0
        for level in levels:
            target = sum(fb.level_of(c) == level for c in dm.control_ids)
            matched = sum(fb.level_of(dm.treated_ids[t]) == level for t in owners)
            deviation += abs(matched - target)
        key = (deviation, cost)
        if best is None or key < best:
            best = key
    return best


def test_natural_key():
    assert sorted(["c10", "c2", "c1"], key=natural_key) == ["c1", "c2", "c10"]


def test_small_example_unconstrained(small_example):
    """Without fine balance each stratum takes its closest controls."""
    table, propensity, partition, distance = small_example
    result = variable_ratio_match(table, propensity, partition, MatchConfig(K=3), distance)
    assert sets_of(result) == {
        "t1": ("c5",), "t2": ("c1",), "t3": ("c2",), "t4": ("c4",),
        "t5": ("c7", "c11"), "t6": ("c10", "c13"), "t7": ("c8", "c9"),
        "t8": ("c14", "c16", "c17"),
    }
    totals = {s.stratum: s.total_distance for s in result.strata}
    assert totals[1] == pytest.approx(4.8)
    assert totals[2] == pytest.approx(12.5)
    assert totals[3] == pytest.approx(3.9)
    assert result.ratio_counts() == {1: 4, 2: 3, 3: 1}
    assert [d.subject_id for d in result.discarded_controls] == ["c3", "c6", "c12", "c15"]
    assert {d.reason for d in result.discarded_controls} == {UNMATCHED}
    assert not result.discarded_treated
    # every stratum is below the small-stratum threshold
    assert len(result.warnings) == 3


def test_small_example_fine_balance(small_example):
    """Fine balance on drug use reshuffles stratum 1 and swaps c14 for c15."""
    table, propensity, partition, distance = small_example
    config = MatchConfig(K=3, fine_balance=interact(table, ["drug_use"]))
    result = variable_ratio_match(table, propensity, partition, config, distance)
    matched = sets_of(result)
    assert {t: matched[t] for t in ("t1", "t2", "t3", "t4")} == {
        "t1": ("c6",), "t2": ("c5",), "t3": ("c2",), "t4": ("c4",),
    }
    assert matched["t5"] == ("c7", "c11")
    assert matched["t6"] == ("c10", "c13")
    assert matched["t7"] == ("c8", "c9")
    assert matched["t8"] == ("c15", "c16", "c17")
    summaries = {s.stratum: s for s in result.strata}
    assert summaries[1].total_distance == pytest.approx(10.5)
    assert result.deviations == {1: 0, 2: 0, 3: 2}
    assert summaries[3].excess == 1


def test_fixed_ratio_matches_assignment_oracle():
    """Without fine balance a 1:k match is an assignment with each treated row repeated k times."""
    rng = np.random.default_rng(5)
    for _ in range(50):
        n_treated = int(rng.integers(1, 5))
        k = int(rng.integers(1, 4))
        n_controls = int(rng.integers(k * n_treated, k * n_treated + 4))
        dm, _ = random_instance(rng, n_treated, n_controls, 2)
        costs = integerize(dm.d, SCALE)
        repeated = np.repeat(costs, k, axis=0)
        rows, cols = linear_sum_assignment(repeated)
        matched = fixed_ratio_match(dm, k)
        assert matched.total_cost == int(repeated[rows, cols].sum())
        assert all(s.k_i == k for s in matched.sets)
        used = [c for s in matched.sets for c in s.control_ids]
        assert len(used) == len(set(used))


def test_fixed_ratio_brute_force_oracle():
    """Deviation first, distance second: agrees with exhaustive enumeration."""
    rng = np.random.default_rng(17)
    checked = 0
    while checked < 200:
        k = int(rng.integers(1, 4))
        n_treated = int(rng.integers(1, 4 if k == 1 else 3))
        n_controls = int(rng.integers(k * n_treated, min(k * n_treated + 3, 7) + 1))
        if n_controls < k * n_treated:
            continue
        dm, fb = random_instance(rng, n_treated, n_controls, int(rng.integers(2, 5)))
        matched = fixed_ratio_match(dm, k, fb, SCALE)
        assert (matched.deviation, matched.total_cost) == brute_force(dm, k, fb)
        checked += 1


def test_fine_balance_attained_when_feasible():
    """Every level has at least k * n_b controls, so the deviation is zero."""
    rng = np.random.default_rng(23)
    for _ in range(100):
        k = int(rng.integers(1, 4))
        n_levels = int(rng.integers(2, 4))
        treated_levels = [int(rng.integers(0, n_levels)) for _ in range(int(rng.integers(1, 5)))]
        treated_levels[:2] = [0, 1][:len(treated_levels[:2])]
        control_levels = []
        for level in range(n_levels):
            needed = k * treated_levels.count(level)
            control_levels += [level] * (needed + int(rng.integers(0, 3)))
        if len(set(control_levels) | set(treated_levels)) < 2:
            control_levels.append(1)
        ids_t = tuple(f"t{i + 1}" for i in range(len(treated_levels)))
        ids_c = tuple(f"c{i + 1}" for i in range(len(control_levels)))
        labels = dict(zip(ids_t, map(str, treated_levels)))
        labels.update(zip(ids_c, map(str, control_levels)))
        dm = DistanceMatrix(1, ids_t, ids_c, rng.random((len(ids_t), len(ids_c))))
        matched = fixed_ratio_match(dm, k, FineBalanceSpec("v", labels))
        assert matched.deviation == 0
        assert matched.excess == 0


def test_fixed_ratio_infeasible():
    dm = DistanceMatrix(1, ("t1", "t2"), ("c1", "c2", "c3"), np.ones((2, 3)))
    with pytest.raises(InfeasibleError):
        fixed_ratio_match(dm, 2)
    with pytest.raises(ValidationError):
        fixed_ratio_match(dm, 0)


def test_subset_match_oracle():
    """Excess treated are discarded and the kept pairs are an optimal assignment."""
    rng = np.random.default_rng(29)
    for _ in range(100):
        n_controls = int(rng.integers(1, 5))
        n_treated = n_controls + int(rng.integers(1, 4))
        dm, _ = random_instance(rng, n_treated, n_controls, 2)
        matched, discards = subset_match(dm, None, SCALE)
        assert len(discards) == n_treated - n_controls
        assert {d.reason for d in discards} == {NO_COMMON_SUPPORT}
        costs = integerize(dm.d, SCALE)
        rows, cols = linear_sum_assignment(costs)
        assert matched.total_cost == int(costs[rows, cols].sum())
        kept = {s.treated_id for s in matched.sets} | {d.subject_id for d in discards}
        assert kept == set(dm.treated_ids)


def test_subset_match_without_controls():
    dm = DistanceMatrix(2, ("t1", "t2"), (), np.zeros((2, 0)))
    matched, discards = subset_match(dm)
    assert not matched.sets
    assert [d.subject_id for d in discards] == ["t1", "t2"]


def test_subset_match_fine_balance_oracle():
    """With a balance variable the kept treated follow the control levels before the distance."""
    rng = np.random.default_rng(31)
    for _ in range(100):
        n_controls = int(rng.integers(1, 4))
        n_treated = n_controls + int(rng.integers(1, 3))
        dm, fb = random_instance(rng, n_treated, n_controls, int(rng.integers(2, 4)))
        matched, discards = subset_match(dm, fb, SCALE)
        assert (matched.deviation, matched.total_cost) == brute_force_subset(dm, fb)
        assert len(discards) == n_treated - n_controls


def test_optimal_variable_brute_force_oracle():
    """Minimum total distance over every split of the controls within the bounds."""
    rng = np.random.default_rng(37)
    for _ in range(60):
        n_treated = int(rng.integers(1, 4))
        n_controls = int(rng.integers(n_treated, 7))
        dm, _ = random_instance(rng, n_treated, n_controls, 2)
        alpha = int(rng.integers(1, 3))
        beta = alpha + int(rng.integers(0, 3))
        upper = min(n_controls, beta * n_treated)
        if alpha * n_treated > upper:
            continue
        for total in {upper, int(rng.integers(alpha * n_treated, upper + 1))}:
            matched = optimal_variable_match(dm, alpha, beta, total, SCALE)
            assert matched.total_cost == brute_force_variable(dm, alpha, beta, total)
            sizes = [s.k_i for s in matched.sets]
            assert len(sizes) == n_treated
            assert sum(sizes) == total
            assert all(alpha <= k <= beta for k in sizes)


def test_optimal_variable_defaults_to_all_usable_controls():
    dm = DistanceMatrix(1, ("t1", "t2"), ("c1", "c2", "c3", "c4", "c5"),
                        np.array([[1.0, 2.0, 3.0, 4.0, 9.0], [9.0, 8.0, 1.0, 1.0, 1.0]]))
    matched = optimal_variable_match(dm, 1, 3)
    assert {s.treated_id: s.control_ids for s in matched.sets} == {"t1": ("c1", "c2"), "t2": ("c3", "c4", "c5")}
    assert matched.total_distance == pytest.approx(6.0)
    # one control each is the optimal pair match
    paired = optimal_variable_match(dm, 1, 3, n_controls=2)
    assert paired.total_distance == pytest.approx(2.0)


def test_optimal_variable_infeasible():
    dm = DistanceMatrix(1, ("t1", "t2"), ("c1", "c2", "c3"), np.ones((2, 3)))
    with pytest.raises(InfeasibleError):
        optimal_variable_match(dm, 2, 3)
    with pytest.raises(InfeasibleError):
        optimal_variable_match(dm, 1, 3, n_controls=4)
    with pytest.raises(InfeasibleError):
        optimal_variable_match(dm, 1, 1, n_controls=3)
    with pytest.raises(ValidationError):
        optimal_variable_match(dm, 3, 2)


def test_optimal_variable_ratio_match(small_example):
    """A single stratum on rank distances; every control is used, one to three per treated subject."""
    table, propensity, _, _ = small_example
    config = MatchConfig(K=3, method="optimal_variable")
    result = optimal_variable_ratio_match(table, propensity, config)
    assert len(result.sets) == 8
    assert len(result.matched_controls) == 17
    assert not result.discarded_controls
    assert all(1 <= s.k_i <= 3 for s in result.sets)
    assert [(s.stratum, s.method, s.deviation) for s in result.strata] == [(1, "optimal_variable", 0)]
    assert result.strata[0].ratio == max(s.k_i for s in result.sets)


def test_optimal_variable_ratio_match_fixed_total(small_example):
    table, propensity, _, _ = small_example
    config = MatchConfig(K=3, method="optimal_variable", n_controls=12)
    result = optimal_variable_ratio_match(table, propensity, config)
    assert len(result.matched_controls) == 12
    assert len(result.discarded_controls) == 5
    assert {d.reason for d in result.discarded_controls} == {UNMATCHED}


def test_reduce_ratio():
    assert reduce_ratio(4, 10, 3) == (2, False)
    assert reduce_ratio(4, 20, 3) == (3, False)
    assert reduce_ratio(4, 3, 3) == (1, True)


def test_interact_levels(small_example):
    table = small_example[0]
    fb = interact(table, ["drug_use"])
    assert fb.levels == ("0", "1")
    assert fb.level_of("t2") == "1"
    with pytest.raises(ValidationError, match="at least 2 levels"):
        FineBalanceSpec("v", {"a": "x", "b": "x"})


def test_match_config_checks():
    with pytest.raises(ValidationError):
        MatchConfig(K=1)
    with pytest.raises(ValidationError):
        MatchConfig(K=3, alpha=4)
    with pytest.raises(ValidationError):
        MatchConfig(K=3, method="optimal_variable", pair_only=True)
    with pytest.raises(ValidationError):
        MatchConfig(K=3, method="optimal_variable", fine_balance=FineBalanceSpec("v", {"a": "x", "b": "y"}))
    with pytest.raises(ValueError):
        MatchConfig(K=3, method="nearest")


def scarce_example(tmp_path):
    """Stratum 1 with three treated and two controls, stratum 2 with one treated and two controls."""
    rows = ["id,treatment,x,score", "t1,1,0,0.6", "t2,1,1,0.55", "t3,1,0,0.5",
            "c1,0,0,0.45", "c2,0,1,0.4", "t4,1,1,0.3", "c3,0,0,0.1", "c4,0,1,0.05"]
    path = tmp_path / "scarce.csv"
    path.write_text("\n".join(rows) + "\n")
    table = impute_with_indicators(load_table(str(path), ColumnSchema("id", "treatment", score_column="score")))
    propensity = from_scores(table.scores)
    return table, propensity, stratify(propensity, 2)


def test_common_support_subset(tmp_path):
    """Scarce strata are subset matched; strata without controls are dropped."""
    table, propensity, partition = scarce_example(tmp_path)
    assert list(partition.assignment) == [1, 1, 1, 1, 1, 2, 2, 2]
    result = variable_ratio_match(table, propensity, partition, MatchConfig(K=2))
    assert len(result.sets) == 3
    assert sum(s.treated_id in ("t1", "t2", "t3") for s in result.sets) == 2
    reasons = {d.subject_id: d.reason for d in result.discarded_treated}
    assert list(reasons.values()).count(NO_COMMON_SUPPORT) == 1
    assert "t4" not in reasons
    assert {s.stratum for s in result.strata} == {1, 2}


def test_common_support_fail(tmp_path):
    table, propensity, partition = scarce_example(tmp_path)
    with pytest.raises(InfeasibleError, match="Stratum 1"):
        variable_ratio_match(table, propensity, partition, MatchConfig(K=2, policy="fail"))


def test_common_support_trim(tmp_path):
    """Trimming drops treated above the largest control score."""
    table, propensity, _ = scarce_example(tmp_path)
    trimmed = trim_scores(propensity, table)
    assert [(d.subject_id, d.reason) for d in trimmed.discards] == [
        ("t1", "trimmed_above_control_max"),
        ("t2", "trimmed_above_control_max"),
        ("t3", "trimmed_above_control_max"),
        ("c3", "trimmed_below_treated_min"),
        ("c4", "trimmed_below_treated_min"),
    ]
    assert list(trimmed.keep) == [False, False, False, True, True, True, False, False]


def test_trim_policy_match(tmp_path):
    """After trimming, t4 is left alone in its stratum and nothing can be matched."""
    table, propensity, partition = scarce_example(tmp_path)
    result = variable_ratio_match(table, propensity, partition, MatchConfig(K=2, policy="trim"))
    assert not result.sets
    assert [(d.subject_id, d.stratum, d.reason) for d in result.discarded_treated] == [
        ("t1", 1, "trimmed_above_control_max"),
        ("t2", 1, "trimmed_above_control_max"),
        ("t3", 1, "trimmed_above_control_max"),
        ("t4", 2, NO_CONTROLS_IN_STRATUM),
    ]
    assert [(d.subject_id, d.reason) for d in result.discarded_controls] == [
        ("c1", UNMATCHED), ("c2", UNMATCHED),
        ("c3", "trimmed_below_treated_min"), ("c4", "trimmed_below_treated_min"),
    ]


def test_zero_control_stratum(small_example_path, small_example_distances):
    """A stratum holding only treated subjects discards them with their own reason."""
    table = impute_with_indicators(
        load_table(small_example_path, ColumnSchema("id", "treatment", score_column="score"))
    )
    scores = np.array(table.scores)
    scores[table.index_of()["t8"]] = 0.1
    propensity = from_scores(scores)
    partition = stratify(propensity, 4)
    result = variable_ratio_match(table, propensity, partition, MatchConfig(K=4),
                                  FileDistance(table, small_example_distances))
    assert [(d.subject_id, d.stratum, d.reason) for d in result.discarded_treated] == [
        ("t8", 4, NO_CONTROLS_IN_STRATUM)
    ]


def test_pair_only(small_example):
    """The pair baseline uses one stratum and one control per treated subject."""
    table, propensity, partition, _ = small_example
    config = MatchConfig(K=3, pair_only=True)
    result = variable_ratio_match(table, propensity, partition, config)
    assert len(result.sets) == 8
    assert result.ratio_counts() == {1: 8}
    assert {s.stratum for s in result.sets} == {1}


def test_debug_networks(small_example, tmp_path):
    table, propensity, partition, distance = small_example
    variable_ratio_match(table, propensity, partition, MatchConfig(K=3), distance, debug_dir=str(tmp_path))
    assert sorted(p.name for p in tmp_path.iterdir()) == ["stratum_1.net", "stratum_2.net", "stratum_3.net"]
