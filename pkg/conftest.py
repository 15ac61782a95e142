"""pytest fixtures for simplified testing."""
import os

import numpy as np
import pandas as pd
import pytest

pytest_plugins = ["aiida.tools.pytest_fixtures"]

INPUT_DIR = os.path.join(os.path.dirname(os.path.realpath(__file__)), "tests", "input_files")

# (treated, free_lunch, drug_use) -> number of subjects
STUDY_CELLS = {
    (1, 1, 1): 36,
    (1, 1, 0): 54,
    (1, 0, 1): 12,
    (1, 0, 0): 18,
    (0, 1, 1): 16,
    (0, 1, 0): 38,
    (0, 0, 1): 92,
    (0, 0, 0): 214,
}


@pytest.fixture(scope="function")
def clear_database(aiida_profile_clean):  # pylint: disable=unused-argument
    """Clear database in between tests that store nodes."""


@pytest.fixture(scope="session")
def small_example_path():
    """Covariate file of the three-stratum worked example."""
    return os.path.join(INPUT_DIR, "small_example.csv")


@pytest.fixture(scope="session")
def small_example_distances():
    """Hand-made treated x control distances of the worked example."""
    return os.path.join(INPUT_DIR, "small_example_distances.csv")


@pytest.fixture(scope="session")
def small_example_config():
    """YAML configuration of the worked example, fine balance on drug use."""
    return os.path.join(INPUT_DIR, "small_example.yaml")


def make_study(seed=20120901, n_correlated=14, n_noise=4):
    """Synthetic school study, 120 treated and 360 controls.

    Treatment depends only on ``free_lunch`` and ``drug_use``; the ``score``
    column holds the exact propensity of each of the four cells. ``x*``
    columns are shifted by free lunch, ``noise*`` columns are pure noise and
    the first two of them have missing cells.
    """
    rng = np.random.default_rng(seed)
    rows = [cell for cell, count in STUDY_CELLS.items() for _ in range(count)]
    z, free_lunch, drug_use = (np.array(column) for column in zip(*rows))
    n_treated = int(z.sum())
    ids = [f"t{i + 1}" for i in range(n_treated)] + [f"c{i + 1}" for i in range(len(z) - n_treated)]
    scores = {
        (fl, du): STUDY_CELLS[(1, fl, du)] / (STUDY_CELLS[(1, fl, du)] + STUDY_CELLS[(0, fl, du)])
        for fl in (0, 1) for du in (0, 1)
    }
    frame = pd.DataFrame({
        "id": ids,
        "treatment": z,
        "free_lunch": free_lunch,
        "drug_use": drug_use,
        "score": [round(scores[(fl, du)], 10) for fl, du in zip(free_lunch, drug_use)],
    })
    for j in range(1, n_correlated + 1):
        frame[f"x{j}"] = np.round(1.5 * free_lunch + rng.normal(size=len(z)), 4)
    for j in range(1, n_noise + 1):
        column = np.round(rng.normal(size=len(z)), 4).astype(object)
        if j <= 2:
            column[rng.random(len(z)) < 0.05] = "NA"
        frame[f"noise{j}"] = column
    return frame


@pytest.fixture(scope="function")
def study_path(tmp_path):
    """Synthetic study written to a temporary CSV file."""
    path = tmp_path / "study.csv"
    make_study().to_csv(path, index=False)
    return str(path)


@pytest.fixture(scope="function")
def small_example(small_example_path, small_example_distances):
    """Table, scores, strata (K = 3) and distances of the worked example."""
    # pylint: disable=import-outside-toplevel
    from aiida_finebalance.utils.distance import FileDistance
    from aiida_finebalance.utils.ingest import ColumnSchema, impute_with_indicators, load_table
    from aiida_finebalance.utils.propensity import from_scores, stratify

    table = impute_with_indicators(
        load_table(small_example_path, ColumnSchema("id", "treatment", score_column="score"))
    )
    propensity = from_scores(table.scores)
    partition = stratify(propensity, 3)
    distance = FileDistance(table, small_example_distances)
    return table, propensity, partition, distance
