""" Tests for calculations

"""
import pytest

from aiida.plugins import CalculationFactory, DataFactory

from aiida_finebalance.calculations.match import EXIT_INFEASIBLE, EXIT_VALIDATION, compare_manifests

pytestmark = pytest.mark.usefixtures("clear_database")

SMALL_OPTIONS = {
    "schema": {"covariates": ["drug_use"], "score_column": "score"},
    "match": {"K": 3, "fine_balance": ["drug_use"]},
    "diagnostics": {"draws": 100},
}


def run_match(covariates_path, options, distances_path=None):
    """Run an instance of the match process function and return the results and node."""
    MatchParameters = DataFactory("finebalance.parameters")
    CovariateTableData = DataFactory("finebalance.covariates")
    SinglefileData = DataFactory("core.singlefile")

    inputs = {
        "covariates": CovariateTableData(file=covariates_path),
        "parameters": MatchParameters(options),
        "metadata": {"description": "match test"},
    }
    if distances_path:
        inputs["distances"] = SinglefileData(file=distances_path)
    return CalculationFactory("finebalance.match").run_get_node(**inputs)


def test_process(small_example_path, small_example_distances):
    """The match is recorded with every artifact as an output."""
    result, node = run_match(small_example_path, SMALL_OPTIONS, small_example_distances)
    assert node.is_finished_ok
    for label in ("matches_csv", "discards_csv", "balance_matched_csv", "qq_csv", "manifest_json", "manifest"):
        assert label in result
    manifest = result["manifest"].get_dict()
    assert manifest["total_deviation"] == 2
    assert "path" not in manifest["config"]["input"]
    assert result["matches_csv"].get_content().startswith("set_id,stratum,treated_id,control_id,k_i")


def test_invalid_options_exit_code(small_example_path, small_example_distances):
    options = {"schema": {"covariates": ["drug_use"], "score_column": "missing_column"}}
    _, node = run_match(small_example_path, options, small_example_distances)
    assert node.exit_status == EXIT_VALIDATION


def test_blank_distances_exit_code(small_example_path, small_example_distances):
    """A pair match across strata needs distances the file leaves blank."""
    options = {
        "schema": {"covariates": ["drug_use"], "score_column": "score"},
        "match": {"K": 3, "pair_only": True},
    }
    _, node = run_match(small_example_path, options, small_example_distances)
    assert node.exit_status == EXIT_VALIDATION
    assert "blank cells" in node.exit_message


def test_infeasible_exit_code(tmp_path):
    path = tmp_path / "scarce.csv"
    path.write_text("id,treatment,x,score\nt1,1,0,0.6\nt2,1,1,0.6\nc1,0,1,0.6\n")
    options = {"schema": {"score_column": "score"}, "match": {"K": 2, "policy": "fail"}}
    _, node = run_match(str(path), options)
    assert node.exit_status == EXIT_INFEASIBLE


def test_compare_manifests(small_example_path, small_example_distances):
    fine, _ = run_match(small_example_path, SMALL_OPTIONS, small_example_distances)
    plain_options = {**SMALL_OPTIONS, "match": {"K": 3}}
    plain, _ = run_match(small_example_path, plain_options, small_example_distances)
    comparison = compare_manifests(plain["manifest"], fine["manifest"]).get_dict()
    assert [row["covariate"] for row in comparison["rows"]] == ["drug_use"]
    assert comparison["summary"]["max_abs_std_diff"]["a"] == pytest.approx(0.0794, abs=1e-4)
    assert comparison["summary"]["max_abs_std_diff"]["b"] == pytest.approx(0.0794, abs=1e-4)
    assert comparison["warnings"] == []
