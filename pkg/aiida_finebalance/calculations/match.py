"""
Calculations provided by aiida_finebalance.

Process functions running a variable-ratio match, and comparing two matches,
so that every input file, option set and artifact is recorded in the
provenance graph.
"""
import os
import tempfile

from aiida.engine import ExitCode, calcfunction
from aiida.orm import Dict, SinglefileData

from aiida_finebalance.exceptions import FineBalanceError, InfeasibleError, ValidationError
from aiida_finebalance.utils.config import RunConfig
from aiida_finebalance.utils.pipeline import compare_runs, run_pipeline

EXIT_FAILED = 300
EXIT_VALIDATION = 301
EXIT_INFEASIBLE = 302


def output_label(filename):
    """Link label of an artifact, e.g. ``matches_csv`` for ``matches.csv``."""
    return filename.replace(".", "_")


def exit_code_for(error: FineBalanceError) -> ExitCode:
    """Process exit code matching an error raised by the pipeline."""
    if isinstance(error, ValidationError):
        return ExitCode(EXIT_VALIDATION, f"ERROR_INVALID_INPUT: {error}")
    if isinstance(error, InfeasibleError):
        return ExitCode(EXIT_INFEASIBLE, f"ERROR_INFEASIBLE_MATCH: {error}")
    return ExitCode(EXIT_FAILED, f"ERROR_MATCH_FAILED: {error}")


def _copy_to(node, directory):
    path = os.path.join(directory, node.filename)
    with node.open(mode="rb") as source, open(path, "wb") as target:
        target.write(source.read())
    return path


@calcfunction
def variable_ratio_match(covariates, parameters, distances=None):
    """Run a variable-ratio match on a covariate file.

    :param covariates: covariate table (``CovariateTableData`` or any
        ``SinglefileData``)
    :param parameters: ``MatchParameters`` with the run options
    :param distances: optional treated x control distance file
    :returns: one ``SinglefileData`` per artifact and the manifest as ``Dict``
    """
    with tempfile.TemporaryDirectory(prefix="finebalance-") as workdir:
        input_path = _copy_to(covariates, workdir)
        distance_path = _copy_to(distances, workdir) if distances is not None else None
        output_dir = os.path.join(workdir, "output")
        try:
            config = RunConfig.from_mapping(parameters.run_mapping(input_path, distance_path, output_dir))
            result = run_pipeline(config)
        except FineBalanceError as exc:
            return exit_code_for(exc)

        outputs = {}
        for name in result.artifacts:
            path = os.path.join(output_dir, name)
            if os.path.isfile(path):
                outputs[output_label(name)] = SinglefileData(file=path)
        manifest = dict(result.manifest)
        # the temporary paths are not part of the run's identity
        manifest["config"]["input"].pop("path", None)
        manifest["config"]["input"].pop("distance_file", None)
        manifest["config"]["output"].pop("directory", None)
        outputs["manifest"] = Dict(manifest)
    return outputs


@calcfunction
def compare_manifests(manifest_a, manifest_b):
    """Side-by-side balance of two recorded matches.

    :param manifest_a: ``Dict`` manifest of the first run
    :param manifest_b: ``Dict`` manifest of the second run
    :returns: ``Dict`` with per-covariate rows, summary counts and warnings
    """
    comparison = compare_runs(manifest_a.get_dict(), manifest_b.get_dict())
    return Dict({
        "rows": comparison.table.to_dict(orient="records"),
        "summary": comparison.summary,
        "warnings": comparison.warnings,
    })
