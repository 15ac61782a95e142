#!/usr/bin/env python
"""CLI utility to build variable-ratio matched samples with fine balance.

Usage: fbmatch --help
"""

import os

import click

from aiida_finebalance.exceptions import FineBalanceError
from aiida_finebalance.utils.config import RunConfig, apply_overrides, load_config
from aiida_finebalance.utils.pipeline import compare_runs, run_pipeline

# process exit status of the calcfunction -> command exit status
PROVENANCE_EXIT_STATUS = {0: 0, 300: 1, 301: 2, 302: 3}


def build_config(params):
    """Merge a configuration file with command line overrides."""
    mapping = load_config(params.pop("config")) if params.get("config") else {}
    mapping = apply_overrides(mapping, **params)
    return RunConfig.from_mapping(mapping)


def launch_with_provenance(config):
    """Run the match through the ``variable_ratio_match`` calcfunction.

    The artifacts are copied from the provenance graph into the output
    directory.
    """
    # pylint: disable=import-outside-toplevel
    from aiida import load_profile
    from aiida.manage import get_manager
    from aiida.plugins import DataFactory

    from aiida_finebalance.calculations.match import variable_ratio_match

    if get_manager().get_profile() is None:
        load_profile()
    CovariateTableData = DataFactory("finebalance.covariates")
    MatchParameters = DataFactory("finebalance.parameters")
    SinglefileData = DataFactory("core.singlefile")

    inputs = {
        "covariates": CovariateTableData(file=os.path.abspath(config.input_path)),
        "parameters": MatchParameters(config.to_mapping()),
        "metadata": {"description": "record a variable-ratio match via the aiida_finebalance plugin"},
    }
    if config.distance_file:
        inputs["distances"] = SinglefileData(file=os.path.abspath(config.distance_file))

    results, node = variable_ratio_match.run_get_node(**inputs)
    if not node.is_finished_ok:
        click.echo(f"Error: {node.exit_message}", err=True)
        return PROVENANCE_EXIT_STATUS.get(node.exit_status, 1)

    os.makedirs(config.output_dir, exist_ok=True)
    for label, output in results.items():
        if label == "manifest":
            continue
        with output.open(mode="rb") as source:
            with open(os.path.join(config.output_dir, output.filename), "wb") as target:
                target.write(source.read())
    click.echo(f"Recorded match as process {node.pk}; artifacts in {config.output_dir}")
    return 0


def launch(params):
    """Run one match and print a short summary.

    :returns: process exit status
    """
    provenance = params.pop("provenance")
    try:
        config = build_config(params)
        if provenance:
            return launch_with_provenance(config)
        result = run_pipeline(config)
    except FineBalanceError as exc:
        click.echo(f"Error: {exc}", err=True)
        return exc.exit_status

    manifest = result.manifest
    click.echo(f"Matched {manifest['n_sets']} treated subjects "
               f"(ratios {manifest['ratio_counts']}), discarded {manifest['discards']['treated']} treated")
    ess = manifest["effective_sample_size"].get("matched")
    if ess is not None:
        click.echo(f"Effective sample size: {ess:.2f} pairs")
    for warning in manifest["warnings"]:
        click.echo(f"Warning: {warning}", err=True)
    click.echo(f"Artifacts written to {result.output_dir}")
    return 0


@click.group()
def cli():
    """Variable-ratio matching with fine balance.

    Help: $ fbmatch --help
    """


@cli.command("run")
@click.option("--config", type=click.Path(), help="YAML or JSON run configuration")
@click.option("--input", "input", type=click.Path(), help="Delimited covariate table")
@click.option("--out", type=click.Path(), help="Output directory")
@click.option("--K", "K", type=int, help="Largest number of controls per treated subject")
@click.option("--caliper", type=float, help="Caliper width as a multiple of the propensity score SD")
@click.option("--fine-balance", "fine_balance", type=str, help="Comma separated fine balance columns")
@click.option("--policy", type=click.Choice(["subset", "trim", "fail"]), help="Common support policy")
@click.option("--method", type=click.Choice(["entire_number", "optimal_variable"]),
              help="Entire-number strata, or the optimal variable-ratio baseline")
@click.option("--seed", type=int, help="Master seed for the permutation tests")
@click.option("--scores", type=str, help="Column holding precomputed propensity scores")
@click.option("--distance-file", "distance_file", type=click.Path(), help="Treated x control distance file")
@click.option("--pair-only", "pair_only", is_flag=True, default=None, help="Optimal pair match in a single stratum")
@click.option("--debug-networks", "debug_networks", is_flag=True, default=None,
              help="Write every stratum's flow network to the output directory")
@click.option("--provenance", is_flag=True, default=False, help="Record the run in the loaded AiiDA profile")
@click.pass_context
def run(ctx, **kwargs):
    """Run a match.

    Example usage:

    $ fbmatch run --config study.yaml --K 5 --fine-balance free_lunch,drug_use --out run1

    $ fbmatch run --input students.csv --scores score --distance-file distances.csv --fine-balance drug_use --out small
    """
    ctx.exit(launch(kwargs))


@cli.command("compare")
@click.argument("manifest_a", type=click.Path(exists=True))
@click.argument("manifest_b", type=click.Path(exists=True))
@click.pass_context
def compare(ctx, manifest_a, manifest_b):
    """Compare the balance of two runs (manifest files or run directories).

    Example usage:

    $ fbmatch compare pair_run fine_balance_run
    """
    try:
        comparison = compare_runs(manifest_a, manifest_b)
    except FineBalanceError as exc:
        click.echo(f"Error: {exc}", err=True)
        ctx.exit(exc.exit_status)
    click.echo(comparison.to_text(labels=("a", "b")), nl=False)


if __name__ == "__main__":
    cli()  # pylint: disable=no-value-for-parameter
