"""
aiida_finebalance

A workflow matching the same covariate table twice, with the requested
options and with a baseline, and comparing the balance of the two matches.
"""
from aiida.engine import WorkChain
from aiida.orm import Dict, SinglefileData, Str
from aiida.plugins.factories import DataFactory

from aiida_finebalance.calculations.match import compare_manifests, variable_ratio_match

MatchParameters = DataFactory("finebalance.parameters")
BASELINE_METHODS = ("pair", "entire_number", "optimal_variable")


def baseline_parameters(parameters, method="pair"):
    """Options of the baseline match for ``parameters``.

    Same table, distances and caliper, without fine balance. ``method`` is
    ``pair`` for the conventional optimal pair match, ``entire_number`` for
    the same strata without fine balance, or ``optimal_variable`` for the
    optimal variable-ratio match.
    """
    if method not in BASELINE_METHODS:
        raise ValueError(f"Unknown baseline method '{method}', expected one of {BASELINE_METHODS}.")
    options = parameters.get_dict()
    match = options.setdefault("match", {})
    match["fine_balance"] = []
    match["pair_only"] = method == "pair"
    match["method"] = "optimal_variable" if method == "optimal_variable" else "entire_number"
    return MatchParameters(options)


def _validate_baseline_method(value, _):
    if value is not None and value.value not in BASELINE_METHODS:
        return f"baseline_method must be one of {BASELINE_METHODS}, got '{value.value}'."
    return None


class MatchComparisonWorkChain(WorkChain):
    """WorkChain comparing a variable-ratio match against a baseline match."""

    @classmethod
    def define(cls, spec):
        """Specify workflow recipe."""
        super().define(spec)
        spec.input("covariates", valid_type=SinglefileData, help="Covariate table.")
        spec.input(
            "parameters",
            valid_type=MatchParameters,
            help="Options of the primary match.",
        )
        spec.input(
            "baseline_parameters",
            valid_type=MatchParameters,
            required=False,
            help="Options of the baseline match; overrides baseline_method.",
        )
        spec.input(
            "baseline_method",
            valid_type=Str,
            default=lambda: Str("pair"),
            validator=_validate_baseline_method,
            help="Baseline derived from the primary options: pair, entire_number or optimal_variable.",
        )
        spec.input(
            "distances",
            valid_type=SinglefileData,
            required=False,
            help="Optional treated x control distance file used by both matches.",
        )
        spec.outline(
            cls.primary,
            cls.baseline,
            cls.compare,
        )
        spec.output("primary_manifest", valid_type=Dict)
        spec.output("baseline_manifest", valid_type=Dict)
        spec.output("comparison", valid_type=Dict)
        spec.exit_code(300, "ERROR_PRIMARY_MATCH_FAILED", message="The primary match did not finish successfully.")
        spec.exit_code(301, "ERROR_BASELINE_MATCH_FAILED", message="The baseline match did not finish successfully.")

    def _match(self, parameters):
        inputs = {"covariates": self.inputs.covariates, "parameters": parameters}
        if "distances" in self.inputs:
            inputs["distances"] = self.inputs.distances
        return variable_ratio_match.run_get_node(**inputs)

    def primary(self):
        """Run the requested match."""
        results, node = self._match(self.inputs.parameters)
        if not node.is_finished_ok:
            self.report(f"primary match failed with exit status {node.exit_status}")
            return self.exit_codes.ERROR_PRIMARY_MATCH_FAILED
        self.ctx.primary = results["manifest"]
        return None

    def baseline(self):
        """Run the baseline match."""
        if "baseline_parameters" in self.inputs:
            parameters = self.inputs.baseline_parameters
        else:
            parameters = baseline_parameters(self.inputs.parameters, self.inputs.baseline_method.value)
        results, node = self._match(parameters)
        if not node.is_finished_ok:
            self.report(f"baseline match failed with exit status {node.exit_status}")
            return self.exit_codes.ERROR_BASELINE_MATCH_FAILED
        self.ctx.baseline = results["manifest"]
        return None

    def compare(self):
        """Compare the balance of both matches."""
        comparison = compare_manifests(self.ctx.baseline, self.ctx.primary)
        for warning in comparison["warnings"]:
            self.report(warning)
        self.out("primary_manifest", self.ctx.primary)
        self.out("baseline_manifest", self.ctx.baseline)
        self.out("comparison", comparison)
