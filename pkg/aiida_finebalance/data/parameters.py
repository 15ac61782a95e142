"""
Data types provided by plugin

Register data types via the "aiida.data" entry point in pyproject.toml.
"""
import copy

from aiida.orm import Dict

from aiida_finebalance.utils.config import RUN_SCHEMA, validate_options


class MatchParameters(Dict):  # pylint: disable=too-many-ancestors
    """
    Options of a variable-ratio match.

    Holds the sections of a run configuration (``input``, ``schema``,
    ``propensity``, ``match``, ``diagnostics``, ``output`` and ``seed``).
    Missing keys are filled with their defaults on construction, so two nodes
    describing the same run store the same dictionary.
    """

    # same voluptuous schema as the fbmatch configuration file
    schema = RUN_SCHEMA

    # pylint: disable=redefined-builtin
    def __init__(self, dict=None, **kwargs):
        """
        Usage: ``MatchParameters({'match': {'K': 3, 'fine_balance': ['drug_use']}})``

        :param dict: run options, any section may be omitted
        :type dict: dict
        """
        dict = self.validate(dict)
        super().__init__(dict=dict, **kwargs)

    def validate(self, parameters_dict):
        """Check run options against ``RUN_SCHEMA`` and fill defaults.

        List the accepted keys with ``print(MatchParameters.schema.schema)``.

        :param parameters_dict: run options
        :returns: the completed options
        :raises aiida_finebalance.exceptions.ValidationError: for invalid options
        """
        return validate_options(parameters_dict)

    def run_mapping(self, input_path, distance_file=None, output_dir=None):
        """Run options pointing at concrete files.

        :param input_path: location of the covariate file
        :param distance_file: optional location of a distance file
        :param output_dir: directory the artifacts are written to
        """
        mapping = copy.deepcopy(self.get_dict())
        mapping["input"]["path"] = input_path
        if distance_file:
            mapping["input"]["distance_file"] = distance_file
        else:
            mapping["input"].pop("distance_file", None)
        if output_dir:
            mapping["output"]["directory"] = output_dir
        return mapping

    def __str__(self):
        """The usual node header followed by the options, e.g.::

            uuid: b416cbee-24e8-47a8-8c11-6d668770158b (pk: 590)
            {'match': {'K': 5, ...}, ...}
        """
        return f"{super().__str__()}\n{self.get_dict()}"
