"""
Run configuration: a declarative YAML (or JSON) file validated with voluptuous.

Example::

    input:
      path: students.csv
    schema:
      id_column: id
      treatment_column: treatment
      nominal: [school_type]
    match:
      K: 5
      fine_balance: [free_lunch, drug_use]
    output:
      directory: run1
    seed: 20120901
"""
from dataclasses import dataclass, field
import os
from typing import Optional, Tuple

from voluptuous import All, Any, Coerce, In, Invalid, Optional as Opt, Range, Required, Schema
import yaml

from aiida.common.log import AIIDA_LOGGER

from aiida_finebalance.exceptions import ValidationError
from aiida_finebalance.utils.ingest import ColumnSchema

LOGGER = AIIDA_LOGGER.getChild("finebalance.config")

DEFAULT_SEED = 20120901
SECTIONS = ("input", "schema", "propensity", "match", "diagnostics", "output")

input_options = {
    Opt("path"): str,
    Required("delimiter", default=","): In([",", "\t", ";", "|"]),
    Opt("distance_file"): Any(None, str),
}

schema_options = {
    Required("id_column", default="id"): str,
    Required("treatment_column", default="treatment"): str,
    Required("covariates", default=list): [str],
    Required("nominal", default=list): [str],
    Opt("score_column"): Any(None, str),
}

propensity_options = {
    Required("ridge", default=0.0): All(Coerce(float), Range(min=0)),
}

match_options = {
    Required("K", default=5): All(Coerce(int), Range(min=2)),
    Required("alpha", default=1): All(Coerce(int), Range(min=1)),
    Required("caliper", default=0.5): All(Coerce(float), Range(min=0, min_included=False)),
    Opt("penalty_scale"): Any(None, All(Coerce(float), Range(min=0, min_included=False))),
    Required("fine_balance", default=list): [str],
    Required("policy", default="subset"): In(["subset", "trim", "fail"]),
    Required("cost_scale", default=10_000): All(Coerce(int), Range(min=1)),
    Required("method", default="entire_number"): In(["entire_number", "optimal_variable"]),
    Opt("n_controls"): Any(None, All(Coerce(int), Range(min=1))),
    Required("pair_only", default=False): bool,
    Required("small_stratum", default=20): All(Coerce(int), Range(min=0)),
}

diagnostics_options = {
    Required("draws", default=1000): All(Coerce(int), Range(min=1)),
}

output_options = {
    Required("directory", default="fbmatch_output"): str,
    Required("debug_networks", default=False): bool,
}

run_options = {
    Required("input"): input_options,
    Required("schema"): schema_options,
    Required("propensity"): propensity_options,
    Required("match"): match_options,
    Required("diagnostics"): diagnostics_options,
    Required("output"): output_options,
    Required("seed", default=DEFAULT_SEED): All(Coerce(int), Range(min=0)),
}

RUN_SCHEMA = Schema(run_options)


def validate_options(mapping: Optional[dict]) -> dict:
    """Validate a run mapping, filling every default.

    :raises ValidationError: naming the offending key
    """
    mapping = dict(mapping or {})
    # missing sections are validated as empty so their defaults apply
    for section in SECTIONS:
        if mapping.get(section) is None:
            mapping[section] = {}
    try:
        options = RUN_SCHEMA(mapping)
    except Invalid as exc:
        raise ValidationError(f"Invalid configuration: {exc}") from exc
    match = options["match"]
    if match["alpha"] > match["K"]:
        raise ValidationError(f"Invalid configuration: match.alpha={match['alpha']} exceeds K={match['K']}.")
    if match["method"] == "optimal_variable" and (match["fine_balance"] or match["pair_only"]):
        raise ValidationError(
            "Invalid configuration: match.method 'optimal_variable' takes neither fine_balance nor pair_only."
        )
    covariates = options["schema"]["covariates"] + options["schema"]["nominal"]
    unknown = [c for c in match["fine_balance"] if covariates and c not in covariates]
    if unknown:
        raise ValidationError(f"Invalid configuration: fine balance columns {unknown} are not covariates.")
    return options


@dataclass(frozen=True)
class RunConfig:
    """Everything one ``fbmatch run`` needs."""

    input_path: str
    schema: ColumnSchema
    distance_file: Optional[str] = None
    ridge: float = 0.0
    K: int = 5
    alpha: int = 1
    caliper: float = 0.5
    penalty_scale: Optional[float] = None
    fine_balance: Tuple[str, ...] = ()
    policy: str = "subset"
    cost_scale: int = 10_000
    method: str = "entire_number"
    n_controls: Optional[int] = None
    pair_only: bool = False
    small_stratum: int = 20
    draws: int = 1000
    output_dir: str = "fbmatch_output"
    debug_networks: bool = False
    seed: int = DEFAULT_SEED
    options: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_mapping(cls, mapping: Optional[dict]) -> "RunConfig":
        options = validate_options(mapping)
        if not options["input"].get("path"):
            raise ValidationError("Invalid configuration: input.path is required.")
        schema = options["schema"]
        match = options["match"]
        return cls(
            input_path=options["input"]["path"],
            schema=ColumnSchema(
                id_column=schema["id_column"],
                treatment_column=schema["treatment_column"],
                covariates=tuple(schema["covariates"]),
                nominal=tuple(schema["nominal"]),
                score_column=schema.get("score_column"),
                delimiter=options["input"]["delimiter"],
            ),
            distance_file=options["input"].get("distance_file"),
            ridge=options["propensity"]["ridge"],
            K=match["K"],
            alpha=match["alpha"],
            caliper=match["caliper"],
            penalty_scale=match.get("penalty_scale"),
            fine_balance=tuple(match["fine_balance"]),
            policy=match["policy"],
            cost_scale=match["cost_scale"],
            method=match["method"],
            n_controls=match.get("n_controls"),
            pair_only=match["pair_only"],
            small_stratum=match["small_stratum"],
            draws=options["diagnostics"]["draws"],
            output_dir=options["output"]["directory"],
            debug_networks=options["output"]["debug_networks"],
            seed=options["seed"],
            options=options,
        )

    def to_mapping(self) -> dict:
        """The validated mapping, as echoed into the run manifest."""
        return validate_options(self.options)


def load_config(path) -> dict:
    """Read a YAML or JSON configuration file into a mapping.

    Relative input paths are resolved against the file's directory.
    """
    if not os.path.isfile(path):
        raise ValidationError(f"Configuration file {path} does not exist.")
    with open(path, encoding="utf-8") as handle:
        try:
            mapping = yaml.safe_load(handle) or {}
        except yaml.YAMLError as exc:
            raise ValidationError(f"Configuration file {path} is not valid YAML: {exc}") from exc
    if not isinstance(mapping, dict):
        raise ValidationError(f"Configuration file {path} must hold a mapping.")
    base = os.path.dirname(os.path.abspath(path))
    section = mapping.get("input") or {}
    for key in ("path", "distance_file"):
        if section.get(key) and not os.path.isabs(section[key]):
            section[key] = os.path.join(base, section[key])
    LOGGER.debug(f"Loaded configuration from {path}")
    return mapping


def apply_overrides(mapping: Optional[dict], **flags) -> dict:
    """Overlay command line flags on a configuration mapping.

    ``None`` flags are ignored. Recognised flags: ``input``, ``out``, ``K``,
    ``caliper``, ``fine_balance`` (comma separated), ``policy``, ``seed``,
    ``scores``, ``distance_file``, ``method``, ``pair_only``, ``debug_networks``.
    """
    mapping = {key: dict(value) if isinstance(value, dict) else value
               for key, value in (mapping or {}).items()}
    targets = {
        "input": ("input", "path"),
        "distance_file": ("input", "distance_file"),
        "scores": ("schema", "score_column"),
        "K": ("match", "K"),
        "caliper": ("match", "caliper"),
        "policy": ("match", "policy"),
        "method": ("match", "method"),
        "pair_only": ("match", "pair_only"),
        "out": ("output", "directory"),
        "debug_networks": ("output", "debug_networks"),
    }
    for flag, value in flags.items():
        if value is None:
            continue
        if flag == "seed":
            mapping["seed"] = value
        elif flag == "fine_balance":
            columns = [c.strip() for c in value.split(",") if c.strip()]
            mapping.setdefault("match", {})["fine_balance"] = columns
        elif flag in targets:
            section, key = targets[flag]
            if not isinstance(mapping.get(section), dict):
                mapping[section] = {}
            mapping[section][key] = value
        else:
            raise ValidationError(f"Unknown configuration override '{flag}'.")
    return mapping
