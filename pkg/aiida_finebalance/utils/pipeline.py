"""
End-to-end matching run: ingest, propensity, strata, distances, match,
diagnostics, and the artifacts written to the output directory.
"""
from collections import Counter
from dataclasses import asdict, dataclass, field
import hashlib
import json
import os
import shutil
import tempfile
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from aiida.common.log import AIIDA_LOGGER

from aiida_finebalance import __version__
from aiida_finebalance.exceptions import ValidationError
from aiida_finebalance.utils.config import RunConfig
from aiida_finebalance.utils.diagnostics import balance_report, pooled_sd, qq_uniform
from aiida_finebalance.utils.distance import FileDistance, RankMahalanobisDistance
from aiida_finebalance.utils.ingest import impute_with_indicators, load_table, read_header
from aiida_finebalance.utils.matcher import (
    CaliperSettings,
    MatchConfig,
    MatchMethod,
    interact,
    optimal_variable_ratio_match,
    variable_ratio_match,
)
from aiida_finebalance.utils.propensity import fit_propensity, from_scores, stratify

LOGGER = AIIDA_LOGGER.getChild("finebalance.pipeline")

ARTIFACTS = (
    "matches.csv",
    "discards.csv",
    "balance_unmatched.csv",
    "balance_unmatched.txt",
    "balance_matched.csv",
    "balance_matched.txt",
    "qq.csv",
    "manifest.json",
)
NETWORKS_DIR = "networks"
FLAG_THRESHOLDS = (0.1, 0.2)


@dataclass
class PipelineResult:
    """Where a run put its artifacts, and its manifest."""

    exit_status: int
    output_dir: str
    manifest: dict
    artifacts: List[str] = field(default_factory=list)


def sha256sum(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def check_columns(config: RunConfig):
    """Fail before any computation when the configuration names unknown columns."""
    header = read_header(config.input_path, config.schema.delimiter)
    expected = config.schema.referenced_columns() + list(config.fine_balance)
    unknown = sorted({column for column in expected if column not in header})
    if unknown:
        raise ValidationError(f"Columns {unknown} are not present in {config.input_path}.")
    if config.distance_file and not os.path.isfile(config.distance_file):
        raise ValidationError(f"Distance file {config.distance_file} does not exist.")


def _write_frame(frame: pd.DataFrame, path, delimiter=","):
    frame.to_csv(path, sep=delimiter, index=False, lineterminator="\n")


def _matches_frame(result) -> pd.DataFrame:
    rows = [
        {"set_id": set_id, "stratum": s.stratum, "treated_id": s.treated_id,
         "control_id": control, "k_i": s.k_i}
        for set_id, s in enumerate(result.sets, start=1)
        for control in s.control_ids
    ]
    return pd.DataFrame(rows, columns=["set_id", "stratum", "treated_id", "control_id", "k_i"])


def _discards_frame(result) -> pd.DataFrame:
    rows = [{"subject_id": d.subject_id, "group": "treated", "stratum": d.stratum, "reason": d.reason}
            for d in result.discarded_treated]
    rows += [{"subject_id": d.subject_id, "group": "control", "stratum": d.stratum, "reason": d.reason}
             for d in result.discarded_controls]
    return pd.DataFrame(rows, columns=["subject_id", "group", "stratum", "reason"])


def _round(value, digits=10):
    return float(round(float(value), digits))


def _build_manifest(config, table, propensity, partition, result, reports, warnings):
    z = np.asarray(table.z)
    manifest = {
        "tool": "aiida-finebalance",
        "version": __version__,
        "config": config.to_mapping(),
        "seed": config.seed,
        "input_sha256": sha256sum(config.input_path),
        "distance_sha256": sha256sum(config.distance_file) if config.distance_file else None,
        "n_subjects": len(table),
        "n_treated": int(z.sum()),
        "n_controls": int(len(z) - z.sum()),
        "covariates": list(table.covariate_names),
        "propensity": {
            "source": propensity.source,
            "converged": propensity.converged,
            "iterations": propensity.iterations,
            "score_sd": _round(propensity.score_sd),
            "coefficients": {k: _round(v) for k, v in propensity.coefficients.items()},
        },
        "stratum_sizes": {str(k): v for k, v in partition.sizes().items()},
        "strata": [asdict(summary) for summary in result.strata],
        "n_sets": len(result.sets),
        "ratio_counts": {str(k): v for k, v in result.ratio_counts().items()},
        "total_deviation": sum(result.deviations.values()),
        "discards": {
            "treated": len(result.discarded_treated),
            "controls": len(result.discarded_controls),
            "reasons": dict(sorted(Counter(
                d.reason for d in result.discarded_treated + result.discarded_controls).items())),
        },
        "warnings": list(warnings),
        "effective_sample_size": {},
        "std_diff": {},
    }
    for summary in manifest["strata"]:
        summary["total_distance"] = _round(summary["total_distance"])
    for label, report in reports.items():
        manifest["effective_sample_size"][label] = _round(report.effective_sample_size)
        manifest["std_diff"][label] = {k: _round(v) for k, v in report.std_diffs.items()}
    return manifest


def _install(staging, output_dir):
    """Move the finished artifacts from ``staging`` into ``output_dir``.

    Artifacts of an earlier run in ``output_dir`` are removed first; other
    files are left alone.
    """
    if not os.path.isdir(output_dir):
        os.replace(staging, output_dir)
        return
    for name in ARTIFACTS + (NETWORKS_DIR,):
        target = os.path.join(output_dir, name)
        if os.path.isdir(target):
            shutil.rmtree(target)
        elif os.path.exists(target):
            os.remove(target)
    for name in os.listdir(staging):
        os.replace(os.path.join(staging, name), os.path.join(output_dir, name))
    shutil.rmtree(staging, ignore_errors=True)


def run_pipeline(config: RunConfig) -> PipelineResult:
    """Run one match from a validated configuration.

    Artifacts are written into a temporary directory next to
    ``config.output_dir`` and moved into place only once every stage has
    succeeded.

    :raises FineBalanceError: from any stage; nothing is left on disk
    """
    check_columns(config)
    raw = load_table(config.input_path, config.schema)
    table = impute_with_indicators(raw)

    if config.schema.score_column:
        propensity = from_scores(raw.scores)
    else:
        propensity = fit_propensity(table, config.ridge)
    partition = stratify(propensity, config.K)

    if config.distance_file:
        distance = FileDistance(table, config.distance_file, config.schema.delimiter)
    else:
        distance = RankMahalanobisDistance(table, propensity, config.caliper, config.penalty_scale)
    fine_balance = interact(table, config.fine_balance) if config.fine_balance else None
    match_config = MatchConfig(
        K=config.K,
        alpha=config.alpha,
        fine_balance=fine_balance,
        policy=config.policy,
        caliper=CaliperSettings(config.caliper, config.penalty_scale),
        cost_scale=config.cost_scale,
        pair_only=config.pair_only,
        small_stratum=config.small_stratum,
        method=config.method,
        n_controls=config.n_controls,
    )

    output_dir = os.path.abspath(config.output_dir)
    parent = os.path.dirname(output_dir)
    os.makedirs(parent, exist_ok=True)
    staging = tempfile.mkdtemp(prefix=".fbmatch-", dir=parent)
    try:
        debug_dir = None
        if config.debug_networks:
            debug_dir = os.path.join(staging, NETWORKS_DIR)
            os.makedirs(debug_dir)
        if match_config.method == MatchMethod.OPTIMAL_VARIABLE:
            result = optimal_variable_ratio_match(table, propensity, match_config, distance, debug_dir)
        else:
            result = variable_ratio_match(table, propensity, partition, match_config, distance, debug_dir)

        warnings = list(propensity.warnings) + list(result.warnings)
        unmatched_seed, matched_seed = np.random.SeedSequence(config.seed).spawn(2)
        sd_before = pooled_sd(table)
        reports = {"unmatched": balance_report(table, None, config.draws, unmatched_seed, sd_before)}
        if result.sets:
            reports["matched"] = balance_report(table, result, config.draws, matched_seed, sd_before)
        else:
            message = "No treated subject was matched; no matched balance report was written"
            LOGGER.warning(message)
            warnings.append(message)

        delimiter = config.schema.delimiter
        _write_frame(_matches_frame(result), os.path.join(staging, "matches.csv"), delimiter)
        _write_frame(_discards_frame(result), os.path.join(staging, "discards.csv"), delimiter)
        for label, report in reports.items():
            report.to_csv(os.path.join(staging, f"balance_{label}.csv"), delimiter)
            with open(os.path.join(staging, f"balance_{label}.txt"), "w", encoding="utf-8") as handle:
                handle.write(report.to_text())
        if "matched" in reports:
            pairs = qq_uniform([row.p_value for row in reports["matched"].rows])
            qq = pd.DataFrame(pairs, columns=["uniform_quantile", "p_value"])
            qq.to_csv(os.path.join(staging, "qq.csv"), sep=delimiter, index=False,
                      float_format="%.6f", lineterminator="\n")

        manifest = _build_manifest(config, table, propensity, partition, result, reports, warnings)
        with open(os.path.join(staging, "manifest.json"), "w", encoding="utf-8") as handle:
            handle.write(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        artifacts = sorted(os.listdir(staging))
        _install(staging, output_dir)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise

    LOGGER.info(f"Wrote {len(artifacts)} artifacts to {output_dir}")
    return PipelineResult(exit_status=0, output_dir=output_dir, manifest=manifest, artifacts=artifacts)


def load_manifest(manifest) -> dict:
    """Accept a manifest mapping, a manifest file or a run directory."""
    if isinstance(manifest, dict):
        return manifest
    path = os.path.join(manifest, "manifest.json") if os.path.isdir(manifest) else manifest
    if not os.path.isfile(path):
        raise ValidationError(f"Manifest {path} does not exist.")
    with open(path, encoding="utf-8") as handle:
        try:
            return json.load(handle)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"Manifest {path} is not valid JSON.") from exc


@dataclass
class Comparison:
    """Side-by-side balance of two runs."""

    table: pd.DataFrame
    summary: Dict[str, Dict[str, object]]
    warnings: List[str] = field(default_factory=list)

    def to_text(self, labels=("a", "b")) -> str:
        lines = list(self.warnings)
        if not self.table.empty:
            lines.append(self.table.to_string(index=False, float_format=lambda value: f"{value:.3f}"))
        for key, values in self.summary.items():
            lines.append(f"{key}: " + ", ".join(f"{label}={values[label]}" for label in labels))
        return "\n".join(lines) + "\n"


def _balance_of(manifest) -> Dict[str, float]:
    std_diff = manifest.get("std_diff", {})
    return std_diff.get("matched") or std_diff.get("unmatched") or {}


def compare_runs(manifest_a, manifest_b) -> Comparison:
    """Compare the balance achieved by two runs.

    Standardized differences are taken from each run's matched report.
    Covariates present in only one run are left out with a warning.
    """
    a, b = load_manifest(manifest_a), load_manifest(manifest_b)
    balance_a, balance_b = _balance_of(a), _balance_of(b)
    shared = [name for name in balance_a if name in balance_b]
    warnings = []
    if len(shared) != len(balance_a) or len(shared) != len(balance_b):
        message = (f"Covariate sets differ; comparing the {len(shared)} shared covariates "
                   f"({len(balance_a)} and {len(balance_b)} in the two runs)")
        LOGGER.warning(message)
        warnings.append(message)

    table = pd.DataFrame(
        {
            "covariate": shared,
            "std_diff_a": [balance_a[name] for name in shared],
            "std_diff_b": [balance_b[name] for name in shared],
        },
        columns=["covariate", "std_diff_a", "std_diff_b"],
    )
    table["delta"] = table["std_diff_b"] - table["std_diff_a"]

    summary: Dict[str, Dict[str, object]] = {}
    for threshold in FLAG_THRESHOLDS:
        summary[f"count_abs_std_diff_ge_{threshold}"] = {
            "a": int(np.sum(np.abs(table["std_diff_a"]) >= threshold)),
            "b": int(np.sum(np.abs(table["std_diff_b"]) >= threshold)),
        }
    summary["max_abs_std_diff"] = {
        "a": float(np.abs(table["std_diff_a"]).max()) if shared else 0.0,
        "b": float(np.abs(table["std_diff_b"]).max()) if shared else 0.0,
    }
    summary["effective_sample_size"] = {
        "a": a.get("effective_sample_size", {}).get("matched", 0.0),
        "b": b.get("effective_sample_size", {}).get("matched", 0.0),
    }
    summary["discarded_treated"] = {
        "a": a.get("discards", {}).get("treated", 0),
        "b": b.get("discards", {}).get("treated", 0),
    }
    summary["discarded_controls"] = {
        "a": a.get("discards", {}).get("controls", 0),
        "b": b.get("discards", {}).get("controls", 0),
    }
    return Comparison(table=table, summary=summary, warnings=warnings)
