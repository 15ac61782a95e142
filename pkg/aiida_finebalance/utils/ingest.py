"""
Functions for reading a covariate table from delimited text, classifying the
covariates and imputing missing values with missingness indicators.
"""
from dataclasses import dataclass, field, replace
from enum import Enum
import os
from typing import Dict, Iterator, Optional, Tuple

import numpy as np
import pandas as pd

from aiida.common.log import AIIDA_LOGGER

from aiida_finebalance.exceptions import ValidationError

LOGGER = AIIDA_LOGGER.getChild("finebalance.ingest")

# Cells equal to one of these (case-insensitive, after stripping) are missing.
MISSING_TOKENS = ("", "na")
# Integer-valued columns with at most this many levels are ordinal.
MAX_ORDINAL_LEVELS = 10
MISSING_LABEL = "NA"
INDICATOR_SUFFIX = "_missing"


class CovariateKind(str, Enum):
    """Measurement scale of a covariate column."""

    BINARY = "binary"
    ORDINAL = "ordinal"
    CONTINUOUS = "continuous"
    NOMINAL = "nominal"


@dataclass(frozen=True)
class ColumnSchema:
    """Declares the role of each column of the input file.

    An empty ``covariates`` list means every column that is not the ID,
    treatment or score column.
    """

    id_column: str
    treatment_column: str
    covariates: Tuple[str, ...] = ()
    nominal: Tuple[str, ...] = ()
    score_column: Optional[str] = None
    delimiter: str = ","

    def referenced_columns(self):
        """All column names the schema expects to find in the file."""
        columns = [self.id_column, self.treatment_column, *self.covariates, *self.nominal]
        if self.score_column:
            columns.append(self.score_column)
        return list(dict.fromkeys(columns))


@dataclass(frozen=True)
class Subject:
    """One row of the covariate table."""

    id: str
    z: int
    values: Tuple[float, ...]
    missing_mask: Tuple[bool, ...]


@dataclass(frozen=True)
class CovariateTable:
    """Covariates and treatment indicator for every subject.

    ``values`` holds NaN in missing cells until
    :func:`impute_with_indicators` has been applied. ``sources`` maps each
    (possibly one-hot expanded) column to the input column it came from and
    ``raw_labels`` keeps the discrete labels of every nominal input column.
    """

    ids: Tuple[str, ...]
    z: np.ndarray
    values: np.ndarray
    missing_mask: np.ndarray
    covariate_names: Tuple[str, ...]
    covariate_kinds: Tuple[CovariateKind, ...]
    sources: Tuple[str, ...]
    raw_labels: Dict[str, Tuple[str, ...]] = field(default_factory=dict)
    scores: Optional[np.ndarray] = None
    imputed: bool = False

    def __post_init__(self):
        for array in (self.z, self.values, self.missing_mask):
            array.setflags(write=False)

    def __len__(self):
        return len(self.ids)

    @property
    def subjects(self) -> Iterator[Subject]:
        """Iterate the rows as :class:`Subject` records."""
        for i, subject_id in enumerate(self.ids):
            yield Subject(
                id=subject_id,
                z=int(self.z[i]),
                values=tuple(float(v) for v in self.values[i]),
                missing_mask=tuple(bool(m) for m in self.missing_mask[i]),
            )

    @property
    def treated(self) -> np.ndarray:
        """Row indices of treated subjects."""
        return np.flatnonzero(self.z == 1)

    @property
    def controls(self) -> np.ndarray:
        """Row indices of control subjects."""
        return np.flatnonzero(self.z == 0)

    def index_of(self) -> Dict[str, int]:
        """Map subject IDs to row indices."""
        return {subject_id: i for i, subject_id in enumerate(self.ids)}

    def column(self, name: str) -> np.ndarray:
        """Values of one covariate column."""
        try:
            j = self.covariate_names.index(name)
        except ValueError as exc:
            raise ValidationError(f"Unknown covariate '{name}'.") from exc
        return self.values[:, j]

    def kind_of(self, name: str) -> CovariateKind:
        """Kind of an input or expanded column."""
        if name in self.raw_labels:
            return CovariateKind.NOMINAL
        try:
            return self.covariate_kinds[self.covariate_names.index(name)]
        except ValueError as exc:
            raise ValidationError(f"Unknown covariate '{name}'.") from exc

    def labels(self, name: str) -> Tuple[str, ...]:
        """Discrete labels of a column, ``NA`` where the cell was missing.

        Nominal columns return their original labels, binary and ordinal
        columns their integer values as strings.
        """
        if name in self.raw_labels:
            return self.raw_labels[name]
        kind = self.kind_of(name)
        if kind == CovariateKind.CONTINUOUS:
            raise ValidationError(f"Column '{name}' is continuous and has no discrete levels.")
        j = self.covariate_names.index(name)
        return tuple(
            MISSING_LABEL if self.missing_mask[i, j] else str(int(round(self.values[i, j])))
            for i in range(len(self))
        )

    def to_frame(self) -> pd.DataFrame:
        """Covariate values as a data frame indexed by subject ID."""
        return pd.DataFrame(self.values, index=list(self.ids), columns=list(self.covariate_names))


def _is_missing(cell: str) -> bool:
    return cell.strip().lower() in MISSING_TOKENS


def _classify(values: np.ndarray) -> CovariateKind:
    observed = values[~np.isnan(values)]
    if np.all(np.isin(observed, (0.0, 1.0))):
        return CovariateKind.BINARY
    levels = np.unique(observed)
    if np.all(np.equal(np.mod(levels, 1.0), 0.0)) and len(levels) <= MAX_ORDINAL_LEVELS:
        return CovariateKind.ORDINAL
    return CovariateKind.CONTINUOUS


def read_header(path, delimiter: str = ",") -> Tuple[str, ...]:
    """Return the column names of a delimited file without reading its rows."""
    if not os.path.isfile(path):
        raise ValidationError(f"Input file {path} does not exist.")
    try:
        header = pd.read_csv(path, sep=delimiter, dtype=str, nrows=0, encoding="utf-8")
    except pd.errors.EmptyDataError as exc:
        raise ValidationError(f"Input file {path} has no subjects.") from exc
    return tuple(str(column).strip() for column in header.columns)


def load_table(path, schema: ColumnSchema) -> CovariateTable:
    """Load a covariate table from delimited text.

    :param path: location of the UTF-8 input file, first row a header
    :param schema: column roles
    :returns: table holding raw values; missing cells are NaN and flagged in
        ``missing_mask``, no imputation has been applied
    :raises ValidationError: for a missing file, an empty file, unknown
        columns, duplicate IDs or a non-binary treatment value
    """
    header = read_header(path, schema.delimiter)
    absent = [column for column in schema.referenced_columns() if column not in header]
    if absent:
        raise ValidationError(f"Columns {absent} named in the schema are absent from {path}.")

    frame = pd.read_csv(path, sep=schema.delimiter, dtype=str, keep_default_na=False,
                        encoding="utf-8")
    frame.columns = header
    if frame.empty:
        raise ValidationError(f"Input file {path} has no subjects.")

    ids = tuple(cell.strip() for cell in frame[schema.id_column])
    duplicated = sorted(pd.Series(ids)[pd.Series(ids).duplicated()].unique())
    if duplicated:
        raise ValidationError(f"Duplicate subject IDs in {path}: {duplicated}.")

    z = np.empty(len(frame), dtype=int)
    for row, cell in enumerate(frame[schema.treatment_column]):
        try:
            value = float(cell)
        except ValueError:
            value = None
        if value not in (0.0, 1.0):
            # header is line 1, first subject is line 2
            raise ValidationError(
                f"Treatment value '{cell}' in row {row + 2} of {path} is not 0 or 1."
            )
        z[row] = int(value)
    if z.sum() == 0 or z.sum() == len(z):
        raise ValidationError(f"Input file {path} needs at least one treated and one control subject.")

    covariates = schema.covariates or tuple(
        column for column in header
        if column not in (schema.id_column, schema.treatment_column, schema.score_column)
    )
    covariates = tuple(dict.fromkeys([*covariates, *schema.nominal]))

    names, kinds, sources, columns, masks = [], [], [], [], []
    raw_labels = {}
    for column in covariates:
        cells = frame[column]
        missing = cells.map(_is_missing).to_numpy(dtype=bool)
        if column in schema.nominal:
            labels = tuple(MISSING_LABEL if m else c.strip() for c, m in zip(cells, missing))
            raw_labels[column] = labels
            levels = sorted({label for label, m in zip(labels, missing) if not m})
            # a two-level nominal column is a single indicator of its second level
            expanded = levels[1:] if len(levels) == 2 else levels
            for level in expanded:
                values = np.array([np.nan if m else float(label == level)
                                   for label, m in zip(labels, missing)])
                names.append(f"{column}={level}")
                kinds.append(CovariateKind.BINARY)
                sources.append(column)
                columns.append(values)
                masks.append(missing)
            continue
        values = np.full(len(frame), np.nan)
        for row, (cell, m) in enumerate(zip(cells, missing)):
            if m:
                continue
            try:
                values[row] = float(cell)
            except ValueError as exc:
                raise ValidationError(
                    f"Value '{cell}' in column '{column}', row {row + 2} of {path} is not numeric; "
                    "declare the column as nominal."
                ) from exc
        names.append(column)
        kinds.append(_classify(values))
        sources.append(column)
        columns.append(values)
        masks.append(missing)

    scores = None
    if schema.score_column:
        try:
            scores = frame[schema.score_column].astype(float).to_numpy()
        except ValueError as exc:
            raise ValidationError(f"Score column '{schema.score_column}' is not numeric.") from exc

    values = np.column_stack(columns) if columns else np.empty((len(frame), 0))
    missing_mask = np.column_stack(masks) if masks else np.empty((len(frame), 0), dtype=bool)
    LOGGER.info(f"Loaded {len(frame)} subjects ({int(z.sum())} treated) and "
                f"{len(names)} covariate columns from {path}")
    return CovariateTable(
        ids=ids, z=z, values=values, missing_mask=missing_mask,
        covariate_names=tuple(names), covariate_kinds=tuple(kinds), sources=tuple(sources),
        raw_labels=raw_labels, scores=scores,
    )


def impute_with_indicators(table: CovariateTable) -> CovariateTable:
    """Replace missing cells by pooled column means and append indicators.

    One ``<name>_missing`` indicator is appended for each input column with at
    least one missing cell. The original missing mask is kept for audit; the
    appended indicator columns are never missing.

    :raises ValidationError: when a column has no observed value
    """
    values = np.array(table.values, dtype=float)
    for j, name in enumerate(table.covariate_names):
        observed = ~table.missing_mask[:, j]
        if not observed.any():
            raise ValidationError(f"Covariate '{name}' is missing for every subject.")
        values[~observed, j] = values[observed, j].mean()

    indicators: Dict[str, np.ndarray] = {}
    for j, source in enumerate(table.sources):
        if table.missing_mask[:, j].any() and source not in indicators:
            indicators[source] = table.missing_mask[:, j].astype(float)

    names = list(table.covariate_names)
    names.extend(f"{source}{INDICATOR_SUFFIX}" for source in indicators)
    kinds = list(table.covariate_kinds) + [CovariateKind.BINARY] * len(indicators)
    sources = list(table.sources) + [f"{source}{INDICATOR_SUFFIX}" for source in indicators]
    if indicators:
        values = np.column_stack([values, *indicators.values()])
    missing_mask = np.column_stack(
        [table.missing_mask, np.zeros((len(table), len(indicators)), dtype=bool)]
    )
    if indicators:
        LOGGER.info(f"Imputed column means and appended {len(indicators)} missingness indicators")
    return replace(
        table, values=values, missing_mask=missing_mask, covariate_names=tuple(names),
        covariate_kinds=tuple(kinds), sources=tuple(sources), imputed=True,
    )
