"""Sub class of `SinglefileData` for delimited covariate tables."""
import io

import pandas as pd

from aiida.orm import SinglefileData


class CovariateTableData(SinglefileData):
    """Covariate table stored as a file, with its header and row count
    recorded as attributes so they can be queried without opening it."""

    def set_file(self, file, filename=None, **kwargs):
        """Add a file to the node and record its columns and number of rows.

        :param file: absolute path to the file or a filelike object
        :param filename: specify filename to use (defaults to name of provided file).
        """
        super().set_file(file, filename, **kwargs)
        content = self.get_content()
        delimiter = "\t" if "\t" in content.partition("\n")[0] else ","
        try:
            frame = pd.read_csv(io.StringIO(content), sep=delimiter, dtype=str, keep_default_na=False)
        except pd.errors.EmptyDataError:
            frame = pd.DataFrame()
        self.base.attributes.set("columns", [str(c).strip() for c in frame.columns])
        self.base.attributes.set("n_rows", len(frame))
        self.base.attributes.set("delimiter", delimiter)

    @property
    def columns(self):
        """Column names of the table."""
        return self.base.attributes.get("columns")

    @property
    def n_rows(self):
        """Number of subjects in the table."""
        return self.base.attributes.get("n_rows")
