"""Study-sample representation and delimited-file ingestion.

A :class:`Dataset` is the single in-memory product every other module
consumes: an ``n x p`` covariate matrix, an integer arm assignment in
``0..K-1``, and (optionally) an outcome vector.  Categorical covariates are
expanded to one-hot indicator columns at ingestion time, dropping the
lexicographically smallest level so the design stays full rank next to an
intercept.

Datasets are immutable after construction (arrays are marked read-only) and
therefore safe to share across threads.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DomainError, IngestionError, SchemaError

_OUTCOME_FAMILIES = ("continuous", "binary")


@dataclass(frozen=True)
class IngestSchema:
    """Names the columns of a delimited file and how to interpret them.

    ``outcome_col`` may be None for design-phase files that carry no
    outcome; ``categorical_cols`` must be a subset of ``covariate_cols``.
    """

    treatment_col: str
    covariate_cols: tuple[str, ...]
    outcome_col: str | None = None
    outcome_family: str | None = None
    categorical_cols: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.treatment_col:
            raise SchemaError("schema key 'treatment_col' must be a non-empty string")
        if not self.covariate_cols:
            raise SchemaError("schema key 'covariate_cols' must name at least one column")
        if len(set(self.covariate_cols)) != len(self.covariate_cols):
            raise SchemaError("schema key 'covariate_cols' contains duplicates")
        if self.outcome_col is not None and self.outcome_family not in _OUTCOME_FAMILIES:
            raise SchemaError(
                "schema key 'outcome_family' must be 'continuous' or 'binary' "
                "when 'outcome_col' is given"
            )
        extra = set(self.categorical_cols) - set(self.covariate_cols)
        if extra:
            raise SchemaError(
                f"schema key 'categorical_cols' names columns not in covariate_cols: {sorted(extra)}"
            )


_SCHEMA_KEYS = {
    "treatment_col",
    "outcome_col",
    "covariate_cols",
    "outcome_family",
    "categorical_cols",
}


def load_schema(path: str | Path) -> IngestSchema:
    """Read an ingestion schema from a JSON key-value file.

    Recognized keys: ``treatment_col`` (str, required), ``covariate_cols``
    (list of str, required), ``outcome_col`` (str, optional),
    ``outcome_family`` ('continuous' | 'binary', required with outcome_col),
    ``categorical_cols`` (list of str, optional).
    """
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IngestionError(f"cannot read schema file {path}: {exc}") from exc
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"schema file {path} is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise SchemaError("schema file must contain a JSON object")
    unknown = set(obj) - _SCHEMA_KEYS
    if unknown:
        raise SchemaError(f"unknown schema key: {sorted(unknown)[0]!r}")
    for key in ("treatment_col", "covariate_cols"):
        if key not in obj:
            raise SchemaError(f"missing schema key: {key!r}")
    return IngestSchema(
        treatment_col=obj["treatment_col"],
        covariate_cols=tuple(obj["covariate_cols"]),
        outcome_col=obj.get("outcome_col"),
        outcome_family=obj.get("outcome_family"),
        categorical_cols=tuple(obj.get("categorical_cols", ())),
    )


@dataclass(frozen=True)
class Dataset:
    """An immutable study sample.

    Attributes
    ----------
    covariates : (n, p) float array, categorical inputs already expanded.
    covariate_names : p column labels.
    treatment : (n,) integer arm codes 0..K-1; arm 1 is "treated" when K=2.
    arms : K, the number of treatment arms (K >= 2).
    outcome : (n,) float vector, or None for design-phase samples.
    outcome_family : 'continuous' | 'binary' | None.
    treatment_levels : raw level label behind each arm code, echoed so the
        direction of every contrast is unambiguous.
    """

    covariates: np.ndarray
    covariate_names: tuple[str, ...]
    treatment: np.ndarray
    arms: int
    outcome: np.ndarray | None = None
    outcome_family: str | None = None
    treatment_levels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        X = np.asarray(self.covariates, dtype=float)
        if X.ndim != 2:
            raise DomainError("covariates must be a 2-d array")
        z = np.asarray(self.treatment, dtype=np.int64)
        if z.ndim != 1 or z.shape[0] != X.shape[0]:
            raise DomainError("treatment must be a length-n vector")
        n, p = X.shape
        if len(self.covariate_names) != p:
            raise DomainError("covariate_names length does not match covariate count")
        if not np.all(np.isfinite(X)):
            raise DomainError("covariates contain missing or non-finite values")
        if self.arms < 2:
            raise DomainError("a Dataset needs at least two treatment arms")
        if z.size and (z.min() < 0 or z.max() >= self.arms):
            raise DomainError("treatment codes must lie in 0..K-1")
        counts = np.bincount(z, minlength=self.arms)
        empty = np.nonzero(counts == 0)[0]
        if empty.size:
            raise DomainError(f"arm {int(empty[0])} empty: no units with that treatment code")
        if n < p + 2:
            raise DomainError(f"need n >= p + 2 (got n={n}, p={p})")

        y = self.outcome
        if y is not None:
            y = np.asarray(y, dtype=float)
            if y.shape != (n,):
                raise DomainError("outcome must be a length-n vector")
            if not np.all(np.isfinite(y)):
                raise DomainError("outcome contains missing or non-finite values")
            if self.outcome_family == "binary" and not np.all(np.isin(y, (0.0, 1.0))):
                raise DomainError("binary outcome must contain only 0 and 1")
            if self.outcome_family not in _OUTCOME_FAMILIES:
                raise DomainError("outcome_family must be 'continuous' or 'binary'")
            y = y.copy()
            y.setflags(write=False)

        levels = self.treatment_levels or tuple(str(k) for k in range(self.arms))
        if len(levels) != self.arms:
            raise DomainError("treatment_levels length must equal the arm count")

        X = X.copy()
        X.setflags(write=False)
        z = z.copy()
        z.setflags(write=False)
        object.__setattr__(self, "covariates", X)
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        object.__setattr__(self, "treatment", z)
        object.__setattr__(self, "outcome", y)
        object.__setattr__(self, "treatment_levels", levels)

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    def arm_indices(self, arm: int) -> np.ndarray:
        return np.nonzero(self.treatment == arm)[0]

    def arm_counts(self) -> np.ndarray:
        return np.bincount(self.treatment, minlength=self.arms)

    def require_outcome(self) -> np.ndarray:
        if self.outcome is None:
            raise DomainError("this operation needs an outcome, but the dataset has none")
        return self.outcome

    def without_outcome(self) -> "Dataset":
        """Design-phase view of the sample: same X and Z, no Y."""
        if self.outcome is None:
            return self
        return replace(self, outcome=None, outcome_family=None)

    def take(self, indices) -> "Dataset":
        """Row subsample (used by the bootstrap); revalidates all invariants."""
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            covariates=self.covariates[idx],
            covariate_names=self.covariate_names,
            treatment=self.treatment[idx],
            arms=self.arms,
            outcome=None if self.outcome is None else self.outcome[idx],
            outcome_family=self.outcome_family,
            treatment_levels=self.treatment_levels,
        )


def _parse_cell(value: str, row: int, column: str) -> float:
    text = value.strip()
    if not text:
        raise IngestionError(f"row {row}, column {column!r}: empty cell")
    try:
        return float(text)
    except ValueError:
        raise IngestionError(
            f"row {row}, column {column!r}: cannot parse {value!r} as a number"
        ) from None


def _sorted_levels(values: list[str]) -> list[str]:
    """Distinct raw values in sorted order: numeric when every value parses
    as a number, lexicographic otherwise."""
    distinct = sorted(set(values))
    try:
        return sorted(distinct, key=lambda s: (float(s), s))
    except ValueError:
        return distinct


def ingest(path: str | Path, schema: IngestSchema, load_outcome: bool = True) -> Dataset:
    """Read a comma-delimited, UTF-8, header-rowed file into a Dataset.

    Treatment codes are assigned by sorted order of the distinct raw values
    in the treatment column; the code -> raw-level mapping is echoed in
    ``Dataset.treatment_levels``.  Categorical covariates are one-hot
    expanded, dropping the first (smallest) level, with indicator columns
    named ``col=level``.  Row order is preserved.

    Raises SchemaError for a missing column, IngestionError for any
    empty/unparseable cell (named by data-row number and column), and
    DomainError when a Dataset invariant fails (e.g. an empty arm).
    """
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8-sig") as handle:
            reader = csv.reader(handle)
            rows = list(reader)
    except OSError as exc:
        raise IngestionError(f"cannot read data file {path}: {exc}") from exc
    if not rows:
        raise IngestionError(f"data file {path} is empty (header row required)")

    header = [name.strip() for name in rows[0]]
    records = rows[1:]
    if not records:
        raise IngestionError(f"data file {path} has a header but no data rows")

    want_outcome = load_outcome and schema.outcome_col is not None
    needed = [schema.treatment_col, *schema.covariate_cols]
    if want_outcome:
        needed.append(schema.outcome_col)
    col_index: dict[str, int] = {}
    for name in needed:
        matches = [i for i, h in enumerate(header) if h == name]
        if not matches:
            raise SchemaError(f"missing column {name!r} in {path}")
        if len(matches) > 1:
            raise SchemaError(f"column {name!r} appears {len(matches)} times in {path}")
        col_index[name] = matches[0]

    n = len(records)
    width = len(header)
    for i, record in enumerate(records, start=1):
        if len(record) != width:
            raise IngestionError(
                f"row {i}: expected {width} fields, found {len(record)}"
            )

    def cell(i: int, name: str) -> str:
        return records[i][col_index[name]]

    # Treatment: collect raw values, then code by sorted distinct level.
    raw_z = []
    for i in range(n):
        text = cell(i, schema.treatment_col).strip()
        if not text:
            raise IngestionError(f"row {i + 1}, column {schema.treatment_col!r}: empty cell")
        raw_z.append(text)
    levels = _sorted_levels(raw_z)
    if len(levels) < 2:
        raise DomainError(
            f"arm 0 empty: treatment column {schema.treatment_col!r} takes only "
            f"the value {levels[0]!r}"
        )
    code = {level: k for k, level in enumerate(levels)}
    z = np.array([code[v] for v in raw_z], dtype=np.int64)

    # Covariates: numeric columns parsed directly, categoricals expanded.
    columns: list[np.ndarray] = []
    names: list[str] = []
    categorical = set(schema.categorical_cols)
    for name in schema.covariate_cols:
        if name in categorical:
            raw = [cell(i, name).strip() for i in range(n)]
            for i, text in enumerate(raw):
                if not text:
                    raise IngestionError(f"row {i + 1}, column {name!r}: empty cell")
            cat_levels = sorted(set(raw))
            for level in cat_levels[1:]:
                columns.append(np.array([1.0 if v == level else 0.0 for v in raw]))
                names.append(f"{name}={level}")
        else:
            columns.append(
                np.array([_parse_cell(cell(i, name), i + 1, name) for i in range(n)])
            )
            names.append(name)
    X = np.column_stack(columns) if columns else np.empty((n, 0))

    y = None
    family = None
    if want_outcome:
        y = np.array(
            [_parse_cell(cell(i, schema.outcome_col), i + 1, schema.outcome_col) for i in range(n)]
        )
        family = schema.outcome_family
        if family == "binary" and not np.all(np.isin(y, (0.0, 1.0))):
            bad = int(np.nonzero(~np.isin(y, (0.0, 1.0)))[0][0])
            raise IngestionError(
                f"row {bad + 1}, column {schema.outcome_col!r}: binary outcome "
                f"value {y[bad]!r} is not 0 or 1"
            )

    return Dataset(
        covariates=X,
        covariate_names=tuple(names),
        treatment=z,
        arms=len(levels),
        outcome=y,
        outcome_family=family,
        treatment_levels=tuple(levels),
    )


def write_csv(data: Dataset, path: str | Path) -> None:
    """Export a Dataset to delimited text that round-trips through ingest.

    Treatment is written as the integer arm code, so re-ingesting yields the
    same codes; floats are written with repr so values survive exactly.
    """
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        header = list(data.covariate_names) + ["treatment"]
        if data.outcome is not None:
            header.append("outcome")
        writer.writerow(header)
        for i in range(data.n):
            row = [repr(float(v)) for v in data.covariates[i]]
            row.append(str(int(data.treatment[i])))
            if data.outcome is not None:
                row.append(repr(float(data.outcome[i])))
            writer.writerow(row)
