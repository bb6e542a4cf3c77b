"""Right-censored lifetime data: schema, CSV ingestion, summaries, design matrices.

A :class:`Cohort` stores durations, event indicators and covariate columns as
read-only numpy arrays.  Categorical covariates are stored as integer codes into
the level list declared by the schema; the first level is the reference level
for dummy coding.
"""

from __future__ import annotations

import csv
import io
import math
import os
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, UsageError

PAPER_DURATION = "age"
PAPER_EVENT = "status"
PAPER_CATEGORICAL = ("form", "strategy")
PAPER_CONTINUOUS = (
    "profit",
    "mcost",
    "netbirths",
    "netdeaths",
    "nodebirths",
    "nodedeaths",
    "stock1",
    "stock2",
    "stock3",
)
PAPER_COLUMNS = (PAPER_DURATION, PAPER_EVENT) + PAPER_CATEGORICAL + PAPER_CONTINUOUS


@dataclass(frozen=True)
class Categorical:
    """Categorical covariate kind.  ``levels=None`` asks load_csv to infer them."""

    levels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.levels is not None:
            levels = tuple(str(v) for v in self.levels)
            object.__setattr__(self, "levels", levels)
            if not levels:
                raise UsageError("categorical level list must be non-empty")
            if len(set(levels)) != len(levels):
                raise UsageError(f"duplicate categorical levels in {levels}")


@dataclass(frozen=True)
class Continuous:
    pass


@dataclass(frozen=True)
class Covariate:
    name: str
    kind: Categorical | Continuous

    @property
    def is_categorical(self) -> bool:
        return isinstance(self.kind, Categorical)


@dataclass(frozen=True)
class CovariateSchema:
    covariates: tuple[Covariate, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        names = [c.name for c in self.covariates]
        if len(set(names)) != len(names):
            raise UsageError(f"covariate names must be unique, got {names}")

    @classmethod
    def build(cls, categorical: Mapping[str, Sequence] | None = None,
              continuous: Sequence[str] = ()) -> "CovariateSchema":
        """Convenience constructor: categorical first (in mapping order), then continuous."""
        covs = [Covariate(name, Categorical(None if levels is None else tuple(levels)))
                for name, levels in (categorical or {}).items()]
        covs += [Covariate(name, Continuous()) for name in continuous]
        return cls(tuple(covs))

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.covariates]

    def __len__(self):
        return len(self.covariates)

    def __iter__(self):
        return iter(self.covariates)

    def __getitem__(self, name: str) -> Covariate:
        for c in self.covariates:
            if c.name == name:
                return c
        raise UsageError(f"unknown variable {name!r}; schema has {self.names}")

    def __contains__(self, name) -> bool:
        return name in self.names


@dataclass(frozen=True)
class SurvivalRecord:
    duration: float
    event: int
    covariates: tuple = ()


def _readonly(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Cohort:
    """Immutable collection of right-censored records.

    ``columns`` maps every schema name to an array: integer level codes for
    categorical covariates, floats for continuous ones.
    """

    schema: CovariateSchema
    durations: np.ndarray
    events: np.ndarray
    columns: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        t = _readonly(self.durations, float)
        e = _readonly(self.events, np.int8)
        if t.ndim != 1 or e.shape != t.shape:
            raise DataError("durations and events must be 1-d arrays of equal length")
        if not np.all(np.isfinite(t)) or np.any(t < 0):
            raise DataError("durations must be finite and non-negative")
        if not np.all((e == 0) | (e == 1)):
            raise DataError("events must be 0 or 1")
        cols = OrderedDict()
        for cov in self.schema:
            if cov.name not in self.columns:
                raise DataError(f"missing column for covariate {cov.name!r}")
            raw = np.asarray(self.columns[cov.name])
            if raw.shape != t.shape:
                raise DataError(f"column {cov.name!r} has wrong length")
            if cov.is_categorical:
                if cov.kind.levels is None:
                    raise UsageError(f"categorical {cov.name!r} has no levels declared")
                codes = _readonly(raw, np.int64)
                if codes.size and (codes.min() < 0 or codes.max() >= len(cov.kind.levels)):
                    raise DataError(f"level code out of range in {cov.name!r}")
                cols[cov.name] = codes
            else:
                vals = _readonly(raw, float)
                if not np.all(np.isfinite(vals)):
                    raise DataError(f"non-finite value in continuous column {cov.name!r}")
                cols[cov.name] = vals
        object.__setattr__(self, "durations", t)
        object.__setattr__(self, "events", e)
        object.__setattr__(self, "columns", cols)

    @classmethod
    def from_records(cls, schema: CovariateSchema, records: Iterable[SurvivalRecord]) -> "Cohort":
        records = list(records)
        columns = {}
        for j, cov in enumerate(schema):
            vals = []
            for k, r in enumerate(records):
                if len(r.covariates) != len(schema):
                    raise DataError(f"record {k + 1}: expected {len(schema)} covariates, "
                                    f"got {len(r.covariates)}")
                v = r.covariates[j]
                if cov.is_categorical:
                    try:
                        vals.append(cov.kind.levels.index(str(v)))
                    except ValueError:
                        raise DataError(f"record {k + 1}: level {v!r} not declared "
                                        f"for {cov.name!r}") from None
                else:
                    vals.append(float(v))
            columns[cov.name] = np.array(vals, dtype=np.int64 if cov.is_categorical else float)
        return cls(schema,
                   np.array([r.duration for r in records], dtype=float),
                   np.array([r.event for r in records], dtype=np.int8),
                   columns)

    def __len__(self):
        return self.durations.shape[0]

    @property
    def n_events(self) -> int:
        return int(self.events.sum())

    @property
    def censored_fraction(self) -> float:
        return 1.0 - self.events.mean() if len(self) else float("nan")

    @property
    def records(self) -> list[SurvivalRecord]:
        out = []
        for i in range(len(self)):
            covs = []
            for cov in self.schema:
                v = self.columns[cov.name][i]
                covs.append(cov.kind.levels[v] if cov.is_categorical else float(v))
            out.append(SurvivalRecord(float(self.durations[i]), int(self.events[i]), tuple(covs)))
        return out

    def subset(self, index) -> "Cohort":
        """Sub-cohort from a boolean mask or integer index array (order preserved)."""
        index = np.asarray(index)
        return Cohort(self.schema, self.durations[index], self.events[index],
                      {k: v[index] for k, v in self.columns.items()})

    def categorical(self, variable: str) -> tuple[tuple[str, ...], np.ndarray]:
        """Level list and code array of a categorical covariate."""
        cov = self.schema[variable]
        if not cov.is_categorical:
            raise UsageError(f"variable {variable!r} is continuous, expected categorical")
        return cov.kind.levels, self.columns[variable]

    def with_durations(self, durations) -> "Cohort":
        return Cohort(self.schema, durations, self.events, self.columns)

    def fingerprint(self) -> tuple:
        """Cheap identity of the data, used to check that fits share a cohort."""
        return (len(self), self.durations.tobytes().__hash__(), self.events.tobytes().__hash__())


# ---------------------------------------------------------------------------
# CSV


def _open_text(source):
    if isinstance(source, (str, os.PathLike)):
        return open(source, newline="", encoding="utf-8")
    if isinstance(source, io.TextIOBase):
        return source
    if hasattr(source, "read") and isinstance(source.read(0), bytes):
        return io.TextIOWrapper(source, encoding="utf-8", newline="")
    return source


def load_csv(source, duration_col: str = PAPER_DURATION, event_col: str = PAPER_EVENT,
             schema: CovariateSchema | None = None,
             categorical: Sequence[str] | None = None) -> Cohort:
    """Read a cohort from comma-separated text with a header row.

    Parameters
    ----------
    source : path, text stream or byte stream
    duration_col, event_col : str
        Columns holding the follow-up time and the 0/1 event indicator.
    schema : CovariateSchema, optional
        Covariates to read.  Categorical entries with ``levels=None`` get their
        levels inferred from the data, sorted lexicographically.  When omitted,
        every other column is a covariate: names listed in `categorical` (by
        default ``form`` and ``strategy``) are categorical, the rest
        continuous.
    """
    fh = _open_text(source)
    try:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError("empty file: no header row") from None
        rows = [r for r in reader if r and any(cell.strip() for cell in r)]
    finally:
        if isinstance(source, (str, os.PathLike)):
            fh.close()

    for col in (duration_col, event_col):
        if col not in header:
            raise DataError(f"missing column {col!r}; header is {header}")
    if schema is None:
        cat = set(PAPER_CATEGORICAL if categorical is None else categorical)
        others = [h for h in header if h not in (duration_col, event_col)]
        unknown = cat - set(others) - set(PAPER_CATEGORICAL if categorical is None else ())
        if unknown:
            raise DataError(f"categorical column(s) {sorted(unknown)} not in header")
        schema = CovariateSchema(tuple(
            Covariate(h, Categorical() if h in cat else Continuous()) for h in others))
    for cov in schema:
        if cov.name not in header:
            raise DataError(f"missing column {cov.name!r}; header is {header}")
    if not rows:
        raise DataError("empty file: no data rows")

    pos = {h: i for i, h in enumerate(header)}

    def cell(row, k, col):
        i = pos[col]
        if i >= len(row) or row[i].strip() == "":
            raise DataError(f"row {k}: missing value in column {col!r}")
        return row[i].strip()

    durations = np.empty(len(rows))
    events = np.empty(len(rows), dtype=np.int8)
    raw = {cov.name: [] for cov in schema}
    for k, row in enumerate(rows, start=1):
        text = cell(row, k, duration_col)
        try:
            t = float(text)
        except ValueError:
            raise DataError(f"row {k}: non-numeric duration {text!r}") from None
        if not math.isfinite(t) or t < 0:
            raise DataError(f"row {k}: duration must be finite and >= 0, got {text!r}")
        text = cell(row, k, event_col)
        try:
            e = float(text)
        except ValueError:
            e = None
        if e not in (0.0, 1.0):
            raise DataError(f"row {k}: event must be 0 or 1, got {text!r}")
        durations[k - 1] = t
        events[k - 1] = int(e)
        for cov in schema:
            text = cell(row, k, cov.name)
            if cov.is_categorical:
                raw[cov.name].append(text)
            else:
                try:
                    v = float(text)
                except ValueError:
                    raise DataError(f"row {k}: non-numeric value {text!r} "
                                    f"in column {cov.name!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"row {k}: non-finite value in column {cov.name!r}")
                raw[cov.name].append(v)

    covs, columns = [], {}
    for cov in schema:
        values = raw[cov.name]
        if cov.is_categorical:
            levels = cov.kind.levels
            if levels is None:
                levels = tuple(sorted(set(values)))
                cov = Covariate(cov.name, Categorical(levels))
            index = {lv: i for i, lv in enumerate(levels)}
            codes = np.empty(len(values), dtype=np.int64)
            for k, v in enumerate(values, start=1):
                if v not in index:
                    raise DataError(f"row {k}: level {v!r} not declared for {cov.name!r}")
                codes[k - 1] = index[v]
            columns[cov.name] = codes
        else:
            columns[cov.name] = np.array(values, dtype=float)
        covs.append(cov)
    return Cohort(CovariateSchema(tuple(covs)), durations, events, columns)


def write_csv(cohort: Cohort, dest, duration_col: str = PAPER_DURATION,
              event_col: str = PAPER_EVENT) -> None:
    """Write a cohort as CSV; floats use ``repr`` so a reload is exact."""
    own = isinstance(dest, (str, os.PathLike))
    fh = open(dest, "w", newline="", encoding="utf-8") if own else dest
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([duration_col, event_col] + cohort.schema.names)
        for r in cohort.records:
            w.writerow([repr(r.duration), r.event]
                       + [v if isinstance(v, str) else repr(v) for v in r.covariates])
    finally:
        if own:
            fh.close()


# ---------------------------------------------------------------------------
# Descriptive summaries


@dataclass(frozen=True)
class LevelSummary:
    level: str
    count: int
    percent: float
    censored: int
    censored_percent: float


@dataclass(frozen=True)
class ContinuousSummary:
    name: str
    mean: float
    sd: float | None  # None when n < 2 (sample SD undefined)

    @property
    def zero_variance(self) -> bool:
        return self.sd is None or self.sd == 0.0


@dataclass(frozen=True)
class SummaryReport:
    n: int
    n_events: int
    n_censored: int
    categorical: dict[str, list[LevelSummary]]
    continuous: list[ContinuousSummary]

    @property
    def censored_percent(self) -> float:
        return 100.0 * self.n_censored / self.n


def _pct(a, b):
    return 100.0 * a / b if b else float("nan")


def summarize(cohort: Cohort, duration_name: str = PAPER_DURATION) -> SummaryReport:
    """Level counts with censoring per categorical variable; mean/SD per continuous one.

    The duration itself is summarised as the first continuous row.
    """
    n = len(cohort)
    if n == 0:
        raise DataError("cannot summarize an empty cohort")
    censored = cohort.events == 0
    cats = OrderedDict()
    conts = [_describe(duration_name, cohort.durations)]
    for cov in cohort.schema:
        col = cohort.columns[cov.name]
        if cov.is_categorical:
            rows = []
            for code, level in enumerate(cov.kind.levels):
                mask = col == code
                c, cc = int(mask.sum()), int((mask & censored).sum())
                rows.append(LevelSummary(level, c, _pct(c, n), cc, _pct(cc, c)))
            cats[cov.name] = rows
        else:
            conts.append(_describe(cov.name, col))
    return SummaryReport(n, cohort.n_events, int(censored.sum()), cats, conts)


def _describe(name, x):
    sd = float(np.std(x, ddof=1)) if x.size > 1 else None
    return ContinuousSummary(name, float(np.mean(x)), sd)


def split_by_level(cohort: Cohort, variable: str) -> "OrderedDict[str, Cohort]":
    """Partition the cohort by the levels of a categorical variable.

    Every declared level gets an entry (possibly an empty cohort); record order
    is preserved within each part.
    """
    levels, codes = cohort.categorical(variable)
    return OrderedDict((lv, cohort.subset(np.flatnonzero(codes == i)))
                       for i, lv in enumerate(levels))


# ---------------------------------------------------------------------------
# Design matrices


@dataclass(frozen=True)
class Term:
    variable: str
    levels: tuple[str, ...] | None  # None for continuous

    @property
    def column_names(self) -> list[str]:
        if self.levels is None:
            return [self.variable]
        return [f"{self.variable}[{lv}]" for lv in self.levels[1:]]


@dataclass(frozen=True, eq=False)
class Design:
    """Dummy-coded design matrix (no intercept column)."""

    terms: tuple[Term, ...]
    X: np.ndarray

    @property
    def names(self) -> list[str]:
        return [n for t in self.terms for n in t.column_names]

    @property
    def variables(self) -> list[str]:
        return [t.variable for t in self.terms]

    def encode(self, values: Mapping[str, object]) -> np.ndarray:
        """One design row from a mapping of variable → value (level or number)."""
        row = []
        for term in self.terms:
            if term.variable not in values:
                raise UsageError(f"missing value for {term.variable!r}")
            v = values[term.variable]
            if term.levels is None:
                row.append(float(v))
            else:
                if str(v) not in term.levels:
                    raise UsageError(f"unknown level {v!r} for {term.variable!r}; "
                                     f"levels are {list(term.levels)}")
                row += [1.0 if str(v) == lv else 0.0 for lv in term.levels[1:]]
        return np.array(row)


def build_design(cohort: Cohort, variables: Sequence[str]) -> Design:
    if len(set(variables)) != len(variables):
        raise UsageError(f"duplicate variables in {list(variables)}")
    terms, blocks = [], []
    for name in variables:
        cov = cohort.schema[name]
        col = cohort.columns[name]
        if cov.is_categorical:
            levels = cov.kind.levels
            terms.append(Term(name, levels))
            blocks.append((col[:, None] == np.arange(1, len(levels))[None, :]).astype(float))
        else:
            terms.append(Term(name, None))
            blocks.append(col[:, None].astype(float))
    X = np.hstack(blocks) if blocks else np.empty((len(cohort), 0))
    return Design(tuple(terms), X)
