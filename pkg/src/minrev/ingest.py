"""Parse HMD-style deaths/exposures tables and panel CSVs into model datasets.

The expected plain-text layout is the HMD 1x1 format: at least two header
lines (a description line, then a column-header line naming Year, Age,
Female, Male, Total), followed by whitespace-delimited rows.  "." marks a
missing value and the open age group is written "110+".  Files are
user-supplied; nothing here touches the network.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from io import StringIO

import numpy as np

from minrev.errors import FormatError, GapError, MissingDataError, ParseError, SpecError
from minrev.estimate import KappaPanel
from minrev.mortality import MortalityDataset

__all__ = [
    "HmdTable",
    "DatasetSpec",
    "parse_hmd",
    "assemble_dataset",
    "load_kappa_csv",
    "dataset_to_csv",
    "load_dataset_csv",
]

_HMD_COLUMNS = ("year", "age", "female", "male", "total")


@dataclass(frozen=True)
class HmdTable:
    """Typed rows of one HMD 1x1 table; missing values are NaN, never zero.

    ``open_age`` flags rows whose age label carried a trailing "+"
    (the 110+ group); ``age`` then holds the lower endpoint.
    """

    country: str
    kind: str
    year: np.ndarray
    age: np.ndarray
    open_age: np.ndarray
    female: np.ndarray
    male: np.ndarray
    total: np.ndarray

    def column(self, sex: str) -> np.ndarray:
        try:
            return {"female": self.female, "male": self.male, "total": self.total}[sex]
        except KeyError:
            raise SpecError(f"unknown sex selector {sex!r}; use female, male, or total") from None


@dataclass(frozen=True)
class DatasetSpec:
    """Country, sex, age, and year selection for dataset assembly."""

    countries: tuple
    sex: str = "female"
    age_min: int = 0
    age_max: int = 95
    year_min: int = 1951
    year_max: int = 2011

    def __post_init__(self):
        object.__setattr__(self, "countries", tuple(str(c) for c in self.countries))
        if not self.countries:
            raise SpecError("at least one country is required")
        if self.sex not in ("female", "male", "total"):
            raise SpecError(f"unknown sex selector {self.sex!r}")
        if self.age_min > self.age_max or self.year_min > self.year_max:
            raise SpecError("age and year ranges must be non-empty")

    @property
    def ages(self) -> np.ndarray:
        return np.arange(self.age_min, self.age_max + 1)

    @property
    def years(self) -> np.ndarray:
        return np.arange(self.year_min, self.year_max + 1)


def _parse_value(token: str, lineno: int, what: str) -> float:
    if token == ".":
        return np.nan
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"cannot parse {what} value {token!r}", line=lineno) from None


def parse_hmd(stream, kind: str = "deaths", country: str = "") -> HmdTable:
    """Parse one HMD 1x1 file (deaths or exposures) from a text stream or string."""
    if isinstance(stream, str):
        stream = StringIO(stream)
    lines = stream.read().splitlines()

    header_at = None
    for i, line in enumerate(lines):
        tokens = [t.rstrip(",") .lower() for t in line.split()]
        if tuple(tokens) == _HMD_COLUMNS:
            header_at = i
            break
    if header_at is None:
        raise FormatError("no 'Year Age Female Male Total' header line found")

    years, ages, opens, females, males, totals = [], [], [], [], [], []
    for offset, line in enumerate(lines[header_at + 1 :], start=header_at + 2):
        if not line.strip():
            continue
        tokens = line.split()
        if len(tokens) != 5:
            raise FormatError(f"expected 5 columns, found {len(tokens)}", line=offset)
        try:
            years.append(int(tokens[0]))
        except ValueError:
            raise ParseError(f"cannot parse year {tokens[0]!r}", line=offset) from None
        age_token = tokens[1]
        is_open = age_token.endswith("+")
        try:
            ages.append(int(age_token[:-1] if is_open else age_token))
        except ValueError:
            raise ParseError(f"cannot parse age {age_token!r}", line=offset) from None
        opens.append(is_open)
        females.append(_parse_value(tokens[2], offset, "female"))
        males.append(_parse_value(tokens[3], offset, "male"))
        totals.append(_parse_value(tokens[4], offset, "total"))
    return HmdTable(
        country=country,
        kind=kind,
        year=np.asarray(years, dtype=int),
        age=np.asarray(ages, dtype=int),
        open_age=np.asarray(opens, dtype=bool),
        female=np.asarray(females, dtype=float),
        male=np.asarray(males, dtype=float),
        total=np.asarray(totals, dtype=float),
    )


def _table_to_grid(table: HmdTable, spec: DatasetSpec, country: str, gaps: list) -> np.ndarray:
    """Select (age, year) cells from one table, recording any gaps."""
    ages, years = spec.ages, spec.years
    grid = np.full((ages.size, years.size), np.nan)
    keep = ~table.open_age
    in_range = (
        keep
        & (table.age >= spec.age_min) & (table.age <= spec.age_max)
        & (table.year >= spec.year_min) & (table.year <= spec.year_max)
    )
    ai = table.age[in_range] - spec.age_min
    yi = table.year[in_range] - spec.year_min
    grid[ai, yi] = table.column(spec.sex)[in_range]
    missing = np.argwhere(np.isnan(grid))
    for a, y in missing:
        gaps.append((country, int(years[y]), int(ages[a])))
    return grid


def assemble_dataset(deaths: dict, exposures: dict, spec: DatasetSpec) -> MortalityDataset:
    """Combine per-country deaths and exposures tables into a MortalityDataset.

    ``deaths`` and ``exposures`` map country code to :class:`HmdTable`.
    Raises :class:`SpecError` when a requested country has no tables at
    all, and :class:`MissingDataError` listing every (country, year, age)
    gap when the requested window is not fully covered.
    """
    absent = [c for c in spec.countries if c not in deaths or c not in exposures]
    if absent:
        raise SpecError(f"no deaths/exposures tables supplied for: {', '.join(absent)}")
    shape = (spec.ages.size, spec.years.size, len(spec.countries))
    d = np.empty(shape)
    e = np.empty(shape)
    gaps: list = []
    for j, country in enumerate(spec.countries):
        d[:, :, j] = _table_to_grid(deaths[country], spec, country, gaps)
        e[:, :, j] = _table_to_grid(exposures[country], spec, country, gaps)
    if gaps:
        unique_gaps = sorted(set(gaps))
        preview = ", ".join(f"({c}, {y}, {a})" for c, y, a in unique_gaps[:8])
        more = "" if len(unique_gaps) <= 8 else f" and {len(unique_gaps) - 8} more"
        raise MissingDataError(
            f"{len(unique_gaps)} missing (country, year, age) cells: {preview}{more}",
            gaps=unique_gaps,
        )
    return MortalityDataset(deaths=d, exposures=e, ages=spec.ages, years=spec.years, populations=spec.countries)


def load_kappa_csv(stream) -> KappaPanel:
    """Load a (year, population, kappa) CSV into a dense panel.

    Duplicate keys raise :class:`ParseError`; an incomplete year x
    population grid raises :class:`GapError`.
    """
    if isinstance(stream, str):
        stream = StringIO(stream)
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise FormatError("empty kappa CSV") from None
    expected = ["year", "population", "kappa"]
    if [h.strip().lower() for h in header] != expected:
        raise FormatError(f"expected header {expected}, got {header}")
    cells: dict = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not t.strip() for t in row):
            continue
        if len(row) != 3:
            raise ParseError(f"expected 3 fields, got {len(row)}", line=lineno)
        try:
            year = int(row[0])
            value = float(row[2])
        except ValueError:
            raise ParseError(f"cannot parse row {row!r}", line=lineno) from None
        key = (year, row[1].strip())
        if key in cells:
            raise ParseError(f"duplicate (year, population) key {key}", line=lineno)
        cells[key] = value
    if not cells:
        raise FormatError("kappa CSV has no data rows")
    years = np.array(sorted({k[0] for k in cells}))
    pops = sorted({k[1] for k in cells})
    missing = [(int(y), p) for y in years for p in pops if (y, p) not in cells]
    if missing:
        raise GapError(f"missing (year, population) combinations: {missing[:8]}")
    values = np.array([[cells[(int(y), p)] for p in pops] for y in years])
    return KappaPanel(values=values, years=years, populations=tuple(pops))


def dataset_to_csv(dataset: MortalityDataset, fileobj) -> None:
    """Long-form dataset CSV (age, year, population, deaths, exposure)."""
    writer = csv.writer(fileobj)
    writer.writerow(["age", "year", "population", "deaths", "exposure"])
    for i, age in enumerate(dataset.ages):
        for j, year in enumerate(dataset.years):
            for k, pop in enumerate(dataset.populations):
                writer.writerow([
                    int(age), int(year), pop,
                    repr(float(dataset.deaths[i, j, k])),
                    repr(float(dataset.exposures[i, j, k])),
                ])


def load_dataset_csv(stream) -> MortalityDataset:
    """Load the long-form dataset CSV written by :func:`dataset_to_csv`."""
    if isinstance(stream, str):
        stream = StringIO(stream)
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise FormatError("empty dataset CSV") from None
    expected = ["age", "year", "population", "deaths", "exposure"]
    if [h.strip().lower() for h in header] != expected:
        raise FormatError(f"expected header {expected}, got {header}")
    cells: dict = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not t.strip() for t in row):
            continue
        if len(row) != 5:
            raise ParseError(f"expected 5 fields, got {len(row)}", line=lineno)
        try:
            key = (int(row[0]), int(row[1]), row[2].strip())
            value = (float(row[3]), float(row[4]))
        except ValueError:
            raise ParseError(f"cannot parse row {row!r}", line=lineno) from None
        if key in cells:
            raise ParseError(f"duplicate (age, year, population) key {key}", line=lineno)
        cells[key] = value
    if not cells:
        raise FormatError("dataset CSV has no data rows")
    ages = np.array(sorted({k[0] for k in cells}))
    years = np.array(sorted({k[1] for k in cells}))
    pops = sorted({k[2] for k in cells})
    missing = [k for k in ((a, y, p) for a in ages for y in years for p in pops) if (int(k[0]), int(k[1]), k[2]) not in cells]
    if missing:
        raise MissingDataError(f"missing (age, year, population) cells: {missing[:8]}", gaps=missing)
    deaths = np.empty((ages.size, years.size, len(pops)))
    exposures = np.empty_like(deaths)
    for i, a in enumerate(ages):
        for j, y in enumerate(years):
            for k, p in enumerate(pops):
                deaths[i, j, k], exposures[i, j, k] = cells[(int(a), int(y), p)]
    return MortalityDataset(deaths=deaths, exposures=exposures, ages=ages, years=years, populations=tuple(pops))
