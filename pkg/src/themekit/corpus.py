"""Case records, corpus IO, cohort filtering, and monthly aggregation."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, asdict
from typing import Callable, Iterable, Optional, Sequence


class CorpusError(Exception):
    """Raised for malformed input files or invalid corpus operations."""


CIRCUMSTANCE_FLAGS = (
    "school_problem",
    "mental_health_problem",
    "depressed_mood",
    "intimate_partner_problem",
    "family_problem",
    "other_relationship_problem",
)

_BOOL_FIELDS = ("transgender", "military", "student", "location_home", "weapon_firearm")
_INT_FIELDS = ("year", "month", "day_of_week", "age_years")
_STR_FIELDS = ("state", "sex", "race", "narrative_le", "narrative_cme")


@dataclass(frozen=True)
class Circumstances:
    """Binary-coded contributing circumstances abstracted from investigations."""

    school_problem: bool = False
    mental_health_problem: bool = False
    depressed_mood: bool = False
    intimate_partner_problem: bool = False
    family_problem: bool = False
    other_relationship_problem: bool = False

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class CaseRecord:
    """One decedent incident: metadata, circumstance flags, two narratives."""

    case_id: str
    state: Optional[str] = None
    year: Optional[int] = None
    month: Optional[int] = None
    day_of_week: Optional[int] = None
    age_years: Optional[int] = None
    sex: Optional[str] = None
    transgender: Optional[bool] = None
    race: Optional[str] = None
    military: Optional[bool] = None
    student: Optional[bool] = None
    location_home: Optional[bool] = None
    weapon_firearm: Optional[bool] = None
    circumstances: Circumstances = field(default_factory=Circumstances)
    narrative_le: str = ""
    narrative_cme: str = ""
    extras: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if not self.case_id:
            raise CorpusError("case_id must be non-empty")
        if self.month is not None and not 1 <= self.month <= 12:
            raise CorpusError(f"case {self.case_id}: month {self.month} not in 1..12")
        if self.day_of_week is not None and not 1 <= self.day_of_week <= 7:
            raise CorpusError(
                f"case {self.case_id}: day_of_week {self.day_of_week} not in 1..7"
            )
        if self.age_years is not None and self.age_years < 0:
            raise CorpusError(f"case {self.case_id}: age_years must be >= 0")

    @property
    def narrative(self) -> str:
        """Pipeline input text: both narratives joined with a blank line."""
        parts = [t for t in (self.narrative_le, self.narrative_cme) if t]
        return "\n\n".join(parts)

    def age_group(self) -> Optional[str]:
        """Computed bucket: 10_14, 15_19, or 20_24 (None outside 10-24)."""
        if self.age_years is None:
            return None
        if 10 <= self.age_years <= 14:
            return "10_14"
        if 15 <= self.age_years <= 19:
            return "15_19"
        if 20 <= self.age_years <= 24:
            return "20_24"
        return None


@dataclass(frozen=True)
class CohortFilter:
    min_age: int
    max_age: int
    min_year: int
    max_year: int
    states: Optional[frozenset] = None

    def __post_init__(self) -> None:
        if self.min_age > self.max_age:
            raise CorpusError("min_age must be <= max_age")
        if self.min_year > self.max_year:
            raise CorpusError("min_year must be <= max_year")

    def matches(self, case: CaseRecord) -> bool:
        if case.age_years is None or not self.min_age <= case.age_years <= self.max_age:
            return False
        if case.year is None or not self.min_year <= case.year <= self.max_year:
            return False
        if self.states is not None and case.state not in self.states:
            return False
        return True


@dataclass(frozen=True)
class MonthlySeries:
    """Contiguous monthly counts starting at (year, month)."""

    start: tuple
    values: tuple

    def __post_init__(self) -> None:
        year, month = self.start
        if not 1 <= month <= 12:
            raise CorpusError(f"start month {month} not in 1..12")
        if any(v < 0 for v in self.values):
            raise CorpusError("monthly counts must be non-negative")
        _ = year

    def __len__(self) -> int:
        return len(self.values)

    def month_at(self, index: int) -> tuple:
        year, month = self.start
        total = (year * 12 + (month - 1)) + index
        return total // 12, total % 12 + 1


def _parse_bool(value, *, row: int, name: str, csv_style: bool) -> Optional[bool]:
    if value is None or value == "":
        return None
    if isinstance(value, bool):
        return value
    if csv_style and value in ("0", "1"):
        return value == "1"
    raise CorpusError(f"row {row}: field '{name}' is not a valid boolean: {value!r}")


def _parse_int(value, *, row: int, name: str) -> Optional[int]:
    if value is None or value == "":
        return None
    try:
        return int(value)
    except (TypeError, ValueError):
        raise CorpusError(f"row {row}: field '{name}' is not an integer: {value!r}")


def _record_from_mapping(obj: dict, *, row: int, csv_style: bool) -> CaseRecord:
    if "case_id" not in obj or obj["case_id"] in (None, ""):
        raise CorpusError(f"row {row}: field 'case_id' is missing")
    kwargs: dict = {"case_id": str(obj["case_id"])}
    known = {"case_id", "circumstances"} | set(_BOOL_FIELDS) | set(_INT_FIELDS) | set(_STR_FIELDS)
    for name in _INT_FIELDS:
        kwargs[name] = _parse_int(obj.get(name), row=row, name=name)
    for name in _BOOL_FIELDS:
        kwargs[name] = _parse_bool(obj.get(name), row=row, name=name, csv_style=csv_style)
    for name in _STR_FIELDS:
        value = obj.get(name)
        if name.startswith("narrative"):
            kwargs[name] = "" if value is None else str(value)
        else:
            kwargs[name] = None if value in (None, "") else str(value)

    circ_source = obj.get("circumstances")
    if circ_source is None:
        # CSV (and flat JSONL) carries the six flags as top-level columns.
        circ_source = {k: obj.get(k) for k in CIRCUMSTANCE_FLAGS if k in obj}
        known |= set(CIRCUMSTANCE_FLAGS)
    if not isinstance(circ_source, dict):
        raise CorpusError(f"row {row}: field 'circumstances' must be an object")
    circ_kwargs = {}
    for flag in CIRCUMSTANCE_FLAGS:
        parsed = _parse_bool(circ_source.get(flag), row=row, name=flag, csv_style=csv_style)
        circ_kwargs[flag] = bool(parsed) if parsed is not None else False
    kwargs["circumstances"] = Circumstances(**circ_kwargs)

    kwargs["extras"] = {k: v for k, v in obj.items() if k not in known}
    try:
        return CaseRecord(**kwargs)
    except CorpusError as exc:
        raise CorpusError(f"row {row}: {exc}") from exc


def load_cases(path, format: Optional[str] = None) -> list:
    """Load CaseRecords from a JSONL or CSV file.

    The format is inferred from the extension when not given. Raises
    CorpusError on malformed rows (with row index and field name) and on
    duplicate case ids.
    """
    path = str(path)
    if format is None:
        format = "csv" if path.endswith(".csv") else "jsonl"
    if format not in ("jsonl", "csv"):
        raise CorpusError(f"unknown corpus format: {format}")

    cases: list = []
    seen: set = set()
    if format == "jsonl":
        with open(path, encoding="utf-8") as fh:
            for row, line in enumerate(fh):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CorpusError(f"row {row}: invalid JSON: {exc}") from exc
                if not isinstance(obj, dict):
                    raise CorpusError(f"row {row}: expected a JSON object")
                cases.append(_record_from_mapping(obj, row=row, csv_style=False))
    else:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                return []
            for row, obj in enumerate(reader):
                obj.pop(None, None)
                cases.append(_record_from_mapping(obj, row=row, csv_style=True))

    for case in cases:
        if case.case_id in seen:
            raise CorpusError(f"duplicate case_id: {case.case_id}")
        seen.add(case.case_id)
    return cases


def _record_to_mapping(case: CaseRecord, *, csv_style: bool) -> dict:
    obj: dict = {"case_id": case.case_id}
    for name in _INT_FIELDS:
        obj[name] = getattr(case, name)
    obj["state"] = case.state
    obj["sex"] = case.sex
    obj["race"] = case.race
    for name in _BOOL_FIELDS:
        obj[name] = getattr(case, name)
    if csv_style:
        obj.update(case.circumstances.as_dict())
    else:
        obj["circumstances"] = case.circumstances.as_dict()
    obj["narrative_le"] = case.narrative_le
    obj["narrative_cme"] = case.narrative_cme
    obj.update(case.extras)
    return obj


def save_cases(cases: Sequence[CaseRecord], path, format: Optional[str] = None) -> None:
    """Write cases back out; inverse of load_cases on the schema fields."""
    path = str(path)
    if format is None:
        format = "csv" if path.endswith(".csv") else "jsonl"
    if format == "jsonl":
        with open(path, "w", encoding="utf-8") as fh:
            for case in cases:
                fh.write(json.dumps(_record_to_mapping(case, csv_style=False)) + "\n")
    elif format == "csv":
        fieldnames = (
            ["case_id"]
            + list(_INT_FIELDS)
            + ["state", "sex", "race"]
            + list(_BOOL_FIELDS)
            + list(CIRCUMSTANCE_FLAGS)
            + ["narrative_le", "narrative_cme"]
        )
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fieldnames, extrasaction="ignore")
            writer.writeheader()
            for case in cases:
                obj = _record_to_mapping(case, csv_style=True)
                for key, value in list(obj.items()):
                    if isinstance(value, bool):
                        obj[key] = "1" if value else "0"
                    elif value is None:
                        obj[key] = ""
                writer.writerow(obj)
    else:
        raise CorpusError(f"unknown corpus format: {format}")


def filter_cohort(cases: Iterable[CaseRecord], f: CohortFilter) -> list:
    """Retain cases matching the age/year/state window, preserving order."""
    return [case for case in cases if f.matches(case)]


def monthly_counts(
    cases: Sequence[CaseRecord], predicate: Callable[[CaseRecord], bool]
) -> MonthlySeries:
    """Count predicate-matching cases per calendar month.

    Buckets span from the earliest to the latest (year, month) present in
    the cohort; months with no matching cases get 0.
    """
    dated = [c for c in cases if c.year is not None and c.month is not None]
    if not dated:
        raise CorpusError("monthly_counts requires at least one dated case")
    indices = [c.year * 12 + (c.month - 1) for c in dated]
    lo, hi = min(indices), max(indices)
    values = [0] * (hi - lo + 1)
    for case, idx in zip(dated, indices):
        if predicate(case):
            values[idx - lo] += 1
    return MonthlySeries(start=(lo // 12, lo % 12 + 1), values=tuple(values))
