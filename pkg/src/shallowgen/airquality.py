"""Air-quality data layer: measurement series, legislation metadata,
statistics, threshold exceedances, and the datasource consumed by the
text organizer.

Periods are half-open on the sample axis: a period covering the days
``start..end`` (inclusive) selects timestamps in ``[start 00:00, end+1 00:00)``
UTC.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from decimal import Decimal
from pathlib import Path

import jsonschema
import numpy as np

from .ir import FeatureStructure, Symbol

# ---------------------------------------------------------------------------
# Errors


class DataError(ValueError):
    """Malformed measurement or metadata input."""

    def __init__(self, message, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NoData(LookupError):
    """No samples fall inside the requested period."""


class RequestError(ValueError):
    """Unparseable or incompatible report request."""


# ---------------------------------------------------------------------------
# Periods

SEASONS = {
    # season -> (start month, start day, end month, end day, crosses year)
    "WINTER": (11, 1, 3, 31, True),
    "SUMMER": (4, 1, 10, 31, False),
}


@dataclass(frozen=True)
class Period:
    kind: str  # SEASON | YEAR | INTERVAL
    start: date
    end: date  # inclusive
    season: str | None = None
    year: int | None = None

    @classmethod
    def season_of(cls, season: str, year: int) -> "Period":
        season = season.upper()
        if season not in SEASONS:
            raise RequestError(f"unknown season {season!r}")
        m0, d0, m1, d1, crosses = SEASONS[season]
        return cls("SEASON", date(year, m0, d0), date(year + crosses, m1, d1), season, year)

    @classmethod
    def year_of(cls, year: int) -> "Period":
        return cls("YEAR", date(year, 1, 1), date(year, 12, 31), None, year)

    @classmethod
    def interval(cls, start: date, end: date) -> "Period":
        if end < start:
            raise RequestError(f"period ends before it starts: {start}..{end}")
        return cls("INTERVAL", start, end)

    @property
    def bounds(self) -> tuple[np.datetime64, np.datetime64]:
        lo = np.datetime64(self.start.isoformat(), "s")
        hi = np.datetime64((self.end + timedelta(days=1)).isoformat(), "s")
        return lo, hi

    def description(self) -> FeatureStructure:
        """The period as an IR time expression."""
        if self.kind == "SEASON":
            name = FeatureStructure([("SEASON", Symbol(self.season)), ("YEAR", self.year)])
        elif self.kind == "YEAR":
            name = FeatureStructure([("YEAR", self.year)])
        else:
            name = FeatureStructure([("FROM", self.start.isoformat()), ("TO", self.end.isoformat())])
        return FeatureStructure([("PRED", Symbol(self.kind)), ("NAME", name)])

    def record(self) -> FeatureStructure:
        """Verbose data record handed to the organizer (bounds + description)."""
        bounds = FeatureStructure([("START", self.start.isoformat()), ("END", self.end.isoformat())])
        return FeatureStructure([("BOUNDS", bounds), ("DESCRIPTION", self.description())])


def parse_period(text: str) -> Period:
    """``winter 1996``, ``summer 1997``, ``year 1996``, ``1996`` or
    ``YYYY-MM-DD..YYYY-MM-DD``."""
    s = " ".join(text.split()).lower()
    try:
        if ".." in s:
            a, b = (p.strip() for p in s.split("..", 1))
            return Period.interval(date.fromisoformat(a), date.fromisoformat(b))
        parts = s.split(" ")
        if len(parts) == 1:
            return Period.year_of(int(parts[0]))
        if len(parts) == 2:
            word, year = parts[0], int(parts[1])
            if word == "year":
                return Period.year_of(year)
            return Period.season_of(word, year)
    except ValueError as e:
        raise RequestError(f"unparseable period {text!r}: {e}") from None
    raise RequestError(f"unparseable period {text!r}")


# ---------------------------------------------------------------------------
# Measurements


@dataclass(frozen=True, eq=False)
class MeasurementSeries:
    station: str
    pollutant: str
    times: np.ndarray  # datetime64[s], strictly increasing
    values: np.ndarray  # float64
    unit: str

    def __len__(self):
        return len(self.times)

    @property
    def cadence(self) -> int:
        """Sampling interval in seconds: the most frequent spacing, one hour
        for series too short to tell."""
        if len(self.times) < 2:
            return 3600
        diffs = np.diff(self.times).astype(np.int64)
        vals, counts = np.unique(diffs, return_counts=True)
        return int(vals[np.argmax(counts)])

    def window(self, period: Period) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = period.bounds
        mask = (self.times >= lo) & (self.times < hi)
        return self.times[mask], self.values[mask]


MEASUREMENT_HEADER = ["timestamp", "station", "pollutant", "value", "unit"]


def _parse_timestamp(s: str) -> np.datetime64:
    dt = datetime.fromisoformat(s.strip().replace("Z", "+00:00"))
    if dt.tzinfo is not None:
        dt = dt.astimezone(timezone.utc).replace(tzinfo=None)
    return np.datetime64(dt.isoformat(), "s")


def _parse_timestamps(stamps: list[str], lines: list[int]) -> np.ndarray:
    # fast path for the usual "...Z" form; otherwise parse row by row so
    # that errors carry a line number
    if all(t.endswith("Z") and "+" not in t for t in stamps):
        try:
            return np.array([t[:-1] for t in stamps], dtype="datetime64[s]")
        except ValueError:
            pass
    out = np.empty(len(stamps), dtype="datetime64[s]")
    for i, (t, line) in enumerate(zip(stamps, lines)):
        try:
            out[i] = _parse_timestamp(t)
        except ValueError as e:
            raise DataError(f"bad timestamp {t!r}: {e}", line) from None
    return out


def load_measurements(path) -> dict[tuple[str, str], MeasurementSeries]:
    """Read a measurements CSV into series keyed by (station, pollutant)."""
    groups: dict[tuple[str, str], tuple[list, list, list, list]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return {}
        if [h.strip().lower() for h in header] != MEASUREMENT_HEADER:
            raise DataError(f"expected header {','.join(MEASUREMENT_HEADER)}", 1)
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 5:
                raise DataError(f"expected 5 fields, got {len(row)}", line)
            ts, station, pollutant, value, unit = (c.strip() for c in row)
            try:
                v = float(value)
            except ValueError:
                raise DataError(f"bad value {value!r}", line) from None
            stamps, values, units, lines = groups.setdefault((station.upper(), pollutant.upper()), ([], [], [], []))
            stamps.append(ts)
            values.append(v)
            units.append(unit.upper())
            lines.append(line)
    out = {}
    problems = []
    for (station, pollutant), (stamps, values, units, lines) in groups.items():
        times = _parse_timestamps(stamps, lines)
        bad = np.flatnonzero(np.diff(times).astype(np.int64) <= 0)
        if bad.size:
            i = int(bad[0]) + 1
            problems.append(DataError(f"timestamp {stamps[i]} not after previous sample of {station}/{pollutant}", lines[i]))
        mixed = [i for i, u in enumerate(units) if u != units[0]]
        if mixed:
            i = mixed[0]
            problems.append(DataError(f"unit {units[i]} differs from {units[0]} in {station}/{pollutant}", lines[i]))
        out[station, pollutant] = MeasurementSeries(station, pollutant, times, np.array(values, dtype=np.float64), units[0])
    if problems:
        raise min(problems, key=lambda e: e.line)
    return out


# ---------------------------------------------------------------------------
# Metadata


@dataclass(frozen=True)
class ThresholdSpec:
    country: str
    law: str
    threshold_type: str
    pollutant: str
    amount: int | Decimal
    unit: str
    hours: int

    def __post_init__(self):
        if not self.amount > 0:
            raise DataError(f"threshold amount must be positive: {self.amount}")
        if self.hours < 1:
            raise DataError(f"exposure duration must be at least one hour: {self.hours}")


METADATA_SCHEMA = {
    "type": "object",
    "required": ["stations", "pollutants", "legislations"],
    "properties": {
        "stations": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["name"],
                "properties": {"name": {"type": "string", "minLength": 1}},
            },
        },
        "pollutants": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["unit"],
                "properties": {"unit": {"type": "string", "minLength": 1}},
            },
        },
        "legislations": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "additionalProperties": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["type", "pollutant", "amount", "unit", "hours"],
                        "properties": {
                            "type": {"type": "string"},
                            "pollutant": {"type": "string"},
                            "amount": {"type": "number", "exclusiveMinimum": 0},
                            "unit": {"type": "string"},
                            "hours": {"type": "integer", "minimum": 1},
                        },
                    },
                },
            },
        },
        "canned": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "additionalProperties": {"type": "string"},
            },
        },
    },
}


@dataclass(frozen=True)
class Metadata:
    stations: dict
    pollutants: dict
    thresholds: tuple[ThresholdSpec, ...]
    canned: dict = field(default_factory=dict)

    def station_name(self, station: str) -> str:
        try:
            return self.stations[station.upper()]["name"]
        except KeyError:
            raise LookupError(f"unknown station {station}") from None

    def unit(self, pollutant: str) -> str:
        try:
            return self.pollutants[pollutant.upper()]["unit"].upper()
        except KeyError:
            raise LookupError(f"unknown pollutant {pollutant}") from None

    def thresholds_for(self, country: str, pollutant: str) -> list[ThresholdSpec]:
        c, p = country.upper(), pollutant.upper()
        return [t for t in self.thresholds if t.country == c and t.pollutant == p]

    def threshold(self, country: str, pollutant: str) -> ThresholdSpec:
        """The primary (first declared) threshold of a legislation."""
        found = self.thresholds_for(country, pollutant)
        if not found:
            raise LookupError(f"no {country} threshold for {pollutant}")
        return found[0]

    def canned_text(self, key: str, lang: str) -> str:
        try:
            return self.canned[key.upper()][lang.upper()]
        except KeyError:
            raise LookupError(f"no canned text {key} in {lang}") from None


def _json_amount(v):
    # JSON integers stay ints; fractional amounts become exact decimals
    return v if isinstance(v, int) else Decimal(str(v))


def load_metadata(path) -> Metadata:
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as e:
            raise DataError(f"invalid JSON: {e.msg}", e.lineno) from None
    try:
        jsonschema.validate(raw, METADATA_SCHEMA)
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise DataError(f"metadata {where}: {e.message}") from None
    thresholds = []
    for country, laws in raw["legislations"].items():
        for law, specs in laws.items():
            for s in specs:
                thresholds.append(
                    ThresholdSpec(
                        country.upper(),
                        law.upper(),
                        s["type"].upper(),
                        s["pollutant"].upper(),
                        _json_amount(s["amount"]),
                        s["unit"].upper(),
                        s["hours"],
                    )
                )
    up = lambda d: {k.upper(): v for k, v in d.items()}  # noqa: E731
    canned = {k.upper(): up(v) for k, v in raw.get("canned", {}).items()}
    return Metadata(up(raw["stations"]), up(raw["pollutants"]), tuple(thresholds), canned)


# ---------------------------------------------------------------------------
# Statistics and exceedances


def aggregate_stat(series: MeasurementSeries, period: Period, kind: str) -> tuple[float, str]:
    _, values = series.window(period)
    if values.size == 0:
        raise NoData(f"no {series.pollutant} samples at {series.station} in {period.start}..{period.end}")
    kind = kind.upper()
    if kind == "AVERAGE":
        return float(values.mean()), series.unit
    if kind == "MAXIMUM":
        return float(values.max()), series.unit
    raise ValueError(f"unknown statistic {kind}")


@dataclass(frozen=True)
class ExceedanceResult:
    status: str  # YES | NO
    times: int

    def __post_init__(self):
        if (self.status == "NO") != (self.times == 0):
            raise ValueError(f"inconsistent exceedance result {self.status}/{self.times}")

    def to_fs(self) -> FeatureStructure:
        return FeatureStructure([("STATUS", Symbol(self.status)), ("TIMES", self.times)])


def window_length(series: MeasurementSeries, threshold: ThresholdSpec) -> int:
    cadence = series.cadence
    seconds = threshold.hours * 3600
    if seconds < cadence:
        raise ValueError(f"exposure of {threshold.hours} h is shorter than the sampling interval ({cadence} s)")
    if seconds % cadence:
        raise ValueError(f"exposure of {threshold.hours} h is not a whole number of samples ({cadence} s)")
    return seconds // cadence


MICRO = 10**6


def exceedances(series: MeasurementSeries, threshold: ThresholdSpec, period: Period) -> ExceedanceResult:
    """Count exceedance events of ``threshold`` within ``period``.

    A window is ``k`` consecutive, evenly spaced samples spanning the exposure
    duration; it qualifies when its mean is strictly above the amount.  Each
    maximal run of qualifying windows is one event.  Readings count to six decimal places.
    """
    if series.unit != threshold.unit:
        raise ValueError(f"unit mismatch: series in {series.unit}, threshold in {threshold.unit}")
    k = window_length(series, threshold)
    times, values = series.window(period)
    n = values.size - k + 1
    if n <= 0:
        return ExceedanceResult("NO", 0)
    # exact integer sums at micro-unit resolution; float sums misjudge
    # decimal readings that average exactly to the threshold
    micro = np.rint(values * MICRO).astype(np.int64)
    sums = np.lib.stride_tricks.sliding_window_view(micro, k).sum(axis=1)
    limit = int((Decimal(str(threshold.amount)) * MICRO).to_integral_value()) * k
    qualifies = sums > limit
    if k > 1:
        broken = np.diff(times).astype(np.int64) != series.cadence
        gaps = np.lib.stride_tricks.sliding_window_view(broken, k - 1).any(axis=1)
        qualifies &= ~gaps
    starts = qualifies & ~np.concatenate(([False], qualifies[:-1]))
    count = int(starts.sum())
    return ExceedanceResult("YES" if count else "NO", count)


# ---------------------------------------------------------------------------
# Requests

REPORT_TYPES = ("THRESHOLD-EXCEEDING", "AVERAGE", "MAXIMUM")
LANGUAGES = {"FR": "FRENCH", "FRENCH": "FRENCH", "DE": "GERMAN", "GERMAN": "GERMAN",
             "EN": "ENGLISH", "ENGLISH": "ENGLISH"}
COUNTRIES = {"DE": "DE", "GERMANY": "DE", "FR": "FR", "FRANCE": "FR"}
REQUEST_KEYS = ("report", "lang", "legislation", "station", "pollutant", "period",
                "compare", "confirm", "describe-station", "describe-pollutant")
REQUIRED_KEYS = ("report", "lang", "station", "pollutant", "period")

# Option pairs the navigator refuses, and options a report type cannot do
# without.  Statistic reports never compare against a legislation.
INCOMPATIBLE = {
    ("AVERAGE", "legislation"),
    ("MAXIMUM", "legislation"),
}
REQUIRES = {
    "THRESHOLD-EXCEEDING": ("legislation",),
}

_TRUE = {"yes", "true", "on", "1"}
_FALSE = {"no", "false", "off", "0"}


@dataclass(frozen=True)
class ReportRequest:
    report: str
    lang: str
    station: str
    pollutant: str | None
    period: Period
    legislation: str | None = None
    compare: Period | None = None
    confirm: bool = False
    describe_station: bool = False
    describe_pollutant: bool = False

    def option_keys(self) -> set[str]:
        keys = {"report", "lang", "station", "period"}
        for k in ("pollutant", "legislation", "compare"):
            if getattr(self, k) is not None:
                keys.add(k)
        for k in ("confirm", "describe_station", "describe_pollutant"):
            if getattr(self, k):
                keys.add(k.replace("_", "-"))
        return keys


def check_compatibility(req: ReportRequest) -> None:
    keys = req.option_keys()
    for report, key in sorted(INCOMPATIBLE):
        if req.report == report and key in keys:
            raise RequestError(f"incompatible options: report={report.lower()} with {key}")
    for key in REQUIRES.get(req.report, ()):
        if key not in keys:
            raise RequestError(f"report={req.report.lower()} requires {key}")


def _flag(key, v):
    s = v.lower()
    if s in _TRUE:
        return True
    if s in _FALSE:
        return False
    raise RequestError(f"{key}: expected yes or no, got {v!r}")


def parse_request(text: str) -> ReportRequest:
    """Parse ``key = value`` lines (``#`` starts a comment)."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise RequestError(f"line {lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.lower()
        if key not in REQUEST_KEYS:
            raise RequestError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise RequestError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    missing = [k for k in REQUIRED_KEYS if k not in raw]
    if missing:
        raise RequestError(f"missing keys: {', '.join(missing)}")
    report = raw["report"].upper()
    if report not in REPORT_TYPES:
        raise RequestError(f"unknown report type {raw['report']!r}")
    lang = LANGUAGES.get(raw["lang"].upper())
    if lang is None:
        raise RequestError(f"unknown language {raw['lang']!r}")
    legislation = None
    if "legislation" in raw:
        legislation = COUNTRIES.get(raw["legislation"].upper())
        if legislation is None:
            raise RequestError(f"unknown legislation country {raw['legislation']!r}")
    req = ReportRequest(
        report=report,
        lang=lang,
        station=raw["station"].upper(),
        pollutant=raw["pollutant"].upper(),
        period=parse_period(raw["period"]),
        legislation=legislation,
        compare=parse_period(raw["compare"]) if "compare" in raw else None,
        confirm=_flag("confirm", raw.get("confirm", "no")),
        describe_station=_flag("describe-station", raw.get("describe-station", "no")),
        describe_pollutant=_flag("describe-pollutant", raw.get("describe-pollutant", "no")),
    )
    check_compatibility(req)
    return req


# ---------------------------------------------------------------------------
# Datasource


def _amount(x: float):
    """Statistic as an IR number: integral values stay ints, others get one
    decimal place."""
    d = Decimal(repr(x)).quantize(Decimal("0.1"))
    return int(d) if d == d.to_integral_value() else d


# Names of everything ``DataSource.bindings`` can produce.
BINDING_NAMES = frozenset({
    "STATION", "POLLUTANT", "PERIOD", "COMPARE-PERIOD",
    "EXCEEDANCE", "COMPARE-EXCEEDANCE", "STAT", "COMPARE-STAT",
})


@dataclass(frozen=True)
class DataSource:
    measurements: dict
    metadata: Metadata

    def series(self, station: str, pollutant: str) -> MeasurementSeries:
        try:
            return self.measurements[station.upper(), pollutant.upper()]
        except KeyError:
            raise NoData(f"no {pollutant} series for station {station}") from None

    def stat(self, station, pollutant, period: Period, kind: str):
        return aggregate_stat(self.series(station, pollutant), period, kind)

    def exceedance(self, station, pollutant, threshold: ThresholdSpec, period: Period) -> ExceedanceResult:
        series = self.series(station, pollutant)
        if series.window(period)[1].size == 0:
            raise NoData(f"no {pollutant} samples at {station} in {period.start}..{period.end}")
        return exceedances(series, threshold, period)

    def thresholds(self, country: str, pollutant: str) -> list[ThresholdSpec]:
        return self.metadata.thresholds_for(country, pollutant)

    def canned(self, key: str, lang: str) -> str:
        return self.metadata.canned_text(key, lang)

    def check(self, req: ReportRequest) -> None:
        check_compatibility(req)
        self.metadata.station_name(req.station)
        if req.pollutant is not None:
            self.metadata.unit(req.pollutant)
            if req.legislation and not self.thresholds(req.legislation, req.pollutant):
                raise RequestError(f"legislation {req.legislation} has no threshold for {req.pollutant}")

    def bindings(self, req: ReportRequest) -> dict:
        """Data bindings for the organizer.  Values that could not be computed
        for lack of samples are bound to a :class:`NoData` instance."""
        out: dict = {"station": req.station, "period": req.period.record()}
        if req.pollutant is not None:
            out["pollutant"] = Symbol(req.pollutant)
        if req.compare is not None:
            out["compare-period"] = req.compare.record()
        periods = [("", req.period)] + ([("compare-", req.compare)] if req.compare else [])
        if req.pollutant is None:
            return out
        for prefix, period in periods:
            try:
                if req.report == "THRESHOLD-EXCEEDING":
                    th = self.metadata.threshold(req.legislation, req.pollutant)
                    out[prefix + "exceedance"] = self.exceedance(req.station, req.pollutant, th, period).to_fs()
                else:
                    value, _unit = self.stat(req.station, req.pollutant, period, req.report)
                    out[prefix + "stat"] = _amount(value)
            except NoData as e:
                out[prefix + "exceedance" if req.report == "THRESHOLD-EXCEEDING" else prefix + "stat"] = e
        return out


def build_datasource(measurements, metadata: Metadata) -> DataSource:
    return DataSource(dict(measurements), metadata)


def load_datasource(data_dir) -> DataSource:
    d = Path(data_dir)
    return build_datasource(load_measurements(d / "measurements.csv"), load_metadata(d / "metadata.json"))
