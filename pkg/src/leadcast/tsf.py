"""Ingestion of Monash-convention ``.tsf`` files and per-dataset constants.

A ``.tsf`` document is a header of ``@`` directives followed by one series
per line. Fields are colon-separated, bound to the declared ``@attribute``
list in order, and the final field is a comma-separated list of real values
(``?`` marks a missing observation). Dates use ``YYYY-MM-DD HH-mm-ss``, which
keeps the colon free as a field separator.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import datetime

import numpy as np

from .errors import ConfigurationError, DataError, TsfParseError

log = logging.getLogger(__name__)

DATE_FORMAT = "%Y-%m-%d %H-%M-%S"
FREQUENCIES = ("hourly", "daily", "weekly", "monthly", "quarterly", "yearly")
ATTRIBUTE_KINDS = ("string", "date", "numeric")

# Forecast horizon, seasonal period, and context multiple (C = multiple * H
# for the segment model) for the four benchmark datasets. Weekly traffic has
# no stated seasonal period; 8 tiles the 64-step context evenly.
DATASET_DEFAULTS = {
    "hospital": (12, 12, 3),
    "tourism": (24, 12, 3),
    "traffic": (8, 8, 8),
    "electricity": (168, 24, 3),
}

# Context lengths for the step-per-timestep model follow the Monash
# repository convention of short seasonal-lag windows.
BASE_CONTEXT_LENGTHS = {
    "hospital": 15,
    "tourism": 15,
    "traffic": 65,
    "electricity": 210,
}


@dataclass(eq=False)
class TimeSeriesRecord:
    """One parsed series: identity, optional start stamp, and its values."""

    series_id: str
    start_time: datetime | None
    values: np.ndarray
    attributes: tuple = ()

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.size < 1:
            raise ValueError(
                f"series {self.series_id!r} needs a non-empty 1-D value array"
            )

    @property
    def length(self) -> int:
        return int(self.values.size)


@dataclass
class DatasetMeta:
    """Header facts plus the experiment constants resolved later from config.

    ``horizon``, ``context_length`` and ``seasonality`` stay None until an
    experiment fills them in; files rarely carry more than the horizon.
    """

    name: str
    frequency: str | None = None
    series_count: int = 0
    horizon: int | None = None
    context_length: int | None = None
    seasonality: int | None = None
    attributes: tuple = ()
    missing: bool | None = None
    equal_length: bool | None = None


@dataclass(frozen=True)
class DatasetPolicy:
    """Explicit ingestion policy; every load call must pass one."""

    min_length: int
    missing_value_action: str = "reject_series"

    def __post_init__(self):
        if self.missing_value_action not in ("reject_series", "reject_file"):
            raise ValueError(
                f"unknown missing_value_action {self.missing_value_action!r}"
            )
        if self.min_length < 1:
            raise ValueError("min_length must be at least 1")


def _parse_bool(token: str, lineno: int) -> bool:
    lowered = token.strip().lower()
    if lowered == "true":
        return True
    if lowered == "false":
        return False
    raise TsfParseError(f"expected true/false, got {token!r}", lineno)


def _parse_directive(line: str, lineno: int, meta: DatasetMeta, attrs: list) -> bool:
    """Handle one header line; returns True once @data is reached."""
    parts = line.split()
    keyword = parts[0].lower()
    if keyword == "@data":
        if len(parts) != 1:
            raise TsfParseError("@data takes no argument", lineno)
        return True
    if keyword == "@relation":
        if len(parts) != 2:
            raise TsfParseError("@relation needs exactly one name", lineno)
        meta.name = parts[1]
    elif keyword == "@attribute":
        if len(parts) != 3:
            raise TsfParseError("@attribute needs a name and a type", lineno)
        name, kind = parts[1], parts[2].lower()
        if kind not in ATTRIBUTE_KINDS:
            raise TsfParseError(f"unknown attribute type {parts[2]!r}", lineno)
        attrs.append((name, kind))
    elif keyword == "@frequency":
        if len(parts) != 2 or parts[1].lower() not in FREQUENCIES:
            raise TsfParseError(f"unknown frequency in {line!r}", lineno)
        meta.frequency = parts[1].lower()
    elif keyword == "@horizon":
        try:
            meta.horizon = int(parts[1])
        except (IndexError, ValueError):
            raise TsfParseError(f"bad @horizon line {line!r}", lineno) from None
    elif keyword == "@missing":
        if len(parts) != 2:
            raise TsfParseError("@missing needs one boolean", lineno)
        meta.missing = _parse_bool(parts[1], lineno)
    elif keyword == "@equallength":
        if len(parts) != 2:
            raise TsfParseError("@equallength needs one boolean", lineno)
        meta.equal_length = _parse_bool(parts[1], lineno)
    else:
        raise TsfParseError(f"unknown directive {parts[0]!r}", lineno)
    return False


def _parse_data_line(line: str, attrs: list, lineno: int, ordinal: int):
    """Parse one series line; returns (record, series_id).

    ``record`` is None when the series contains a missing-value marker; the
    caller applies the policy.
    """
    fields = line.split(":")
    expected = len(attrs) + 1
    if len(fields) != expected:
        raise TsfParseError(
            f"expected {expected} colon-separated fields, got {len(fields)}", lineno
        )
    bound = []
    for (name, kind), raw in zip(attrs, fields):
        raw = raw.strip()
        if kind == "string":
            bound.append(raw)
        elif kind == "date":
            try:
                bound.append(datetime.strptime(raw, DATE_FORMAT))
            except ValueError:
                raise TsfParseError(
                    f"bad {name} timestamp {raw!r}, want {DATE_FORMAT}", lineno
                ) from None
        else:
            try:
                bound.append(float(raw))
            except ValueError:
                raise TsfParseError(f"bad numeric attribute {raw!r}", lineno) from None

    series_id = next(
        (v for v, (_, kind) in zip(bound, attrs) if kind == "string"),
        f"series_{ordinal}",
    )
    start_time = next(
        (v for v, (_, kind) in zip(bound, attrs) if kind == "date"), None
    )

    tokens = [tok.strip() for tok in fields[-1].split(",")]
    if tokens == [""]:
        raise TsfParseError("series has no values", lineno)
    if "?" in tokens:
        return None, series_id
    try:
        values = np.array([float(tok) for tok in tokens])
    except ValueError as exc:
        raise TsfParseError(f"bad value in series: {exc}", lineno) from None

    record = TimeSeriesRecord(
        series_id=series_id,
        start_time=start_time,
        values=values,
        attributes=tuple(bound),
    )
    return record, series_id


def parse_tsf(stream, policy: DatasetPolicy):
    """Parse a ``.tsf`` text stream into (DatasetMeta, list of records).

    ``stream`` is any iterable of lines. Missing-value markers are handled
    per ``policy``: reject_series drops the offending series (logged),
    reject_file raises DataError.
    """
    meta = DatasetMeta(name="")
    attrs: list = []
    records: list[TimeSeriesRecord] = []
    in_data = False
    saw_relation = False
    dropped = 0

    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if not in_data:
            if not line.startswith("@"):
                raise TsfParseError("series data before @data", lineno)
            if line.split()[0].lower() == "@relation":
                saw_relation = True
            in_data = _parse_directive(line, lineno, meta, attrs)
            continue
        record, series_id = _parse_data_line(line, attrs, lineno, len(records) + 1)
        if record is None:
            if policy.missing_value_action == "reject_file":
                raise DataError(
                    f"series {series_id!r} (line {lineno}) has missing values"
                )
            dropped += 1
            continue
        records.append(record)

    if not saw_relation:
        raise TsfParseError("missing @relation header")
    if not in_data:
        raise TsfParseError("missing @data section")
    if dropped:
        log.warning("dropped %d series with missing values", dropped)
    meta.attributes = tuple(attrs)
    meta.series_count = len(records)
    return meta, records


def load_tsf(path, policy: DatasetPolicy):
    """Parse the ``.tsf`` file at ``path``."""
    with open(path, encoding="utf-8") as fh:
        return parse_tsf(fh, policy)


def _format_value(value: float) -> str:
    return repr(float(value))


def serialize_tsf(meta: DatasetMeta, records) -> str:
    """Render records back to ``.tsf`` text that re-parses value-identically."""
    lines = [f"@relation {meta.name}"]
    for name, kind in meta.attributes:
        lines.append(f"@attribute {name} {kind}")
    if meta.frequency is not None:
        lines.append(f"@frequency {meta.frequency}")
    if meta.horizon is not None:
        lines.append(f"@horizon {meta.horizon}")
    if meta.missing is not None:
        lines.append(f"@missing {str(meta.missing).lower()}")
    if meta.equal_length is not None:
        lines.append(f"@equallength {str(meta.equal_length).lower()}")
    lines.append("@data")
    for record in records:
        bound = record.attributes
        if len(bound) != len(meta.attributes):
            raise DataError(
                f"series {record.series_id!r} binds {len(bound)} attributes, "
                f"header declares {len(meta.attributes)}"
            )
        fields = []
        for value, (name, kind) in zip(bound, meta.attributes):
            if kind == "date":
                fields.append(value.strftime(DATE_FORMAT))
            elif kind == "numeric":
                fields.append(_format_value(value))
            else:
                fields.append(str(value))
        fields.append(",".join(_format_value(v) for v in record.values))
        lines.append(":".join(fields))
    return "\n".join(lines) + "\n"


def dataset_defaults(name: str):
    """(horizon, seasonality, seg context multiple) for a known dataset."""
    try:
        return DATASET_DEFAULTS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown dataset {name!r}; supply horizon, seasonality and "
            f"context_length explicitly (known: {', '.join(DATASET_DEFAULTS)})"
        ) from None
