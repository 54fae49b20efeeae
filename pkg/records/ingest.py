"""
Reading and writing load-deformation records.

Records are delimiter-separated text with two designated numeric columns and an
optional single header line. A header is recognised when the designated cells of
the first row do not parse as numbers. Units are carried as metadata only.
"""

import logging
import re
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import pandas as pd
from pandas.errors import EmptyDataError, ParserError
from pydantic import BaseModel, Field, field_validator

from core.exceptions import (
    PipelineIOError,
    RecordFormatError,
    RecordValidationError,
)

logger = logging.getLogger(__name__)

MIN_SAMPLES = 2
DEFAULT_PRECISION = 9

TOKENIZER_LINE_RE = re.compile(r"line (\d+)")


class ColumnMapping(BaseModel):
    displacement_column: int = Field(
        0, ge=0, description="Zero-based column index of the displacement values."
    )
    load_column: int = Field(
        1, ge=0, description="Zero-based column index of the load values."
    )
    delimiter: str = Field(",", description="Field delimiter, comma or tab.")
    displacement_unit: str = Field("mm", description="Label only, never converted.")
    load_unit: str = Field("kN", description="Label only, never converted.")

    @field_validator("delimiter")
    @classmethod
    def _known_delimiter(cls, value: str) -> str:
        if value in ("tab", "\\t"):
            value = "\t"
        if value not in (",", "\t", ";"):
            raise ValueError(f"unsupported delimiter {value!r}")
        return value


@dataclass(frozen=True, eq=False)
class SignalPair:
    """Paired displacement and load histories of equal length."""

    displacement: np.ndarray
    load: np.ndarray
    displacement_unit: str = "mm"
    load_unit: str = "kN"

    def __post_init__(self):
        for name in ("displacement", "load"):
            values = np.array(getattr(self, name), dtype=float).ravel()
            values.flags.writeable = False
            object.__setattr__(self, name, values)

    def __len__(self) -> int:
        return len(self.displacement)

    def with_arrays(self, displacement, load) -> "SignalPair":
        return replace(self, displacement=displacement, load=load)

    @property
    def headers(self) -> tuple[str, str]:
        return f"displacement_{self.displacement_unit}", f"load_{self.load_unit}"


def validate(pair: SignalPair) -> SignalPair:
    """
    Return `pair` untouched when every invariant holds, otherwise raise one
    RecordValidationError listing each violated invariant with its first
    offending index.
    """
    errors: list[str] = []
    n_disp, n_load = len(pair.displacement), len(pair.load)

    if n_disp != n_load:
        errors.append(
            f"length mismatch at index {min(n_disp, n_load)}: displacement has "
            f"{n_disp} samples, load has {n_load}"
        )
    if min(n_disp, n_load) < MIN_SAMPLES:
        errors.append(
            f"too short: {min(n_disp, n_load)} samples, need at least {MIN_SAMPLES}"
        )
    for name, values in (("displacement", pair.displacement), ("load", pair.load)):
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            errors.append(f"{name} is not finite at index {bad[0]}")

    if errors:
        raise RecordValidationError(errors)
    return pair


def _is_number(cell) -> bool:
    if not isinstance(cell, str):
        return False
    try:
        float(cell)
    except ValueError:
        return False
    return True


def _unit_from_header(cell: str, default: str) -> str:
    name, _, unit = str(cell).strip().rpartition("_")
    return unit if name and unit else default


def _numeric_column(raw: pd.Series, label: str, offset: int) -> np.ndarray:
    values = pd.to_numeric(raw, errors="coerce")
    missing = raw.isna().to_numpy()
    bad = np.flatnonzero(values.isna().to_numpy())
    if not bad.size:
        return values.to_numpy(dtype=float)

    first = bad[0]
    if missing[first] and missing[first:].all():
        raise RecordFormatError(
            f"length mismatch: {label} column has {first} values, "
            f"other column has {len(raw)}",
            line=offset + first + 1,
        )
    if missing[first]:
        raise RecordFormatError(f"missing {label} value", line=offset + first + 1)
    raise RecordFormatError(
        f"{label} value {raw.iloc[first]!r} is not a number", line=offset + first + 1
    )


def load_record(path, columns: ColumnMapping | None = None) -> SignalPair:
    columns = columns or ColumnMapping()
    path = Path(path)
    if not path.is_file():
        raise PipelineIOError(f"record file not found: {path}")

    try:
        frame = pd.read_csv(
            path,
            sep=columns.delimiter,
            header=None,
            dtype=str,
            keep_default_na=False,
            na_values=[""],
            skip_blank_lines=False,
            encoding="utf-8",
        )
    except EmptyDataError as exc:
        raise RecordFormatError("no data rows", line=1) from exc
    except ParserError as exc:
        match = TOKENIZER_LINE_RE.search(str(exc))
        line = int(match.group(1)) if match else None
        raise RecordFormatError("malformed row (unexpected field count)", line) from exc

    # trailing empty lines are not rows
    while len(frame) and frame.iloc[-1].isna().all():
        frame = frame.iloc[:-1]

    needed = max(columns.displacement_column, columns.load_column)
    if frame.shape[1] <= needed:
        raise RecordFormatError(
            f"column {needed} not present, file has {frame.shape[1]} columns", line=1
        )

    disp_raw = frame[columns.displacement_column]
    load_raw = frame[columns.load_column]

    offset = 0
    displacement_unit = columns.displacement_unit
    load_unit = columns.load_unit
    if len(frame) and not (_is_number(disp_raw.iloc[0]) and _is_number(load_raw.iloc[0])):
        displacement_unit = _unit_from_header(disp_raw.iloc[0], displacement_unit)
        load_unit = _unit_from_header(load_raw.iloc[0], load_unit)
        disp_raw, load_raw = disp_raw.iloc[1:], load_raw.iloc[1:]
        offset = 1

    if len(disp_raw) == 0:
        raise RecordFormatError("no data rows", line=offset + 1)
    if len(disp_raw) < MIN_SAMPLES:
        raise RecordFormatError(
            f"too short: {len(disp_raw)} data row, need at least {MIN_SAMPLES}",
            line=offset + 1,
        )

    pair = SignalPair(
        displacement=_numeric_column(disp_raw, "displacement", offset),
        load=_numeric_column(load_raw, "load", offset),
        displacement_unit=displacement_unit,
        load_unit=load_unit,
    )
    validate(pair)
    logger.info("Loaded %d samples from %s", len(pair), path)
    return pair


def write_table(
    path,
    columns: Mapping[str, Sequence],
    precision: int = DEFAULT_PRECISION,
) -> Path:
    """Write named columns as UTF-8, LF-terminated, comma-separated text."""
    path = Path(path)
    data = {}
    for name, values in columns.items():
        values = np.asarray(values)
        # negative zero would print as "-0"
        data[name] = values + 0.0 if values.dtype.kind == "f" else values
    pd.DataFrame(data).to_csv(
        path,
        index=False,
        float_format=f"%.{precision}g",
        lineterminator="\n",
        encoding="utf-8",
    )
    logger.info("Wrote %s", path)
    return path


def write_record(path, pair: SignalPair, precision: int = DEFAULT_PRECISION) -> Path:
    disp_header, load_header = pair.headers
    return write_table(
        path, {disp_header: pair.displacement, load_header: pair.load}, precision
    )
