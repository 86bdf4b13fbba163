# spdx-license-identifier: apache-2.0
# copyright 2024 mark counterman

"""Line-oriented text records exchanged between agents and the plant service.

Every record is one UTF-8 line of comma-separated fields, tag first:

    DAPI,<sender>,<seq>,<t>,<omega_cons>,<q_ratio>,<m_dE>,<n_dF>
    MEAS,<inv>,<P>,<Q>
    ACT,<inv>,<omega>,<V>

Floats are written with ``repr`` so decoding returns the identical value.
"""

import logging
import math
import re
from dataclasses import astuple, dataclass
from typing import Callable, Dict, List, Tuple, Type, Union

from gfmreserve.errors import DecodeError

logger = logging.getLogger(__name__)

MAX_RECORD = 4096

_FLOAT = re.compile(r"[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?")
_INT = re.compile(r"[+-]?\d+")


def _format_float(value: float) -> str:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"cannot encode non-finite value {value}")
    return repr(value)


def _parse_float(text: str) -> float:
    if not _FLOAT.fullmatch(text):
        raise ValueError(f"not a decimal number: {text!r}")
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"out of range: {text!r}")
    return value


def _parse_int(text: str) -> int:
    if not _INT.fullmatch(text):
        raise ValueError(f"not an integer: {text!r}")
    return int(text)


@dataclass(frozen=True)
class ConsensusMsg:
    sender: int
    seq: int
    t: float
    omega_cons: float
    q_ratio: float
    m_dE: float
    n_dF: float

    TAG = "DAPI"

    def encode(self) -> bytes:
        return _encode(self)


@dataclass(frozen=True)
class MeasRecord:
    """Plant to agent: measured power in W and VAR."""

    inverter: int
    p: float
    q: float

    TAG = "MEAS"

    def encode(self) -> bytes:
        return _encode(self)


@dataclass(frozen=True)
class ActRecord:
    """Agent to plant: commanded frequency in rad/s and voltage magnitude in V."""

    inverter: int
    omega: float
    v: float

    TAG = "ACT"

    def encode(self) -> bytes:
        return _encode(self)


Record = Union[ConsensusMsg, MeasRecord, ActRecord]

_LAYOUTS: Dict[str, Tuple[Type, Tuple[Callable[[str], object], ...]]] = {
    "DAPI": (ConsensusMsg, (_parse_int, _parse_int) + (_parse_float,) * 5),
    "MEAS": (MeasRecord, (_parse_int, _parse_float, _parse_float)),
    "ACT": (ActRecord, (_parse_int, _parse_float, _parse_float)),
}


def _encode(record: Record) -> bytes:
    fields = [record.TAG]
    for value in astuple(record):
        if isinstance(value, int) and not isinstance(value, bool):
            fields.append(str(value))
        else:
            fields.append(_format_float(value))
    return (",".join(fields) + "\n").encode("utf-8")


def encode(record: Record) -> bytes:
    return _encode(record)


def decode(data: bytes) -> Record:
    """Parse one record; a trailing newline is optional."""
    try:
        line = data.decode("utf-8")
    except UnicodeDecodeError as e:
        raise DecodeError("not UTF-8", 0, data) from e
    if line.endswith("\n"):
        line = line[:-1]
    if line.endswith("\r"):
        line = line[:-1]
    fields = line.split(",")
    layout = _LAYOUTS.get(fields[0])
    if layout is None:
        raise DecodeError(f"unknown record tag {fields[0]!r}", 0, data)
    cls, parsers = layout
    if len(fields) - 1 < len(parsers):
        raise DecodeError("record truncated", len(fields), data)
    if len(fields) - 1 > len(parsers):
        raise DecodeError("unexpected extra field", len(parsers) + 1, data)
    values = []
    for index, (parse, text) in enumerate(zip(parsers, fields[1:]), start=1):
        try:
            values.append(parse(text))
        except ValueError as e:
            raise DecodeError(str(e), index, data) from e
    if cls is ConsensusMsg and values[1] < 0:
        raise DecodeError("sequence number must be non-negative", 2, data)
    return cls(*values)


def decode_consensus(data: bytes) -> ConsensusMsg:
    record = decode(data)
    if not isinstance(record, ConsensusMsg):
        raise DecodeError(f"expected DAPI record, got {record.TAG}", 0, data)
    return record


class LineFramer:
    """Splits a byte stream into records.

    A malformed or over-long line is counted and skipped; decoding resumes at the
    next newline.
    """

    def __init__(self, max_record: int = MAX_RECORD):
        self.max_record = max_record
        self._buffer = bytearray()
        self._discarding = False
        self.errors: List[DecodeError] = []

    def feed(self, data: bytes) -> List[Record]:
        records: List[Record] = []
        self._buffer.extend(data)
        while True:
            end = self._buffer.find(b"\n")
            if end < 0:
                if len(self._buffer) > self.max_record:
                    self._buffer.clear()
                    self._discarding = True
                break
            line = bytes(self._buffer[: end + 1])
            del self._buffer[: end + 1]
            if self._discarding:
                self._discarding = False
                self._fail(DecodeError("record too long", 0, line))
                continue
            self._decode_into(line, records)
        return records

    def flush(self) -> List[Record]:
        """Decode whatever is left as a final unterminated record."""
        records: List[Record] = []
        if self._buffer and not self._discarding:
            self._decode_into(bytes(self._buffer), records)
        self._buffer.clear()
        self._discarding = False
        return records

    def _decode_into(self, line: bytes, records: List[Record]) -> None:
        if not line.strip():
            return
        try:
            records.append(decode(line))
        except DecodeError as e:
            self._fail(e)

    def _fail(self, error: DecodeError) -> None:
        logger.warning("dropping malformed record: %s", error)
        self.errors.append(error)
