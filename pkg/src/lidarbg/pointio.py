"""Frame-ordered point records: in-memory representation and CSV/binary I/O.

A frame is stored column-wise (one numpy array per field) so that downstream
stages can vectorize; ``PointRecord`` is the row view used at API edges.
Absent optional members (range for cartesian input, x/y/z for spherical input,
everything for no-return firings) are NaN in the columns and ``None`` in
records.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np

from .errors import FormatError, IoError, NonMonotonicFrameId

CSV_COLUMNS = (
    "frame_id", "timestamp", "beam_id", "azimuth_deg", "range_m",
    "x", "y", "z", "intensity", "return_flag",
)
RETURN = "Return"
NO_RETURN = "NoReturn"

BINARY_MAGIC = b"LBGPTS"
BINARY_VERSION = 1
_HEADER = struct.Struct("<6sH")
_BLOCK_LEN = struct.Struct("<I")
_FRAME_HEAD = struct.Struct("<qdI")
_RECORD_DTYPE = np.dtype([
    ("beam_id", "<i4"), ("azimuth_deg", "<f8"), ("range_m", "<f8"),
    ("x", "<f8"), ("y", "<f8"), ("z", "<f8"), ("intensity", "<f8"), ("flags", "u1"),
])
_FLAG_RETURN = 1

DEFAULT_MAX_INTENSITY = 255.0


@dataclass(frozen=True)
class PointRecord:
    frame_id: int
    beam_id: int
    azimuth_deg: float
    range_m: Optional[float] = None
    x: Optional[float] = None
    y: Optional[float] = None
    z: Optional[float] = None
    intensity: Optional[float] = None
    returned: bool = True

    @property
    def return_flag(self) -> str:
        return RETURN if self.returned else NO_RETURN


def _opt(v: float) -> Optional[float]:
    return None if np.isnan(v) else float(v)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Frame:
    frame_id: int
    timestamp: float
    beam_id: np.ndarray
    azimuth_deg: np.ndarray
    range_m: np.ndarray
    xyz: np.ndarray
    intensity: np.ndarray
    returned: np.ndarray

    def __post_init__(self):
        n = len(self.beam_id)
        object.__setattr__(self, "beam_id", _frozen(np.asarray(self.beam_id, dtype=np.int64)))
        for name in ("azimuth_deg", "range_m", "intensity"):
            object.__setattr__(self, name, _frozen(np.asarray(getattr(self, name), dtype=np.float64)))
        object.__setattr__(self, "xyz", _frozen(np.asarray(self.xyz, dtype=np.float64).reshape(n, 3)))
        object.__setattr__(self, "returned", _frozen(np.asarray(self.returned, dtype=bool)))
        for name in ("azimuth_deg", "range_m", "intensity", "returned"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name} has length {len(getattr(self, name))}, expected {n}")

    def __len__(self) -> int:
        return len(self.beam_id)

    @property
    def n_returns(self) -> int:
        return int(self.returned.sum())

    @classmethod
    def empty(cls, frame_id: int, timestamp: float) -> "Frame":
        z = np.zeros(0)
        return cls(frame_id, timestamp, np.zeros(0, dtype=np.int64), z, z, np.zeros((0, 3)), z,
                   np.zeros(0, dtype=bool))

    @classmethod
    def from_records(cls, frame_id: int, timestamp: float, records: Iterable[PointRecord]) -> "Frame":
        records = list(records)
        nan = np.nan
        if any(r.frame_id != frame_id for r in records):
            raise ValueError("all points of a frame must share its frame_id")
        return cls(
            frame_id, timestamp,
            np.array([r.beam_id for r in records], dtype=np.int64),
            np.array([r.azimuth_deg for r in records], dtype=np.float64),
            np.array([nan if r.range_m is None else r.range_m for r in records], dtype=np.float64),
            np.array([[nan if v is None else v for v in (r.x, r.y, r.z)] for r in records],
                     dtype=np.float64).reshape(len(records), 3),
            np.array([nan if r.intensity is None else r.intensity for r in records], dtype=np.float64),
            np.array([r.returned for r in records], dtype=bool),
        )

    def records(self) -> Iterator[PointRecord]:
        for i in range(len(self)):
            x, y, z = self.xyz[i]
            yield PointRecord(self.frame_id, int(self.beam_id[i]), float(self.azimuth_deg[i]),
                              _opt(self.range_m[i]), _opt(x), _opt(y), _opt(z),
                              _opt(self.intensity[i]), bool(self.returned[i]))

    def subset(self, mask: np.ndarray) -> "Frame":
        return Frame(self.frame_id, self.timestamp, self.beam_id[mask], self.azimuth_deg[mask],
                     self.range_m[mask], self.xyz[mask], self.intensity[mask], self.returned[mask])

    def __eq__(self, other) -> bool:
        if not isinstance(other, Frame):
            return NotImplemented
        if (self.frame_id, self.timestamp, len(self)) != (other.frame_id, other.timestamp, len(other)):
            return False
        return all(
            np.array_equal(getattr(self, n), getattr(other, n), equal_nan=n not in ("beam_id", "returned"))
            for n in ("beam_id", "azimuth_deg", "range_m", "xyz", "intensity", "returned")
        )

    __hash__ = None


def validate_frame(frame: Frame, max_intensity: float = DEFAULT_MAX_INTENSITY, row_offset: int = 0) -> None:
    """Raise ``FormatError`` for the first point violating the record invariants."""
    def fail(mask, reason):
        bad = np.flatnonzero(mask)
        if len(bad):
            raise FormatError(row_offset + int(bad[0]), reason)

    ret = frame.returned
    has_range = ~np.isnan(frame.range_m)
    xyz_nan = np.isnan(frame.xyz)
    has_xyz = ~xyz_nan.any(axis=1)
    fail(frame.beam_id < 0, "beam_id must be non-negative")
    az = frame.azimuth_deg
    fail(~((az > 0.0) & (az <= 360.0)), "azimuth_deg outside (0, 360]")
    fail(ret & (xyz_nan.any(axis=1) & ~xyz_nan.all(axis=1)), "partial x/y/z")
    fail(ret & (has_range == has_xyz), "Return needs exactly one of range_m or x/y/z")
    fail(ret & has_range & ~(frame.range_m >= 0.0), "negative range_m")
    fail(ret & has_xyz & ~np.isfinite(frame.xyz).all(axis=1), "non-finite coordinates")
    inten = frame.intensity
    fail(ret & ~((inten >= 0.0) & (inten <= max_intensity)), f"intensity outside [0, {max_intensity}]")
    fail(~ret & (has_range | ~xyz_nan.all(axis=1) | ~np.isnan(inten)),
         "NoReturn carries range/xyz/intensity")


# -- CSV -------------------------------------------------------------------

def _fmt(v: float) -> str:
    return "" if np.isnan(v) else repr(float(v))


def _csv_rows(frame: Frame) -> Iterator[list]:
    if len(frame) == 0:
        # A frame with no points is written as a marker row carrying only id and timestamp.
        yield [str(frame.frame_id), repr(float(frame.timestamp))] + [""] * 8
        return
    fid, ts = str(frame.frame_id), repr(float(frame.timestamp))
    for i in range(len(frame)):
        x, y, z = frame.xyz[i]
        yield [fid, ts, str(int(frame.beam_id[i])), _fmt(frame.azimuth_deg[i]), _fmt(frame.range_m[i]),
               _fmt(x), _fmt(y), _fmt(z), _fmt(frame.intensity[i]),
               RETURN if frame.returned[i] else NO_RETURN]


def _parse_float(text: str, row: int, name: str) -> float:
    if text == "":
        return np.nan
    try:
        v = float(text)
    except ValueError:
        raise FormatError(row, f"{name} is not a number: {text!r}") from None
    if np.isnan(v):
        raise FormatError(row, f"{name} is NaN")
    return v


def _parse_int(text: str, row: int, name: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise FormatError(row, f"{name} is not an integer: {text!r}") from None


def _check_row(row, beam, az, rng, x, y, z, inten, ret, max_intensity):
    nan = np.isnan
    if beam < 0:
        raise FormatError(row, "beam_id must be non-negative")
    if not 0.0 < az <= 360.0:
        raise FormatError(row, "azimuth_deg outside (0, 360]")
    xyz_present = [not nan(v) for v in (x, y, z)]
    if not ret:
        if not nan(rng) or any(xyz_present) or not nan(inten):
            raise FormatError(row, "NoReturn carries range/xyz/intensity")
        return
    if any(xyz_present) and not all(xyz_present):
        raise FormatError(row, "partial x/y/z")
    if nan(rng) == (not all(xyz_present)):
        raise FormatError(row, "Return needs exactly one of range_m or x/y/z")
    if not nan(rng) and rng < 0.0:
        raise FormatError(row, "negative range_m")
    if all(xyz_present) and not all(np.isfinite(v) for v in (x, y, z)):
        raise FormatError(row, "non-finite coordinates")
    if not 0.0 <= inten <= max_intensity:
        raise FormatError(row, f"intensity outside [0, {max_intensity}]")


class _FrameBuilder:
    def __init__(self, frame_id: int, timestamp: float, first_row: int):
        self.frame_id = frame_id
        self.timestamp = timestamp
        self.first_row = first_row
        self.cols = [[] for _ in range(8)]
        self.marker = False

    def add(self, beam, az, rng, x, y, z, inten, ret):
        for col, v in zip(self.cols, (beam, az, rng, x, y, z, inten, ret)):
            col.append(v)

    def build(self) -> Frame:
        beam, az, rng, x, y, z, inten, ret = self.cols
        n = len(beam)
        return Frame(self.frame_id, self.timestamp, np.array(beam, dtype=np.int64),
                     np.array(az, dtype=np.float64), np.array(rng, dtype=np.float64),
                     np.column_stack([np.array(c, dtype=np.float64) for c in (x, y, z)]).reshape(n, 3),
                     np.array(inten, dtype=np.float64), np.array(ret, dtype=bool))


class _StreamChecker:
    def __init__(self):
        self.last_id = None
        self.last_ts = None

    def check(self, frame_id: int, timestamp: float, row: int):
        if self.last_id is not None:
            if frame_id <= self.last_id:
                raise NonMonotonicFrameId(f"row {row}: frame_id {frame_id} after {self.last_id}")
            if not timestamp > self.last_ts:
                raise FormatError(row, f"timestamp {timestamp} does not increase")
        self.last_id, self.last_ts = frame_id, timestamp


def _read_csv(path: Path, max_intensity: float) -> Iterator[Frame]:
    try:
        fh = open(path, newline="")
    except OSError as e:
        raise IoError(str(e)) from e
    with fh:
        reader = csv.reader(fh)
        builder: Optional[_FrameBuilder] = None
        stream = _StreamChecker()
        for lineno, row in enumerate(reader, start=1):
            if not row:
                continue
            if lineno == 1 and row[0] == "frame_id":
                if tuple(row) != CSV_COLUMNS:
                    raise FormatError(lineno, "unexpected header")
                continue
            if len(row) != len(CSV_COLUMNS):
                raise FormatError(lineno, f"expected {len(CSV_COLUMNS)} fields, got {len(row)}")
            fid = _parse_int(row[0], lineno, "frame_id")
            if fid < 0:
                raise FormatError(lineno, "frame_id must be non-negative")
            ts = _parse_float(row[1], lineno, "timestamp")
            if np.isnan(ts):
                raise FormatError(lineno, "missing timestamp")
            if builder is None or fid != builder.frame_id:
                if builder is not None:
                    yield builder.build()
                stream.check(fid, ts, lineno)
                builder = _FrameBuilder(fid, ts, lineno)
            elif ts != builder.timestamp:
                raise FormatError(lineno, "timestamp differs within a frame")
            if all(v == "" for v in row[2:]):
                if builder.cols[0] or builder.marker:
                    raise FormatError(lineno, "empty-frame marker inside a non-empty frame")
                builder.marker = True
                continue
            if builder.marker:
                raise FormatError(lineno, "point row after empty-frame marker")
            flag = row[9]
            if flag not in (RETURN, NO_RETURN):
                raise FormatError(lineno, f"return_flag must be {RETURN} or {NO_RETURN}")
            vals = [_parse_float(row[i], lineno, CSV_COLUMNS[i]) for i in range(3, 9)]
            beam = _parse_int(row[2], lineno, "beam_id")
            _check_row(lineno, beam, *vals, flag == RETURN, max_intensity)
            builder.add(beam, *vals, flag == RETURN)
        if builder is not None:
            yield builder.build()


# -- binary ----------------------------------------------------------------

def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(-1, f"truncated file while reading {what}")
    return buf


def _read_binary(path: Path, max_intensity: float) -> Iterator[Frame]:
    try:
        fh = open(path, "rb")
    except OSError as e:
        raise IoError(str(e)) from e
    with fh:
        head = fh.read(_HEADER.size)
        if len(head) == 0:
            return
        if len(head) != _HEADER.size:
            raise FormatError(0, "truncated header")
        magic, version = _HEADER.unpack(head)
        if magic != BINARY_MAGIC:
            raise FormatError(0, "bad magic")
        if version != BINARY_VERSION:
            raise FormatError(0, f"unsupported version {version}")
        stream = _StreamChecker()
        record_no = 0
        while True:
            raw = fh.read(_BLOCK_LEN.size)
            if not raw:
                return
            if len(raw) != _BLOCK_LEN.size:
                raise FormatError(record_no, "truncated block length")
            (length,) = _BLOCK_LEN.unpack(raw)
            block = _read_exact(fh, length, "frame block")
            fid, ts, n = _FRAME_HEAD.unpack_from(block)
            if length != _FRAME_HEAD.size + n * _RECORD_DTYPE.itemsize:
                raise FormatError(record_no, "block length does not match point count")
            stream.check(fid, ts, record_no)
            rec = np.frombuffer(block, dtype=_RECORD_DTYPE, count=n, offset=_FRAME_HEAD.size)
            frame = Frame(fid, ts, rec["beam_id"], rec["azimuth_deg"], rec["range_m"],
                          np.column_stack([rec["x"], rec["y"], rec["z"]]), rec["intensity"],
                          (rec["flags"] & _FLAG_RETURN).astype(bool))
            validate_frame(frame, max_intensity, row_offset=record_no)
            record_no += n
            yield frame


def _binary_block(frame: Frame) -> bytes:
    rec = np.empty(len(frame), dtype=_RECORD_DTYPE)
    rec["beam_id"] = frame.beam_id
    rec["azimuth_deg"] = frame.azimuth_deg
    rec["range_m"] = frame.range_m
    rec["x"], rec["y"], rec["z"] = frame.xyz[:, 0], frame.xyz[:, 1], frame.xyz[:, 2]
    rec["intensity"] = frame.intensity
    rec["flags"] = frame.returned.astype(np.uint8) * _FLAG_RETURN
    body = _FRAME_HEAD.pack(frame.frame_id, frame.timestamp, len(frame)) + rec.tobytes()
    return _BLOCK_LEN.pack(len(body)) + body


# -- public API --------------------------------------------------------------

def infer_format(path) -> str:
    return "csv" if str(path).lower().endswith(".csv") else "binary"


def read_frames(path, format: Optional[str] = None,
                max_intensity: float = DEFAULT_MAX_INTENSITY) -> Iterator[Frame]:
    """Stream frames from ``path`` in ascending frame_id order.

    Only one frame is materialized at a time. Malformed rows raise
    ``FormatError`` carrying the 1-based line number (CSV) or record index
    (binary).
    """
    path = Path(path)
    fmt = format or infer_format(path)
    if not path.exists():
        raise IoError(f"no such file: {path}")
    if fmt == "csv":
        return _read_csv(path, max_intensity)
    if fmt == "binary":
        return _read_binary(path, max_intensity)
    raise ValueError(f"unknown format {fmt!r}")


def write_frames(frames: Iterable[Frame], path, format: Optional[str] = None) -> None:
    path = Path(path)
    fmt = format or infer_format(path)
    if fmt not in ("csv", "binary"):
        raise ValueError(f"unknown format {fmt!r}")
    try:
        if fmt == "csv":
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(CSV_COLUMNS)
                for frame in frames:
                    w.writerows(_csv_rows(frame))
        else:
            with open(path, "wb") as fh:
                fh.write(_HEADER.pack(BINARY_MAGIC, BINARY_VERSION))
                for frame in frames:
                    fh.write(_binary_block(frame))
    except OSError as e:
        raise IoError(str(e)) from e
