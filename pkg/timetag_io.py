"""
Time-tag files: a little-endian binary format with a 16-byte header and a CSV
alternative with a ``channel,timestamp_ps`` header row.
"""
import csv
import io
import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np

from errors import TimeTagFormatError
from timetag_sim import CHANNELS, TimeTagStream

logger = logging.getLogger(__name__)

MODULE = "timetag_io"

MAGIC = b"QTT1"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sI8s")
RECORD_DTYPE = np.dtype([("channel", "<u1"), ("timestamp", "<u8")])
CSV_HEADER = ("channel", "timestamp_ps")

PathLike = Union[str, Path]


def _duration_of(timestamps: np.ndarray) -> int:
    return int(timestamps.max()) + 1 if len(timestamps) else 0


def to_binary(stream: TimeTagStream) -> bytes:
    records = np.empty(len(stream), dtype=RECORD_DTYPE)
    records["channel"] = stream.channels
    records["timestamp"] = stream.timestamps
    return HEADER.pack(MAGIC, FORMAT_VERSION, bytes(8)) + records.tobytes()


def from_binary(data: bytes) -> TimeTagStream:
    if len(data) < HEADER.size:
        raise TimeTagFormatError(f"file shorter than the {HEADER.size}-byte header", MODULE)
    magic, version, _reserved = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise TimeTagFormatError(f"bad magic {magic!r}, expected {MAGIC!r}", MODULE)
    if version != FORMAT_VERSION:
        raise TimeTagFormatError(f"unsupported format version {version}, expected {FORMAT_VERSION}", MODULE)
    body = len(data) - HEADER.size
    if body % RECORD_DTYPE.itemsize:
        raise TimeTagFormatError(f"truncated record: {body} bytes is not a multiple of {RECORD_DTYPE.itemsize}", MODULE)
    records = np.frombuffer(data, dtype=RECORD_DTYPE, offset=HEADER.size)
    return _checked(records["channel"], records["timestamp"])


def to_csv(stream: TimeTagStream) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    writer.writerows(zip(stream.channels.tolist(), stream.timestamps.tolist()))
    return buffer.getvalue()


def from_csv(text: str) -> TimeTagStream:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
        raise TimeTagFormatError(f"CSV header must be {','.join(CSV_HEADER)}, got {header!r}", MODULE)
    channels, timestamps = [], []
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            ch, ts = int(row[0]), int(row[1])
        except (IndexError, ValueError):
            raise TimeTagFormatError(f"malformed record on line {line_no}: {row!r}", MODULE)
        channels.append(ch)
        timestamps.append(ts)
    return _checked(np.array(channels, dtype=np.int64), np.array(timestamps, dtype=np.int64))


def _checked(channels: np.ndarray, timestamps: np.ndarray) -> TimeTagStream:
    if len(channels) and not np.isin(channels, CHANNELS).all():
        raise TimeTagFormatError(f"channel numbers must be one of {CHANNELS}", MODULE)
    if len(timestamps) and (timestamps.min() < 0 or timestamps.max() >= 2 ** 63):
        raise TimeTagFormatError("timestamp outside the signed 64-bit picosecond range", MODULE)
    timestamps = timestamps.astype(np.int64)
    return TimeTagStream(channels.astype(np.uint8), timestamps, _duration_of(timestamps))


def write_timetags(stream: TimeTagStream, path: PathLike) -> Path:
    """Write as CSV when the suffix is .csv, binary otherwise."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        path.write_bytes(to_csv(stream).encode("utf-8"))
    else:
        path.write_bytes(to_binary(stream))
    logger.info(f"💾 Wrote {len(stream)} time tags to {path}")
    return path


def read_timetags(path: PathLike) -> TimeTagStream:
    path = Path(path)
    if not path.exists():
        raise TimeTagFormatError(f"time-tag file {path} not found", MODULE)
    if path.suffix.lower() == ".csv":
        stream = from_csv(path.read_text(encoding="utf-8"))
    else:
        stream = from_binary(path.read_bytes())
    logger.info(f"📂 Read {len(stream)} time tags from {path}")
    return stream
