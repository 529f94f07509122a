"""Timestamp streams and the TTAG binary file format.

A TTAG file is a 24-byte little-endian header (magic ``b"TTAG"``, format
version u16, channel id u16, duration in ps u64, event count u64) followed
by the timestamps as consecutive u64 picosecond values.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import StreamError

MAGIC = b"TTAG"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHHQQ")


@dataclass
class TimestampStream:
    """Sorted detection times of one channel, integer picoseconds.

    ``pair_ids`` is an optional per-event tag used by the simulator to mark
    which created pair an event came from (-1 for dark or unpaired events).
    """

    timestamps: np.ndarray
    duration_ps: int
    channel: int = 0
    metadata: dict = field(default_factory=dict)
    pair_ids: np.ndarray | None = None

    def __post_init__(self):
        self.timestamps = np.ascontiguousarray(self.timestamps, dtype=np.int64)
        self.duration_ps = int(self.duration_ps)
        if self.duration_ps <= 0:
            raise StreamError("stream duration must be positive")
        if self.timestamps.ndim != 1:
            raise StreamError("timestamps must be one-dimensional")
        if self.pair_ids is not None:
            self.pair_ids = np.asarray(self.pair_ids, dtype=np.int64)
            if self.pair_ids.shape != self.timestamps.shape:
                raise StreamError("pair_ids must match timestamps in length")
        self.validate()

    def validate(self):
        t = self.timestamps
        if t.size:
            if np.any(np.diff(t) < 0):
                raise StreamError(f"channel {self.channel}: timestamps are not sorted")
            if t[0] < 0 or t[-1] > self.duration_ps:
                raise StreamError(
                    f"channel {self.channel}: timestamps outside [0, {self.duration_ps}] ps")

    @property
    def duration(self) -> float:
        """Duration in seconds."""
        return self.duration_ps * 1e-12

    @property
    def rate(self) -> float:
        return len(self.timestamps) / self.duration

    def __len__(self):
        return len(self.timestamps)

    def window(self, start_ps, stop_ps) -> "TimestampStream":
        """Events in [start, stop), re-referenced to start."""
        lo, hi = np.searchsorted(self.timestamps, [start_ps, stop_ps])
        ids = None if self.pair_ids is None else self.pair_ids[lo:hi]
        return TimestampStream(self.timestamps[lo:hi] - start_ps, stop_ps - start_ps,
                               self.channel, dict(self.metadata), ids)


def write_ttag(stream: TimestampStream, path):
    """Write `stream` to `path`; metadata and pair tags are not stored."""
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, stream.channel,
                          stream.duration_ps, len(stream.timestamps))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(stream.timestamps.astype("<u8").tobytes())


def read_ttag(path) -> TimestampStream:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise StreamError(f"{path}: file too short for a TTAG header")
    magic, version, channel, duration, count = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise StreamError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise StreamError(f"{path}: unsupported format version {version}")
    body = raw[_HEADER.size:]
    if len(body) != 8 * count:
        raise StreamError(f"{path}: header announces {count} events, body holds {len(body) / 8:g}")
    ts = np.frombuffer(body, dtype="<u8").astype(np.int64)
    return TimestampStream(ts, duration, channel)
