"""Time-tag series: the common currency between source, circuit and detectors.

Timestamps are integer picoseconds on a 64-bit axis (stored signed, always
non-negative, serialized unsigned).  Picoseconds keep sub-jitter resolution
while leaving headroom for runs up to ~1e6 s.
"""

from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, DataError, ParameterError

PS_PER_S = 1_000_000_000_000
MAX_DURATION_S = 1.0e6  # keeps every timestamp far inside the 64-bit range

ORIGINS = ("emitted", "detected")

_BINARY_MAGIC = b"Q3TT"
_BINARY_VERSION = 1
_RECORD_DTYPE = np.dtype([("time_ps", "<u8"), ("channel", "u1")])


@dataclass(frozen=True)
class TimeTagSeries:
    """Ordered (time, channel) tags over a fixed observation window.

    times_ps      int64 picoseconds, non-decreasing, within [0, duration_ps]
    channels      uint8 channel ids, all < channel_count
    duration_ps   length of the observation window
    origin        "emitted" (photons) or "detected" (clicks)
    """

    times_ps: np.ndarray
    channels: np.ndarray
    duration_ps: int
    origin: str = "emitted"
    channel_count: int = 3

    def __post_init__(self):
        t = np.ascontiguousarray(self.times_ps, dtype=np.int64)
        c = np.ascontiguousarray(self.channels, dtype=np.uint8)
        if t.ndim != 1 or c.ndim != 1 or t.size != c.size:
            raise DataError("times and channels must be 1-d arrays of equal length")
        if self.duration_ps < 0:
            raise ParameterError("duration_ps must be non-negative")
        if not 1 <= self.channel_count <= 256:
            raise ParameterError("channel_count must lie in [1, 256]")
        if t.size:
            if t[0] < 0 or t[-1] > self.duration_ps:
                raise DataError("tag times must lie in [0, duration_ps]")
            if np.any(np.diff(t) < 0):
                raise DataError("tag times must be non-decreasing")
            if c.max() >= self.channel_count:
                raise DataError(f"channel ids must be < channel_count ({self.channel_count})")
        if self.origin not in ORIGINS:
            raise ParameterError(f"origin must be one of {ORIGINS}")
        t.flags.writeable = False
        c.flags.writeable = False
        object.__setattr__(self, "times_ps", t)
        object.__setattr__(self, "channels", c)

    def __len__(self) -> int:
        return int(self.times_ps.size)

    @property
    def duration_s(self) -> float:
        return self.duration_ps / PS_PER_S

    def rate_cps(self, channel: int | None = None) -> float:
        """Mean count rate over the window, optionally for one channel."""
        if self.duration_ps == 0:
            return 0.0
        n = len(self) if channel is None else int(np.count_nonzero(self.channels == channel))
        return n / self.duration_s

    def channel_counts(self) -> dict[int, int]:
        values, counts = np.unique(self.channels, return_counts=True)
        return {int(v): int(n) for v, n in zip(values, counts)}

    def select_channel(self, channel: int) -> "TimeTagSeries":
        mask = self.channels == channel
        return TimeTagSeries(self.times_ps[mask], self.channels[mask],
                             self.duration_ps, self.origin, self.channel_count)

    def with_channel(self, channel: int) -> "TimeTagSeries":
        """Relabel all tags onto a single channel."""
        ch = np.full(len(self), channel, dtype=np.uint8)
        count = max(self.channel_count, channel + 1)
        return TimeTagSeries(self.times_ps, ch, self.duration_ps, self.origin, count)

    @staticmethod
    def empty(duration_ps: int, origin: str = "emitted", channel_count: int = 3) -> "TimeTagSeries":
        return TimeTagSeries(np.empty(0, np.int64), np.empty(0, np.uint8),
                             duration_ps, origin, channel_count)

    @staticmethod
    def merge(parts: list["TimeTagSeries"], duration_ps: int | None = None) -> "TimeTagSeries":
        """Merge several series on a shared time axis (stable by input order)."""
        if not parts:
            raise DataError("nothing to merge")
        origin = parts[0].origin
        dur = duration_ps if duration_ps is not None else max(p.duration_ps for p in parts)
        count = max(p.channel_count for p in parts)
        t = np.concatenate([p.times_ps for p in parts])
        c = np.concatenate([p.channels for p in parts])
        order = np.argsort(t, kind="stable")
        return TimeTagSeries(t[order], c[order], dur, origin, count)

    # -- CSV ----------------------------------------------------------------

    def to_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("time_ps,channel\n")
            for t, c in zip(self.times_ps.tolist(), self.channels.tolist()):
                fh.write(f"{t},{c}\n")

    @staticmethod
    def from_csv(path: str | os.PathLike, duration_ps: int | None = None,
                 origin: str = "emitted", channel_count: int = 3) -> "TimeTagSeries":
        data = np.genfromtxt(path, delimiter=",", skip_header=1, dtype=np.int64, ndmin=2)
        if data.size == 0:
            t = np.empty(0, np.int64)
            c = np.empty(0, np.uint8)
        else:
            if data.shape[1] != 2:
                raise DataError("expected two columns: time_ps,channel")
            t = data[:, 0]
            c = data[:, 1].astype(np.uint8)
        dur = duration_ps if duration_ps is not None else (int(t[-1]) if t.size else 0)
        return TimeTagSeries(t, c, dur, origin, channel_count)

    # -- binary -------------------------------------------------------------
    # Layout: magic "Q3TT", version u8, channel-count u8, duration u64 LE,
    # record count u64 LE, then records of (time_ps u64 LE, channel u8).

    def to_binary(self, path: str | os.PathLike) -> None:
        rec = np.empty(len(self), dtype=_RECORD_DTYPE)
        rec["time_ps"] = self.times_ps.astype(np.uint64)
        rec["channel"] = self.channels
        with open(path, "wb") as fh:
            fh.write(_BINARY_MAGIC)
            fh.write(struct.pack("<BBQQ", _BINARY_VERSION, self.channel_count,
                                 self.duration_ps, len(self)))
            fh.write(rec.tobytes())

    @staticmethod
    def from_binary(path: str | os.PathLike, origin: str = "emitted") -> "TimeTagSeries":
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != _BINARY_MAGIC:
                raise DataError("bad magic; not a Q3TT time-tag file")
            version, channel_count, duration_ps, n = struct.unpack("<BBQQ", fh.read(18))
            if version != _BINARY_VERSION:
                raise DataError(f"unsupported Q3TT version {version}")
            raw = fh.read(n * _RECORD_DTYPE.itemsize)
        if len(raw) != n * _RECORD_DTYPE.itemsize:
            raise DataError("truncated Q3TT record block")
        rec = np.frombuffer(raw, dtype=_RECORD_DTYPE)
        return TimeTagSeries(rec["time_ps"].astype(np.int64), rec["channel"].copy(),
                             int(duration_ps), origin, int(channel_count))


def seconds_to_ps(t_s: float) -> int:
    """Convert a duration in seconds to integer picoseconds (capacity checked)."""
    if t_s < 0:
        raise ParameterError("duration must be non-negative")
    if t_s > MAX_DURATION_S:
        raise CapacityError(
            f"duration {t_s:g} s exceeds the supported maximum {MAX_DURATION_S:g} s "
            "for the integer-picosecond time axis")
    return int(round(t_s * PS_PER_S))
