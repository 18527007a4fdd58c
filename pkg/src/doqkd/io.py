"""Tag-stream file formats.

``ttag-v1``: little-endian binary, 10 bytes per record —
u8 channel (0=T1, 1=F1, 2=T2, 3=F2), u8 flags (bit 0: truth present),
i64 timestamp in ps. Truth-annotated files get a ``.truth`` side file with
one 24-byte record per main record: u64 pair id, f64 detuning (rad/s),
i64 true emission time (ps). Records without truth carry pair id
0xFFFFFFFFFFFFFFFF and NaN detuning in the side file.

A CSV reader/writer (``channel,timestamp_ps`` per line) is provided for
interoperability; channel may be a name (T1) or a code (0).
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .timetags import Channel, TagStream

TTAG_DTYPE = np.dtype([("channel", "u1"), ("flags", "u1"), ("timestamp", "<i8")])
TRUTH_DTYPE = np.dtype([("pair_id", "<u8"), ("detuning", "<f8"), ("emit_time", "<i8")])
NO_PAIR = np.uint64(0xFFFFFFFFFFFFFFFF)


def truth_path(path: str | Path) -> Path:
    p = Path(path)
    return p.with_suffix(p.suffix + ".truth")


def write_ttag(path: str | Path, stream: TagStream) -> None:
    """Write one stream (single- or mixed-channel) as ttag-v1."""
    n = len(stream)
    rec = np.zeros(n, TTAG_DTYPE)
    if stream.channels is not None:
        rec["channel"] = stream.channels
    elif stream.channel is not None:
        rec["channel"] = int(stream.channel)
    rec["timestamp"] = stream.times
    if stream.has_truth():
        has = stream.pair_ids >= 0
        rec["flags"] = has.astype(np.uint8)
        side = np.zeros(n, TRUTH_DTYPE)
        side["pair_id"] = np.where(has, stream.pair_ids.astype(np.int64), -1).view(np.uint64)
        side["detuning"] = np.where(has, stream.detunings, np.nan)
        side["emit_time"] = np.where(has, stream.emit_times, 0)
        truth_path(path).write_bytes(side.tobytes())
    Path(path).write_bytes(rec.tobytes())


def read_ttag(path: str | Path, duration_ps: int | None = None) -> TagStream:
    """Read a ttag-v1 file (and its side file, if present) into one stream.

    The result is sorted by timestamp; the file itself need not be.
    """
    raw = Path(path).read_bytes()
    if len(raw) % TTAG_DTYPE.itemsize:
        raise ConfigError(f"{path}: truncated ttag-v1 file")
    rec = np.frombuffer(raw, TTAG_DTYPE)
    times = rec["timestamp"].astype(np.int64)
    chans = rec["channel"].astype(np.uint8)
    if np.any(chans > 3):
        raise ConfigError(f"{path}: channel code out of range")

    truth = {}
    tp = truth_path(path)
    if tp.exists():
        side = np.frombuffer(tp.read_bytes(), TRUTH_DTYPE)
        if len(side) != len(rec):
            raise ConfigError(f"{tp}: side file record count mismatch")
        pid = side["pair_id"].view(np.int64).copy()
        pid[rec["flags"] & 1 == 0] = -1
        truth = dict(pair_ids=pid,
                     detunings=side["detuning"].astype(np.float64),
                     emit_times=side["emit_time"].astype(np.int64))

    order = np.argsort(times, kind="stable")
    times = times[order]
    chans = chans[order]
    truth = {k: v[order] for k, v in truth.items()}
    uniq = np.unique(chans)
    single = Channel(int(uniq[0])) if len(uniq) == 1 else None
    if duration_ps is None:
        duration_ps = int(times[-1]) + 1 if len(times) else 0
    return TagStream(times, single, duration_ps,
                     channels=None if single is not None else chans, **truth)


def write_csv(path: str | Path, stream: TagStream) -> None:
    with open(path, "w") as f:
        f.write("channel,timestamp_ps\n")
        chans = (stream.channels if stream.channels is not None
                 else np.full(len(stream), int(stream.channel), np.uint8))
        for c, t in zip(chans, stream.times):
            f.write(f"{Channel(int(c)).name},{int(t)}\n")


def read_csv(path: str | Path, duration_ps: int | None = None) -> TagStream:
    """Read ``channel,timestamp_ps`` text. Channel accepts names or codes."""
    times = []
    chans = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.lower().startswith("channel"):
                continue
            try:
                ch_s, t_s = line.split(",")[:2]
                ch_s = ch_s.strip().upper()
                ch = Channel[ch_s] if ch_s in Channel.__members__ else Channel(int(ch_s))
                times.append(int(t_s))
                chans.append(int(ch))
            except (ValueError, KeyError) as e:
                raise ConfigError(f"{path}:{lineno}: bad record ({e})") from e
    times = np.asarray(times, np.int64)
    chans = np.asarray(chans, np.uint8)
    order = np.argsort(times, kind="stable")
    times, chans = times[order], chans[order]
    uniq = np.unique(chans)
    single = Channel(int(uniq[0])) if len(uniq) == 1 else None
    if duration_ps is None:
        duration_ps = int(times[-1]) + 1 if len(times) else 0
    return TagStream(times, single, duration_ps,
                     channels=None if single is not None else chans)


def canonical_json(obj) -> str:
    """Deterministic JSON serialization used by all report writers."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_json(path: str | Path, obj) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def read_json(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read JSON {path}: {e}") from e
