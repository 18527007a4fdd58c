"""Frame/slot/bin encoding and the two-party bin-sifting protocol.

A frame holds 2**N slots of I bins each, bin width tau ps. The slot index of
a kept coincidence is the key symbol; bin indices are exchanged to reject
jitter-smeared events; slot numbers never appear on the classical channel.

The protocol transcript is an explicit message log (``sift-v1`` wire format)
so the same state machines can later back a networked deployment.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import ProtocolAbort
from .timetags import Basis, Party, TagStream


@dataclass(frozen=True)
class FrameFormat:
    """Three-level time partition: N key bits, I bins per slot, tau ps bins."""

    n_bits: int
    bins_per_slot: int
    bin_width_ps: int

    def __post_init__(self):
        if self.n_bits < 1 or self.bins_per_slot < 1 or self.bin_width_ps < 1:
            raise ValueError("need n_bits >= 1, bins_per_slot >= 1, bin_width_ps >= 1")

    @property
    def slots_per_frame(self) -> int:
        return 1 << self.n_bits

    @property
    def slot_width_ps(self) -> int:
        return self.bins_per_slot * self.bin_width_ps

    @property
    def frame_width_ps(self) -> int:
        return self.slots_per_frame * self.slot_width_ps


@dataclass(frozen=True)
class TimeAddress:
    frame: int
    slot: int
    bin: int


def assign_address(t: int, fmt: FrameFormat) -> TimeAddress:
    """Decompose a timestamp into (frame, slot, bin)."""
    if t < 0:
        raise ValueError("timestamp must be >= 0")
    frame, rem = divmod(int(t), fmt.frame_width_ps)
    slot, rem = divmod(rem, fmt.slot_width_ps)
    return TimeAddress(frame, slot, rem // fmt.bin_width_ps)


def _addresses(times: np.ndarray, fmt: FrameFormat) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    frames, rem = np.divmod(times, fmt.frame_width_ps)
    slots, rem = np.divmod(rem, fmt.slot_width_ps)
    return frames, slots, rem // fmt.bin_width_ps


def _complete_frames(tags: TagStream, fmt: FrameFormat) -> int:
    """Number of whole frames in the session; the trailing partial frame is dropped."""
    if tags.duration_ps > 0:
        return tags.duration_ps // fmt.frame_width_ps
    if len(tags) == 0:
        return 0
    return int(tags.times[-1]) // fmt.frame_width_ps + 1


def _single_event_arrays(tags: TagStream, fmt: FrameFormat
                         ) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """(frames, slots, bins, multi_frame_count) over frames with exactly one
    tag; the trailing partial frame is dropped. Single pass over the sorted
    stream."""
    t = tags.times
    n_frames = _complete_frames(tags, fmt)
    # sorted stream: the partial-frame tail is a suffix
    t = t[:np.searchsorted(t, n_frames * fmt.frame_width_ps)]
    if t.size == 0:
        e = np.empty(0, np.int64)
        return e, e.copy(), e.copy(), 0
    frames = t // fmt.frame_width_ps
    change = np.flatnonzero(frames[1:] != frames[:-1]) + 1
    starts = np.concatenate(([0], change))
    ends = np.concatenate((change, [frames.size]))
    runs = ends - starts
    single = runs == 1
    idx = starts[single]
    f = frames[idx]
    rem = t[idx] - f * fmt.frame_width_ps
    slots, rem = np.divmod(rem, fmt.slot_width_ps)
    return f, slots, rem // fmt.bin_width_ps, int(np.count_nonzero(runs >= 2))


def single_event_frames(tags: TagStream, fmt: FrameFormat) -> dict[int, TimeAddress]:
    """Map frame -> TimeAddress for frames containing exactly one tag."""
    f, s, b, _ = _single_event_arrays(tags, fmt)
    return {int(fi): TimeAddress(int(fi), int(si), int(bi)) for fi, si, bi in zip(f, s, b)}


def _sorted_intersect(a: np.ndarray, b: np.ndarray
                      ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Intersection of two sorted unique arrays: (common, idx_a, idx_b)."""
    ia = np.searchsorted(a, b)
    hit = np.zeros(b.size, bool)
    valid = ia < a.size
    hit[valid] = a[ia[valid]] == b[valid]
    ib = np.nonzero(hit)[0]
    return b[hit], ia[hit], ib


# ---------------------------------------------------------------------------
# seeded frame hash for the security/key split

_SM_GAMMA = 0x9E3779B97F4A7C15
_SM_M1 = 0xBF58476D1CE4E5B9
_SM_M2 = 0x94D049BB133111EB
_U64 = 0xFFFFFFFFFFFFFFFF


def _splitmix64(x: np.ndarray) -> np.ndarray:
    x = (x + np.uint64(_SM_GAMMA)).astype(np.uint64)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(_SM_M1)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(_SM_M2)
    return x ^ (x >> np.uint64(31))


def _splitmix64_int(x: int) -> int:
    x = (x + _SM_GAMMA) & _U64
    x = ((x ^ (x >> 30)) * _SM_M1) & _U64
    x = ((x ^ (x >> 27)) * _SM_M2) & _U64
    return x ^ (x >> 31)


def security_mask(times: np.ndarray, fraction: float, seed: int,
                  fmt: FrameFormat) -> np.ndarray:
    """Boolean mask of tags assigned to the security fraction.

    Keyed on the frame number through a seeded integer hash, so both
    parties partition consistently without extra communication, and the
    same frame's tags always land on the same side.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be in (0, 1)")
    frames = (times // fmt.frame_width_ps).astype(np.int64).view(np.uint64)
    salt = np.uint64(_splitmix64_int(seed & _U64))
    h = _splitmix64(frames ^ salt)
    threshold = np.uint64(int(fraction * 2.0**64))
    return h < threshold


def split_security_fraction(tags: TagStream, fraction: float, seed: int,
                            fmt: FrameFormat) -> tuple[TagStream, TagStream]:
    """Split one stream into disjoint (security, key) parts, order-preserving."""
    sec = security_mask(tags.times, fraction, seed, fmt)
    return tags.select(sec), tags.select(~sec)


# ---------------------------------------------------------------------------
# transcript


class MessageType(IntEnum):
    FRAMES = 1
    BINS = 2
    ABORT = 3


@dataclass(frozen=True)
class Message:
    sender: Party
    msg_type: MessageType
    frames: np.ndarray            # int64 frame ids
    bins: np.ndarray | None = None  # uint8, parallel to frames (BINS only)

    @property
    def count(self) -> int:
        return int(self.frames.size)


@dataclass
class Transcript:
    """Ordered classical-channel message log (sift-v1 serializable)."""

    messages: list[Message] = field(default_factory=list)

    def append(self, msg: Message) -> None:
        self.messages.append(msg)

    def to_bytes(self) -> bytes:
        out = bytearray()
        for m in self.messages:
            out += struct.pack("<BI", int(m.msg_type), m.count)
            if m.msg_type == MessageType.FRAMES:
                out += m.frames.astype("<i8").tobytes()
            elif m.msg_type == MessageType.BINS:
                rec = np.zeros(m.count, dtype=[("frame", "<i8"), ("bin", "u1")])
                rec["frame"] = m.frames
                rec["bin"] = m.bins
                out += rec.tobytes()
        return bytes(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Transcript":
        # senders follow protocol convention: Alice, Bob, Alice, ...
        order = (Party.ALICE, Party.BOB, Party.ALICE)
        msgs = []
        off = 0
        while off < len(data):
            mtype, count = struct.unpack_from("<BI", data, off)
            off += 5
            mtype = MessageType(mtype)
            sender = order[len(msgs)] if len(msgs) < 3 else Party.ALICE
            if mtype == MessageType.FRAMES:
                frames = np.frombuffer(data, "<i8", count, off).astype(np.int64)
                off += 8 * count
                msgs.append(Message(sender, mtype, frames))
            elif mtype == MessageType.BINS:
                rec = np.frombuffer(data, np.dtype([("frame", "<i8"), ("bin", "u1")]),
                                    count, off)
                off += 9 * count
                msgs.append(Message(sender, mtype, rec["frame"].astype(np.int64),
                                    rec["bin"].copy()))
            else:
                msgs.append(Message(sender, mtype, np.empty(0, np.int64)))
        return cls(msgs)


@dataclass
class SiftResult:
    """Raw keys plus protocol bookkeeping for one sifting round."""

    key_a: np.ndarray
    key_b: np.ndarray
    kept_frame_ids: np.ndarray
    kept_frames: int
    discarded_bin_mismatch: int
    discarded_multi_event: int
    transcript: Transcript
    fmt: FrameFormat

    def __post_init__(self):
        assert len(self.key_a) == len(self.key_b) == self.kept_frames


def run_sifting(alice: TagStream, bob: TagStream, fmt: FrameFormat,
                fmt_b: FrameFormat | None = None) -> SiftResult:
    """Run the three-message bin-sifting round between two time-basis streams.

    Message 1 (Alice): her single-event frame numbers. Message 2 (Bob): the
    frame intersection together with his bin numbers. Message 3 (Alice): the
    surviving frames where both bins agree. Key symbols are the slot numbers
    of surviving frames, in frame order; slots are never transmitted.
    """
    for s in (alice, bob):
        if s.basis is Basis.FREQ:
            raise ValueError("sifting takes time-basis streams only")
    transcript = Transcript()
    if fmt_b is not None and fmt_b != fmt:
        transcript.append(Message(Party.BOB, MessageType.ABORT, np.empty(0, np.int64)))
        exc = ProtocolAbort(f"frame format mismatch: {fmt} vs {fmt_b}")
        exc.transcript = transcript
        raise exc

    fa, sa, ba, multi_a = _single_event_arrays(alice, fmt)
    fb, sb, bb, multi_b = _single_event_arrays(bob, fmt)

    transcript.append(Message(Party.ALICE, MessageType.FRAMES, fa))
    common, ia, ib = _sorted_intersect(fa, fb)
    transcript.append(Message(Party.BOB, MessageType.BINS, common,
                              bb[ib].astype(np.uint8)))
    match = ba[ia] == bb[ib]
    kept = common[match]
    transcript.append(Message(Party.ALICE, MessageType.FRAMES, kept))

    return SiftResult(
        key_a=sa[ia][match].astype(np.int64),
        key_b=sb[ib][match].astype(np.int64),
        kept_frame_ids=kept,
        kept_frames=int(kept.size),
        discarded_bin_mismatch=int(np.count_nonzero(~match)),
        discarded_multi_event=multi_a + multi_b,
        transcript=transcript,
        fmt=fmt,
    )


def qber(key_a: np.ndarray, key_b: np.ndarray) -> float:
    """Fraction of positions where the key symbols differ."""
    key_a = np.asarray(key_a)
    key_b = np.asarray(key_b)
    if key_a.shape != key_b.shape:
        raise ValueError("keys must have equal length")
    if key_a.size == 0:
        raise ValueError("QBER of empty keys is undefined")
    return float(np.count_nonzero(key_a != key_b) / key_a.size)


def pack_symbols(symbols: np.ndarray, n_bits: int) -> bytes:
    """Pack N-bit symbols into bytes, most-significant bit first.

    Bit k of symbol s (k=0 its MSB) precedes bit k+1; symbols are laid out
    consecutively and the final byte is zero-padded in its low bits.
    """
    symbols = np.asarray(symbols, np.int64)
    if symbols.size and (symbols.min() < 0 or symbols.max() >= 1 << n_bits):
        raise ValueError("symbol out of range for n_bits")
    shifts = np.arange(n_bits - 1, -1, -1)
    bits = ((symbols[:, None] >> shifts) & 1).astype(np.uint8).ravel()
    return np.packbits(bits).tobytes()


def unpack_symbols(data: bytes, n_bits: int, count: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(data, np.uint8))[:count * n_bits]
    shifts = np.arange(n_bits - 1, -1, -1)
    return (bits.reshape(count, n_bits).astype(np.int64) << shifts).sum(axis=1)
