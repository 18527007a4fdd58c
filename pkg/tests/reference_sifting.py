"""Deliberately slow, dictionary-based reference for the sifting round.

Written independently of the production implementation: plain Python loops,
quadratic scans, no shared helpers beyond the wire format. Used to check
byte-identical keys and transcripts.
"""
import numpy as np

from doqkd.sifting import FrameFormat, Message, MessageType, Transcript
from doqkd.timetags import Party, TagStream


def _addresses(stream: TagStream, fmt: FrameFormat):
    per_frame = {}
    if stream.duration_ps > 0:
        n_frames = stream.duration_ps // fmt.frame_width_ps
    elif len(stream):
        n_frames = int(stream.times[-1]) // fmt.frame_width_ps + 1
    else:
        n_frames = 0
    for t in stream.times:
        t = int(t)
        frame = t // fmt.frame_width_ps
        if frame >= n_frames:
            continue
        rem = t - frame * fmt.frame_width_ps
        slot = rem // fmt.slot_width_ps
        b = (rem - slot * fmt.slot_width_ps) // fmt.bin_width_ps
        per_frame.setdefault(frame, []).append((slot, b))
    singles = {f: v[0] for f, v in per_frame.items() if len(v) == 1}
    multi = sum(1 for v in per_frame.values() if len(v) >= 2)
    return singles, multi


def reference_sift(alice: TagStream, bob: TagStream, fmt: FrameFormat):
    """Returns (key_a, key_b, kept_frames, transcript_bytes)."""
    singles_a, multi_a = _addresses(alice, fmt)
    singles_b, multi_b = _addresses(bob, fmt)

    frames_a = sorted(singles_a)
    common = sorted(f for f in frames_a if f in singles_b)
    kept = [f for f in common if singles_a[f][1] == singles_b[f][1]]

    transcript = Transcript()
    transcript.append(Message(Party.ALICE, MessageType.FRAMES,
                              np.array(frames_a, np.int64)))
    transcript.append(Message(Party.BOB, MessageType.BINS,
                              np.array(common, np.int64),
                              np.array([singles_b[f][1] for f in common], np.uint8)))
    transcript.append(Message(Party.ALICE, MessageType.FRAMES,
                              np.array(kept, np.int64)))

    key_a = np.array([singles_a[f][0] for f in kept], np.int64)
    key_b = np.array([singles_b[f][0] for f in kept], np.int64)
    return key_a, key_b, len(kept), transcript.to_bytes(), multi_a + multi_b
