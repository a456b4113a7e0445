"""Buffer-map codec keyed to the sender's own relevant window.

The sender reads the occupancy bits of the window members its map covers,
in ascending order, and ships only those.  Every position reported as 1
leaves the window, so no chunk is ever reported filled twice.  A receiver
holding a synchronized copy of the window maps the bits back onto the
same member sequence and can rebuild the full map.

Three message shapes exist:

* offset-carrying - the map's offset travels with the bits, so the
  receiver can also drop members the sender's buffer has slid past;
* type 0 - bits only, valid while no member lies below the map offset;
* type 1 - a skip count plus bits, used when members have fallen below
  the offset (chunks that were played without ever being reported
  filled) and the receiver must discard them explicitly.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import Literal

from .errors import Desynchronized, InconsistentBitmap
from .window import BufferMap, RelevantWindow

__all__ = [
    "WantedState",
    "SrwWithOffset",
    "SrwType0",
    "SrwType1",
    "SrwMessage",
    "SrwSender",
    "SrwReceiver",
    "encode",
    "decode",
]

EncodeMode = Literal["with_offset", "optimized"]


@dataclass(frozen=True, slots=True)
class WantedState:
    """One decoded fact: the filling bit of a chunk the receiver tracked."""

    chunk: int
    filled: int


@dataclass(frozen=True, slots=True)
class SrwWithOffset:
    offset: int
    bits: tuple[int, ...]


@dataclass(frozen=True, slots=True)
class SrwType0:
    bits: tuple[int, ...]


@dataclass(frozen=True, slots=True)
class SrwType1:
    skip: int
    bits: tuple[int, ...]


SrwMessage = SrwWithOffset | SrwType0 | SrwType1


@dataclass(frozen=True, slots=True)
class SrwSender:
    window: RelevantWindow


@dataclass(frozen=True, slots=True)
class SrwReceiver:
    window: RelevantWindow


def _check_consistency(window: RelevantWindow, bm: BufferMap) -> None:
    # Once a position was reported filled it must stay filled: any excluded
    # id the map still covers has to carry a 1.
    exc = window.excluded
    lo = bisect_left(exc, bm.offset)
    hi = bisect_right(exc, bm.top)
    for e in exc[lo:hi]:
        if bm.bit(e) != 1:
            raise InconsistentBitmap(
                f"chunk {e} was reported filled before but the map carries 0"
            )


def encode(state: SrwSender, bm: BufferMap, mode: EncodeMode = "optimized"
           ) -> tuple[SrwMessage, SrwSender]:
    """Compress ``bm`` against the sender window and advance the window.

    Returns the message and the successor sender state.  Raises
    :class:`InconsistentBitmap` if the map contradicts an earlier report.
    """
    window = state.window
    _check_consistency(window, bm)
    members = window.members_in(bm.offset, bm.top + 1)
    bits = bm.bits
    off = bm.offset
    v = tuple(bits[c - off] for c in members)

    msg: SrwMessage
    if mode == "with_offset":
        msg = SrwWithOffset(bm.offset, v)
    elif mode == "optimized":
        skipped = len(window.members_in(window.floor, bm.offset))
        msg = SrwType0(v) if skipped == 0 else SrwType1(skipped, v)
    else:
        raise ValueError(f"unknown encode mode {mode!r}")

    new_window = window.remove_below(bm.offset)
    ones = [c for c, b in zip(members, v) if b]
    if ones:
        new_window = new_window.exclude(ones)
    return msg, SrwSender(new_window)


def _reconstruct(window: RelevantWindow, offset: int,
                 members: list[int], bits: tuple[int, ...]) -> BufferMap | None:
    # Rebuild the full map: mapped members take their bit, every other
    # position at or above the offset is a non-member, i.e. known filled.
    # The map runs up to the larger of the highest exclusion and the last
    # mapped member (inclusive, hence the +1 on the length).
    mep = window.max_excluded
    last = members[-1] if members else -1
    top = max(mep if mep is not None else -1, last)
    length = top - offset + 1
    if length <= 0:
        return None
    out = [0] * length
    for c, b in zip(members, bits):
        out[c - offset] = b
    mapped = set(members)
    for k in range(length):
        c = offset + k
        if c not in mapped and c not in window:
            out[k] = 1
    return BufferMap(offset, tuple(out))


def decode(state: SrwReceiver, msg: SrwMessage, expected_width: int | None = None
           ) -> tuple[list[WantedState], BufferMap | None, SrwReceiver]:
    """Interpret ``msg`` against the receiver window.

    Returns the decoded per-chunk states, the rebuilt full map (only for
    offset-carrying messages), and the successor receiver state.  With
    ``expected_width`` given, an offset-carrying message whose bit count
    does not match the members the window holds in the covered range
    raises :class:`Desynchronized`.
    """
    window = state.window
    rebuilt: BufferMap | None = None

    if isinstance(msg, SrwWithOffset):
        window = window.remove_below(msg.offset)
        if expected_width is not None:
            covered = window.members_in(msg.offset, msg.offset + expected_width)
            if len(covered) != len(msg.bits):
                raise Desynchronized(
                    f"message carries {len(msg.bits)} bits but the window holds "
                    f"{len(covered)} members in the covered range"
                )
        members = window.first(len(msg.bits))
        rebuilt = _reconstruct(window, msg.offset, members, msg.bits)
    elif isinstance(msg, SrwType1):
        window = window.drop_first(msg.skip)
        members = window.first(len(msg.bits))
    elif isinstance(msg, SrwType0):
        members = window.first(len(msg.bits))
    else:
        raise TypeError(f"not an SRW message: {msg!r}")

    wanted = [WantedState(c, b) for c, b in zip(members, msg.bits)]
    ones = [c for c, b in zip(members, msg.bits) if b]
    if ones:
        window = window.exclude(ones)
    return wanted, rebuilt, SrwReceiver(window)
