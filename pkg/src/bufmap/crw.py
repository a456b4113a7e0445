"""Buffer-map codec on a window shared by both directions of a pair.

Both endpoints prune one common window: a position leaves it when either
side reports it filled, so neither peer ever hears about a chunk the other
already told it about, nor re-reports a chunk the partner holds.  Send and
receive are symmetric; a full exchange round is A sending, B receiving,
B replying, A receiving, after which the two windows are equal again.

Messages always carry the map offset here; the offsetless optimization of
the single-window codec is not applied to the shared window.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import Desynchronized
from .srw import WantedState
from .window import BufferMap, RelevantWindow

__all__ = ["CrwMessage", "CrwEndpoint", "StepResult", "send", "receive", "session_step"]


@dataclass(frozen=True, slots=True)
class CrwMessage:
    offset: int
    bits: tuple[int, ...]


@dataclass(frozen=True, slots=True)
class CrwEndpoint:
    window: RelevantWindow


def send(state: CrwEndpoint, bm: BufferMap) -> tuple[CrwMessage, CrwEndpoint]:
    """Compress ``bm`` against the shared window and advance it.

    No consistency check is made against excluded positions: an exclusion
    may originate from the partner's report, in which case this peer's own
    buffer legitimately carries either bit there.
    """
    window = state.window
    members = window.members_in(bm.offset, bm.top + 1)
    bits = bm.bits
    off = bm.offset
    v = tuple(bits[c - off] for c in members)
    new_window = window.remove_below(bm.offset)
    ones = [c for c, b in zip(members, v) if b]
    if ones:
        new_window = new_window.exclude(ones)
    return CrwMessage(bm.offset, v), CrwEndpoint(new_window)


def receive(state: CrwEndpoint, msg: CrwMessage, expected_width: int | None = None
            ) -> tuple[list[WantedState], BufferMap | None, CrwEndpoint]:
    """Interpret ``msg`` against the shared window.

    Returns the decoded states, the rebuilt partner map (positions this
    endpoint already ruled out rebuild as 1, which is only ever wrong for
    chunks it no longer wants), and the successor state.
    """
    window = state.window.remove_below(msg.offset)
    if expected_width is not None:
        covered = window.members_in(msg.offset, msg.offset + expected_width)
        if len(covered) != len(msg.bits):
            raise Desynchronized(
                f"message carries {len(msg.bits)} bits but the window holds "
                f"{len(covered)} members in the covered range"
            )
    members = window.first(len(msg.bits))

    mep = window.max_excluded
    last = members[-1] if members else -1
    top = max(mep if mep is not None else -1, last)
    rebuilt: BufferMap | None = None
    if top >= msg.offset:
        out = [0] * (top - msg.offset + 1)
        for c, b in zip(members, msg.bits):
            out[c - msg.offset] = b
        mapped = set(members)
        for k in range(len(out)):
            c = msg.offset + k
            if c not in mapped and c not in window:
                out[k] = 1
        rebuilt = BufferMap(msg.offset, tuple(out))

    wanted = [WantedState(c, b) for c, b in zip(members, msg.bits)]
    ones = [c for c, b in zip(members, msg.bits) if b]
    if ones:
        window = window.exclude(ones)
    return wanted, rebuilt, CrwEndpoint(window)


@dataclass(frozen=True, slots=True)
class StepResult:
    """Everything produced by one full exchange round."""

    endpoint_a: CrwEndpoint
    endpoint_b: CrwEndpoint
    message_ab: CrwMessage
    message_ba: CrwMessage
    wanted_at_b: list[WantedState]
    wanted_at_a: list[WantedState]
    map_of_a_at_b: BufferMap | None
    map_of_b_at_a: BufferMap | None


def session_step(a: CrwEndpoint, b: CrwEndpoint, bm_a: BufferMap, bm_b: BufferMap
                 ) -> StepResult:
    """Run one round on the paired schedule: A sends first, B replies."""
    msg_ab, a = send(a, bm_a)
    wanted_b, map_a, b = receive(b, msg_ab)
    msg_ba, b = send(b, bm_b)
    wanted_a, map_b, a = receive(a, msg_ba)
    return StepResult(a, b, msg_ab, msg_ba, wanted_b, wanted_a, map_a, map_b)
