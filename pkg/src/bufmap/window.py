"""Co-finite chunk-id windows and regular buffer maps.

The *relevant window* of a reporting session is the ascending set of chunk
ids whose filling state still has to be conveyed.  It always contains an
infinite tail of future ids, so it is stored through its complement: a
``floor`` below which every id is settled plus a finite tuple of
``excluded`` ids above the floor.  Every operation returns a new window;
values are immutable and safe to share across threads.

A :class:`BufferMap` is the uncompressed wire object a peer would
broadcast: the smallest covered chunk id plus one occupancy bit per chunk.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass
from typing import Iterable, Iterator

from .errors import PositionNotInWindow

__all__ = ["RelevantWindow", "BufferMap"]


@dataclass(frozen=True, slots=True)
class RelevantWindow:
    """All chunk ids ``>= floor`` except the ids listed in ``excluded``.

    The representation is kept canonical: ``excluded`` is strictly
    ascending and never touches the floor (a contiguous run of exclusions
    starting at the floor is absorbed into the floor itself).  Canonical
    form makes window equality plain structural equality, which is what
    codec synchronization checks rely on.
    """

    floor: int
    excluded: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        floor, excluded = self.floor, self.excluded
        if floor < 0:
            raise ValueError("floor must be non-negative")
        i = 0
        while i < len(excluded) and excluded[i] == floor + i:
            i += 1
        if i:
            object.__setattr__(self, "floor", floor + i)
            object.__setattr__(self, "excluded", excluded[i:])

    @classmethod
    def starting_at(cls, floor: int) -> "RelevantWindow":
        """Fresh window containing every chunk id at or above ``floor``."""
        return cls(floor)

    @classmethod
    def from_iterable(cls, floor: int, excluded: Iterable[int]) -> "RelevantWindow":
        """Build a window from an arbitrary iterable of excluded ids."""
        exc = sorted(set(excluded))
        if exc and exc[0] < floor:
            raise ValueError("excluded ids must not lie below the floor")
        return cls(floor, tuple(exc))

    def __contains__(self, chunk: int) -> bool:
        if chunk < self.floor:
            return False
        i = bisect_left(self.excluded, chunk)
        return not (i < len(self.excluded) and self.excluded[i] == chunk)

    def remove_below(self, offset: int) -> "RelevantWindow":
        """Drop every id below ``offset``; ids at or above it are untouched."""
        if offset <= self.floor:
            return self
        return RelevantWindow(offset, self.excluded[bisect_left(self.excluded, offset):])

    def exclude(self, positions: Iterable[int]) -> "RelevantWindow":
        """Remove ``positions`` from the window.

        Every position must currently be a member; excluding anything else
        raises :class:`PositionNotInWindow`, the canonical sign that two
        codec endpoints have drifted apart.
        """
        pos = sorted(positions)
        if not pos:
            return self
        prev = None
        for p in pos:
            if p == prev or p not in self:
                raise PositionNotInWindow(f"chunk {p} is not a window member")
            prev = p
        merged = tuple(sorted(self.excluded + tuple(pos)))
        return RelevantWindow(self.floor, merged)

    def members_in(self, lo: int, hi: int) -> list[int]:
        """Ascending members inside the half-open id range ``[lo, hi)``."""
        lo = max(lo, self.floor)
        if hi <= lo:
            return []
        out: list[int] = []
        prev = lo
        start = bisect_left(self.excluded, lo)
        stop = bisect_left(self.excluded, hi)
        for e in self.excluded[start:stop]:
            out.extend(range(prev, e))
            prev = e + 1
        out.extend(range(prev, hi))
        return out

    def first(self, k: int) -> list[int]:
        """The ``k`` smallest members (always defined; the set is co-finite)."""
        if k < 0:
            raise ValueError("k must be non-negative")
        out: list[int] = []
        prev = self.floor
        for e in self.excluded:
            if len(out) + (e - prev) >= k:
                out.extend(range(prev, prev + (k - len(out))))
                return out
            out.extend(range(prev, e))
            prev = e + 1
        out.extend(range(prev, prev + (k - len(out))))
        return out

    def drop_first(self, k: int) -> "RelevantWindow":
        """Remove the ``k`` smallest members from the window."""
        if k <= 0:
            return self
        last = self.first(k)[-1]
        return self.remove_below(last + 1)

    @property
    def max_excluded(self) -> int | None:
        """Largest id ever removed from the window, or ``None`` for a fresh one."""
        if self.excluded:
            return self.excluded[-1]
        return self.floor - 1 if self.floor > 0 else None

    def iter_members(self) -> Iterator[int]:
        """Members in ascending order, forever."""
        prev = self.floor
        for e in self.excluded:
            yield from range(prev, e)
            prev = e + 1
        c = prev
        while True:
            yield c
            c += 1

    def validate(self) -> None:
        """Check representation invariants; raises ``ValueError`` on breach."""
        if self.floor < 0:
            raise ValueError("negative floor")
        for a, b in zip(self.excluded, self.excluded[1:]):
            if a >= b:
                raise ValueError("excluded ids must be strictly ascending")
        if self.excluded and self.excluded[0] <= self.floor:
            raise ValueError("excluded ids must lie strictly above the floor")


@dataclass(frozen=True, slots=True)
class BufferMap:
    """Offset plus occupancy bits: bit ``i`` describes chunk ``offset + i``."""

    offset: int
    bits: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.offset < 0:
            raise ValueError("offset must be non-negative")
        if not self.bits:
            raise ValueError("a buffer map must cover at least one chunk")
        if not set(self.bits) <= {0, 1}:
            raise ValueError("bits must be 0 or 1")

    @property
    def width(self) -> int:
        return len(self.bits)

    @property
    def top(self) -> int:
        """Largest chunk id covered by this map."""
        return self.offset + len(self.bits) - 1

    def bit(self, chunk: int) -> int:
        """Occupancy bit for ``chunk``; the chunk must be covered."""
        i = chunk - self.offset
        if not 0 <= i < len(self.bits):
            raise IndexError(f"chunk {chunk} outside [{self.offset}, {self.top}]")
        return self.bits[i]

    def covers(self, chunk: int) -> bool:
        return self.offset <= chunk <= self.top
