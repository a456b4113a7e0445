"""Model-driven code-length accounting and a binary arithmetic coder.

Both sides of a synchronized codec session can predict, for every surviving
bit of a message, the probability that it is 1: a position reported for the
first time follows the diffusion curve's marginal at its age, a retained
position follows the conditional fill probability given that it was still
empty one round earlier.  Feeding those per-position probabilities into an
arithmetic coder squeezes the surviving bits down to their entropy, which
is what the joint-force limits describe.

The coder is a fixed-precision (32-bit register, 30-bit probability)
binary arithmetic coder with carry handling via underflow counting.  It is
deterministic, carries no adaptivity of its own, and always decodes its
own output exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import log2
from typing import Sequence

from .diffusion import SCurve
from .errors import DegenerateCondition, ModelContradiction, TruncatedBlock
from .wire import decode_varint, encode_varint

__all__ = [
    "BitModel",
    "model_for_members",
    "ideal_code_length",
    "CodedBlock",
    "ac_encode",
    "ac_decode",
]

BitModel = tuple[float, ...]

_STATE_BITS = 32
_FULL = 1 << _STATE_BITS
_HALF = _FULL >> 1
_QUARTER = _HALF >> 1
_MASK = _FULL - 1
_PROB_BITS = 30
_PROB_ONE = 1 << _PROB_BITS


def model_for_members(curve: SCurve, members: Sequence[int], newest: int,
                      baseline_newest: int) -> BitModel:
    """Per-position probability of a 1 for the members a message carries.

    ``newest`` is the highest chunk id the sender's buffer covers now;
    ``baseline_newest`` is the highest id of the last report the receiver
    is known to hold (one round back over an ideal channel, the confirmed
    snapshot over a lossy one).  A member above the baseline is being
    observed for the first time and gets the marginal fill probability at
    its age; any other member was reported empty in the baseline, so it
    gets the conditional probability of having filled since.
    """
    table = curve.table
    n = curve.width
    probs = []
    for c in members:
        age = newest - c
        if age < 0:
            raise ValueError(f"member {c} above newest chunk {newest}")
        now = table[age] if age <= n else 1.0
        if c > baseline_newest:
            probs.append(now)
        else:
            prev_age = baseline_newest - c
            prev = table[prev_age] if prev_age <= n else 1.0
            if prev >= 1.0:
                raise DegenerateCondition(
                    f"member {c} should have been reported filled already"
                )
            probs.append(min(1.0, (now - prev) / (1.0 - prev)))
    return tuple(probs)


def ideal_code_length(bits: Sequence[int], model: BitModel) -> float:
    """Shannon information of ``bits`` under ``model``, in bits."""
    if len(bits) != len(model):
        raise ValueError("model length must match bit count")
    total = 0.0
    for b, p in zip(bits, model):
        p_obs = p if b else 1.0 - p
        if p_obs <= 0.0:
            raise ModelContradiction(f"observed bit {b} has probability 0")
        if p_obs < 1.0:
            total -= log2(p_obs)
    return total


@dataclass(frozen=True, slots=True)
class CodedBlock:
    """Arithmetic-coded payload plus the number of bits it decodes to."""

    payload: bytes
    bit_count: int

    def to_wire(self) -> bytes:
        return encode_varint(self.bit_count) + self.payload

    @classmethod
    def from_wire(cls, data: bytes) -> "CodedBlock":
        count, pos = decode_varint(data)
        return cls(data[pos:], count)

    @property
    def payload_bits(self) -> int:
        return 8 * len(self.payload)


def _quantize(p: float) -> int:
    # Probability of a 1 in 1/2^30 units, clamped so neither symbol ever
    # has zero coding range.
    t = int(p * _PROB_ONE + 0.5)
    return min(_PROB_ONE - 1, max(1, t))


class _BitWriter:
    __slots__ = ("_bytes", "_current", "_nbits")

    def __init__(self) -> None:
        self._bytes = bytearray()
        self._current = 0
        self._nbits = 0

    def write(self, bit: int) -> None:
        self._current = (self._current << 1) | bit
        self._nbits += 1
        if self._nbits == 8:
            self._bytes.append(self._current)
            self._current = 0
            self._nbits = 0

    def getvalue(self) -> bytes:
        if self._nbits:
            return bytes(self._bytes) + bytes([self._current << (8 - self._nbits)])
        return bytes(self._bytes)


class _BitReader:
    __slots__ = ("_data", "_pos")

    def __init__(self, data: bytes) -> None:
        self._data = data
        self._pos = 0

    def read(self) -> int:
        # Past the end of the payload the stream continues with zeros,
        # which the encoder's termination bit makes unambiguous.
        i = self._pos
        self._pos = i + 1
        if i >= 8 * len(self._data):
            return 0
        return (self._data[i >> 3] >> (7 - (i & 7))) & 1


def ac_encode(bits: Sequence[int], model: BitModel) -> CodedBlock:
    """Losslessly encode ``bits`` under ``model``.

    The payload stays within a handful of bits of the ideal code length:
    quantization costs a vanishing fraction per symbol and termination plus
    byte padding cost at most ten bits per block.
    """
    if len(bits) != len(model):
        raise ValueError("model length must match bit count")
    out = _BitWriter()
    low = 0
    high = _MASK
    underflow = 0
    for b, p in zip(bits, model):
        p_obs = p if b else 1.0 - p
        if p_obs <= 0.0:
            raise ModelContradiction(f"observed bit {b} has probability 0")
        t1 = _quantize(p)
        span = high - low + 1
        split = low + (span * (_PROB_ONE - t1) >> _PROB_BITS) - 1
        if b:
            low = split + 1
        else:
            high = split
        while True:
            if (low ^ high) & _HALF == 0:
                bit = low >> (_STATE_BITS - 1)
                out.write(bit)
                inv = bit ^ 1
                for _ in range(underflow):
                    out.write(inv)
                underflow = 0
                low = (low << 1) & _MASK
                high = ((high << 1) & _MASK) | 1
            elif low & ~high & _QUARTER:
                underflow += 1
                low = (low << 1) ^ _HALF
                high = ((high ^ _HALF) << 1) | _HALF | 1
            else:
                break
    if bits:
        # Disambiguate the final interval with a quarter marker, flushing
        # any pending underflow bits so the payload never undercuts the
        # information actually coded.
        underflow += 1
        first = 0 if low < _QUARTER else 1
        out.write(first)
        inv = first ^ 1
        for _ in range(underflow):
            out.write(inv)
    return CodedBlock(out.getvalue(), len(bits))


def ac_decode(block: CodedBlock, model: BitModel) -> tuple[int, ...]:
    """Decode a block produced by :func:`ac_encode` under the same model."""
    if block.bit_count != len(model):
        raise ValueError("model length must match the block's bit count")
    if block.bit_count == 0:
        return ()
    min_bits = 1  # at least the termination bit must be present
    if 8 * len(block.payload) < min_bits:
        raise TruncatedBlock("payload shorter than any valid coded block")
    reader = _BitReader(block.payload)
    low = 0
    high = _MASK
    code = 0
    for _ in range(_STATE_BITS):
        code = (code << 1) | reader.read()
    bits = []
    for p in model:
        t1 = _quantize(p)
        span = high - low + 1
        split = low + (span * (_PROB_ONE - t1) >> _PROB_BITS) - 1
        if code <= split:
            bits.append(0)
            high = split
        else:
            bits.append(1)
            low = split + 1
        while True:
            if (low ^ high) & _HALF == 0:
                low = (low << 1) & _MASK
                high = ((high << 1) & _MASK) | 1
                code = ((code << 1) & _MASK) | reader.read()
            elif low & ~high & _QUARTER:
                low = (low << 1) ^ _HALF
                high = ((high ^ _HALF) << 1) | _HALF | 1
                code = (code & _HALF) | ((code << 1) & (_MASK >> 1)) | reader.read()
            else:
                break
    return tuple(bits)
