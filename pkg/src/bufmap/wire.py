"""Bit-exact wire encoding of messages and coded blocks.

Layout, common to all message kinds: a 1-byte tag, kind-specific header
fields, then an unsigned LEB128 varint bit count followed by the packed
bits.  Bits pack index-ascending, little-endian within each byte; offsets
are 8-byte little-endian unsigned integers.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .crw import CrwMessage
from .errors import CodecError
from .srw import SrwMessage, SrwType0, SrwType1, SrwWithOffset

__all__ = [
    "TAG_SRW_WITH_OFFSET",
    "TAG_SRW_TYPE0",
    "TAG_SRW_TYPE1",
    "TAG_CRW",
    "ReliabilityHeader",
    "encode_varint",
    "decode_varint",
    "pack_bits",
    "unpack_bits",
    "encode_message",
    "decode_message",
    "message_wire_bits",
]

TAG_SRW_WITH_OFFSET = 0
TAG_SRW_TYPE0 = 1
TAG_SRW_TYPE1 = 2
TAG_CRW = 3


def encode_varint(value: int) -> bytes:
    if value < 0:
        raise ValueError("varints are unsigned")
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def decode_varint(data: bytes, pos: int = 0) -> tuple[int, int]:
    """Returns (value, next position); raises CodecError on truncation."""
    value = 0
    shift = 0
    while True:
        if pos >= len(data):
            raise CodecError("truncated varint")
        byte = data[pos]
        pos += 1
        value |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return value, pos
        shift += 7


def pack_bits(bits: tuple[int, ...] | list[int]) -> bytes:
    out = bytearray((len(bits) + 7) // 8)
    for i, b in enumerate(bits):
        if b:
            out[i >> 3] |= 1 << (i & 7)
    return bytes(out)


def unpack_bits(data: bytes, count: int, pos: int = 0) -> tuple[tuple[int, ...], int]:
    nbytes = (count + 7) // 8
    if pos + nbytes > len(data):
        raise CodecError("truncated bit payload")
    bits = tuple((data[pos + (i >> 3)] >> (i & 7)) & 1 for i in range(count))
    return bits, pos + nbytes


def _bits_field(bits: tuple[int, ...]) -> bytes:
    return encode_varint(len(bits)) + pack_bits(bits)


def encode_message(msg: SrwMessage | CrwMessage) -> bytes:
    if isinstance(msg, SrwWithOffset):
        return bytes([TAG_SRW_WITH_OFFSET]) + struct.pack("<Q", msg.offset) + _bits_field(msg.bits)
    if isinstance(msg, SrwType0):
        return bytes([TAG_SRW_TYPE0]) + _bits_field(msg.bits)
    if isinstance(msg, SrwType1):
        return bytes([TAG_SRW_TYPE1]) + encode_varint(msg.skip) + _bits_field(msg.bits)
    if isinstance(msg, CrwMessage):
        return bytes([TAG_CRW]) + struct.pack("<Q", msg.offset) + _bits_field(msg.bits)
    raise TypeError(f"not a wire message: {msg!r}")


def decode_message(data: bytes) -> SrwMessage | CrwMessage:
    if not data:
        raise CodecError("empty message")
    tag = data[0]
    pos = 1
    if tag in (TAG_SRW_WITH_OFFSET, TAG_CRW):
        if len(data) < pos + 8:
            raise CodecError("truncated offset field")
        (offset,) = struct.unpack_from("<Q", data, pos)
        pos += 8
        count, pos = decode_varint(data, pos)
        bits, pos = unpack_bits(data, count, pos)
        return SrwWithOffset(offset, bits) if tag == TAG_SRW_WITH_OFFSET else CrwMessage(offset, bits)
    if tag == TAG_SRW_TYPE0:
        count, pos = decode_varint(data, pos)
        bits, pos = unpack_bits(data, count, pos)
        return SrwType0(bits)
    if tag == TAG_SRW_TYPE1:
        skip, pos = decode_varint(data, pos)
        count, pos = decode_varint(data, pos)
        bits, pos = unpack_bits(data, count, pos)
        return SrwType1(skip, bits)
    raise CodecError(f"unknown message tag {tag}")


def message_wire_bits(msg: SrwMessage | CrwMessage) -> int:
    """Total on-the-wire size of a message, in bits."""
    return 8 * len(encode_message(msg))


@dataclass(frozen=True, slots=True)
class ReliabilityHeader:
    """Loss-mode indicators: 8-bit sequence, ack, and encoding-baseline ids.

    Values are stored as full integers by the simulator and reduced
    modulo 256 on the wire; a 256-deep snapshot history makes the
    reduction unambiguous.
    """

    seq: int
    ack_seq: int
    baseline_seq: int

    def pack(self) -> bytes:
        return bytes([self.seq & 0xFF, self.ack_seq & 0xFF, self.baseline_seq & 0xFF])

    @classmethod
    def unpack(cls, data: bytes, pos: int = 0) -> tuple["ReliabilityHeader", int]:
        if pos + 3 > len(data):
            raise CodecError("truncated reliability header")
        return cls(data[pos], data[pos + 1], data[pos + 2]), pos + 3
