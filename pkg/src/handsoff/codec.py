"""Bit-exact packets for ternary switching signals (``.hoc`` files).

Layout (all multi-byte header fields fixed width)::

    header   'H' 'O' | version=1 | m | b | T (float64, little-endian)   13 bytes
    channel  init_code:2 | switch_count:16 (big-endian) |
             per switch: time_index:b [| sign:1 if the previous value is 0]
             zero-padded to a byte boundary, repeated m times

Bits are packed MSB-first. ``init_code`` is 00 -> 0, 01 -> +1, 10 -> -1
(11 reserved). A switch away from 0 carries a sign bit (0 -> +1, 1 -> -1);
a switch away from +-1 always lands on 0, so it carries none. Time index
``i`` decodes to ``T * (i + 1) / (2**b + 1)``, which lies strictly inside
``(0, T)``.
"""

import math
import struct

from .errors import (
    CapacityError,
    PacketCorruptionError,
    PacketFormatError,
    PacketLengthError,
    ReservedCodeError,
    StructureViolationError,
)
from .structure import ChannelSignal, SwitchingSignal

__all__ = [
    "MAGIC",
    "VERSION",
    "HEADER_BYTES",
    "encode",
    "decode",
    "bit_count",
    "quantize",
    "time_index",
    "index_time",
]

MAGIC = b"HO"
VERSION = 1
HEADER_BYTES = 13
_HEADER = struct.Struct("<2sBBBd")
MAX_SWITCHES = 0xFFFF
CHANNEL_OVERHEAD_BITS = 18

_INIT_CODE = {0: 0b00, 1: 0b01, -1: 0b10}
_INIT_VALUE = {0b00: 0, 0b01: 1, 0b10: -1}


class BitWriter:
    def __init__(self):
        self._buf = bytearray()
        self._acc = 0
        self._nbits = 0

    def write(self, value, width):
        for shift in range(width - 1, -1, -1):
            self._acc = (self._acc << 1) | ((value >> shift) & 1)
            self._nbits += 1
            if self._nbits == 8:
                self._buf.append(self._acc)
                self._acc = 0
                self._nbits = 0

    def flush(self):
        """Zero-pad to a byte boundary and return the bytes written so far."""
        if self._nbits:
            self._buf.append(self._acc << (8 - self._nbits))
            self._acc = 0
            self._nbits = 0
        return bytes(self._buf)


class BitReader:
    def __init__(self, data, offset=0):
        self._data = data
        self._pos = offset * 8

    @property
    def byte_pos(self):
        return (self._pos + 7) // 8

    def read(self, width):
        end = self._pos + width
        if end > len(self._data) * 8:
            raise PacketLengthError(
                f"packet truncated: need bit {end}, have {len(self._data) * 8}")
        value = 0
        for p in range(self._pos, end):
            value = (value << 1) | ((self._data[p >> 3] >> (7 - (p & 7))) & 1)
        self._pos = end
        return value

    def align(self):
        self._pos = self.byte_pos * 8


def _check_bits(b):
    if not isinstance(b, int) or not 1 <= b <= 32:
        raise CapacityError(f"bits per switch time must be an integer in [1, 32], got {b!r}")


def time_index(t, T, b):
    """Nearest grid index of ``t`` on the grid ``T (i + 1) / (2**b + 1)``."""
    i = round(t * (2 ** b + 1) / T) - 1
    return min(max(i, 0), 2 ** b - 1)


def index_time(i, T, b):
    return T * (i + 1) / (2 ** b + 1)


def _quantize_channel(ch, T, b):
    """Quantized ``(index, value)`` switches of one channel.

    Switches are placed in order. One that lands on the cell of the previous
    switch replaces it; if the pair then cancels it disappears, and if the
    replacement would jump between +1 and -1 the cell holds 0 and the new
    level moves to the next cell (dropped when the grid has no next cell).
    """
    top = 2 ** b - 1
    out = []
    prev_val = ch.init
    for t, v in ch.switches:
        if prev_val * v == -1:
            raise StructureViolationError(
                f"direct switch {prev_val:+d} -> {v:+d} at t={t}; the packet format "
                "requires every transition to pass through 0")
        prev_val = v
        i = time_index(t, T, b)
        if out and i <= out[-1][0]:
            i = out.pop()[0]
        before = out[-1][1] if out else ch.init
        if v == before:
            continue
        if before * v == -1:
            out.append((i, 0))
            if i < top:
                out.append((i + 1, v))
            continue
        out.append((i, v))
    return out


def quantize(signal, b):
    """The signal that ``decode(encode(signal, b))`` returns."""
    _check_bits(b)
    chans = []
    for ch in signal.channels:
        q = _quantize_channel(ch, signal.T, b)
        chans.append(ChannelSignal(ch.init, tuple((index_time(i, signal.T, b), v) for i, v in q)))
    return SwitchingSignal(T=signal.T, channels=tuple(chans))


def encode(signal, b):
    """Serialize ``signal`` with ``b``-bit switch times.

    Raises
    ------
    StructureViolationError
        If any channel switches directly between +1 and -1.
    CapacityError
        If ``b`` is outside [1, 32] or a channel has more than 65535 switches.
    """
    _check_bits(b)
    if signal.m > 255:
        raise CapacityError("at most 255 channels fit in the header")
    out = bytearray(_HEADER.pack(MAGIC, VERSION, signal.m, b, signal.T))
    for ch in signal.channels:
        q = _quantize_channel(ch, signal.T, b)
        if len(q) > MAX_SWITCHES:
            raise CapacityError(f"{len(q)} switches exceed the 16-bit switch count")
        w = BitWriter()
        w.write(_INIT_CODE[ch.init], 2)
        w.write(len(q), 16)
        prev = ch.init
        for i, v in q:
            w.write(i, b)
            if prev == 0:
                w.write(0 if v == 1 else 1, 1)
            prev = v
        out += w.flush()
    return bytes(out)


def _parse(packet):
    """Decode a packet; returns (signal, payload_bits_before_padding)."""
    if not isinstance(packet, (bytes, bytearray, memoryview)):
        raise PacketFormatError("packet must be a bytes-like object")
    packet = bytes(packet)
    if len(packet) < HEADER_BYTES:
        raise PacketLengthError(f"packet shorter than the {HEADER_BYTES}-byte header")
    magic, version, m, b, T = _HEADER.unpack_from(packet)
    if magic != MAGIC:
        raise PacketFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise PacketFormatError(f"unsupported version {version}")
    if m < 1:
        raise PacketFormatError("packet declares zero channels")
    if not 1 <= b <= 32:
        raise PacketFormatError(f"bits per switch time out of range: {b}")
    if not (math.isfinite(T) and T > 0):
        raise PacketFormatError(f"horizon must be positive and finite, got {T}")
    reader = BitReader(packet, HEADER_BYTES)
    chans = []
    payload_bits = 0
    for c in range(m):
        code = reader.read(2)
        if code not in _INIT_VALUE:
            raise ReservedCodeError(f"channel {c}: reserved init code 0b11")
        init = _INIT_VALUE[code]
        count = reader.read(16)
        payload_bits += CHANNEL_OVERHEAD_BITS
        prev_val, prev_idx = init, -1
        switches = []
        for _ in range(count):
            i = reader.read(b)
            payload_bits += b
            if i <= prev_idx:
                raise PacketCorruptionError(
                    f"channel {c}: time indices not strictly increasing ({prev_idx} then {i})")
            if prev_val == 0:
                v = -1 if reader.read(1) else 1
                payload_bits += 1
            else:
                v = 0
            switches.append((index_time(i, T, b), v))
            prev_val, prev_idx = v, i
        reader.align()
        chans.append(ChannelSignal(init, tuple(switches)))
    if reader.byte_pos != len(packet):
        raise PacketLengthError(
            f"{len(packet) - reader.byte_pos} trailing bytes after the last channel")
    try:
        signal = SwitchingSignal(T=T, channels=tuple(chans))
    except ValueError as exc:
        raise PacketCorruptionError(f"decoded signal is invalid: {exc}") from exc
    return signal, payload_bits


def decode(packet):
    """Inverse of :func:`encode`.

    Raises
    ------
    PacketFormatError, ReservedCodeError, PacketLengthError, PacketCorruptionError
        All subclasses of :class:`~handsoff.errors.CodecError`.
    """
    return _parse(packet)[0]


def bit_count(packet):
    """``(header_bits, payload_bits)`` of a packet; payload counted before padding."""
    _, payload = _parse(packet)
    return HEADER_BYTES * 8, payload
