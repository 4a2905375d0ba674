"""MSB-first bit packing and order-0 Exp-Golomb codes."""
from __future__ import annotations

from .errors import DecodeError


class BitWriter:
    def __init__(self):
        self._bits: list[int] = []

    def write_bit(self, bit: int) -> None:
        self._bits.append(bit & 1)

    def write_bits(self, value: int, count: int) -> None:
        for shift in range(count - 1, -1, -1):
            self._bits.append((value >> shift) & 1)

    def write_ue(self, n: int) -> None:
        """Order-0 Exp-Golomb code of a non-negative integer."""
        if n < 0:
            raise ValueError("Exp-Golomb codes non-negative integers only")
        v = n + 1
        nbits = v.bit_length()
        self.write_bits(0, nbits - 1)
        self.write_bits(v, nbits)

    def write_egk(self, n: int, k: int) -> None:
        """Order-k Exp-Golomb: order-0 code of ``n >> k``, then the k low bits."""
        self.write_ue(n >> k)
        self.write_bits(n & ((1 << k) - 1), k)

    def __len__(self) -> int:
        return len(self._bits)

    def getvalue(self) -> bytes:
        """Bits packed MSB-first, zero-padded to a whole byte."""
        out = bytearray()
        bits = self._bits
        for i in range(0, len(bits), 8):
            chunk = bits[i:i + 8]
            byte = 0
            for b in chunk:
                byte = (byte << 1) | b
            out.append(byte << (8 - len(chunk)))
        return bytes(out)


class BitReader:
    def __init__(self, data: bytes, offset: int = 0):
        self._data = data
        self._pos = offset * 8

    def read_bit(self) -> int:
        byte = self._pos >> 3
        if byte >= len(self._data):
            raise DecodeError("bitstream exhausted")
        bit = (self._data[byte] >> (7 - (self._pos & 7))) & 1
        self._pos += 1
        return bit

    def read_bits(self, count: int) -> int:
        v = 0
        for _ in range(count):
            v = (v << 1) | self.read_bit()
        return v

    def read_ue(self) -> int:
        zeros = 0
        while self.read_bit() == 0:
            zeros += 1
            if zeros > 64:
                raise DecodeError("malformed Exp-Golomb prefix")
        return ((1 << zeros) | self.read_bits(zeros)) - 1

    def read_egk(self, k: int) -> int:
        return (self.read_ue() << k) | self.read_bits(k)

    @property
    def bit_position(self) -> int:
        return self._pos

    @property
    def byte_position(self) -> int:
        """Index of the first byte not (even partially) consumed."""
        return (self._pos + 7) >> 3


def ue_length(n: int) -> int:
    """Bit length of the order-0 Exp-Golomb code of *n*."""
    return 2 * (n + 1).bit_length() - 1


def egk_length(n: int, k: int) -> int:
    return ue_length(n >> k) + k
