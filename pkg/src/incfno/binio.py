"""Little-endian binary readers/writers shared by the on-disk formats."""

from __future__ import annotations

import struct

import numpy as np


class FormatError(ValueError):
    """Malformed binary file; the message names the failing byte offset."""


class Writer:
    def __init__(self):
        self.chunks = []

    def u8(self, v):
        self.chunks.append(struct.pack("<B", v))

    def u32(self, v):
        self.chunks.append(struct.pack("<I", v))

    def u64(self, v):
        self.chunks.append(struct.pack("<Q", v))

    def raw(self, data):
        self.chunks.append(bytes(data))

    def text(self, s):
        data = s.encode("utf-8")
        self.u32(len(data))
        self.raw(data)

    def array_f64(self, arr):
        self.raw(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    def getvalue(self):
        return b"".join(self.chunks)


class Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def _take(self, n, what):
        if self.pos + n > len(self.data):
            raise FormatError(
                f"truncated file: needed {n} bytes for {what} at offset {self.pos}, "
                f"have {len(self.data) - self.pos}"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self, what="u8"):
        return struct.unpack("<B", self._take(1, what))[0]

    def u32(self, what="u32"):
        return struct.unpack("<I", self._take(4, what))[0]

    def u64(self, what="u64"):
        return struct.unpack("<Q", self._take(8, what))[0]

    def raw(self, n, what="bytes"):
        return self._take(n, what)

    def text(self, what="text"):
        n = self.u32(f"{what} length")
        return self._take(n, what).decode("utf-8")

    def array_f64(self, count, shape, what="array"):
        buf = self._take(8 * count, what)
        return np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(shape)

    def expect_magic(self, magic):
        got = self._take(len(magic), "magic")
        if got != magic:
            raise FormatError(f"bad magic at offset 0: expected {magic!r}, got {got!r}")

    def done(self):
        if self.pos != len(self.data):
            raise FormatError(f"{len(self.data) - self.pos} trailing bytes at offset {self.pos}")
