"""Little-endian helpers for the flat binary artifact formats."""

import struct

import numpy as np

from .errors import DecodeError


class Reader:
    def __init__(self, data, name="<buffer>"):
        self.data = data
        self.pos = 0
        self.name = name

    def take(self, size):
        if self.pos + size > len(self.data):
            raise DecodeError(f"{self.name}: truncated at byte {self.pos}")
        chunk = self.data[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def magic(self, expected):
        got = self.take(len(expected))
        if got != expected:
            raise DecodeError(f"{self.name}: bad magic {got!r}, expected {expected!r}")

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]

    def u64(self):
        return struct.unpack("<Q", self.take(8))[0]

    def array(self, dtype, count):
        dt = np.dtype(dtype).newbyteorder("<")
        return np.frombuffer(self.take(dt.itemsize * count), dtype=dt).astype(dtype)

    def column_major(self, dtype, rows, cols):
        return self.array(dtype, rows * cols).reshape(cols, rows).T.copy()

    def at_end(self):
        return self.pos == len(self.data)


def u32(value):
    return struct.pack("<I", value)


def u64(value):
    return struct.pack("<Q", value)


def array_bytes(arr, dtype):
    return np.ascontiguousarray(arr, dtype=np.dtype(dtype).newbyteorder("<")).tobytes()


def column_major_bytes(arr, dtype):
    return array_bytes(np.asarray(arr).T, dtype)
