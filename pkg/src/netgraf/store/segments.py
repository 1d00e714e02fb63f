"""Sealed-chunk segment files.

File layout (little-endian):
    magic "NGSG" | u16 version
    per chunk:
        u32 key length | canonical SeriesKey UTF-8
        u32 point count
        point count x (i64 ts ms, f64 value)
        u32 crc32c over the chunk bytes (key length prefix through last point)
"""

from __future__ import annotations

import os
import struct
from pathlib import Path
from typing import Iterator

from .crc32c import crc32c
from .errors import CorruptSegment

MAGIC = b"NGSG"
VERSION = 1

_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_POINT = struct.Struct("<qd")


def encode_chunk(key_text: str, points: list[tuple[int, float]]) -> bytes:
    key_bytes = key_text.encode("utf-8")
    body = _U32.pack(len(key_bytes)) + key_bytes + _U32.pack(len(points))
    body += b"".join(_POINT.pack(ts, v) for ts, v in points)
    return body + _U32.pack(crc32c(body))


class SegmentWriter:
    """Appends sealed chunks to numbered segment files, rolling at a chunk cap."""

    def __init__(self, directory: Path, chunks_per_file: int = 64, fsync: bool = True):
        self.directory = directory
        self.chunks_per_file = chunks_per_file
        self._fsync = fsync
        directory.mkdir(parents=True, exist_ok=True)
        existing = sorted(directory.glob("*.seg"))
        self._next_file_no = (
            int(existing[-1].stem) + 1 if existing else 0
        )
        self._fh = None
        self._chunks_in_file = 0

    def _roll(self) -> None:
        if self._fh is not None:
            self._fh.close()
        path = self.directory / f"{self._next_file_no:05d}.seg"
        self._next_file_no += 1
        self._fh = open(path, "wb")
        self._fh.write(MAGIC + _U16.pack(VERSION))
        self._chunks_in_file = 0

    def write_chunk(self, key_text: str, points: list[tuple[int, float]]) -> None:
        if self._fh is None or self._chunks_in_file >= self.chunks_per_file:
            self._roll()
        self._fh.write(encode_chunk(key_text, points))
        self._fh.flush()
        if self._fsync:
            os.fsync(self._fh.fileno())
        self._chunks_in_file += 1

    def close(self) -> None:
        if self._fh is not None and not self._fh.closed:
            self._fh.flush()
            os.fsync(self._fh.fileno())
            self._fh.close()


def read_segment(path: Path) -> Iterator[tuple[str, list[tuple[int, float]]]]:
    """Yield (key, points) chunks; raise CorruptSegment at the first bad byte.

    Chunks yielded before the exception passed their checksum and are safe
    to keep.
    """
    data = path.read_bytes()
    if len(data) < 6 or data[:4] != MAGIC:
        raise CorruptSegment(str(path), 0, "bad magic")
    (version,) = _U16.unpack_from(data, 4)
    if version != VERSION:
        raise CorruptSegment(str(path), 4, f"unsupported version {version}")
    offset = 6
    while offset < len(data):
        start = offset
        if offset + 4 > len(data):
            raise CorruptSegment(str(path), start, "truncated key length")
        (key_len,) = _U32.unpack_from(data, offset)
        offset += 4
        if offset + key_len + 4 > len(data):
            raise CorruptSegment(str(path), start, "truncated chunk header")
        key = data[offset : offset + key_len]
        offset += key_len
        (count,) = _U32.unpack_from(data, offset)
        offset += 4
        points_end = offset + count * _POINT.size
        if points_end + 4 > len(data):
            raise CorruptSegment(str(path), start, "truncated points")
        body = data[start:points_end]
        (stored_crc,) = _U32.unpack_from(data, points_end)
        if crc32c(body) != stored_crc:
            raise CorruptSegment(str(path), start, "checksum mismatch")
        points = [
            _POINT.unpack_from(data, offset + i * _POINT.size)
            for i in range(count)
        ]
        try:
            key_text = key.decode("utf-8")
        except UnicodeDecodeError:
            raise CorruptSegment(str(path), start, "undecodable key")
        yield key_text, [(ts, v) for ts, v in points]
        offset = points_end + 4
