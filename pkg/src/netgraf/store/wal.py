"""Write-ahead log: length-prefixed, checksummed append records.

Record layout (little-endian):
    u32 payload length | payload | u32 crc32c(payload)
Payload:
    u32 key length | key UTF-8 | i64 ts ms | f64 value

A torn trailing record (short read or checksum mismatch) is discarded on
replay and the file truncated back to the last whole record.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path
from typing import Iterator

from .crc32c import crc32c

_LEN = struct.Struct("<I")
_POINT = struct.Struct("<qd")


def encode_record(key_text: str, ts: int, value: float) -> bytes:
    key_bytes = key_text.encode("utf-8")
    payload = _LEN.pack(len(key_bytes)) + key_bytes + _POINT.pack(ts, value)
    return _LEN.pack(len(payload)) + payload + _LEN.pack(crc32c(payload))


def decode_payload(payload: bytes) -> tuple[str, int, float]:
    (key_len,) = _LEN.unpack_from(payload, 0)
    key = payload[4 : 4 + key_len].decode("utf-8")
    ts, value = _POINT.unpack_from(payload, 4 + key_len)
    return key, ts, value


class WriteAheadLog:
    def __init__(self, path: Path, fsync: bool = False):
        self.path = path
        self._fsync = fsync
        self._fh = open(path, "ab")

    def append(self, key_text: str, ts: int, value: float) -> None:
        self._fh.write(encode_record(key_text, ts, value))
        self._fh.flush()
        if self._fsync:
            os.fsync(self._fh.fileno())

    def rewrite(self, records: list[tuple[str, int, float]]) -> None:
        """Replace the log contents (checkpoint after sealing to segments)."""
        self._fh.close()
        tmp = self.path.with_suffix(".tmp")
        with open(tmp, "wb") as fh:
            for key_text, ts, value in records:
                fh.write(encode_record(key_text, ts, value))
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, self.path)
        self._fh = open(self.path, "ab")

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.flush()
            os.fsync(self._fh.fileno())
            self._fh.close()


def replay(path: Path) -> Iterator[tuple[str, int, float]]:
    """Yield whole records; truncate the file at the first torn one."""
    if not path.exists():
        return
    good_end = 0
    with open(path, "rb") as fh:
        data = fh.read()
    offset = 0
    while offset + 4 <= len(data):
        (length,) = _LEN.unpack_from(data, offset)
        end = offset + 4 + length + 4
        if end > len(data):
            break
        payload = data[offset + 4 : offset + 4 + length]
        (stored_crc,) = _LEN.unpack_from(data, offset + 4 + length)
        if crc32c(payload) != stored_crc:
            break
        try:
            yield decode_payload(payload)
        except (struct.error, UnicodeDecodeError):
            break
        offset = end
        good_end = end
    if good_end < len(data):
        with open(path, "r+b") as fh:
            fh.truncate(good_end)
