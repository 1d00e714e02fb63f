"""CRC32C (Castagnoli), the checksum used by the WAL and segment formats.

Table-driven, reflected polynomial 0x82F63B78. crc32c(b"123456789")
== 0xE3069283 (the standard check value).
"""

_TABLE: list[int] = []
for i in range(256):
    crc = i
    for _ in range(8):
        crc = (crc >> 1) ^ 0x82F63B78 if crc & 1 else crc >> 1
    _TABLE.append(crc)


def crc32c(data: bytes, crc: int = 0) -> int:
    crc ^= 0xFFFFFFFF
    for byte in data:
        crc = _TABLE[(crc ^ byte) & 0xFF] ^ (crc >> 8)
    return crc ^ 0xFFFFFFFF
