"""Canonical RLP encoding and strict decoding.

Items are bytes, non-negative ints (encoded big-endian minimal, zero as
the empty string) or lists of items. Decoding is strict: non-minimal
length forms, leading zeros in length-of-length and trailing bytes are
all rejected.
"""


class RlpError(ValueError):
    pass


def encode(item) -> bytes:
    if isinstance(item, int):
        if item < 0:
            raise RlpError("cannot encode negative integer")
        item = int_to_bytes(item)
    if isinstance(item, (bytes, bytearray)):
        item = bytes(item)
        if len(item) == 1 and item[0] < 0x80:
            return item
        return _encode_length(len(item), 0x80) + item
    if isinstance(item, (list, tuple)):
        payload = b"".join(encode(sub) for sub in item)
        return _encode_length(len(payload), 0xC0) + payload
    raise RlpError(f"cannot encode {type(item).__name__}")


def decode(data: bytes):
    """Decode one item; trailing bytes are an error."""
    item, consumed = _decode_at(data, 0)
    if consumed != len(data):
        raise RlpError(f"{len(data) - consumed} trailing bytes after item")
    return item


def int_to_bytes(value: int) -> bytes:
    if value < 0:
        raise RlpError("negative integer")
    if value == 0:
        return b""
    return value.to_bytes((value.bit_length() + 7) // 8, "big")


def bytes_to_int(data: bytes) -> int:
    if len(data) > 0 and data[0] == 0:
        raise RlpError("integer with leading zero byte")
    return int.from_bytes(data, "big")


def _encode_length(length: int, offset: int) -> bytes:
    if length <= 55:
        return bytes([offset + length])
    length_bytes = int_to_bytes(length)
    return bytes([offset + 55 + len(length_bytes)]) + length_bytes


def _decode_at(data: bytes, pos: int):
    if pos >= len(data):
        raise RlpError("unexpected end of input")
    prefix = data[pos]
    if prefix < 0x80:
        return bytes([prefix]), pos + 1
    if prefix <= 0xB7:
        length = prefix - 0x80
        payload = _take(data, pos + 1, length)
        if length == 1 and payload[0] < 0x80:
            raise RlpError("non-minimal single byte encoding")
        return payload, pos + 1 + length
    if prefix <= 0xBF:
        length = _decode_long_length(data, pos, prefix - 0xB7)
        start = pos + 1 + (prefix - 0xB7)
        return _take(data, start, length), start + length
    if prefix <= 0xF7:
        length = prefix - 0xC0
        return _decode_list(data, pos + 1, length)
    length = _decode_long_length(data, pos, prefix - 0xF7)
    start = pos + 1 + (prefix - 0xF7)
    return _decode_list(data, start, length)


def _decode_long_length(data: bytes, pos: int, n_len_bytes: int) -> int:
    raw = _take(data, pos + 1, n_len_bytes)
    if raw[0] == 0:
        raise RlpError("length-of-length with leading zero")
    length = int.from_bytes(raw, "big")
    if length <= 55:
        raise RlpError("non-minimal long-form length")
    return length


def _decode_list(data: bytes, start: int, length: int):
    end = start + length
    if end > len(data):
        raise RlpError("list payload truncated")
    items = []
    pos = start
    while pos < end:
        item, pos = _decode_at(data, pos)
        if pos > end:
            raise RlpError("list item overruns list payload")
        items.append(item)
    return items, end


def _take(data: bytes, start: int, length: int) -> bytes:
    if start + length > len(data):
        raise RlpError("input truncated")
    return bytes(data[start:start + length])
