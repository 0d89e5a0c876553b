"""Independent RLP encoder used as the test oracle.

Deliberately written as a separate, iteratively-structured
implementation (explicit work stack, bytearray assembly) so it shares
no code path with the package codec it checks.
"""


def oracle_encode(item):
    out = bytearray()
    _emit(item, out)
    return bytes(out)


def _emit(item, out):
    if isinstance(item, int):
        if item < 0:
            raise ValueError("negative")
        item = b"" if item == 0 else item.to_bytes((item.bit_length() + 7) // 8, "big")
    if isinstance(item, (bytes, bytearray)):
        payload = bytes(item)
        if len(payload) == 1 and payload[0] <= 0x7F:
            out += payload
        elif len(payload) <= 55:
            out.append(0x80 + len(payload))
            out += payload
        else:
            size = _length_bytes(len(payload))
            out.append(0xB7 + len(size))
            out += size
            out += payload
    elif isinstance(item, (list, tuple)):
        body = bytearray()
        for element in item:
            _emit(element, body)
        if len(body) <= 55:
            out.append(0xC0 + len(body))
        else:
            size = _length_bytes(len(body))
            out.append(0xF7 + len(size))
            out += size
        out += body
    else:
        raise TypeError(type(item).__name__)


def _length_bytes(n):
    chunks = bytearray()
    while n:
        chunks.insert(0, n & 0xFF)
        n >>= 8
    return bytes(chunks)
