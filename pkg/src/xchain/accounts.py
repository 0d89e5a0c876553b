"""Ethereum-style account keys: secp256k1 recoverable ECDSA signatures
and keccak-derived 20-byte addresses.

The nonce k is derived deterministically by hashing (simulation grade,
not RFC 6979 and not constant time). V is 27/28 and is never folded
with a chain identifier; replay protection comes from the sidechain
identifiers carried in the transaction body instead.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

from .hashing import keccak256

_P = 2**256 - 2**32 - 977
_N = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141
_GX = 0x79BE667EF9DCBBAC55A06295CE870B07029BFCDB2DCE28D959F2815B16F81798
_GY = 0x483ADA7726A3C4655DA4FBFC0E1108A8FD17B448A68554199C47D08FFB10D4B8
_G = (_GX, _GY)


class SignatureError(ValueError):
    pass


def _add(p1, p2):
    if p1 is None:
        return p2
    if p2 is None:
        return p1
    x1, y1 = p1
    x2, y2 = p2
    if x1 == x2:
        if (y1 + y2) % _P == 0:
            return None
        lam = 3 * x1 * x1 * pow(2 * y1, -1, _P) % _P
    else:
        lam = (y2 - y1) * pow(x2 - x1, -1, _P) % _P
    x3 = (lam * lam - x1 - x2) % _P
    return (x3, (lam * (x1 - x3) - y1) % _P)


def _mul(point, k):
    result = None
    addend = point
    while k:
        if k & 1:
            result = _add(result, addend)
        addend = _add(addend, addend)
        k >>= 1
    return result


def public_key(private_key: int) -> Tuple[int, int]:
    if not 1 <= private_key < _N:
        raise SignatureError("private key out of range")
    return _mul(_G, private_key)


def address_of(private_key: int) -> bytes:
    x, y = public_key(private_key)
    return keccak256(x.to_bytes(32, "big") + y.to_bytes(32, "big"))[12:]


def sign_digest(digest: bytes, private_key: int) -> Tuple[int, int, int]:
    """Sign a 32-byte digest; returns (v, r, s) with v in {27, 28} and
    low-s normalization."""
    if len(digest) != 32:
        raise SignatureError("digest must be 32 bytes")
    z = int.from_bytes(digest, "big")
    counter = 0
    while True:
        k = int.from_bytes(
            keccak256(private_key.to_bytes(32, "big") + digest
                      + counter.to_bytes(4, "big")), "big") % _N
        counter += 1
        if k == 0:
            continue
        rx, ry = _mul(_G, k)
        r = rx % _N
        if r == 0 or rx >= _N:  # rx >= _N would need recovery id 2/3; retry
            continue
        s = (z + r * private_key) * pow(k, -1, _N) % _N
        if s == 0:
            continue
        recovery = ry & 1
        if s > _N // 2:
            s = _N - s
            recovery ^= 1
        return (27 + recovery, r, s)


@lru_cache(maxsize=16384)
def recover_digest(digest: bytes, v: int, r: int, s: int) -> bytes:
    """Recover the signing address from a signature over a digest.

    Pure function of its arguments, memoized because validators
    re-verify the same signed transactions many times per run."""
    if v not in (27, 28):
        raise SignatureError(f"invalid recovery id v={v}")
    if not (1 <= r < _N and 1 <= s < _N):
        raise SignatureError("r or s out of range")
    z = int.from_bytes(digest, "big")
    # rebuild R from its x coordinate and the parity encoded in v
    alpha = (r * r * r + 7) % _P
    y = pow(alpha, (_P + 1) // 4, _P)
    if y * y % _P != alpha:
        raise SignatureError("signature r is not an x coordinate on the curve")
    if y & 1 != v - 27:
        y = _P - y
    r_inv = pow(r, -1, _N)
    point = _add(_mul((r, y), s * r_inv % _N),
                 _mul(_G, (-z * r_inv) % _N))
    if point is None:
        raise SignatureError("signature recovers to the point at infinity")
    x, py = point
    return keccak256(x.to_bytes(32, "big") + py.to_bytes(32, "big"))[12:]


@dataclass(frozen=True)
class AccountKey:
    """Convenience wrapper pairing a private scalar with its address."""

    private_key: int

    @property
    def address(self) -> bytes:
        return address_of(self.private_key)

    @classmethod
    def from_label(cls, label: str) -> "AccountKey":
        """Deterministic key for scenario fixtures."""
        scalar = int.from_bytes(keccak256(b"account:" + label.encode()), "big") % _N
        return cls(private_key=scalar or 1)

    def sign(self, digest: bytes) -> Tuple[int, int, int]:
        return sign_digest(digest, self.private_key)
