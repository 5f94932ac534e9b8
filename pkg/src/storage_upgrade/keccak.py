"""Keccak-256 as used by Ethereum (original Keccak padding, not NIST SHA3-256)."""

from Crypto.Hash import keccak as _keccak


def keccak256(data: bytes) -> bytes:
    return _keccak.new(data=data, digest_bits=256).digest()
