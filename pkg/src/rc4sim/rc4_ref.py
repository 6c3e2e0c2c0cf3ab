"""Plain software RC4, used as the golden model for every hardware design."""

from __future__ import annotations

from typing import Iterator, NamedTuple

from rc4sim.errors import RejectedInput

MAX_KEY_LEN = 256


class KeystreamStep(NamedTuple):
    i: int
    j: int
    t: int
    z: int


def check_key(key: bytes | bytearray | str) -> bytes:
    """Return ``key`` as bytes after enforcing 1 <= len(key) <= 256."""
    if isinstance(key, str):
        key = key.encode("latin-1")
    key = bytes(key)
    if not 1 <= len(key) <= MAX_KEY_LEN:
        raise RejectedInput(f"key length must be in [1, {MAX_KEY_LEN}], got {len(key)}")
    return key


def ksa_reference(key) -> bytearray:
    key = check_key(key)
    klen = len(key)
    s = bytearray(range(256))
    j = 0
    for i in range(256):
        j = (j + s[i] + key[i % klen]) & 0xFF
        s[i], s[j] = s[j], s[i]
    return s


def prga_steps(sbox: bytearray, n: int) -> Iterator[KeystreamStep]:
    """Yield ``n`` PRGA iterations, mutating ``sbox`` in place."""
    i = j = 0
    for _ in range(n):
        i = (i + 1) & 0xFF
        j = (j + sbox[i]) & 0xFF
        sbox[i], sbox[j] = sbox[j], sbox[i]
        t = (sbox[i] + sbox[j]) & 0xFF
        yield KeystreamStep(i, j, t, sbox[t])


def prga_reference(sbox: bytearray, n: int) -> bytes:
    if n < 0:
        raise RejectedInput("byte count must be non-negative")
    s = sbox
    out = bytearray(n)
    i = j = 0
    for k in range(n):
        i = (i + 1) & 0xFF
        si = s[i]
        j = (j + si) & 0xFF
        sj = s[j]
        s[i] = sj
        s[j] = si
        out[k] = s[(si + sj) & 0xFF]
    return bytes(out)


def keystream(key, n: int) -> bytes:
    return prga_reference(ksa_reference(key), n)


def xor_cipher(data: bytes, stream: bytes) -> bytes:
    if len(data) != len(stream):
        raise RejectedInput(f"length mismatch: {len(data)} data bytes vs {len(stream)} keystream bytes")
    if not data:
        return b""
    x = int.from_bytes(data, "little") ^ int.from_bytes(stream, "little")
    return x.to_bytes(len(data), "little")
