import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from desk_rc4 import desk_ksa, desk_rc4
from rc4sim.errors import RejectedInput
from rc4sim.rc4_ref import (
    check_key,
    keystream,
    ksa_reference,
    prga_reference,
    prga_steps,
    xor_cipher,
)
from vectors import ASCII, RESCORLA, RFC6229

keys = st.binary(min_size=1, max_size=256)


@pytest.mark.parametrize("key_hex,offset,expected", RFC6229)
def test_rfc6229_offsets(key_hex, offset, expected):
    ks = keystream(bytes.fromhex(key_hex), offset + 16)
    assert ks[offset:].hex() == expected


@pytest.mark.parametrize("key_hex,plain_hex,cipher_hex", RESCORLA)
def test_cypherpunks_vectors(key_hex, plain_hex, cipher_hex):
    plain = bytes.fromhex(plain_hex)
    ct = xor_cipher(plain, keystream(bytes.fromhex(key_hex), len(plain)))
    assert ct.hex() == cipher_hex


@pytest.mark.parametrize("key,plain,cipher_hex", ASCII)
def test_ascii_vectors(key, plain, cipher_hex):
    assert xor_cipher(plain, keystream(key, len(plain))).hex() == cipher_hex


def test_desk_oracle_agrees_with_published_vector():
    # the desk oracle must itself be right before it checks anything else
    assert desk_rc4(b"Key", 9).hex() == "eb9f7781b734ca72a7"


def test_single_zero_byte_key_sbox():
    s = ksa_reference(b"\x00")
    # frozen from the desk oracle
    assert s[0] == 0
    assert list(s[:8]) == [0, 35, 3, 43, 9, 11, 65, 229]
    assert list(s) == desk_ksa(b"\x00")


def test_identity_sbox_first_two_outputs():
    s = bytearray(range(256))
    assert prga_reference(s, 2) == bytes([2, 5])


def test_identity_sbox_steps():
    steps = list(prga_steps(bytearray(range(256)), 2))
    assert steps[0] == (1, 1, 2, 2)
    assert steps[1] == (2, 3, 5, 5)


def test_zero_length_leaves_sbox_alone():
    s = ksa_reference(b"abc")
    before = bytes(s)
    assert prga_reference(s, 0) == b""
    assert bytes(s) == before


@pytest.mark.parametrize("bad", [b"", bytes(257)])
def test_key_length_rejected(bad):
    with pytest.raises(RejectedInput):
        ksa_reference(bad)


def test_key_of_256_uses_plain_indexing():
    key = bytes(range(256))
    s = bytearray(range(256))
    j = 0
    for i in range(256):
        j = (j + s[i] + key[i]) % 256
        s[i], s[j] = s[j], s[i]
    assert ksa_reference(key) == s


def test_check_key_accepts_text():
    assert check_key("Key") == b"Key"


def test_xor_length_mismatch():
    with pytest.raises(RejectedInput):
        xor_cipher(b"abc", b"ab")


def test_xor_zero_plaintext_is_keystream():
    ks = keystream(b"Secret", 64)
    assert xor_cipher(bytes(64), ks) == ks


@given(st.binary(max_size=512), st.data())
def test_xor_is_involution(data, draw):
    ks = draw.draw(st.binary(min_size=len(data), max_size=len(data)))
    assert xor_cipher(xor_cipher(data, ks), ks) == data


@settings(max_examples=60)
@given(keys, st.integers(0, 600))
def test_matches_desk_oracle(key, n):
    assert keystream(key, n) == desk_rc4(key, n)


@settings(max_examples=40)
@given(keys, st.integers(0, 300))
def test_sbox_stays_a_permutation(key, n):
    s = ksa_reference(key)
    assert sorted(s) == list(range(256))
    for _ in prga_steps(s, n):
        assert sorted(s) == list(range(256))


@given(keys)
def test_deterministic(key):
    assert keystream(key, 50) == keystream(key, 50)
