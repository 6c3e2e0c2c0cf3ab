"""Combinational math for fusing two RC4 iterations into one clock.

Two consecutive iterations touch four S-box cells addressed by i1, i2, j1
and j2 (with i2 = i1 + 1).  Three equality tests (i2 == j1, j2 == i1,
j2 == j1) decide how the two swaps collapse into one register-to-register
movement and which pre-swap cells feed the second output byte.  Both
decisions are encoded as lookup tables below so the scalar datapath and the
vectorized exhaustive checker read the same data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from rc4sim.errors import InvariantViolation, RejectedInput

# operand roles, in the order the swap controller receives them
I1, I2, J1, J2 = 0, 1, 2, 3
ROLE_NAMES = ("i1", "i2", "j1", "j2")

# case -> (source role, destination role) moves, applied to pre-swap values
SWAP_MOVES: dict[int, tuple[tuple[int, int], ...]] = {
    1: ((I1, J1), (J1, I1), (I2, J2), (J2, I2)),
    2: ((I1, I2), (I2, J1), (J1, I1)),
    3: ((I1, J1), (I2, I1), (J1, I2)),
    4: ((I1, I2), (I2, I1)),
    5: ((I1, J2), (J2, J1), (J1, I1)),
    6: ((I1, J1), (J1, I1)),
    7: (),
}

# case -> (role whose pre-swap value equals S1[i2], role whose value equals S1[j2])
Z2_SOURCES: dict[int, tuple[int, int]] = {
    1: (I2, J2),
    2: (I2, I1),
    3: (I2, J1),
    4: (I2, J1),
    5: (I1, J2),
    6: (I1, I1),
    7: (I1, J1),
}

IMPOSSIBLE_CASE = 8


class UnrolledIndices(NamedTuple):
    i1: int
    i2: int
    j1: int
    j2: int

    @classmethod
    def from_i1(cls, i1: int, j1: int, j2: int) -> "UnrolledIndices":
        return cls(i1 & 0xFF, (i1 + 1) & 0xFF, j1 & 0xFF, j2 & 0xFF)

    def check(self) -> "UnrolledIndices":
        for name, v in zip(ROLE_NAMES, self):
            if not 0 <= v <= 0xFF:
                raise RejectedInput(f"{name}={v} is not an octet")
        if self.i2 != (self.i1 + 1) & 0xFF:
            raise RejectedInput(f"i2 must equal i1+1 mod 256, got i1={self.i1} i2={self.i2}")
        return self


class UnrolledStep(NamedTuple):
    indices: UnrolledIndices
    swap_case: int
    z1: int
    z2: int


def case_from_predicates(i2_eq_j1, j2_eq_i1, j2_eq_j1):
    """Map the three comparator outputs to a case number 1..8.

    Works elementwise on numpy boolean arrays as well as on plain bools.
    """
    return 1 + 4 * i2_eq_j1 + 2 * j2_eq_i1 + j2_eq_j1


def swap_case(i1: int, i2: int, j1: int, j2: int) -> int:
    case = 1 + 4 * (i2 == j1) + 2 * (j2 == i1) + (j2 == j1)
    if case == IMPOSSIBLE_CASE:
        raise InvariantViolation(f"swap case 8 reached with i1={i1} i2={i2} j1={j1} j2={j2}")
    return case


def classify_swap(idx: UnrolledIndices) -> int:
    idx.check()
    return swap_case(*idx)


def double_swap_writes(case: int, addrs, values) -> list[tuple[int, int]]:
    """Register writes ``(address, value)`` realising both swaps at once.

    ``addrs`` and ``values`` are indexed by role (i1, i2, j1, j2); values are
    the cells read before either swap.
    """
    return [(addrs[dst], values[src]) for src, dst in SWAP_MOVES[case]]


def apply_double_swap(sbox: bytearray, idx: UnrolledIndices) -> bytearray:
    """Apply both swaps of an unrolled step to ``sbox`` in place and return it."""
    case = classify_swap(idx)
    values = [sbox[a] for a in idx]
    for addr, val in double_swap_writes(case, idx, values):
        sbox[addr] = val
    return sbox


def compute_j2_ksa(j0: int, s0_i1: int, s0_i2: int, k_i1: int, k_i2: int, i2_eq_j1: bool) -> int:
    # when i2 == j1 the first swap has moved S0[i1] into cell i2
    third = s0_i1 if i2_eq_j1 else s0_i2
    return (j0 + s0_i1 + third + k_i1 + k_i2) & 0xFF


def compute_j2_prga(j0: int, s0_i1: int, s0_i2: int, i2_eq_j1: bool) -> int:
    return compute_j2_ksa(j0, s0_i1, s0_i2, 0, 0, i2_eq_j1)


def s1_cell(sbox_s0, idx: UnrolledIndices, addr: int) -> int:
    """Value of cell ``addr`` after only the first swap, read from S0."""
    if addr == idx.i1:
        return sbox_s0[idx.j1]
    if addr == idx.j1:
        return sbox_s0[idx.i1]
    return sbox_s0[addr]


def compute_z1(sbox_s0, idx: UnrolledIndices) -> int:
    t1 = (sbox_s0[idx.i1] + sbox_s0[idx.j1]) & 0xFF
    return s1_cell(sbox_s0, idx, t1)


def z2_index(case: int, values) -> int:
    """Address of the second output byte, from the four pre-swap values."""
    src_i2, src_j2 = Z2_SOURCES[case]
    return (values[src_i2] + values[src_j2]) & 0xFF


def compute_z2(sbox_s0, sbox_s2, idx: UnrolledIndices) -> int:
    case = classify_swap(idx)
    values = [sbox_s0[a] for a in idx]
    return sbox_s2[z2_index(case, values)]


def unrolled_step(sbox: bytearray, idx: UnrolledIndices) -> UnrolledStep:
    """Run one fused PRGA step on ``sbox`` (in place) for already-computed indices."""
    case = classify_swap(idx)
    values = [sbox[a] for a in idx]
    z1 = compute_z1(sbox, idx)
    for addr, val in double_swap_writes(case, idx, values):
        sbox[addr] = val
    z2 = sbox[z2_index(case, values)]
    return UnrolledStep(idx, case, z1, z2)


# -- exhaustive verification ------------------------------------------------

#: case histogram over all (i1, j1, j2), derived by counting equality patterns
EXPECTED_CASE_COUNTS = {
    1: 256 * (255 + 254 * 254),
    2: 256 * 254,
    3: 256 * 254,
    4: 256,
    5: 256 * 254,
    6: 256,
    7: 256,
    8: 0,
}


@dataclass
class TableCheckReport:
    total: int = 0
    case_counts: dict[int, int] = field(default_factory=lambda: {c: 0 for c in range(1, 9)})
    swap_mismatches: int = 0
    z1_mismatches: int = 0
    z2_mismatches: int = 0
    case7_moved: int = 0
    first_counterexample: dict | None = None

    @property
    def ok(self) -> bool:
        return (
            self.swap_mismatches == 0
            and self.z1_mismatches == 0
            and self.z2_mismatches == 0
            and self.case7_moved == 0
            and self.case_counts[IMPOSSIBLE_CASE] == 0
        )


def verify_tables(
    seed: int = 0,
    i1_values=range(256),
    box_pool: int = 256,
    progress: Callable[[int], None] | None = None,
) -> TableCheckReport:
    """Exhaustively compare the case tables against two sequential swaps.

    For every i1 in ``i1_values`` all 65536 (j1, j2) pairs are checked, each
    on a random S-box drawn from a pool that is reshuffled per i1.  The
    sequential oracle performs the swaps literally; the table path only uses
    the four pre-swap values and ``SWAP_MOVES`` / ``Z2_SOURCES``.
    """
    rng = np.random.default_rng(seed)
    rep = TableCheckReport()
    j1 = np.repeat(np.arange(256, dtype=np.intp), 256)
    j2 = np.tile(np.arange(256, dtype=np.intp), 256)
    rows = np.arange(j1.size)
    base = np.tile(np.arange(256, dtype=np.uint8), (box_pool, 1))

    for i1 in i1_values:
        i2 = (i1 + 1) & 0xFF
        pool = rng.permuted(base, axis=1)
        s0 = pool[rows % box_pool]
        addr = (np.full_like(j1, i1), np.full_like(j1, i2), j1, j2)
        vals = [s0[rows, a].astype(np.intp) for a in addr]

        cases = case_from_predicates(addr[I2] == j1, j2 == i1, j2 == j1)
        for c in range(1, 9):
            rep.case_counts[c] += int(np.count_nonzero(cases == c))
        rep.total += j1.size

        # oracle: two literal swaps
        seq = s0.copy()
        a, b = seq[rows, i1].copy(), seq[rows, j1].copy()
        seq[rows, i1] = b
        seq[rows, j1] = a
        z1_ref = seq[rows, (seq[rows, i1].astype(np.intp) + seq[rows, j1]) & 0xFF]
        a, b = seq[rows, i2].copy(), seq[rows, j2].copy()
        seq[rows, i2] = b
        seq[rows, j2] = a
        z2_ref = seq[rows, (seq[rows, i2].astype(np.intp) + seq[rows, j2]) & 0xFF]

        # table path
        res = s0.copy()
        z2_idx = np.zeros_like(j1)
        for c, moves in SWAP_MOVES.items():
            sel = rows[cases == c]
            if sel.size == 0:
                continue
            for src, dst in moves:
                res[sel, addr[dst][sel]] = vals[src][sel]
            si2, sj2 = Z2_SOURCES[c]
            z2_idx[sel] = (vals[si2][sel] + vals[sj2][sel]) & 0xFF
        z2_tab = res[rows, z2_idx]
        t1 = (vals[I1] + vals[J1]) & 0xFF
        z1_tab = np.where(t1 == i1, vals[J1], np.where(t1 == j1, vals[I1], s0[rows, t1]))

        bad_swap = np.any(res != seq, axis=1)
        bad_z1 = z1_tab != z1_ref
        bad_z2 = z2_tab != z2_ref
        rep.swap_mismatches += int(np.count_nonzero(bad_swap))
        rep.z1_mismatches += int(np.count_nonzero(bad_z1))
        rep.z2_mismatches += int(np.count_nonzero(bad_z2))
        c7 = cases == 7
        rep.case7_moved += int(np.count_nonzero(np.any(res[c7] != s0[c7], axis=1)))

        if rep.first_counterexample is None:
            bad = bad_swap | bad_z1 | bad_z2 | (cases == IMPOSSIBLE_CASE)
            if bad.any():
                r = int(np.argmax(bad))
                rep.first_counterexample = {
                    "i1": i1, "i2": i2, "j1": int(j1[r]), "j2": int(j2[r]), "case": int(cases[r]),
                }
        if progress is not None:
            progress(i1)
    return rep
