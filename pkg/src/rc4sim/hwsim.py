"""Half-cycle simulator for the single-engine designs (1-4).

Every clock is split into a rising and a falling half.  The storage block
latches S-box reads into its D flip-flops on the falling edge and commits
the swap on the following rising edge, so a full swap costs one clock.
Keystream octets leave the engine on rising edges only.

Clock layout (per engine, counted in full clocks):

* KSA: one init clock (identity S-box, latch of the first step) and then
  one commit per clock: 1 + 256 for the 1-byte designs, 1 + 128 for the
  2-byte designs.
* PRGA: a reset clock, a clock that primes the pipeline, then one commit
  (1 or 2 octets) per clock, i.e. 2 + n or 2 + n/2.

Trace lines have the form ``<clock>.<R|F> <action>`` where ``clock`` is the
zero-based full-clock index from the start of the run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from fractions import Fraction
from typing import Callable

from rc4sim.errors import InvariantViolation, PreconditionError, RejectedInput, UnsupportedDesign
from rc4sim.rc4_ref import check_key
from rc4sim.unroll import SWAP_MOVES, Z2_SOURCES, swap_case


class Design(IntEnum):
    D1 = 1
    D2 = 2
    D3 = 3
    D4 = 4
    D5 = 5
    D6 = 6

    @classmethod
    def parse(cls, value) -> "Design":
        if isinstance(value, Design):
            return value
        text = str(value).strip().upper().lstrip("D")
        try:
            return cls(int(text))
        except ValueError:
            raise RejectedInput(f"unknown design {value!r}; expected 1..6") from None

    @property
    def bytes_per_clock(self) -> int:
        return {1: 1, 2: 1, 3: 2, 4: 2, 5: 4, 6: 4}[self.value]

    @property
    def unrolled(self) -> bool:
        return self in (Design.D3, Design.D4, Design.D6)

    @property
    def dynamic(self) -> bool:
        return self in (Design.D2, Design.D4, Design.D5, Design.D6)

    @property
    def parallel(self) -> bool:
        return self in (Design.D5, Design.D6)


class Phase(Enum):
    KSA_INIT = "ksa_init"
    KSA = "ksa"
    PRGA_INIT = "prga_init"
    PRGA = "prga"
    DONE = "done"


KSA_PHASES = (Phase.KSA_INIT, Phase.KSA)


@dataclass
class CycleReport:
    ksa_clocks: int
    prga_clocks: int
    bytes: int
    stalls: int = 0

    @property
    def total_clocks(self) -> int:
        return self.ksa_clocks + self.prga_clocks

    @property
    def per_byte(self) -> Fraction | None:
        if self.bytes == 0:
            return None
        return Fraction(self.total_clocks, self.bytes)


def cycles_formula(design, n: int) -> CycleReport:
    """Closed-form clock counts: 257 + (2 + n) or 129 + (2 + n/2).

    Odd ``n`` on a 2-byte engine rounds the PRGA term up because the last
    clock still fires a full pair.  Designs 5 and 6 reuse their lane's KSA
    count with n/4 PRGA clocks.
    """
    design = Design.parse(design)
    if n < 1:
        raise RejectedInput("closed form needs n >= 1")
    ksa = 129 if design.unrolled else 257
    prga = 2 + math.ceil(n / design.bytes_per_clock)
    return CycleReport(ksa, prga, n)


PER_BYTE_FORMULA = {
    Design.D1: "1 + 259/n",
    Design.D2: "1 + 259/n",
    Design.D3: "1/2 + 131/n",
    Design.D4: "1/2 + 131/n",
    Design.D5: "1/4 + 259/n",
    Design.D6: "1/4 + 131/n",
}


@dataclass
class EngineState:
    sbox: bytearray = field(default_factory=lambda: bytearray(256))
    i: int = 0
    j: int = 0
    prga_en: bool = False
    phase: Phase = Phase.KSA_INIT
    clock: int = 0  # half cycles
    ksa_iterations: int = 0
    # operands held in the D flip-flops between a falling and a rising edge
    pending: tuple | None = None

    # pending is (i, j, S[i], S[j]) for 1-byte engines and
    # (i1, i2, j1, j2, case, S[i1], S[i2], S[j1], S[j2]) for 2-byte engines
    @property
    def latch_si(self) -> int | None:
        if self.pending is None:
            return None
        return self.pending[2] if len(self.pending) == 4 else self.pending[5]

    @property
    def latch_sj(self) -> int | None:
        if self.pending is None:
            return None
        return self.pending[3] if len(self.pending) == 4 else self.pending[7]

    @property
    def rising(self) -> bool:
        return self.clock % 2 == 0


def ksa_iterations_needed(design: Design) -> int:
    return 128 if design.unrolled else 256


def dynamic_mode_switch(state: EngineState, design) -> EngineState:
    """Re-purpose the KSA datapath as the PRGA datapath (designs 2 and 4).

    Resets the shared counter and j, latches ``prga_en`` high (which gates
    the key addend to zero) and drops any latched operands so no swap
    happens on this clock.
    """
    design = Design.parse(design)
    if design not in (Design.D2, Design.D4):
        raise UnsupportedDesign(f"design {design.value} has no dynamic KSA/PRGA switch")
    if state.prga_en:
        raise PreconditionError("prga_en is already high")
    need = ksa_iterations_needed(design)
    if state.ksa_iterations != need:
        raise PreconditionError(
            f"KSA incomplete: {state.ksa_iterations} of {need} iterations done"
        )
    state.i = 0
    state.j = 0
    state.prga_en = True
    state.pending = None
    state.phase = Phase.PRGA_INIT
    return state


class Engine:
    """One RC4 engine of design 1, 2, 3 or 4, stepped one half clock at a time."""

    def __init__(self, design, key, trace: Callable[[str], None] | None = None,
                 check_invariants: bool = False):
        design = Design.parse(design)
        if design.parallel:
            raise UnsupportedDesign(
                f"design {design.value} is lane-parallel; use rc4sim.parallel.simulate_parallel"
            )
        self.design = design
        self.key = check_key(key)
        self.state = EngineState()
        self.ksa_clocks = 0
        self.prga_clocks = 0
        self._trace = trace
        self._check = check_invariants
        self._buffer = bytearray()
        self._klen = len(self.key)
        self._need = ksa_iterations_needed(design)
        quiet = trace is None and not check_invariants
        if design.unrolled and quiet:
            self._latch, self._commit = self._latch_pair_quiet, self._commit_pair_quiet
        elif design.unrolled:
            self._latch, self._commit = self._latch_pair, self._commit_pair
        elif quiet:
            self._latch, self._commit = self._latch_single_quiet, self._commit_single_quiet
        else:
            self._latch, self._commit = self._latch_single, self._commit_single

    # -- public surface ------------------------------------------------------

    @property
    def bytes_per_clock(self) -> int:
        return self.design.bytes_per_clock

    def step_half_cycle(self) -> bytes:
        """Advance one edge; return the octets emitted on it (empty on falling edges)."""
        st = self.state
        if st.phase is Phase.DONE:
            raise PreconditionError("engine is stopped")
        if st.clock % 2 == 0:
            out = self._rise(st)
        else:
            out = self._fall(st)
        st.clock += 1
        return out

    def step_clock(self) -> bytes:
        return self.step_half_cycle() + self.step_half_cycle()

    def run_ksa(self) -> None:
        st = self.state
        rise, fall = self._rise, self._fall
        while st.phase in KSA_PHASES:
            if st.clock & 1:
                fall(st)
            else:
                rise(st)
            st.clock += 1

    def read(self, n: int) -> bytes:
        """Return the next ``n`` keystream octets, carrying leftovers across calls."""
        if n < 0:
            raise RejectedInput("byte count must be non-negative")
        buf = self._buffer
        st = self.state
        rise, fall = self._rise, self._fall
        commit, latch = self._commit, self._latch
        prga = Phase.PRGA
        # same as calling step_half_cycle() repeatedly, minus the call overhead
        while len(buf) < n:
            if st.phase is prga and st.pending is not None and not st.clock & 1:
                # steady state: rising edge commits and emits, falling edge latches
                self.prga_clocks += 1
                buf += commit(st, True)
                st.clock += 1
                latch(st)
                st.clock += 1
                continue
            if st.phase is Phase.DONE:
                raise PreconditionError("engine is stopped")
            if st.clock & 1:
                fall(st)
            else:
                out = rise(st)
                if out:
                    buf += out
            st.clock += 1
        data = bytes(buf[:n])
        del buf[:n]
        return data

    def read_bulk(self, n: int) -> bytes:
        """Same octets and end state as :meth:`read`, run whole clocks at a time.

        Once the PRGA pipeline is full every clock is "commit on rising,
        latch on falling"; this loop performs exactly those transfers without
        per-edge dispatch.  Tracing and invariant checks need :meth:`read`.
        """
        if self._trace is not None or self._check:
            return self.read(n)
        st = self.state
        buf = self._buffer
        # reach a rising edge with operands latched
        while len(buf) < n and not (st.phase is Phase.PRGA and st.pending is not None
                                    and st.clock % 2 == 0):
            buf += self.step_half_cycle()
        missing = n - len(buf)
        if missing > 0:
            per = self.design.bytes_per_clock
            clocks = -(-missing // per)
            run = self._bulk_pair if self.design.unrolled else self._bulk_single
            buf += run(st, clocks)
            self.prga_clocks += clocks
            st.clock += 2 * clocks
        data = bytes(buf[:n])
        del buf[:n]
        return data

    @staticmethod
    def _bulk_single(st: EngineState, clocks: int) -> bytearray:
        s = st.sbox
        i, jn, si, sj = st.pending
        out = bytearray(clocks)
        for k in range(clocks):
            # rising: commit + emit
            s[i] = sj
            s[jn] = si
            out[k] = s[(si + sj) & 0xFF]
            i = (i + 1) & 0xFF
            # falling: latch next step
            si = s[i]
            jn = (jn + si) & 0xFF
            sj = s[jn]
        st.i, st.j = i, (jn - si) & 0xFF
        st.pending = (i, jn, si, sj)
        return out

    @staticmethod
    def _bulk_pair(st: EngineState, clocks: int) -> bytearray:
        s = st.sbox
        i1, i2, j1, j2, case, s_i1, s_i2, s_j1, s_j2 = st.pending
        out = bytearray(2 * clocks)
        moves = SWAP_MOVES
        sources = Z2_SOURCES
        for k in range(0, 2 * clocks, 2):
            t1 = (s_i1 + s_j1) & 0xFF
            z1 = s_j1 if t1 == i1 else s_i1 if t1 == j1 else s[t1]
            if case == 1:
                s[j1] = s_i1
                s[i1] = s_j1
                s[j2] = s_i2
                s[i2] = s_j2
                out[k + 1] = s[(s_i2 + s_j2) & 0xFF]
            else:
                addrs = (i1, i2, j1, j2)
                vals = (s_i1, s_i2, s_j1, s_j2)
                for src, dst in moves[case]:
                    s[addrs[dst]] = vals[src]
                a, b = sources[case]
                out[k + 1] = s[(vals[a] + vals[b]) & 0xFF]
            out[k] = z1
            i1 = (i1 + 2) & 0xFF
            i2 = (i1 + 1) & 0xFF
            j0 = j2
            s_i1 = s[i1]
            s_i2 = s[i2]
            j1 = (j0 + s_i1) & 0xFF
            j2 = (j1 + (s_i1 if i2 == j1 else s_i2)) & 0xFF
            s_j1 = s[j1]
            s_j2 = s[j2]
            case = swap_case(i1, i2, j1, j2)
        st.i, st.j = i1, j0
        st.pending = (i1, i2, j1, j2, case, s_i1, s_i2, s_j1, s_j2)
        return out

    def stop(self) -> None:
        self.state.phase = Phase.DONE

    def report(self, n: int) -> CycleReport:
        return CycleReport(self.ksa_clocks, self.prga_clocks, n)

    # -- edges ---------------------------------------------------------------

    def _rise(self, st: EngineState) -> bytes:
        phase = st.phase
        if phase is Phase.PRGA and st.pending is not None:
            self.prga_clocks += 1
            return self._commit(st, True)
        if phase is Phase.KSA_INIT:
            self.ksa_clocks += 1
            st.sbox[:] = range(256)
            st.i = st.j = 0
            st.prga_en = False
            self._log(st, "init S=identity i=0 j=0")
            return b""
        if phase is Phase.KSA:
            self.ksa_clocks += 1
            self._commit(st, emit=False)
            st.ksa_iterations += 1
            return b""
        if phase is Phase.PRGA_INIT:
            self.prga_clocks += 1
            if self.design.dynamic:
                dynamic_mode_switch(st, self.design)
                self._log(st, "prga_en<=1 counter<=0 j<=0 (no swap)")
            else:
                # separate PRGA unit takes over the storage block
                st.i = st.j = 0
                st.prga_en = True
                st.pending = None
                self._log(st, "prga unit reset i=0 j=0")
            return b""
        self.prga_clocks += 1
        if st.pending is None:
            self._log(st, "pipeline fill")
            return b""
        return self._commit(st, emit=True)

    def _fall(self, st: EngineState) -> bytes:
        phase = st.phase
        if phase is Phase.PRGA:
            self._latch(st)
        elif phase is Phase.KSA_INIT:
            self._latch(st)
            st.phase = Phase.KSA
        elif phase is Phase.KSA:
            if st.ksa_iterations < self._need:
                self._latch(st)
            else:
                self._log(st, "ksa done")
                st.phase = Phase.PRGA_INIT
        elif phase is Phase.PRGA_INIT:
            st.i = 1
            st.phase = Phase.PRGA
            self._log(st, "counter start i=1" if not self.design.unrolled else "counter start i1=1 i2=2")
        return b""

    # -- datapaths -----------------------------------------------------------

    def _key_addend(self, st: EngineState, i: int) -> int:
        # static designs: only the KSA unit has a key port; dynamic: prga_en gates it
        if st.prga_en:
            return 0
        return self.key[i % self._klen]

    def _latch_single(self, st: EngineState) -> None:
        if self._check and st.clock % 2 == 0:
            raise InvariantViolation("latch load on a rising edge")
        s = st.sbox
        i = st.i
        si = s[i]
        jn = (st.j + si + (0 if st.prga_en else self.key[i % self._klen])) & 0xFF
        sj = s[jn]
        st.pending = (i, jn, si, sj)
        if self._trace is not None:
            self._log(st, f"latch i={i} j={jn} S[i]={si} S[j]={sj}")

    def _commit_single(self, st: EngineState, emit: bool) -> bytes:
        i, jn, si, sj = st.pending
        s = st.sbox
        s[i] = sj
        s[jn] = si
        st.j = jn
        st.i = (i + 1) & 0xFF
        st.pending = None
        out = b""
        if emit:
            out = bytes((s[(si + sj) & 0xFF],))
        if self._check:
            self._check_perm(st)
        if self._trace is not None:
            self._log(st, f"swap S[{i}]<->S[{jn}]" + (f" Z={out[0]}" if out else ""))
        return out

    # untraced, unchecked twins of the two methods above; same register behaviour
    def _latch_single_quiet(self, st: EngineState) -> None:
        s = st.sbox
        i = st.i
        si = s[i]
        jn = (st.j + si + (0 if st.prga_en else self.key[i % self._klen])) & 0xFF
        st.pending = (i, jn, si, s[jn])

    def _commit_single_quiet(self, st: EngineState, emit: bool) -> bytes:
        i, jn, si, sj = st.pending
        s = st.sbox
        s[i] = sj
        s[jn] = si
        st.j = jn
        st.i = (i + 1) & 0xFF
        st.pending = None
        return bytes((s[(si + sj) & 0xFF],)) if emit else b""

    def _latch_pair(self, st: EngineState) -> None:
        if self._check and st.clock % 2 == 0:
            raise InvariantViolation("latch load on a rising edge")
        s = st.sbox
        i1 = st.i
        i2 = (i1 + 1) & 0xFF
        j0 = st.j
        s_i1 = s[i1]
        s_i2 = s[i2]
        k1 = self._key_addend(st, i1)
        k2 = self._key_addend(st, i2)
        j1 = (j0 + s_i1 + k1) & 0xFF
        # S1[i2] differs from S0[i2] only when the first swap hit cell i2
        j2 = (j1 + (s_i1 if i2 == j1 else s_i2) + k2) & 0xFF
        s_j1 = s[j1]
        s_j2 = s[j2]
        case = swap_case(i1, i2, j1, j2)
        st.pending = (i1, i2, j1, j2, case, s_i1, s_i2, s_j1, s_j2)
        if self._trace is not None:
            self._log(st, f"latch i1={i1} i2={i2} j1={j1} j2={j2} case={case}")

    def _commit_pair(self, st: EngineState, emit: bool) -> bytes:
        i1, i2, j1, j2, case, s_i1, s_i2, s_j1, s_j2 = st.pending
        addrs = (i1, i2, j1, j2)
        vals = (s_i1, s_i2, s_j1, s_j2)
        s = st.sbox
        out = b""
        if emit:
            # Z1 reads S1 = S0 with only the first swap applied
            t1 = (s_i1 + s_j1) & 0xFF
            z1 = s_j1 if t1 == i1 else s_i1 if t1 == j1 else s[t1]
        for src, dst in SWAP_MOVES[case]:
            s[addrs[dst]] = vals[src]
        if emit:
            a, b = Z2_SOURCES[case]
            z2 = s[(vals[a] + vals[b]) & 0xFF]
            out = bytes((z1, z2))
        st.j = j2
        st.i = (i1 + 2) & 0xFF
        st.pending = None
        if self._check:
            self._check_perm(st)
        if self._trace is not None:
            msg = f"double-swap case={case}"
            if out:
                msg += f" Z1={out[0]} Z2={out[1]}"
            self._log(st, msg)
        return out

    def _latch_pair_quiet(self, st: EngineState) -> None:
        s = st.sbox
        i1 = st.i
        i2 = (i1 + 1) & 0xFF
        s_i1 = s[i1]
        s_i2 = s[i2]
        if st.prga_en:
            j1 = (st.j + s_i1) & 0xFF
            j2 = (j1 + (s_i1 if i2 == j1 else s_i2)) & 0xFF
        else:
            key, klen = self.key, self._klen
            j1 = (st.j + s_i1 + key[i1 % klen]) & 0xFF
            j2 = (j1 + (s_i1 if i2 == j1 else s_i2) + key[i2 % klen]) & 0xFF
        st.pending = (i1, i2, j1, j2, swap_case(i1, i2, j1, j2), s_i1, s_i2, s[j1], s[j2])

    def _commit_pair_quiet(self, st: EngineState, emit: bool) -> bytes:
        i1, i2, j1, j2, case, s_i1, s_i2, s_j1, s_j2 = st.pending
        addrs = (i1, i2, j1, j2)
        vals = (s_i1, s_i2, s_j1, s_j2)
        s = st.sbox
        t1 = (s_i1 + s_j1) & 0xFF
        z1 = s_j1 if t1 == i1 else s_i1 if t1 == j1 else s[t1]
        for src, dst in SWAP_MOVES[case]:
            s[addrs[dst]] = vals[src]
        st.j = j2
        st.i = (i1 + 2) & 0xFF
        st.pending = None
        if not emit:
            return b""
        a, b = Z2_SOURCES[case]
        return bytes((z1, s[(vals[a] + vals[b]) & 0xFF]))

    # -- helpers -------------------------------------------------------------

    def _check_perm(self, st: EngineState) -> None:
        if st.clock % 2 != 0:
            raise InvariantViolation("S-box write on a falling edge")
        if len(set(st.sbox)) != 256:
            raise InvariantViolation(f"S-box is not a permutation at half-cycle {st.clock}")

    def _log(self, st: EngineState, action: str) -> None:
        if self._trace is not None:
            self._trace(f"{st.clock // 2}.{'R' if st.clock % 2 == 0 else 'F'} {action}")


def simulate(design, key, n: int, trace: Callable[[str], None] | None = None,
             check_invariants: bool = False) -> tuple[bytes, CycleReport]:
    """Run one engine from reset until ``n`` keystream octets have appeared.

    A 2-byte engine asked for an odd ``n`` still fires its last pair; the
    surplus octet is discarded.  ``n == 0`` runs the KSA only.
    """
    if n < 0:
        raise RejectedInput("byte count must be non-negative")
    eng = Engine(design, key, trace=trace, check_invariants=check_invariants)
    eng.run_ksa()
    stream = eng.read(n) if n else b""
    eng.stop()
    return stream, eng.report(n)
