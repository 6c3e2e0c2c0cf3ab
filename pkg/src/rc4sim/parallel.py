"""Lane-parallel generators (designs 5 and 6).

Design 5 runs four 1-byte dynamic engines, design 6 two 2-byte dynamic
engines.  Each lane is keyed with a contiguous fragment of the master key and
all lanes start their KSA on the same clock.  Every clock the packer gathers
one 32-bit bus word:

* design 5: octet m of the word comes from lane m;
* design 6: octets 0-1 are lane 0's (Z1, Z2), octets 2-3 lane 1's.

Keystream position k therefore lives at word k // 4, octet k % 4.  This
mapping is part of the wire contract: both endpoints must use it.

The result is *not* RC4 under the master key; it is four (or two)
independent RC4 streams under key fragments, and fragments of 1-2 bytes are
cryptographically weak.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

from rc4sim.errors import RejectedInput, UnsupportedDesign
from rc4sim.hwsim import CycleReport, Design, Engine, Phase
from rc4sim.rc4_ref import check_key

BUS_WIDTH = 32
WORD_BYTES = BUS_WIDTH // 8

LANE_LAYOUT = {
    Design.D5: (4, Design.D2),
    Design.D6: (2, Design.D4),
}


def split_key(key, lanes: int) -> list[bytes]:
    """Cut ``key`` into ``lanes`` contiguous pieces; the first l % lanes get one extra byte."""
    key = check_key(key)
    if lanes < 1:
        raise RejectedInput("lane count must be positive")
    if len(key) < lanes:
        raise RejectedInput(f"a {len(key)}-byte key cannot feed {lanes} lanes")
    base, extra = divmod(len(key), lanes)
    parts = []
    pos = 0
    for p in range(lanes):
        size = base + (1 if p < extra else 0)
        parts.append(key[pos:pos + size])
        pos += size
    return parts


@dataclass(frozen=True)
class LaneConfig:
    design: Design
    lanes: int
    sub_keys: tuple[bytes, ...]
    engine_design: Design
    bus_width: int = BUS_WIDTH

    @classmethod
    def for_design(cls, design, key) -> "LaneConfig":
        design = Design.parse(design)
        if design not in LANE_LAYOUT:
            raise UnsupportedDesign(f"design {design.value} is not lane-parallel")
        lanes, engine_design = LANE_LAYOUT[design]
        cfg = cls(design, lanes, tuple(split_key(key, lanes)), engine_design)
        assert cfg.lanes * engine_design.bytes_per_clock == cfg.bus_width // 8
        return cfg

    @property
    def bytes_per_lane(self) -> int:
        return self.engine_design.bytes_per_clock


@dataclass(frozen=True)
class BusWord:
    octets: bytes
    source_lanes: tuple[int, ...]


class LaneStall(Exception):
    """A lane had nothing to put on the bus this clock."""


def pack_bus_word(lane_outputs: Sequence[bytes]) -> BusWord:
    """Concatenate one clock's lane outputs, lane 0 first."""
    if any(len(out) == 0 for out in lane_outputs):
        starved = [p for p, out in enumerate(lane_outputs) if not out]
        raise LaneStall(f"lanes {starved} not ready")
    octets = b"".join(lane_outputs)
    if len(octets) != WORD_BYTES:
        raise RejectedInput(f"bus word needs {WORD_BYTES} octets, got {len(octets)}")
    sources = tuple(p for p, out in enumerate(lane_outputs) for _ in out)
    return BusWord(octets, sources)


def lane_of(design, k: int) -> tuple[int, int]:
    """(lane, index within that lane's stream) for keystream position ``k``."""
    design = Design.parse(design)
    word, pos = divmod(k, WORD_BYTES)
    if design is Design.D5:
        return pos, word
    return pos // 2, 2 * word + pos % 2


def lane_streams(stream: bytes, design) -> list[bytes]:
    """Undo the bus interleave: one byte string per lane."""
    design = Design.parse(design)
    lanes, engine_design = LANE_LAYOUT[design]
    per = engine_design.bytes_per_clock
    out = [bytearray() for _ in range(lanes)]
    for w in range(0, len(stream), WORD_BYTES):
        word = stream[w:w + WORD_BYTES]
        for p in range(lanes):
            out[p] += word[p * per:(p + 1) * per]
    return [bytes(b) for b in out]


class ParallelEngine:
    """Lock-stepped lanes behind a 32-bit packer with a per-clock barrier."""

    def __init__(self, design, key, lane_order: Sequence[int] | None = None,
                 trace: Callable[[str], None] | None = None, check_invariants: bool = False):
        self.config = LaneConfig.for_design(design, key)
        self.design = self.config.design
        n = self.config.lanes
        self.lane_order = list(range(n)) if lane_order is None else list(lane_order)
        if sorted(self.lane_order) != list(range(n)):
            raise RejectedInput(f"lane_order must be a permutation of 0..{n - 1}")
        self.lanes = [
            Engine(self.config.engine_design, sk,
                   trace=None if trace is None else _lane_tracer(trace, p),
                   check_invariants=check_invariants)
            for p, sk in enumerate(self.config.sub_keys)
        ]
        self.words = 0
        self.stalls = 0
        self._fifo = [bytearray() for _ in range(n)]
        self._buffer = bytearray()
        self._half = 0

    @property
    def ksa_clocks(self) -> int:
        return self.lanes[0].ksa_clocks

    @property
    def prga_clocks(self) -> int:
        return self.lanes[0].prga_clocks

    def step_half_cycle(self) -> bytes:
        for p in self.lane_order:
            out = self.lanes[p].step_half_cycle()
            if out:
                self._fifo[p] += out
        self._half += 1
        if self._half % 2:
            return self._pack()
        return b""

    def _pack(self) -> bytes:
        fifo = self._fifo
        if not any(fifo):
            return b""
        per = self.config.bytes_per_lane
        try:
            word = pack_bus_word([bytes(f[:per]) if len(f) >= per else b"" for f in fifo])
        except LaneStall:
            self.stalls += 1
            return b""
        for f in fifo:
            del f[:per]
        self.words += 1
        return word.octets

    def run_ksa(self) -> None:
        while self.lanes[0].state.phase in (Phase.KSA_INIT, Phase.KSA):
            self.step_half_cycle()

    def read(self, n: int) -> bytes:
        if n < 0:
            raise RejectedInput("byte count must be non-negative")
        buf = self._buffer
        while len(buf) < n:
            out = self.step_half_cycle()
            if out:
                buf += out
        data = bytes(buf[:n])
        del buf[:n]
        return data

    def read_bulk(self, n: int) -> bytes:
        """:meth:`read` with lanes advanced whole clocks at a time in steady state."""
        buf = self._buffer
        while len(buf) < n and not self._steady():
            buf += self.step_half_cycle()
        missing = n - len(buf)
        if missing > 0:
            clocks = -(-missing // WORD_BYTES)
            per = self.config.bytes_per_lane
            outs = [self.lanes[p].read_bulk(clocks * per) for p in self.lane_order]
            by_lane = dict(zip(self.lane_order, outs))
            words = bytearray(clocks * WORD_BYTES)
            lanes = len(self.lanes)
            for p in range(lanes):
                for b in range(per):
                    words[p * per + b::WORD_BYTES] = by_lane[p][b::per]
            buf += words
            self.words += clocks
            self._half += 2 * clocks
        data = bytes(buf[:n])
        del buf[:n]
        return data

    def _steady(self) -> bool:
        if any(self._fifo) or self._half % 2:
            return False
        return all(e.state.phase is Phase.PRGA and e.state.pending is not None for e in self.lanes)

    def report(self, n: int) -> CycleReport:
        ksa = {e.ksa_clocks for e in self.lanes}
        prga = {e.prga_clocks for e in self.lanes}
        assert len(ksa) == 1 and len(prga) == 1, "lanes drifted out of lock-step"
        return CycleReport(ksa.pop(), prga.pop(), n, stalls=self.stalls)


def _lane_tracer(trace, lane):
    return lambda line: trace(f"L{lane} {line}")


def _run_lane(engine: Engine, need: int) -> list[bytes]:
    """Run one lane to completion, recording what it emitted on each PRGA clock."""
    engine.run_ksa()
    per_clock = []
    got = 0
    while got < need:
        out = engine.step_half_cycle()
        engine.step_half_cycle()
        per_clock.append(out)
        got += len(out)
    return per_clock


def simulate_parallel(design, key, n: int, lane_order: Sequence[int] | None = None,
                      threads: bool = False, trace: Callable[[str], None] | None = None,
                      check_invariants: bool = False) -> tuple[bytes, CycleReport]:
    """Produce ``n`` octets of the lane-parallel keystream and the clock report.

    With ``threads=True`` each lane runs to completion on its own worker and
    the packer replays the per-clock outputs afterwards; the result is
    identical to lock-step execution.
    """
    if n < 0:
        raise RejectedInput("byte count must be non-negative")
    eng = ParallelEngine(design, key, lane_order=lane_order, trace=trace,
                         check_invariants=check_invariants)
    if not threads:
        eng.run_ksa()
        stream = eng.read(n) if n else b""
        return stream, eng.report(n)

    words = math.ceil(n / WORD_BYTES)
    need = words * eng.config.bytes_per_lane
    with ThreadPoolExecutor(max_workers=len(eng.lanes)) as pool:
        futures = [pool.submit(_run_lane, eng.lanes[p], need) for p in eng.lane_order]
        by_lane = dict(zip(eng.lane_order, (f.result() for f in futures)))
    per_clock = [by_lane[p] for p in range(len(eng.lanes))]
    out = bytearray()
    stalls = 0
    for outputs in zip(*per_clock):
        if not any(outputs):
            continue
        try:
            out += pack_bus_word(list(outputs)).octets
        except LaneStall:
            stalls += 1
    rep = eng.report(n)
    rep.stalls = stalls
    return bytes(out[:n]), rep


class _BulkReader:
    def __init__(self, engine):
        self.engine = engine

    def read(self, n: int) -> bytes:
        return self.engine.read_bulk(n)


def open_keystream(design, key, check_invariants: bool = False):
    """Continuous keystream source for any design; call ``.read(n)`` repeatedly.

    Runs in whole-clock steady-state steps unless ``check_invariants`` asks
    for edge-by-edge stepping.
    """
    design = Design.parse(design)
    if design.parallel:
        eng = ParallelEngine(design, key, check_invariants=check_invariants)
    else:
        eng = Engine(design, key, check_invariants=check_invariants)
    eng.run_ksa()
    return eng if check_invariants else _BulkReader(eng)
