import random
import re
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from desk_rc4 import desk_ksa, desk_rc4
from rc4sim.errors import InvariantViolation, PreconditionError, RejectedInput, UnsupportedDesign
from rc4sim.hwsim import (
    PER_BYTE_FORMULA,
    Design,
    Engine,
    EngineState,
    Phase,
    cycles_formula,
    dynamic_mode_switch,
    simulate,
)

SINGLE = [Design.D1, Design.D2, Design.D3, Design.D4]
TRACE_LINE = re.compile(r"^\d+\.[RF] \S")


@pytest.mark.parametrize("design", SINGLE)
def test_published_vector_every_design(design):
    ks, _ = simulate(design, b"Key", 9, check_invariants=True)
    assert bytes(a ^ b for a, b in zip(b"Plaintext", ks)).hex() == "bbf316e8d940af0ad3"


@pytest.mark.parametrize("design", SINGLE)
def test_ksa_leaves_reference_sbox(design):
    eng = Engine(design, b"\x00", check_invariants=True)
    eng.run_ksa()
    assert list(eng.state.sbox) == desk_ksa(b"\x00")
    assert eng.state.sbox[0] == 0


@pytest.mark.parametrize("design,ksa,prga", [(1, 257, 12), (2, 257, 12), (3, 129, 7), (4, 129, 7)])
def test_ten_byte_counts(design, ksa, prga):
    _, rep = simulate(design, b"Key", 10)
    assert (rep.ksa_clocks, rep.prga_clocks) == (ksa, prga)


def test_per_byte_at_256():
    _, r1 = simulate(1, b"Key", 256)
    _, r3 = simulate(3, b"Key", 256)
    assert r1.per_byte == Fraction(515, 256)
    assert r3.per_byte == Fraction(259, 256)


@pytest.mark.parametrize("design", SINGLE)
def test_counts_match_closed_form_1_to_1024(design):
    # one engine, read incrementally: counts after each byte are checked
    key = b"\x01\x02\x03\x04\x05"
    eng = Engine(design, key)
    eng.run_ksa()
    assert eng.ksa_clocks == cycles_formula(design, 1).ksa_clocks
    stream = eng.read(1024)
    assert stream == desk_rc4(key, 1024)
    # a fresh run for a sample of n, since read() may overshoot within a clock
    for n in list(range(1, 40)) + [255, 256, 257, 511, 1023, 1024]:
        _, rep = simulate(design, key, n)
        f = cycles_formula(design, n)
        assert (rep.ksa_clocks, rep.prga_clocks) == (f.ksa_clocks, f.prga_clocks)


def test_odd_n_on_two_byte_engine_discards_surplus():
    ks, rep = simulate(3, b"Key", 9)
    assert ks == desk_rc4(b"Key", 9)
    assert rep.prga_clocks == 2 + 5


def test_zero_n_runs_ksa_only():
    ks, rep = simulate(1, b"Key", 0)
    assert ks == b"" and rep.prga_clocks == 0 and rep.ksa_clocks == 257
    assert rep.per_byte is None


def test_negative_n_rejected():
    with pytest.raises(RejectedInput):
        simulate(1, b"Key", -1)


def test_formula_rejects_zero():
    with pytest.raises(RejectedInput):
        cycles_formula(1, 0)


def test_formula_strings():
    assert PER_BYTE_FORMULA[Design.D1] == "1 + 259/n"
    assert PER_BYTE_FORMULA[Design.D3] == "1/2 + 131/n"


@pytest.mark.parametrize("raw,expected", [("3", Design.D3), ("d5", Design.D5), (2, Design.D2)])
def test_design_parse(raw, expected):
    assert Design.parse(raw) is expected


@pytest.mark.parametrize("raw", ["0", "7", "x"])
def test_design_parse_rejects(raw):
    with pytest.raises(RejectedInput):
        Design.parse(raw)


@pytest.mark.parametrize("design", [5, 6])
def test_engine_refuses_parallel_designs(design):
    with pytest.raises(UnsupportedDesign):
        Engine(design, b"Key")


def test_trace_format_and_edges():
    lines = []
    simulate(1, b"Key", 3, trace=lines.append)
    assert all(TRACE_LINE.match(l) for l in lines)
    assert lines[0] == "0.R init S=identity i=0 j=0"
    swaps = [l for l in lines if " swap " in l]
    latches = [l for l in lines if " latch " in l]
    assert swaps and all(".R " in l for l in swaps)
    assert latches and all(".F " in l for l in latches)
    outs = [l for l in lines if "Z=" in l]
    assert [int(l.rsplit("=", 1)[1]) for l in outs] == list(desk_rc4(b"Key", 3))
    assert outs[0].startswith("259.R")


def test_trace_pair_engine_reports_cases():
    lines = []
    simulate(3, b"Key", 4, trace=lines.append)
    assert any("double-swap case=" in l and ".R " in l for l in lines)
    assert "128.F ksa done" in lines


def test_dynamic_trace_shows_switch():
    lines = []
    simulate(2, b"Key", 1, trace=lines.append)
    assert "257.R prga_en<=1 counter<=0 j<=0 (no swap)" in lines


def test_ksa_boundary_iteration_counts():
    eng = Engine(1, b"Key")
    eng.run_ksa()
    assert eng.state.ksa_iterations == 256
    eng3 = Engine(3, b"Key")
    eng3.run_ksa()
    assert eng3.state.ksa_iterations == 128


def test_dynamic_switch_resets_and_gates():
    eng = Engine(2, b"Key")
    eng.run_ksa()
    st_ = eng.state
    st_.j = 99
    dynamic_mode_switch(st_, 2)
    assert (st_.i, st_.j, st_.prga_en, st_.pending) == (0, 0, True, None)
    assert st_.phase is Phase.PRGA_INIT


def test_dynamic_switch_refuses_incomplete_ksa():
    state = EngineState(ksa_iterations=100)
    with pytest.raises(PreconditionError):
        dynamic_mode_switch(state, 2)


def test_dynamic_switch_refuses_twice():
    state = EngineState(ksa_iterations=128, prga_en=True)
    with pytest.raises(PreconditionError):
        dynamic_mode_switch(state, 4)


@pytest.mark.parametrize("design", [1, 3, 5])
def test_dynamic_switch_only_on_dynamic_single_engines(design):
    with pytest.raises(UnsupportedDesign):
        dynamic_mode_switch(EngineState(ksa_iterations=256), design)


def test_prga_en_zeroes_key_addend():
    # with prga_en high the shared datapath must compute PRGA j, not KSA j
    eng = Engine(2, b"\xff" * 16)
    eng.run_ksa()
    assert eng.read(64) == desk_rc4(b"\xff" * 16, 64)


def test_stopped_engine_refuses_to_step():
    eng = Engine(1, b"Key")
    eng.stop()
    with pytest.raises(PreconditionError):
        eng.step_half_cycle()


def test_latch_on_rising_edge_is_caught():
    eng = Engine(1, b"Key", check_invariants=True)
    with pytest.raises(InvariantViolation):
        eng._latch(eng.state)  # clock 0 is a rising edge


def test_corrupt_sbox_is_caught():
    eng = Engine(1, b"Key", check_invariants=True)
    for _ in range(5):
        eng.step_half_cycle()
    eng.state.sbox[200] = eng.state.sbox[201]
    with pytest.raises(InvariantViolation):
        for _ in range(600):
            eng.step_half_cycle()


@pytest.mark.parametrize("pair", [(1, 2), (3, 4)])
def test_dynamic_equals_static(pair):
    rng = random.Random(pair[0])
    for _ in range(40):
        key = bytes(rng.randrange(256) for _ in range(rng.randint(1, 256)))
        n = rng.randint(1, 700)
        a, ra = simulate(pair[0], key, n)
        b, rb = simulate(pair[1], key, n)
        assert a == b
        assert (ra.ksa_clocks, ra.prga_clocks) == (rb.ksa_clocks, rb.prga_clocks)


@pytest.mark.parametrize("design", SINGLE)
def test_bulk_matches_edge_stepping(design):
    rng = random.Random(int(design))
    key = bytes(rng.randrange(256) for _ in range(13))
    edge = Engine(design, key)
    bulk = Engine(design, key)
    edge.run_ksa()
    bulk.run_ksa()
    for _ in range(25):
        n = rng.randint(0, 300)
        take_bulk = rng.random() < 0.7
        a = edge.read(n)
        b = bulk.read_bulk(n) if take_bulk else bulk.read(n)
        assert a == b
    # align to a clock boundary, then the full state must agree
    for eng in (edge, bulk):
        if eng.state.clock % 2:
            eng.step_half_cycle()
    assert edge.state == bulk.state
    assert edge.prga_clocks == bulk.prga_clocks


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(SINGLE), st.binary(min_size=1, max_size=256), st.integers(0, 300))
def test_engine_matches_oracle(design, key, n):
    ks, rep = simulate(design, key, n, check_invariants=True)
    assert ks == desk_rc4(key, n)
    if n:
        f = cycles_formula(design, n)
        assert rep.total_clocks == f.total_clocks
