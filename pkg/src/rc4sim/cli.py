"""rc4sim command line.

Exit status: 0 success, 1 usage or input error, 2 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from contextlib import contextmanager

from rc4sim import netlink
from rc4sim.errors import RejectedInput, UnsupportedDesign
from rc4sim.hwsim import PER_BYTE_FORMULA, Design, cycles_formula, simulate
from rc4sim.parallel import open_keystream, simulate_parallel
from rc4sim.rc4_ref import check_key, xor_cipher
from rc4sim.unroll import verify_tables

EXIT_OK, EXIT_USAGE, EXIT_VERIFY = 0, 1, 2
CHUNK = 64 * 1024
REPORT_KEY = b"\x01\x02\x03\x04\x05\x06\x07\x08"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _key_from(args, required: bool = True) -> bytes | None:
    if getattr(args, "key_hex", None) is not None:
        try:
            raw = bytes.fromhex(args.key_hex)
        except ValueError:
            raise UsageError(f"--key-hex is not valid hex: {args.key_hex!r}") from None
    elif getattr(args, "key", None) is not None:
        raw = args.key.encode("utf-8")
    elif required:
        raise UsageError("a key is required (--key or --key-hex)")
    else:
        return None
    try:
        return check_key(raw)
    except RejectedInput as exc:
        raise UsageError(str(exc)) from None


def _design(args) -> Design:
    try:
        return Design.parse(args.design)
    except RejectedInput as exc:
        raise UsageError(str(exc)) from None


def _warn_parallel(design: Design) -> None:
    if design.parallel:
        print(f"note: design {design.value} emits parallel-RC4 (independent lanes under key "
              "fragments); it does not interoperate with designs 1-4", file=sys.stderr)


@contextmanager
def _open_in(path):
    if path in (None, "-"):
        yield sys.stdin.buffer
    else:
        with open(path, "rb") as fh:
            yield fh


@contextmanager
def _open_out(path):
    if path in (None, "-"):
        yield sys.stdout.buffer
        sys.stdout.buffer.flush()
    else:
        with open(path, "wb") as fh:
            yield fh


def _keystream_gen(design, key):
    try:
        return open_keystream(design, key)
    except (RejectedInput, UnsupportedDesign) as exc:
        raise UsageError(str(exc)) from None


def cmd_keystream(args) -> int:
    design = _design(args)
    key = _key_from(args)
    if args.n is None or args.n < 0:
        raise UsageError("--n must be a non-negative byte count")
    gen = _keystream_gen(design, key)
    _warn_parallel(design)
    with _open_out(args.out) as out:
        left = args.n
        while left:
            take = min(left, CHUNK)
            out.write(gen.read(take))
            left -= take
    return EXIT_OK


def cmd_crypt(args) -> int:
    # encryption and decryption are the same XOR
    design = _design(args)
    key = _key_from(args)
    gen = _keystream_gen(design, key)
    _warn_parallel(design)
    with _open_in(args.inp) as src, _open_out(args.out) as dst:
        while True:
            chunk = src.read(CHUNK)
            if not chunk:
                break
            dst.write(xor_cipher(chunk, gen.read(len(chunk))))
    return EXIT_OK


def report_rows(n_values, designs=tuple(Design), key: bytes = REPORT_KEY) -> list[dict]:
    rows = []
    for d in designs:
        d = Design.parse(d)
        for n in n_values:
            if n < 1:
                raise RejectedInput("report byte counts must be >= 1")
            formula = cycles_formula(d, n)
            if d.parallel:
                _, meas = simulate_parallel(d, key, n)
            else:
                _, meas = simulate(d, key, n)
            rows.append({
                "design": d.value,
                "n": n,
                "ksa_clocks": meas.ksa_clocks,
                "prga_clocks": meas.prga_clocks,
                "total_clocks": meas.total_clocks,
                "formula_total_clocks": formula.total_clocks,
                "per_byte_formula": float(formula.per_byte),
                "per_byte_measured": float(meas.per_byte),
                "formula": PER_BYTE_FORMULA[d],
                "match": meas.total_clocks == formula.total_clocks
                and meas.ksa_clocks == formula.ksa_clocks,
            })
    return rows


def _render(rows: list[dict], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(rows, indent=2) + "\n"
    if not rows:
        return ""
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        return buf.getvalue()
    head = f"{'design':>6} {'n':>8} {'ksa':>5} {'prga':>8} {'total':>8} {'per-byte':>10} {'closed form':>12}  check"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(
            f"{r['design']:>6} {r['n']:>8} {r['ksa_clocks']:>5} {r['prga_clocks']:>8} "
            f"{r['total_clocks']:>8} {r['per_byte_measured']:>10.5f} {r['formula']:>12}  "
            + ("ok" if r["match"] else f"MISMATCH (formula {r['formula_total_clocks']})")
        )
    return "\n".join(lines) + "\n"


def cmd_report(args) -> int:
    designs = [_design(argparse.Namespace(design=d)) for d in args.design] if args.design else list(Design)
    try:
        rows = report_rows(args.n, designs)
    except RejectedInput as exc:
        raise UsageError(str(exc)) from None
    sys.stdout.write(_render(rows, args.format))
    return EXIT_OK if all(r["match"] for r in rows) else EXIT_VERIFY


def cmd_verify_tables(args) -> int:
    i1_values = range(256) if args.i1 is None else [args.i1]

    def progress(i1):
        if args.progress:
            print(f"\ri1={i1:3d}/255", end="", file=sys.stderr, flush=True)

    rep = verify_tables(seed=args.seed, i1_values=i1_values, progress=progress)
    if args.progress:
        print(file=sys.stderr)
    if args.format == "json":
        print(json.dumps({
            "total": rep.total,
            "case_counts": {str(k): v for k, v in rep.case_counts.items()},
            "swap_mismatches": rep.swap_mismatches,
            "z1_mismatches": rep.z1_mismatches,
            "z2_mismatches": rep.z2_mismatches,
            "case7_moved": rep.case7_moved,
            "first_counterexample": rep.first_counterexample,
            "ok": rep.ok,
        }, indent=2))
    else:
        print(f"enumerated {rep.total} (i1, j1, j2) combinations")
        for case, count in rep.case_counts.items():
            print(f"  case {case}: {count}")
        print(f"double-swap mismatches: {rep.swap_mismatches}")
        print(f"Z1 mismatches: {rep.z1_mismatches}")
        print(f"Z2 mismatches: {rep.z2_mismatches}")
        print(f"case 7 rows that moved data: {rep.case7_moved}")
        if rep.first_counterexample:
            print(f"first counterexample: {rep.first_counterexample}")
        print("PASS" if rep.ok else "FAIL")
    return EXIT_OK if rep.ok else EXIT_VERIFY


def cmd_serve(args) -> int:
    design = _design(args)
    key = _key_from(args)
    sink = None
    out = None
    if args.out:
        out = open(args.out, "ab")

        def sink(peer, data):
            out.write(data)
            out.flush()
    try:
        netlink.serve(args.host, args.port, key, design, sink=sink)
    except KeyboardInterrupt:
        pass
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    finally:
        if out is not None:
            out.close()
    return EXIT_OK


def cmd_send(args) -> int:
    design = _design(args)
    key = _key_from(args)
    try:
        with _open_in(args.inp) as src:
            summary = netlink.send(args.host, args.port, key, design, src, frame_size=args.frame_size)
    except netlink.TransferError as exc:
        s = exc.summary
        print(f"error: {exc} (after {s.frames} frames, {s.bytes} bytes)", file=sys.stderr)
        return EXIT_USAGE
    print(f"sent {summary.bytes} bytes in {summary.frames} frames; "
          f"acks matched {summary.acks_matched}, mismatched {summary.acks_mismatched}")
    return EXIT_OK if summary.ok else EXIT_VERIFY


def _add_key(p, required=True):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--key", help="key as text (UTF-8 bytes)")
    g.add_argument("--key-hex", help="key as hex, e.g. 0102030405")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="rc4sim", description="Cycle-accurate RC4 hardware design simulator")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keystream", help="write n keystream octets")
    p.add_argument("--design", default="1")
    _add_key(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_keystream)

    for name in ("encrypt", "decrypt"):
        p = sub.add_parser(name, help=f"{name} a file (XOR with the keystream)")
        p.add_argument("--design", default="1")
        _add_key(p)
        p.add_argument("--in", dest="inp", default="-")
        p.add_argument("--out", default="-")
        p.set_defaults(func=cmd_crypt)

    p = sub.add_parser("report", help="measured vs closed-form clock counts")
    p.add_argument("--n", type=int, nargs="+", action="extend", required=True)
    p.add_argument("--design", nargs="+", action="extend")
    p.add_argument("--format", choices=("human", "json", "csv"), default="human")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("verify-tables", help="exhaustive check of the swap and Z2 case tables")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--i1", type=int, choices=range(256), metavar="I1",
                   help="check a single i1 slice instead of all 256")
    p.add_argument("--format", choices=("human", "json"), default="human")
    p.add_argument("--progress", action="store_true")
    p.set_defaults(func=cmd_verify_tables)

    p = sub.add_parser("serve", help="decrypting receiver for the framed TCP link")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--design", default="1")
    _add_key(p)
    p.add_argument("--out", help="append recovered plaintext to this file")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("send", help="encrypt a file and send it over the framed TCP link")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--design", default="1")
    _add_key(p)
    p.add_argument("--in", dest="inp", default="-")
    p.add_argument("--frame-size", type=int, default=netlink.DEFAULT_FRAME)
    p.set_defaults(func=cmd_send)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits on bad usage and --help; report the code instead
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"rc4sim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"rc4sim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
