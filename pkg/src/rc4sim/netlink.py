"""Framed TCP link: one side encrypts, the peer decrypts and acknowledges.

Wire format (all integers big-endian)::

    magic   4 octets  b"RC4S"
    design  1 octet   design number 1..6
    seq     4 octets  0, 1, 2, ... per connection
    length  4 octets  payload size
    payload           ciphertext

The receiver answers each data frame with a frame of the same header layout
whose seq echoes the data frame and whose 4-octet payload is the sum of the
recovered plaintext octets mod 2**32.  That sum is an integrity hint for the
demo, not a MAC.  Acks carry no ciphertext, so only the sender's keystream
is ever consumed, and it runs continuously across frames.
"""

from __future__ import annotations

import logging
import socket
import socketserver
import struct
import threading
from dataclasses import dataclass
from typing import BinaryIO, Callable

from rc4sim.hwsim import Design
from rc4sim.parallel import open_keystream
from rc4sim.rc4_ref import check_key, xor_cipher

log = logging.getLogger(__name__)

MAGIC = b"RC4S"
HEADER = struct.Struct(">4sBII")
DEFAULT_FRAME = 64 * 1024
MAX_PAYLOAD = 16 * 1024 * 1024


class ProtocolError(Exception):
    pass


class TransferError(Exception):
    def __init__(self, message: str, summary: "TransferSummary"):
        super().__init__(message)
        self.summary = summary


@dataclass(frozen=True)
class Frame:
    design_id: int
    seq: int
    payload: bytes
    magic: bytes = MAGIC

    @property
    def length(self) -> int:
        return len(self.payload)

    def encode(self) -> bytes:
        return HEADER.pack(self.magic, self.design_id, self.seq, len(self.payload)) + self.payload


def checksum(data: bytes) -> int:
    return sum(data) & 0xFFFFFFFF


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    while n:
        chunk = sock.recv(min(n, 1 << 20))
        if not chunk:
            raise EOFError
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> Frame | None:
    """Read one frame; ``None`` on a clean EOF at a frame boundary."""
    first = sock.recv(HEADER.size)
    if not first:
        return None
    try:
        head = first + _recv_exact(sock, HEADER.size - len(first))
    except EOFError:
        raise ProtocolError("connection closed inside a frame header") from None
    magic, design_id, seq, length = HEADER.unpack(head)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}")
    if length > MAX_PAYLOAD:
        raise ProtocolError(f"payload length {length} exceeds {MAX_PAYLOAD}")
    try:
        payload = _recv_exact(sock, length)
    except EOFError:
        raise ProtocolError("connection closed inside a frame payload") from None
    return Frame(design_id, seq, payload, magic)


def _reset(sock: socket.socket) -> None:
    # linger 0 makes close() send RST instead of FIN
    try:
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_LINGER, struct.pack("ii", 1, 0))
    except OSError:
        pass
    sock.close()


@dataclass
class ConnectionStats:
    peer: str
    frames: int = 0
    bytes: int = 0
    keystream_used: int = 0
    error: str | None = None


class _Handler(socketserver.BaseRequestHandler):
    server: "NetlinkServer"

    def handle(self):
        srv = self.server
        sock: socket.socket = self.request
        stats = ConnectionStats(peer="%s:%d" % self.client_address[:2])
        stream = open_keystream(srv.design, srv.key)
        expected = 0
        try:
            while True:
                frame = read_frame(sock)
                if frame is None:
                    break
                if frame.design_id != srv.design.value:
                    raise ProtocolError(
                        f"design mismatch: peer uses {frame.design_id}, we use {srv.design.value}"
                    )
                if frame.seq != expected:
                    raise ProtocolError(f"seq gap: expected {expected}, got {frame.seq}")
                expected += 1
                plain = xor_cipher(frame.payload, stream.read(frame.length))
                stats.keystream_used += frame.length
                stats.frames += 1
                stats.bytes += len(plain)
                if srv.sink is not None:
                    srv.sink(stats.peer, plain)
                ack = Frame(srv.design.value, frame.seq, struct.pack(">I", checksum(plain)))
                sock.sendall(ack.encode())
        except ProtocolError as exc:
            stats.error = str(exc)
            log.warning("resetting %s: %s", stats.peer, exc)
            _reset(sock)
        except OSError as exc:
            stats.error = str(exc)
            log.warning("connection %s failed: %s", stats.peer, exc)
        finally:
            srv.record(stats)


class NetlinkServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address, key, design, sink: Callable[[str, bytes], None] | None = None):
        self.key = check_key(key)
        self.design = Design.parse(design)
        self.sink = sink
        self.connections: list[ConnectionStats] = []
        self._lock = threading.Lock()
        super().__init__(address, _Handler)

    def record(self, stats: ConnectionStats) -> None:
        with self._lock:
            self.connections.append(stats)

    @property
    def port(self) -> int:
        return self.server_address[1]


def serve(host: str, port: int, key, design, sink=None) -> None:
    with NetlinkServer((host, port), key, design, sink=sink) as srv:
        log.info("listening on %s:%d design %d", host, srv.port, srv.design.value)
        srv.serve_forever()


def start_background(host: str, port: int, key, design, sink=None) -> NetlinkServer:
    """Start a server on a daemon thread; call ``shutdown()`` and ``server_close()`` when done."""
    srv = NetlinkServer((host, port), key, design, sink=sink)
    threading.Thread(target=srv.serve_forever, daemon=True).start()
    return srv


@dataclass
class TransferSummary:
    frames: int = 0
    bytes: int = 0
    acks_matched: int = 0
    acks_mismatched: int = 0

    @property
    def ok(self) -> bool:
        return self.acks_mismatched == 0 and self.acks_matched == self.frames


class Sender:
    """One connection with a single continuous keystream across all sends."""

    def __init__(self, host: str, port: int, key, design, frame_size: int = DEFAULT_FRAME,
                 timeout: float | None = 60.0):
        if not 1 <= frame_size <= MAX_PAYLOAD:
            raise ValueError(f"frame_size must be in [1, {MAX_PAYLOAD}]")
        self.design = Design.parse(design)
        self.frame_size = frame_size
        self.summary = TransferSummary()
        self._stream = open_keystream(self.design, key)
        self._seq = 0
        try:
            self._sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise TransferError(f"cannot connect to {host}:{port}: {exc}", self.summary) from exc

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def close(self) -> None:
        self._sock.close()

    def send_frame(self, plain: bytes) -> None:
        summ = self.summary
        frame = Frame(self.design.value, self._seq, xor_cipher(plain, self._stream.read(len(plain))))
        try:
            self._sock.sendall(frame.encode())
            ack = read_frame(self._sock)
        except (OSError, ProtocolError) as exc:
            raise TransferError(f"frame {self._seq} failed: {exc}", summ) from exc
        if ack is None:
            raise TransferError(f"peer closed before acknowledging frame {self._seq}", summ)
        if ack.seq != self._seq or ack.length != 4:
            raise TransferError(f"malformed ack for frame {self._seq}", summ)
        summ.frames += 1
        summ.bytes += len(plain)
        if struct.unpack(">I", ack.payload)[0] == checksum(plain):
            summ.acks_matched += 1
        else:
            summ.acks_mismatched += 1
        self._seq += 1

    def send(self, data: bytes) -> TransferSummary:
        view = memoryview(data)
        for off in range(0, len(view), self.frame_size):
            self.send_frame(bytes(view[off:off + self.frame_size]))
        return self.summary

    def send_stream(self, fileobj: BinaryIO) -> TransferSummary:
        while True:
            chunk = fileobj.read(self.frame_size)
            if not chunk:
                return self.summary
            self.send_frame(chunk)


def send(host: str, port: int, key, design, stream: BinaryIO,
         frame_size: int = DEFAULT_FRAME) -> TransferSummary:
    with Sender(host, port, key, design, frame_size=frame_size) as tx:
        return tx.send_stream(stream)
