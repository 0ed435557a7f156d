"""Network and pipe transports for the SCPI front end.

The TCP server accepts any number of connections on the conventional
SCPI-raw port; every received line executes atomically against the shared
bench (the Instrument's lock serializes lines), and each connection gets its
own responses back in order.  The stdio transport runs the same line
discipline over stdin/stdout for shell pipelines.
"""

from __future__ import annotations

import socket
import socketserver
import sys

from .dispatch import Instrument
from .parser import MAX_LINE_BYTES

DEFAULT_PORT = 5025


class _Connection(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        instrument: Instrument = self.server.instrument  # type: ignore[attr-defined]
        buffer = b""
        while True:
            try:
                chunk = self.request.recv(4096)
            except (ConnectionResetError, OSError):
                return
            if not chunk:
                return  # client went away; partial line is discarded
            buffer += chunk
            while b"\n" in buffer:
                raw, _, buffer = buffer.partition(b"\n")
                line = raw.decode("utf-8", errors="replace")
                response = instrument.execute_line(line)
                if response is not None:
                    try:
                        self.request.sendall(response.encode() + b"\n")
                    except (BrokenPipeError, OSError):
                        return
            if len(buffer) > MAX_LINE_BYTES:
                # Pathological client; drop the oversized fragment.
                instrument.execute_line(buffer.decode("utf-8",
                                                      errors="replace"))
                buffer = b""


class ScpiServer(socketserver.ThreadingTCPServer):
    """Threaded listener bound to one Instrument."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, instrument: Instrument, host: str = "127.0.0.1",
                 port: int = DEFAULT_PORT):
        self.instrument = instrument
        super().__init__((host, port), _Connection)

    @property
    def bound_port(self) -> int:
        return self.server_address[1]


def serve(instrument: Instrument, host: str = "127.0.0.1",
          port: int = DEFAULT_PORT, ready_callback=None) -> None:
    """Run the TCP service until interrupted."""
    with ScpiServer(instrument, host, port) as server:
        if ready_callback is not None:
            ready_callback(server.bound_port)
        try:
            server.serve_forever(poll_interval=0.1)
        except KeyboardInterrupt:
            pass


def serve_stdio(instrument: Instrument, stdin=None, stdout=None) -> None:
    """Run the line protocol over a pipe pair until EOF."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        response = instrument.execute_line(line)
        if response is not None:
            stdout.write(response + "\n")
            stdout.flush()


def request(host: str, port: int, lines: list[str],
            timeout_s: float = 5.0) -> list[str]:
    """Tiny test/CLI helper: send lines, collect one response per query."""
    expected = sum(1 for line in lines if "?" in line)
    responses: list[str] = []
    with socket.create_connection((host, port), timeout=timeout_s) as sock:
        payload = "".join(line.rstrip("\n") + "\n" for line in lines)
        sock.sendall(payload.encode())
        buffer = b""
        while len(responses) < expected:
            chunk = sock.recv(4096)
            if not chunk:
                break
            buffer += chunk
            while b"\n" in buffer:
                raw, _, buffer = buffer.partition(b"\n")
                responses.append(raw.decode())
    return responses
