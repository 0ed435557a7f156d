"""Blocking SCPI session for the solar testbed.

The session owns one TCP connection and performs one wire exchange at a
time. Typed wrappers cover the everyday command set; ``command`` and
``query`` take raw program lines for anything else. No physics happens
here: the class is transport plus response parsing, nothing more.
"""

from __future__ import annotations

import socket
import threading
from dataclasses import dataclass


class SessionError(Exception):
    """Client-side misuse or transport failure (closed, busy, timeout)."""


class ScpiError(Exception):
    """Error reported by the instrument's SYST:ERR? queue."""

    def __init__(self, code: int, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


@dataclass(frozen=True)
class Identity:
    vendor: str
    model: str
    serial: str
    version: str


class TestbedSession:
    """One synchronous control connection to a testbed instrument.

    ``check_errors=True`` makes every setter drain SYST:ERR? afterwards
    and raise :class:`ScpiError` if the instrument rejected the command;
    with ``False`` each wrapper sends exactly one program line.
    """

    def __init__(self, address: str = "127.0.0.1", port: int = 5025,
                 timeout_s: float = 5.0, check_errors: bool = True):
        self.address = address
        self.port = port
        self.timeout_s = timeout_s
        self.check_errors = check_errors
        self._sock: socket.socket | None = None
        self._reader = None
        # misuse tripwire: one in-flight exchange per session
        self._gate = threading.Lock()

    # -- lifecycle -----------------------------------------------------

    @property
    def is_open(self) -> bool:
        return self._sock is not None

    def connect(self) -> "TestbedSession":
        if self.is_open:
            raise SessionError("session already open")
        try:
            self._sock = socket.create_connection(
                (self.address, self.port), timeout=self.timeout_s)
        except OSError as exc:
            raise SessionError(
                f"cannot connect to {self.address}:{self.port}: {exc}"
            ) from exc
        self._reader = self._sock.makefile("r", encoding="ascii",
                                           newline="\n")
        return self

    def close(self) -> None:
        if self._sock is None:
            return
        try:
            self._reader.close()
        except OSError:
            pass
        try:
            self._sock.close()
        except OSError:
            pass
        self._sock = None
        self._reader = None

    def __enter__(self) -> "TestbedSession":
        if not self.is_open:
            self.connect()
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    # -- wire primitives -------------------------------------------------

    def _exchange(self, line: str, expect_reply: bool) -> str | None:
        if not self.is_open:
            raise SessionError("session is not open")
        if not self._gate.acquire(blocking=False):
            raise SessionError("another command is in flight on this session")
        try:
            try:
                self._sock.sendall(line.encode("ascii") + b"\n")
            except OSError as exc:
                raise SessionError(f"send failed: {exc}") from exc
            if not expect_reply:
                return None
            try:
                reply = self._reader.readline()
            except OSError as exc:
                raise SessionError(
                    f"no reply to {line!r}: {exc}") from exc
            if not reply:
                raise SessionError("connection closed by instrument")
            return reply.rstrip("\n")
        finally:
            self._gate.release()

    def command(self, line: str) -> None:
        """Send one program line that produces no response."""
        self._exchange(line, expect_reply=False)
        if self.check_errors:
            code, message = self.get_error()
            if code != 0:
                raise ScpiError(code, message)

    def query(self, line: str) -> str:
        """Send one program line and return the single response line."""
        reply = self._exchange(line, expect_reply=True)
        return reply

    # -- typed wrappers ----------------------------------------------------

    def identify(self) -> Identity:
        fields = self.query("*IDN?").split(",")
        if len(fields) != 4:
            raise SessionError(f"malformed identity: {fields!r}")
        return Identity(*fields)

    def set_channel(self, channel: int, percent: float) -> None:
        self.command(f"SOUR:CHAN{int(channel)}:INT {float(percent)!r}")

    def set_irradiance(self, w_m2: float) -> None:
        self.command(f"SOUR:SPEC:IRR {float(w_m2)!r}")

    def set_feedback(self, enabled: bool) -> None:
        self.command(f"SOUR:CTRL:FEED {'ON' if enabled else 'OFF'}")

    def read_spectrum(self) -> list[float]:
        values = [float(v) for v in self.query("MEAS:SPEC?").split(",")]
        if len(values) != 18:
            raise SessionError(f"expected 18 spectrum points, "
                               f"got {len(values)}")
        return values

    def read_illuminance(self, sensor_range: str = "HIGH") -> float:
        token = sensor_range.upper()
        if token not in ("LOW", "HIGH"):
            raise ValueError("sensor range must be LOW or HIGH")
        return float(self.query(f"MEAS:ILL? {token}"))

    def read_dut_current(self) -> float:
        return float(self.query("MEAS:DUT:CURR?"))

    def set_dut_temp(self, celsius: float) -> None:
        self.command(f"SYST:DUT:TEMP {float(celsius)!r}")

    def advance_time(self, seconds: float) -> None:
        self.command(f"SYST:TIME:ADV {float(seconds)!r}")

    def get_error(self) -> tuple[int, str]:
        """Pop one entry from the instrument error queue."""
        reply = self.query("SYST:ERR?")
        code_text, _, rest = reply.partition(",")
        try:
            code = int(code_text)
        except ValueError as exc:
            raise SessionError(f"malformed error entry {reply!r}") from exc
        return code, rest.strip().strip('"')
