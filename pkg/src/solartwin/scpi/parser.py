"""Line parser for the instrument's SCPI-99 dialect.

A program line is one or more message units separated by ';'.  Each unit is
either a common command ('*' prefix) or a hierarchical header of
colon-separated mnemonics, optionally suffixed with '?' for a query and
followed by whitespace plus comma-separated arguments.

Path sharing: a unit without a leading ':' reuses the previous unit's
header, its own segments replacing as many trailing segments as it brings.
So after SOUR:CHAN3:INT the unit "CHAN4:INT?" resolves to SOUR:CHAN4:INT
and the unit "INT?" to SOUR:CHAN3:INT?, while after SYST:TIME:ADV the unit
"SCAL 2" resolves to SYST:TIME:SCAL.  A leading ':' makes a unit absolute;
common commands ('*') execute in place and never touch the shared path.

The parser knows no vocabulary: mnemonics are validated by the dispatcher,
which is where "Undefined header" originates.  Here only the grammar can
fail, and a malformed unit becomes an error entry in the returned list so
the remaining units still execute, as the error-queue contract requires.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

MAX_LINE_BYTES = 4096

_SEGMENT_RE = re.compile(r"^(\*?[A-Za-z]+)([0-9]+)?$")
_NUMBER_RE = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


class ScpiError(Exception):
    """A queueable instrument error: negative code plus short message."""

    def __init__(self, code: int, message: str):
        super().__init__(f"{code},{message}")
        self.code = code
        self.message = message

    def __eq__(self, other) -> bool:
        return (isinstance(other, ScpiError)
                and (self.code, self.message) == (other.code, other.message))

    def __hash__(self) -> int:
        return hash((self.code, self.message))


def undefined_header(detail: str = "") -> ScpiError:
    msg = "Undefined header" + (f";{detail}" if detail else "")
    return ScpiError(-113, msg)


def data_type_error(detail: str = "") -> ScpiError:
    msg = "Data type error" + (f";{detail}" if detail else "")
    return ScpiError(-104, msg)


def out_of_range(detail: str = "") -> ScpiError:
    msg = "Data out of range" + (f";{detail}" if detail else "")
    return ScpiError(-222, msg)


@dataclass(frozen=True)
class ScpiCommand:
    """One parsed message unit.

    ``segments`` holds the mnemonics exactly as written but upper-cased;
    ``suffixes`` aligns with segments (None where no trailing digits).
    Arguments are floats where they parse as NR3 numbers, bare upper-cased
    tokens otherwise.
    """

    segments: tuple[str, ...]
    suffixes: tuple[int | None, ...] = ()
    is_query: bool = False
    args: tuple[float | str, ...] = ()
    is_common: bool = field(default=False)

    def __post_init__(self) -> None:
        if not self.segments:
            raise ValueError("a command needs at least one header segment")
        if len(self.suffixes) != len(self.segments):
            object.__setattr__(
                self, "suffixes", tuple([None] * len(self.segments)))


def _parse_args(text: str) -> tuple[float | str, ...]:
    args: list[float | str] = []
    for raw in text.split(","):
        token = raw.strip()
        if not token:
            raise data_type_error("empty argument")
        if _NUMBER_RE.match(token):
            args.append(float(token))
        elif re.fullmatch(r"[A-Za-z][A-Za-z0-9_]*", token):
            args.append(token.upper())
        elif (len(token) >= 2 and token[0] == token[-1]
              and token[0] in "'\""):
            args.append(token[1:-1])
        else:
            raise data_type_error(f"cannot parse argument {token!r}")
    return tuple(args)


_Header = tuple[tuple[str, int | None], ...]


def _parse_unit(unit: str, previous: _Header,
                ) -> tuple[ScpiCommand, _Header]:
    """Parse one message unit; returns the command and the next shared
    header."""
    unit = unit.strip()
    if not unit:
        raise undefined_header("empty message unit")

    head, sep, tail = unit.partition(" ")
    if "\t" in head:
        head, _, rest = head.partition("\t")
        tail = rest + sep + tail
    head = head.strip()

    is_query = head.endswith("?")
    if is_query:
        head = head[:-1]
    if not head:
        raise undefined_header("missing header")

    if head.startswith("*"):
        m = _SEGMENT_RE.match(head)
        if m is None or m.group(2) is not None:
            raise undefined_header(f"bad common command {head!r}")
        cmd = ScpiCommand(segments=(head.upper(),), suffixes=(None,),
                          is_query=is_query,
                          args=_parse_args(tail) if tail.strip() else (),
                          is_common=True)
        return cmd, previous  # commons leave the shared path alone

    absolute = head.startswith(":")
    if absolute:
        head = head[1:]
    pairs: list[tuple[str, int | None]] = []
    for part in head.split(":"):
        m = _SEGMENT_RE.match(part)
        if m is None or part.startswith("*"):
            raise undefined_header(f"bad mnemonic {part!r}")
        pairs.append((m.group(1).upper(),
                      int(m.group(2)) if m.group(2) else None))

    if not absolute and previous:
        # The unit's own segments replace the same number of trailing
        # segments of the previous header.
        keep = max(len(previous) - len(pairs), 0)
        pairs = list(previous[:keep]) + pairs

    cmd = ScpiCommand(segments=tuple(p[0] for p in pairs),
                      suffixes=tuple(p[1] for p in pairs),
                      is_query=is_query,
                      args=_parse_args(tail) if tail.strip() else ())
    return cmd, tuple(pairs)


def parse(line: str) -> list[ScpiCommand | ScpiError]:
    """Split a program line into commands, grammar errors kept in place."""
    if len(line.encode("utf-8", errors="replace")) > MAX_LINE_BYTES:
        return [ScpiError(-363, "Input buffer overrun")]
    line = line.rstrip("\r\n")
    if not line.strip():
        return []
    results: list[ScpiCommand | ScpiError] = []
    previous: _Header = ()
    for unit in _split_units(line):
        try:
            cmd, previous = _parse_unit(unit, previous)
            results.append(cmd)
        except ScpiError as err:
            results.append(err)
    return results


def _split_units(line: str) -> list[str]:
    """Split on ';' outside quoted strings."""
    units: list[str] = []
    depth_quote: str | None = None
    start = 0
    for i, ch in enumerate(line):
        if depth_quote is not None:
            if ch == depth_quote:
                depth_quote = None
        elif ch in "'\"":
            depth_quote = ch
        elif ch == ";":
            units.append(line[start:i])
            start = i + 1
    units.append(line[start:])
    return units


def _format_number(value: float) -> str:
    if value == int(value) and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def format_command(cmd: ScpiCommand) -> str:
    """Canonical absolute text of one command (reparses to itself)."""
    parts = []
    for seg, suffix in zip(cmd.segments, cmd.suffixes):
        parts.append(seg + (str(suffix) if suffix is not None else ""))
    text = ":".join(parts)
    if not cmd.is_common:
        text = ":" + text
    if cmd.is_query:
        text += "?"
    if cmd.args:
        rendered = [
            _format_number(a) if isinstance(a, float) else str(a)
            for a in cmd.args
        ]
        text += " " + ",".join(rendered)
    return text


def format_line(commands: list[ScpiCommand]) -> str:
    """One program line carrying the given commands, all absolute."""
    return ";".join(format_command(c) for c in commands)
