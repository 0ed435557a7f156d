"""Command tree and execution against one simulated bench.

``Instrument`` owns a Testbed plus the SCPI error queue and turns parsed
commands into state changes and response fragments.  Mnemonic matching
accepts exactly the short or the long form of each node, case-insensitively;
anything else is an undefined header.  Errors never close the wire: they are
queued (FIFO, 16 deep, overflow replaces the newest entry with -350) and the
rest of the line still executes.

Beyond the core command set the tree carries three extensions a scripted
measurement campaign needs: SYSTem:DUT:POSition moves the cell across the
test plane, MEASure:SPECtrum:BINS? reports the six graded band irradiances
computed from the current spectrometer reading, and *CLS empties the error
queue.
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

from .. import __version__
from ..chamber import TargetOutOfRange
from ..fitting import Unachievable
from ..lightboard import DutyOutOfRange
from ..system import (SettingsConflict, TARGET_AM15G, TARGET_CUSTOM, Testbed)
from .parser import (ScpiCommand, ScpiError, data_type_error, out_of_range,
                     parse, undefined_header)

IDENTITY_VENDOR = "ETHZ-PBL"
IDENTITY_MODEL = "SOLARTB-SIM"

ERROR_QUEUE_CAPACITY = 16


def _fmt(value: float) -> str:
    """Shortest decimal that round-trips through float()."""
    return repr(float(value))


def _enum(token: str, *forms: tuple[str, str]) -> str:
    """Match an argument token against (short, long) enum spellings."""
    up = token.upper()
    for short, long in forms:
        if up in (short, long):
            return short
    raise data_type_error(f"expected one of "
                          f"{'|'.join(f[0] for f in forms)}, got {token!r}")


def _as_float(args: tuple, index: int = 0) -> float:
    if len(args) <= index or not isinstance(args[index], float):
        raise data_type_error("numeric argument required")
    return args[index]


def _require_args(args: tuple, count: int) -> None:
    if len(args) != count:
        raise data_type_error(f"expected {count} argument(s), got {len(args)}")


@dataclass
class _Node:
    """One level of the command tree."""

    short: str
    long: str
    handler: Callable | None = None
    takes_suffix: bool = False
    children: dict[str, "_Node"] = field(default_factory=dict)

    def matches(self, mnemonic: str) -> bool:
        return mnemonic in (self.short, self.long)

    def child(self, mnemonic: str) -> "_Node | None":
        for node in self.children.values():
            if node.matches(mnemonic):
                return node
        return None

    def add(self, node: "_Node") -> "_Node":
        self.children[node.short] = node
        return node


class Instrument:
    """One SCPI endpoint wrapping a Testbed.

    ``execute_line`` is the single entry point; a lock makes each program
    line atomic against the shared bench state, so transports only need to
    deliver whole lines.
    """

    def __init__(self, system: Testbed | None = None):
        self.system = system if system is not None else Testbed()
        self.errors: deque[ScpiError] = deque()
        self._lock = threading.Lock()
        self._root = self._build_tree()

    # -- error queue -------------------------------------------------------

    def push_error(self, err: ScpiError) -> None:
        if len(self.errors) >= ERROR_QUEUE_CAPACITY:
            self.errors.pop()  # newest slot becomes the overflow marker
            self.errors.append(ScpiError(-350, "Queue overflow"))
        else:
            self.errors.append(err)

    def pop_error(self) -> str:
        if self.errors:
            err = self.errors.popleft()
            return f'{err.code},"{err.message}"'
        return '0,"No error"'

    # -- execution ---------------------------------------------------------

    def execute_line(self, line: str) -> str | None:
        """Run one program line; returns the joined query responses."""
        with self._lock:
            fragments: list[str] = []
            for item in parse(line):
                if isinstance(item, ScpiError):
                    self.push_error(item)
                    continue
                try:
                    response = self._dispatch(item)
                except ScpiError as err:
                    self.push_error(err)
                    continue
                except DutyOutOfRange as exc:
                    self.push_error(out_of_range(str(exc)))
                    continue
                except (TargetOutOfRange, Unachievable) as exc:
                    self.push_error(out_of_range(str(exc)))
                    continue
                except (SettingsConflict, IndexError, ValueError) as exc:
                    self.push_error(out_of_range(str(exc)))
                    continue
                if response is not None:
                    fragments.append(response)
            return ";".join(fragments) if fragments else None

    def _dispatch(self, cmd: ScpiCommand) -> str | None:
        if cmd.is_common:
            return self._dispatch_common(cmd)
        node = self._root
        suffixes: list[int] = []
        for segment, suffix in zip(cmd.segments, cmd.suffixes):
            nxt = node.child(segment)
            if nxt is None:
                raise undefined_header(":".join(cmd.segments))
            if suffix is not None and not nxt.takes_suffix:
                raise undefined_header(
                    f"{segment}{suffix} takes no numeric suffix")
            if nxt.takes_suffix:
                suffixes.append(suffix if suffix is not None else 1)
            node = nxt
        if node.handler is None:
            raise undefined_header(":".join(cmd.segments))
        return node.handler(suffixes, cmd.args, cmd.is_query)

    def _dispatch_common(self, cmd: ScpiCommand) -> str | None:
        name = cmd.segments[0]
        if name == "*IDN" and cmd.is_query:
            return f"{IDENTITY_VENDOR},{IDENTITY_MODEL},0,{__version__}"
        if name == "*RST" and not cmd.is_query:
            # Power-on state of the deployed configuration, startup seed
            # included; the error queue survives (only *CLS clears it).
            self.system.reset(seed=self.system.config.seed)
            return None
        if name == "*OPC" and cmd.is_query:
            return "1"
        if name == "*CLS" and not cmd.is_query:
            self.errors.clear()
            return None
        raise undefined_header(name + ("?" if cmd.is_query else ""))

    # -- tree construction ---------------------------------------------

    def _build_tree(self) -> _Node:
        root = _Node("", "")
        sour = root.add(_Node("SOUR", "SOURCE"))
        chan = sour.add(_Node("CHAN", "CHANNEL", takes_suffix=True))
        chan.add(_Node("INT", "INTENSITY", handler=self._h_channel_intensity))
        spec = sour.add(_Node("SPEC", "SPECTRUM"))
        spec.add(_Node("TARG", "TARGET", handler=self._h_spectrum_target))
        spec.add(_Node("IRR", "IRRADIANCE", handler=self._h_irradiance))
        ctrl = sour.add(_Node("CTRL", "CONTROL"))
        ctrl.add(_Node("FEED", "FEEDBACK", handler=self._h_feedback))

        meas = root.add(_Node("MEAS", "MEASURE"))
        mspec = meas.add(_Node("SPEC", "SPECTRUM",
                               handler=self._h_meas_spectrum))
        mspec.add(_Node("BINS", "BINS", handler=self._h_meas_bins))
        meas.add(_Node("ILL", "ILLUMINANCE", handler=self._h_meas_lux))
        mdut = meas.add(_Node("DUT", "DUT"))
        mdut.add(_Node("CURR", "CURRENT", handler=self._h_meas_current))
        mdut.add(_Node("TEMP", "TEMPERATURE", handler=self._h_meas_temp))

        syst = root.add(_Node("SYST", "SYSTEM"))
        sdut = syst.add(_Node("DUT", "DUT"))
        sdut.add(_Node("TEMP", "TEMPERATURE", handler=self._h_dut_temp))
        sdut.add(_Node("POS", "POSITION", handler=self._h_dut_position))
        time = syst.add(_Node("TIME", "TIME"))
        time.add(_Node("ADV", "ADVANCE", handler=self._h_time_advance))
        time.add(_Node("SCAL", "SCALE", handler=self._h_time_scale))
        syst.add(_Node("DOOR", "DOOR", handler=self._h_door))
        syst.add(_Node("ERR", "ERROR", handler=self._h_error))
        syst.add(_Node("SEED", "SEED", handler=self._h_seed))
        return root

    # -- handlers ----------------------------------------------------------

    def _h_channel_intensity(self, suffixes, args, is_query):
        channel = suffixes[0]
        if not (1 <= channel <= len(self.system.channels)):
            raise out_of_range(f"channel {channel} not fitted")
        if is_query:
            _require_args(args, 0)
            return _fmt(self.system.get_channel_percent(channel))
        _require_args(args, 1)
        self.system.set_channel_percent(channel, _as_float(args))
        return None

    def _h_spectrum_target(self, suffixes, args, is_query):
        if is_query:
            _require_args(args, 0)
            return self.system.target
        _require_args(args, 1)
        if not isinstance(args[0], str):
            raise data_type_error("target name required")
        token = _enum(args[0], (TARGET_AM15G, TARGET_AM15G),
                      (TARGET_CUSTOM, "CUSTOM"))
        self.system.set_target(token)
        return None

    def _h_irradiance(self, suffixes, args, is_query):
        if is_query:
            _require_args(args, 0)
            level = self.system.requested_level
            return _fmt(level if level is not None else 0.0)
        _require_args(args, 1)
        self.system.set_irradiance(_as_float(args))
        return None

    def _h_feedback(self, suffixes, args, is_query):
        if is_query:
            _require_args(args, 0)
            return "1" if self.system.feedback_enabled else "0"
        _require_args(args, 1)
        if isinstance(args[0], float):
            if args[0] not in (0.0, 1.0):
                raise data_type_error("boolean must be 0 or 1")
            self.system.set_feedback(bool(args[0]))
            return None
        token = _enum(args[0], ("ON", "ON"), ("OFF", "OFF"))
        self.system.set_feedback(token == "ON")
        return None

    def _h_meas_spectrum(self, suffixes, args, is_query):
        if not is_query:
            raise undefined_header("MEAS:SPEC is query-only")
        _require_args(args, 0)
        reading = self.system.measure_spectrum()
        return ",".join(_fmt(v) for v in reading)

    def _h_meas_bins(self, suffixes, args, is_query):
        if not is_query:
            raise undefined_header("MEAS:SPEC:BINS is query-only")
        _require_args(args, 0)
        bins = self.system.measure_bin_irradiances()
        return ",".join(_fmt(v) for v in bins)

    def _h_meas_lux(self, suffixes, args, is_query):
        if not is_query:
            raise undefined_header("MEAS:ILL is query-only")
        _require_args(args, 1)
        if not isinstance(args[0], str):
            raise data_type_error("range name required")
        token = _enum(args[0], ("LOW", "LOW"), ("HIGH", "HIGH"))
        return _fmt(self.system.measure_illuminance(token).wire_value)

    def _h_meas_current(self, suffixes, args, is_query):
        if not is_query:
            raise undefined_header("MEAS:DUT:CURR is query-only")
        _require_args(args, 0)
        return _fmt(self.system.measure_dut_current())

    def _h_meas_temp(self, suffixes, args, is_query):
        if not is_query:
            raise undefined_header("MEAS:DUT:TEMP is query-only")
        _require_args(args, 0)
        return _fmt(self.system.measure_dut_temperature())

    def _h_dut_temp(self, suffixes, args, is_query):
        if is_query:
            _require_args(args, 0)
            return _fmt(self.system.peltier.setpoint_c)
        _require_args(args, 1)
        self.system.set_dut_temperature(_as_float(args))
        return None

    def _h_dut_position(self, suffixes, args, is_query):
        if is_query:
            _require_args(args, 0)
            x, y = self.system.dut_pos_mm
            return f"{_fmt(x)},{_fmt(y)}"
        _require_args(args, 2)
        x, y = _as_float(args, 0), _as_float(args, 1)
        geom = self.system.config.geometry
        if abs(x) > geom.width_mm / 2 or abs(y) > geom.depth_mm / 2:
            raise out_of_range("position outside the test plane")
        self.system.set_dut_position(x, y)
        return None

    def _h_time_advance(self, suffixes, args, is_query):
        if is_query:
            raise undefined_header("SYST:TIME:ADV is set-only")
        _require_args(args, 1)
        seconds = _as_float(args)
        if seconds <= 0:
            raise out_of_range("advance must be positive")
        self.system.advance(seconds * self.system.clock.scale)
        return None

    def _h_time_scale(self, suffixes, args, is_query):
        if is_query:
            _require_args(args, 0)
            return _fmt(self.system.clock.scale)
        _require_args(args, 1)
        self.system.set_time_scale(_as_float(args))
        return None

    def _h_door(self, suffixes, args, is_query):
        if is_query:
            _require_args(args, 0)
            return "OPEN" if self.system.door_open else "CLOS"
        _require_args(args, 1)
        if not isinstance(args[0], str):
            raise data_type_error("door state required")
        token = _enum(args[0], ("OPEN", "OPEN"), ("CLOS", "CLOSED"))
        self.system.set_door(token == "OPEN")
        return None

    def _h_error(self, suffixes, args, is_query):
        if not is_query:
            raise undefined_header("SYST:ERR is query-only")
        _require_args(args, 0)
        return self.pop_error()

    def _h_seed(self, suffixes, args, is_query):
        if is_query:
            _require_args(args, 0)
            return str(self.system.seed)
        _require_args(args, 1)
        value = _as_float(args)
        if value != int(value) or not (0 <= int(value) < 2 ** 64):
            raise out_of_range("seed must be an unsigned 64-bit integer")
        self.system.reseed(int(value))
        return None
