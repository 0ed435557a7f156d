"""SCPI front end: grammar, dispatcher, and transports."""

from .dispatch import Instrument
from .parser import (ScpiCommand, ScpiError, format_command, format_line,
                     parse)
from .server import DEFAULT_PORT, ScpiServer, serve, serve_stdio

__all__ = [
    "DEFAULT_PORT",
    "Instrument",
    "ScpiCommand",
    "ScpiError",
    "ScpiServer",
    "format_command",
    "format_line",
    "parse",
    "serve",
    "serve_stdio",
]
