"""Scripting client for the solar-testbed SCPI interface."""

from .session import Identity, ScpiError, SessionError, TestbedSession

__version__ = "0.1.0"

__all__ = ["Identity", "ScpiError", "SessionError", "TestbedSession",
           "__version__"]
