"""Shared fixtures: a calibrated board and drift-free bench variants."""

import dataclasses

import pytest

from solartwin.chamber import DriftParams
from solartwin.config import TwinConfig
from solartwin.lightboard import default_board
from solartwin.system import Testbed

NO_DRIFT = DriftParams(warmup_amplitude=0.0, warmup_tau_s=300.0,
                       random_walk_per_sqrt_h=0.0, aging_per_kh=0.0)


@pytest.fixture(scope="session")
def board():
    return default_board()


@pytest.fixture()
def bench():
    """Factory for benches; call with keyword overrides of TwinConfig."""
    def make(**overrides) -> Testbed:
        config = dataclasses.replace(TwinConfig(), **overrides)
        return Testbed(config)
    return make


@pytest.fixture()
def quiet_bench(bench):
    """Bench with output drift switched off; sensor noise stays on."""
    return bench(drift=NO_DRIFT)
