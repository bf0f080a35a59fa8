"""Python access to the levcool feedback-cooling simulator."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ._levcool import (
    SimulationFault,
    ValidationError,
    __version__,
    pll_limits,
    pll_optimum,
    vd_optimum,
    vd_temperature,
    welch_psd,
)
from ._levcool import run_json as _run_json

__all__ = [
    "RunResult",
    "SimulationFault",
    "ValidationError",
    "__version__",
    "pll_limits",
    "pll_optimum",
    "run",
    "vd_optimum",
    "vd_temperature",
    "welch_psd",
]


@dataclass
class RunResult:
    summary: dict[str, Any]
    freq_hz: np.ndarray
    psd_x: np.ndarray
    psd_measured: np.ndarray
    trace: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def temperature(self) -> float:
        """Full (position and momentum) CoM temperature in kelvin."""
        return self.summary["temperature"]["T_full"]


def run(config: dict[str, Any], keep_trace: bool = True) -> RunResult:
    """Simulate one run described by a config dictionary."""
    raw = _run_json(json.dumps(config), keep_trace)
    return RunResult(
        summary=json.loads(raw["summary"]),
        freq_hz=raw["freq_hz"],
        psd_x=raw["psd_x"],
        psd_measured=raw["psd_measured"],
        trace=dict(raw.get("trace", {})),
    )
