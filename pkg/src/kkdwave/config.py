"""Experiment configuration and its flat TOML file form."""
from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ParameterError
from .noise_gen import BandSpec

MODES = ("analytic", "probe")


@dataclass(frozen=True)
class ExperimentConfig:
    """Every knob of a harness run.  Config files use these field names as keys."""

    r_low: float = 1_000.0
    r_high: float = 10_000.0
    z0: float = 50.0
    losses_db: tuple = (0.01, 0.1, 1.0)
    sample_rate: float = 50_000.0
    f_low: float = 500.0
    f_high: float = 5_500.0
    averaging_times: tuple = (1, 2, 5, 10, 20, 50, 100)
    trials: int = 100_000
    seed: int = 0
    mode: str = "analytic"
    workers: int = 1
    # probe-in-loop stream length per simulated block
    block_samples: int = 2**20
    # llr-hist: pairs per statistic and histogram resolution
    hist_pairs: int = 20
    hist_bins: int = 60
    # probe-validate: wire-resistance leakage injected into the dv/dx fixture
    probe_dc_leakage: float = 5e-5
    # cov-check: samples per simulated exchange
    covariance_pairs: int = 2**20

    def __post_init__(self):
        object.__setattr__(self, "losses_db", tuple(float(x) for x in self.losses_db))
        object.__setattr__(self, "averaging_times", tuple(int(x) for x in self.averaging_times))
        if not 0 < self.r_low < self.r_high:
            raise ParameterError(f"need 0 < r_low < r_high, got {self.r_low}, {self.r_high}")
        if not self.z0 > 0:
            raise ParameterError("z0 must be positive")
        if not self.losses_db or any(not (x >= 0 and math.isfinite(x)) for x in self.losses_db):
            raise ParameterError(f"losses_db must be non-empty and non-negative, got {self.losses_db}")
        if not self.averaging_times or min(self.averaging_times) < 1:
            raise ParameterError("averaging_times must be non-empty positive integers")
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}, got {self.mode!r}")
        for name in ("trials", "workers", "block_samples", "hist_pairs", "hist_bins", "covariance_pairs"):
            if int(getattr(self, name)) < 1:
                raise ParameterError(f"{name} must be >= 1")
        if self.seed < 0:
            raise ParameterError("seed must be a non-negative integer")
        self.band  # validates the band edges

    @property
    def band(self) -> BandSpec:
        return BandSpec(self.sample_rate, self.f_low, self.f_high, self.block_samples)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["losses_db"] = list(self.losses_db)
        d["averaging_times"] = list(self.averaging_times)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ParameterError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ParameterError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    """Read a flat TOML file of ``ExperimentConfig`` fields."""
    try:
        with open(Path(path), "rb") as fh:
            data = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ParameterError(f"cannot read config {path}: {exc}") from exc
    nested = [k for k, v in data.items() if isinstance(v, dict)]
    if nested:
        raise ParameterError(f"config must be flat; tables found: {', '.join(nested)}")
    return ExperimentConfig.from_dict(data)
