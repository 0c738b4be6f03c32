"""Run configuration: INI sections whose values are JSON literals.

Complex numbers are two-element arrays ``[re, im]``.  Example::

    [surface]
    circumradius = 1.0
    target_edge_length = 0.05
    cone_grading = 1.0
    cutoff_radius = null

    [family]
    name = "zero_degree"
    c = [1, 0]
    k = [4, 0]

    [parameters]
    hbar = [1, 0]
    R = 0.5

    [solver]
    tolerance = 1e-10
    max_iter = 50

    [limit]
    R_list = [1, 0.5, 0.25, 0.125, 0.0625]

    [sweep]
    hbar = [[1, 0]]
    R = [0.1, 0.5]

    [output]
    directory = "out"
"""
from __future__ import annotations

import configparser
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

from .higgs import HITCHIN, ZERO_DEGREE, HiggsData, Parameters, admissible

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_complex", "CHECKS"]

CHECKS = (
    "mesh", "convergence", "exact", "curvature", "rescale", "flatness", "relation",
    "determinant", "limit", "beltrami", "sinh_gordon", "extension", "transversality",
    "teichmuller", "reality",
)


class ConfigError(ValueError):
    """Malformed or inadmissible configuration."""


def parse_complex(v) -> complex:
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2 and all(isinstance(x, (int, float)) for x in v):
        return complex(float(v[0]), float(v[1]))
    raise ConfigError(f"expected a complex number as [re, im], got {v!r}")


def _real(v, name: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{name}: expected a real number, got {v!r}")
    return float(v)


@dataclass
class RunConfig:
    circumradius: float = 1.0
    target_edge_length: float = 0.05
    cone_grading: float = 1.0
    cutoff_radius: float | None = None
    family: str = HITCHIN
    c: complex = 1.0
    k: complex = 1.0
    hbar: complex = 1.0
    R: float = 1.0
    tolerance: float = 1e-10
    max_iter: int = 50
    R_list: list[float] = field(default_factory=lambda: [1.0, 0.5, 0.25, 0.125, 0.0625])
    sweep_hbar: list[complex] = field(default_factory=list)
    sweep_R: list[float] = field(default_factory=list)
    output: str = "out"
    checks: tuple[str, ...] = CHECKS

    # ------------------------------------------------------------------
    @property
    def data(self) -> HiggsData:
        if self.family == HITCHIN:
            return HiggsData.hitchin(self.c)
        return HiggsData.zero_degree(self.k, self.c)

    @property
    def params(self) -> Parameters:
        return Parameters(self.hbar, self.R)

    def edge_length(self, mesh_level: int = 0) -> float:
        return self.target_edge_length / 2.0**mesh_level

    def grid(self) -> list[tuple[int, complex, float]]:
        """Sweep grid in deterministic (hbar-major) index order."""
        return [(i, hb, R) for i, (hb, R) in enumerate(itertools.product(self.sweep_hbar, self.sweep_R))]

    def validate(self, sweep: bool = False) -> "RunConfig":
        if not self.circumradius > 0:
            raise ConfigError("circumradius must be positive")
        side = 2.0 * self.circumradius * 0.3826834323650898  # sin(pi/8)
        if not 0 < self.target_edge_length < side:
            raise ConfigError("target_edge_length must lie in (0, polygon side)")
        if not 0 < self.cone_grading <= 1:
            raise ConfigError("cone_grading must lie in (0, 1]")
        if self.family not in (HITCHIN, ZERO_DEGREE):
            raise ConfigError(f"unknown family {self.family!r}")
        if self.family == ZERO_DEGREE and (self.k == 0 or self.c == 0):
            raise ConfigError("zero_degree family needs k != 0 and c != 0")
        if self.hbar == 0:
            raise ConfigError("hbar must be nonzero")
        if self.R < 0:
            raise ConfigError("R must be nonnegative")
        if not self.tolerance > 0 or self.max_iter < 1:
            raise ConfigError("solver tolerance and max_iter must be positive")
        if any(r <= 0 for r in self.R_list) or any(b >= a for a, b in zip(self.R_list, self.R_list[1:])):
            raise ConfigError("limit R_list must be strictly decreasing positive values")
        bad = [c for c in self.checks if c not in CHECKS]
        if bad:
            raise ConfigError(f"unknown check(s): {', '.join(bad)}")
        data = self.data
        points = [(hb, R) for _, hb, R in self.grid()] if sweep else [(self.hbar, self.R)]
        for hb, R in points:
            if hb == 0 or R < 0:
                raise ConfigError("sweep values need hbar != 0 and R >= 0")
            if not admissible(Parameters(hb, R), data):
                raise ConfigError(
                    f"inadmissible parameters: |hbar^2 R^2| = {abs(hb * hb) * R * R:.6g} for family {self.family}"
                )
        return self


_KEYS = {
    ("surface", "circumradius"): ("circumradius", _real),
    ("surface", "target_edge_length"): ("target_edge_length", _real),
    ("surface", "cone_grading"): ("cone_grading", _real),
    ("surface", "cutoff_radius"): ("cutoff_radius", lambda v, n: None if v is None else _real(v, n)),
    ("family", "name"): ("family", lambda v, n: str(v)),
    ("family", "c"): ("c", lambda v, n: parse_complex(v)),
    ("family", "k"): ("k", lambda v, n: parse_complex(v)),
    ("parameters", "hbar"): ("hbar", lambda v, n: parse_complex(v)),
    ("parameters", "r"): ("R", _real),
    ("solver", "tolerance"): ("tolerance", _real),
    ("solver", "max_iter"): ("max_iter", lambda v, n: int(_real(v, n))),
    ("limit", "r_list"): ("R_list", lambda v, n: [_real(x, n) for x in v]),
    ("sweep", "hbar"): ("sweep_hbar", lambda v, n: [parse_complex(x) for x in v]),
    ("sweep", "r"): ("sweep_R", lambda v, n: [_real(x, n) for x in v]),
    ("output", "directory"): ("output", lambda v, n: str(v)),
    ("checks", "run"): ("checks", lambda v, n: parse_checks(v)),
}


def parse_checks(v) -> tuple[str, ...]:
    if isinstance(v, str):
        v = [s.strip() for s in v.split(",") if s.strip()]
    names = tuple(v)
    if names == ("all",):
        return CHECKS
    return names


def load_config(path: str | Path | None) -> RunConfig:
    """Read a configuration file; missing keys keep their defaults."""
    cfg = RunConfig()
    if path is None:
        return cfg
    cp = configparser.ConfigParser()
    try:
        if not cp.read(path):
            raise ConfigError(f"cannot read config file {path}")
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    for section in cp.sections():
        for key, raw in cp[section].items():
            entry = _KEYS.get((section.lower(), key.lower()))
            if entry is None:
                raise ConfigError(f"unknown key [{section}] {key}")
            try:
                value = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"[{section}] {key}: not a JSON value: {raw!r}") from exc
            attr, conv = entry
            setattr(cfg, attr, conv(value, f"[{section}] {key}"))
    return cfg
