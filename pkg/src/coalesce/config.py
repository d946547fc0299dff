"""Experiment configuration in a flat ``key = value`` text format.

Example::

    # section IV, first experiment
    n = 20
    m = 2
    payoff.kind = power_law
    payoff.theta = 0.8
    payoff.lambda = 1
    payoff.c = 0.75
    init.kind = box
    init.low = 0
    init.high = 10
    trials = 20000
    master_seed = 20200101

Lists are comma separated; ``init.states`` separates points with ``;``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from . import analysis
from .dynamics import PAIR_POLICIES, BoxInit, ExplicitInit, InitializationError, TrialConfig, make_config
from .payoff import PayoffError, PayoffSpec, PowerLawSpec, polynomial_spec, tabulated_spec, validate_spec

PAYOFF_KINDS = ("power_law", "polynomial", "tabulated")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


# dotted key -> (attribute, parser name)
_KEYS = {
    "n": ("n", "int"),
    "m": ("m", "int"),
    "payoff.kind": ("payoff_kind", "str"),
    "payoff.theta": ("theta", "float"),
    "payoff.lambda": ("lam", "float"),
    "payoff.c": ("c", "float"),
    "payoff.profit_coeffs": ("profit_coeffs", "floats"),
    "payoff.cost_coeffs": ("cost_coeffs", "floats"),
    "payoff.table_xi": ("table_xi", "floats"),
    "payoff.table_profit": ("table_profit", "floats"),
    "payoff.table_cost": ("table_cost", "floats"),
    "payoff.validation_floor": ("validation_floor", "float"),
    "payoff.grid_points": ("grid_points", "int"),
    "init.kind": ("init_kind", "str"),
    "init.low": ("init_low", "float"),
    "init.high": ("init_high", "float"),
    "init.states": ("init_states", "points"),
    "init.min_separation": ("min_separation", "float"),
    "pair_policy": ("pair_policy", "str"),
    "trials": ("trials", "int"),
    "master_seed": ("master_seed", "int"),
    "step_cap_factor": ("step_cap_factor", "float"),
    "output_dir": ("output_dir", "str"),
    "workers": ("workers", "int"),
    "compare.threshold": ("tv_threshold", "float"),
    "sweep.c_values": ("sweep_c_values", "floats"),
    "sweep.trials": ("sweep_trials", "int"),
}


@dataclass
class ExperimentConfig:
    n: int = 20
    m: int = 2
    payoff_kind: str = "power_law"
    theta: float = 0.8
    lam: float = 1.0
    c: float = 0.75
    profit_coeffs: Optional[tuple] = None
    cost_coeffs: Optional[tuple] = None
    table_xi: Optional[tuple] = None
    table_profit: Optional[tuple] = None
    table_cost: Optional[tuple] = None
    validation_floor: float = 0.0
    grid_points: int = 1024
    init_kind: str = "box"
    init_low: float = 0.0
    init_high: float = 10.0
    init_states: Optional[tuple] = None
    min_separation: float = 1e-6
    pair_policy: str = "uniform"
    trials: int = 20000
    master_seed: Optional[int] = None
    step_cap_factor: float = 50.0
    output_dir: str = "out"
    workers: int = 1
    tv_threshold: float = 0.02
    sweep_c_values: Optional[tuple] = None
    sweep_trials: int = 0

    # ------------------------------------------------------------ parsing

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in _KEYS:
                raise ConfigError(key, "unknown key")
            attr, kind = _KEYS[key]
            values[attr] = _parse(key, kind, val.strip().strip('"').strip("'"))
        return cls(**values)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def to_text(self) -> str:
        lines = []
        for key, (attr, kind) in _KEYS.items():
            v = getattr(self, attr)
            if v is None:
                continue
            lines.append(f"{key} = {_format(kind, v)}")
        return "\n".join(lines) + "\n"

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    # ------------------------------------------------------------ building

    def payoff_spec(self) -> PayoffSpec:
        try:
            if self.payoff_kind == "power_law":
                return PowerLawSpec(theta=self.theta, lam=self.lam, c=self.c)
            if self.payoff_kind == "polynomial":
                if self.profit_coeffs is None or self.cost_coeffs is None:
                    raise ConfigError("payoff.profit_coeffs", "polynomial payoff needs both coefficient lists")
                return polynomial_spec(self.profit_coeffs, self.cost_coeffs)
            if self.payoff_kind == "tabulated":
                if None in (self.table_xi, self.table_profit, self.table_cost):
                    raise ConfigError("payoff.table_xi", "tabulated payoff needs table_xi, table_profit, table_cost")
                return tabulated_spec(self.table_xi, self.table_profit, self.table_cost)
        except PayoffError as exc:
            raise ConfigError("payoff", str(exc)) from None
        raise ConfigError("payoff.kind", f"must be one of {PAYOFF_KINDS}")

    def init_rule(self):
        if self.init_kind == "box":
            if not self.init_low < self.init_high:
                raise ConfigError("init.low", "must be below init.high")
            return BoxInit(self.init_low, self.init_high, self.min_separation)
        if self.init_kind == "explicit":
            if not self.init_states:
                raise ConfigError("init.states", "explicit initialisation needs states")
            return ExplicitInit(tuple(tuple(s) for s in self.init_states), self.min_separation)
        raise ConfigError("init.kind", "must be 'box' or 'explicit'")

    def validate(self) -> None:
        """Field-level checks that do not need random draws."""
        if self.n < 2:
            raise ConfigError("n", "must be >= 2")
        if self.m < 1:
            raise ConfigError("m", "must be >= 1")
        if self.trials < 1:
            raise ConfigError("trials", "must be >= 1")
        if self.pair_policy not in PAIR_POLICIES:
            raise ConfigError("pair_policy", f"must be one of {PAIR_POLICIES}")
        if not self.step_cap_factor > 0:
            raise ConfigError("step_cap_factor", "must be positive")
        if self.workers < 1:
            raise ConfigError("workers", "must be >= 1")
        if self.master_seed is None:
            raise ConfigError("master_seed", "required (config key or --seed)")
        if self.master_seed < 0 or self.master_seed >= 2**64:
            raise ConfigError("master_seed", "must be an unsigned 64-bit integer")
        if self.init_kind == "explicit" and self.init_states:
            if len(self.init_states) != self.n:
                raise ConfigError("init.states", f"expected {self.n} points, got {len(self.init_states)}")
            if any(len(s) != self.m for s in self.init_states):
                raise ConfigError("init.states", f"every point must have {self.m} coordinates")
        self.payoff_spec()
        self.init_rule()

    def trial_config(self) -> TrialConfig:
        """Validated trial configuration with the shared initial states drawn."""
        self.validate()
        spec = self.payoff_spec()
        try:
            tc = make_config(
                spec, self.n, self.m, self.master_seed, self.init_rule(),
                pair_policy=self.pair_policy, step_cap_factor=self.step_cap_factor,
            )
        except InitializationError as exc:
            raise ConfigError("init", str(exc)) from None
        except PayoffError as exc:
            raise ConfigError("payoff", str(exc)) from None
        if not spec.is_power_law:
            if tc.xi_max > spec.operating_range[1]:
                raise ConfigError("payoff", "initial distances exceed the tabulated range")
            lo = self.validation_floor
            if not 0 <= lo < tc.xi_min:
                raise ConfigError("payoff.validation_floor", "must lie in [0, smallest initial distance)")
            report = validate_spec(spec, self.grid_points, (lo, tc.xi_max))
            if not report.passed:
                raise ConfigError("payoff", f"validation failed: {report.first_violation}")
        return tc

    def theory(self, tc: TrialConfig):
        """``(negbinom or None, ProbBounds)`` for this configuration."""
        spec = tc.spec
        bounds = analysis.kernel_bounds(spec, tc.xi_min, tc.xi_max)
        dist = analysis.negbinom(self.n, analysis.p_hat(spec.lam, spec.c)) if spec.is_power_law else None
        return dist, bounds


def _parse(key, kind, val):
    try:
        if kind == "int":
            return int(val)
        if kind == "float":
            return float(val)
        if kind == "str":
            return val
        if kind == "floats":
            return tuple(float(v) for v in val.split(",") if v.strip())
        if kind == "points":
            return tuple(
                tuple(float(v) for v in pt.split(",")) for pt in val.split(";") if pt.strip()
            )
    except ValueError:
        raise ConfigError(key, f"cannot parse {val!r} as {kind}") from None
    raise AssertionError(kind)


def _format(kind, v):
    if kind == "floats":
        return ", ".join(repr(float(x)) for x in v)
    if kind == "points":
        return "; ".join(", ".join(repr(float(x)) for x in pt) for pt in v)
    if kind == "float":
        return repr(float(v)) if math.isfinite(v) else str(v)
    return str(v)
