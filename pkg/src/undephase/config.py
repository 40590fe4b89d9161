"""Flat `key = value` experiment configuration with Fig.-1 defaults."""

from __future__ import annotations

import dataclasses
import math

from .fields import SystemParams

EXPERIMENTS = (
    "fields",
    "trajectory",
    "ensemble",
    "bandwidth-sweep",
    "efficiency-sweep",
    "protocol",
    "verify-appendix",
)

_PHYSICS_KEYS = tuple(f.name for f in dataclasses.fields(SystemParams))
_FLOAT_KEYS = _PHYSICS_KEYS + ("dt", "sweep_start", "sweep_stop")
_INT_KEYS = ("trajectories", "seed", "fock_cutoff", "sweep_points")
_STR_KEYS = ("experiment", "output")
ALL_KEYS = _FLOAT_KEYS + _INT_KEYS + _STR_KEYS

# sweep-axis defaults resolved per experiment when the keys are omitted;
# the ensemble stop value tracks the configured t_off
_SWEEP_DEFAULTS = {
    "ensemble": (0.0, None, 21),
    "bandwidth-sweep": (2.0, 50.0, 5),
    "efficiency-sweep": (0.1, 1.0, 10),
    "protocol": (0.05, math.pi, 8),
}


class ConfigError(ValueError):
    """Malformed or invalid experiment configuration."""


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved configuration: physics parameters plus harness knobs.

    `provided` records which keys the user set explicitly (as opposed to
    defaults); sweep drivers use it to decide when they may recalibrate a
    default, e.g. the local-oscillator phase of the bandwidth sweep.
    """

    experiment: str
    params: SystemParams
    dt: float = 1e-3
    trajectories: int = 10_000
    seed: int = 0
    fock_cutoff: int = 8
    sweep_start: float = 0.0
    sweep_stop: float = 0.0
    sweep_points: int = 1
    output: str = ""
    provided: frozenset = dataclasses.field(default=frozenset(), compare=False, repr=False)

    def echo_lines(self) -> list[str]:
        """Complete effective config as parseable `key = value` lines."""
        lines = [f"experiment = {self.experiment}"]
        for key in _PHYSICS_KEYS:
            lines.append(f"{key} = {getattr(self.params, key)!r}")
        lines.append(f"dt = {self.dt!r}")
        for key in _INT_KEYS:
            lines.append(f"{key} = {getattr(self, key)}")
        lines.append(f"sweep_start = {self.sweep_start!r}")
        lines.append(f"sweep_stop = {self.sweep_stop!r}")
        if self.output:
            lines.append(f"output = {self.output}")
        return lines

    def sweep_grid(self) -> list[float]:
        if self.sweep_points == 1:
            return [self.sweep_start]
        step = (self.sweep_stop - self.sweep_start) / (self.sweep_points - 1)
        return [self.sweep_start + i * step for i in range(self.sweep_points)]


def _parse_float(key: str, value: str, lineno: int) -> float:
    try:
        x = float(value)
    except ValueError:
        raise ConfigError(f"line {lineno}: non-numeric value for '{key}'") from None
    if not math.isfinite(x):
        raise ConfigError(f"line {lineno}: non-finite value for '{key}'")
    return x


def _parse_int(key: str, value: str, lineno: int) -> int:
    x = _parse_float(key, value, lineno)
    if x != int(x):
        raise ConfigError(f"line {lineno}: '{key}' must be an integer")
    return int(x)


def parse_config(text: str, experiment: str | None = None) -> ExperimentConfig:
    """Parse `key = value` lines ('#' comments) into a validated config.

    `experiment` passed by the CLI subcommand overrides any value in the
    file. Omitted physics keys take the Fig.-1 defaults.
    """
    raw: dict[str, tuple[str, int]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key not in ALL_KEYS:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key '{key}'")
        if not value:
            raise ConfigError(f"line {lineno}: empty value for '{key}'")
        raw[key] = (value, lineno)

    provided = frozenset(raw) | ({"experiment"} if experiment else frozenset())
    if experiment is None and "experiment" in raw:
        experiment = raw["experiment"][0]
    if experiment is None:
        raise ConfigError("missing required key 'experiment'")
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment '{experiment}'")

    phys = {}
    for key in _PHYSICS_KEYS:
        if key in raw:
            phys[key] = _parse_float(key, *raw[key])
    try:
        params = SystemParams(**phys)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    kwargs = {}
    for key, check, what in (
        ("dt", lambda v: v > 0.0, "must be positive"),
        ("trajectories", lambda v: v >= 1, "must be at least 1"),
        ("seed", lambda v: v >= 0, "must be nonnegative"),
        ("fock_cutoff", lambda v: v >= 2, "must be at least 2"),
        ("sweep_points", lambda v: v >= 1, "must be at least 1"),
    ):
        if key in raw:
            parse = _parse_int if key in _INT_KEYS else _parse_float
            value = parse(key, *raw[key])
            if not check(value):
                raise ConfigError(f"'{key}' {what}")
            kwargs[key] = value

    start, stop, points = _SWEEP_DEFAULTS.get(experiment, (0.0, 0.0, 1))
    if stop is None:
        stop = params.t_off
    kwargs.setdefault("sweep_points", points)
    kwargs["sweep_start"] = (
        _parse_float("sweep_start", *raw["sweep_start"]) if "sweep_start" in raw else start
    )
    kwargs["sweep_stop"] = (
        _parse_float("sweep_stop", *raw["sweep_stop"]) if "sweep_stop" in raw else stop
    )
    if "output" in raw:
        kwargs["output"] = raw["output"][0]

    return ExperimentConfig(experiment=experiment, params=params, provided=provided, **kwargs)
