"""Experiment configuration: defaults, file parsing, and validation.

Every experiment is a pure function of its config; the seed fixes all random
draws and the config echoes into every output row.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from ..errors import ConfigError

EXPERIMENTS = ("E1", "E2", "E3", "E4", "E5", "E6", "E7")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    d: int = 2
    grid: int = 64  # cells per axis at the base resolution
    resolution: int = 16  # cells per unit length
    delta: float = 0.1
    delta_values: tuple[float, ...] = (0.05, 0.1, 0.2)
    r_values: tuple[float, ...] = (1.0, 2.0, 4.0)
    rho: float = 2.5
    p: float = 2.0
    trials: int = 5
    seed: int = 1
    n_max: int = 16
    scales: tuple[int, ...] = (0, 1, 2, 3, 4)
    j_set: tuple[int, ...] = (0, 1)
    partition: int = 8
    r_quad: int = 64
    eps_values: tuple[float, ...] = (0.5, 0.25, 0.125, 0.0625, 0.03125)
    pair_starts: tuple[int, ...] = (1, 2, 4, 8, 16)
    kind: str = "mixed"
    system_size: int = 64
    system_kind: str = "rotation"
    subdivide: int = 4
    normalize: bool = True
    sign_trials: int = 64

    @property
    def box(self) -> int:
        """Physical box side in units."""
        if self.grid % self.resolution:
            raise ConfigError(
                f"grid {self.grid} must be a multiple of resolution {self.resolution}"
            )
        return self.grid // self.resolution

    @property
    def conjugate(self) -> float:
        return (2**self.d) / (2**self.d - 1.0)

    def validate(self) -> "ExperimentConfig":
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if not 1 <= self.d <= 3:
            raise ConfigError(f"dimension {self.d} out of range 1..3")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        _ = self.box
        if self.experiment == "E1" and self.rho <= 2:
            raise ConfigError("E1 requires rho > 2")
        if self.experiment == "E2":
            threshold = max(2.0, self.p * (2**self.d - 1) / 2 ** (self.d - 1))
            if self.rho <= threshold:
                raise ConfigError(
                    f"E2 requires rho > max(2, p(2^d-1)/2^(d-1)) = {threshold}"
                )
        if self.experiment == "E4" and not self.normalize:
            raise ConfigError("E4 requires normalized tuples (normalize=true)")
        if self.experiment == "E7" and self.partition < 0:
            raise ConfigError("partition size must be nonnegative")
        return self


_STANDARD = {
    # default fixtures; desk scale, minutes not hours
    "E1": dict(grid=32, resolution=8, n_max=16, rho=2.5, trials=20),
    "E2": dict(rho=3.5, p=2.0, n_max=16, system_size=64, trials=10),
    "E3": dict(grid=64, resolution=16, trials=5),
    "E4": dict(grid=32, resolution=8, n_max=32, trials=5),
    "E5": dict(trials=10, subdivide=4),
    "E6": dict(grid=64, resolution=16, scales=(0, 1, 2, 3, 4), trials=10),
    "E7": dict(grid=32, resolution=8, j_set=(0, 1), partition=8, trials=5),
}


def standard_config(experiment: str, **overrides) -> ExperimentConfig:
    """The standard fixture for an experiment, with optional overrides."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    base = dict(_STANDARD[experiment])
    base.update(overrides)
    return ExperimentConfig(experiment=experiment, **base).validate()


_FIELD_PARSERS = {
    "experiment": str,
    "kind": str,
    "system_kind": str,
    "d": int,
    "grid": int,
    "resolution": int,
    "trials": int,
    "seed": int,
    "n_max": int,
    "partition": int,
    "r_quad": int,
    "system_size": int,
    "subdivide": int,
    "sign_trials": int,
    "delta": float,
    "rho": float,
    "p": float,
    "normalize": "bool",
    "delta_values": "floats",
    "r_values": "floats",
    "eps_values": "floats",
    "scales": "ints",
    "j_set": "ints",
    "pair_starts": "ints",
}


def _parse_value(name: str, raw: str):
    raw = raw.strip()
    parser = _FIELD_PARSERS[name]
    if parser == "bool":
        if raw.lower() in ("1", "true", "yes"):
            return True
        if raw.lower() in ("0", "false", "no"):
            return False
        raise ConfigError(f"cannot parse boolean {name}={raw!r}")
    if parser in ("floats", "ints"):
        parts = [p for p in raw.replace(",", " ").split() if p]
        cast = float if parser == "floats" else int
        return tuple(cast(p) for p in parts)
    return parser(raw)


def config_from_pairs(pairs: dict[str, str]) -> ExperimentConfig:
    """Build a config from flat key-value strings (file or CLI overrides)."""
    if "experiment" not in pairs:
        raise ConfigError("config needs an experiment key")
    kwargs = {}
    for name, raw in pairs.items():
        if name not in _FIELD_PARSERS:
            raise ConfigError(f"unknown config key {name!r}")
        try:
            kwargs[name] = _parse_value(name, raw)
        except ValueError as exc:
            raise ConfigError(f"cannot parse {name}={raw!r}") from exc
    return ExperimentConfig(**kwargs).validate()


def read_config_file(path) -> dict[str, str]:
    """Flat key-value text: one ``key value`` or ``key = value`` per line."""
    pairs: dict[str, str] = {}
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, _, rest = line.partition("=")
        else:
            key, _, rest = line.partition(" ")
        pairs[key.strip()] = rest.strip()
    return pairs
