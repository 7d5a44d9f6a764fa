"""Run configuration: flat ``key=value`` files, strict keys, typed values."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .errors import ConfigError

EXPERIMENTS = ("background", "deviate", "twoslit", "bell", "geometry", "report")


def _int(text: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        pass
    val = float(text)
    if not val.is_integer():
        raise ValueError(f"not an integer: {text!r}")
    return int(val)


def _float(text: str) -> float:
    val = float(text)
    if not math.isfinite(val):
        raise ValueError(f"not a finite number: {text!r}")
    return val


def _str(text: str) -> str:
    return text.strip()


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        val = text.strip()
        if val not in options:
            raise ValueError(f"{val!r} is not one of {', '.join(options)}")
        return val

    return parse


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any = None


COMMON = {
    "seed": Key(_int, 0),
    "format": Key(_choice("csv", "json"), None),
}

KEYS: dict[str, dict[str, Key]] = {
    "background": {
        "n_modes": Key(_int, 10),
        "f_min_hz": Key(_float, 1.0),
        "f_max_hz": Key(_float, 100.0),
        "exponent": Key(_float, 0.0),
        "rms": Key(_float, 1e-6),
        "h_max": Key(_float, 1e-2),
    },
    "deviate": {
        "r_const": Key(_float, None),
        "ensemble": Key(_str, None),
        "x_m": Key(_float, 0.0),
        "y_m": Key(_float, 0.0),
        "z_m": Key(_float, 0.0),
        "f_sigma": Key(_float, 0.0),
        "dt": Key(_float, None),
        "steps": Key(_int, None),
        "periods": Key(_float, 10.0),
        "steps_per_period": Key(_int, 200),
        "ell0": Key(_float, 1.0),
        "ell_rate0": Key(_float, 0.0),
        "phase_output": Key(_str, None),
        "phase_mode": Key(_choice("literal", "integral"), "integral"),
    },
    "twoslit": {
        "slit_separation": Key(_float, 1e-6),
        "screen_distance": Key(_float, 1.0),
        "wavelength": Key(_float, 50e-12),
        "screen_points": Key(_int, 2001),
        "screen_half_width": Key(_float, 0.25e-3),
        "distribution": Key(_choice("gaussian", "uniform", "background"), "gaussian"),
        "sigma": Key(_float, 0.0),
        "half_width": Key(_float, None),
        "ensemble": Key(_str, None),
        "window": Key(_float, 1.0),
        "n_realizations": Key(_int, 10000),
    },
    "bell": {
        "model": Key(_choice("cosine-projection", "deterministic-sign", "quantum-reference"), "cosine-projection"),
        "a": Key(_float, 0.0),
        "a_prime": Key(_float, math.pi / 2),
        "b": Key(_float, math.pi / 4),
        "b_prime": Key(_float, -math.pi / 4),
        "method": Key(_choice("analytic", "montecarlo"), "analytic"),
        "n": Key(_int, 1_000_000),
        "rho": Key(_float, 2.0),
    },
    "geometry": {
        "n_pairs": Key(_int, 1000),
        "dim": Key(_int, 8),
    },
    "report": {
        "n_realizations": Key(_int, 100_000),
        "mc_samples": Key(_int, 1_000_000),
        "bound_settings": Key(_int, 10_000),
    },
}

DEFAULT_FORMAT = {
    "background": "json",
    "deviate": "csv",
    "twoslit": "csv",
    "bell": "json",
    "geometry": "json",
    "report": "markdown",
}


@dataclass
class RunConfig:
    experiment: str
    seed: int
    format: str
    params: dict[str, Any] = field(default_factory=dict)
    output_path: Path | None = None
    workers: int = 1

    def echo(self) -> dict[str, Any]:
        """Everything needed to replay the run; output path and worker count excluded."""
        return {"experiment": self.experiment, "seed": self.seed, "format": self.format, **self.params}

    def __getitem__(self, key: str) -> Any:
        return self.params[key]


def read_config_file(path: str | Path) -> dict[str, str]:
    """Read a ``key=value`` file, or the config echo of a JSON run record."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc.msg}") from exc
        echo = doc.get("config", doc) if isinstance(doc, dict) else None
        if not isinstance(echo, dict):
            raise ConfigError(f"config {path} has no config object")
        return {k: _to_text(v) for k, v in echo.items() if v is not None}
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        k, v = line.split("=", 1)
        pairs[k.strip()] = v.strip()
    return pairs


def _to_text(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_assignments(items: list[str]) -> dict[str, str]:
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def build_config(
    experiment: str,
    file_values: dict[str, str],
    cli_values: dict[str, str],
    flags: dict[str, Any],
) -> RunConfig:
    """Merge file < key=value arguments < flags and parse strictly."""
    if experiment not in KEYS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    raw = dict(file_values)
    found = raw.pop("experiment", experiment)
    if found != experiment:
        raise ConfigError(f"config is for experiment {found!r}, not {experiment!r}")
    raw.update(cli_values)
    spec = {**COMMON, **KEYS[experiment]}
    unknown = sorted(set(raw) - set(spec))
    if unknown:
        raise ConfigError(f"unknown key(s) for {experiment}: {', '.join(unknown)}")
    values: dict[str, Any] = {}
    for name, key in spec.items():
        if name in raw:
            try:
                values[name] = key.parse(raw[name])
            except ValueError as exc:
                raise ConfigError(f"key {name}: {exc}") from exc
        else:
            values[name] = key.default
    for flag in ("seed", "format"):
        if flags.get(flag) is not None:
            values[flag] = flags[flag]
    seed = values.pop("seed")
    if not 0 <= seed < 2**64:
        raise ConfigError(f"seed must fit in 64 bits unsigned, got {seed}")
    fmt = values.pop("format") or DEFAULT_FORMAT[experiment]
    workers = flags.get("workers") or 1
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")
    out = flags.get("output")
    return RunConfig(experiment, seed, fmt, values, Path(out) if out else None, workers)

