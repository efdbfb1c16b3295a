"""Flat key = value configuration files with strict validation.

Format: one ``section.key = value`` per line, ``#`` comments, blank lines
ignored. Unknown keys are rejected; every parse error names the offending
key. Lists are comma separated. Command-line flags override file values.
"""

from __future__ import annotations

from pathlib import Path

from .model import CostMode


class ConfigError(ValueError):
    pass


def _parse_int(text: str) -> int:
    return int(text)


def _parse_float(text: str) -> float:
    return float(text)


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "yes", "1"):
        return True
    if lowered in ("false", "no", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_capacity(text: str):
    if text.lower() in ("inf", "infinite", "none"):
        return None
    return int(text)


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(part) for part in text.split(",") if part.strip())


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(",") if part.strip())


def _parse_cost_mode(text: str) -> CostMode:
    return CostMode(text)


def _parse_choice(*choices: str):
    def parse(text: str) -> str:
        if text not in choices:
            raise ValueError(f"expected one of {choices}, got {text!r}")
        return text

    return parse


KNOWN_KEYS = {
    "catalog.files": _parse_int,
    "catalog.alpha": _parse_float,
    "catalog.delay": _parse_float_list,
    "catalog.normalize": _parse_bool,
    "damage.coefficients": _parse_float_list,
    "workload.slots": _parse_int,
    "workload.events": _parse_int,
    "workload.seed": _parse_int,
    "workload.initial-cache": _parse_int_list,
    "cache.capacity": _parse_capacity,
    "policy.name": _parse_choice("lru", "fifo", "rnd", "fif", "dare", "dare-star", "fif-star", "lru-star"),
    "policy.rule": _parse_choice("dare-delta", "lru", "fifo", "rnd"),
    "policy.delta": _parse_float,
    "policy.tau": _parse_float,
    "policy.tau-grid": _parse_float_list,
    "policy.retention": _parse_choice("solve", "match-rates", "fixed"),
    "policy.cost-mode": _parse_cost_mode,
    "experiment.id": _parse_choice(
        "offline-tradeoff", "delta-sweep", "online-compare", "star-tradeoff", "competitive-ratio"
    ),
    "experiment.alphas": _parse_float_list,
    "experiment.capacities": _parse_int_list,
    "experiment.degrees": _parse_int_list,
    "experiment.deltas": _parse_float_list,
    "experiment.files": _parse_int_list,
    "experiment.replications": _parse_int,
    "experiment.tau-grid": _parse_float_list,
    "oracle.kind": _parse_choice("offline", "online"),
    "oracle.instances": _parse_int,
    "output.path": str,
    "output.format": _parse_choice("csv", "json"),
}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = KNOWN_KEYS[key](value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from exc
    return values


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text(), str(path))


def describe_keys() -> str:
    """Key listing for --help output."""
    return "\n".join(f"  {key}" for key in sorted(KNOWN_KEYS))


def config_echo_lines(values: dict) -> list[str]:
    """Canonical 'key = value' lines for embedding in output headers."""
    lines = []
    for key in sorted(values):
        value = values[key]
        if isinstance(value, tuple):
            text = ",".join(str(v) for v in value)
        elif isinstance(value, CostMode):
            text = value.value
        elif value is None:
            text = "inf"
        else:
            text = str(value)
        lines.append(f"{key} = {text}")
    return lines
