"""
INI-style synthesis configuration.

Sections and keys::

    [subspace]   n_fft, n_sc, t_zero, delta_f, carrier_placement,
                 singular_floor, dense_budget, cache
    [window]     t_min, t_max
    [optimizer]  n_pilots, method, n_peaks, alpha_weights, beta_weights,
                 learn_rate, step_strategy, shrink_divisor, schedule_tau,
                 cost_gain, h_min, h_max, h0, rollback, epsilon, max_iters, seed
    [papr]       enabled, n_papr_reductions, n_peaks_td, h_step_papr,
                 magnitude_floor, floor_factor, step_divisor
    [output]     out_dir, workers

Values are validated by the pydantic models in ``src.state``; any failure is
reported as a ConfigError naming the key and its line in the file.
"""

from __future__ import annotations

import configparser
import logging
import re
from pathlib import Path
from typing import Any, Optional, Union

from pydantic import ValidationError

from src.errors import ConfigError
from src.state import PaprConfig, SynthesisConfig

logger = logging.getLogger(__name__)

# section -> key -> (target path inside SynthesisConfig, is_list)
_SCHEMA: dict[str, dict[str, tuple[tuple[str, ...], bool]]] = {
    "subspace": {
        "n_fft": (("dims", "n_fft"), False),
        "n_sc": (("dims", "n_sc"), False),
        "t_zero": (("dims", "t_zero"), False),
        "delta_f": (("delta_f",), False),
        "carrier_placement": (("carrier_placement",), True),
        "singular_floor": (("singular_floor",), False),
        "dense_budget": (("dense_budget",), False),
        "cache": (("subspace_cache",), False),
    },
    "window": {
        "t_min": (("window", "t_min"), False),
        "t_max": (("window", "t_max"), False),
    },
    "optimizer": {
        "n_pilots": (("n_pilots",), False),
        **{
            key: (("optimizer", key), key in ("alpha_weights", "beta_weights"))
            for key in (
                "method", "n_peaks", "alpha_weights", "beta_weights", "learn_rate",
                "step_strategy", "shrink_divisor", "schedule_tau", "cost_gain",
                "h_min", "h_max", "h0", "rollback", "epsilon", "max_iters", "seed",
            )
        },
    },
    "papr": {
        "enabled": (("papr", "enabled"), False),
        **{
            key: (("papr", key), False)
            for key in (
                "n_papr_reductions", "n_peaks_td", "h_step_papr", "magnitude_floor", "floor_factor", "step_divisor",
            )
        },
    },
    "output": {
        "out_dir": (("out_dir",), False),
        "workers": (("workers",), False),
    },
}

_REQUIRED = {("dims", "n_fft"), ("dims", "n_sc"), ("dims", "t_zero"), ("window", "t_min"), ("window", "t_max")}


def _key_for(path: tuple) -> Optional[tuple[str, str]]:
    """Section and key of a model field path, if the file schema has one."""
    for section, keys in _SCHEMA.items():
        for key, (target, _) in keys.items():
            if tuple(path[: len(target)]) == target:
                return section, key
    return None


def _line_numbers(text: str) -> dict[tuple[str, str], int]:
    lines: dict[tuple[str, str], int] = {}
    section = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        header = re.match(r"^\[([^\]]+)\]", line)
        if header:
            section = header.group(1).strip().lower()
            continue
        match = re.match(r"^([A-Za-z_][\w-]*)\s*[=:]", line)
        if match and section is not None:
            lines[(section, match.group(1).lower())] = number
    return lines


def _parse_list(value: str) -> Union[str, list[str]]:
    if value.strip() == "contiguous-centered":
        return value.strip()
    return [v.strip() for v in value.split(",") if v.strip()]


def _set(tree: dict, path: tuple[str, ...], value: Any) -> None:
    for part in path[:-1]:
        tree = tree.setdefault(part, {})
    tree[path[-1]] = value


def parse_config_text(text: str, source: str = "<config>") -> SynthesisConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as e:
        line = getattr(e, "lineno", None)
        raise ConfigError(f"{source}: {e.message}", line=line) from e

    lines = _line_numbers(text)
    tree: dict = {}
    for section in parser.sections():
        schema = _SCHEMA.get(section.lower())
        if schema is None:
            raise ConfigError(f"{source}: unknown section [{section}]", key=section)
        for key, value in parser.items(section):
            if key not in schema:
                raise ConfigError(
                    f"{source}: unknown key '{key}' in [{section}]",
                    key=key,
                    line=lines.get((section.lower(), key)),
                )
            target, is_list = schema[key]
            if value.strip() == "" or value.strip().lower() == "none":
                continue
            _set(tree, target, _parse_list(value) if is_list else value.strip())

    for target in sorted(_REQUIRED):
        node = tree
        for part in target:
            node = node.get(part, {}) if isinstance(node, dict) else {}
        if node == {}:
            section, key = _key_for(target)
            raise ConfigError(f"{source}: missing required key '{key}' in [{section}]", key=key)

    papr = tree.pop("papr", None)
    if papr is not None:
        enabled = str(papr.pop("enabled", "true")).lower() in ("1", "true", "yes", "on")
        tree["papr"] = papr if enabled else None

    try:
        return SynthesisConfig.model_validate(tree)
    except ValidationError as e:
        raise _config_error(e, source, lines) from e


def _config_error(error: ValidationError, source: str, lines: dict[tuple[str, str], int]) -> ConfigError:
    first = error.errors()[0]
    loc = tuple(str(part) for part in first["loc"])
    found = _key_for(loc)
    if found is None:
        where = ".".join(loc) or "config"
        return ConfigError(f"{source}: {where}: {first['msg']}", key=where)
    section, key = found
    return ConfigError(
        f"{source}: [{section}] {key}: {first['msg']}",
        key=key,
        line=lines.get((section, key)),
    )


def load_config(path: Union[str, Path]) -> SynthesisConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e.strerror}") from e
    config = parse_config_text(text, source=str(path))
    logger.info(
        "Loaded %s: dims (%d, %d, %d), %d pilots, window (%d, %d)",
        path, config.dims.n_fft, config.dims.n_sc, config.dims.t_zero,
        config.n_pilots, config.window.t_min, config.window.t_max,
    )
    return config


def apply_overrides(
    config: SynthesisConfig,
    *,
    seed: Optional[int] = None,
    max_iters: Optional[int] = None,
    method: Optional[str] = None,
    papr: Optional[bool] = None,
    out_dir: Optional[str] = None,
    workers: Optional[int] = None,
) -> SynthesisConfig:
    """Command-line overrides on top of a loaded config, re-validated."""
    optimizer: dict[str, Any] = {}
    if seed is not None:
        optimizer["seed"] = seed
    if max_iters is not None:
        optimizer["max_iters"] = max_iters
    if method is not None:
        optimizer["method"] = method
    update: dict[str, Any] = {}
    if optimizer:
        update["optimizer"] = config.optimizer.model_copy(update=optimizer)
    if papr is not None:
        update["papr"] = (config.papr or PaprConfig()) if papr else None
    if out_dir is not None:
        update["out_dir"] = out_dir
    if workers is not None:
        update["workers"] = workers
    if not update:
        return config
    try:
        return SynthesisConfig.model_validate(config.model_copy(update=update).model_dump())
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first["loc"])
        raise ConfigError(f"override {where}: {first['msg']}", key=where) from e
