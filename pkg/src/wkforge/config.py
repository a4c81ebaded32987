from __future__ import annotations

import configparser
import logging
import os
from pathlib import Path
from typing import Dict, Mapping, Optional

from platformdirs import user_config_path

from .errors import InvalidInput
from .models import DEFAULT_JUDGE_PROMPT, DefaultCosts, ProviderConfig


LOGGER = logging.getLogger(__name__)

APP_NAME = "wkforge"
PROVIDER_SECTION = "provider"
COSTS_SECTION = "costs"
OFFLINE_ENV = "WKFORGE_OFFLINE"

PROVIDER_KEYS = ("endpoint_url", "api_key_env", "timeout", "max_in_flight", "dimension", "judge_prompt")
COST_KEYS = ("compute", "time", "model")


def _config_file() -> Path:
    directory = Path(user_config_path(APP_NAME, ensure_exists=True))
    directory.mkdir(parents=True, exist_ok=True)
    return directory / "settings.ini"


def offline_forced(environ: Optional[Mapping[str, str]] = None) -> bool:
    env = os.environ if environ is None else environ
    return env.get(OFFLINE_ENV, "").strip().lower() in {"1", "true", "yes", "on"}


def load_provider_settings() -> Dict[str, str]:
    return _load_section(PROVIDER_SECTION, PROVIDER_KEYS)


def save_provider_setting(key: str, value: str) -> None:
    if key not in PROVIDER_KEYS:
        raise InvalidInput(f"unknown provider setting {key!r}")
    _save_value(PROVIDER_SECTION, key, value)


def load_cost_defaults() -> DefaultCosts:
    values = _load_section(COSTS_SECTION, COST_KEYS)
    try:
        return DefaultCosts(
            c_compute=float(values.get("compute", 1.0)),
            c_time=float(values.get("time", 1.0)),
            c_model=float(values.get("model", 1.0)),
        )
    except ValueError as exc:
        raise InvalidInput(f"invalid [{COSTS_SECTION}] value in {_config_file()}: {exc}") from exc


def save_cost_defaults(defaults: DefaultCosts) -> None:
    config = _load_or_create(COSTS_SECTION)
    config[COSTS_SECTION]["compute"] = repr(defaults.c_compute)
    config[COSTS_SECTION]["time"] = repr(defaults.c_time)
    config[COSTS_SECTION]["model"] = repr(defaults.c_model)
    _write_config(config)


def resolve_provider_config(
    overrides: Optional[Mapping[str, object]] = None,
    *,
    environ: Optional[Mapping[str, str]] = None,
) -> ProviderConfig:
    """Merge built-in defaults, the settings file and explicit overrides.

    Overrides with a value of None are ignored. The offline environment flag
    wins over everything else.
    """
    stored = load_provider_settings()
    merged: Dict[str, object] = {}
    try:
        if "endpoint_url" in stored:
            merged["endpoint_url"] = stored["endpoint_url"]
        if "api_key_env" in stored:
            merged["api_key_env"] = stored["api_key_env"]
        if "timeout" in stored:
            merged["timeout"] = float(stored["timeout"])
        if "max_in_flight" in stored:
            merged["max_in_flight"] = int(stored["max_in_flight"])
        if "dimension" in stored:
            merged["dimension"] = int(stored["dimension"])
    except ValueError as exc:
        raise InvalidInput(f"invalid [{PROVIDER_SECTION}] value in {_config_file()}: {exc}") from exc
    merged["judge_prompt"] = stored.get("judge_prompt", DEFAULT_JUDGE_PROMPT)
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value
    if "offline_mode" not in merged:
        merged["offline_mode"] = not merged.get("endpoint_url")
    if offline_forced(environ):
        if not merged["offline_mode"]:
            LOGGER.info("%s is set; forcing offline providers.", OFFLINE_ENV)
        merged["offline_mode"] = True
    return ProviderConfig(**merged)  # type: ignore[arg-type]


def _load_section(section: str, keys: tuple) -> Dict[str, str]:
    config = _read_config()
    if config is None or section not in config:
        return {}
    values = config[section]
    return {key: values[key] for key in keys if key in values and values[key].strip()}


def _save_value(section: str, key: str, value: str) -> None:
    config = _load_or_create(section)
    config[section][key] = value
    _write_config(config)


def _load_or_create(section: str) -> configparser.ConfigParser:
    config = _read_config()
    if config is None:
        config = configparser.ConfigParser(interpolation=None)
    if section not in config:
        config[section] = {}
    return config


def _read_config() -> Optional[configparser.ConfigParser]:
    file_path = _config_file()
    if not file_path.exists():
        return None
    config = configparser.ConfigParser(interpolation=None)
    config.read(file_path, encoding="utf-8")
    return config


def _write_config(config: configparser.ConfigParser) -> None:
    file_path = _config_file()
    with file_path.open("w", encoding="utf-8") as handle:
        config.write(handle)
