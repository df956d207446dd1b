# config.py

import os
import typing
from dataclasses import fields, replace

from dotenv import dotenv_values, load_dotenv

from logger import logger
from market_sim import SimConfig, validate_sim_config
from protocol_types import PARAM_FIELDS, ProtocolError, ProtocolParams

load_dotenv()

# Output file names
EVENTS_FILE = 'events.log'
SUMMARY_FILE = 'summary.json'
FINAL_SCORES_FILE = 'final_scores.csv'

# AWS S3 configurations (optional upload of run outputs)
S3_BUCKET = os.getenv('GRADIENTS_SIM_S3_BUCKET', '')
S3_FOLDER = os.getenv('GRADIENTS_SIM_S3_PREFIX', 'gradients-sim-runs')

SIM_FIELDS = tuple(f.name for f in fields(SimConfig) if f.name != 'params')


class ConfigError(ProtocolError):
    pass


def _parse_bool(value):
    lowered = value.strip().lower()
    if lowered in ('true', '1', 'yes', 'on'):
        return True
    if lowered in ('false', '0', 'no', 'off'):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _parse_range(value):
    lo, hi = (int(part) for part in value.split(','))
    return (lo, hi)


def _parse_windows(value):
    windows = []
    for item in value.split(','):
        days, weight = item.split(':')
        windows.append((int(days), float(weight)))
    return tuple(windows)


def convert_value(value, type_):
    """Convert one config string to the type of the field it sets."""
    if type_ is bool:
        return _parse_bool(value)
    if type_ is int:
        return int(value)
    if type_ is float:
        return float(value)
    if type_ == typing.Tuple[int, int]:
        return _parse_range(value)
    if type_ == typing.Tuple[typing.Tuple[int, float], ...]:
        return _parse_windows(value)
    return value.strip()


def parse_config_values(values):
    """Split flat key/value pairs into ProtocolParams and SimConfig overrides."""
    param_types = typing.get_type_hints(ProtocolParams)
    sim_types = typing.get_type_hints(SimConfig)
    param_overrides, sim_overrides = {}, {}

    for raw_key, raw_value in values.items():
        key = raw_key.strip().lower()
        if raw_value is None:
            raise ConfigError(f"{key}: missing value")
        if key in PARAM_FIELDS:
            target, type_ = param_overrides, param_types[key]
        elif key in SIM_FIELDS:
            target, type_ = sim_overrides, sim_types[key]
        else:
            raise ConfigError(f"{key}: unknown config key")
        try:
            target[key] = convert_value(raw_value, type_)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{key}: cannot parse {raw_value!r} ({e})") from None

    return param_overrides, sim_overrides


def load_sim_config(config_path, seed_override=None):
    """Read a flat KEY=VALUE file into a validated SimConfig; an empty file gives the defaults."""
    if not os.path.isfile(config_path):
        raise ConfigError(f"config: file not found: {config_path}")
    try:
        values = dotenv_values(config_path)
    except (OSError, UnicodeDecodeError) as e:
        raise ConfigError(f"config: cannot read {config_path} ({e})") from None

    param_overrides, sim_overrides = parse_config_values(values)
    if seed_override is not None:
        sim_overrides['seed'] = int(seed_override)

    params = replace(ProtocolParams(), **param_overrides)
    cfg = replace(SimConfig(), params=params, **sim_overrides)
    validate_sim_config(cfg)
    logger.info(f"Loaded config from {config_path}: {len(param_overrides)} protocol and "
                f"{len(sim_overrides)} simulation overrides, seed {cfg.seed}")
    return cfg
