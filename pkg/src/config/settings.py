import configparser
import json
import logging
import os
from dataclasses import fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from m3rnet.config import VARIANTS, ModelConfig, TrainHyper
from utils.errors import ConfigError

LOG_LEVELS = ('error', 'warn', 'warning', 'info', 'debug')

_SECTION = 'run'
_NONE_WORDS = ('none', 'null', '')


def _model_defaults() -> Dict[str, Any]:
    return {f.name: f.default for f in fields(ModelConfig)}


def _train_defaults() -> Dict[str, Any]:
    return {f.name: f.default for f in fields(TrainHyper) if f.name != 'seed'}


def default_config() -> Dict[str, Any]:
    defaults: Dict[str, Any] = {
        'log_level': 'info',
        'log_file': None,
        'max_log_size_mb': 10,
        'backup_count': 5,
        'seed': 0,
        'jobs': 1,
        'target_lat': None,
        'target_lon': None,
        'roi_size': 100,
        'step_seconds': 900,
        'threshold': 3.0,
        'match_tolerance_seconds': 450,
        'train_frac': 0.85,
        'precip_window_hours': 2.5,
        'repair_violations': True,
        'zr_a': 200.0,
        'zr_b': 1.6,
        'ablation_repeats': 1,
    }
    defaults.update(_train_defaults())
    defaults.update(_model_defaults())
    return defaults


# keys whose default is None still need a type for coercion
_NONE_TYPES = {'log_file': str, 'target_lat': float, 'target_lon': float}


def coerce_value(key: str, raw: Any, default: Any, source: str = '<command line>') -> Any:
    """Convert `raw` to the type of `default`."""
    if not isinstance(raw, str):
        return raw
    text = raw.strip()

    if default is None:
        if text.lower() in _NONE_WORDS:
            return None
        kind = _NONE_TYPES.get(key, str)
    else:
        kind = type(default)

    try:
        if kind is bool:
            lowered = text.lower()
            if lowered in ('true', 'yes', 'on', '1'):
                return True
            if lowered in ('false', 'no', 'off', '0'):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        return text
    except ValueError as e:
        raise ConfigError(f"Invalid value for {key}: {e}", path=source) from e


def read_key_value_file(path: Union[str, Path], defaults: Dict[str, Any]) -> Dict[str, Any]:
    """Parse a `key=value` file (comments with # or ;) against a typed defaults table."""
    p = Path(path)
    if not p.exists():
        raise ConfigError("Config file does not exist", path=p)

    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=('#', ';'))
    parser.optionxform = str
    try:
        parser.read_string(f"[{_SECTION}]\n" + p.read_text(encoding='utf-8'), source=str(p))
    except configparser.Error as e:
        raise ConfigError(f"Cannot parse config file: {e}", path=p) from e

    values = {}
    for key, raw in parser.items(_SECTION):
        if key not in defaults:
            raise ConfigError(f"Unknown key {key!r}", path=p)
        values[key] = coerce_value(key, raw, defaults[key], source=str(p))
    return values


class ConfigManager:
    """Effective run configuration: defaults < config file < command-line overrides."""

    def __init__(self, config_file: Optional[Union[str, Path]] = None):
        self.logger = logging.getLogger(__name__)
        self.config_file = Path(config_file) if config_file else None
        self.default_config = default_config()
        self.config: Dict[str, Any] = dict(self.default_config)
        self.sources: Dict[str, str] = {key: 'default' for key in self.config}
        self.load_config()

    def load_config(self):
        if self.config_file is None:
            return
        values = read_key_value_file(self.config_file, self.default_config)
        self.config.update(values)
        self.sources.update({key: str(self.config_file) for key in values})
        self.logger.debug(f"Loaded {len(values)} setting(s) from {self.config_file}")

    def get(self, key: str, fallback: Any = None) -> Any:
        if key not in self.config:
            return fallback
        value = self.config[key]
        return fallback if value is None and fallback is not None else value

    def set(self, key: str, value: Any, source: str = 'command line'):
        if key not in self.default_config:
            raise ConfigError(f"Unknown key {key!r}")
        self.config[key] = coerce_value(key, value, self.default_config[key])
        self.sources[key] = source

    def apply_overrides(self, overrides: Dict[str, Any]):
        for key, value in overrides.items():
            if value is not None:
                self.set(key, value)

    def get_logging_config(self) -> Dict[str, Any]:
        return {
            'level': self.get('log_level'),
            'log_file': self.get('log_file'),
            'max_log_size_mb': self.get('max_log_size_mb'),
            'backup_count': self.get('backup_count'),
        }

    def get_model_config(self) -> ModelConfig:
        return ModelConfig(**{key: self.get(key) for key in _model_defaults()}).validate()

    def get_train_hyper(self) -> TrainHyper:
        values = {key: self.get(key) for key in _train_defaults()}
        return TrainHyper(seed=self.get('seed'), **values).validate()

    def export_config(self, export_path: Union[str, Path]) -> str:
        export_file = Path(export_path)
        export_file.parent.mkdir(parents=True, exist_ok=True)
        with open(export_file, 'w', encoding='utf-8') as f:
            json.dump(self.config, f, indent=2, ensure_ascii=False)
        self.logger.info(f"Configuration exported to {export_file}")
        return str(export_file)

    def to_text(self) -> str:
        lines = []
        for key in sorted(self.config):
            value = self.config[key]
            lines.append(f"{key}={'none' if value is None else value}  # {self.sources[key]}")
        return "\n".join(lines) + "\n"

    def validate_paths(self, paths: List[Union[str, Path]]):
        for path in paths:
            if not Path(path).exists():
                raise ConfigError("Input path does not exist", path=path)

    def validate_config(self) -> Dict[str, List[str]]:
        issues = {
            'errors': [],
            'warnings': []
        }

        if str(self.get('log_level')).lower() not in LOG_LEVELS:
            issues['errors'].append(f"Unknown log_level: {self.get('log_level')}")

        try:
            self.get_model_config()
        except ConfigError as e:
            issues['errors'].append(str(e))
        try:
            self.get_train_hyper()
        except ConfigError as e:
            issues['errors'].append(str(e))

        if self.get('variant') not in VARIANTS:
            issues['errors'].append(f"Unknown variant: {self.get('variant')}")

        if not 0.0 < self.get('train_frac') < 1.0:
            issues['errors'].append(f"train_frac must lie in (0, 1), got {self.get('train_frac')}")

        if (self.get('target_lat') is None) != (self.get('target_lon') is None):
            issues['errors'].append("target_lat and target_lon must be set together")

        if self.get('roi_size') < 2 or self.get('roi_size') % self.get('patch'):
            issues['warnings'].append(f"roi_size {self.get('roi_size')} is not a multiple of patch {self.get('patch')}")

        if self.get('roi_size') != self.get('height') or self.get('roi_size') != self.get('width'):
            issues['warnings'].append("roi_size differs from the model frame size (height/width)")

        if self.get('match_tolerance_seconds') > self.get('step_seconds') // 2:
            issues['warnings'].append("match tolerance exceeds half the frame step; rows may match two frames")

        if self.get('jobs') > (os.cpu_count() or 1):
            issues['warnings'].append(f"jobs={self.get('jobs')} exceeds available CPUs")

        log_file = self.get('log_file')
        if log_file:
            log_dir = Path(log_file).parent
            if not log_dir.exists():
                try:
                    log_dir.mkdir(parents=True, exist_ok=True)
                except OSError:
                    issues['errors'].append(f"Cannot create log directory: {log_dir}")

        return issues
