"""
Configuration manager for sscm_spectra
"""
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

from .exceptions import InputValidationError

logger = logging.getLogger(__name__)

THREADS_ENV = 'SSCM_THREADS'

# flat keys of a JSON config that belong to the simulation section
SIMULATION_KEYS = ('design', 'psd', 'c', 'n_list', 'replications', 'level', 'alpha',
                   'seed', 'radius', 'threads', 'order', 'family', 'x_values', 'model', 'name')


def _merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _merge(base[key], value)
        else:
            base[key] = value
    return base


class ConfigManager:
    """Manages experiment and solver configuration"""

    def __init__(self, config_dir: Optional[str] = None, config_file: Optional[str] = None):
        """
        Initialize configuration manager

        Args:
            config_dir: Path to configuration directory (default: ./config)
            config_file: Optional JSON file merged over the defaults
        """
        if config_dir is None:
            config_dir = os.path.join(
                os.path.dirname(os.path.dirname(os.path.dirname(__file__))),
                "config"
            )

        self.config_dir = Path(config_dir)
        self.default_config_path = self.config_dir / "default_config.yaml"
        self.config_file = Path(config_file) if config_file else None

        self.config = self._load_config()

    def _load_config(self) -> Dict[str, Any]:
        """Load defaults, the JSON override and the environment"""
        config: Dict[str, Any] = {}
        if self.default_config_path.exists():
            with open(self.default_config_path, 'r') as f:
                config = yaml.safe_load(f) or {}

        if self.config_file is not None:
            _merge(config, self._read_json(self.config_file))

        threads = os.environ.get(THREADS_ENV)
        if threads:
            try:
                value = int(threads)
            except ValueError:
                raise InputValidationError(f"{THREADS_ENV} must be an integer, got '{threads}'")
            if value < 1:
                raise InputValidationError(f"{THREADS_ENV} must be positive, got {value}")
            config.setdefault('simulation', {})['threads'] = value

        return config

    def _read_json(self, path: Path) -> Dict[str, Any]:
        """Read a JSON config, moving flat experiment keys under 'simulation'"""
        try:
            with open(path, 'r') as f:
                loaded = json.load(f)
        except FileNotFoundError:
            raise InputValidationError(f"config file not found: {path}")
        except json.JSONDecodeError as e:
            raise InputValidationError(f"invalid JSON in {path}: {e}")
        if not isinstance(loaded, dict):
            raise InputValidationError(f"config file {path} must hold a JSON object")

        nested: Dict[str, Any] = {}
        for key, value in loaded.items():
            if key in SIMULATION_KEYS:
                nested.setdefault('simulation', {})[key] = value
            else:
                _merge(nested, {key: value})
        logger.debug(f"Loaded config overrides from {path}")
        return nested

    def get(self, key: str, default: Any = None) -> Any:
        """
        Get configuration value

        Args:
            key: Configuration key (supports dot notation like 'simulation.seed')
            default: Default value if key not found

        Returns:
            Configuration value
        """
        value = self.config
        for k in key.split('.'):
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default
        return value

    def set(self, key: str, value: Any) -> None:
        """
        Set configuration value in memory

        Args:
            key: Configuration key (supports dot notation)
            value: Value to set
        """
        keys = key.split('.')
        config = self.config
        for k in keys[:-1]:
            if not isinstance(config.get(k), dict):
                config[k] = {}
            config = config[k]
        config[keys[-1]] = value

    def get_all(self) -> Dict[str, Any]:
        """Get all configuration"""
        return json.loads(json.dumps(self.config))
