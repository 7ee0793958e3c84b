"""
Configuration management for prenetctl
Handles configuration from file, environment variables, and defaults
"""

import os
import json
from pathlib import Path
from typing import Dict, Optional

from prenetctl.logging_config import get_logger

logger = get_logger('config')

LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL')


class PrenetConfig:
    """Runtime configuration shared by every prenetctl command"""

    def __init__(self, config_path: Optional[str] = None):
        self.config = self._load_config(config_path)

    def _load_config(self, config_path: Optional[str]) -> Dict:
        """Load configuration from file, environment, or defaults"""
        config = self._get_defaults()

        # Override with config file if provided
        if config_path and Path(config_path).exists():
            try:
                with open(config_path, 'r') as f:
                    file_config = json.load(f)
                    config.update(file_config)
                logger.debug(f"Loaded config from: {config_path}")
            except (OSError, ValueError) as e:
                logger.warning(f"Failed to load config file {config_path}: {e}")

        # Override with environment variables
        env_overrides = {
            'log_level': os.getenv('PRENET_LOG_LEVEL'),
            'log_dir': os.getenv('PRENET_LOG_DIR'),
        }

        num_workers = os.getenv('PRENET_NUM_WORKERS')
        if num_workers:
            try:
                env_overrides['num_workers'] = int(num_workers)
            except ValueError:
                logger.warning(f"Ignoring non-integer PRENET_NUM_WORKERS={num_workers!r}")

        default_seed = os.getenv('PRENET_DEFAULT_SEED')
        if default_seed:
            try:
                env_overrides['default_seed'] = int(default_seed)
            except ValueError:
                logger.warning(f"Ignoring non-integer PRENET_DEFAULT_SEED={default_seed!r}")

        # Special handling for boolean environment variables
        prefetch = os.getenv('PRENET_PREFETCH')
        if prefetch is not None:
            env_overrides['prefetch'] = prefetch.lower() == 'true'

        for key, value in env_overrides.items():
            if value is not None and value != '':
                config[key] = value

        # Ensure paths are expanded
        for key in ['log_dir', 'log_file']:
            if config.get(key):
                config[key] = str(Path(config[key]).expanduser())

        config['log_level'] = str(config['log_level']).upper()
        return config

    def _get_defaults(self) -> Dict:
        """Default configuration values"""
        return {
            'log_level': 'INFO',
            'log_dir': None,   # No file logging unless set
            'log_file': None,  # Will default to log_dir/prenetctl.log
            'json_logs': True,
            'num_workers': 1,
            'prefetch': False,
            'default_seed': 0,
            'strict_dataset': True,
            'dataset_naming': 'filename',
        }

    def get(self, key: str, default=None):
        """Get configuration value"""
        return self.config.get(key, default)

    def set(self, key: str, value):
        """Set configuration value"""
        self.config[key] = value

    def update(self, updates: Dict):
        """Update multiple configuration values"""
        self.config.update(updates)

    def save_to_file(self, path: str):
        """Save current configuration to file"""
        with open(path, 'w') as f:
            json.dump(self.config, f, indent=2)
        logger.info(f"Configuration saved to: {path}")

    def validate(self) -> Dict[str, bool]:
        """Validate configuration settings"""
        validations = {}

        validations['log_level_valid'] = self.config.get('log_level') in LOG_LEVELS
        workers = self.config.get('num_workers', 1)
        validations['num_workers_valid'] = isinstance(workers, int) and 1 <= workers <= 64
        validations['dataset_naming_valid'] = self.config.get('dataset_naming') in ('filename', 'rain100h')

        log_dir = self.config.get('log_dir')
        if log_dir:
            path = Path(log_dir)
            try:
                path.mkdir(parents=True, exist_ok=True)
                validations['log_dir_writable'] = os.access(path, os.W_OK)
            except OSError:
                validations['log_dir_writable'] = False
        else:
            validations['log_dir_writable'] = True

        return validations

    def __str__(self) -> str:
        return json.dumps(self.config, indent=2)

    def __repr__(self) -> str:
        return f"PrenetConfig({len(self.config)} settings)"


# Example configuration file template
CONFIG_TEMPLATE = {
    "_comment": "prenetctl configuration file",
    "log_level": "INFO",
    "log_dir": "~/.prenetctl/logs",
    "num_workers": 1,
    "prefetch": False,
    "default_seed": 0,
    "strict_dataset": True,
    "dataset_naming": "filename"
}


def create_config_template(path: str):
    """Create a configuration file template"""
    with open(path, 'w') as f:
        json.dump(CONFIG_TEMPLATE, f, indent=2)
    logger.info(f"Configuration template created at: {path}")
