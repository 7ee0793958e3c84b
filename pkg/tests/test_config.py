#!/usr/bin/env python3
"""
Test suite for prenetctl configuration management
Tests configuration loading, validation, and environment variable handling
"""

import json
import os
from pathlib import Path
from unittest.mock import patch

import pytest

from prenetctl.config import CONFIG_TEMPLATE, PrenetConfig, create_config_template


@pytest.mark.config
@pytest.mark.usefixtures("clean_env")
class TestPrenetConfig:
    """Test suite for PrenetConfig class"""

    def test_default_config_loading(self):
        """Test that default configuration loads correctly"""
        config = PrenetConfig()

        assert config.get('log_level') == 'INFO'
        assert config.get('log_dir') is None
        assert config.get('num_workers') == 1
        assert config.get('prefetch') is False
        assert config.get('default_seed') == 0
        assert config.get('strict_dataset') is True
        assert config.get('dataset_naming') == 'filename'

    def test_config_file_loading(self, config_file):
        """Test file values override defaults and unknown keys are kept"""
        config = PrenetConfig(str(config_file))

        assert config.get('log_level') == 'WARNING'
        assert config.get('num_workers') == 3
        assert config.get('custom_setting') == 'test_value'
        assert config.get('default_seed') == 0

    def test_environment_variable_overrides(self, config_file):
        """Test that environment variables override file values"""
        with patch.dict(os.environ, {
            'PRENET_LOG_LEVEL': 'debug',
            'PRENET_NUM_WORKERS': '8',
            'PRENET_DEFAULT_SEED': '42',
        }):
            config = PrenetConfig(str(config_file))

            assert config.get('log_level') == 'DEBUG'
            assert config.get('num_workers') == 8
            assert config.get('default_seed') == 42

    @pytest.mark.parametrize("value,expected", [('true', True), ('TRUE', True), ('false', False), ('no', False)])
    def test_boolean_environment_variables(self, value, expected):
        """Test proper boolean parsing of PRENET_PREFETCH"""
        with patch.dict(os.environ, {'PRENET_PREFETCH': value}):
            assert PrenetConfig().get('prefetch') is expected

    def test_non_integer_environment_values_ignored(self):
        with patch.dict(os.environ, {'PRENET_NUM_WORKERS': 'many', 'PRENET_DEFAULT_SEED': '1.5'}):
            config = PrenetConfig()
            assert config.get('num_workers') == 1
            assert config.get('default_seed') == 0

    def test_empty_environment_variable(self):
        """Empty strings do not override defaults"""
        with patch.dict(os.environ, {'PRENET_LOG_LEVEL': ''}):
            assert PrenetConfig().get('log_level') == 'INFO'

    def test_path_expansion(self, temp_dir):
        path = temp_dir / "paths.json"
        path.write_text(json.dumps({"log_dir": "~/prenet-logs"}))

        config = PrenetConfig(str(path))

        assert not config.get('log_dir').startswith('~')
        assert config.get('log_dir').startswith(str(Path.home()))

    def test_config_validation(self, temp_dir):
        config = PrenetConfig()
        config.set('log_dir', str(temp_dir / "logs"))
        validations = config.validate()

        assert validations == {
            'log_level_valid': True,
            'num_workers_valid': True,
            'dataset_naming_valid': True,
            'log_dir_writable': True,
        }

    @pytest.mark.parametrize("key,value,check", [
        ('log_level', 'LOUD', 'log_level_valid'),
        ('num_workers', 0, 'num_workers_valid'),
        ('num_workers', '4', 'num_workers_valid'),
        ('dataset_naming', 'glob', 'dataset_naming_valid'),
    ])
    def test_invalid_values_flagged(self, key, value, check):
        config = PrenetConfig()
        config.set(key, value)
        assert config.validate()[check] is False

    def test_config_set_and_update(self):
        config = PrenetConfig()

        config.set('test_key', 'test_value')
        assert config.get('test_key') == 'test_value'

        config.update({'batch_key1': 'batch_value1', 'batch_key2': 'batch_value2'})
        assert config.get('batch_key1') == 'batch_value1'
        assert config.get('batch_key2') == 'batch_value2'

    def test_config_save_to_file(self, temp_dir):
        config = PrenetConfig()
        config.set('test_save_key', 'test_save_value')
        save_path = temp_dir / "saved.json"

        config.save_to_file(str(save_path))

        saved_config = json.loads(save_path.read_text())
        assert saved_config['test_save_key'] == 'test_save_value'
        assert PrenetConfig(str(save_path)).get('test_save_key') == 'test_save_value'

    def test_invalid_config_file_handling(self, temp_dir):
        """Malformed JSON falls back to defaults instead of crashing"""
        path = temp_dir / "broken.json"
        path.write_text("invalid json content {")

        assert PrenetConfig(str(path)).get('num_workers') == 1

    def test_nonexistent_config_file(self):
        config = PrenetConfig('/nonexistent/config.json')
        assert config.get('log_level') == 'INFO'

    def test_string_and_repr(self):
        config = PrenetConfig()
        assert json.loads(str(config))['dataset_naming'] == 'filename'
        assert repr(config).startswith('PrenetConfig(')
        assert 'settings' in repr(config)


@pytest.mark.config
class TestConfigTemplate:

    def test_config_template_creation(self, temp_dir):
        template_path = temp_dir / "template.json"
        create_config_template(str(template_path))

        template_config = json.loads(template_path.read_text())
        assert template_config == CONFIG_TEMPLATE
        assert template_config['dataset_naming'] == 'filename'

    @pytest.mark.usefixtures("clean_env")
    def test_template_is_loadable(self, temp_dir):
        template_path = temp_dir / "template.json"
        create_config_template(str(template_path))

        config = PrenetConfig(str(template_path))
        assert config.get('log_dir') == str(Path('~/.prenetctl/logs').expanduser())
        assert config.get('strict_dataset') is True
