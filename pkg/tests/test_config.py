"""
Unit tests for ConfigManager
"""
import unittest
import tempfile
import shutil
import os
import json
import yaml
from unittest import mock

import sys
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from sscm_spectra.config import ConfigManager
from sscm_spectra.exceptions import InputValidationError


class TestConfigManager(unittest.TestCase):
    """Test configuration manager"""

    def setUp(self):
        """Set up test fixtures"""
        self.test_dir = tempfile.mkdtemp()

        # Create test default config
        self.default_config = {
            'simulation': {
                'replications': 2000,
                'seed': 20240501,
                'threads': 1,
            },
            'solver': {
                'tol': 1e-13,
                'max_iter': 10000,
            },
            'logging': {'level': 'INFO'},
        }

        default_config_path = os.path.join(self.test_dir, 'default_config.yaml')
        with open(default_config_path, 'w') as f:
            yaml.dump(self.default_config, f)

        patcher = mock.patch.dict(os.environ)
        patcher.start()
        self.addCleanup(patcher.stop)
        os.environ.pop('SSCM_THREADS', None)

    def tearDown(self):
        """Clean up test fixtures"""
        shutil.rmtree(self.test_dir)

    def _write_json(self, payload):
        path = os.path.join(self.test_dir, 'override.json')
        with open(path, 'w') as f:
            json.dump(payload, f)
        return path

    def test_load_default_config(self):
        """Test loading default configuration"""
        config = ConfigManager(self.test_dir)
        self.assertEqual(config.get('simulation.replications'), 2000)
        self.assertEqual(config.get('logging.level'), 'INFO')

    def test_get_nested_value(self):
        """Test getting nested configuration values"""
        config = ConfigManager(self.test_dir)
        self.assertEqual(config.get('solver.max_iter'), 10000)
        self.assertAlmostEqual(config.get('solver.tol'), 1e-13)

    def test_get_with_default(self):
        """Test getting with default value"""
        config = ConfigManager(self.test_dir)
        self.assertEqual(config.get('nonexistent.key', 'default'), 'default')

    def test_set_value(self):
        """Test setting configuration value"""
        config = ConfigManager(self.test_dir)
        config.set('simulation.seed', 7)
        self.assertEqual(config.get('simulation.seed'), 7)

    def test_set_does_not_persist(self):
        """Test that set values live in memory only"""
        config = ConfigManager(self.test_dir)
        config.set('simulation.seed', 7)

        config2 = ConfigManager(self.test_dir)
        self.assertEqual(config2.get('simulation.seed'), 20240501)

    def test_json_override_flat_keys(self):
        """Test that flat experiment keys of a JSON file land under simulation"""
        path = self._write_json({'seed': 42, 'psd': '0.5:0.5,1.5:0.5', 'c': [2.0]})
        config = ConfigManager(self.test_dir, config_file=path)
        self.assertEqual(config.get('simulation.seed'), 42)
        self.assertEqual(config.get('simulation.psd'), '0.5:0.5,1.5:0.5')
        self.assertEqual(config.get('simulation.c'), [2.0])
        # untouched defaults survive the merge
        self.assertEqual(config.get('simulation.replications'), 2000)

    def test_json_family_keys(self):
        """Test that family, x_values and name are experiment keys"""
        path = self._write_json({'family': 'model3', 'x_values': [0.0, 0.1], 'name': 'split'})
        config = ConfigManager(self.test_dir, config_file=path)
        self.assertEqual(config.get('simulation.family'), 'model3')
        self.assertEqual(config.get('simulation.x_values'), [0.0, 0.1])
        self.assertEqual(config.get('simulation.name'), 'split')

    def test_json_override_nested_section(self):
        """Test that nested sections are merged key by key"""
        path = self._write_json({'solver': {'max_iter': 50}})
        config = ConfigManager(self.test_dir, config_file=path)
        self.assertEqual(config.get('solver.max_iter'), 50)
        self.assertAlmostEqual(config.get('solver.tol'), 1e-13)

    def test_missing_json_file(self):
        """Test that a missing config file is an input error"""
        with self.assertRaises(InputValidationError):
            ConfigManager(self.test_dir, config_file=os.path.join(self.test_dir, 'absent.json'))

    def test_invalid_json_file(self):
        """Test that malformed JSON is an input error"""
        path = os.path.join(self.test_dir, 'bad.json')
        with open(path, 'w') as f:
            f.write('{"seed": ')
        with self.assertRaises(InputValidationError):
            ConfigManager(self.test_dir, config_file=path)

    def test_threads_environment_variable(self):
        """Test that SSCM_THREADS overrides the configured thread count"""
        path = self._write_json({'threads': 2})
        os.environ['SSCM_THREADS'] = '4'
        config = ConfigManager(self.test_dir, config_file=path)
        self.assertEqual(config.get('simulation.threads'), 4)

    def test_invalid_threads_environment_variable(self):
        """Test that a non-integer SSCM_THREADS is rejected"""
        os.environ['SSCM_THREADS'] = 'many'
        with self.assertRaises(InputValidationError):
            ConfigManager(self.test_dir)

    def test_get_all_is_a_copy(self):
        """Test that get_all does not expose internal state"""
        config = ConfigManager(self.test_dir)
        snapshot = config.get_all()
        snapshot['simulation']['seed'] = 1
        self.assertEqual(config.get('simulation.seed'), 20240501)

    def test_shipped_defaults(self):
        """Test the configuration shipped with the package"""
        config = ConfigManager()
        self.assertEqual(config.get('simulation.replications'), 2000)
        self.assertEqual(config.get('simulation.radius'), 'chi')
        self.assertAlmostEqual(config.get('solver.density_eps'), 1e-6)


if __name__ == '__main__':
    unittest.main()
