# tunneling/tests/test_settings.py
import importlib
import logging
import os
import unittest
from unittest.mock import patch

from dvrgme import settings


class SettingsImportTests(unittest.TestCase):
    """Environment overrides of dvrgme/settings.py"""

    def tearDown(self):
        # re-read the untouched environment so later tests see the defaults
        importlib.reload(settings)

    @patch.dict(os.environ, {"DVRGME_GRID_POINTS": "1024", "DVRGME_QUAD_EPSREL": "1e-6"})
    def test_numeric_overrides(self):
        module = importlib.reload(settings)
        self.assertEqual(module.GRID_POINTS, 1024)
        self.assertEqual(module.QUAD_EPSREL, 1e-6)

    @patch.dict(os.environ, {"DVRGME_LOG_LEVEL": "debug"})
    def test_log_level_applies_to_both_loggers(self):
        module = importlib.reload(settings)
        self.assertEqual(module.LOG_LEVEL, "DEBUG")
        for name in ("tunneling", "dvrgme"):
            self.assertEqual(module.LOGGING["loggers"][name]["level"], "DEBUG")

    @patch.dict(os.environ, {"DVRGME_OUTPUT_DIR": "/tmp/dvrgme-out"})
    def test_output_dir_override(self):
        self.assertEqual(importlib.reload(settings).OUTPUT_DIR, "/tmp/dvrgme-out")

    @patch.dict(os.environ, {"DVRGME_WORKERS": "many"})
    def test_malformed_value_fails_loudly(self):
        with self.assertRaises(ValueError):
            importlib.reload(settings)

    def test_defaults(self):
        self.assertEqual(settings.SERIES_TOL, 0.01)
        self.assertEqual(settings.RATE_TAIL, 1e-10)
        self.assertEqual(settings.WORKERS, 1)

    def test_configure_logging(self):
        settings.configure_logging()
        logger = logging.getLogger("tunneling")
        self.assertFalse(logger.propagate)
        self.assertEqual(len(logger.handlers), 1)


if __name__ == "__main__":
    unittest.main()
