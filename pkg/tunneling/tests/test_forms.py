# tunneling/tests/test_forms.py
import os
import unittest

from tunneling.exceptions import ConfigError
from tunneling.forms import ConfigForm, parse_config

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))), "configs")

VALID = """
# canonical deep well
barrier_height = 1.4
gamma = 0.1
omega_c = 10
temperature = 0.1
levels = 4
amplitudes = 0, 0.02, 0.04
omega = resonant
mode = avg-rates
"""


class ConfigFormTests(unittest.TestCase):
    def test_valid_config(self):
        form = ConfigForm(VALID)
        self.assertTrue(form.is_valid())
        cfg = form.cleaned_data
        self.assertEqual(cfg.amplitudes, [0.0, 0.02, 0.04])
        self.assertIsNone(cfg.omega)
        self.assertTrue(cfg.resonant)
        self.assertEqual(cfg.mode, "avg-rates")
        self.assertEqual(form.errors, [])

    def test_defaults_fill_missing_keys(self):
        cfg = parse_config("mode = gme\n")
        self.assertEqual(cfg.barrier_height, 1.4)
        self.assertEqual(cfg.omega, 0.815)
        self.assertEqual(cfg.amplitudes, [0.0])

    def test_mode_aliases(self):
        self.assertEqual(parse_config("mode = higher_order").mode, "higher-order")
        self.assertEqual(parse_config("mode = AVERAGED").mode, "avg-rates")
        self.assertEqual(parse_config("mode = rate_vs_n\nlevels_list = 2, 4").mode, "rate-vs-n")

    def test_amplitude_range(self):
        cfg = parse_config("amplitude_range = 0, 0.1, 5")
        self.assertEqual(len(cfg.amplitudes), 5)
        self.assertAlmostEqual(cfg.amplitudes[-1], 0.1)

    def test_auto_values(self):
        cfg = parse_config("t_mem = auto\ngrid_extent = none")
        self.assertIsNone(cfg.t_mem)
        self.assertIsNone(cfg.grid_extent)

    def test_overrides_win(self):
        cfg = parse_config("mode = gme", overrides={"mode": "markov", "output_dir": "/tmp/out"})
        self.assertEqual(cfg.mode, "markov")
        self.assertEqual(cfg.output_dir, "/tmp/out")

    def test_length_unit_scales_drive(self):
        harmonic = parse_config("amplitudes = 0.1")
        minima = parse_config("amplitudes = 0.1\nlength_unit = minima")
        d0 = 2.0 * (8.0 * 1.4) ** 0.5
        self.assertAlmostEqual(harmonic.drive(0.1, 0.8).amplitude, 0.1)
        self.assertAlmostEqual(minima.drive(0.1, 0.8).amplitude, 0.1 / d0)
        self.assertFalse(ConfigForm("length_unit = furlong").is_valid())

    def test_sample_configs_parse(self):
        for name in sorted(os.listdir(CONFIG_DIR)):
            with open(os.path.join(CONFIG_DIR, name)) as f:
                with self.subTest(config=name):
                    self.assertTrue(ConfigForm(f.read()).is_valid())
        with open(os.path.join(CONFIG_DIR, "rates_vs_amplitude.cfg")) as f:
            self.assertEqual(len(parse_config(f.read()).amplitudes), 20)

    def test_none_overrides_ignored(self):
        self.assertEqual(parse_config("mode = gme", overrides={"mode": None}).mode, "gme")


class ConfigErrorTests(unittest.TestCase):
    def errors_for(self, text):
        with self.assertRaises(ConfigError) as ctx:
            parse_config(text)
        return ctx.exception.messages

    def test_unknown_key_has_line_number(self):
        messages = self.errors_for("gamma = 0.1\nfriction = 3\n")
        self.assertEqual(messages, ["line 2: unknown key 'friction'"])

    def test_missing_equals(self):
        messages = self.errors_for("gamma 0.1\n")
        self.assertTrue(messages[0].startswith("line 1: expected 'key = value'"))

    def test_duplicate_key(self):
        messages = self.errors_for("gamma = 0.1\n\ngamma = 0.2\n")
        self.assertEqual(messages, ["line 3: duplicate key 'gamma' (first set on line 1)"])

    def test_collects_every_problem(self):
        messages = self.errors_for("bogus = 1\ngamma 0.1\nlevels = 4\nlevels = 6\n")
        self.assertEqual(len(messages), 3)

    def test_unparseable_value(self):
        messages = self.errors_for("temperature = warm\n")
        self.assertTrue(messages[0].startswith("line 1: temperature:"))

    def test_out_of_range_value(self):
        messages = self.errors_for("gamma = -0.1\n")
        self.assertTrue(messages[0].startswith("line 1: gamma:"))

    def test_odd_level_count(self):
        messages = self.errors_for("levels = 5\n")
        self.assertIn("levels must be even", messages[0])
        self.assertTrue(messages[0].startswith("config:"))

    def test_odd_series_order(self):
        self.assertIn("n_max must be even", self.errors_for("n_max = 3\n")[0])

    def test_negative_amplitude(self):
        self.assertIn("amplitudes", self.errors_for("amplitudes = 0, -0.1\n")[0])

    def test_rate_vs_n_needs_levels_list(self):
        self.assertIn("levels_list", self.errors_for("mode = rate-vs-n\n")[0])

    def test_rate_vs_n_needs_even_levels(self):
        self.assertIn("even", self.errors_for("mode = rate-vs-n\nlevels_list = 2, 3\n")[0])

    def test_population_modes_take_one_amplitude(self):
        self.assertIn("single amplitude", self.errors_for("mode = gme\namplitudes = 0, 0.1\n")[0])

    def test_memory_longer_than_run(self):
        self.assertIn("t_mem", self.errors_for("t_end = 10\nt_mem = 20\n")[0])

    def test_unknown_mode(self):
        self.assertTrue(self.errors_for("mode = fancy\n")[0].startswith("line 1: mode:"))

    def test_range_and_list_conflict(self):
        messages = self.errors_for("amplitudes = 0\namplitude_range = 0, 1, 3\n")
        self.assertEqual(messages, ["line 2: amplitude_range: give either amplitudes or amplitude_range, not both"])

    def test_bad_range(self):
        self.assertIn("start, stop, count", self.errors_for("amplitude_range = 0, 1\n")[0])


if __name__ == "__main__":
    unittest.main()
