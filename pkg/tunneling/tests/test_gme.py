# tunneling/tests/test_gme.py
import math
import os
import tempfile
import unittest
from unittest.mock import patch

import numpy as np

from tunneling import gme
from tunneling.bath import HighTemperatureCorrelation, exact_correlation
from tunneling.dvr import build_dvr, localized_initial_state
from tunneling.exceptions import ConfigError, PropagationError
from tunneling.gme import (
    fit_decay_rate,
    markov_reference,
    propagate_gme,
    resolve_step,
    trajectory_to_csv,
)
from tunneling.kernels import KernelSet, build_kernel_set
from tunneling.models import BathModel, DriveSpec, GridSpec, PotentialSpec, PropagationSpec, Trajectory
from tunneling.rates import averaged_rates, decay_rate, instantaneous_rates
from tunneling.spectrum import solve_spectrum
from tunneling.tests.helpers import four_level_basis, slow, two_level_basis
from tunneling.utils import read_csv_rows

UNDRIVEN = DriveSpec(amplitude=0.0, frequency=0.8)
FROZEN = BathModel(gamma=0.0, cutoff=10.0, temperature=0.1)
HOT = BathModel(gamma=0.1, cutoff=10.0, temperature=1.0)


def exact_set(basis, bath, drive=UNDRIVEN):
    return KernelSet(basis, bath, drive, lambda lag: exact_correlation(lag, bath))


def synthetic_trajectory(left):
    times = np.linspace(0.0, 100.0, 1001)
    left = left(times)
    populations = np.column_stack([left, 1.0 - left])
    return Trajectory(times=times, populations=populations, left_population=left)


class StepSelectionTests(unittest.TestCase):
    def test_snaps_to_drive_period(self):
        drive = DriveSpec(amplitude=0.1, frequency=0.8)
        ks = exact_set(two_level_basis(delta=0.5), HOT, drive)
        h = resolve_step(ks, PropagationSpec(step=0.1, t_end=50.0))
        self.assertAlmostEqual(drive.period / h, round(drive.period / h), places=9)
        self.assertLessEqual(h, 0.1)

    def test_coarse_drive_sampling_rejected(self):
        ks = exact_set(two_level_basis(delta=0.1), HOT, DriveSpec(amplitude=0.1, frequency=0.8))
        with self.assertRaises(ConfigError):
            resolve_step(ks, PropagationSpec(step=0.2, t_end=50.0))

    def test_step_must_resolve_tunneling(self):
        ks = exact_set(two_level_basis(delta=0.5), HOT)
        self.assertEqual(resolve_step(ks, PropagationSpec(step=0.2, t_end=50.0)), 0.2)
        with self.assertRaises(ConfigError):
            resolve_step(ks, PropagationSpec(step=0.3, t_end=50.0))


class UndampedPropagationTests(unittest.TestCase):
    def test_no_tunneling_keeps_populations(self):
        basis = two_level_basis(delta=0.0)
        traj = propagate_gme(exact_set(basis, HOT), localized_initial_state(basis), PropagationSpec(step=0.1, t_end=20.0))
        np.testing.assert_allclose(traj.populations, np.tile([1.0, 0.0], (len(traj.times), 1)), atol=1e-15)

    def test_coherent_two_level_oscillation(self):
        basis = two_level_basis(delta=0.5)
        period = 2 * math.pi / 0.5
        spec = PropagationSpec(step=0.01, t_end=3 * period)
        traj = propagate_gme(exact_set(basis, FROZEN), localized_initial_state(basis), spec)
        expected = 0.5 * (1.0 + np.cos(0.5 * traj.times))
        np.testing.assert_allclose(traj.left_population, expected, atol=1e-4)
        self.assertLess(traj.trace_drift, 1e-10)

    def test_intrawell_eigenstate_is_stationary(self):
        # without doublet splittings |L1> is an energy eigenstate
        basis = four_level_basis(delta1=0.0, delta2=0.0)
        init = localized_initial_state(basis)
        traj = propagate_gme(exact_set(basis, FROZEN), init, PropagationSpec(step=0.01, t_end=20.0))
        np.testing.assert_allclose(traj.populations, np.tile(init.populations, (len(traj.times), 1)), atol=1e-4)


class DampedPropagationTests(unittest.TestCase):
    def test_trace_conserved_with_drive(self):
        basis = four_level_basis()
        ks = build_kernel_set(basis, BathModel(gamma=0.1, cutoff=10.0, temperature=0.1), DriveSpec(amplitude=0.05, frequency=0.8))
        traj = propagate_gme(ks, localized_initial_state(basis), PropagationSpec(step=0.05, t_end=30.0, t_mem=15.0))
        self.assertLess(traj.trace_drift, 1e-8)
        self.assertTrue(np.all(traj.populations > -1e-6))
        self.assertEqual(traj.metadata["scheme"], "gme")
        self.assertEqual(traj.metadata["memory_steps"], int(math.ceil(15.0 / traj.metadata["step"] - 1e-9)))

    def test_relaxation_rate_matches_golden_rule(self):
        basis = two_level_basis(delta=0.05, half_width=1.0)
        ks = KernelSet(basis, HOT, UNDRIVEN, HighTemperatureCorrelation(HOT))
        traj = propagate_gme(ks, localized_initial_state(basis), PropagationSpec(step=0.1, t_end=300.0))
        fit = fit_decay_rate(traj)
        self.assertFalse(fit.flagged)
        expected = decay_rate(averaged_rates(ks)).rate
        self.assertAlmostEqual(fit.rate / expected, 1.0, delta=0.05)

    def test_metadata_hashes_are_deterministic(self):
        basis = two_level_basis(delta=0.0)
        spec = PropagationSpec(step=0.1, t_end=2.0)
        first = propagate_gme(exact_set(basis, HOT), localized_initial_state(basis), spec)
        second = propagate_gme(exact_set(basis, HOT), localized_initial_state(basis), spec)
        self.assertEqual(first.metadata, second.metadata)

    def test_size_mismatch_rejected(self):
        with self.assertRaises(ConfigError):
            propagate_gme(exact_set(four_level_basis(), HOT), localized_initial_state(two_level_basis()), PropagationSpec())


class RetryTests(unittest.TestCase):
    def setUp(self):
        self.basis = two_level_basis(delta=0.5)
        self.ks = exact_set(self.basis, FROZEN)
        self.spec = PropagationSpec(step=0.1, t_end=5.0)

    def test_retries_once_with_half_step(self):
        calls = []
        original = gme._check_state

        def fail_first(rho, k, t, spec):
            calls.append(k)
            if len(calls) == 1:
                raise PropagationError("trace drift", {"step": k})
            return original(rho, k, t, spec)

        with patch("tunneling.gme._check_state", side_effect=fail_first):
            with self.assertLogs("tunneling.gme", level="WARNING"):
                traj = propagate_gme(self.ks, localized_initial_state(self.basis), self.spec)
        self.assertAlmostEqual(traj.metadata["step"], 0.05)
        self.assertEqual(len(traj.times), 101)

    def test_second_failure_is_reported(self):
        with patch("tunneling.gme._check_state", side_effect=PropagationError("population out of range", {"step": 1})):
            with self.assertRaises(PropagationError) as ctx:
                propagate_gme(self.ks, localized_initial_state(self.basis), self.spec)
        self.assertEqual(ctx.exception.diagnostic["step"], 1)

    def test_tolerance_breach_detected(self):
        with self.assertRaises(PropagationError):
            gme._check_state(np.array([0.7, 0.4]), 3, 0.3, self.spec)
        with self.assertRaises(PropagationError):
            gme._check_state(np.array([1.1, -0.1]), 3, 0.3, self.spec)


class MarkovTests(unittest.TestCase):
    def test_no_tunneling_keeps_populations(self):
        basis = two_level_basis(delta=0.0)
        ks = KernelSet(basis, HOT, UNDRIVEN, HighTemperatureCorrelation(HOT))
        traj = markov_reference(ks, localized_initial_state(basis), PropagationSpec(step=0.1, t_end=10.0))
        np.testing.assert_allclose(traj.left_population, np.ones(len(traj.times)))

    def test_exponential_relaxation_to_equal_populations(self):
        basis = two_level_basis(delta=0.5, half_width=1.0)
        ks = KernelSet(basis, HOT, UNDRIVEN, HighTemperatureCorrelation(HOT))
        traj = markov_reference(ks, localized_initial_state(basis), PropagationSpec(step=0.1, t_end=60.0))
        rate = instantaneous_rates(ks, 0.0).matrix[1, 0]
        expected = 0.5 + 0.5 * np.exp(-2 * rate * traj.times)
        np.testing.assert_allclose(traj.left_population, expected, atol=1e-10)
        self.assertAlmostEqual(traj.left_population[-1], 0.5, places=8)
        self.assertEqual(traj.metadata["scheme"], "markov")


class DecayFitTests(unittest.TestCase):
    def test_recovers_exponential_rate(self):
        fit = fit_decay_rate(synthetic_trajectory(lambda t: 0.5 + 0.5 * np.exp(-0.05 * t)))
        self.assertAlmostEqual(fit.rate, 0.05, places=10)
        self.assertLess(fit.rms_residual, 1e-10)
        self.assertFalse(fit.flagged)

    def test_custom_equilibrium(self):
        fit = fit_decay_rate(synthetic_trajectory(lambda t: 0.3 + 0.7 * np.exp(-0.02 * t)), p_inf=0.3)
        self.assertAlmostEqual(fit.rate, 0.02, places=10)

    def test_burn_in_window(self):
        # fast transient followed by the slow mode
        traj = synthetic_trajectory(lambda t: 0.5 + 0.25 * np.exp(-2.0 * t) + 0.25 * np.exp(-0.03 * t))
        fit = fit_decay_rate(traj, t_burn=20.0)
        self.assertAlmostEqual(fit.rate, 0.03, places=6)

    def test_constant_signal_flagged(self):
        fit = fit_decay_rate(synthetic_trajectory(lambda t: np.ones_like(t)))
        self.assertTrue(fit.flagged)
        self.assertEqual(fit.reason, "constant signal")

    def test_signal_at_equilibrium_flagged(self):
        fit = fit_decay_rate(synthetic_trajectory(lambda t: np.where(t < 5.0, 1.0, 0.5)))
        self.assertTrue(fit.flagged)

    def test_oscillating_signal_flagged(self):
        with self.assertLogs("tunneling.gme", level="WARNING"):
            fit = fit_decay_rate(synthetic_trajectory(lambda t: 0.5 + 0.5 * np.exp(-0.01 * t) * np.cos(t)))
        self.assertTrue(fit.flagged)
        self.assertEqual(fit.reason, "non-monotone signal")


class ExportTests(unittest.TestCase):
    def test_trajectory_csv(self):
        traj = synthetic_trajectory(lambda t: 0.5 + 0.5 * np.exp(-0.05 * t))
        with tempfile.TemporaryDirectory() as tmp:
            path = trajectory_to_csv(traj, os.path.join(tmp, "population.csv"), metadata={"amplitude": 0.0})
            rows = read_csv_rows(path)
            with open(path) as f:
                lines = f.read().splitlines()
        self.assertIn("t,rho_1,rho_2,P_L", lines)
        self.assertIn("# amplitude: 0.0", lines)
        self.assertEqual(rows.shape, (1001, 4))
        np.testing.assert_allclose(rows[:, 3], traj.left_population, rtol=1e-11)


class CanonicalWellTests(unittest.TestCase):
    @slow
    def test_gme_follows_the_markov_reference_under_resonant_drive(self):
        spectrum = solve_spectrum(PotentialSpec(barrier_height=1.4), GridSpec(), 4)
        basis = build_dvr(spectrum.position, spectrum.energies)
        bath = BathModel(gamma=0.1, cutoff=10.0, temperature=0.1)
        ks = build_kernel_set(basis, bath, DriveSpec(amplitude=1.0, frequency=0.815))
        init = localized_initial_state(basis, spectrum)
        spec = PropagationSpec(step=0.1, t_end=300.0)
        traj = propagate_gme(ks, init, spec)
        markov = markov_reference(ks, init, spec)

        gme_left = np.interp(markov.times, traj.times, traj.left_population)
        self.assertLess(np.max(np.abs(gme_left - markov.left_population)), 0.05)
        self.assertLess(fit_decay_rate(traj, t_burn=50.0).rms_residual, 0.02)


if __name__ == "__main__":
    unittest.main()
