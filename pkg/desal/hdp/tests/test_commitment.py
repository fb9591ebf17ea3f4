"""Tests for :mod:`.commitment`."""

from unittest import TestCase

import numpy as np

from ..domain import FlushConfig, TimeGrid
from .. import commitment


class TestDeriveIndicators(TestCase):
    """Shutdown and restart indicators from an on/off sequence."""

    def test_indicators(self):
        plan = commitment.derive_indicators([1, 1, 0, 0, 1], True)
        self.assertEqual(plan.on, (1, 1, 0, 0, 1))
        self.assertEqual(plan.shut, (0, 0, 1, 0, 0))
        self.assertEqual(plan.start, (0, 0, 0, 0, 1))

    def test_initial_status(self):
        """The hour before the horizon decides the first indicator."""
        plan = commitment.derive_indicators([1, 0, 0], False)
        self.assertEqual(plan.start, (1, 0, 0))
        self.assertEqual(plan.shut, (0, 1, 0))
        plan = commitment.derive_indicators([0, 0, 1], True)
        self.assertEqual(plan.shut, (1, 0, 0))
        self.assertEqual(plan.start, (0, 0, 1))

    def test_rounds_relaxed_values(self):
        """Solver output close to integral is rounded."""
        plan = commitment.derive_indicators([0.9999999, 1e-9, 1.0], True)
        self.assertEqual(plan.on, (1, 0, 1))

    def test_never_both(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            on = rng.integers(0, 2, size=12)
            plan = commitment.derive_indicators(on, bool(rng.integers(2)))
            for s, u in zip(plan.shut, plan.start):
                self.assertLessEqual(s + u, 1)


class TestFlushConsumption(TestCase):
    """Water and energy drawn by flushing."""

    FLUSH = FlushConfig(water_shutdown=15.0, water_restart=10.0,
                        energy_shutdown=25.0, energy_restart=20.0)

    def test_booking(self):
        """Shutdown flush in the shut hour, restart flush one hour before."""
        plan = commitment.derive_indicators([1, 0, 0, 1, 1], True)
        water, energy = commitment.flush_consumption(plan, self.FLUSH,
                                                     TimeGrid(5, 1.0))
        np.testing.assert_array_equal(water, [0, 15, 10, 0, 0])
        np.testing.assert_array_equal(energy, [0, 25, 20, 0, 0])

    def test_restart_in_first_hour(self):
        """A restart at the start of the horizon was flushed before it."""
        plan = commitment.derive_indicators([1, 1, 1], False)
        water, energy = commitment.flush_consumption(plan, self.FLUSH,
                                                     TimeGrid(3, 1.0))
        self.assertEqual(water.sum(), 0.0)
        self.assertEqual(energy.sum(), 0.0)

    def test_shut_and_restart_share_an_hour(self):
        """An off hour between shutdown and restart books both flushes."""
        plan = commitment.derive_indicators([1, 0, 1], True)
        water, _ = commitment.flush_consumption(plan, self.FLUSH,
                                                TimeGrid(3, 1.0))
        np.testing.assert_array_equal(water, [0, 25, 0])


class TestMinOff(TestCase):
    """The plant stays off for the minimum duration after a shutdown."""

    def test_short_off_period(self):
        plan = commitment.derive_indicators([1, 0, 1, 1], True)
        found = commitment.check_min_off(plan, 2)
        self.assertEqual(len(found), 1)
        self.assertEqual(found[0].hour, 1)
        self.assertEqual(found[0].quantity, 'off duration')
        self.assertEqual(found[0].value, 1)

    def test_long_enough(self):
        plan = commitment.derive_indicators([1, 0, 0, 1], True)
        self.assertEqual(commitment.check_min_off(plan, 2), [])

    def test_horizon_end(self):
        """A shutdown in the last hour is not cut short by the horizon."""
        plan = commitment.derive_indicators([1, 1, 0], True)
        self.assertEqual(commitment.check_min_off(plan, 3), [])
