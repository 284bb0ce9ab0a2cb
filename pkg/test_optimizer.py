#!/usr/bin/env python3
"""
Tests for learning-rate schedules and the Adam update
"""
import math
import unittest

import numpy as np

from errors import ConfigError, StructuralError, TrainingDivergence
from optimizer import AdamState, Schedule, ScheduleKind, adam_step, schedule_lr


class TestSchedules(unittest.TestCase):
    """Test constant, exponential and cosine schedules"""

    def test_constant(self):
        """Test that the constant schedule never changes"""
        schedule = Schedule(ScheduleKind.CONSTANT, lr0=0.01)
        self.assertEqual(schedule_lr(schedule, 0), 0.01)
        self.assertEqual(schedule_lr(schedule, 10 ** 6), 0.01)

    def test_exponential_is_continuous(self):
        """Test lr0 * rate^(step / decay_steps) without staircase"""
        schedule = Schedule(ScheduleKind.EXPONENTIAL, lr0=1e-2, rate=0.9, decay_steps=1000)
        self.assertAlmostEqual(schedule_lr(schedule, 1000), 9e-3)
        self.assertAlmostEqual(schedule_lr(schedule, 500), 1e-2 * math.sqrt(0.9))
        self.assertAlmostEqual(schedule_lr(schedule, 20000), 1e-2 * 0.9 ** 20)

    def test_cosine_endpoints(self):
        """Test that cosine decay starts at lr0, halves midway and ends at zero"""
        schedule = Schedule(ScheduleKind.COSINE, lr0=1e-3, total_steps=100)
        self.assertAlmostEqual(schedule_lr(schedule, 0), 1e-3)
        self.assertAlmostEqual(schedule_lr(schedule, 50), 5e-4)
        self.assertAlmostEqual(schedule_lr(schedule, 100), 0.0)
        self.assertAlmostEqual(schedule_lr(schedule, 500), 0.0)

    def test_schedules_never_increase(self):
        """Test nonincreasing, nonnegative learning rates over a long run"""
        steps = np.arange(0, 25001, 7)
        for schedule in (Schedule(ScheduleKind.CONSTANT, lr0=1e-3),
                         Schedule(ScheduleKind.EXPONENTIAL, lr0=1e-3, rate=0.9, decay_steps=1000),
                         Schedule(ScheduleKind.COSINE, lr0=1e-3, total_steps=20000)):
            rates = np.array([schedule_lr(schedule, int(s)) for s in steps])
            self.assertTrue(np.all(np.diff(rates) <= 0.0), schedule.kind.value)
            self.assertTrue(np.all(rates >= 0.0))
            self.assertEqual(rates[0], 1e-3)

    def test_from_name(self):
        """Test lookup by name and rejection of unknown names"""
        self.assertIs(Schedule.from_name("cosine", total_steps=10).kind, ScheduleKind.COSINE)
        with self.assertRaises(ConfigError):
            Schedule.from_name("step")

    def test_invalid_parameters(self):
        """Test that bad rates, steps and learning rates raise ConfigError"""
        with self.assertRaises(ConfigError):
            Schedule(ScheduleKind.CONSTANT, lr0=0.0)
        with self.assertRaises(ConfigError):
            Schedule(ScheduleKind.EXPONENTIAL, rate=1.5)
        with self.assertRaises(ConfigError):
            Schedule(ScheduleKind.EXPONENTIAL, decay_steps=0)
        with self.assertRaises(ConfigError):
            schedule_lr(Schedule(), -1)


class TestAdam(unittest.TestCase):
    """Test the bias-corrected Adam update"""

    def setUp(self):
        self.schedule = Schedule(ScheduleKind.CONSTANT, lr0=0.1)
        self.params = [np.array([1.0, -2.0]), np.array([[0.5]])]
        self.state = AdamState.for_parameters(self.params, self.schedule)

    def test_first_step_moves_by_lr(self):
        """Test that the first update moves each entry by lr against the gradient sign"""
        grads = [np.array([3.0, -0.5]), np.array([[1e-3]])]
        updated = adam_step(self.state, self.params, grads)
        np.testing.assert_allclose(updated[0], [0.9, -1.9], rtol=1e-6)
        np.testing.assert_allclose(updated[1], [[0.4]], rtol=1e-4)
        self.assertEqual(self.state.step, 1)

    def test_constant_gradient_moves_at_most_lr(self):
        """Test |update| <= lr at every step when the gradient never changes"""
        for g in (1e-6, 0.3, 250.0):
            state = AdamState.for_parameters([np.zeros(3)], self.schedule)
            x = [np.zeros(3)]
            for _ in range(50):
                new = adam_step(state, x, [np.array([g, -g, 2.0 * g])])
                self.assertTrue(np.all(np.abs(new[0] - x[0]) <= 0.1 * (1.0 + 1e-12)))
                x = new

    def test_update_is_bounded_for_any_gradients(self):
        """Test the moment-ratio bound on the step size for random gradient sequences"""
        rng = np.random.default_rng(12)
        state = AdamState.for_parameters([np.zeros(20)], self.schedule)
        b1, b2 = state.beta1, state.beta2
        ratio_bound = (1.0 - b1) / math.sqrt(1.0 - b2) / math.sqrt(1.0 - b1 ** 2 / b2)
        x = [np.zeros(20)]
        for t in range(1, 201):
            grad = rng.normal(size=20) * 10.0 ** rng.uniform(-4, 4, size=20)
            new = adam_step(state, x, [grad])
            bound = 0.1 * ratio_bound * math.sqrt(1.0 - b2 ** t) / (1.0 - b1 ** t)
            self.assertTrue(np.all(np.abs(new[0] - x[0]) <= bound * (1.0 + 1e-9)), f"step {t}")
            x = new

    def test_zero_gradient_keeps_parameters(self):
        """Test that a zero gradient leaves the parameters in place"""
        grads = [np.zeros(2), np.zeros((1, 1))]
        updated = adam_step(self.state, self.params, grads)
        np.testing.assert_array_equal(updated[0], self.params[0])

    def test_minimizes_quadratic(self):
        """Test convergence on a separable quadratic"""
        state = AdamState.for_parameters([np.zeros(3)], Schedule(ScheduleKind.EXPONENTIAL, lr0=0.1,
                                                                  rate=0.5, decay_steps=200))
        target = np.array([1.0, -2.0, 0.5])
        x = [np.zeros(3)]
        for _ in range(2000):
            x = adam_step(state, x, [2.0 * (x[0] - target)])
        np.testing.assert_allclose(x[0], target, atol=1e-3)

    def test_non_finite_gradient(self):
        """Test that NaN gradients raise TrainingDivergence"""
        with self.assertRaises(TrainingDivergence):
            adam_step(self.state, self.params, [np.array([np.nan, 0.0]), np.zeros((1, 1))])
        self.assertEqual(self.state.step, 0)

    def test_length_mismatch(self):
        """Test that gradient and parameter lists must line up"""
        with self.assertRaises(StructuralError):
            adam_step(self.state, self.params, [np.zeros(2)])

    def test_lr_follows_schedule(self):
        """Test that the state's learning rate tracks the step counter"""
        state = AdamState.for_parameters([np.zeros(1)], Schedule(ScheduleKind.EXPONENTIAL, lr0=1.0,
                                                                  rate=0.5, decay_steps=1))
        self.assertEqual(state.lr, 1.0)
        adam_step(state, [np.zeros(1)], [np.ones(1)])
        self.assertEqual(state.lr, 0.5)

    def test_copy_is_independent(self):
        """Test that copied moments do not alias the original"""
        adam_step(self.state, self.params, [np.ones(2), np.ones((1, 1))])
        clone = self.state.copy()
        clone.m[0][0] = 42.0
        self.assertNotEqual(self.state.m[0][0], 42.0)
        self.assertEqual(clone.step, self.state.step)


def run_tests():
    """Run all tests with verbose output"""
    loader = unittest.TestLoader()
    suite = unittest.TestSuite()

    suite.addTests(loader.loadTestsFromTestCase(TestSchedules))
    suite.addTests(loader.loadTestsFromTestCase(TestAdam))

    runner = unittest.TextTestRunner(verbosity=2)
    result = runner.run(suite)

    print("\n" + "="*70)
    print("TEST SUMMARY")
    print("="*70)
    print(f"Tests run: {result.testsRun}")
    print(f"Failures: {len(result.failures)}")
    print(f"Errors: {len(result.errors)}")
    print(f"Skipped: {len(result.skipped)}")

    if result.wasSuccessful():
        print("\n✅ ALL TESTS PASSED!")
    else:
        print("\n❌ SOME TESTS FAILED!")

    return result.wasSuccessful()


if __name__ == "__main__":
    success = run_tests()
    exit(0 if success else 1)
