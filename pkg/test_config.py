#!/usr/bin/env python3
"""
Tests for run configuration: defaults, TOML files, overrides and validation
"""
import os
import shutil
import tempfile
import unittest
from unittest import mock

from config import (DATA_DIR_ENV, ProblemDefaults, RunConfig, apply_overrides, build_config, build_problem,
                    load_toml)
from errors import ConfigError
from optimizer import ScheduleKind
from testspace import BasisKind


class TestProblemDefaults(unittest.TestCase):
    """Test per-problem defaults"""

    def test_toy_defaults(self):
        """Test the benchmark hyperparameters"""
        config = ProblemDefaults.get_default_config("toy")
        self.assertEqual(config.widths, [1, 32, 32, 32, 32, 32, 128])
        self.assertEqual(config.iterations, 20000)
        self.assertEqual(config.schedule, "exponential")
        self.assertEqual((config.n_time, config.n_test, config.n_int), (128, 20, 128))
        self.assertEqual(config.snapshot_steps, [1, 32, 64, 128])
        self.assertFalse(config.fixed_quadrature)
        self.assertFalse(config.normalize_loss)
        config.validate()

    def test_coffee_defaults(self):
        """Test the freezing-problem hyperparameters"""
        config = ProblemDefaults.get_default_config("coffee")
        self.assertEqual(config.iterations, 100000)
        self.assertEqual(config.schedule, "cosine")
        self.assertEqual(config.lr0, 1e-3)
        self.assertEqual((config.n_time, config.n_test, config.n_int), (128, 64, 256))
        self.assertEqual(config.basis, "h1_fourier")
        self.assertIs(config.schedule_spec().kind, ScheduleKind.COSINE)
        self.assertTrue(config.fixed_quadrature)
        self.assertTrue(config.normalize_loss)

    def test_unknown_problem(self):
        """Test that an unknown problem name raises ConfigError"""
        with self.assertRaises(ConfigError):
            ProblemDefaults.get_default_config("wave")


class TestValidation(unittest.TestCase):
    """Test that invalid settings are collected and rejected"""

    def test_errors_are_collected(self):
        """Test that several problems are reported together"""
        config = RunConfig(n_test=0, lr0=-1.0, schedule="step")
        with self.assertRaises(ConfigError) as ctx:
            config.validate()
        message = str(ctx.exception)
        self.assertIn("n_test", message)
        self.assertIn("lr0", message)
        self.assertIn("schedule", message)

    def test_oracle_steps_must_nest(self):
        """Test that oracle steps must be a multiple of N_time"""
        with self.assertRaises(ConfigError):
            RunConfig(n_time=128, oracle_steps=500).validate()

    def test_snapshot_steps_in_range(self):
        """Test that snapshot steps must lie in 1..N_time"""
        with self.assertRaises(ConfigError):
            RunConfig(snapshot_steps=[0, 5]).validate()

    def test_missing_data_file(self):
        """Test that paths are checked before any training"""
        with self.assertRaises(ConfigError):
            RunConfig(problem="coffee", properties="/nonexistent/props.csv").validate()


class TestLoading(unittest.TestCase):
    """Test TOML files, overrides and problem construction"""

    def setUp(self):
        self.test_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.test_dir, ignore_errors=True)

    def _write(self, name, text):
        path = os.path.join(self.test_dir, name)
        with open(path, 'w') as handle:
            handle.write(text)
        return path

    def test_toml_run_table(self):
        """Test that settings may sit under a [run] table"""
        path = self._write("run.toml", '[run]\nproblem = "toy"\niterations = 50\nseed = 3\n')
        self.assertEqual(load_toml(path), {'problem': 'toy', 'iterations': 50, 'seed': 3})

    def test_invalid_toml(self):
        """Test that malformed TOML raises ConfigError"""
        path = self._write("bad.toml", "iterations = = 3\n")
        with self.assertRaises(ConfigError):
            load_toml(path)
        with self.assertRaises(ConfigError):
            load_toml(os.path.join(self.test_dir, "missing.toml"))

    def test_precedence(self):
        """Test defaults < file < command line"""
        path = self._write("run.toml", 'iterations = 50\nseed = 3\nn_time = 32\n')
        config = build_config("toy", path, {'seed': 9, 'hidden_width': None})
        self.assertEqual(config.iterations, 50)
        self.assertEqual(config.seed, 9)
        self.assertEqual(config.hidden_width, 32)
        self.assertEqual(config.snapshot_steps, [1, 32])
        self.assertEqual(config.oracle_steps % 32, 0)

    def test_problem_from_file(self):
        """Test that the file may select the problem"""
        path = self._write("run.toml", 'problem = "coffee"\nn_time = 16\n')
        config = build_config(None, path, {})
        self.assertEqual(config.problem, "coffee")
        self.assertEqual(config.n_test, 64)

    def test_unknown_setting(self):
        """Test that unknown keys raise ConfigError"""
        with self.assertRaises(ConfigError):
            apply_overrides(RunConfig(), {'learning_rate': 0.1}, "test")
        path = self._write("run.toml", 'widht = 3\n')
        with self.assertRaises(ConfigError):
            build_config("toy", path, {})

    def test_config_hash(self):
        """Test that the hash ignores the output directory and tracks everything else"""
        a = build_config("toy", None, {'out_dir': os.path.join(self.test_dir, "a")})
        b = build_config("toy", None, {'out_dir': os.path.join(self.test_dir, "b")})
        c = build_config("toy", None, {'seed': 1})
        self.assertEqual(a.config_hash(), b.config_hash())
        self.assertNotEqual(a.config_hash(), c.config_hash())
        self.assertEqual(len(a.config_hash()), 12)

    def test_data_dir_env(self):
        """Test that relative data paths resolve against VPINN_DATA_DIR"""
        self._write("props.csv", "T,rho,cp,k\n-30,1,1,1\n0,1,1,1\n10,1,1,1\n25,1,1,1\n")
        with mock.patch.dict(os.environ, {DATA_DIR_ENV: self.test_dir}):
            config = build_config("coffee", None, {'properties': "props.csv", 'n_time': 8})
            self.assertEqual(str(config.resolve_path("props.csv")), os.path.join(self.test_dir, "props.csv"))
            problem = build_problem(config)
        self.assertTrue(problem.coefficients.is_constant)

    def test_build_problem_basis_override(self):
        """Test that the basis setting replaces the problem's default family"""
        config = build_config("toy", None, {'basis': 'h1_fourier', 'n_time': 8})
        problem = build_problem(config)
        self.assertIs(problem.basis_kind, BasisKind.H1_FOURIER)
        self.assertEqual(problem.n_time, 8)


def run_tests():
    """Run all tests with verbose output"""
    loader = unittest.TestLoader()
    suite = unittest.TestSuite()

    suite.addTests(loader.loadTestsFromTestCase(TestProblemDefaults))
    suite.addTests(loader.loadTestsFromTestCase(TestValidation))
    suite.addTests(loader.loadTestsFromTestCase(TestLoading))

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
