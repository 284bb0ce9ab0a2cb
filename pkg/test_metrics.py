#!/usr/bin/env python3
"""
Tests for space-time error norms, bound checks and training diagnostics
"""
import unittest

import numpy as np

import refsolver
from errors import MissingReferenceError, StructuralError, UndefinedRatioError
from metrics import (ErrorReport, check_error_bounds, cooling_lag_violations, data_range, max_principle_excess,
                     moving_average, nonincreasing_violations, observed_orders, oracle_steps_for, pearson,
                     poincare_constant, reference_from_exact, reference_from_oracle, space_time_errors,
                     trend_check, truncation_violations)
from problems import default_boundary_series, default_property_table, make_coffee_problem, make_toy_problem
from testspace import midpoint_quadrature


class TestSpaceTimeErrors(unittest.TestCase):
    """Test relative norms against the exact solution"""

    def setUp(self):
        self.problem = make_toy_problem(n_time=16)
        self.rule = midpoint_quadrature(self.problem.domain)
        self.u_ref, self.du_ref = reference_from_exact(self.problem, self.rule.points)

    def test_zero_error(self):
        """Test that the reference against itself has zero error"""
        report = space_time_errors(self.u_ref, self.du_ref, self.u_ref, self.du_ref, self.rule, self.problem.dt)
        self.assertEqual(report.rel_L2, 0.0)
        self.assertEqual(report.rel_H10, 0.0)

    def test_scaled_solution(self):
        """Test that 1.1 u* has ten percent relative error in both norms"""
        report = space_time_errors(1.1 * self.u_ref, 1.1 * self.du_ref, self.u_ref, self.du_ref,
                                   self.rule, self.problem.dt, problem=self.problem)
        self.assertAlmostEqual(report.rel_L2, 0.1, places=10)
        self.assertAlmostEqual(report.rel_H10, 0.1, places=10)
        self.assertEqual(len(report.per_step_L2), 16)

    def test_reference_norm(self):
        """Test the per-step norms of u* against pi/4 and 5 pi/16"""
        report = space_time_errors(np.zeros_like(self.u_ref), np.zeros_like(self.du_ref), self.u_ref, self.du_ref,
                                   self.rule, self.problem.dt)
        decay = np.exp(-self.problem.times)
        np.testing.assert_allclose(report.per_step_L2, decay * np.sqrt(np.pi / 4.0), rtol=1e-10)
        np.testing.assert_allclose(report.per_step_H10, decay * np.sqrt(5.0 * np.pi / 16.0), rtol=1e-10)

    def test_zero_reference(self):
        """Test that a zero reference raises UndefinedRatioError"""
        zeros = np.zeros_like(self.u_ref)
        with self.assertRaises(UndefinedRatioError):
            space_time_errors(self.u_ref, self.du_ref, zeros, zeros, self.rule, self.problem.dt)

    def test_shape_mismatch(self):
        """Test that mismatched snapshot shapes raise StructuralError"""
        with self.assertRaises(StructuralError):
            space_time_errors(self.u_ref[:3], self.du_ref, self.u_ref, self.du_ref, self.rule, self.problem.dt)

    def test_constants(self):
        """Test C_P = 1 on (0, pi) and M = 1 + dt, gamma = dt for the benchmark"""
        report = space_time_errors(self.u_ref, self.du_ref, self.u_ref, self.du_ref, self.rule,
                                   self.problem.dt, problem=self.problem)
        self.assertAlmostEqual(poincare_constant(self.problem.domain), 1.0)
        self.assertAlmostEqual(report.M, 1.0 + self.problem.dt)
        self.assertAlmostEqual(report.gamma, self.problem.dt)
        self.assertIn("relative L2", report.format_summary())
        self.assertEqual(report.summary()['reference'], 'exact')

    def test_exact_reference_needs_solution(self):
        """Test that the coffee problem has no closed-form reference"""
        coffee = make_coffee_problem(default_property_table(), default_boundary_series(), n_time=4)
        with self.assertRaises(MissingReferenceError):
            reference_from_exact(coffee, self.rule.points)


class TestNormProperties(unittest.TestCase):
    """Test the Poincare constant and the norm axioms behind the error report"""

    def test_poincare_constant_is_attained(self):
        """Test ||v|| <= C_P ||v'|| for random H1_0 functions with equality for the first sine"""
        rng = np.random.default_rng(6)
        for domain in ((0.0, np.pi), (-0.5, 1.5), (2.0, 2.3)):
            a, b = domain
            rule = midpoint_quadrature(domain)
            z = (rule.points - a) / (b - a)
            c_p = poincare_constant(domain)

            def ratio(amplitudes):
                modes = np.arange(1, len(amplitudes) + 1)[:, None]
                v = amplitudes @ np.sin(np.pi * modes * z)
                dv = amplitudes @ (np.pi * modes / (b - a) * np.cos(np.pi * modes * z))
                return np.sqrt(float(rule.integrate(v ** 2)) / float(rule.integrate(dv ** 2)))

            self.assertAlmostEqual(ratio(np.array([1.0])), c_p, places=8)
            for _ in range(5):
                self.assertLessEqual(ratio(rng.normal(size=6)), c_p * (1.0 + 1e-10))

    def test_homogeneity(self):
        """Test that scaling both fields keeps relative errors and scales absolute ones"""
        problem = make_toy_problem(n_time=8)
        rule = midpoint_quadrature(problem.domain)
        u_ref, du_ref = reference_from_exact(problem, rule.points)
        u, du = 0.9 * u_ref + 0.01, 1.2 * du_ref
        base = space_time_errors(u, du, u_ref, du_ref, rule, problem.dt)
        for scale in (-3.0, 0.25):
            scaled = space_time_errors(scale * u, scale * du, scale * u_ref, scale * du_ref, rule, problem.dt)
            self.assertAlmostEqual(scaled.rel_L2, base.rel_L2, places=12)
            self.assertAlmostEqual(scaled.rel_H10, base.rel_H10, places=12)
            np.testing.assert_allclose(scaled.per_step_L2, abs(scale) * base.per_step_L2, rtol=1e-12)
            np.testing.assert_allclose(scaled.per_step_H10, abs(scale) * base.per_step_H10, rtol=1e-12)

    def test_triangle_inequality(self):
        """Test per-step errors through an intermediate field"""
        problem = make_toy_problem(n_time=8)
        rule = midpoint_quadrature(problem.domain)
        rng = np.random.default_rng(7)
        fields = [(rng.normal(size=(8, rule.n_points)), rng.normal(size=(8, rule.n_points))) for _ in range(3)]
        (a, da), (b, db), (c, dc) = fields
        direct = space_time_errors(a, da, c, dc, rule, problem.dt)
        first = space_time_errors(a, da, b, db, rule, problem.dt)
        second = space_time_errors(b, db, c, dc, rule, problem.dt)
        self.assertTrue(np.all(direct.per_step_L2 <= first.per_step_L2 + second.per_step_L2 + 1e-12))
        self.assertTrue(np.all(direct.per_step_H10 <= first.per_step_H10 + second.per_step_H10 + 1e-12))


class TestBounds(unittest.TestCase):
    """Test the lower side of the error-residual sandwich"""

    def _report(self, dual, h10):
        return ErrorReport(rel_L2=0.0, rel_H10=0.0, per_step_L2=np.zeros(len(h10)),
                           per_step_H10=np.asarray(h10, dtype=float), dual_norm_per_step=np.asarray(dual, dtype=float),
                           dt=0.5)

    def test_lower_bound_pass_and_fail(self):
        """Test violation counting with M = 1 + dt"""
        problem = make_toy_problem(n_time=2)
        ok = check_error_bounds(self._report([0.3, 0.15], [0.2, 0.1]), problem)
        self.assertTrue(ok.passed)
        bad = check_error_bounds(self._report([0.6, 0.15], [0.2, 0.1]), problem)
        self.assertFalse(bad.passed)
        self.assertEqual(bad.violations, 1)
        self.assertIn('upper_ratio_max', bad.summary())

    def test_bounds_need_exact_solution(self):
        """Test that bounds are refused without an exact solution"""
        coffee = make_coffee_problem(default_property_table(), default_boundary_series(), n_time=2)
        with self.assertRaises(MissingReferenceError):
            check_error_bounds(self._report([0.1, 0.1], [0.1, 0.1]), coffee)


class TestOracleReference(unittest.TestCase):
    """Test sampling the oracle at network times"""

    def test_steps_and_slopes(self):
        """Test step mapping and the cellwise slope of a linear profile"""
        problem = make_toy_problem(n_time=4)
        grid = refsolver.Grid1D.for_problem(problem, 16, 8)
        U = np.tile(2.0 * grid.nodes, (9, 1))
        solution = refsolver.OracleSolution(grid=grid, U=U)
        self.assertEqual(oracle_steps_for(problem, solution), [2, 4, 6, 8])
        values, slopes = reference_from_oracle(solution, np.array([0.1, 1.0, 3.0]), [2, 4])
        np.testing.assert_allclose(values, [[0.2, 2.0, 6.0]] * 2)
        np.testing.assert_allclose(slopes, 2.0)

    def test_steps_must_nest(self):
        """Test that oracle steps must be a multiple of N_time"""
        problem = make_toy_problem(n_time=4)
        grid = refsolver.Grid1D.for_problem(problem, 16, 6)
        solution = refsolver.OracleSolution(grid=grid, U=np.zeros((7, 17)))
        with self.assertRaises(StructuralError):
            oracle_steps_for(problem, solution)


class TestDiagnostics(unittest.TestCase):
    """Test helper statistics"""

    def test_pearson(self):
        """Test correlation of linear series and constant series"""
        self.assertAlmostEqual(pearson([1, 2, 3], [2, 4, 6]), 1.0)
        self.assertAlmostEqual(pearson([1, 2, 3], [3, 2, 1]), -1.0)
        with self.assertRaises(UndefinedRatioError):
            pearson([1, 1, 1], [1, 2, 3])
        with self.assertRaises(StructuralError):
            pearson([1, 2], [1, 2, 3])

    def test_observed_orders(self):
        """Test order two for errors falling fourfold"""
        np.testing.assert_allclose(observed_orders([1.0, 0.25, 0.0625]), [2.0, 2.0])

    def test_max_principle_excess(self):
        """Test excess above and below a range"""
        self.assertEqual(max_principle_excess(np.array([0.0, 0.5]), -1.0, 1.0), 0.0)
        self.assertAlmostEqual(max_principle_excess(np.array([1.2, 0.0]), -1.0, 1.0), 0.2)
        self.assertAlmostEqual(max_principle_excess(np.array([-1.5]), -1.0, 1.0), 0.5)

    def test_data_range(self):
        """Test the data range of both problems"""
        lo, hi = data_range(make_toy_problem(n_time=8))
        self.assertAlmostEqual(lo, 0.0, places=12)
        self.assertGreater(hi, 0.7)
        coffee = make_coffee_problem(default_property_table(), default_boundary_series(), n_time=8)
        lo, hi = data_range(coffee)
        self.assertAlmostEqual(hi, 1.0)
        self.assertGreaterEqual(lo, -1.25)

    def test_cooling_lag_violations(self):
        """Test counting steps where the nonlinear trace is colder"""
        nonlinear = np.array([1.0, 0.9, 0.8, 0.6])
        control = np.array([1.0, 0.95, 0.7, 0.5])
        self.assertEqual(cooling_lag_violations(nonlinear, control, skip=0), 1)
        self.assertEqual(cooling_lag_violations(nonlinear, control, skip=2), 0)

    def test_moving_average(self):
        """Test window means and window validation"""
        np.testing.assert_allclose(moving_average([1, 2, 3, 4], 2), [1.5, 2.5, 3.5])
        with self.assertRaises(StructuralError):
            moving_average([1, 2], 3)

    def test_monotonicity_counts(self):
        """Test rise counting and truncation violations"""
        self.assertEqual(nonincreasing_violations([3, 2, 2, 1]), 0)
        self.assertEqual(nonincreasing_violations([3, 4, 2, 5]), 2)
        estimates = [np.array([0.1, 0.2]), np.array([0.2, 0.2]), np.array([0.3, 0.1])]
        self.assertEqual(truncation_violations(estimates), 1)

    def test_trend_check(self):
        """Test passing, failing and skipped trend verdicts"""
        losses = np.logspace(0, -3, 20)
        errors = np.sqrt(losses)
        passed = trend_check(losses, errors)
        self.assertEqual(passed.status, 'pass')
        self.assertAlmostEqual(passed.loss_drop_orders, 3.0)
        self.assertGreater(passed.correlation, 0.99)
        flat = trend_check(np.ones(20) + 1e-3 * np.arange(20)[::-1], errors)
        self.assertEqual(flat.status, 'fail')
        self.assertEqual(trend_check([1.0], [1.0]).status, 'skipped')


def run_tests():
    """Run all tests with verbose output"""
    loader = unittest.TestLoader()
    suite = unittest.TestSuite()

    suite.addTests(loader.loadTestsFromTestCase(TestSpaceTimeErrors))
    suite.addTests(loader.loadTestsFromTestCase(TestNormProperties))
    suite.addTests(loader.loadTestsFromTestCase(TestBounds))
    suite.addTests(loader.loadTestsFromTestCase(TestOracleReference))
    suite.addTests(loader.loadTestsFromTestCase(TestDiagnostics))

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
