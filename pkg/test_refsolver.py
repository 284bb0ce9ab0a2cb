#!/usr/bin/env python3
"""
Tests for the finite-difference reference solver
"""
import unittest

import numpy as np
from scipy.linalg import solve_banded

import refsolver
from errors import ConfigError, PicardNonConvergence, StructuralError
from problems import (constant_property_table, default_boundary_series, default_property_table,
                      make_coffee_problem, make_linear_control, make_toy_problem)
from refsolver import Grid1D, thomas


class TestThomas(unittest.TestCase):
    """Test the tridiagonal solver"""

    def test_matches_banded_solver(self):
        """Test against scipy's banded solver on a diagonally dominant system"""
        rng = np.random.default_rng(0)
        n = 40
        lower, upper = rng.uniform(-1, 0, n), rng.uniform(-1, 0, n)
        diag = 2.5 + rng.uniform(0, 1, n)
        rhs = rng.normal(size=n)
        bands = np.zeros((3, n))
        bands[0, 1:] = upper[:-1]
        bands[1] = diag
        bands[2, :-1] = lower[1:]
        np.testing.assert_allclose(thomas(lower, diag, upper, rhs), solve_banded((1, 1), bands, rhs), rtol=1e-12)

    def test_band_lengths_must_match(self):
        """Test that mismatched bands raise StructuralError"""
        with self.assertRaises(StructuralError):
            thomas(np.zeros(3), np.ones(4), np.zeros(4), np.ones(4))


class TestGrid(unittest.TestCase):
    """Test grid construction"""

    def test_spacing(self):
        """Test node spacing, step size and the time axis"""
        grid = Grid1D(domain=(0.0, 2.0), n_cells=8, n_steps=4, t_end=1.0)
        self.assertAlmostEqual(grid.h, 0.25)
        self.assertAlmostEqual(grid.dt, 0.25)
        self.assertEqual(len(grid.nodes), 9)
        np.testing.assert_allclose(grid.times, [0.0, 0.25, 0.5, 0.75, 1.0])

    def test_invalid_grid(self):
        """Test that too few cells or steps raise ConfigError"""
        with self.assertRaises(ConfigError):
            Grid1D(domain=(0.0, 1.0), n_cells=4, n_steps=4, t_end=1.0)
        with self.assertRaises(ConfigError):
            Grid1D(domain=(0.0, 1.0), n_cells=16, n_steps=0, t_end=1.0)

    def test_for_problem_defaults_to_problem_steps(self):
        """Test that the grid inherits the problem's step count"""
        grid = Grid1D.for_problem(make_toy_problem(n_time=32), 64)
        self.assertEqual(grid.n_steps, 32)
        self.assertAlmostEqual(grid.t_end, 1.0)


class TestLinearOracle(unittest.TestCase):
    """Test the oracle on the linear benchmark"""

    def test_toy_error_below_one_percent(self):
        """Test relative error against u* on a 512 x 512 grid"""
        problem = make_toy_problem()
        grid = Grid1D.for_problem(problem, 512, 512)
        solution = refsolver.solve(problem, grid)
        exact = problem.exact(grid.nodes[None, :], grid.times[:, None])
        rel = np.sqrt(np.sum((solution.U - exact) ** 2) / np.sum(exact ** 2))
        self.assertLess(rel, 0.01)
        self.assertTrue(solution.finite)
        self.assertEqual(solution.picard_iterations, [1] * 512)

    def test_boundary_rows_are_exact(self):
        """Test that Dirichlet values are imposed at every step"""
        problem = make_toy_problem(n_time=8)
        solution = refsolver.solve_linear(problem, Grid1D.for_problem(problem, 16))
        np.testing.assert_array_equal(solution.U[1:, 0], 0.0)
        np.testing.assert_array_equal(solution.U[1:, -1], 0.0)

    def test_linear_solver_needs_constant_coefficients(self):
        """Test that temperature-dependent coefficients are refused"""
        problem = make_coffee_problem(default_property_table(), default_boundary_series(), n_time=8)
        with self.assertRaises(ConfigError):
            refsolver.solve_linear(problem, Grid1D.for_problem(problem, 16))

    def test_sampling_helpers(self):
        """Test interpolation onto points, step selection and the midpoint trace"""
        problem = make_toy_problem(n_time=4)
        solution = refsolver.solve(problem, Grid1D.for_problem(problem, 16))
        np.testing.assert_allclose(solution.at_points(solution.grid.nodes, 2), solution.U[2])
        self.assertEqual(solution.at_steps(np.linspace(0, np.pi, 5), [1, 3]).shape, (2, 5))
        trace = solution.midpoint_trace()
        self.assertEqual(len(trace), 5)
        self.assertAlmostEqual(trace[4], solution.U[4, 8])


class TestConvergenceOrder(unittest.TestCase):
    """Test observed orders of the linear scheme on the benchmark"""

    def final_error(self, coarse, reference):
        stride = reference.grid.n_cells // coarse.grid.n_cells
        return float(np.max(np.abs(coarse.U[-1] - reference.U[-1, ::stride])))

    def test_second_order_in_space(self):
        """Test order at least 1.8 as the cells halve at a fixed time step"""
        problem = make_toy_problem(n_time=16)
        reference = refsolver.solve(problem, Grid1D.for_problem(problem, 512, 16))
        errors = [self.final_error(refsolver.solve(problem, Grid1D.for_problem(problem, cells, 16)), reference)
                  for cells in (16, 32, 64)]
        orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
        for order in orders:
            self.assertGreaterEqual(order, 1.8)

    def test_first_order_in_time(self):
        """Test order near one as the time step halves on a fixed grid"""
        problem = make_toy_problem(n_time=16)
        reference = refsolver.solve(problem, Grid1D.for_problem(problem, 64, 1024))
        errors = [self.final_error(refsolver.solve(problem, Grid1D.for_problem(problem, 64, steps)), reference)
                  for steps in (16, 32, 64)]
        orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
        for order in orders:
            self.assertGreaterEqual(order, 0.8)
            self.assertLessEqual(order, 1.3)


class TestNonlinearOracle(unittest.TestCase):
    """Test Picard iteration on the freezing problem"""

    def setUp(self):
        self.problem = make_coffee_problem(default_property_table(), default_boundary_series(), n_time=16)
        self.grid = Grid1D.for_problem(self.problem, 64, 32)

    def test_picard_converges(self):
        """Test convergence within 50 iterations at every step"""
        solution = refsolver.solve_nonlinear(self.problem, self.grid, picard_tol=1e-8, picard_max=50)
        self.assertTrue(solution.finite)
        self.assertEqual(len(solution.picard_iterations), 32)
        self.assertLessEqual(max(solution.picard_iterations), 50)

    def test_max_principle(self):
        """Test that the oracle stays within the range of its data"""
        solution = refsolver.solve(self.problem, self.grid)
        t = self.grid.times
        data = np.concatenate([[1.0], self.problem.boundary_left(t), self.problem.boundary_right(t)])
        self.assertLessEqual(np.max(solution.U), data.max() + 1e-6)
        self.assertGreaterEqual(np.min(solution.U), data.min() - 1e-6)

    def test_symmetric_about_midpoint(self):
        """Test mirror symmetry for equal walls and a uniform start"""
        solution = refsolver.solve(self.problem, self.grid)
        np.testing.assert_allclose(solution.U, solution.U[:, ::-1], rtol=0, atol=1e-9)

    def test_monotone_cooling(self):
        """Test that the midpoint and every node cool monotonically under falling walls"""
        solution = refsolver.solve(self.problem, self.grid)
        self.assertTrue(np.all(np.diff(solution.midpoint_trace()) <= 1e-7))
        self.assertTrue(np.all(np.diff(solution.U, axis=0) <= 1e-7))
        self.assertLess(solution.midpoint_trace()[-1], 1.0)

    def test_dimensional_residual_small(self):
        """Test the converged solution against the dimensional equation"""
        solution = refsolver.solve(self.problem, self.grid, picard_tol=1e-10)
        self.assertLess(refsolver.dimensional_residual(self.problem, solution), 1e-3)

    def test_dimensional_residual_needs_scaling(self):
        """Test that the dimensional check refuses the dimensionless benchmark"""
        problem = make_toy_problem(n_time=4)
        solution = refsolver.solve(problem, Grid1D.for_problem(problem, 16))
        with self.assertRaises(ConfigError):
            refsolver.dimensional_residual(problem, solution)

    def test_picard_limit(self):
        """Test that a single allowed iteration raises PicardNonConvergence"""
        with self.assertRaises(PicardNonConvergence):
            refsolver.solve_nonlinear(self.problem, self.grid, picard_tol=1e-12, picard_max=1)

    def test_invalid_picard_settings(self):
        """Test that nonpositive tolerances raise ConfigError"""
        with self.assertRaises(ConfigError):
            refsolver.solve_nonlinear(self.problem, self.grid, picard_tol=0.0)

    def test_constant_properties_match_linear_path(self):
        """Test that Picard on constant tables reproduces the linear solve"""
        problem = make_coffee_problem(constant_property_table(), default_boundary_series(), n_time=16)
        grid = Grid1D.for_problem(problem, 64, 32)
        nonlinear = refsolver.solve_nonlinear(problem, grid)
        linear = refsolver.solve_linear(make_linear_control(problem), grid)
        np.testing.assert_allclose(nonlinear.U, linear.U, rtol=0, atol=1e-10)


def run_tests():
    """Run all tests with verbose output"""
    loader = unittest.TestLoader()
    suite = unittest.TestSuite()

    suite.addTests(loader.loadTestsFromTestCase(TestThomas))
    suite.addTests(loader.loadTestsFromTestCase(TestGrid))
    suite.addTests(loader.loadTestsFromTestCase(TestLinearOracle))
    suite.addTests(loader.loadTestsFromTestCase(TestConvergenceOrder))
    suite.addTests(loader.loadTestsFromTestCase(TestNonlinearOracle))

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
