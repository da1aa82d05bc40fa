import math
import unittest

import numpy as np

from iwpairs.catalog import bm_half_line, delta_atom, delta_psi, standard_bm
from iwpairs.exceptions import InvalidIntervalError, NotSubharmonicError, UnsupportedError
from iwpairs.grid import GridFunction, uniform_grid
from iwpairs.measures import Side
from iwpairs.subharmonic import (
    boundary_behaviour,
    check_subharmonic,
    choquet_decompose,
    choquet_reconstruct,
    compensator_measure,
    s_derivative,
)


class TestCheckSubharmonic(unittest.TestCase):
    def setUp(self):
        self.spec = standard_bm()
        self.grid = uniform_grid(-2.0, 2.0, 81)

    def test_convex_nonnegative_function(self):
        g = GridFunction.from_function(lambda x: x * x, self.grid, self.spec.scale)
        self.assertTrue(check_subharmonic(g, self.spec).ok)

    def test_negativity(self):
        g = GridFunction.from_function(lambda x: x - 1.0, self.grid, self.spec.scale)
        check = check_subharmonic(g, self.spec)
        self.assertFalse(check.ok)
        self.assertEqual(check.violation, "negativity")
        self.assertEqual(check.x, -2.0)

    def test_concavity(self):
        g = GridFunction.from_function(lambda x: 5.0 - x * x, self.grid, self.spec.scale)
        check = check_subharmonic(g, self.spec)
        self.assertFalse(check.ok)
        self.assertEqual(check.violation, "convexity")
        self.assertIn("convexity", check.describe())

    def test_equal_scales_are_recognised_by_value(self):
        psi = delta_psi(0.5)
        self.assertIsNot(psi.scale, self.spec.scale)
        with self.assertNoLogs("iwpairs.subharmonic", level="WARNING"):
            self.assertTrue(check_subharmonic(psi, self.spec).ok)

    def test_foreign_scale_is_reported(self):
        half = bm_half_line()
        with self.assertLogs("iwpairs.subharmonic", level="WARNING") as logs:
            check_subharmonic(delta_psi(0.5), half)
        self.assertIn("different scale function than bm-half-line", logs.output[0])


class TestSDerivative(unittest.TestCase):
    def test_one_sided_derivatives_at_the_kink(self):
        psi = delta_psi(0.5)
        self.assertAlmostEqual(s_derivative(psi, 1.0, Side.RIGHT), 1.0, places=8)
        self.assertAlmostEqual(s_derivative(psi, 1.0, "left"), 0.0, places=8)

    def test_grid_function_uses_cell_slopes(self):
        spec = standard_bm()
        psi = delta_psi(0.5)
        grid_only = GridFunction(grid=psi.grid, values=psi.values, scale=spec.scale)
        self.assertAlmostEqual(s_derivative(grid_only, 1.0, Side.RIGHT), 1.0, places=10)
        self.assertAlmostEqual(s_derivative(grid_only, 1.0, Side.LEFT), 0.0, places=10)
        self.assertAlmostEqual(s_derivative(grid_only, 2.01, Side.RIGHT), 1.0, places=10)

    def test_infinite_scale_endpoint(self):
        with self.assertRaises(UnsupportedError):
            s_derivative(delta_psi(0.5), -math.inf, Side.RIGHT)

    def test_outside_the_interval(self):
        half = bm_half_line()
        g = GridFunction.from_function(lambda x: x, [0.5, 1.0, 2.0], half.scale)
        with self.assertRaises(InvalidIntervalError):
            s_derivative(g, -1.0)


class TestChoquet(unittest.TestCase):
    def setUp(self):
        self.spec = standard_bm()

    def test_delta_psi_decomposition(self):
        d = choquet_decompose(delta_psi(0.5), self.spec)
        self.assertAlmostEqual(d.alpha, 0.5)
        self.assertEqual(d.kappa1, 0.0)
        self.assertEqual(d.kappa2, 0.0)
        self.assertEqual(d.cstar, -5.0)
        self.assertEqual(len(d.mu1.atoms), 1)
        loc, mass = d.mu1.atoms[0]
        self.assertAlmostEqual(loc, 1.0)
        self.assertAlmostEqual(mass, 1.0, places=10)
        self.assertTrue(d.mu2.is_zero())
        for x in (-4.0, 0.0, 1.0, 2.5, 4.0):
            self.assertAlmostEqual(choquet_reconstruct(d, self.spec, x), 0.5 + max(x - 1.0, 0.0), places=10)

    def test_compensator_equals_g_times_revuz_measure(self):
        d = choquet_decompose(delta_psi(0.5), self.spec)
        compensator = compensator_measure(d)
        expected = 0.5 * dict(delta_atom(0.5).atoms)[1.0]
        self.assertAlmostEqual(compensator.mass(0.0, 2.0), expected, places=10)

    def test_smooth_function_spreads_jumps(self):
        grid = uniform_grid(-2.0, 2.0, 81)
        g = GridFunction.from_function(lambda x: x * x, grid, self.spec.scale)
        d = choquet_decompose(g, self.spec)
        self.assertAlmostEqual(d.alpha, 0.0, places=12)
        self.assertAlmostEqual(d.cstar, 0.0, places=12)
        self.assertIsNotNone(d.mu1.density)
        xs = np.array([-1.5, -0.5, 0.0, 1.0, 1.75])
        np.testing.assert_allclose(choquet_reconstruct(d, self.spec, xs), xs**2, atol=2e-3)
        self.assertEqual(d.ui_surrogate, {"left": False, "right": False})

    def test_not_subharmonic(self):
        grid = uniform_grid(-2.0, 2.0, 41)
        g = GridFunction.from_function(lambda x: 5.0 - x * x, grid, self.spec.scale)
        with self.assertRaises(NotSubharmonicError):
            choquet_decompose(g, self.spec)


class TestBoundaryBehaviour(unittest.TestCase):
    def test_delta_psi_flattens_to_the_left(self):
        spec = standard_bm()
        behaviour = boundary_behaviour(delta_psi(0.5), spec, Side.LEFT)
        self.assertEqual(behaviour.value_trend, "bounded")
        self.assertEqual(behaviour.slope_trend, "vanishing")
        self.assertAlmostEqual(behaviour.value_limit, 0.5)

    def test_delta_psi_grows_to_the_right(self):
        spec = standard_bm()
        behaviour = boundary_behaviour(delta_psi(0.5), spec, "right")
        self.assertEqual(behaviour.value_trend, "unbounded")
        self.assertEqual(behaviour.slope_trend, "bounded")


if __name__ == "__main__":
    unittest.main()
