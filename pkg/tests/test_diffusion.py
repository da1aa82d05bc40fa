import math
import unittest

from iwpairs.catalog import bm_half_line, inverse_square, standard_bm
from iwpairs.diffusion import (
    AnalyticScale,
    DiffusionSpec,
    PCAFFiniteness,
    TableScale,
    exit_distribution,
    green_kernel,
    hitting_prob,
    is_transient,
    killed_potential_density,
    pcaf_finiteness,
    pcaf_potential,
    potential_density,
    sde_coefficients,
)
from iwpairs.exceptions import (
    InfiniteScaleError,
    InvalidIntervalError,
    NotTransientError,
    ZeroMeasureError,
)
from iwpairs.expressions import compile_expression
from iwpairs.measures import RadonMeasure, Side


def drifting_bm(declared_limits: bool = True) -> DiffusionSpec:
    """Brownian motion with unit drift to the right: s(x) = 1 - exp(-2x)."""
    scale = AnalyticScale(
        compile_expression("1 - exp(-2*x)"),
        inverse=compile_expression("-log(1 - x)/2"),
        derivative=compile_expression("2*exp(-2*x)"),
        limits=(-math.inf, 1.0) if declared_limits else None,
    )
    speed = RadonMeasure.lebesgue(1.0).weighted(compile_expression("exp(2*x)"), "exp(2x)")
    return DiffusionSpec(scale=scale, speed=speed, name="drifting-bm")


class TestScaleFunctions(unittest.TestCase):
    def test_identity_scale(self):
        scale = standard_bm().scale
        self.assertTrue(scale.is_identity)
        self.assertTrue(scale.has_exact_derivative)
        self.assertEqual(scale.derivative(3.0), 1.0)
        self.assertEqual(scale.limit_left, -math.inf)

    def test_inverse_by_root_finding(self):
        scale = AnalyticScale(compile_expression("x^3 + x"), limits=(-math.inf, math.inf))
        self.assertAlmostEqual(scale.inverse(2.0), 1.0, places=10)
        self.assertAlmostEqual(scale.inverse(-10.0), -2.0, places=10)

    def test_numeric_limits(self):
        scale = drifting_bm(declared_limits=False).scale
        self.assertTrue(scale.limits_numeric)
        self.assertAlmostEqual(scale.limit_right, 1.0, places=6)
        self.assertEqual(scale.limit_left, -math.inf)

    def test_scale_measure_mass(self):
        scale = drifting_bm().scale
        self.assertAlmostEqual(scale.measure.mass(0.0, math.inf), 1.0, places=8)

    def test_at_substitutes_limits(self):
        scale = bm_half_line().scale
        self.assertEqual(scale.at(0.0), 0.0)
        self.assertEqual(scale.at(math.inf), math.inf)

    def test_table_scale(self):
        scale = TableScale([0.0, 1.0, 2.0, 3.0], [0.0, 1.0, 2.0, 3.0])
        self.assertAlmostEqual(scale(1.5), 1.5)
        self.assertAlmostEqual(scale(5.0), 5.0)
        self.assertAlmostEqual(scale.derivative(1.5), 1.0)
        self.assertAlmostEqual(scale.inverse(2.5), 2.5, places=10)
        with self.assertRaises(ValueError):
            TableScale([0.0, 1.0], [1.0, 0.0])

    def test_one_sided_derivative_of_kinked_scale(self):
        scale = AnalyticScale(compile_expression("x + max(x, 0)"), limits=(-math.inf, math.inf))
        self.assertAlmostEqual(scale.one_sided_derivative(0.0, Side.LEFT), 1.0, places=5)
        self.assertAlmostEqual(scale.one_sided_derivative(0.0, Side.RIGHT), 2.0, places=5)


class TestDiffusionSpec(unittest.TestCase):
    def test_interval_mismatch(self):
        with self.assertRaises(ValueError):
            DiffusionSpec(
                lower=0.0,
                scale=standard_bm().scale,
                speed=RadonMeasure.lebesgue(2.0, 0.0, math.inf),
            )

    def test_midpoint(self):
        self.assertEqual(standard_bm().midpoint(), 0.0)
        self.assertEqual(bm_half_line().midpoint(), 1.0)

    def test_speed_charges(self):
        self.assertTrue(standard_bm().check_speed_charges([-1.0, 0.0, 2.0]))


class TestPotentialTheory(unittest.TestCase):
    def setUp(self):
        self.bm = standard_bm()
        self.half = bm_half_line()

    def test_hitting_prob(self):
        self.assertAlmostEqual(hitting_prob(self.bm, 0.25, 0.0, 1.0), 0.25)
        with self.assertRaises(InvalidIntervalError):
            hitting_prob(self.bm, 2.0, 0.0, 1.0)
        with self.assertRaises(InfiniteScaleError):
            hitting_prob(self.bm, 0.0, -math.inf, 1.0)

    def test_hitting_prob_with_drift(self):
        spec = drifting_bm()
        expected = (1 - math.exp(-2.0 * 0.5) - 0.0) / (1 - math.exp(-2.0))
        self.assertAlmostEqual(hitting_prob(spec, 0.5, 0.0, 1.0), expected)

    def test_green_kernel(self):
        self.assertAlmostEqual(green_kernel(self.bm, 0.0, 2.0, 1.0, 1.0), 0.5)
        self.assertAlmostEqual(
            green_kernel(self.bm, 0.0, 2.0, 0.5, 1.5), green_kernel(self.bm, 0.0, 2.0, 1.5, 0.5)
        )
        self.assertEqual(green_kernel(self.bm, 0.0, 2.0, 0.0, 1.0), 0.0)
        with self.assertRaises(InvalidIntervalError):
            green_kernel(self.bm, 0.0, 2.0, 3.0, 1.0)

    def test_killed_potential_density_with_one_infinite_side(self):
        self.assertAlmostEqual(killed_potential_density(self.bm, 1.0, 2.0, -math.inf, 3.0), 1.0)
        self.assertAlmostEqual(killed_potential_density(self.bm, 1.0, 2.0, 0.0, math.inf), 1.0)
        with self.assertRaises(NotTransientError):
            killed_potential_density(self.bm, 1.0, 2.0, -math.inf, math.inf)

    def test_potential_density(self):
        self.assertAlmostEqual(potential_density(self.half, 2.0, 3.0), 2.0)
        with self.assertRaises(NotTransientError):
            potential_density(self.bm, 0.0, 1.0)

    def test_transience(self):
        self.assertFalse(is_transient(self.bm).transient)
        report = exit_distribution(self.half, 2.0)
        self.assertTrue(report.transient)
        self.assertEqual(report.prob_left, 1.0)
        drift = is_transient(drifting_bm(), 0.0)
        self.assertEqual(drift.prob_right, 1.0)
        self.assertIn("transient", drift.describe())

    def test_pcaf_potential(self):
        mu = RadonMeasure.from_atoms([(1.0, 1.0)], lower=0.0)
        self.assertAlmostEqual(pcaf_potential(self.half, mu, lambda y: 1.0, 2.0), 1.0)
        self.assertAlmostEqual(pcaf_potential(self.half, mu, lambda y: 3.0, 0.5), 1.5)
        self.assertEqual(pcaf_potential(self.half, RadonMeasure.zero(0.0), lambda y: 1.0, 1.0), 0.0)
        with self.assertRaises(NotTransientError):
            pcaf_potential(self.bm, RadonMeasure.from_atoms([(1.0, 1.0)]), lambda y: 1.0, 0.0)

    def test_pcaf_finiteness(self):
        atom = RadonMeasure.from_atoms([(1.0, 1.0)], lower=0.0)
        report = pcaf_finiteness(self.half, atom)
        self.assertEqual(report.left, PCAFFiniteness.FINITE_AT_BOUNDARY)
        self.assertEqual(report.right, PCAFFiniteness.UNREACHED)
        report = pcaf_finiteness(self.half, inverse_square())
        self.assertEqual(report.left, PCAFFiniteness.ALWAYS_INFINITE)
        recurrent = pcaf_finiteness(self.bm, RadonMeasure.lebesgue(2.0))
        self.assertEqual(recurrent.left, PCAFFiniteness.ALWAYS_INFINITE)
        self.assertEqual(recurrent.right, PCAFFiniteness.ALWAYS_INFINITE)
        with self.assertRaises(ZeroMeasureError):
            pcaf_finiteness(self.half, RadonMeasure.zero(0.0))

    def test_sde_coefficients(self):
        coefficients = sde_coefficients(self.bm, 0.3)
        self.assertAlmostEqual(coefficients.sigma_y, 1.0)
        self.assertAlmostEqual(coefficients.sigma_x, 1.0)
        self.assertAlmostEqual(coefficients.drift_x, 0.0)
        drift = sde_coefficients(drifting_bm(), 0.0)
        self.assertAlmostEqual(drift.sigma_x, 1.0, places=8)
        self.assertAlmostEqual(drift.drift_x, 1.0, places=4)


if __name__ == "__main__":
    unittest.main()
