import math
import unittest

from iwpairs.boundary import (
    BoundaryKind,
    classify,
    classify_both,
    entrance_escape_bound,
    reference_points,
)
from iwpairs.catalog import bm_half_line, delta_atom, exp_entrance, inverse_square, lebesgue_2, standard_bm
from iwpairs.exceptions import InvalidIntervalError, WrongClassError, ZeroMeasureError
from iwpairs.measures import RadonMeasure, Side


class TestClassify(unittest.TestCase):
    def setUp(self):
        self.bm = standard_bm()
        self.half = bm_half_line()

    def test_inverse_square_is_natural_at_both_ends(self):
        report = classify_both(self.half, inverse_square())
        self.assertEqual(report.left.kind, BoundaryKind.A_NATURAL)
        self.assertEqual(report.right.kind, BoundaryKind.A_NATURAL)
        self.assertTrue(report.b_invariant)

    def test_exp_entrance(self):
        left = classify(self.bm, exp_entrance(), Side.LEFT)
        right = classify(self.bm, exp_entrance(), Side.RIGHT)
        self.assertEqual(left.kind, BoundaryKind.A_ENTRANCE)
        self.assertEqual(right.kind, BoundaryKind.A_NATURAL)
        self.assertEqual(left.verdict_x.source, "infinite scale limit")

    def test_clock_is_natural(self):
        report = classify_both(self.bm, lebesgue_2())
        self.assertEqual(report.left.kind, BoundaryKind.A_NATURAL)
        self.assertEqual(report.right.kind, BoundaryKind.A_NATURAL)

    def test_finite_measure_on_line_gives_entrance(self):
        report = classify_both(self.bm, delta_atom(0.5))
        self.assertEqual(report.left.kind, BoundaryKind.A_ENTRANCE)
        self.assertEqual(report.right.kind, BoundaryKind.A_ENTRANCE)

    def test_absorbing_end_with_compact_measure_is_regular(self):
        mu = RadonMeasure.from_atoms([(1.0, 1.0)], lower=0.0)
        report = classify_both(self.half, mu)
        self.assertEqual(report.left.kind, BoundaryKind.A_REGULAR)
        self.assertEqual(report.right.kind, BoundaryKind.A_ENTRANCE)
        self.assertTrue(report.b_invariant)
        self.assertIn("passed", report.describe())

    def test_override_forces_a_verdict(self):
        mu = exp_entrance().model_copy(update={"overrides": {"left:e": "divergent"}})
        self.assertEqual(classify(self.bm, mu, Side.LEFT).kind, BoundaryKind.A_NATURAL)

    def test_zero_measure_rejected(self):
        with self.assertRaises(ZeroMeasureError):
            classify(self.bm, RadonMeasure.zero(), Side.LEFT)

    def test_reference_point_must_be_inside(self):
        with self.assertRaises(InvalidIntervalError):
            classify(self.half, inverse_square(), Side.LEFT, b=-1.0)

    def test_reference_points(self):
        self.assertEqual(reference_points(self.bm), (-1.0, 1.0))
        self.assertEqual(reference_points(self.half), (0.5, 2.0))


class TestEntranceEscapeBound(unittest.TestCase):
    def test_logistic_density(self):
        bound = entrance_escape_bound(standard_bm(), exp_entrance(), 0.0, Side.LEFT)
        self.assertAlmostEqual(bound, math.pi**2 / 12.0, places=6)

    def test_wrong_class(self):
        with self.assertRaises(WrongClassError):
            entrance_escape_bound(bm_half_line(), inverse_square(), 1.0, Side.LEFT)


if __name__ == "__main__":
    unittest.main()
