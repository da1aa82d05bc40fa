import math
import unittest

import numpy as np

from iwpairs.catalog import bm_half_line, delta_atom, delta_transformed, lebesgue_2, standard_bm
from iwpairs.exceptions import PreconditionError, UnsupportedSpecError
from iwpairs.diffusion import TableScale, DiffusionSpec
from iwpairs.grid import GridFunction, uniform_grid
from iwpairs.measures import RadonMeasure
from iwpairs.montecarlo import (
    Estimate,
    Functional,
    SimConfig,
    accumulate_pcaf,
    bridge_local_time_mean,
    calibrate_local_time,
    check_iw_martingale,
    check_last_passage,
    check_local_time_law,
    check_natural_representation,
    check_vanishing,
    compare_measure_change,
    simulate,
    summary_table,
)
from iwpairs.transform import transform


def ones(x):
    return np.ones_like(np.asarray(x, dtype=float))


class TestSimConfig(unittest.TestCase):
    def test_defaults(self):
        config = SimConfig(horizon=2.0, dt=0.01)
        self.assertEqual(config.n_steps, 200)
        self.assertEqual(config.checkpoint_times().size, 10)
        self.assertAlmostEqual(float(config.checkpoint_times()[-1]), 2.0)

    def test_events_are_validated(self):
        with self.assertRaises(ValueError):
            SimConfig(intervals=[(1.0, 0.0)])
        with self.assertRaises(ValueError):
            SimConfig(last_passage=[(1.0, 1.0)])
        with self.assertRaises(ValueError):
            SimConfig(truncation=(2.0, -2.0))

    def test_levels_include_last_passage_points(self):
        config = SimConfig(levels=[0.5], last_passage=[[1, 3]])
        self.assertEqual(config.last_passage, [(1.0, 3.0)])
        self.assertEqual(config.all_levels(), [0.5, 1.0, 3.0])

    def test_checkpoints_beyond_horizon_dropped(self):
        config = SimConfig(horizon=1.0, checkpoints=[0.5, 2.0, 0.25])
        np.testing.assert_allclose(config.checkpoint_times(), [0.25, 0.5])


class TestSimulate(unittest.TestCase):
    def setUp(self):
        self.spec = standard_bm()
        self.config = SimConfig(dt=0.01, n_paths=50, horizon=1.0, seed=3, chunk_size=20, table_points=1001)

    def test_same_seed_same_paths(self):
        first = simulate(self.spec, 0.0, self.config)
        second = simulate(self.spec, 0.0, self.config)
        self.assertEqual(first.n_paths, 50)
        np.testing.assert_array_equal(first.states, second.states)
        other = simulate(self.spec, 0.0, self.config.model_copy(update={"seed": 4}))
        self.assertFalse(np.array_equal(first.states, other.states))

    def test_clock_functional(self):
        ensemble = simulate(self.spec, 0.0, self.config, lebesgue_2())
        self.assertTrue(ensemble.has_pcaf)
        np.testing.assert_allclose(ensemble.pcaf[:, -1], 1.0, rtol=1e-9)
        np.testing.assert_allclose(ensemble.pcaf[:, 4], 0.5, rtol=1e-9)

    def test_accumulate_pcaf_replays_the_paths(self):
        plain = simulate(self.spec, 0.0, self.config)
        self.assertFalse(plain.has_pcaf)
        clocked = accumulate_pcaf(plain, lebesgue_2())
        self.assertTrue(clocked.has_pcaf)
        np.testing.assert_array_equal(clocked.states, plain.states)
        np.testing.assert_allclose(clocked.pcaf[:, -1], 1.0, rtol=1e-9)
        with self.assertRaises(PreconditionError):
            accumulate_pcaf(plain, lebesgue_2(), bm_half_line())

    def test_start_outside_range(self):
        config = self.config.model_copy(update={"truncation": (1.0, 2.0)})
        with self.assertRaises(PreconditionError):
            simulate(self.spec, 0.0, config)

    def test_table_scale_not_simulated(self):
        scale = TableScale([-5.0, 0.0, 5.0], [-5.0, 0.0, 5.0])
        spec = DiffusionSpec(scale=scale, speed=RadonMeasure.lebesgue(2.0))
        with self.assertRaises(UnsupportedSpecError):
            simulate(spec, 0.0, self.config)

    def test_unrecorded_level(self):
        ensemble = simulate(self.spec, 0.0, self.config)
        with self.assertRaises(PreconditionError):
            ensemble.hitting_time(2.0)
        with self.assertRaises(PreconditionError):
            ensemble.exit_record(-1.0, 1.0)

    def test_summary_table(self):
        ensemble = simulate(self.spec, 0.0, self.config.model_copy(update={"levels": [0.5]}))
        rows = summary_table(ensemble)
        self.assertEqual(len(rows), 50)
        self.assertIn("T_0.5", rows[0])
        self.assertEqual(rows[0]["final_time"], 1.0)


class TestEstimate(unittest.TestCase):
    def test_exact_samples(self):
        estimate = Estimate.of("one", np.ones(10), 1.0)
        self.assertEqual(estimate.standard_error, 0.0)
        self.assertEqual(estimate.deviation_se, 0.0)
        self.assertTrue(estimate.within(1.0))

    def test_single_sample(self):
        self.assertEqual(Estimate.of("x", np.array([2.0]), 1.0).standard_error, float("inf"))

    def test_deviation(self):
        estimate = Estimate.of("x", np.array([0.0, 2.0]), 0.0)
        self.assertAlmostEqual(estimate.standard_error, 1.0)
        self.assertAlmostEqual(estimate.deviation_se, 1.0)
        self.assertIn("1.00 SE", estimate.describe())


class TestBridgeLocalTime(unittest.TestCase):
    def test_far_level_has_no_local_time(self):
        self.assertLess(float(bridge_local_time_mean(0.0, 0.0, 10.0, 0.01)), 1e-12)

    def test_level_at_both_ends(self):
        tau = 0.04
        expected = np.sqrt(0.5 * np.pi * tau)
        self.assertAlmostEqual(float(bridge_local_time_mean(1.0, 1.0, 1.0, tau)), expected)


class TestIdentityChecks(unittest.TestCase):
    def setUp(self):
        self.spec = standard_bm()

    def test_martingale_without_functional_is_exact(self):
        config = SimConfig(dt=0.01, n_paths=100, horizon=1.0, intervals=[(-1.0, 1.0)], table_points=1001)
        ensemble = simulate(self.spec, 0.0, config)
        report = check_iw_martingale(ensemble, ones, -1.0, 1.0)
        self.assertEqual(report.max_deviation_se, 0.0)
        self.assertTrue(report.bounded)
        self.assertEqual(len(report.rows), 11)

    def test_harmonic_martingale(self):
        config = SimConfig(dt=0.01, n_paths=2000, horizon=2.0, seed=11, intervals=[(-1.0, 1.0)], table_points=2001)
        ensemble = simulate(self.spec, 0.0, config)
        report = check_iw_martingale(ensemble, lambda x: np.asarray(x, dtype=float) + 2.0, -1.0, 1.0)
        self.assertLess(report.max_deviation_se, 4.0, report.describe())
        self.assertTrue(report.bounded)

    def test_last_passage(self):
        config = SimConfig(dt=0.01, n_paths=2000, horizon=10.0, seed=5, last_passage=[(1.0, 3.0)], table_points=2001)
        ensemble = simulate(self.spec, 2.0, config)
        report = check_last_passage(ensemble, 1.0, 3.0)
        self.assertEqual(report.rhs, 1.0)
        self.assertAlmostEqual(report.probability.target, 0.5)
        self.assertLess(report.deviation_se, 4.0, report.describe())

    def test_last_passage_needs_z_beyond(self):
        config = SimConfig(dt=0.01, n_paths=10, horizon=0.1, levels=[1.0, 3.0], table_points=1001)
        ensemble = simulate(self.spec, 2.0, config)
        with self.assertRaises(PreconditionError):
            check_last_passage(ensemble, 3.0, 1.5)
        with self.assertRaises(PreconditionError):
            check_last_passage(ensemble, 1.0, 1.0)

    def test_local_time_calibration(self):
        config = SimConfig(dt=1e-3, n_paths=2000, horizon=6.0, seed=2, table_points=2001)
        estimate = calibrate_local_time(self.spec, 1.0, 1.0, 0.0, 2.0, config)
        self.assertAlmostEqual(estimate.target, 0.5)
        self.assertTrue(estimate.within(4.0), estimate.describe())

    def test_vanishing_on_transient_diffusion_not_applicable(self):
        from iwpairs.catalog import bm_half_line

        config = SimConfig(dt=0.01, n_paths=10, horizon=0.5, table_points=1001)
        ensemble = simulate(bm_half_line(), 1.0, config)
        report = check_vanishing(ensemble, ones)
        self.assertFalse(report.applicable)
        self.assertIn("transient", report.describe())

    def test_vanishing_needs_a_functional(self):
        config = SimConfig(dt=0.01, n_paths=10, horizon=0.5, table_points=1001)
        report = check_vanishing(simulate(self.spec, 0.0, config), ones)
        self.assertFalse(report.applicable)


class TestMeasureChange(unittest.TestCase):
    def test_functional_validation(self):
        with self.assertRaises(ValueError):
            Functional(kind="hit_before", x=1.0)
        with self.assertRaises(ValueError):
            Functional(kind="never")
        self.assertEqual(Functional(kind="one", interval=(-1.0, 1.0)).events(), {"intervals": [(-1.0, 1.0)]})

    def test_constant_g_changes_nothing(self):
        spec = standard_bm()
        one = GridFunction.from_function(ones, uniform_grid(-2.0, 2.0, 5), spec.scale)
        t = transform(spec, one, 0.0)
        config = SimConfig(dt=0.01, n_paths=100, horizon=0.5, table_points=1001)
        report = compare_measure_change(
            t, RadonMeasure.zero(), 0.0, Functional(kind="one", interval=(-1.0, 1.0)), config
        )
        self.assertEqual(report.prediction, 1.0)
        self.assertEqual(report.deviation_se, 0.0)
        self.assertAlmostEqual(report.reweighted.value, 1.0)

    def test_reweighting_by_psi(self):
        # from 2, BM leaves (1.5, 3) upward w.p. 1/3 and psi(3) / psi(2) = 5/3
        t = delta_transformed(0.5)
        config = SimConfig(dt=1e-3, n_paths=2000, horizon=10.0, seed=13, truncation=(-4.0, 4.5), table_points=2001)
        report = compare_measure_change(t, delta_atom(0.5), 2.0, Functional(kind="hit_before", x=3.0, w=1.5), config)
        self.assertAlmostEqual(report.prediction, 5.0 / 9.0, places=6)
        self.assertTrue(report.direct.within(4.0), report.describe())
        self.assertTrue(report.reweighted.within(4.0), report.describe())
        self.assertLess(report.deviation_se, 4.0)


class TestTransformedPaths(unittest.TestCase):
    def test_local_time_at_the_anchor_killed_at_both_ends(self):
        t = delta_transformed(0.5)
        config = SimConfig(dt=4e-3, n_paths=1000, horizon=80.0, seed=21, truncation=(-6.0, 6.0), table_points=2001)
        report = check_local_time_law(t, 1.0, config, 6.0)
        # 2 u(1, 1) / s_g'(1) with s_g(-6) = -28 and s_g(6) = 20/11
        self.assertAlmostEqual(report.mean.target, 0.853659, places=5)
        self.assertAlmostEqual(report.limit_mean, 1.0, places=6)
        self.assertTrue(report.mean.within(4.0), report.describe())

    def test_bound_on_the_recurrent_side_rejected(self):
        config = SimConfig(dt=0.01, n_paths=10, horizon=0.1, truncation=(-6.0, 6.0), table_points=1001)
        with self.assertRaises(PreconditionError):
            check_local_time_law(delta_transformed(0.5), 1.0, config, -3.0)


class TestNaturalRepresentation(unittest.TestCase):
    def test_clock_discount_at_the_hitting_time(self):
        # E^-0.5[exp(-T_0)] = exp(-sqrt(2) / 2)
        config = SimConfig(dt=2.5e-4, n_paths=1000, horizon=6.0, seed=17, truncation=(-6.0, 0.0), table_points=1001)
        g = lambda x: np.exp(math.sqrt(2.0) * np.asarray(x, dtype=float))  # noqa: E731
        estimate = check_natural_representation(standard_bm(), lebesgue_2(), g, 0.0, 1.0, -0.5, config)
        self.assertAlmostEqual(estimate.target, math.exp(-math.sqrt(0.5)), places=12)
        self.assertTrue(estimate.within(4.0), estimate.describe())

    def test_start_must_lie_below_c(self):
        config = SimConfig(dt=0.01, n_paths=10, horizon=0.1, table_points=1001)
        with self.assertRaises(PreconditionError):
            check_natural_representation(standard_bm(), lebesgue_2(), math.exp, 0.0, 1.0, 0.5, config)


if __name__ == "__main__":
    unittest.main()
