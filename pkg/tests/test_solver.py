import math
import unittest
import warnings

import numpy as np

from iwpairs.boundary import BoundaryKind
from iwpairs.catalog import bm_half_line, delta_atom, delta_psi, inverse_square, lebesgue_2, standard_bm
from iwpairs.exceptions import InadmissibleError, NotNaturalError, PreconditionError, SingularError, ZeroMeasureError
from iwpairs.grid import geometric_grid, uniform_grid
from iwpairs.measures import RadonMeasure, Side
from iwpairs.solver import (
    Direction,
    EquationSpec,
    NaturalNorm,
    anchored_residual,
    apply_T,
    compare_solutions,
    fit_pair,
    fundamental_pair,
    general_solution,
    solve,
    solve_natural,
    boundary_table_report,
    verify_pair,
)


class TestEquationSpec(unittest.TestCase):
    def test_trivial_data_rejected(self):
        with self.assertRaises(ValueError):
            EquationSpec(a=0.0, kappa=0.0)

    def test_direction_names(self):
        self.assertIs(Direction.from_name("inc"), Direction.INCREASING)
        self.assertIs(Direction.from_name("Decreasing"), Direction.DECREASING)
        self.assertIs(Direction.DECREASING.boundary, Side.RIGHT)
        with self.assertRaises(ValueError):
            Direction.from_name("sideways")


class TestDeltaPair(unittest.TestCase):
    """Brownian motion with an atom of mass 1/delta at 1."""

    def setUp(self):
        self.spec = standard_bm()
        self.grid = uniform_grid(-5.0, 5.0, 201, [1.0])

    def test_pair_matches_closed_form(self):
        for delta in (0.25, 0.5, 1.0):
            with self.subTest(delta=delta):
                pair = fundamental_pair(self.spec, delta_atom(delta), 1.0, self.grid, delta, delta)
                xs = pair.psi.grid
                psi_exact = delta + np.maximum(xs - 1.0, 0.0)
                phi_exact = delta + np.maximum(1.0 - xs, 0.0)
                self.assertLess(float(np.max(np.abs(pair.psi.values - psi_exact))), 1e-8)
                self.assertLess(float(np.max(np.abs(np.asarray(pair.phi(xs)) - phi_exact))), 1e-8)
                self.assertEqual(pair.left.kind, BoundaryKind.A_ENTRANCE)
                self.assertEqual(pair.right.kind, BoundaryKind.A_ENTRANCE)

    def test_slope_jump_at_the_atom(self):
        pair = fundamental_pair(self.spec, delta_atom(0.5), 1.0, self.grid, 0.5, 0.5)
        left, right = pair.psi.s_derivatives
        i = pair.psi.node_index(1.0)
        self.assertAlmostEqual(float(left[i]), 0.0, places=10)
        self.assertAlmostEqual(float(right[i]), 1.0, places=10)

    def test_single_equation_report(self):
        eq = EquationSpec(direction=Direction.INCREASING, a=1.0)
        g = solve(self.spec, delta_atom(0.5), eq, self.grid)
        report = g.metadata["report"]
        self.assertTrue(report.monotone)
        self.assertTrue(report.gronwall_ok)
        self.assertEqual(report.boundary_kind, "AEntrance")
        self.assertAlmostEqual(float(g(3.0)), 1.0 + 2.0 * 2.0, places=10)
        self.assertIn("gauss-seidel iterations", report.describe())

    def test_jacobi_agrees_with_gauss_seidel(self):
        eq = EquationSpec(direction=Direction.DECREASING, a=1.0)
        gs = solve(self.spec, delta_atom(0.5), eq, self.grid)
        jacobi = solve(self.spec, delta_atom(0.5), eq, self.grid, method="jacobi")
        np.testing.assert_allclose(gs.values, jacobi.values, rtol=1e-9)

    def test_kappa_at_infinite_scale_is_inadmissible(self):
        eq = EquationSpec(direction=Direction.INCREASING, a=1.0, kappa=1.0)
        with self.assertRaises(InadmissibleError):
            solve(self.spec, delta_atom(0.5), eq, self.grid)

    def test_zero_measure(self):
        eq = EquationSpec(a=1.0)
        with self.assertRaises(ZeroMeasureError):
            solve(self.spec, RadonMeasure.zero(), eq, self.grid)

    def test_natural_solver_rejects_entrance(self):
        with self.assertRaises(NotNaturalError):
            solve_natural(self.spec, delta_atom(0.5), Side.LEFT, 1.0, 1.0, self.grid)

    def test_apply_T_fixes_the_solution(self):
        psi = delta_psi(0.5)
        Tpsi = apply_T(self.spec, delta_atom(0.5), EquationSpec(a=0.5), psi)
        np.testing.assert_allclose(Tpsi.values, psi.values, atol=1e-12)

    def test_apply_T_needs_atoms_on_the_grid(self):
        psi = delta_psi(0.5)
        with self.assertRaises(PreconditionError):
            apply_T(self.spec, RadonMeasure.from_atoms([(0.01, 1.0)]), EquationSpec(a=0.5), psi)

    def test_general_solution_and_fit(self):
        pair = fundamental_pair(self.spec, delta_atom(0.5), 1.0, self.grid, 0.5, 0.5)
        g = general_solution(pair, 2.0, 3.0)
        self.assertIn("strictly_positive", g.tags)
        fit = fit_pair(g, pair, -2.0, 3.0)
        self.assertAlmostEqual(fit.lambda1, 2.0, places=8)
        self.assertAlmostEqual(fit.lambda2, 3.0, places=8)
        self.assertLess(fit.misfit, 1e-8)
        with self.assertRaises(PreconditionError):
            general_solution(pair, -1.0, 1.0)
        with self.assertRaises(SingularError):
            fit_pair(g, pair, 1.0, 1.0)

    def test_verify_pair_identities(self):
        pair = fundamental_pair(self.spec, delta_atom(0.5), 1.0, self.grid, 0.5, 0.5)
        check = verify_pair(
            pair.psi,
            self.spec,
            delta_atom(0.5),
            triples=[(0.0, 2.0, 1.0), (-1.0, 3.0, 0.5)],
            pairs=[(0.0, 2.0)],
            eq=EquationSpec(a=0.5),
            xs=[-1.0, 2.5],
        )
        self.assertTrue(check.ok, check.describe())

    def test_anchored_form_admits_sign_changes(self):
        mu = delta_atom(0.5)
        kappa = math.cosh(1.0)
        g = lambda x: 1.0 + kappa * (x - 1.0) + 2.0 * max(x - 1.0, 0.0)  # noqa: E731
        residual = anchored_residual(g, self.spec, mu, 1.0, kappa, "increasing", [-3.0, 0.0, 2.0, 4.0])
        self.assertLess(residual.max_abs, 1e-9)
        self.assertLess(g(-3.0), 0.0)

    def test_pair_is_consistent_with_boundary_table(self):
        pair = fundamental_pair(self.spec, delta_atom(0.5), 1.0, self.grid, 0.5, 0.5)
        report = boundary_table_report(pair, self.spec)
        self.assertTrue(report.consistent, report.describe())

    def test_larger_data_give_larger_solutions(self):
        low = solve(self.spec, delta_atom(0.5), EquationSpec(a=1.0), self.grid)
        high = solve(self.spec, delta_atom(0.5), EquationSpec(a=2.0), self.grid)
        self.assertTrue(compare_solutions(low, high).strict)
        self.assertFalse(compare_solutions(high, low).strict)


class TestStartingIterate(unittest.TestCase):
    def setUp(self):
        self.spec = standard_bm()
        self.mu = RadonMeasure.from_atoms([(1.0, 2.0), (2.0, 1.0)])
        self.eq = EquationSpec(direction=Direction.INCREASING, a=0.5)
        self.grid = uniform_grid(-5.0, 5.0, 201, [1.0, 2.0])

    def test_any_start_below_the_solution_gives_the_same_limit(self):
        default = solve(self.spec, self.mu, self.eq, self.grid)
        xs = default.grid
        exact = 0.5 + np.maximum(xs - 1.0, 0.0) + 1.5 * np.maximum(xs - 2.0, 0.0)
        self.assertLess(float(np.max(np.abs(default.values - exact))), 1e-9)
        for start in (np.zeros(xs.size), 0.5 * default.values):
            other = solve(self.spec, self.mu, self.eq, self.grid, initial=start)
            self.assertLess(float(np.max(np.abs(other.values - default.values))), 1e-9)


class TestNaturalSolutions(unittest.TestCase):
    def test_inverse_square_gives_x_squared(self):
        spec = bm_half_line()
        grid = geometric_grid(0.1, 10.0, 10001, anchor=0.0)
        g = solve_natural(spec, inverse_square(), Side.LEFT, 1.0, 1.0, grid)
        xs = g.grid
        rel = np.abs(g.values - xs**2) / xs**2
        self.assertLess(float(np.max(rel)), 1e-6)
        self.assertTrue(g.metadata["report"].truncations)

    def test_exponential_for_the_clock(self):
        spec = standard_bm()
        grid = uniform_grid(-3.0, 3.0, 3001)
        g = solve_natural(spec, lebesgue_2(), "left", 0.0, 1.0, grid)
        exact = np.exp(math.sqrt(2.0) * g.grid)
        self.assertLess(float(np.max(np.abs(g.values - exact) / exact)), 1e-5)

    def test_truncation_schedule_does_not_change_the_solution(self):
        spec = standard_bm()
        grid = uniform_grid(-3.0, 3.0, 3001)
        default = solve_natural(spec, lebesgue_2(), "left", 0.0, 1.0, grid)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            # bounds at the far nodes land just below the float maximum
            other = solve_natural(spec, lebesgue_2(), "left", 0.0, 1.0, grid, schedule=[-7.0, -26.0, -27.0])
        self.assertEqual(other.metadata["report"].truncations, [-7.0, -26.0, -27.0])
        overflow = [w for w in caught if issubclass(w.category, RuntimeWarning) and "overflow" in str(w.message)]
        self.assertEqual(overflow, [])
        np.testing.assert_array_equal(default.grid, other.grid)
        rel = np.abs(default.values - other.values) / default.values
        self.assertLess(float(np.max(rel)), 1e-8)

    def test_solve_dispatches_natural_normalisation(self):
        spec = standard_bm()
        eq = EquationSpec(direction=Direction.DECREASING, natural_norm=NaturalNorm(c=0.0, alpha=1.0))
        g = solve(spec, lebesgue_2(), eq, uniform_grid(-3.0, 3.0, 3001))
        exact = np.exp(-math.sqrt(2.0) * g.grid)
        self.assertLess(float(np.max(np.abs(g.values - exact) / exact)), 1e-5)
        self.assertEqual(g.name, "phi")


if __name__ == "__main__":
    unittest.main()
