import math
import unittest

import numpy as np

from iwpairs.exceptions import ConfigParseError
from iwpairs.expressions import compile_expression


class TestCompileExpression(unittest.TestCase):
    def test_polynomial_and_caret_power(self):
        expr = compile_expression("2/x^2")
        self.assertAlmostEqual(expr(2.0), 0.5)
        self.assertEqual(compile_expression("x**3")(2.0), 8.0)

    def test_vectorised_evaluation_keeps_shape(self):
        expr = compile_expression("0.5 + max(x - 1, 0)")
        out = expr(np.array([0.0, 1.0, 3.0]))
        np.testing.assert_allclose(out, [0.5, 0.5, 2.5])

    def test_constant_expression_broadcasts(self):
        out = compile_expression("2")(np.zeros(4))
        self.assertEqual(out.shape, (4,))
        self.assertTrue(np.all(out == 2.0))

    def test_functions_and_constants(self):
        self.assertAlmostEqual(compile_expression("exp(sqrt(2)*x)")(1.0), math.exp(math.sqrt(2.0)))
        self.assertAlmostEqual(compile_expression("cosh(x) - sinh(x)")(0.7), math.exp(-0.7))
        self.assertAlmostEqual(compile_expression("log(e)")(0.0), 1.0)
        self.assertAlmostEqual(compile_expression("min(x, pi, 10)")(5.0), math.pi)
        self.assertEqual(compile_expression("abs(-x)")(3.0), 3.0)
        self.assertEqual(compile_expression("inf")(0.0), math.inf)

    def test_custom_variable(self):
        expr = compile_expression("2*y + 1", variable="y")
        self.assertEqual(expr(1.0), 3.0)

    def test_equality_by_source(self):
        self.assertEqual(compile_expression("x"), compile_expression("x"))
        self.assertNotEqual(compile_expression("x"), compile_expression("2*x"))

    def test_unknown_name_reports_column(self):
        with self.assertRaises(ConfigParseError) as ctx:
            compile_expression("x + y")
        self.assertEqual(ctx.exception.column, 5)
        self.assertEqual(ctx.exception.name, "ParseError")

    def test_attribute_access_rejected(self):
        with self.assertRaises(ConfigParseError):
            compile_expression("x.__class__")

    def test_unknown_function_rejected(self):
        with self.assertRaises(ConfigParseError):
            compile_expression("open(x)")

    def test_string_literal_rejected(self):
        with self.assertRaises(ConfigParseError):
            compile_expression("'x'")

    def test_syntax_error(self):
        with self.assertRaises(ConfigParseError):
            compile_expression("x +")

    def test_wrong_arity(self):
        with self.assertRaises(ConfigParseError):
            compile_expression("exp(x, 1)")
        with self.assertRaises(ConfigParseError):
            compile_expression("max(x)")


if __name__ == "__main__":
    unittest.main()
