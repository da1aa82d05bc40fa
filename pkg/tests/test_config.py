import math
import os
import tempfile
import unittest

from iwpairs.config import (
    CheckConfig,
    GridConfig,
    SolveMode,
    dump_config,
    load_config,
    parse_config,
)
from iwpairs.exceptions import ConfigParseError, IWPairsError, PreconditionError

MINIMAL = """\
[diffusion]
catalog = "standard-bm"

[measures.A]
atoms = [[1.0, 2.0]]
label = "atom"

[task]
kind = "classify"
measure = "A"
"""


class TestParseConfig(unittest.TestCase):
    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()
        self.files_to_cleanup = []

    def tearDown(self):
        """Clean up any files created during tests"""
        for file_path in self.files_to_cleanup:
            if os.path.exists(file_path):
                os.remove(file_path)
        os.rmdir(self.temp_dir)

    def _write(self, name, text):
        path = os.path.join(self.temp_dir, name)
        with open(path, "w") as f:
            f.write(text)
        self.files_to_cleanup.append(path)
        return path

    def test_minimal_config(self):
        config = load_config(self._write("minimal.toml", MINIMAL))
        self.assertEqual(config.task.kind, "classify")
        spec = config.build_diffusion()
        mu = config.build_measure("A", spec)
        self.assertEqual(mu.atoms, ((1.0, 2.0),))
        self.assertEqual(mu.label, "atom")
        self.assertTrue(config.build_measure(None, spec).is_zero())

    def test_catalog_configs(self):
        config = load_config("catalog:delta")
        self.assertEqual(config.task.kind, "solve")
        self.assertEqual(config.task.mode, SolveMode.PAIR)
        mu = config.build_measure("A", config.build_diffusion())
        self.assertEqual(dict(mu.atoms)[1.0], 2.0)
        self.assertEqual(load_config("catalog:exp-natural").task.grid.points, 3001)

    def test_example_verify_config(self):
        path = os.path.join(os.path.dirname(__file__), "..", "example", "data", "delta_verify.toml")
        config = load_config(path)
        self.assertEqual(config.task.kind, "verify")
        self.assertEqual([check.kind.value for check in config.task.checks][:2], ["martingale", "last_passage"])
        self.assertEqual(config.task.simulation.n_paths, 4000)
        self.assertEqual(config.output.precision, 12)

    def test_unknown_catalog_config(self):
        with self.assertRaises(ConfigParseError):
            load_config("catalog:nope")

    def test_missing_file(self):
        with self.assertRaises(IWPairsError):
            load_config(os.path.join(self.temp_dir, "missing.toml"))

    def test_toml_syntax_error_has_position(self):
        with self.assertRaises(ConfigParseError) as ctx:
            parse_config("[diffusion]\ncatalog = \n")
        self.assertEqual(ctx.exception.line, 2)
        self.assertEqual(ctx.exception.name, "ParseError")

    def test_unknown_field_is_located(self):
        text = MINIMAL + "bogus = 1\n"
        with self.assertRaises(ConfigParseError) as ctx:
            parse_config(text)
        self.assertEqual(ctx.exception.line, 11)
        self.assertIn("bogus", str(ctx.exception))

    def test_bad_expression_is_located(self):
        text = MINIMAL.replace('label = "atom"', 'density = "x +* 2"')
        with self.assertRaises(ConfigParseError) as ctx:
            parse_config(text)
        self.assertEqual(ctx.exception.line, 6)

    def test_task_needs_a_measure(self):
        text = MINIMAL.replace('measure = "A"\n', "")
        with self.assertRaises(ConfigParseError) as ctx:
            parse_config(text)
        self.assertIn("needs a measure", str(ctx.exception))

    def test_undefined_measure(self):
        with self.assertRaises(ConfigParseError):
            parse_config(MINIMAL.replace('measure = "A"', 'measure = "B"'))

    def test_task_or_pipeline(self):
        pipeline = MINIMAL.replace("[task]", "[[tasks]]")
        config = parse_config(pipeline)
        self.assertEqual([task.kind for task in config.pipeline()], ["classify"])
        with self.assertRaises(ConfigParseError):
            parse_config(MINIMAL + '\n[[tasks]]\nkind = "classify"\nmeasure = "A"\n')

    def test_catalog_measure_on_another_interval(self):
        text = MINIMAL.replace('"standard-bm"', '"bm-half-line"').replace(
            'atoms = [[1.0, 2.0]]\nlabel = "atom"', 'catalog = "delta-atom"'
        )
        config = parse_config(text)
        with self.assertRaises(PreconditionError):
            config.build_measure("A", config.build_diffusion())

    def test_explicit_diffusion(self):
        text = """\
[diffusion]
name = "drift"
scale = "1 - exp(-2*x)"
scale_inverse = "-log(1 - x)/2"
scale_derivative = "2*exp(-2*x)"
speed = "exp(2*x)"

[measures.A]
density = "1"

[task]
kind = "classify"
measure = "A"
"""
        spec = parse_config(text).build_diffusion()
        self.assertEqual(spec.name, "drift")
        self.assertEqual(spec.lower, -math.inf)
        self.assertAlmostEqual(float(spec.scale(0.5)), 1 - math.exp(-1.0))

    def test_diffusion_needs_scale(self):
        with self.assertRaises(ConfigParseError):
            parse_config(MINIMAL.replace('catalog = "standard-bm"', 'speed = "2"'))


class TestDumpConfig(unittest.TestCase):
    def test_dump_parses_back(self):
        for name in ("delta", "exp-natural", "inverse-square"):
            with self.subTest(name=name):
                config = load_config(f"catalog:{name}")
                self.assertEqual(parse_config(dump_config(config)), config)

    def test_infinite_bounds_survive(self):
        config = parse_config(MINIMAL)
        text = dump_config(config)
        self.assertIn("-inf", text)
        self.assertEqual(parse_config(text).diffusion.lower, -math.inf)


class TestSubConfigs(unittest.TestCase):
    def test_grid_bounds(self):
        with self.assertRaises(ValueError):
            GridConfig(lower=1.0)
        with self.assertRaises(ValueError):
            GridConfig(lower=1.0, upper=0.0)
        grid = GridConfig(nodes=[2.0, 0.0, 1.0]).build([0.5, 1.0])
        self.assertEqual(list(grid), [0.0, 0.5, 1.0, 2.0])

    def test_check_fields(self):
        with self.assertRaises(ValueError):
            CheckConfig(kind="martingale", a=0.0)
        with self.assertRaises(ValueError):
            CheckConfig(kind="measure_change", functional="one", x=1.0, w=2.0)
        self.assertEqual(CheckConfig(kind="vanishing").kind.value, "vanishing")


if __name__ == "__main__":
    unittest.main()
