import io
import os
import re
import shutil
import tempfile
import unittest
from unittest.mock import patch

from iwpairs.cli import EXIT_ERROR, EXIT_INCONCLUSIVE, EXIT_OK, get_parser, main, run
from iwpairs.exceptions import InconclusiveError

EMPTY_MEASURE = """\
[diffusion]
catalog = "standard-bm"

[measures.A]
label = "empty"

[task]
kind = "classify"
measure = "A"
"""

DELTA_TRANSFORM = """\
[diffusion]
catalog = "standard-bm"

[measures.A]
catalog = "delta-atom"
params = { delta = 0.5 }

[task]
kind = "transform"
measure = "A"
c = 1.0
alpha_psi = 0.5
alpha_phi = 0.5
lambda1 = 1.0
lambda2 = 0.0
points = [0.0, 1.0, 2.0]
hitting = [[2.0, 0.0]]
local_times = [1.0]

[task.grid]
lower = -5.0
upper = 5.0
points = 201
"""

DECOMPOSE = """\
[diffusion]
catalog = "standard-bm"

[task]
kind = "decompose"
function = "0.5 + max(x - 1, 0)"
"""

SMALL_VERIFY = """\
[diffusion]
catalog = "standard-bm"

[measures.A]
catalog = "delta-atom"
params = { delta = 0.5 }

[task]
kind = "verify"
measure = "A"
c = 1.0
alpha_psi = 0.5
alpha_phi = 0.5
lambda1 = 1.0
x0 = 0.5

[task.simulation]
dt = 0.01
n_paths = 200
horizon = 1.0
table_points = 1001

[[task.checks]]
kind = "martingale"
a = -1.0
b = 3.0
"""


class TestCommandLine(unittest.TestCase):
    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        """Clean up any files created during tests"""
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def _write(self, name, text):
        path = os.path.join(self.temp_dir, name)
        with open(path, "w") as f:
            f.write(text)
        return path

    def _run(self, argv):
        with patch("sys.stdout", new_callable=io.StringIO) as out, patch("sys.stderr", new_callable=io.StringIO) as err:
            code = run(argv)
        return code, out.getvalue(), err.getvalue()

    def test_parser_defaults(self):
        args = get_parser().parse_args(["solve", "--config", "catalog:delta"])
        self.assertEqual(args.log_level, "WARNING")
        self.assertIsNone(args.out)
        self.assertFalse(args.dump_config)

    def test_catalog_listing(self):
        code, out, _ = self._run(["catalog"])
        self.assertEqual(code, EXIT_OK)
        self.assertIn("diffusions:", out)
        self.assertIn("delta-atom", out)
        self.assertIn("exp-natural", out)

    def test_config_required(self):
        with patch("sys.stderr", new_callable=io.StringIO):
            with self.assertRaises(SystemExit):
                run(["solve"])

    def test_classify_natural_boundaries(self):
        code, out, _ = self._run(["classify", "--config", "catalog:inverse-square"])
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(out.count("ANatural"), 2)
        self.assertIn("passed", out)

    def test_empty_measure_fails(self):
        code, _, err = self._run(["classify", "--config", self._write("empty.toml", EMPTY_MEASURE)])
        self.assertEqual(code, EXIT_ERROR)
        self.assertIn("ZeroMeasure", err)

    def test_wrong_subcommand(self):
        code, _, err = self._run(["solve", "--config", "catalog:inverse-square"])
        self.assertEqual(code, EXIT_ERROR)
        self.assertIn("no solve task", err)

    def test_parse_error(self):
        code, _, err = self._run(["classify", "--config", self._write("broken.toml", "[diffusion\n")])
        self.assertEqual(code, EXIT_ERROR)
        self.assertIn("ParseError", err)

    def test_solve_delta_pair(self):
        code, out, _ = self._run(["solve", "--config", "catalog:delta"])
        self.assertEqual(code, EXIT_OK)
        self.assertIn("== solve (ok) ==", out)
        self.assertIn("-- solve_psi.csv --", out)
        self.assertIn("x,s(x),value,ds_left,ds_right", out)

    def test_solve_writes_tables(self):
        out_dir = os.path.join(self.temp_dir, "results")
        code, out, _ = self._run(["solve", "--config", "catalog:delta", "--out", out_dir, "--precision", "8"])
        self.assertEqual(code, EXIT_OK)
        for name in ("solve_psi.csv", "solve_phi.csv"):
            path = os.path.join(out_dir, name)
            self.assertTrue(os.path.exists(path))
            self.assertIn(f"wrote {path}", out)
        with open(os.path.join(out_dir, "solve_psi.csv")) as f:
            lines = f.read().splitlines()
        self.assertTrue(lines[0].startswith("# iwpairs"))
        self.assertEqual(lines[1], "x,s(x),value,ds_left,ds_right")
        self.assertEqual(len(lines), 2 + 201)

    def test_dump_config(self):
        code, out, _ = self._run(["solve", "--config", "catalog:delta", "--dump-config"])
        self.assertEqual(code, EXIT_OK)
        self.assertIn("[diffusion]", out)
        self.assertIn('kind = "solve"', out)

    def test_transform(self):
        code, out, _ = self._run(["transform", "--config", self._write("transform.toml", DELTA_TRANSFORM)])
        self.assertEqual(code, EXIT_OK)
        hitting = re.search(r"Q\^2\(T_0 < inf\) = (\S+)", out)
        local_time = re.search(r"Q\^1\(L\^1_inf\) = (\S+)", out)
        self.assertAlmostEqual(float(hitting.group(1)), 1.0 / 9.0, places=6)
        self.assertAlmostEqual(float(local_time.group(1)), 1.0, places=6)
        self.assertIn("-- transform_transform.csv --", out)

    def test_decompose(self):
        code, out, _ = self._run(["decompose", "--config", self._write("decompose.toml", DECOMPOSE)])
        self.assertEqual(code, EXIT_OK)
        self.assertIn("alpha = 0.5", out)
        self.assertIn("reconstruction sup-error", out)

    def test_verify_keeps_exit_code_zero(self):
        path = self._write("verify.toml", SMALL_VERIFY)
        code, out, _ = self._run(["verify", "--config", path, "--seed", "3"])
        self.assertEqual(code, EXIT_OK)
        self.assertIn("-- martingale --", out)
        self.assertIn("== verify", out)

    def test_inconclusive_verdict_exit_code(self):
        error = InconclusiveError("cannot decide the left endpoint", diagnostics={"partial_sums": [1.0, 2.0]})
        with patch("iwpairs.cli.run_task", side_effect=error):
            code, _, err = self._run(["classify", "--config", "catalog:inverse-square"])
        self.assertEqual(code, EXIT_INCONCLUSIVE)
        self.assertEqual(code, 2)
        self.assertIn("Inconclusive: cannot decide the left endpoint", err)
        self.assertIn("partial_sums: [1.0, 2.0]", err)

    def test_main_configures_logging(self):
        with patch("logging.basicConfig") as basic, patch("sys.stdout", new_callable=io.StringIO):
            code = main(["catalog", "--log-level", "DEBUG"])
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(basic.call_args.kwargs["level"], 10)


if __name__ == "__main__":
    unittest.main()
