"""Walk through the atom example with the library API.

Brownian motion on the line with the additive functional of an atom of mass
1/delta at 1: classify both endpoints, solve for the fundamental pair, check
it against delta + (x - 1)^+, transform by psi and, optionally, confirm the
martingale identity by simulation.

Examples:
python example/main.py
python example/main.py --delta 0.25 --paths 5000
python example/main.py --log-level DEBUG
"""

import argparse
import logging
import sys

import numpy as np

from iwpairs import (
    IWPairsError,
    classify_both,
    fundamental_pair,
    q_hitting,
    q_local_time_mean,
    transform,
    uniform_grid,
)
from iwpairs.catalog import delta_atom, standard_bm
from iwpairs.montecarlo import SimConfig, check_iw_martingale, simulate

# Set up logging
logger = logging.getLogger(__name__)


def get_parser() -> argparse.ArgumentParser:
    """Create and configure the argument parser"""
    parser = argparse.ArgumentParser(
        description="Fundamental pair and path transformation for Brownian motion with an atom",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python example/main.py
  python example/main.py --delta 0.25 --paths 5000
        """,
    )
    parser.add_argument("--delta", type=float, default=0.5, help="The atom at 1 has mass 1/delta")
    parser.add_argument(
        "--paths",
        type=int,
        default=0,
        help="Number of simulated paths for the martingale check (0 skips it)",
    )
    parser.add_argument("--seed", type=int, default=7, help="Seed of the simulation")
    parser.add_argument(
        "--log-level",
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        default="INFO",
        help="Set the logging level",
    )
    return parser


def main() -> int:
    """Run the walkthrough and log the results"""
    parser = get_parser()
    args = parser.parse_args()

    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )

    delta = args.delta
    spec = standard_bm()
    mu = delta_atom(delta)
    try:
        logger.info(classify_both(spec, mu).describe())

        grid = uniform_grid(-5.0, 5.0, 201, [1.0])
        pair = fundamental_pair(spec, mu, 1.0, grid, alpha_psi=delta, alpha_phi=delta)
        xs = pair.psi.grid
        error = float(np.max(np.abs(pair.psi.values - (delta + np.maximum(xs - 1.0, 0.0)))))
        logger.info(f"psi against delta + (x-1)^+: sup error {error:.3g}")

        t = transform(spec, pair.psi, 1.0)
        logger.info(t.describe())
        logger.info(f"Q^2(T_0 < inf) = {q_hitting(t, 2.0, 0.0):.10g} (closed form {delta**2 / (1 + delta) ** 2:.10g})")
        logger.info(f"Q^1(L^1_inf) = {q_local_time_mean(t, 1.0):.10g} (closed form {2 * delta:.10g})")

        if args.paths > 0:
            config = SimConfig(dt=1e-3, n_paths=args.paths, horizon=2.0, seed=args.seed, intervals=[(-1.0, 3.0)])
            ensemble = simulate(spec, 0.5, config, mu)
            logger.info(check_iw_martingale(ensemble, pair.psi, -1.0, 3.0).describe())
    except IWPairsError as e:
        logger.error(e.describe())
        return 1

    return 0


# Example usage
if __name__ == "__main__":
    sys.exit(main())
