"""
Gateway - Routes an experiment name to its runner and maps failures to exit codes
"""
import argparse
import logging
import sys

from services.experiments.config import EXPERIMENTS, PRESETS, load_experiment_config
from services.experiments.runners import run_experiment
from shared.config import configure_logging
from shared.errors import ExperimentError, GibbsQuadError

logger = logging.getLogger(__name__)

VERSION = '1.0.0'

EXIT_OK = 0
EXIT_UNEXPECTED = 1


def build_parser():
    """Command-line surface: gibbsquad <experiment> --config path [options]"""
    parser = argparse.ArgumentParser(
        prog='gibbsquad',
        description='Monte Carlo quadrature with repulsive Gibbs measures: experiment harness'
    )
    parser.add_argument('experiment', choices=EXPERIMENTS, help='experiment to run')
    parser.add_argument('--config', metavar='PATH', help='key = value config file with [run] [target] [kernel] '
                                                          '[gibbs] [background] sections')
    parser.add_argument('--preset', choices=sorted(PRESETS), help='named parameter set, overridden by --config')
    parser.add_argument('--paper-scale', action='store_true', help='full-scale chain lengths and replicate counts')
    parser.add_argument('--seed', type=int, help='base seed (64-bit unsigned)')
    parser.add_argument('--out', metavar='DIR', help='output directory')
    parser.add_argument('--threads', type=int, help='worker processes for replicates')
    parser.add_argument('--log-level', help='overrides GIBBSQUAD_LOG_LEVEL')
    parser.add_argument('--version', action='version', version=f"%(prog)s {VERSION}")
    return parser


def main(argv=None):
    """Parse arguments, run the experiment and return the process exit code"""
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)

    try:
        cfg = load_experiment_config(
            experiment=args.experiment,
            path=args.config,
            preset=args.preset,
            paper_scale=args.paper_scale,
            seed=args.seed,
            out=args.out,
            threads=args.threads,
        )
        run_experiment(cfg)
    except ExperimentError as e:
        logger.error(f"{args.experiment} failed in {e.context}: {e.cause}")
        return e.exit_code
    except GibbsQuadError as e:
        logger.error(f"{args.experiment} failed: {e}")
        return e.exit_code
    except Exception:
        logger.exception(f"{args.experiment} failed with an unexpected error")
        return EXIT_UNEXPECTED

    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
