"""
Command-line front end.

Subcommands: describe, support-plot, verify, sample, convolve. Every command
validates its arguments into a RunConfig first; exit codes are 0 on success,
1 when a verification fails and 2 on invalid input.
"""

import argparse
import math
import sys
from typing import List, Optional

from loguru import logger
from pydantic import ValidationError

from backend.models.documents import AtomCurve, ConvolutionDocument, SupportPlotDocument
from backend.models.errors import BiPoissonError
from backend.models.run_config import Command, RunConfig, Suite
from backend.services.freeconv import semigroup_check
from backend.services.process import marginal, sample_paths
from backend.services.spectra import atom_weight_closed_form
from backend.services.verification_runner import run_suite
from backend.utils.scalars import ScalarMode, scalar_to_json
from config import settings

SUPPORT_PLOT_HORIZON = "2"


def configure_logging():
    """stderr sink at LOG_LEVEL, plus a rotating file sink when LOG_FILE is set."""
    logger.remove()
    logger.add(sys.stderr, level=settings.LOG_LEVEL)
    if settings.LOG_FILE:
        logger.add(
            settings.LOG_FILE,
            rotation=settings.LOG_ROTATION,
            retention=settings.LOG_RETENTION,
            level=settings.LOG_LEVEL,
        )


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--eta", help='eta, e.g. "1/2" or "0.5"')
    common.add_argument("--theta", help="theta")
    common.add_argument("--t", help="time")
    common.add_argument("--s", help="earlier time")
    common.add_argument("--u", help="later time")
    common.add_argument("--times", help="comma-separated increasing times")
    common.add_argument("--order", type=int, help="series order / identity index bound")
    common.add_argument("--deg", type=int, help="polynomial degree bound")
    common.add_argument("--n", type=int, help="number of paths")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--mode", choices=[m.value for m in ScalarMode], help="coefficient field")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--suite", choices=[s.value for s in Suite], help="verification suite")
    common.add_argument("--parallel", type=int, help="cells evaluated at once")

    parser = argparse.ArgumentParser(prog="bipoisson", description=settings.APP_NAME)
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("describe", parents=[common], help="spectral measure of pi_t")
    commands.add_parser("support-plot", parents=[common], help="supports of pi_t over a time grid")
    commands.add_parser("verify", parents=[common], help="run a verification suite")
    commands.add_parser("sample", parents=[common], help="sample paths as CSV")
    commands.add_parser("convolve", parents=[common], help="c-convolution of bi-Poisson pairs")
    return parser


def parse_config(argv: Optional[List[str]] = None) -> RunConfig:
    """Parse argv into a RunConfig; options left out fall back to the model defaults."""
    args = vars(build_parser().parse_args(argv))
    return RunConfig(**{key: value for key, value in args.items() if value is not None})


def emit(config: RunConfig, text: str):
    if config.out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
        return
    config.out.parent.mkdir(parents=True, exist_ok=True)
    config.out.write_text(text, encoding="utf-8")
    logger.info(f"Wrote {config.command.value} output to {config.out}")


def cmd_describe(config: RunConfig) -> int:
    measure = marginal(config.params, config.number("t"))
    emit(config, measure.to_document(settings.DENSITY_SAMPLES).to_json())
    return 0


def support_plot_document(config: RunConfig) -> SupportPlotDocument:
    """
    Band [beta - 2 sqrt(alpha), beta + 2 sqrt(alpha)] of the a.c. part and the
    two atom curves -t/theta and -1/eta on t_k = T k / SUPPORT_PLOT_POINTS.
    """
    params = config.params
    horizon = config.optional_number("t", SUPPORT_PLOT_HORIZON)
    points = settings.SUPPORT_PLOT_POINTS
    grid = [horizon * k / points for k in range(1, points + 1)]
    eta, theta = float(params.eta), float(params.theta)

    bands = []
    for t in grid:
        if params.is_degenerate:
            bands.append(None)
            continue
        centre, radius = float(t * params.eta + params.theta), 2 * math.sqrt(float(t * params.one_plus_eta_theta))
        bands.append([centre - radius, centre + radius])

    weights = [atom_weight_closed_form(params, t) for t in grid]
    curves = []
    if theta != 0:
        p = [float(w.p) for w in weights]
        curves.append(
            AtomCurve(label="-t/theta", locations=[-float(t) / theta for t in grid], weights=p, active=[w > 0 for w in p])
        )
    if eta != 0:
        q = [float(w.q) for w in weights]
        curves.append(AtomCurve(label="-1/eta", locations=[-1 / eta] * len(grid), weights=q, active=[w > 0 for w in q]))
    return SupportPlotDocument(
        params={key: scalar_to_json(value) for key, value in params.to_dict().items()},
        t_grid=[float(t) for t in grid],
        support_bands=bands,
        atom_curves=curves,
    )


def cmd_support_plot(config: RunConfig) -> int:
    emit(config, support_plot_document(config).to_json())
    return 0


def cmd_verify(config: RunConfig) -> int:
    summary = run_suite(config)
    emit(config, summary.to_json())
    if not summary.passed:
        failing = [r for r in summary.reports if not r.passed]
        logger.error(f"Verification failed in {len(failing)} of {len(summary.reports)} cells")
        return 1
    return 0


def cmd_sample(config: RunConfig) -> int:
    ensemble = sample_paths(config.params, config.time_list, config.seed, config.n)
    emit(config, ensemble.to_csv())
    return 0


def cmd_convolve(config: RunConfig) -> int:
    params = config.params
    s, t = config.number("s"), config.number("t")
    result = semigroup_check(params, s, t, config.order)
    document = ConvolutionDocument(
        params={key: scalar_to_json(value) for key, value in params.to_dict().items()},
        s=scalar_to_json(s),
        t=scalar_to_json(t),
        order=config.order,
        mode=config.mode.value,
        first=result.convolved[0].to_json(),
        second=result.convolved[1].to_json(),
        expected_first=result.expected[0].to_json(),
        expected_second=result.expected[1].to_json(),
        max_residual=result.max_residual,
        passed=result.passed,
    )
    emit(config, document.to_json())
    if not result.passed:
        logger.error(f"Convolution moments differ from the time-(s+t) pair: residual {result.max_residual:.3e}")
        return 1
    return 0


COMMANDS = {
    Command.DESCRIBE: cmd_describe,
    Command.SUPPORT_PLOT: cmd_support_plot,
    Command.VERIFY: cmd_verify,
    Command.SAMPLE: cmd_sample,
    Command.CONVOLVE: cmd_convolve,
}


def main(argv: Optional[List[str]] = None) -> int:
    configure_logging()
    try:
        config = parse_config(argv)
    except ValidationError as e:
        logger.error(f"Invalid arguments: {e}")
        return 2
    except SystemExit as e:
        # argparse usage errors
        return 2 if e.code else 0

    try:
        return COMMANDS[config.command](config)
    except BiPoissonError as e:
        logger.error(f"{config.command.value} failed: {e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
