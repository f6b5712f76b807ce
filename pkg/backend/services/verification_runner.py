"""
Verification runner: fans the cells of a `verify` suite out over a worker pool.
"""
import asyncio
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from loguru import logger

from backend.models.documents import VerificationReport, VerificationSummary
from backend.models.errors import BiPoissonError
from backend.models.run_config import RunConfig, Suite
from backend.services import freeconv, process
from backend.services.recurrences import ProcessParams, verify_identities
from backend.utils.scalars import ScalarMode, parse_scalar, scalar_to_json
from config import settings

# Built-in grids, as strings so that exact and float runs share them.
IDENTITY_PARAMS = [
    ("0", "0"), ("1", "1"), ("1/2", "1/3"), ("2", "2"), ("-1", "-1"),
    ("-1", "1"), ("1", "-1"), ("-2", "1/2"), ("1/2", "-2"), ("3", "-1/3"),
    ("-1/3", "2"), ("1/4", "-1"), ("-3", "1/4"), ("0", "-2"), ("-2", "0"),
    ("0", "1"), ("1", "0"), ("5", "1/5"), ("-1/2", "1/2"), ("2/3", "-3/4"),
    ("1/3", "3"),
]
IDENTITY_TIMES = [("1/2", "1", "2"), ("0", "1", "3")]
IDENTITY_X = "1/3"

KERNEL_PARAMS = [("0", "0"), ("1/2", "1"), ("-1", "1"), ("1", "-1/2"), ("-1/2", "-1/2"), ("2", "1/3")]
KERNEL_TIMES = [
    ("0", "1/2", "1"), ("0", "1", "3"), ("1/4", "1/2", "1"), ("1/2", "1", "2"),
    ("1", "2", "3"), ("1", "3/2", "4"), ("1/3", "2", "5"), ("2", "3", "4"),
    ("1/10", "1", "10"), ("1/2", "3/4", "1"), ("3", "5", "8"), ("1", "4", "9"),
]

HARNESS_PARAMS = [("0", "0"), ("1/2", "1"), ("1", "1"), ("-1", "1"), ("1/2", "-1/2"), ("2", "-1/4")]
HARNESS_TIMES = [("1", "2", "3"), ("1/2", "1", "2")]

REVERSAL_PARAMS = [("1/2", "1/2"), ("1", "1")]
REVERSAL_TIMES = [("1", "2"), ("1/2", "3")]
REVERSAL_DEG = 4

SEMIGROUP_ETAS = ["-1", "-1/2", "0", "1/2", "1"]
SEMIGROUP_TIMES = [("1/2", "1"), ("1", "2"), ("2", "1/2")]
PAIR_TIMES = ["1/2", "2"]


@dataclass
class CellOutcome:
    """What one grid cell measured."""

    residual: float
    tolerance: float
    cell: Dict[str, Any]
    details: Dict[str, float] = field(default_factory=dict)


@dataclass
class VerificationCell:
    """One independent unit of a suite: a check at one parameter point and one grid point."""

    check: str
    params: ProcessParams
    grid: Dict[str, Any]
    run: Callable[[], CellOutcome]

    def params_json(self) -> Dict[str, Any]:
        return {key: scalar_to_json(value) for key, value in self.params.to_dict().items()}


def _tolerance(exact: bool) -> float:
    return 0.0 if exact else settings.FLOAT_IDENTITY_TOL


def _cell_dict(cell: Optional[Dict[str, Any]]) -> Dict[str, Any]:
    return {key: str(v) if isinstance(v, Fraction) else v for key, v in (cell or {}).items()}


# Cell builders


def identity_cell(params: ProcessParams, times: Sequence[str], x: str, N: int, mode: ScalarMode) -> VerificationCell:
    def run() -> CellOutcome:
        exact = mode == ScalarMode.EXACT
        s, t, u = (parse_scalar(v, mode) for v in times)
        report = verify_identities(params, s, t, u, parse_scalar(x, mode), N, exact=exact)
        worst = max(report.residuals.values(), key=lambda r: r.max_residual)
        return CellOutcome(
            report.max_residual,
            report.tolerance,
            {"identity": worst.identity, "n": worst.worst_index},
            {name: r.max_residual for name, r in sorted(report.residuals.items())},
        )

    return VerificationCell("identities", params, {"s": times[0], "t": times[1], "u": times[2], "x": x, "N": N}, run)


def chapman_cell(params: ProcessParams, times: Sequence[str], deg: int, mode: ScalarMode) -> VerificationCell:
    def run() -> CellOutcome:
        s, t, u = (parse_scalar(v, mode) for v in times)
        scan = process.chapman_kolmogorov_scan(params, s, t, u, deg)
        # nested quadrature: float tolerance in both modes
        return CellOutcome(scan.value, settings.FLOAT_IDENTITY_TOL, _cell_dict(scan.cell))

    return VerificationCell("chapman", params, {"s": times[0], "t": times[1], "u": times[2], "deg": deg}, run)


def martingale_cell(params: ProcessParams, times: Sequence[str], deg: int, mode: ScalarMode) -> VerificationCell:
    def run() -> CellOutcome:
        exact = mode == ScalarMode.EXACT
        s, t = (parse_scalar(v, mode) for v in times)
        scan = process.martingale_scan(params, s, t, max(deg, 1), exact=exact)
        return CellOutcome(scan.value, _tolerance(exact), _cell_dict(scan.cell))

    return VerificationCell("martingale", params, {"s": times[0], "t": times[1], "N": max(deg, 1)}, run)


def kernel_moment_cell(params: ProcessParams, times: Sequence[str], mode: ScalarMode) -> VerificationCell:
    def run() -> CellOutcome:
        exact = mode == ScalarMode.EXACT
        s, t = (parse_scalar(v, mode) for v in times)
        scan = process.kernel_moment_scan(params, s, t, exact=exact)
        # single integrals, held to the tighter tolerance
        return CellOutcome(scan.value, 0.0 if exact else settings.SINGLE_INTEGRAL_TOL, _cell_dict(scan.cell))

    return VerificationCell("kernel_moments", params, {"s": times[0], "t": times[1]}, run)


def harness_series_cell(params: ProcessParams, times: Sequence[str], N: int, mode: ScalarMode) -> VerificationCell:
    def run() -> CellOutcome:
        s, t, u = (parse_scalar(v, mode) for v in times)
        lr, qv = process.harness_series_scans(params, s, t, u, N)
        worst = lr if lr.value >= qv.value else qv
        return CellOutcome(
            worst.value,
            _tolerance(mode == ScalarMode.EXACT),
            _cell_dict(dict(worst.cell or {}, identity=worst.check)),
            {"lr": lr.value, "qv": qv.value},
        )

    return VerificationCell("harness_series", params, {"s": times[0], "t": times[1], "u": times[2], "N": N}, run)


def harness_quadrature_cell(params: ProcessParams, times: Sequence[str], M: int, mode: ScalarMode) -> VerificationCell:
    def run() -> CellOutcome:
        s, t, u = (parse_scalar(v, mode) for v in times)
        lr, qv = process.harness_quadrature_scans(params, s, t, u, M)
        worst = lr if lr.value >= qv.value else qv
        return CellOutcome(
            worst.value,
            settings.FLOAT_IDENTITY_TOL,
            _cell_dict(dict(worst.cell or {}, identity=worst.check)),
            {"lr": lr.value, "qv": qv.value},
        )

    return VerificationCell("harness_quadrature", params, {"s": times[0], "t": times[1], "u": times[2], "M": M}, run)


def reversal_cell(params: ProcessParams, times: Sequence[str], deg: int, mode: ScalarMode) -> VerificationCell:
    def run() -> CellOutcome:
        exact = mode == ScalarMode.EXACT
        scan = process.reversal_scan(params, [parse_scalar(v, mode) for v in times], deg, exact=exact)
        return CellOutcome(scan.value, _tolerance(exact), _cell_dict(scan.cell))

    return VerificationCell("reversal", params, {"t1": times[0], "t2": times[1], "deg": deg}, run)


def semigroup_cell(params: ProcessParams, times: Sequence[str], N: int, mode: ScalarMode) -> VerificationCell:
    def run() -> CellOutcome:
        s, t = (parse_scalar(v, mode) for v in times)
        result = freeconv.semigroup_check(params, s, t, N)
        return CellOutcome(result.max_residual, _tolerance(mode == ScalarMode.EXACT), {"s": times[0], "t": times[1]})

    return VerificationCell("semigroup", params, {"s": times[0], "t": times[1], "order": N}, run)


def pair_transform_cell(params: ProcessParams, t: str, N: int, mode: ScalarMode) -> VerificationCell:
    def run() -> CellOutcome:
        r_residual, R_residual = freeconv.pair_transform_residuals(params, parse_scalar(t, mode), N)
        worst = "r" if r_residual >= R_residual else "R"
        return CellOutcome(
            max(r_residual, R_residual),
            _tolerance(mode == ScalarMode.EXACT),
            {"transform": worst},
            {"r": r_residual, "R": R_residual},
        )

    return VerificationCell("pair_transforms", params, {"t": t, "order": N}, run)


# Suite assembly


def _grid_params(config: RunConfig, grid: List[Tuple[str, str]]) -> List[ProcessParams]:
    if config.has_params:
        return [config.params]
    return [ProcessParams.from_values(eta, theta, config.mode) for eta, theta in grid]


def build_cells(config: RunConfig) -> List[VerificationCell]:
    """
    Every cell of the requested suite, with explicit (eta, theta) replacing
    the built-in parameter grids.
    """
    mode, suites = config.mode, {config.suite}
    if config.suite == Suite.ALL:
        suites = {s for s in Suite if s != Suite.ALL}
        params = config.params
        if config.has_params and params.eta != params.theta:
            logger.info(f"Skipping the reversal suite: eta={params.eta} differs from theta={params.theta}")
            suites.discard(Suite.REVERSAL)
        if config.has_params and params.theta != 1:
            logger.info(f"Skipping the semigroup suite: theta={params.theta} is not 1")
            suites.discard(Suite.SEMIGROUP)

    cells: List[VerificationCell] = []
    if Suite.IDENTITIES in suites:
        for params in _grid_params(config, IDENTITY_PARAMS):
            cells += [identity_cell(params, times, IDENTITY_X, config.order, mode) for times in IDENTITY_TIMES]
    if Suite.CHAPMAN in suites:
        for params in _grid_params(config, KERNEL_PARAMS):
            cells += [chapman_cell(params, times, config.deg, mode) for times in KERNEL_TIMES]
    if Suite.MARTINGALE in suites:
        for params in _grid_params(config, KERNEL_PARAMS):
            cells += [martingale_cell(params, (times[0], times[2]), config.deg, mode) for times in KERNEL_TIMES]
            cells += [kernel_moment_cell(params, (times[0], times[2]), mode) for times in KERNEL_TIMES]
    if Suite.HARNESS in suites:
        M = min(settings.HARNESS_QUADRATURE_ORDER, config.order)
        for params in _grid_params(config, HARNESS_PARAMS):
            for times in HARNESS_TIMES:
                cells.append(harness_series_cell(params, times, config.order, mode))
                cells.append(harness_quadrature_cell(params, times, M, mode))
    if Suite.REVERSAL in suites:
        for params in _grid_params(config, REVERSAL_PARAMS):
            cells += [reversal_cell(params, times, REVERSAL_DEG, mode) for times in REVERSAL_TIMES]
    if Suite.SEMIGROUP in suites:
        grid = [(eta, "1") for eta in SEMIGROUP_ETAS]
        for params in _grid_params(config, grid):
            cells += [semigroup_cell(params, times, config.order, mode) for times in SEMIGROUP_TIMES]
            cells += [pair_transform_cell(params, t, config.order, mode) for t in PAIR_TIMES]
    logger.info(f"Suite {config.suite.value} in {mode.value} mode: {len(cells)} cells")
    return cells


class VerificationRunner:
    """Run verification cells in parallel with a bounded worker pool."""

    def __init__(self, max_concurrent: int = 1):
        """
        Initialize the runner.

        Args:
            max_concurrent: Maximum number of cells evaluated at once
        """
        self.max_concurrent = max_concurrent
        self.semaphore = asyncio.Semaphore(max_concurrent)
        self.executor = ThreadPoolExecutor(max_workers=max_concurrent)

    async def run_cells(self, cells: List[VerificationCell]) -> List[VerificationReport]:
        """
        Evaluate all cells; order of the result follows the input.

        Args:
            cells: cells built by build_cells

        Returns:
            One VerificationReport per cell
        """
        logger.info(f"Running {len(cells)} verification cells, max concurrent: {self.max_concurrent}")
        try:
            reports = await asyncio.gather(*(self._run_with_semaphore(cell) for cell in cells))
        finally:
            self.executor.shutdown(wait=True)
        failed = sum(1 for r in reports if not r.passed)
        logger.info(f"Verification complete: {len(reports) - failed} passed, {failed} failed")
        return list(reports)

    async def _run_with_semaphore(self, cell: VerificationCell) -> VerificationReport:
        """Run a single cell under the semaphore; toolkit errors become failed reports."""
        async with self.semaphore:
            loop = asyncio.get_running_loop()
            try:
                outcome = await loop.run_in_executor(self.executor, cell.run)
            except BiPoissonError as e:
                logger.error(f"Check {cell.check} raised at {cell.params_json()} {cell.grid}: {e}")
                return VerificationReport(
                    check=cell.check,
                    params=cell.params_json(),
                    grid=cell.grid,
                    max_residual=None,
                    tolerance=0.0,
                    passed=False,
                    failing_cell=dict(cell.grid),
                    error=str(e),
                )

            passed = outcome.residual <= outcome.tolerance
            if not passed:
                logger.warning(
                    f"Check {cell.check} failed at {cell.params_json()} {cell.grid}: "
                    f"{outcome.residual:.3e} > {outcome.tolerance:.1e}"
                )
            else:
                logger.debug(f"Check {cell.check} passed at {cell.params_json()} {cell.grid}: {outcome.residual:.3e}")
            return VerificationReport(
                check=cell.check,
                params=cell.params_json(),
                grid=cell.grid,
                max_residual=outcome.residual,
                tolerance=outcome.tolerance,
                passed=passed,
                failing_cell=None if passed else outcome.cell,
                details=outcome.details,
            )


def run_suite(config: RunConfig) -> VerificationSummary:
    """
    Build and run the suite named by a `verify` run.

    Args:
        config: validated run configuration

    Returns:
        VerificationSummary with reports in canonical order
    """
    cells = build_cells(config)
    runner = VerificationRunner(max_concurrent=config.parallel)
    reports = asyncio.run(runner.run_cells(cells))
    return VerificationSummary.from_reports(config.suite.value, config.mode.value, reports)
