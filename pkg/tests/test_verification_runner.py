from collections import Counter

import pytest

from backend.models.errors import InvalidParametersError
from backend.models.run_config import RunConfig
from backend.services import verification_runner as vr
from backend.services.recurrences import ProcessParams
from backend.utils.scalars import ScalarMode
from config import settings


def checks(config: RunConfig) -> Counter:
    return Counter(cell.check for cell in vr.build_cells(config))


def test_identity_grid_covers_every_point_and_time():
    counts = checks(RunConfig(command="verify", suite="identities"))
    assert counts == {"identities": len(vr.IDENTITY_PARAMS) * len(vr.IDENTITY_TIMES)}


def test_explicit_params_replace_the_grid():
    counts = checks(RunConfig(command="verify", eta="1", theta="1"))
    assert counts == {
        "identities": len(vr.IDENTITY_TIMES),
        "chapman": len(vr.KERNEL_TIMES),
        "martingale": len(vr.KERNEL_TIMES),
        "kernel_moments": len(vr.KERNEL_TIMES),
        "harness_series": len(vr.HARNESS_TIMES),
        "harness_quadrature": len(vr.HARNESS_TIMES),
        "reversal": len(vr.REVERSAL_TIMES),
        "semigroup": len(vr.SEMIGROUP_TIMES),
        "pair_transforms": len(vr.PAIR_TIMES),
    }


def test_suite_all_skips_checks_outside_their_range():
    counts = checks(RunConfig(command="verify", eta="1/2", theta="1/3"))
    assert "reversal" not in counts
    assert "semigroup" not in counts
    assert "pair_transforms" not in counts
    assert counts["identities"] == len(vr.IDENTITY_TIMES)


def test_semigroup_grid_has_theta_one():
    cells = vr.build_cells(RunConfig(command="verify", suite="semigroup", mode="exact"))
    assert {cell.params.theta for cell in cells} == {1}
    assert len({cell.params.eta for cell in cells}) == len(vr.SEMIGROUP_ETAS)


def test_cell_params_serialize_exactly():
    cell = vr.identity_cell(ProcessParams.from_values("1/2", "1/3", ScalarMode.EXACT), ("1/2", "1", "2"), "1/3", 4, ScalarMode.EXACT)
    assert cell.params_json() == {"eta": "1/2", "theta": "1/3"}
    assert cell.grid["x"] == "1/3"


def failing_cell() -> vr.VerificationCell:
    def run():
        raise InvalidParametersError("no such point")

    return vr.VerificationCell("demo", ProcessParams(0.0, 0.0), {"t": "1"}, run)


def passing_cell(residual: float) -> vr.VerificationCell:
    def run():
        return vr.CellOutcome(residual, 1e-8, {"n": 2})

    return vr.VerificationCell("demo", ProcessParams(0.0, 0.0), {"t": str(residual)}, run)


@pytest.mark.asyncio
async def test_runner_keeps_input_order_and_reports_errors():
    runner = vr.VerificationRunner(max_concurrent=2)
    reports = await runner.run_cells([passing_cell(0.0), failing_cell(), passing_cell(1.0)])
    assert [r.passed for r in reports] == [True, False, False]
    assert reports[0].failing_cell is None
    assert reports[1].max_residual is None
    assert reports[1].error == "no such point"
    assert reports[1].failing_cell == {"t": "1"}
    assert reports[2].max_residual == 1.0
    assert reports[2].failing_cell == {"n": 2}


def test_run_suite_exact_martingale():
    summary = vr.run_suite(RunConfig(command="verify", suite="martingale", eta="1/2", theta="1", mode="exact", deg=4))
    assert summary.passed
    assert summary.max_residual == 0
    assert len(summary.reports) == 2 * len(vr.KERNEL_TIMES)
    assert all(r.tolerance == 0 for r in summary.reports)


def test_run_suite_reversal_float():
    summary = vr.run_suite(RunConfig(command="verify", suite="reversal", parallel=2))
    assert summary.passed
    assert summary.max_residual < 1e-8
    assert len(summary.reports) == len(vr.REVERSAL_PARAMS) * len(vr.REVERSAL_TIMES)


def test_kernel_moments_use_the_single_integral_tolerance():
    summary = vr.run_suite(RunConfig(command="verify", suite="martingale", eta="2", theta="1/3", deg=2))
    reports = [r for r in summary.reports if r.check == "kernel_moments"]
    assert len(reports) == len(vr.KERNEL_TIMES)
    assert all(r.tolerance == settings.SINGLE_INTEGRAL_TOL for r in reports)
    assert all(r.max_residual <= settings.SINGLE_INTEGRAL_TOL for r in reports)
    martingale = [r for r in summary.reports if r.check == "martingale"]
    assert all(r.tolerance == settings.FLOAT_IDENTITY_TOL for r in martingale)
