import json
import math

import pytest

from backend import cli
from backend.models.run_config import RunConfig
from config import settings


def run_json(tmp_path, *argv):
    out = tmp_path / "out.json"
    code = cli.main([*argv, "--out", str(out)])
    return code, json.loads(out.read_text(encoding="utf-8"))


def test_describe_degenerate_law(tmp_path):
    code, document = run_json(tmp_path, "describe", "--eta", "-1", "--theta", "1", "--t", "2", "--mode", "exact")
    assert code == 0
    assert document["kind"] == "marginal"
    assert document["ac_support"] is None
    assert document["atoms"] == [["-2", "1/3"], ["1", "2/3"]]


def test_describe_to_stdout(capsys):
    assert cli.main(["describe", "--t", "1"]) == 0
    document = json.loads(capsys.readouterr().out)
    assert document["ac_support"] == pytest.approx([-2.0, 2.0])
    assert len(document["density_samples"]) == settings.DENSITY_SAMPLES


@pytest.mark.parametrize(
    "argv",
    [
        ["describe"],
        ["describe", "--t", "-1"],
        ["verify", "--suite", "reversal", "--eta", "0.5", "--theta", "0.3"],
        ["convolve", "--s", "1", "--t", "1", "--theta", "2"],
        ["plot"],
        ["describe", "--t", "1", "--mode", "symbolic"],
    ],
)
def test_invalid_input_exits_2(argv):
    assert cli.main(argv) == 2


def test_help_exits_0():
    assert cli.main(["--help"]) == 0


def test_sampling_is_byte_identical(tmp_path):
    argv = ["sample", "--eta", "1/2", "--theta", "1", "--times", "1,2,3", "--n", "4", "--seed", "9"]
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.main([*argv, "--out", str(first)]) == 0
    assert cli.main([*argv, "--out", str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()
    lines = first.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "# seed=9"
    assert lines[1] == "path,time,value"
    assert len(lines) == 2 + 12


def test_support_plot_degenerate(tmp_path):
    code, document = run_json(tmp_path, "support-plot", "--eta", "-1", "--theta", "1")
    assert code == 0
    assert len(document["t_grid"]) == settings.SUPPORT_PLOT_POINTS
    assert document["t_grid"][-1] == pytest.approx(2.0)
    assert all(band is None for band in document["support_bands"])
    curves = {curve["label"]: curve for curve in document["atom_curves"]}
    assert set(curves) == {"-t/theta", "-1/eta"}
    assert curves["-1/eta"]["locations"][0] == pytest.approx(1.0)
    for p, q in zip(curves["-t/theta"]["weights"], curves["-1/eta"]["weights"]):
        assert p + q == pytest.approx(1.0)


def test_support_plot_semicircle_band():
    document = cli.support_plot_document(RunConfig(command="support-plot", t="2"))
    assert document.atom_curves == []
    assert document.support_bands[-1] == pytest.approx([-2 * math.sqrt(2), 2 * math.sqrt(2)])


def test_convolve_exact(tmp_path):
    code, document = run_json(
        tmp_path, "convolve", "--eta", "1/2", "--theta", "1", "--s", "1", "--t", "2", "--mode", "exact", "--order", "6"
    )
    assert code == 0
    assert document["pass"] is True
    assert document["max_residual"] == 0
    assert document["first"] == document["expected_first"]
    assert document["second"] == document["expected_second"]
    assert len(document["first"]) == 7


def test_verify_identities_exact(tmp_path):
    code, document = run_json(
        tmp_path,
        "verify", "--suite", "identities", "--eta", "1/2", "--theta", "1/3", "--mode", "exact", "--order", "6",
    )
    assert code == 0
    assert document["pass"] is True
    assert document["max_residual"] == 0
    assert document["suite"] == "identities"
    assert {report["check"] for report in document["reports"]} == {"identities"}
    assert all(report["failing_cell"] is None for report in document["reports"])


def test_verify_martingale_float(tmp_path):
    code, document = run_json(tmp_path, "verify", "--suite", "martingale", "--eta", "1", "--theta", "1", "--deg", "6")
    assert code == 0
    assert document["mode"] == "float"
    assert document["max_residual"] < 1e-8


def test_verify_failure_exits_1(tmp_path, monkeypatch):
    monkeypatch.setattr(settings, "FLOAT_IDENTITY_TOL", -1.0)
    code, document = run_json(tmp_path, "verify", "--suite", "chapman", "--eta", "0", "--theta", "0", "--deg", "2")
    assert code == 1
    assert document["pass"] is False
    assert document["reports"][0]["failing_cell"] is not None


def test_convolve_failure_exits_1(tmp_path, monkeypatch):
    monkeypatch.setattr(settings, "FLOAT_IDENTITY_TOL", -1.0)
    code, document = run_json(tmp_path, "convolve", "--eta", "1/2", "--theta", "1", "--s", "1", "--t", "2", "--order", "4")
    assert code == 1
    assert document["pass"] is False
    assert document["mode"] == "float"
