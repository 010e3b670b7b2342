from __future__ import annotations

import json

import numpy as np
import pytest

from zospec.asymptotics import DirectionFunction, closed_form_coefficient
from zospec.harness.cli import main
from zospec.harness.config import ConfigError, Expression, direction_function, parse_config
from zospec.harness.experiment import run_experiment, run_level
from zospec.harness.models import (
    ModelError,
    build_hydrogen_model,
    build_scalar_model,
    build_schrodinger_model,
    build_vector_model,
)
from zospec.quantize import read_operator
from zospec.spectra import CountingFunction, eigenvalues
from zospec.symbolcore import essential_spectrum

SCALAR_INI = """
[model]
kind = scalar_psdo
d = 1
g = 1
h = 1 + 0*w1

[grid]
L = 2
n = 64, 128
"""


# models -----------------------------------------------------------------------------


def test_scalar_model_expected_coefficients():
    m1 = build_scalar_model(1)
    one = DirectionFunction.constant(1, np.eye(1))
    assert m1.expected.C == pytest.approx(closed_form_coefficient(one, DirectionFunction.constant(1, 1.0), 1).C)
    assert m1.theta_expected == 0.5
    assert build_scalar_model(2).theta_expected == 1.0
    assert build_scalar_model(1, h=2.0).expected.C == pytest.approx(2 * m1.expected.C)


def test_scalar_model_rejects_bad_inputs():
    with pytest.raises(ModelError):
        build_scalar_model(1, h=0.0)
    with pytest.raises(ModelError):
        build_scalar_model(3)


def test_vector_block_model_reduces_exactly():
    L, n = 2.0, 128
    sm = build_scalar_model(1)
    vm = build_vector_model(1, projector="block")
    up = sm.counting_function(L, n)
    down = vm.counting_function(L, n)
    ts = np.logspace(-3, -0.5, 20)
    assert np.array_equal(up.count(ts), down.count(ts))


def test_vector_np_plus_model_assembles():
    vm = build_vector_model(2, projector="np_plus")
    A = vm.operator(1.0, 8).matrix
    np.testing.assert_allclose(A, A.conj().T)
    ang = np.linspace(0, 2 * np.pi, 17)
    iv = essential_spectrum(vm.symbol, np.zeros((1, 2)), np.c_[np.cos(ang), np.sin(ang)])
    assert len(iv) == 2 and iv[0][1] < iv[1][0]


def test_vector_model_errors():
    with pytest.raises(ModelError):
        build_vector_model(1, projector="np_plus")
    with pytest.raises(ModelError):
        build_vector_model(1, level=0.9)
    with pytest.raises(ModelError):
        build_vector_model(1, projector="other")


def test_schrodinger_model_prediction():
    m = build_schrodinger_model(1)
    assert m.expected.C == pytest.approx(1.0)
    assert m.side == "below" and m.reference == 0.0


# experiments -----------------------------------------------------------------------


def test_experiment_needs_two_levels():
    with pytest.raises(ValueError):
        run_experiment(build_scalar_model(1), [(2.0, 64)])


def test_hydrogen_experiment_ratio():
    rep = run_experiment(build_hydrogen_model())
    for lv in rep.levels:
        assert 0.9 <= lv.C_ratio <= 1.1
        assert abs(lv.fit.theta - 1.5) < 0.1
    assert "runtime" not in rep.to_json()


def test_flipped_model_counts_match():
    m = build_scalar_model(1)
    op = m.operator(2.0, 128)
    ts = np.logspace(-3, -0.5, 15)
    up = CountingFunction(eigenvalues(op), 1.0, "above").count(ts)
    down = CountingFunction(eigenvalues(op.flipped(1.0)), 0.0, "below").count(ts)
    assert np.array_equal(up, down)


def test_schrodinger_level_uses_sturm_counts():
    m = build_schrodinger_model(1)
    lv = run_level(m, 500.0, 20_000)
    assert lv.fit is not None and 0.4 < lv.fit.theta < 0.6
    assert lv.samples.flagged[0] and not lv.samples.flagged[-1]


def test_level_with_no_counts_is_reported():
    m = build_schrodinger_model(1, potential_scale=0.0)
    lv = run_level(m, 50.0, 1000)
    assert lv.fit is None and lv.note


# config --------------------------------------------------------------------------------


def test_expression_evaluation():
    e = Expression("1 + 0.2*cos(2*atan2(w2, w1))", ("w1", "w2"))
    np.testing.assert_allclose(e(w1=np.array([1.0]), w2=np.array([0.0])), [1.2])


@pytest.mark.parametrize("text", ["__import__('os')", "w1.real", "open('x')", "lambda: 1", "'a'"])
def test_expression_rejects_unsafe(text):
    with pytest.raises(ConfigError):
        Expression(text, ("w1",))


def test_direction_function_matrix_expression():
    f = direction_function("[[1 + w1**2, 0], [0, 1]]", 2, True)
    v = f(np.array([[1.0, 0.0], [0.0, 1.0]]))
    np.testing.assert_allclose(v[:, 0, 0], [2.0, 1.0])
    with pytest.raises(ConfigError):
        direction_function("[[1, 0], [0, 1]]", 2, False)(np.array([[1.0, 0.0]]))


def test_parse_config():
    cfg = parse_config(SCALAR_INI)
    assert cfg.ladder == ((2.0, 64), (2.0, 128))
    assert cfg.model.kind == "scalar_psdo" and cfg.model.expected.C == pytest.approx(1.0)


@pytest.mark.parametrize("text", [
    "[grid]\nL = 1\n",
    "[model]\nkind = nonsense\n",
    "[model]\nkind = scalar_psdo\nd = 1\n[grid]\nL = 1, 2, 3\nn = 64, 128\n",
    "[model]\nkind = scalar_psdo\nd = 1\n[fit]\nwindow = 0.1\n",
    "not an ini file",
])
def test_parse_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_parse_config_kappa_section():
    cfg = parse_config("[model]\nkind = hydrogen\n[kappa]\nexpr = 1/6 - 0.02*x1**2 - 0.03*x2**2\n")
    assert cfg.kappa is not None
    assert cfg.kappa(np.zeros((1, 2)))[0] == pytest.approx(1 / 6)


# CLI ---------------------------------------------------------------------------------------


def run_cli(capsys, *args):
    code = main(list(args))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_cli_coeff_closed(capsys):
    code, out, _ = run_cli(capsys, "coeff", "--method", "closed", "--d", "3")
    assert code == 0
    assert json.loads(out)["C"] == pytest.approx(1 / 24, rel=1e-6)


def test_cli_coeff_mc(capsys):
    code, out, _ = run_cli(capsys, "coeff", "--method", "mc", "--d", "1", "--samples", "200000", "--seed", "1")
    rep = json.loads(out)
    assert code == 0 and rep["method"] == "monte_carlo"
    assert abs(rep["C"] - 1.0) <= 3 * rep["stderr"]


def test_cli_np(capsys):
    code, out, _ = run_cli(capsys, "np", "--lambda", "1", "--mu", "1")
    assert code == 0 and json.loads(out)["kappa"] == pytest.approx(1 / 6)
    code, _, err = run_cli(capsys, "np", "--lambda", "1")
    assert code == 2 and err


def test_cli_np_field(capsys, tmp_path):
    p = tmp_path / "k.ini"
    p.write_text("[model]\nkind = hydrogen\n[kappa]\nexpr = 1/6 - 0.02*x1**2 - 0.03*x2**2\n")
    code, out, _ = run_cli(capsys, "np", "--field", str(p))
    assert code == 0 and json.loads(out)["theta"] == 1.0


def test_cli_spectrum_fit_export(capsys, tmp_path):
    ini = tmp_path / "m.ini"
    ini.write_text(SCALAR_INI)
    csv_path = tmp_path / "s.csv"
    code, _, err = run_cli(capsys, "spectrum", "--model", str(ini), "--out", str(csv_path))
    assert code == 0 and json.loads(err)["n"] == 128
    code, out, _ = run_cli(capsys, "fit", "--samples", str(csv_path), "--window", "0.01,0.1")
    assert code == 0 and json.loads(out)["point_count"] >= 5
    code, _, _ = run_cli(capsys, "fit", "--samples", str(csv_path))
    assert code == 2
    bin_path = tmp_path / "op.bin"
    code, out, _ = run_cli(capsys, "export", "--model", str(ini), "--n", "64", "--out", str(bin_path))
    assert code == 0 and read_operator(bin_path).size == 64


def test_cli_usage_errors(capsys, tmp_path):
    code, _, err = run_cli(capsys, "spectrum", "--model", str(tmp_path / "missing.ini"))
    assert code == 2 and "not found" in err
    code, _, _ = run_cli(capsys, "verify", "--override", "c1.reference_C")
    assert code == 2
    with pytest.raises(SystemExit) as exc:
        main(["coeff", "--method", "guess"])
    assert exc.value.code == 2


def test_cli_verify_single(capsys, tmp_path):
    out_json = tmp_path / "v.json"
    code, out, _ = run_cli(capsys, "verify", "--only", "8", "--json", str(out_json))
    assert code == 0 and "1/1 criteria passed" in out
    doc = json.loads(out_json.read_text())
    assert doc["all_passed"] and "runtime" not in out_json.read_text()
