"""End-to-end command-line tests: documents, exit codes, determinism."""

import json
import math

import numpy as np
import pytest

from ringsolve.cli import (
    EXIT_DIVERGENCE,
    EXIT_OK,
    EXIT_SINGULAR,
    EXIT_VALIDATION,
    run,
)


@pytest.fixture
def neg_file(tmp_path):
    path = tmp_path / "neg.json"
    path.write_text(json.dumps({"a": [[-4, -1.5], [-2, -1]], "b": [0.45, 0.24]}))
    return str(path)


@pytest.fixture
def mixed8_file(tmp_path):
    a = (-np.ones((8, 8)) + 1.5 * np.eye(8)).tolist()
    b = [0.375] + [0.225] * 7
    path = tmp_path / "m8.json"
    path.write_text(json.dumps({"a": a, "b": b, "symmetric": True}))
    return str(path)


class TestSolveCommand:
    def test_negative_fixture(self, neg_file, tmp_path):
        out = tmp_path / "result.json"
        trace = tmp_path / "trace.csv"
        code = run(
            ["solve", neg_file, "--kvco", "300e6", "--out", str(out), "--trace", str(trace)]
        )
        assert code == EXIT_OK
        doc = json.loads(out.read_text())
        np.testing.assert_allclose(doc["x"], [-0.09, -0.06], atol=1e-3)
        assert doc["converged"] is True
        assert doc["stability"]["fallback_mode"] == "none"
        assert doc["config"]["k_vco"] == 300e6
        assert doc["config"]["mode"] == "structural"
        header = trace.read_text().splitlines()[0]
        assert header == "t_s,x0,x1,residual_inf"

    def test_defaults_resolved_in_config(self, neg_file, tmp_path):
        out = tmp_path / "r.json"
        assert run(["solve", neg_file, "--out", str(out)]) == EXIT_OK
        cfg = json.loads(out.read_text())["config"]
        assert cfg["k_pd"] == pytest.approx(1.0 / math.pi)
        assert cfg["eps"] == 1e-3
        assert cfg["scale"] == "off"

    def test_determinism_byte_identical(self, neg_file, tmp_path):
        out1, out2 = tmp_path / "a.json", tmp_path / "b.json"
        args = ["solve", neg_file, "--memristor", "--write-noise", "0.01", "--seed", "5"]
        assert run(args + ["--out", str(out1)]) == EXIT_OK
        assert run(args + ["--out", str(out2)]) == EXIT_OK
        assert out1.read_bytes() == out2.read_bytes()

    def test_singular_exit_code(self, tmp_path):
        path = tmp_path / "s.json"
        path.write_text(json.dumps({"a": [[1, 1], [1, 1]], "b": [0.1, 0.1]}))
        assert run(["solve", str(path)]) == EXIT_SINGULAR

    def test_range_violation_exit_code(self, tmp_path):
        path = tmp_path / "r.json"
        path.write_text(json.dumps({"a": [[-1]], "b": [0.7]}))
        assert run(["solve", str(path)]) == EXIT_VALIDATION

    def test_bad_flag_exit_code(self, neg_file):
        assert run(["solve", neg_file, "--eps", "-1"]) == EXIT_VALIDATION

    def test_missing_file(self):
        assert run(["solve", "no-such-file.json"]) == EXIT_VALIDATION

    def test_divergence_exit_code(self, tmp_path):
        # a saddle system with too short a horizon reports divergence
        path = tmp_path / "m.json"
        path.write_text(json.dumps({"a": [[-4, 1.5], [-2, 1]], "b": [0.45, 0.24]}))
        out = tmp_path / "r.json"
        code = run(["solve", str(path), "--tmax", "1e-7", "--out", str(out)])
        assert code == EXIT_DIVERGENCE
        doc = json.loads(out.read_text())  # document still written
        assert doc["converged"] is False


class TestPlanCommand:
    def test_plan_document(self, mixed8_file, tmp_path):
        out = tmp_path / "plan.json"
        assert run(["plan", mixed8_file, "--out", str(out)]) == EXIT_OK
        doc = json.loads(out.read_text())
        assert doc["census"]["main_integrators"] == 8
        # this fixture has 8 positive diagonal entries; no negation
        assert doc["negated"] is False
        assert doc["census"]["inverters"] == 8
        assert doc["census"]["total_integrators"] == 16
        assert doc["scheme_counts"] == {
            "before_reuse": 72,
            "after_reuse": 40,
            "mimo_symmetric": 26,
        }
        assert len(doc["paths"]) == 64

    def test_single_path_bandwidth_both_units(self, tmp_path):
        path = tmp_path / "one.json"
        path.write_text(json.dumps({"a": [[-4.0]], "b": [0.3]}))
        out = tmp_path / "plan.json"
        assert run(["plan", str(path), "--kvco", "300e6", "--out", str(out)]) == EXIT_OK
        bw = json.loads(out.read_text())["single_path_bandwidth"]["0"]
        # rho = Rf/Rin = 0.25, so BW = g / 1.25
        g = 300e6 / math.pi
        assert bw["rad_per_s"] == pytest.approx(g / 1.25, rel=1e-12)
        assert bw["hz"] == pytest.approx(g / 1.25 / (2 * math.pi), rel=1e-12)

    def test_multipath_rows_have_no_bandwidth(self, neg_file, tmp_path):
        out = tmp_path / "plan.json"
        assert run(["plan", neg_file, "--out", str(out)]) == EXIT_OK
        assert json.loads(out.read_text())["single_path_bandwidth"] == {}

    def test_quantized_plan(self, neg_file, tmp_path):
        out = tmp_path / "plan.json"
        code = run(
            ["plan", neg_file, "--quantize-bits", "8", "--r-unit", "16000", "--out", str(out)]
        )
        assert code == EXIT_OK
        doc = json.loads(out.read_text())
        codes = [p["code"] for p in doc["paths"]]
        assert all(c is not None for c in codes)


class TestScaleCommand:
    def test_scale_document(self, neg_file, tmp_path):
        out = tmp_path / "scale.json"
        assert run(["scale", neg_file, "--out", str(out)]) == EXIT_OK
        doc = json.loads(out.read_text())
        assert doc["factor_scale"] == pytest.approx(6.0)
        assert doc["kappa_inf"] == pytest.approx(33.0)

    def test_identity_factor_one(self, tmp_path):
        path = tmp_path / "i.json"
        path.write_text(json.dumps({"a": [[1, 0], [0, 1]], "b": [0.5, -0.5]}))
        out = tmp_path / "scale.json"
        assert run(["scale", str(path), "--out", str(out)]) == EXIT_OK
        assert json.loads(out.read_text())["factor_scale"] == 1.0

    def test_estimate_policy(self, neg_file, tmp_path):
        out = tmp_path / "scale.json"
        code = run(["scale", neg_file, "--policy", "estimate", "--scale-c", "1e3", "--out", str(out)])
        assert code == EXIT_OK
        assert json.loads(out.read_text())["factor_scale"] == pytest.approx(1e3 / 5.5)


class TestSfdrCommand:
    def test_report_and_spectrum(self, tmp_path):
        out = tmp_path / "sfdr.json"
        spectrum = tmp_path / "spectrum.csv"
        code = run(["sfdr", "--m-phases", "32", "--out", str(out), "--spectrum", str(spectrum)])
        assert code == EXIT_OK
        doc = json.loads(out.read_text())
        assert doc["sfdr_db"] > 0
        assert doc["config"]["m_phases"] == 32
        assert spectrum.read_text().splitlines()[0] == "freq_hz,mag_db"

    def test_bad_samples(self):
        assert run(["sfdr", "--samples", "1000"]) == EXIT_VALIDATION


class TestMetricsCommand:
    def test_table_row_from_dimension(self, tmp_path):
        out = tmp_path / "m.json"
        code = run(["metrics", "--n", "8", "--time-us", "10", "--out", str(out)])
        assert code == EXIT_OK
        doc = json.loads(out.read_text())
        assert doc["table_row"] == "this-work,8x8,10,34.1,5.7,6,0.06"
        assert doc["integrator_count"] == 40
        assert doc["census_source"] == "after-reuse-bound"

    def test_census_from_problem(self, neg_file, tmp_path):
        out = tmp_path / "m.json"
        code = run(["metrics", "--input", neg_file, "--time-us", "0.4", "--out", str(out)])
        assert code == EXIT_OK
        doc = json.loads(out.read_text())
        assert doc["integrator_count"] == 2
        assert doc["power_mw"] == pytest.approx(0.3)

    def test_level_shifter_cost(self, tmp_path):
        out = tmp_path / "m.json"
        code = run(
            ["metrics", "--n", "8", "--time-us", "10", "--phase-method", "johnson-16", "--out", str(out)]
        )
        assert code == EXIT_OK
        assert json.loads(out.read_text())["level_shifter_relative_cost"] == 1


class TestSweepCommand:
    def test_summary_rows_in_input_order(self, neg_file, tmp_path):
        out = tmp_path / "sweep.csv"
        code = run(["sweep", neg_file, "--kvco-list", "300e6,100e6,600e6", "--out", str(out)])
        assert code == EXIT_OK
        lines = out.read_text().splitlines()
        assert lines[0].startswith("k_vco_hz,converged,fallback,t_converge_s")
        assert [row.split(",")[0] for row in lines[1:]] == ["300000000", "100000000", "600000000"]
        t_vals = [float(row.split(",")[3]) for row in lines[1:]]
        assert t_vals[1] > t_vals[0] > t_vals[2]  # slower VCO converges later

    def test_sweep_deterministic(self, neg_file, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run(["sweep", neg_file, "--kvco-list", "1e8,3e8", "--out", str(a)])
        run(["sweep", neg_file, "--kvco-list", "1e8,3e8", "--out", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_bad_list(self, neg_file):
        assert run(["sweep", neg_file, "--kvco-list", "abc"]) == EXIT_VALIDATION
