import json
import math

import pytest
from click.testing import CliRunner

from phi4lab.cli import main


REF_ARGS = ["--gamma", str(math.sqrt(2)), "--box", "0.25", "--mass", "4",
            "--cutoff", "2"]


@pytest.fixture
def runner():
    return CliRunner()


def run_ok(runner, args):
    result = runner.invoke(main, args)
    assert result.exit_code == 0, result.output
    return result


class TestPlumbing:
    def test_unknown_subcommand_is_usage_error(self, runner):
        assert runner.invoke(main, ["bogus"]).exit_code == 2

    def test_unknown_flag_is_usage_error(self, runner):
        assert runner.invoke(main, ["propagator", "--frobnicate"]).exit_code == 2

    def test_bad_geometry_exits_2(self, runner, tmp_path):
        result = runner.invoke(main, ["propagator", "--box", "0.7",
                                      "--out", str(tmp_path)])
        assert result.exit_code == 2

    def test_manifest_written_with_hash_and_versions(self, runner, tmp_path):
        run_ok(runner, ["propagator", "--out", str(tmp_path)])
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["command"] == "propagator"
        assert len(manifest["spec"]["hash"]) == 16
        assert "numpy" in manifest["versions"]

    def test_csv_format(self, runner, tmp_path):
        run_ok(runner, ["propagator", "--format", "csv", "--out", str(tmp_path)])
        assert (tmp_path / "kernel.csv").exists()


class TestSubcommands:
    def test_propagator_check_passes(self, runner, tmp_path):
        run_ok(runner, ["propagator", "--cutoff", "3", "--check",
                        "--out", str(tmp_path)])

    def test_sample_is_reproducible(self, runner, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        run_ok(runner, ["sample", "--seed", "5", "--check", "--out", str(a)])
        run_ok(runner, ["sample", "--seed", "5", "--out", str(b)])
        assert (a / "layers.json").read_text() == (b / "layers.json").read_text()

    def test_graphs_check(self, runner, tmp_path):
        run_ok(runner, ["graphs", *REF_ARGS, "--order", "2", "--check",
                        "--out", str(tmp_path)])
        cts = json.loads((tmp_path / "counterterms.json").read_text())
        assert cts["mu_poly"][1] < 0

    def test_powercount_d3_catalog_has_chain(self, runner, tmp_path):
        result = run_ok(runner, ["powercount", "--dim", "3", "--check",
                                 "--out", str(tmp_path)])
        catalog = json.loads((tmp_path / "catalog.json").read_text())
        chain = [e for e in catalog if e["name"] == "chain"][0]
        assert chain["rho"] == 0.0 and chain["rho_bar"] == 0.5
        assert "chain" in result.output

    def test_rgflow_check_and_dump(self, runner, tmp_path):
        run_ok(runner, ["rgflow", *REF_ARGS, "--order", "2", "--lambda", "0.05",
                        "--check", "--out", str(tmp_path)])
        flow = json.loads((tmp_path / "flow.json").read_text())
        scales = [entry["scale"] for entry in flow]
        assert scales == [2, 1, 0]

    def test_rgflow_infeasible_exits_3(self, runner, tmp_path):
        result = runner.invoke(main, ["rgflow", "--cutoff", "3", "--order", "2",
                                      "--out", str(tmp_path)])
        assert result.exit_code == 3

    def test_stability_check(self, runner, tmp_path):
        run_ok(runner, ["stability", *REF_ARGS, "--lambda", "0.05", "--check",
                        "--out", str(tmp_path)])
        payload = json.loads((tmp_path / "stability.json").read_text())
        assert payload["inside"] is True

    def test_stability_gaussian_control(self, runner, tmp_path):
        result = run_ok(runner, ["stability", *REF_ARGS, "--lambda", "0",
                                 "--check", "--out", str(tmp_path)])
        assert "inside True" in result.output
