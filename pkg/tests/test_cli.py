import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import pytest

from helpers import reports_match
from offdiag import cli

GOLDEN = Path(__file__).parent / "golden"
BUNDLED = {p.stem: p for p in cli.bundled_scenarios()}


def run(*args, cwd=None):
    return subprocess.run([sys.executable, "-m", "offdiag.cli", *args], capture_output=True, text=True, cwd=cwd)


def write(tmp_path, data, name="case.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def scenario(name):
    return json.loads(BUNDLED[name].read_text())


class TestScenarioValidation:
    def test_unknown_field(self):
        with pytest.raises(cli.ScenarioError) as info:
            cli.scenario_from_dict({**scenario("kerr_vacuum"), "bogus": 1})
        assert info.value.path == "$.bogus"

    def test_missing_lambda_names_the_field(self):
        data = scenario("rotoid_coframe")
        del data["lambda"]
        with pytest.raises(cli.ScenarioError) as info:
            cli.scenario_from_dict(data)
        assert info.value.path == "$.lambda"

    @pytest.mark.parametrize(
        "patch,path",
        [
            ({"family": "wormhole"}, "$.family"),
            ({"checks": ["cky"]}, "$.checks"),
            ({"grid": {"x1": {"min": 0, "max": 1, "count": 1}}}, "$.grid.x1"),
            ({"tolerances": {"einstein": -1}}, "$.tolerances.einstein"),
        ],
    )
    def test_invalid_values(self, patch, path):
        data = {**scenario("generated_lambda"), **patch}
        with pytest.raises(cli.ScenarioError) as info:
            cli.scenario_from_dict(data)
        assert info.value.path.startswith(path)

    def test_expression_error_has_a_position(self):
        data = scenario("generated_lambda")
        data["expressions"]["phi"] = "0.5 + (v"
        with pytest.raises(cli.ScenarioError) as info:
            cli.scenario_from_dict(data)
        assert info.value.path == "$.expressions.phi"
        assert "column" in str(info.value)

    def test_round_trip(self):
        sc = cli.load_scenario(BUNDLED["soliton_mass"])
        again = cli.scenario_from_dict(sc.to_dict(), sc.name)
        assert again.to_dict() == sc.to_dict()


class TestExitCodes:
    def test_pass_is_zero(self):
        res = run("verify", "kerr_vacuum")
        assert res.returncode == 0, res.stderr
        assert all(c["pass"] for c in json.loads(res.stdout)["checks"])

    def test_zero_tolerance_fails(self, tmp_path):
        data = scenario("kerr_vacuum")
        data["tolerances"] = {"killing": 0.0}
        data["checks"] = ["killing"]
        data["grid"]["theta"]["count"] = 2
        res = run("verify", write(tmp_path, data))
        assert res.returncode == 1
        assert json.loads(res.stdout)["checks"][0]["pass"] is False

    def test_missing_lambda(self, tmp_path):
        data = scenario("rotoid_coframe")
        del data["lambda"]
        res = run("verify", write(tmp_path, data))
        assert res.returncode == 2
        assert "$.lambda" in res.stderr

    def test_unknown_field(self, tmp_path):
        res = run("verify", write(tmp_path, {**scenario("kerr_vacuum"), "bogus": 1}))
        assert res.returncode == 2
        assert "$.bogus" in res.stderr

    def test_horizon_grid(self, tmp_path):
        data = scenario("kerr_vacuum")
        data["grid"]["r"] = {"min": 1.0, "max": 1.5, "count": 2}
        res = run("verify", write(tmp_path, data))
        assert res.returncode == 2
        assert "$.grid.r" in res.stderr

    def test_internal_error_is_three(self, monkeypatch, capsys):
        def boom(*args, **kwargs):
            raise RuntimeError("unexpected")

        monkeypatch.setattr(cli, "run_scenario", boom)
        assert cli.main(["verify", "kerr_vacuum"]) == 3
        assert "unexpected" in capsys.readouterr().err

    def test_errored_points_fail(self):
        sc = cli.load_scenario(BUNDLED["rotoid_coframe"])
        sc = cli.scenario_from_dict({**sc.to_dict(), "checks": ["sk"], "params": {**sc.params, "eps": 0.0}}, "eps0")
        rec = cli.run_scenario(sc)["checks"][0]
        assert rec["pass"] is False
        assert "error" in rec


class TestSweep:
    def test_empty_sweep(self):
        res = run("sweep", "generated_lambda", "--param", "lambda", "--values", "")
        assert res.returncode == 0
        assert json.loads(res.stdout) == []

    def test_lambda_sweep_passes(self):
        res = run("sweep", "generated_lambda", "--param", "lambda", "--values", "0.1,0.2")
        assert res.returncode == 0, res.stderr
        reports = json.loads(res.stdout)
        assert [r["param"]["value"] for r in reports] == [0.1, 0.2]
        assert all(c["pass"] for r in reports for c in r["checks"])

    def test_rotoid_sk_residual_against_eps(self):
        # eps = 0 is degenerate (h4* = 0); between the remaining values the
        # residual falls as eps grows, so it is not monotone increasing in eps
        sc = cli.load_scenario(BUNDLED["rotoid_coframe"])
        sc = cli.scenario_from_dict({**sc.to_dict(), "checks": ["sk"]}, sc.name)
        reports = cli.sweep(sc, "eps", [0.0, 0.01, 0.05], 42, 1)
        res = [r["checks"][0]["max_residual"] for r in reports]
        assert res[0] is None
        assert res[1] > res[2] > 0


class TestReports:
    def test_csv_has_one_row_per_check(self):
        res = run("report", "separable_lc", "--format", "csv")
        assert res.returncode == 0
        rows = list(csv.DictReader(io.StringIO(res.stdout)))
        assert [r["name"] for r in rows] == scenario("separable_lc")["checks"]

    def test_json_schema(self):
        rep = json.loads(run("report", "kerr_vacuum").stdout)
        assert set(rep) == {"checks", "scenario", "seed", "version", "wall_time_s"}
        for c in rep["checks"]:
            assert set(c) == {"argmax", "max_residual", "mean_residual", "name", "pass", "points", "tolerance"}
            assert len(c["argmax"]) == 4

    def test_output_file(self, tmp_path):
        out = tmp_path / "r.json"
        assert run("verify", "kerr_vacuum", "-o", str(out)).returncode == 0
        assert json.loads(out.read_text())["scenario"] == "kerr_vacuum"

    def test_list(self):
        assert run("list").stdout.split() == sorted(BUNDLED)


@pytest.mark.parametrize("name", sorted(BUNDLED))
class TestBundled:
    def test_matches_golden(self, name):
        got = cli.run_scenario(cli.load_scenario(BUNDLED[name]))
        want = json.loads((GOLDEN / f"{name}.json").read_text())
        assert reports_match(got, want) == []
        assert cli.all_pass([got])

    def test_byte_identical_with_jobs(self, name):
        a = run("verify", name)
        b = run("--jobs", "2", "verify", name)
        assert a.returncode == 0
        assert a.stdout == b.stdout
