import csv
import json
import subprocess
import sys

import pytest

from qlyap import cli
from qlyap.errors import NumericalError


def write_doc(path, **over):
    doc = {"schema_version": 1, "name": "short_abb1", "system": "two_level", "target": 1,
           "controller": {"family": "abb1", "strengths": [0.2], "gamma": [11]},
           "sim": {"dt": 0.01, "horizon": 5.0},
           "perturbation": {"epsilons": [0.0, 0.01], "seeds": 3, "base_seed": 0},
           "output": {"csv": "short.csv", "svg": False}}
    doc.update(over)
    path.write_text(json.dumps(doc))
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def scen(tmp_path):
    return write_doc(tmp_path / "s.json")


class TestSimulate:
    def test_writes_csv_and_summary(self, tmp_path, scen, capsys):
        out = tmp_path / "out"
        assert cli.main(["simulate", "--scenario", scen, "--out", str(out)]) == 0
        rows = read_csv(out / "short.csv")
        assert list(rows[0])[:3] == ["t", "fidelity", "V"]
        assert float(rows[-1]["t"]) == pytest.approx(5.0)
        text = capsys.readouterr().out
        assert "time to fidelity 0.95" in text and "chattering" in text

    def test_deterministic(self, tmp_path, scen):
        for d in ("a", "b"):
            assert cli.main(["simulate", "--scenario", scen, "--out", str(tmp_path / d)]) == 0
        assert (tmp_path / "a/short.csv").read_bytes() == (tmp_path / "b/short.csv").read_bytes()

    def test_svg(self, tmp_path, scen):
        out = tmp_path / "out"
        assert cli.main(["simulate", "--scenario", scen, "--out", str(out), "--svg"]) == 0
        for kind in ("fidelity", "V", "controls"):
            text = (out / f"short_abb1_{kind}.svg").read_text()
            assert text.startswith("<svg") and "polyline" in text

    def test_malformed_scenario(self, tmp_path, capsys):
        bad = write_doc(tmp_path / "bad.json", controller={"family": "abb1", "strengths": [0.2]})
        assert cli.main(["simulate", "--scenario", bad, "--out", str(tmp_path)]) == 2
        assert "controller" in capsys.readouterr().err
        assert not (tmp_path / "short.csv").exists()

    def test_missing_scenario(self, tmp_path):
        assert cli.main(["simulate", "--scenario", str(tmp_path / "nope.json")]) == 2

    def test_numerical_failure(self, tmp_path, scen, monkeypatch):
        def boom(doc):
            raise NumericalError("spectrum drifted")

        monkeypatch.setattr(cli, "_run_doc", boom)
        assert cli.main(["simulate", "--scenario", scen, "--out", str(tmp_path / "o")]) == 3
        assert not (tmp_path / "o" / "short.csv").exists()

    def test_bang_bang_chattering(self, tmp_path, capsys):
        doc = write_doc(tmp_path / "bb.json", name="bb",
                        controller={"family": "bang_bang", "strengths": [0.2]},
                        sim={"dt": 0.001, "horizon": 8.0})
        assert cli.main(["simulate", "--scenario", doc, "--out", str(tmp_path)]) == 0
        line = [ln for ln in capsys.readouterr().out.splitlines() if "chattering:" in ln][0]
        assert float(line.split(":")[1]) == pytest.approx(5.5, abs=0.5)


class TestCompare:
    def test_merged_csv_and_ranking(self, tmp_path, scen):
        std = write_doc(tmp_path / "std.json", name="std",
                        controller={"family": "standard", "gains": [0.4]})
        out = tmp_path / "out"
        assert cli.main(["compare", "--scenario", scen, "--scenario", std, "--out", str(out)]) == 0
        laws = {r["law"] for r in read_csv(out / "compare.csv")}
        assert laws == {"short_abb1", "std"}
        rank = read_csv(out / "ranking.csv")
        assert {r["threshold"] for r in rank} == {"0.95", "0.99"}

    def test_single_scenario(self, tmp_path, scen):
        assert cli.main(["compare", "--scenario", scen, "--out", str(tmp_path)]) == 0
        assert [r["rank"] for r in read_csv(tmp_path / "ranking.csv")] == ["1", "1"]

    def test_mismatched_systems(self, tmp_path, scen):
        other = write_doc(tmp_path / "xi.json", name="xi", system="xi_three_level", target=2)
        assert cli.main(["compare", "--scenario", scen, "--scenario", other,
                         "--out", str(tmp_path)]) == 2

    def test_workers_do_not_change_output(self, tmp_path, scen, monkeypatch):
        std = write_doc(tmp_path / "std.json", name="std",
                        controller={"family": "standard", "gains": [0.4]})
        args = ["compare", "--scenario", scen, "--scenario", std]
        assert cli.main(args + ["--out", str(tmp_path / "one")]) == 0
        monkeypatch.setenv("QLYAP_WORKERS", "2")
        assert cli.main(args + ["--out", str(tmp_path / "two"), "--workers", "1"]) == 0
        assert (tmp_path / "one/compare.csv").read_bytes() == \
            (tmp_path / "two/compare.csv").read_bytes()


class TestSweep:
    def test_rows(self, tmp_path, scen):
        assert cli.main(["sweep", "--scenario", scen, "--param", "gamma_1", "--values", "2,11",
                         "--out", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "sweep.csv")
        assert [float(r["value"]) for r in rows] == [2.0, 11.0]
        assert all(r["parameter"] == "gamma_1" for r in rows)

    def test_unknown_parameter(self, tmp_path, scen):
        assert cli.main(["sweep", "--scenario", scen, "--param", "alpha", "--values", "1",
                         "--out", str(tmp_path)]) == 2

    def test_empty_values(self, tmp_path, scen):
        assert cli.main(["sweep", "--scenario", scen, "--param", "gamma", "--values", "",
                         "--out", str(tmp_path)]) == 2

    def test_no_partial_file(self, tmp_path, scen, monkeypatch):
        calls = []

        def flaky(doc):
            calls.append(doc)
            if len(calls) > 1:
                raise NumericalError("non-finite state")
            return orig(doc)

        orig = cli._run_doc
        monkeypatch.setattr(cli, "_run_doc", flaky)
        assert cli.main(["sweep", "--scenario", scen, "--param", "gamma", "--values", "2,11",
                         "--out", str(tmp_path / "o")]) == 3
        assert list((tmp_path / "o").iterdir()) == []


class TestRobustness:
    def test_csv_schema_and_zero_epsilon(self, tmp_path, scen):
        assert cli.main(["robustness", "--scenario", scen, "--out", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "robustness.csv")
        assert list(rows[0]) == ["seed", "epsilon", "t", "distance", "bound", "margin"]
        zero = [r for r in rows if float(r["epsilon"]) == 0]
        assert zero and max(float(r["distance"]) for r in zero) <= 1e-10
        assert min(float(r["margin"]) for r in rows) >= -1e-9
        summary = read_csv(tmp_path / "robustness_summary.csv")
        assert len(summary) == 6 and {r["status"] for r in summary} == {"ok"}

    def test_deterministic(self, tmp_path, scen):
        for d in ("a", "b"):
            assert cli.main(["robustness", "--scenario", scen, "--epsilons", "0.05", "--seeds", "2",
                             "--seed", "4", "--out", str(tmp_path / d)]) == 0
        assert (tmp_path / "a/robustness.csv").read_bytes() == \
            (tmp_path / "b/robustness.csv").read_bytes()

    def test_budget_clause(self, tmp_path, capsys):
        doc = write_doc(tmp_path / "b.json", sim={"dt": 0.01, "horizon": 30.0},
                        perturbation={"epsilons": [0.01], "seeds": 2, "xi": 0.1})
        assert cli.main(["robustness", "--scenario", doc, "--out", str(tmp_path)]) == 0
        assert "<= xi=0.1: yes" in capsys.readouterr().out

    def test_violation_exit_code(self, tmp_path, scen, monkeypatch):
        real = cli.check_bound

        def strict(t, d, eps):
            rep = real(t, d, eps)
            return type(rep)(rep.epsilon, -1.0, rep.t_min_margin, False, rep.margin)

        monkeypatch.setattr(cli, "check_bound", strict)
        assert cli.main(["robustness", "--scenario", scen, "--out", str(tmp_path)]) == 1

    def test_bad_epsilons(self, tmp_path, scen):
        assert cli.main(["robustness", "--scenario", scen, "--epsilons", "-1",
                         "--out", str(tmp_path)]) == 2


class TestAnalyze:
    def test_membership_and_oscillation(self, tmp_path, capsys):
        doc = write_doc(tmp_path / "bb.json", name="bb",
                        controller={"family": "bang_bang", "strengths": [0.2]},
                        sim={"dt": 0.001, "horizon": 7.0}, output={"csv": "bb.csv"})
        assert cli.main(["simulate", "--scenario", doc, "--out", str(tmp_path)]) == 0
        capsys.readouterr()
        assert cli.main(["analyze", "--scenario", doc, "--trajectory", str(tmp_path / "bb.csv"),
                         "--out", str(tmp_path)]) == 0
        text = capsys.readouterr().out
        assert "target state: in_set=True" in text
        first = float(text.split("first met at zero point t=")[1].split()[0])
        assert first == pytest.approx(5.5, abs=0.5)
        assert read_csv(tmp_path / "oscillation.csv")

    def test_schema_mismatch(self, tmp_path, scen):
        bad = tmp_path / "x.csv"
        bad.write_text("a,b\n1,2\n")
        assert cli.main(["analyze", "--scenario", scen, "--trajectory", str(bad),
                         "--out", str(tmp_path)]) == 2

    def test_grid_mismatch(self, tmp_path, scen):
        assert cli.main(["simulate", "--scenario", scen, "--out", str(tmp_path)]) == 0
        other = write_doc(tmp_path / "o.json", sim={"dt": 0.02, "horizon": 5.0})
        assert cli.main(["analyze", "--scenario", other, "--trajectory",
                         str(tmp_path / "short.csv"), "--out", str(tmp_path)]) == 2


class TestMisc:
    def test_worker_env_overrides(self, monkeypatch):
        monkeypatch.setenv("QLYAP_WORKERS", "3")
        assert cli.worker_count(1) == 3
        monkeypatch.setenv("QLYAP_WORKERS", "x")
        with pytest.raises(cli.InputError):
            cli.worker_count(1)
        monkeypatch.delenv("QLYAP_WORKERS")
        assert cli.worker_count(None) == 1

    def test_unknown_command(self):
        assert cli.main(["frobnicate"]) == 2

    def test_list(self, capsys):
        assert cli.main(["list"]) == 0
        assert "two_level_abb1" in capsys.readouterr().out

    def test_module_entry_point(self, tmp_path):
        res = subprocess.run([sys.executable, "-m", "qlyap.cli", "list"],
                             capture_output=True, text=True, check=False)
        assert res.returncode == 0 and "xi_abb1" in res.stdout
