"""End-to-end tests for the command-line interface.

Each test drives ``capmeter.cli.main`` directly with an argv list and
inspects exit codes, stdout/stderr, and the files written, so the whole
surface (flag parsing, file formats, manifests, exit-code mapping) is
covered without spawning subprocesses.
"""

import json
import math
import re

import numpy as np
import pytest
from scipy import integrate

from capmeter import cli
from capmeter.errors import ConfigError
from capmeter.oracle import HessianSpectrum, pacbayes_bound, save_spectrum
from capmeter.protocol import RECORD_HEADER


def truth_energy(a, b, c, u_inf, n):
    """Reference energy via QUADPACK, independent of the package quadrature."""
    val, _ = integrate.quad(lambda u: a / (1.0 + np.exp(b) * u ** c),
                            0.0, 1.0 / n, epsabs=1e-13, epsrel=1e-13,
                            limit=200)
    return u_inf + val


def write_curve_file(path, n, u, se, scale="nll"):
    lines = [f"# scale={scale}", cli.CURVE_HEADER]
    for nn, uu, ss in zip(n, u, se):
        lines.append(f"{int(nn)},{float(uu)!r},{float(ss)!r},10")
    path.write_text("\n".join(lines) + "\n")


def data_lines(text):
    """Non-comment lines of a record/curve file."""
    return [ln for ln in text.splitlines()
            if ln.strip() and not ln.startswith("#")]


def fit_report(label, ns, losses, caps):
    """Minimal fit-report JSON accepted by the compare subcommand."""
    return {"label": label, "n": list(ns), "u_mean": list(losses),
            "sigmoid": {"capacity_by_n": [
                {"n": int(n), "value": float(c), "stderr": 0.0}
                for n, c in zip(ns, caps)]}}


RUN_ARGV = ["run", "--learner", "logistic", "--synthetic", "d=2,kappa=0,seed=1",
            "--n-grid", "20:400:8log", "--boots", "2", "--folds", "3",
            "--seeds", "1", "--epochs", "300", "--seed", "5", "--jobs", "1"]


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    """One small but complete protocol run shared by the run/fit tests."""
    path = tmp_path_factory.mktemp("cli-run")
    out = path / "records.csv"
    assert cli.main(RUN_ARGV + ["--out", str(out)]) == 0
    return path


class TestGridParsing:
    def test_log_grid(self):
        grid = cli.parse_grid("50:5000:12log")
        assert len(grid) == 12
        assert grid[0] == 50 and grid[-1] == 5000
        assert all(a < b for a, b in zip(grid, grid[1:]))

    def test_comma_list(self):
        assert cli.parse_grid("5,10,20") == (5, 10, 20)

    @pytest.mark.parametrize("text", ["fivety", "10:5:3log", "0:10:3log",
                                      "50:5000:1log", "5,ten,20"])
    def test_rejects_malformed(self, text):
        with pytest.raises(ConfigError):
            cli.parse_grid(text)


class TestRun:
    def test_writes_records_and_curve(self, run_dir, capsys):
        text = (run_dir / "records.csv").read_text()
        rows = data_lines(text)
        assert rows[0] == RECORD_HEADER
        # 8 sample sizes x 2 bootstraps x 3 folds x 1 seed
        assert len(rows) - 1 == 8 * 2 * 3 * 1
        assert "# manifest: master_seed = 5" in text
        assert any("timestamp" in ln for ln in text.splitlines())
        curve = data_lines((run_dir / "records.csv.curve").read_text())
        assert curve[0] == cli.CURVE_HEADER
        assert len(curve) - 1 == 8

    def test_missing_learner_flag_exits_2(self, tmp_path, capsys):
        code = cli.main(["run", "--n-grid", "5,10", "--synthetic", "d=2",
                         "--out", str(tmp_path / "r.csv")])
        assert code == 2
        assert "--learner" in capsys.readouterr().err

    def test_bad_grid_exits_2(self, tmp_path, capsys):
        code = cli.main(["run", "--learner", "logistic", "--synthetic", "d=2",
                         "--n-grid", "junk", "--out", str(tmp_path / "r.csv")])
        assert code == 2
        assert "error: ConfigError" in capsys.readouterr().err

    def test_no_data_source_exits_2(self, tmp_path, capsys):
        code = cli.main(["run", "--learner", "logistic", "--n-grid", "5,10",
                         "--out", str(tmp_path / "r.csv")])
        assert code == 2
        assert "--synthetic or --data" in capsys.readouterr().err

    def test_rerun_is_byte_identical_modulo_timestamp(self, tmp_path, monkeypatch):
        argv = ["run", "--learner", "logistic", "--synthetic", "d=2,seed=3",
                "--n-grid", "20,40,60", "--boots", "2", "--folds", "3",
                "--seeds", "1", "--epochs", "120", "--seed", "9",
                "--out", "records.csv"]
        texts = []
        for sub in ("one", "two"):
            workdir = tmp_path / sub
            workdir.mkdir()
            monkeypatch.chdir(workdir)
            assert cli.main(list(argv)) == 0
            texts.append((workdir / "records.csv").read_text()
                         + (workdir / "records.csv.curve").read_text())
        strip = [[ln for ln in t.splitlines() if "timestamp" not in ln]
                 for t in texts]
        assert strip[0] == strip[1]

    def test_jobs_env_is_read(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("CAPMETER_JOBS", "zero")
        code = cli.main(["run", "--learner", "logistic", "--synthetic", "d=2",
                         "--n-grid", "5,10", "--out", str(tmp_path / "r.csv")])
        assert code == 2
        assert "CAPMETER_JOBS" in capsys.readouterr().err

    def test_worker_count_does_not_change_results(self, tmp_path, monkeypatch):
        argv = ["run", "--learner", "logistic", "--synthetic", "d=2,seed=3",
                "--n-grid", "20,40", "--boots", "1", "--folds", "3",
                "--seeds", "1", "--epochs", "80", "--seed", "9"]
        out_serial = tmp_path / "serial.csv"
        assert cli.main(argv + ["--jobs", "1", "--out", str(out_serial)]) == 0
        monkeypatch.setenv("CAPMETER_JOBS", "2")
        out_env = tmp_path / "env.csv"
        assert cli.main(argv + ["--out", str(out_env)]) == 0
        assert data_lines(out_serial.read_text()) == data_lines(out_env.read_text())

    def test_tabular_data_digest_in_manifest(self, tmp_path):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(60, 2))
        y = (x[:, 0] > 0).astype(int)
        csv = tmp_path / "table.csv"
        csv.write_text("".join(f"{float(a)!r},{float(b)!r},{int(c)}\n"
                               for (a, b), c in zip(x, y)))
        out = tmp_path / "r.csv"
        code = cli.main(["run", "--learner", "logistic", "--data", str(csv),
                         "--n-grid", "10,20,30", "--boots", "1", "--folds", "3",
                         "--seeds", "1", "--epochs", "60", "--out", str(out)])
        assert code == 0
        text = out.read_text()
        assert "sha256:" in text
        assert "table" in text


class TestFit:
    def test_records_and_curve_inputs_agree(self, run_dir, tmp_path, capsys):
        out_rec = tmp_path / "from-records"
        out_cur = tmp_path / "from-curve"
        assert cli.main(["fit", str(run_dir / "records.csv"),
                         "--method", "sigmoid", "--out", str(out_rec)]) == 0
        assert cli.main(["fit", str(run_dir / "records.csv.curve"),
                         "--method", "sigmoid", "--out", str(out_cur)]) == 0
        a = json.loads((tmp_path / "from-records.json").read_text())
        b = json.loads((tmp_path / "from-curve.json").read_text())
        assert a["u_mean"] == b["u_mean"]
        assert a["sigmoid"]["a"] == b["sigmoid"]["a"]
        assert a["sigmoid"]["capacity_at_n_max"] == b["sigmoid"]["capacity_at_n_max"]

    def test_params_ratio_line(self, tmp_path, capsys):
        n = np.rint(np.geomspace(1e3, 1e6, 12)).astype(np.int64)
        u = [truth_energy(609.0, 20.0, 3.0, 0.1, nn) for nn in n]
        curve = tmp_path / "curve.csv"
        write_curve_file(curve, n, u, np.full(n.size, 1e-4))
        out = tmp_path / "fit609"
        code = cli.main(["fit", str(curve), "--method", "both",
                         "--params", "78902", "--out", str(out)])
        assert code == 0
        stdout = capsys.readouterr().out
        assert "C/p = 0.77%" in stdout
        text = (tmp_path / "fit609.txt").read_text()
        assert "c_over_p 0.77%" in text
        assert "poly.capacity_at_n_max" in text
        payload = json.loads((tmp_path / "fit609.json").read_text())
        assert payload["sigmoid"]["a"] == pytest.approx(609.0, rel=0.01)
        assert payload["poly"]["degree"] == 7
        assert payload["c_over_p_percent"] == pytest.approx(
            100.0 * payload["sigmoid"]["capacity_at_n_max"]["value"] / 78902)

    def test_recovers_sigmoid_parameters_from_noisy_curve(self, tmp_path):
        n = np.geomspace(1e2, 1e5, 15)
        u = np.array([truth_energy(100.0, 20.0, 3.0, 0.1, nn) for nn in n])
        rng = np.random.default_rng(7)
        curve = tmp_path / "noisy.csv"
        write_curve_file(curve, n.round().astype(np.int64),
                         u + rng.normal(0, 0.005, n.size),
                         np.full(n.size, 0.005))
        out = tmp_path / "rec"
        assert cli.main(["fit", str(curve), "--method", "sigmoid",
                         "--out", str(out)]) == 0
        payload = json.loads((tmp_path / "rec.json").read_text())
        assert payload["sigmoid"]["a"] == pytest.approx(100.0, rel=0.05)

    def test_three_point_curve_exits_4(self, tmp_path, capsys):
        curve = tmp_path / "short.csv"
        write_curve_file(curve, [10, 100, 1000], [0.5, 0.3, 0.2],
                         [0.01, 0.01, 0.01])
        code = cli.main(["fit", str(curve), "--method", "sigmoid",
                         "--out", str(tmp_path / "f")])
        assert code == 4
        assert "DegenerateCurve" in capsys.readouterr().err

    def test_garbage_header_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("who,what,when\n1,2,3\n")
        code = cli.main(["fit", str(bad), "--out", str(tmp_path / "f")])
        assert code == 2
        assert "ParseError" in capsys.readouterr().err

    def test_plot_is_deterministic(self, tmp_path, monkeypatch):
        n = np.rint(np.geomspace(1e3, 1e6, 12)).astype(np.int64)
        u = [truth_energy(50.0, 12.0, 2.0, 0.05, nn) for nn in n]
        svgs = []
        for sub in ("one", "two"):
            workdir = tmp_path / sub
            workdir.mkdir()
            monkeypatch.chdir(workdir)
            write_curve_file(workdir / "curve.csv", n, u,
                             np.full(n.size, 1e-4))
            assert cli.main(["fit", "curve.csv", "--method", "sigmoid",
                             "--plot", "--out", "fit"]) == 0
            svgs.append((workdir / "fit.svg").read_bytes())
        assert svgs[0] == svgs[1]
        body = svgs[0].decode()
        assert body.lstrip().startswith("<svg")
        assert "manifest: see fit.json" in body
        assert "timestamp" not in body


class TestOracle:
    def test_exact_capacity_example(self, capsys):
        code = cli.main(["oracle", "--lambda", "1,1", "--eps", "1",
                         "--n", "1000000000", "--exact"])
        assert code == 0
        assert capsys.readouterr().out == "capacity_exact 1.0\n"

    def test_effective_dim_example(self, capsys):
        code = cli.main(["oracle", "--lambda", "1,0.1,0.001", "--eps", "0.2",
                         "--dim-at", "101"])
        assert code == 0
        assert capsys.readouterr().out == "effective_dim@101 3\n"

    def test_harmonic_mean_flavour(self, capsys):
        code = cli.main(["oracle", "--lambda", "2,2", "--eps", "1", "--hm"])
        assert code == 0
        assert capsys.readouterr().out == "capacity_hm 0.5\n"

    def test_pacbayes_bound_matches_library(self, capsys):
        spectrum = HessianSpectrum(eigenvalues=(1.0, 0.25), epsilon=0.5)
        expected = pacbayes_bound(spectrum, 200, 0.1, 2.0)
        code = cli.main(["oracle", "--lambda", "1,0.25", "--eps", "0.5",
                         "--n", "200", "--kappa", "0.1", "--dist2", "2.0"])
        assert code == 0
        out = capsys.readouterr().out
        assert out == f"pacbayes_bound {round(expected, 6)}\n"

    def test_spectrum_file_round_trip(self, tmp_path, capsys):
        path = tmp_path / "spec.txt"
        save_spectrum(path, HessianSpectrum(eigenvalues=(1.0, 0.1, 0.001),
                                            epsilon=0.2))
        code = cli.main(["oracle", "--spectrum", str(path), "--dim-at", "101"])
        assert code == 0
        assert capsys.readouterr().out == "effective_dim@101 3\n"

    def test_spectrum_file_missing_epsilon_exits_2(self, tmp_path, capsys):
        path = tmp_path / "bad.txt"
        path.write_text("1.0\n0.1\n")
        code = cli.main(["oracle", "--spectrum", str(path), "--dim-at", "10"])
        assert code == 2
        assert "epsilon" in capsys.readouterr().err

    def test_no_quantity_selected_exits_2(self, capsys):
        code = cli.main(["oracle", "--lambda", "1,1", "--eps", "1"])
        assert code == 2
        assert "nothing to compute" in capsys.readouterr().err

    def test_exact_without_n_exits_2(self, capsys):
        assert cli.main(["oracle", "--lambda", "1,1", "--eps", "1",
                         "--exact"]) == 2
        assert "--n" in capsys.readouterr().err

    def test_inline_spectrum_without_eps_exits_2(self, capsys):
        assert cli.main(["oracle", "--lambda", "1,1", "--hm"]) == 2
        assert "--eps" in capsys.readouterr().err


class TestCompare:
    def reports(self, tmp_path, flip_losses=False):
        ns = [100, 200, 400]
        sign = -1.0 if flip_losses else 1.0
        paths = []
        for i, label in enumerate(["small", "medium", "big"]):
            caps = [10.0 * (i + 1) + 0.1 * j for j in range(3)]
            losses = [0.5 + sign * (0.1 * i + 0.02 * j) for j in range(3)]
            path = tmp_path / f"{label}.json"
            path.write_text(json.dumps(fit_report(label, ns, losses, caps)))
            paths.append(str(path))
        return paths

    def test_concordant_models_give_tau_one(self, tmp_path, capsys):
        paths = self.reports(tmp_path)
        out = tmp_path / "cmp"
        assert cli.main(["compare", *paths, "--out", str(out)]) == 0
        stdout = capsys.readouterr().out
        for n in (100, 200, 400):
            assert f"tau@{n} 1.0" in stdout
        payload = json.loads((tmp_path / "cmp.json").read_text())
        assert payload["shared_n"] == [100, 200, 400]
        assert payload["regression"]["slope"] > 0
        assert payload["regression"]["p_value"] < 0.05
        assert [r["label"] for r in payload["ranked"]] == [
            "small", "medium", "big"]

    def test_discordant_models_give_tau_minus_one(self, tmp_path, capsys):
        paths = self.reports(tmp_path, flip_losses=True)
        assert cli.main(["compare", *paths,
                         "--out", str(tmp_path / "cmp")]) == 0
        assert "tau@400 -1.0" in capsys.readouterr().out

    def test_single_shared_n_refuses_regression(self, tmp_path, capsys):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        a.write_text(json.dumps(fit_report("a", [100], [0.5], [10.0])))
        b.write_text(json.dumps(fit_report("b", [100], [0.4], [20.0])))
        assert cli.main(["compare", str(a), str(b),
                         "--out", str(tmp_path / "cmp")]) == 0
        captured = capsys.readouterr()
        assert "regression refused, needs >= 3 (model, N) points" in captured.err
        assert "regression refused: fewer than 3 points" in captured.out
        assert "tau@100 -1.0" in captured.out

    def test_equal_capacities_report_tied_tau(self, tmp_path, capsys):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        a.write_text(json.dumps(fit_report("a", [100, 200], [0.5, 0.4],
                                           [7.0, 7.0])))
        b.write_text(json.dumps(fit_report("b", [100, 200], [0.6, 0.5],
                                           [7.0, 7.0])))
        assert cli.main(["compare", str(a), str(b),
                         "--out", str(tmp_path / "cmp")]) == 0
        captured = capsys.readouterr()
        assert "tau@100 tied" in captured.out
        assert "refused: capacities all equal" in captured.out

    def test_no_overlap_exits_2(self, tmp_path, capsys):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        a.write_text(json.dumps(fit_report("a", [100], [0.5], [10.0])))
        b.write_text(json.dumps(fit_report("b", [300], [0.4], [20.0])))
        assert cli.main(["compare", str(a), str(b),
                         "--out", str(tmp_path / "cmp")]) == 2
        assert "no overlapping sample sizes" in capsys.readouterr().err


class TestSgld:
    def test_non_differentiable_learner_exits_2(self, tmp_path, capsys):
        code = cli.main(["sgld", "--learner", "knn", "--schedule", "5,10",
                         "--step", "0.01", "--out", str(tmp_path / "s")])
        assert code == 2
        assert "learner not differentiable: knn" in capsys.readouterr().err

    def test_quadratic_capacity_matches_closed_form(self, tmp_path, capsys):
        out = tmp_path / "sgld.csv"
        code = cli.main(["sgld", "--learner", "quadratic", "--lambda", "1,1",
                         "--schedule", "5,10", "--step", "0.003",
                         "--chains", "4", "--equil", "1500",
                         "--samples", "12000", "--prior-eps", "1",
                         "--seed", "3", "--out", str(out)])
        assert code == 0
        stdout = capsys.readouterr().out
        match = re.search(r"C\(5\) = ([-0-9.e]+) \+/- ([0-9.e]+)", stdout)
        assert match is not None
        assert abs(float(match.group(1)) - 25.0 / 84.0) < 0.15
        assert "# scale=probability-complement" in out.read_text()
        caps_text = (tmp_path / "sgld.csv.capacities").read_text()
        assert "capacity@5" in caps_text
        assert "surviving_chains 4" in caps_text

    def test_schedule_beyond_dataset_exits_2(self, tmp_path, capsys):
        csv = tmp_path / "tiny.csv"
        rng = np.random.default_rng(1)
        csv.write_text("\n".join(f"{float(a)!r},{int(a > 0)}"
                                 for a in rng.normal(size=12)) + "\n")
        code = cli.main(["sgld", "--learner", "logistic", "--data", str(csv),
                         "--schedule", "4,8,200", "--step", "0.01",
                         "--chains", "2", "--out", str(tmp_path / "s")])
        assert code == 2
        assert "ScheduleExhaustsData" in capsys.readouterr().err

    def test_majority_chain_failure_exits_3(self, tmp_path, capsys):
        with np.errstate(over="ignore", invalid="ignore"):
            code = cli.main(["sgld", "--learner", "quadratic", "--lambda", "1",
                             "--schedule", "5,10", "--step", "1e8",
                             "--chains", "2", "--equil", "40", "--samples", "5",
                             "--seed", "0", "--out", str(tmp_path / "s")])
        assert code == 3
        assert "NonFiniteState" in capsys.readouterr().err
