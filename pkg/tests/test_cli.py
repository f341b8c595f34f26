"""CLI surface: flags, exit codes, diagnostics, output files."""

import numpy as np
import pytest

import targetbalance as tb
from targetbalance.cli import main, scenario_preset_path


def write_covariates(tmp_path, n=12, d=2, seed=0, weights=False, name="cov.csv"):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, d)) + 1.0
    w = np.exp(0.3 * rng.standard_normal(n)) if weights else None
    path = tmp_path / name
    tb.write_covariates_csv(path, x, w)
    return path


def diag(capsys):
    out = capsys.readouterr().out
    pairs = {}
    for line in out.strip().splitlines():
        if "=" in line:
            key, _, value = line.partition("=")
            pairs[key] = value
    return pairs


class TestDesign:
    def test_complete_randomization(self, tmp_path, capsys):
        cov = write_covariates(tmp_path)
        out = tmp_path / "assign.csv"
        rc = main(
            ["design", "--covariates", str(cov), "--balance", "cr",
             "--seed", "3", "--out", str(out)]
        )
        assert rc == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "unit,assignment,z,weight,clipped_weight"
        a = np.array([int(line.split(",")[1]) for line in lines[1:]])
        assert a.sum() == 6  # n/2 treated

    def test_quantile_pool_candidate_count(self, tmp_path, capsys):
        cov = write_covariates(tmp_path, weights=True)
        out = tmp_path / "assign.csv"
        rc = main(
            ["design", "--covariates", str(cov), "--weights-column",
             "--balance", "tb", "--alpha", "0.99", "--pool", "100",
             "--seed", "1", "--out", str(out)]
        )
        assert rc == 0
        pairs = diag(capsys)
        assert pairs["candidates"] == "10000"
        assert float(pairs["m_statistic"]) >= 0.0

    def test_duplicate_columns_exit_numerical(self, tmp_path, capsys):
        rng = np.random.default_rng(5)
        col = rng.standard_normal((10, 1))
        path = tmp_path / "dup.csv"
        tb.write_covariates_csv(path, np.hstack([col, col]))
        rc = main(
            ["design", "--covariates", str(path), "--balance", "tb",
             "--alpha", "0.9", "--pool", "5", "--out", str(tmp_path / "o.csv")]
        )
        assert rc == 4
        assert "singular" in capsys.readouterr().err

    def test_missing_covariates_exit_data(self, tmp_path, capsys):
        rc = main(
            ["design", "--covariates", str(tmp_path / "nope.csv"),
             "--balance", "cr", "--out", str(tmp_path / "o.csv")]
        )
        assert rc == 3

    def test_population_means_weight_source(self, tmp_path, capsys):
        cov = write_covariates(tmp_path, d=2)
        out = tmp_path / "assign.csv"
        rc = main(
            ["design", "--covariates", str(cov), "--source-mean", "1,1",
             "--target-mean", "1.3,1.3", "--balance", "tb", "--alpha", "0.9",
             "--pool", "10", "--clip", "40", "--out", str(out)]
        )
        assert rc == 0
        body = out.read_text().splitlines()[1:]
        w = np.array([float(line.split(",")[3]) for line in body])
        assert not np.allclose(w, 1.0)

    def test_threshold_rule(self, tmp_path, capsys):
        cov = write_covariates(tmp_path)
        rc = main(
            ["design", "--covariates", str(cov), "--balance", "sb",
             "--threshold", "50.0", "--out", str(tmp_path / "o.csv")]
        )
        assert rc == 0
        assert float(diag(capsys)["realized_threshold"]) == 50.0

    def test_balance_requires_rule(self, tmp_path, capsys):
        cov = write_covariates(tmp_path)
        rc = main(
            ["design", "--covariates", str(cov), "--balance", "tb",
             "--out", str(tmp_path / "o.csv")]
        )
        assert rc == 2

    def test_odd_row_count(self, tmp_path, capsys):
        cov = write_covariates(tmp_path, n=11)
        rc = main(
            ["design", "--covariates", str(cov), "--balance", "cr",
             "--out", str(tmp_path / "o.csv")]
        )
        assert rc == 2


SCENARIO = """
scenario_id = cli-test
model = linear
d = 2
delta = 0.3
n = 30
alpha = 0.9
pool = 4
reps = 6
base_seed = 99
methods = WE-CR, WE-TB, UE-CR
sweep_param = n
sweep_values = 20, 30
"""


class TestSimulate:
    def test_sweep_rows_and_summary(self, tmp_path, capsys):
        scen = tmp_path / "s.scenario"
        scen.write_text(SCENARIO)
        out = tmp_path / "res.csv"
        rc = main(["simulate", "--scenario", str(scen), "--out", str(out)])
        assert rc == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 1 + 2 * 3  # header + values x methods
        summary = capsys.readouterr().out
        assert summary.count("sweep_value=") == 2

    def test_thread_invariance_bytes(self, tmp_path):
        scen = tmp_path / "s.scenario"
        scen.write_text(SCENARIO)
        out1, out8 = tmp_path / "r1.csv", tmp_path / "r8.csv"
        assert main(["simulate", "--scenario", str(scen), "--out", str(out1),
                     "--threads", "1"]) == 0
        assert main(["simulate", "--scenario", str(scen), "--out", str(out8),
                     "--threads", "8"]) == 0
        assert out1.read_bytes() == out8.read_bytes()

    def test_missing_scenario_exit_usage(self, tmp_path, capsys):
        rc = main(["simulate", "--scenario", str(tmp_path / "ghost.scenario"),
                   "--out", str(tmp_path / "r.csv")])
        assert rc == 2

    def test_bad_scenario_key_exit_usage(self, tmp_path, capsys):
        scen = tmp_path / "s.scenario"
        scen.write_text(SCENARIO + "\nwhat = 1\n")
        rc = main(["simulate", "--scenario", str(scen),
                   "--out", str(tmp_path / "r.csv")])
        assert rc == 2

    def test_fig1_preset_reduced_reps_row_count(self, tmp_path):
        # The bundled sample-size preset keeps its 6 methods x 19 n-values
        # grid when replayed at reduced replication count.
        preset = scenario_preset_path("fig1_linear").read_text()
        scen = tmp_path / "fig1_tiny.scenario"
        scen.write_text(preset.replace("reps = 500", "reps = 1"))
        out = tmp_path / "fig1.csv"
        assert main(["simulate", "--scenario", str(scen), "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 1 + 6 * 19

    def test_presets_exist_and_parse(self):
        for name in ("fig1_linear", "fig1_nonlinear", "fig2_linear",
                     "fig2_nonlinear", "fig3_linear", "fig3_nonlinear"):
            cfg = tb.load_scenario(scenario_preset_path(name))
            assert cfg.reps == 500
            assert cfg.alpha == 0.99
            assert cfg.pool == 100
            assert cfg.d == 10
            assert len(cfg.methods) == 6
        fig1 = tb.load_scenario(scenario_preset_path("fig1_linear"))
        assert fig1.sweep[0] == "n"
        assert list(fig1.sweep[1]) == list(range(500, 10_000, 500))


class TestTheory:
    def test_vda(self, capsys):
        assert main(["theory", "--vda", "2", "2"]) == 0
        value = float(diag(capsys)["v_da"])
        assert value == pytest.approx(0.418023, abs=1e-6)

    def test_vda_full_support(self, capsys):
        assert main(["theory", "--vda", "2", "1e9"]) == 0
        assert float(diag(capsys)["v_da"]) == pytest.approx(1.0, abs=1e-10)

    def test_predict(self, capsys):
        assert main(["theory", "--predict", "2.0", "0.5", "0.4"]) == 0
        assert float(diag(capsys)["predicted_variance"]) == pytest.approx(1.4)

    def test_threshold(self, capsys):
        assert main(["theory", "--threshold", "2", "0.367879441"]) == 0
        assert float(diag(capsys)["threshold"]) == pytest.approx(2.0, abs=1e-6)

    def test_r2_files(self, tmp_path, capsys):
        rng = np.random.default_rng(8)
        n = 200
        x = rng.standard_normal((n, 2)) + 1.0
        w = np.exp(0.3 * rng.standard_normal(n))
        y0 = x.sum(axis=1) + rng.standard_normal(n)
        y1 = 3 * x.sum(axis=1) + rng.standard_normal(n)
        cov = tmp_path / "cov.csv"
        tb.write_covariates_csv(cov, x, w)
        outc = tmp_path / "y.csv"
        with open(outc, "w", newline="\n") as fh:
            fh.write("y0,y1\n")
            for a, b in zip(y0, y1):
                fh.write(f"{a:.17g},{b:.17g}\n")
        assert main(["theory", "--r2", str(cov), str(outc)]) == 0
        pairs = diag(capsys)
        assert 0.0 <= float(pairs["r2_source"]) <= 1.0
        assert float(pairs["r2_target"]) >= float(pairs["r2_source"]) - 0.05

    def test_flag_misuse_exit_two(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["theory"])
        assert exc.value.code == 2


class TestValidate:
    def test_enumeration_suite_passes(self, capsys):
        assert main(["validate", "--suite", "enumeration"]) == 0
        out = capsys.readouterr().out
        assert "check=marginal_preservation status=pass" in out
        assert "failures=0" in out

    def test_mc_suite_deterministic(self, capsys):
        assert main(["validate", "--suite", "mc", "--seed", "7"]) == 0
        first = capsys.readouterr().out
        assert main(["validate", "--suite", "mc", "--seed", "7"]) == 0
        assert capsys.readouterr().out == first

    def test_mutated_build_fails(self, capsys, monkeypatch):
        # Break M's sign symmetry and expect the suite to catch it.
        from targetbalance import randomization

        original = randomization.mahalanobis_statistic

        def skewed(wc, z, criterion="target", ridge=False):
            stat = original(wc, z, criterion, ridge)
            zv = z.z if hasattr(z, "z") else z
            if zv[0] == 1:
                return tb.BalanceStatistic(
                    stat.value + 1e-6, stat.criterion,
                    stat.covariance_condition_number,
                )
            return stat

        monkeypatch.setattr(randomization, "mahalanobis_statistic", skewed)
        assert main(["validate", "--suite", "enumeration"]) == 1
        out = capsys.readouterr().out
        assert "check=m_sign_symmetry status=fail" in out
