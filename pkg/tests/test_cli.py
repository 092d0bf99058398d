import csv
import math
from pathlib import Path

from proxlmc import theory
from proxlmc.imaging import read_raw
from proxlmc.theory import TheoryInputs


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestRunCommand:
    def test_diverging_sampler_reports_nan_and_exits_zero(self, cli, tmp_path):
        rc, out, err = cli(
            "run", "--experiment", "example1", "--sampler", "ula",
            "--scenario", "tail", "--d", "10",
            "--n-steps", "300", "--burn-in", "100", "--replicas", "3",
            "--output-dir", str(tmp_path),
        )
        assert rc == 0, err
        assert "nan" in out
        assert "diverged at step" in out
        rows = read_rows(tmp_path / "summary.csv")
        assert [r["moment_order"] for r in rows] == ["2", "4", "6"]
        for r in rows:
            assert r["method"] == "ula"
            assert r["scenario"] == "tail"
            assert math.isnan(float(r["estimate"]))
            assert math.isnan(float(r["re"]))
            assert math.isnan(float(r["cv"]))
        chain = read_rows(tmp_path / "chain_0.csv")
        assert chain[-1]["diverged"] == "1"
        assert all(r["diverged"] == "0" for r in chain[:-1])
        assert not (tmp_path / "chain_1.csv").exists()  # default keeps the first

    def test_same_seed_runs_are_byte_identical(self, cli, tmp_path):
        args = (
            "run", "--potential", "quartic", "--d", "4", "--sampler", "ipla",
            "--tau", "0.1", "--n-steps", "200", "--burn-in", "50",
            "--replicas", "2", "--base-seed", "7",
            "--prox.solver", "exact", "--trajectories", "all",
        )
        rc1, _, err1 = cli(*args, "--output-dir", str(tmp_path / "a"))
        rc2, _, err2 = cli(*args, "--output-dir", str(tmp_path / "b"))
        assert rc1 == 0 and rc2 == 0, err1 + err2
        for name in ("summary.csv", "chain_0.csv", "chain_1.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (
                tmp_path / "b" / name
            ).read_bytes(), name

    def test_echoed_config_reproduces_the_run(self, cli, tmp_path):
        rc, _, err = cli(
            "run", "--potential", "gaussian", "--d", "3", "--sampler", "tula",
            "--n-steps", "150", "--burn-in", "30", "--replicas", "2",
            "--base-seed", "3", "--output-dir", str(tmp_path / "a"),
        )
        assert rc == 0, err
        rc, _, err = cli(
            "run", "--config", str(tmp_path / "a" / "config.toml"),
            "--output-dir", str(tmp_path / "b"),
        )
        assert rc == 0, err
        assert (tmp_path / "a" / "summary.csv").read_bytes() == (
            tmp_path / "b" / "summary.csv"
        ).read_bytes()

    def test_imaging_run_writes_summaries_and_images(self, cli, tmp_path):
        rc, out, err = cli(
            "run", "--experiment", "example3", "--side", "16",
            "--psf-depth", "5", "--n-steps", "60", "--burn-in", "10",
            "--thinning", "5", "--output-dir", str(tmp_path),
        )
        assert rc == 0, err
        assert "posterior mean rmse against truth" in out
        for stem in ("truth", "observed", "mean", "quantile_10", "quantile_90"):
            assert (tmp_path / f"{stem}.pgm").exists(), stem
            assert (tmp_path / f"{stem}.raw").exists(), stem
        mean, side = read_raw(tmp_path / "mean.raw")
        assert side == 16 and mean.shape == (256,)
        rows = read_rows(tmp_path / "summary.csv")
        assert [r["moment_order"] for r in rows] == ["2", "4", "6"]
        assert float(rows[0]["estimate"]) > 0.0

    def test_output_root_env_var_rebases_relative_dirs(self, cli, tmp_path):
        rc, _, err = cli(
            "run", "--potential", "quartic", "--sampler", "ipla", "--d", "2",
            "--tau", "0.1", "--n-steps", "50", "--burn-in", "10",
            "--replicas", "1", "--prox.solver", "exact",
            "--output-dir", "nested/run",
            env={"PROXLMC_OUTPUT_ROOT": str(tmp_path)},
        )
        assert rc == 0, err
        assert (tmp_path / "nested" / "run" / "summary.csv").exists()
        # an absolute --output-dir wins over the root
        rc, _, err = cli(
            "theory", "--output-dir", str(tmp_path / "abs"),
            env={"PROXLMC_OUTPUT_ROOT": str(tmp_path / "ignored")},
        )
        assert rc == 0, err
        assert (tmp_path / "abs" / "theory.csv").exists()
        assert not (tmp_path / "ignored").exists()


class TestErrorPaths:
    def test_missing_accuracy_source_names_the_keys(self, cli, tmp_path):
        rc, _, err = cli(
            "run", "--kappa", "0", "--output-dir", str(tmp_path)
        )
        assert rc == 2
        assert "configuration error" in err
        assert "kappa" in err and "prox.delta_abs" in err

    def test_invalid_value_exits_two(self, cli, tmp_path):
        rc, _, err = cli("run", "--tau", "-0.5", "--output-dir", str(tmp_path))
        assert rc == 2
        assert "tau" in err

    def test_unknown_file_key_exits_two_with_line(self, cli, tmp_path):
        f = tmp_path / "c.toml"
        f.write_text("tau = 0.1\nwibble = 3\n")
        rc, _, err = cli("run", "--config", str(f), "--output-dir", str(tmp_path))
        assert rc == 2
        assert "wibble" in err and "line 2" in err

    def test_unwritable_output_exits_three(self, cli, tmp_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("not a directory")
        rc, _, err = cli(
            "run", "--potential", "gaussian", "--d", "2",
            "--n-steps", "5", "--burn-in", "0",
            "--output-dir", str(blocker / "sub"),
        )
        assert rc == 3
        assert "i/o error" in err

    def test_unknown_flag_exits_two(self, cli, tmp_path):
        rc, _, err = cli("run", "--frobnicate", "1")
        assert rc == 2


class TestTheoryCommand:
    def test_table_matches_the_module(self, cli, tmp_path):
        rc, out, err = cli(
            "theory", "--q-v", "3", "--d", "125", "--tau", "0.01",
            "--eps", "0.1", "--output-dir", str(tmp_path),
        )
        assert rc == 0, err
        table = {r["quantity"]: r["value"] for r in read_rows(tmp_path / "theory.csv")}
        ti = TheoryInputs(d=125, lambda_v=1.0, r_v=0.0, kappa=1.0,
                          alpha=1.0, tau=0.01, m0=0.0)
        for m in (1.0, 2.0, 3.0, 4.0):
            assert float(table[f"moment_constant_{m:g}"]) == theory.moment_constant(m, ti)
        kt = theory.k_tau(ti, 3.0, 1.0)
        assert float(table["k_tau"]) == kt.value
        assert float(table["k_tau_remark_bound"]) == kt.remark_bound
        assert float(table["c_nu"]) == theory.c_of_nu(ti, 3.0, 1.0)
        kl = theory.kl_budget(ti, 3.0, 1.0, 1.0, 125.0, 0.1)
        assert float(table["kl_tau_eps"]) == kl.tau_eps
        assert int(table["kl_n_eps"]) == kl.n_eps
        w2 = theory.w2_budget(ti, 3.0, 1.0, 125.0, 0.1)
        assert float(table["w2_tau_eps"]) == w2.tau_eps
        assert int(table["w2_n_eps"]) == w2.n_eps
        assert "k_tau" in out

    def test_out_of_scope_rows_say_unavailable(self, cli, tmp_path):
        rc, out, err = cli(
            "theory", "--q-v", "3", "--lambda-v", "0", "--output-dir", str(tmp_path),
        )
        assert rc == 0, err
        table = {r["quantity"]: r["value"] for r in read_rows(tmp_path / "theory.csv")}
        assert table["k_tau"].startswith("unavailable")
        assert table["w2_budget"].startswith("unavailable")


class TestProxBenchCommand:
    def test_solvers_agree_on_the_quartic(self, cli, tmp_path):
        rc, out, err = cli(
            "prox-bench", "--potential", "quartic", "--d", "6",
            "--replicas", "3", "--tau", "0.1", "--base-seed", "1",
            "--output-dir", str(tmp_path),
        )
        assert rc == 0, err
        rows = read_rows(tmp_path / "prox_bench.csv")
        assert {r["solver"] for r in rows} == {"exact", "gd", "newton"}
        delta = 1.0 * 0.1 ** 2
        for r in rows:
            assert r["status"] == "ok", r
            assert float(r["error_bound"]) <= delta * (1.0 + 1e-12)
            assert float(r["dist_to_reference"]) <= 2.0 * delta
        assert "max_error_bound" in out
