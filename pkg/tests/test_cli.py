"""End-to-end tests for the command-line tool.

Each test writes a config file into a temp directory, invokes a
subcommand through :class:`click.testing.CliRunner`, and inspects exit
codes, console output, and the files left in the output directory.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

from pdvol.cli import main
from pdvol.features import compute_features
from pdvol.kernels import Exponential

DEMO = Path(__file__).resolve().parent.parent / "demo"

KERNELS = """\
[kernel1]
family = exp
lam = 10.0

[kernel2]
family = exp
lam = 15.0
"""

KERNELS_TSPL_K1 = """\
[kernel1]
family = tspl
alpha = 1.2
delta = 0.1

[kernel2]
family = exp
lam = 15.0
"""

MODEL = """\
[model]
beta0 = 0.02
beta1 = -0.1
beta2 = 0.6
s0 = 1.0
delta = 1.0
history_r1 = 0.0
history_r2 = 0.09
"""

MODEL_EMPTY_HISTORY = """\
[model]
beta0 = 0.02
beta1 = -0.1
beta2 = 0.6
s0 = 1.0
delta = 0.0
"""

SIM = """\
[sim]
horizon = 0.05
steps_per_year = 504
n_paths = 4
seed = 3
scheme = DirectQuadrature
g1_mode = zero
dump_paths = 2
"""


@pytest.fixture()
def runner():
    return CliRunner()


def write_config(path: Path, *blocks: str, outdir: Path) -> Path:
    text = "\n".join(blocks) + f"\n[output]\ndir = {outdir}\n"
    path.write_text(text, encoding="utf-8")
    return path


def snapshot(outdir: Path) -> dict[str, bytes]:
    """Bytes of every output file except the timestamped sidecar log."""
    return {p.name: p.read_bytes() for p in sorted(outdir.iterdir())
            if p.name != "run.log"}


@pytest.fixture(scope="module")
def tiny_market(tmp_path_factory):
    """A small noiseless dataset generated from exp(8)/exp(22) kernels."""
    root = tmp_path_factory.mktemp("market")
    rng = np.random.default_rng(42)
    n = 170
    dates = pd.bdate_range("2021-01-04", periods=n + 1)
    returns = rng.normal(0.0, 0.012, size=n)
    prices = 100.0 * np.cumprod(np.concatenate([[1.0], 1.0 + returns]))
    feats = compute_features(returns, Exponential(8.0), Exponential(22.0))
    proxy = 0.05 - 0.4 * feats.r1 + 1.5 * np.sqrt(feats.r2)
    pd.DataFrame({"date": dates.strftime("%Y-%m-%d"),
                  "price": prices}).to_csv(root / "prices.csv", index=False)
    pd.DataFrame({"date": dates[1:].strftime("%Y-%m-%d"),
                  "vol": proxy}).to_csv(root / "proxy.csv", index=False)
    split = str(dates[1:][int(n * 0.8)].date())
    return root, split


def data_block(tiny_market) -> str:
    root, split = tiny_market
    return (f"[data]\nprices = {root / 'prices.csv'}\n"
            f"proxy = {root / 'proxy.csv'}\nsplit = {split}\n")


class TestCheck:
    def test_compliant_config_exits_zero(self, runner, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(tmp_path / "run.ini", KERNELS, MODEL, outdir=out)
        result = runner.invoke(main, ["check", "--config", str(cfg)])
        assert result.exit_code == 0, result.output
        assert "verdict: EXISTENCE+POSITIVITY" in result.output
        assert (out / "assumptions.txt").is_file()
        assert (out / "assumptions.kv").is_file()
        assert "verdict=EXISTENCE+POSITIVITY" in \
            (out / "assumptions.kv").read_text()

    def test_power_law_first_kernel_exits_two(self, runner, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(tmp_path / "run.ini", KERNELS_TSPL_K1, MODEL,
                           outdir=out)
        result = runner.invoke(main, ["check", "--config", str(cfg),
                                      "--horizon", "0.05"])
        assert result.exit_code == 2, result.output
        assert "verdict: EXISTENCE" in result.output

    def test_empty_history_exits_three(self, runner, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(tmp_path / "run.ini", KERNELS,
                           MODEL_EMPTY_HISTORY, outdir=out)
        result = runner.invoke(main, ["check", "--config", str(cfg)])
        assert result.exit_code == 3, result.output
        assert "verdict: NEITHER" in result.output

    def test_missing_history_with_window_exits_one(self, runner, tmp_path):
        broken = MODEL.replace("history_r1 = 0.0\n", "")
        broken = broken.replace("history_r2 = 0.09\n", "")
        cfg = write_config(tmp_path / "run.ini", KERNELS, broken,
                           outdir=tmp_path / "out")
        result = runner.invoke(main, ["check", "--config", str(cfg)])
        assert result.exit_code == 1
        assert "error:" in result.stderr

    def test_rerun_is_byte_identical(self, runner, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(tmp_path / "run.ini", KERNELS, MODEL, outdir=out)
        assert runner.invoke(main, ["check", "--config",
                                    str(cfg)]).exit_code == 0
        first = snapshot(out)
        assert runner.invoke(main, ["check", "--config",
                                    str(cfg)]).exit_code == 0
        assert snapshot(out) == first
        assert len((out / "run.log").read_text().splitlines()) == 2


class TestSimulate:
    def test_writes_summary_and_paths(self, runner, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(tmp_path / "run.ini", KERNELS, MODEL, SIM,
                           outdir=out)
        result = runner.invoke(main, ["simulate", "--config", str(cfg)])
        assert result.exit_code == 0, result.output
        assert "paths: 4" in result.output
        assert "verdict: EXISTENCE+POSITIVITY" in result.output
        assert "lower-bound violations:" in result.output
        assert (out / "ensemble.txt").is_file()
        assert (out / "ensemble.kv").is_file()
        assert (out / "path_0000.txt").is_file()
        assert (out / "path_0001.txt").is_file()
        assert not (out / "path_0002.txt").exists()

    def test_rerun_is_byte_identical_and_seed_changes_bytes(self, runner,
                                                            tmp_path):
        out = tmp_path / "out"
        cfg = write_config(tmp_path / "run.ini", KERNELS, MODEL, SIM,
                           outdir=out)
        assert runner.invoke(main, ["simulate", "--config",
                                    str(cfg)]).exit_code == 0
        first = snapshot(out)
        assert runner.invoke(main, ["simulate", "--config",
                                    str(cfg)]).exit_code == 0
        assert snapshot(out) == first

        assert runner.invoke(main, ["simulate", "--config", str(cfg),
                                    "--seed", "99"]).exit_code == 0
        reseeded = snapshot(out)
        assert reseeded["ensemble.kv"] != first["ensemble.kv"]
        assert reseeded["path_0000.txt"] != first["path_0000.txt"]

    def test_gate_blocks_unless_forced(self, runner, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(tmp_path / "run.ini", KERNELS,
                           MODEL_EMPTY_HISTORY, SIM, outdir=out)
        result = runner.invoke(main, ["simulate", "--config", str(cfg)])
        assert result.exit_code == 3
        assert "gate:" in result.stderr
        assert not (out / "ensemble.txt").exists()

        forced = runner.invoke(main, ["simulate", "--config", str(cfg),
                                      "--force"])
        assert forced.exit_code == 0, forced.output
        assert "verdict: NEITHER" in forced.output
        assert "verdict=NEITHER" in (out / "ensemble.kv").read_text()


class TestFeatures:
    def test_matches_golden_file(self, runner, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(
            tmp_path / "run.ini",
            "[kernel1]\nfamily = exp\nlam = 10.0\n",
            "[kernel2]\nfamily = tspl\nalpha = 1.2\ndelta = 0.24\n",
            f"[data]\nprices = {DEMO / 'sample_prices_30.csv'}\n",
            outdir=out)
        result = runner.invoke(main, ["features", "--config", str(cfg)])
        assert result.exit_code == 0, result.output
        got = (out / "features.txt").read_text().splitlines()
        want = (DEMO / "features_golden_30.txt").read_text().splitlines()
        assert got[0] == want[0] == "date R1 R2"
        assert len(got) == len(want) == 31
        for line_got, line_want in zip(got[1:], want[1:]):
            date_got, *vals_got = line_got.split()
            date_want, *vals_want = line_want.split()
            assert date_got == date_want
            np.testing.assert_allclose([float(v) for v in vals_got],
                                       [float(v) for v in vals_want],
                                       rtol=1e-10, atol=1e-10)

    def test_method_flag_reruns_identically(self, runner, tmp_path,
                                            tiny_market):
        root, _ = tiny_market
        out = tmp_path / "out"
        cfg = write_config(tmp_path / "run.ini", KERNELS,
                           f"[data]\nprices = {root / 'prices.csv'}\n",
                           outdir=out)
        assert runner.invoke(main, ["features", "--config", str(cfg),
                                    "--method", "recursion"]).exit_code == 0
        recursion = (out / "features.txt").read_bytes()
        assert runner.invoke(main, ["features", "--config", str(cfg),
                                    "--method", "direct"]).exit_code == 0
        direct = (out / "features.txt").read_text().splitlines()
        rec = recursion.decode().splitlines()
        for line_a, line_b in zip(rec[1:], direct[1:]):
            np.testing.assert_allclose(
                [float(v) for v in line_a.split()[1:]],
                [float(v) for v in line_b.split()[1:]], rtol=0, atol=1e-15)

    def test_missing_prices_section_exits_one(self, runner, tmp_path):
        cfg = write_config(tmp_path / "run.ini", KERNELS,
                           outdir=tmp_path / "out")
        result = runner.invoke(main, ["features", "--config", str(cfg)])
        assert result.exit_code == 1
        assert "error:" in result.stderr


class TestCalibrate:
    def calib_block(self, **extra) -> str:
        lines = ["[calib]", "choice = exp/exp", "n_starts = 2",
                 "max_iter = 60", "label = tiny"]
        lines += [f"{key} = {value}" for key, value in extra.items()]
        return "\n".join(lines) + "\n"

    def test_recovers_generator(self, runner, tmp_path, tiny_market):
        out = tmp_path / "out"
        cfg = write_config(tmp_path / "run.ini", data_block(tiny_market),
                           self.calib_block(), outdir=out)
        result = runner.invoke(main, ["calibrate", "--config", str(cfg)])
        assert result.exit_code == 0, result.output
        assert "train R2:" in result.output
        kv = dict(line.split("=", 1) for line in
                  (out / "calibration.kv").read_text().splitlines())
        assert float(kv["train_r2"]) > 0.999
        assert float(kv["test_r2"]) > 0.99
        assert (out / "calibration.txt").is_file()

    def test_threads_flag_never_changes_results(self, runner, tmp_path,
                                                tiny_market):
        out1, out2 = tmp_path / "one", tmp_path / "two"
        cfg = write_config(tmp_path / "run.ini", data_block(tiny_market),
                           self.calib_block(), outdir=out1)
        assert runner.invoke(main, ["calibrate", "--config",
                                    str(cfg)]).exit_code == 0
        assert runner.invoke(main, ["calibrate", "--config", str(cfg),
                                    "--threads", "2", "--out",
                                    str(out2)]).exit_code == 0
        assert (out1 / "calibration.kv").read_bytes() == \
            (out2 / "calibration.kv").read_bytes()

    def test_missing_calib_section_exits_one(self, runner, tmp_path,
                                             tiny_market):
        cfg = write_config(tmp_path / "run.ini", data_block(tiny_market),
                           outdir=tmp_path / "out")
        result = runner.invoke(main, ["calibrate", "--config", str(cfg)])
        assert result.exit_code == 1
        assert "error:" in result.stderr


class TestReport:
    def test_compares_all_four_choices(self, runner, tmp_path, tiny_market):
        out = tmp_path / "out"
        calib = ("[calib]\nchoice = exp/exp\n"
                 "choices = exp/exp, exp/tspl, tspl/tspl, combo/combo\n"
                 "n_starts = 2\nmax_iter = 25\nlabel = tiny\n")
        cfg = write_config(tmp_path / "run.ini", data_block(tiny_market),
                           calib, outdir=out)
        result = runner.invoke(main, ["report", "--config", str(cfg)])
        assert result.exit_code == 0, result.output
        table = (out / "comparison.txt").read_text().splitlines()
        rows = [line for line in table if line.count("/") >= 1]
        assert len(rows) == 4
        frame = pd.read_csv(out / "comparison.csv")
        assert frame.shape[0] == 4
        assert {"choice", "train_r2", "test_r2"} <= set(frame.columns)
        for slug in ("exp_exp", "exp_tspl", "tspl_tspl", "combo_combo"):
            assert (out / f"calibration_{slug}.kv").is_file()


class TestErrors:
    def test_missing_config_file(self, runner, tmp_path):
        result = runner.invoke(main, ["check", "--config",
                                      str(tmp_path / "nope.ini")])
        assert result.exit_code == 1
        assert "error:" in result.stderr

    def test_out_flag_is_cwd_relative(self, runner, tmp_path):
        cfg = write_config(tmp_path / "run.ini", KERNELS, MODEL,
                           outdir=tmp_path / "unused")
        with runner.isolated_filesystem(temp_dir=tmp_path) as cwd:
            result = runner.invoke(main, ["check", "--config", str(cfg),
                                          "--out", "elsewhere"])
            assert result.exit_code == 0
            assert (Path(cwd) / "elsewhere" / "assumptions.txt").is_file()

    def test_missing_data_file_exits_one(self, runner, tmp_path):
        cfg = write_config(tmp_path / "run.ini", KERNELS,
                           f"[data]\nprices = {tmp_path / 'absent.csv'}\n",
                           outdir=tmp_path / "out")
        result = runner.invoke(main, ["features", "--config", str(cfg)])
        assert result.exit_code == 1
        assert "does not exist" in result.stderr


class TestHelp:
    @pytest.mark.parametrize("command", ["check", "simulate", "features",
                                         "calibrate", "report", "serve"])
    def test_subcommand_help_exits_zero(self, runner, command):
        result = runner.invoke(main, [command, "--help"])
        assert result.exit_code == 0
        if command == "serve":
            assert "--port" in result.output
        else:
            assert "--config" in result.output
            assert "--out" in result.output
            assert "--seed" in result.output
            assert "--threads" in result.output
        if command == "simulate":
            assert "--force" in result.output
        if command == "check":
            assert "--horizon" in result.output
        if command == "features":
            assert "--method" in result.output

    def test_group_help_lists_subcommands(self, runner):
        result = runner.invoke(main, ["--help"])
        assert result.exit_code == 0
        for command in ("check", "simulate", "features", "calibrate",
                        "report", "serve"):
            assert command in result.output
