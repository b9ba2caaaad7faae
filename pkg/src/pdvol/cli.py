"""Command-line entry point.

Subcommands: ``check``, ``simulate``, ``features``, ``calibrate``,
``report``, ``serve``.  Each reads a sectioned key-value config file
(``--config``) and writes plain-text artifacts into the output directory;
rerunning with the same config overwrites byte-identical files (seeds are
fixed and timestamps go only to the ``run.log`` sidecar).

Exit codes: 0 success (for ``check``: both existence and positivity
guaranteed), 2 existence only, 3 neither guarantee, 1 configuration or
data errors.
"""

from __future__ import annotations

import dataclasses
import datetime
import os

import click

from pdvol.assumptions import VERDICT_BOTH, VERDICT_EXISTENCE, full_report
from pdvol.calibrate import (
    CalibrationError,
    calibrate,
    report as comparison_table,
    report_delimited,
)
from pdvol.features import DataError, MarketDataset, compute_features, \
    load_prices, load_proxy
from pdvol.kernels import KernelError
from pdvol.runconfig import ConfigError, RunConfig, load_config
from pdvol.simulate import GateError, monte_carlo

EXIT_BOTH = 0
EXIT_EXISTENCE = 2
EXIT_NEITHER = 3
EXIT_CONFIG = 1

_CONFIG_ERRORS = (ConfigError, DataError, KernelError, CalibrationError,
                  ValueError)


def _write(outdir: str, name: str, content: str) -> str:
    path = os.path.join(outdir, name)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(content)
    return path


def _log(outdir: str, message: str) -> None:
    stamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
    with open(os.path.join(outdir, "run.log"), "a", encoding="utf-8") as fh:
        fh.write(f"{stamp} {message}\n")


def _load(config: str, seed: int | None, out: str | None,
          threads: int) -> RunConfig:
    try:
        return load_config(config, seed=seed, out=out, threads=threads)
    except _CONFIG_ERRORS as exc:
        raise click.exceptions.Exit(_fail(str(exc)))


def _fail(message: str) -> int:
    click.echo(f"error: {message}", err=True)
    return EXIT_CONFIG


def _verdict_exit(verdict: str) -> int:
    if verdict == VERDICT_BOTH:
        return EXIT_BOTH
    if verdict == VERDICT_EXISTENCE:
        return EXIT_EXISTENCE
    return EXIT_NEITHER


def common_options(fn):
    fn = click.option("--config", "config_path", required=True,
                      type=click.Path(), metavar="PATH",
                      help="Run configuration file.")(fn)
    fn = click.option("--out", "out_dir", default=None, metavar="DIR",
                      help="Output directory (overrides [output] dir).")(fn)
    fn = click.option("--seed", default=None, type=int, metavar="N",
                      help="Seed override for stochastic steps.")(fn)
    fn = click.option("--threads", default=1, type=int, metavar="N",
                      show_default=True,
                      help="Worker cap; never changes results.")(fn)
    return fn


@click.group()
def main() -> None:
    """Path-dependent volatility toolkit: checks, simulation, features,
    calibration, comparison reports, and an HTTP service."""


@main.command()
@common_options
@click.option("--horizon", default=1.0, show_default=True,
              help="Window end for the condition scan, in years.")
def check(config_path, out_dir, seed, threads, horizon) -> None:
    """Verify the existence/positivity conditions and write the report."""
    cfg = _load(config_path, seed, out_dir, threads)
    try:
        cfg.require("kernels", "model")
        report = full_report(cfg.model, cfg.history, horizon)
    except _CONFIG_ERRORS as exc:
        raise click.exceptions.Exit(_fail(str(exc)))
    _write(cfg.outdir, "assumptions.txt", report.to_text())
    _write(cfg.outdir, "assumptions.kv", report.to_kv())
    _log(cfg.outdir, f"check verdict={report.verdict}")
    click.echo(f"verdict: {report.verdict}")
    click.echo(f"wrote {cfg.outdir}/assumptions.txt")
    raise click.exceptions.Exit(_verdict_exit(report.verdict))


@main.command()
@common_options
@click.option("--force", is_flag=True,
              help="Run even when the condition gate fails.")
def simulate(config_path, out_dir, seed, threads, force) -> None:
    """Simulate the volatility and price system; write paths + summary."""
    cfg = _load(config_path, seed, out_dir, threads)
    try:
        cfg.require("kernels", "model", "sim")
        report = full_report(cfg.model, cfg.history, cfg.sim.horizon)
        summary = monte_carlo(cfg.model, cfg.history, cfg.sim, force=force,
                              gate_report=report,
                              keep_paths=min(cfg.dump_paths,
                                             cfg.sim.n_paths))
    except GateError as exc:
        click.echo(f"gate: {exc}", err=True)
        raise click.exceptions.Exit(EXIT_NEITHER)
    except _CONFIG_ERRORS as exc:
        raise click.exceptions.Exit(_fail(str(exc)))
    _write(cfg.outdir, "ensemble.txt", summary.to_text())
    _write(cfg.outdir, "ensemble.kv", summary.to_kv())
    for path in summary.paths:
        _write(cfg.outdir, f"path_{path.path_index:04d}.txt", path.to_text())
    _log(cfg.outdir, f"simulate n_paths={summary.n_paths} "
                     f"scheme={summary.scheme}")
    click.echo(f"paths: {summary.n_paths}  scheme: {summary.scheme}  "
               f"verdict: {summary.verdict or 'UNCHECKED'}")
    click.echo(f"floor hits: {summary.floor_hits}  aborted: "
               f"{summary.aborted}")
    if summary.x_available:
        click.echo(f"lower-bound violations: {summary.bound_violations}  "
                   f"min(sigma - X): {summary.min_sigma_minus_x:.6g}")
    click.echo(f"wrote {cfg.outdir}/ensemble.txt")


@main.command()
@common_options
@click.option("--method", default="auto", show_default=True,
              type=click.Choice(["auto", "recursion", "direct", "fft"]),
              help="Feature computation route.")
def features(config_path, out_dir, seed, threads, method) -> None:
    """Compute kernel-weighted return features for a price file."""
    cfg = _load(config_path, seed, out_dir, threads)
    try:
        cfg.require("kernels", "prices")
        series = load_prices(cfg.prices_path, cfg.date_column,
                             cfg.price_column, cfg.delimiter)
        cutoff = cfg.calib.cutoff_days if cfg.calib else None
        feats = compute_features(series.returns, cfg.k1, cfg.k2,
                                 dates=series.return_dates, method=method,
                                 cutoff_days=cutoff)
    except _CONFIG_ERRORS as exc:
        raise click.exceptions.Exit(_fail(str(exc)))
    _write(cfg.outdir, "features.txt", feats.to_text())
    _log(cfg.outdir, f"features rows={feats.r1.size}")
    click.echo(f"rows: {feats.r1.size}")
    click.echo(f"wrote {cfg.outdir}/features.txt")


def _dataset(cfg: RunConfig) -> MarketDataset:
    cfg.require("prices", "proxy", "split")
    series = load_prices(cfg.prices_path, cfg.date_column, cfg.price_column,
                         cfg.delimiter)
    proxy_dates, proxy = load_proxy(cfg.proxy_path, cfg.date_column,
                                    cfg.vol_column, cfg.delimiter)
    return MarketDataset(prices=series, proxy_dates=proxy_dates, proxy=proxy,
                         split_date=cfg.split_date)


@main.command(name="calibrate")
@common_options
def calibrate_cmd(config_path, out_dir, seed, threads) -> None:
    """Fit betas and kernel parameters to the configured proxy series."""
    cfg = _load(config_path, seed, out_dir, threads)
    try:
        cfg.require("calib")
        data = _dataset(cfg)
        result = calibrate(data, cfg.calib,
                           seed=cfg.sim.seed if cfg.sim else (seed or 0),
                           threads=threads)
    except _CONFIG_ERRORS as exc:
        raise click.exceptions.Exit(_fail(str(exc)))
    _write(cfg.outdir, "calibration.txt", result.to_text())
    _write(cfg.outdir, "calibration.kv", result.to_kv())
    _log(cfg.outdir, f"calibrate choice={result.spec.families}")
    click.echo(f"train R2: {result.train_r2:.6f}  test R2: "
               f"{result.test_r2:.6f}")
    click.echo(f"wrote {cfg.outdir}/calibration.txt")


@main.command(name="report")
@common_options
def report_cmd(config_path, out_dir, seed, threads) -> None:
    """Calibrate every configured kernel choice and write the comparison."""
    cfg = _load(config_path, seed, out_dir, threads)
    try:
        cfg.require("calib")
        data = _dataset(cfg)
        results = []
        for choice in cfg.choices:
            spec = dataclasses.replace(cfg.calib, families=choice)
            results.append(calibrate(data, spec,
                                     seed=cfg.sim.seed if cfg.sim
                                     else (seed or 0),
                                     threads=threads))
    except _CONFIG_ERRORS as exc:
        raise click.exceptions.Exit(_fail(str(exc)))
    _write(cfg.outdir, "comparison.txt", comparison_table(results))
    _write(cfg.outdir, "comparison.csv", report_delimited(results))
    for result in results:
        slug = result.spec.families.replace("/", "_")
        _write(cfg.outdir, f"calibration_{slug}.kv", result.to_kv())
    _log(cfg.outdir, f"report choices={','.join(cfg.choices)}")
    click.echo(comparison_table(results), nl=False)
    click.echo(f"wrote {cfg.outdir}/comparison.txt")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(host, port) -> None:
    """Run the HTTP service (see GET /docs once it is up)."""
    import uvicorn

    from pdvol.service import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
