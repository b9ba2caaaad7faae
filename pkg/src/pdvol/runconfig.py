"""Sectioned key-value run configuration for the command-line tool.

Format: INI-style text.  Sections used per subcommand:

* ``[kernel1]`` / ``[kernel2]`` — kernel descriptions (``family=exp`` plus
  that family's parameters; ``cutoff=inf`` allowed).
* ``[model]`` — ``beta0,beta1,beta2``, ``s0``, ``delta``, and the history
  window: either ``history=FILE`` (columnar ``time r1 r2``, times ending
  at 0) or the constant shortcut ``history_r1=``/``history_r2=``.
* ``[sim]`` — ``horizon``, ``steps_per_year``, ``n_paths``, ``seed``,
  ``scheme``, ``g1_mode``, ``r2_floor``, ``chunk_size``,
  ``markov_approx_terms``, ``dump_paths``.
* ``[data]`` — ``prices=CSV``, ``proxy=CSV``, ``split=YYYY-MM-DD``, plus
  optional column names and ``delimiter``.
* ``[calib]`` — the calibration settings (``choice``, ``choices`` for the
  comparison report, ``kappa``, bounds, search budget ...).
* ``[output]`` — ``dir``.

Referenced files must exist when the config is loaded; the output
directory is created.  All loading problems raise :class:`ConfigError`,
which the CLI maps to exit code 1.
"""

from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass

import numpy as np

from pdvol.calibrate import CalibrationError, CalibrationSpec, FAMILY_CHOICES
from pdvol.kernels import Kernel, KernelError, kernel_from_dict
from pdvol.model import HistorySegment, ModelParams
from pdvol.simulate import SimConfig, SimulationError

__all__ = ["ConfigError", "RunConfig", "load_config"]


class ConfigError(ValueError):
    """Configuration cannot be loaded; message names the offending key."""


@dataclass(frozen=True)
class RunConfig:
    """Typed view of a run configuration file."""

    path: str
    outdir: str
    k1: Kernel | None
    k2: Kernel | None
    model: ModelParams | None
    history: HistorySegment | None
    sim: SimConfig | None
    dump_paths: int
    prices_path: str | None
    proxy_path: str | None
    split_date: str | None
    date_column: str
    price_column: str
    vol_column: str
    delimiter: str
    calib: CalibrationSpec | None
    choices: tuple[str, ...]

    def require(self, *names: str) -> None:
        """Raise :class:`ConfigError` when a needed piece is missing."""
        sections = {"kernels": ("k1", "[kernel1]/[kernel2]"),
                    "model": ("model", "[model]"),
                    "sim": ("sim", "[sim]"),
                    "prices": ("prices_path", "[data] prices"),
                    "proxy": ("proxy_path", "[data] proxy"),
                    "split": ("split_date", "[data] split"),
                    "calib": ("calib", "[calib]")}
        for name in names:
            attr, label = sections[name]
            if getattr(self, attr) is None:
                raise ConfigError(f"{self.path}: missing {label} "
                                  f"(required by this subcommand)")


def _float(section, key, default=None):
    raw = section.get(key, None)
    if raw is None:
        if default is None:
            raise ConfigError(f"[{section.name}] is missing {key!r}")
        return default
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"[{section.name}] {key} = {raw!r} is not a number")


def _int(section, key, default):
    raw = section.get(key, None)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"[{section.name}] {key} = {raw!r} is not an integer")


def _bool(section, key, default):
    raw = section.get(key, None)
    if raw is None:
        return default
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"[{section.name}] {key} = {raw!r} is not a boolean")


def _existing(path: str, base: str, what: str) -> str:
    resolved = path if os.path.isabs(path) else \
        os.path.normpath(os.path.join(base, path))
    if not os.path.isfile(resolved):
        raise ConfigError(f"{what} file {resolved!r} does not exist")
    return resolved


def _load_history_file(path: str) -> HistorySegment:
    try:
        table = np.loadtxt(path, ndmin=2)
    except Exception as exc:
        raise ConfigError(f"history file {path!r}: {exc}")
    if table.shape[1] != 3:
        raise ConfigError(f"history file {path!r}: expected 3 columns "
                          "(time r1 r2)")
    try:
        return HistorySegment.from_grid(table[:, 0], table[:, 1], table[:, 2])
    except ValueError as exc:
        raise ConfigError(f"history file {path!r}: {exc}")


def _parse_kernels(parser, base):
    if not (parser.has_section("kernel1") and parser.has_section("kernel2")):
        if parser.has_section("kernel1") or parser.has_section("kernel2"):
            raise ConfigError("both [kernel1] and [kernel2] are required "
                              "when either is present")
        return None, None
    kernels = []
    for name in ("kernel1", "kernel2"):
        try:
            kernels.append(kernel_from_dict(dict(parser[name])))
        except (KernelError, ValueError) as exc:
            raise ConfigError(f"[{name}]: {exc}")
    return tuple(kernels)


def _parse_model(parser, k1, k2, base):
    if not parser.has_section("model"):
        return None, None
    if k1 is None:
        raise ConfigError("[model] requires [kernel1] and [kernel2]")
    sec = parser["model"]
    delta_raw = sec.get("delta", "inf").strip().lower()
    delta = math.inf if delta_raw in ("inf", "infinite") else \
        _float(sec, "delta")

    if "history" in sec:
        history = _load_history_file(_existing(sec["history"], base,
                                               "history"))
        delta = history.delta if delta_raw == "inf" else delta
    elif "history_r1" in sec or "history_r2" in sec:
        if delta <= 0.0:
            raise ConfigError("[model] constant history needs delta > 0")
        try:
            history = HistorySegment.constant_segment(
                _float(sec, "history_r1"), _float(sec, "history_r2"), delta)
        except ValueError as exc:
            raise ConfigError(f"[model] history: {exc}")
    elif delta == 0.0:
        history = HistorySegment.empty()
    else:
        raise ConfigError("[model] delta > 0 needs a history file or the "
                          "history_r1/history_r2 shortcut")
    try:
        params = ModelParams(beta0=_float(sec, "beta0"),
                             beta1=_float(sec, "beta1"),
                             beta2=_float(sec, "beta2"),
                             k1=k1, k2=k2,
                             s0=_float(sec, "s0", 1.0),
                             delta=delta)
    except ValueError as exc:
        raise ConfigError(f"[model]: {exc}")
    return params, history


def _parse_sim(parser, seed_override, threads):
    if not parser.has_section("sim"):
        return None, 1
    sec = parser["sim"]
    horizons = None
    if "report_horizons" in sec:
        try:
            horizons = tuple(float(tok) for tok in
                             sec["report_horizons"].replace(",", " ").split())
        except ValueError:
            raise ConfigError("[sim] report_horizons must be numbers")
    seed = _int(sec, "seed", 0) if seed_override is None else seed_override
    approx = _int(sec, "markov_approx_terms", 0)
    try:
        sim = SimConfig(
            horizon=_float(sec, "horizon"),
            n_paths=_int(sec, "n_paths", 1),
            steps_per_year=_int(sec, "steps_per_year", 2520),
            seed=seed,
            scheme=sec.get("scheme", "MarkovRecursion"),
            r2_floor=_float(sec, "r2_floor", 1e-12),
            g1_mode=sec.get("g1_mode", "sampled"),
            bound_tol_mult=_float(sec, "bound_tol_mult", 10.0),
            report_horizons=horizons,
            chunk_size=_int(sec, "chunk_size", 256),
            threads=threads,
            markov_approx_terms=approx if approx > 0 else None)
    except (SimulationError, ValueError) as exc:
        raise ConfigError(f"[sim]: {exc}")
    return sim, max(0, _int(sec, "dump_paths", 1))


def _parse_calib(parser, label_default):
    if not parser.has_section("calib"):
        return None, tuple(FAMILY_CHOICES)
    sec = parser["calib"]
    cutoff = _int(sec, "cutoff_days", 0)
    kappa = None if "kappa" not in sec else _float(sec, "kappa")
    try:
        spec = CalibrationSpec(
            families=sec.get("choice", "exp/exp"),
            beta0_min=_float(sec, "beta0_min", 0.0),
            beta2_min=_float(sec, "beta2_min", 0.0),
            beta1_max=_float(sec, "beta1_max", 1.0),
            kappa=kappa,
            n_starts=_int(sec, "n_starts", 8),
            max_iter=_int(sec, "max_iter", 600),
            xatol=_float(sec, "xatol", 1e-5),
            fatol=_float(sec, "fatol", 1e-12),
            feature_method=sec.get("feature_method", "auto"),
            cutoff_days=cutoff if cutoff > 0 else None,
            use_log_returns=_bool(sec, "use_log_returns", False),
            label=sec.get("label", label_default))
    except CalibrationError as exc:
        raise ConfigError(f"[calib]: {exc}")
    choices = tuple(tok.strip() for tok in
                    sec.get("choices", ",".join(FAMILY_CHOICES)).split(",")
                    if tok.strip())
    for choice in choices:
        if choice not in FAMILY_CHOICES:
            raise ConfigError(f"[calib] choices: unknown kernel choice "
                              f"{choice!r}")
    return spec, choices


def load_config(path: str, seed: int | None = None, out: str | None = None,
                threads: int = 1) -> RunConfig:
    """Parse and validate a run configuration file.

    ``seed``/``out`` override the corresponding file values (the CLI's
    ``--seed``/``--out`` flags); ``threads`` caps library parallelism
    without affecting results.
    """
    if not os.path.isfile(path):
        raise ConfigError(f"config file {path!r} does not exist")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as handle:
            parser.read_file(handle)
    except (configparser.Error, OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}")

    base = os.path.dirname(os.path.abspath(path))
    k1, k2 = _parse_kernels(parser, base)
    model, history = _parse_model(parser, k1, k2, base)
    sim, dump_paths = _parse_sim(parser, seed, threads)

    prices_path = proxy_path = split_date = None
    date_column, price_column, vol_column = "date", "price", "vol"
    delimiter = ","
    if parser.has_section("data"):
        sec = parser["data"]
        if "prices" in sec:
            prices_path = _existing(sec["prices"], base, "prices")
        if "proxy" in sec:
            proxy_path = _existing(sec["proxy"], base, "proxy")
        split_date = sec.get("split", None)
        date_column = sec.get("date_column", date_column)
        price_column = sec.get("price_column", price_column)
        vol_column = sec.get("vol_column", vol_column)
        delimiter = sec.get("delimiter", delimiter)

    label_default = os.path.splitext(os.path.basename(
        prices_path or "data"))[0]
    calib, choices = _parse_calib(parser, label_default)

    if out is not None:
        outdir = os.path.abspath(out)  # flag value: relative to the cwd
    else:
        outdir = (parser["output"].get("dir", "out")
                  if parser.has_section("output") else "out")
        if not os.path.isabs(outdir):
            outdir = os.path.normpath(os.path.join(base, outdir))
    try:
        os.makedirs(outdir, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {outdir!r}: {exc}")

    return RunConfig(path=path, outdir=outdir, k1=k1, k2=k2, model=model,
                     history=history, sim=sim, dump_paths=dump_paths,
                     prices_path=prices_path, proxy_path=proxy_path,
                     split_date=split_date, date_column=date_column,
                     price_column=price_column, vol_column=vol_column,
                     delimiter=delimiter, calib=calib, choices=choices)
