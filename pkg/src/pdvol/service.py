"""HTTP service exposing the library over JSON.

Plain handler functions (``run_check``, ``run_simulate``, ``run_features``,
``run_calibrate``) accept and return pydantic models, so they are usable
without a web server; :func:`create_app` wraps them in a FastAPI app with
one POST route each plus ``GET /health``.

JSON cannot carry infinities, so an absent/null ``cutoff`` or ``delta``
means "infinite" in requests, and infinite values serialize back as null.
"""

from __future__ import annotations

import math
from typing import Literal

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field, model_validator

from pdvol.assumptions import AssumptionReport, full_report
from pdvol.calibrate import (
    CalibrationError,
    CalibrationSpec,
    calibrate,
)
from pdvol.features import (
    DataError,
    MarketDataset,
    PriceSeries,
    compute_features,
)
from pdvol.kernels import Kernel, KernelError, kernel_from_dict
from pdvol.model import HistorySegment, ModelParams
from pdvol.simulate import GateError, SimConfig, monte_carlo

import pandas as pd

__all__ = [
    "KernelModel", "HistoryModel", "ModelSpec", "SimSettings",
    "CheckRequest", "CheckResponse", "SimulateRequest", "SimulateResponse",
    "FeaturesRequest", "FeaturesResponse", "CalibrateRequest",
    "CalibrateResponse",
    "run_check", "run_simulate", "run_features", "run_calibrate",
    "create_app",
]


def _none_if_inf(x: float) -> float | None:
    return None if x is None or not math.isfinite(x) else float(x)


# ---------------------------------------------------------------------------
# Shared request fragments


class KernelModel(BaseModel):
    """One kernel; unused parameter fields stay null."""

    family: Literal["exp", "tspl", "combo", "shifted_power"]
    lam: float | None = None
    alpha: float | None = None
    delta: float | None = None
    theta: float | None = None
    lam_a: float | None = None
    lam_b: float | None = None
    a: float | None = None
    cutoff: float | None = None  # null means infinite support

    def build(self) -> Kernel:
        data = {k: v for k, v in self.model_dump().items()
                if v is not None and k != "cutoff"}
        data["cutoff"] = math.inf if self.cutoff is None else self.cutoff
        return kernel_from_dict(data)

    @classmethod
    def from_kernel(cls, kernel: Kernel) -> "KernelModel":
        data = {k: float(v) for k, v in kernel.__dict__.items()
                if k in cls.model_fields and k != "cutoff"}
        return cls(family=kernel.family, cutoff=_none_if_inf(kernel.cutoff),
                   **{k: v for k, v in data.items() if k != "z"})


class HistoryModel(BaseModel):
    """Feature values on the pre-launch window.

    Exactly one shape: ``constant`` r1/r2 held over ``delta`` years, or a
    ``grid`` of (times <= 0, r1, r2).  Omit the whole object for an empty
    window.
    """

    r1: float | list[float] = 0.0
    r2: float | list[float] = 0.0
    delta: float | None = None     # null: infinite window (constant form)
    times: list[float] | None = None

    def build(self) -> HistorySegment:
        if self.times is not None:
            return HistorySegment.from_grid(self.times, self.r1, self.r2)
        delta = math.inf if self.delta is None else self.delta
        if delta == 0.0:
            return HistorySegment.empty()
        return HistorySegment.constant_segment(float(self.r1),
                                               float(self.r2), delta)


class ModelSpec(BaseModel):
    beta0: float
    beta1: float
    beta2: float
    s0: float = 1.0

    def build(self, k1: Kernel, k2: Kernel,
              history: HistorySegment) -> ModelParams:
        return ModelParams(beta0=self.beta0, beta1=self.beta1,
                           beta2=self.beta2, k1=k1, k2=k2, s0=self.s0,
                           delta=history.delta)


class CheckEntryModel(BaseModel):
    check_id: str
    status: str
    margin: float | None
    value: float | None
    witness: dict[str, bool | float | str | list[float]]
    note: str
    boundary: bool


def _witness_value(v):
    if isinstance(v, (str, bool)):
        return v
    if isinstance(v, (list, tuple, np.ndarray)):
        return [float(x) for x in v]
    return float(v)


def _report_entries(report: AssumptionReport) -> list[CheckEntryModel]:
    out = []
    for cid, e in report.entries.items():
        witness = {k: _witness_value(v) for k, v in e.witness.items()}
        out.append(CheckEntryModel(check_id=cid, status=e.status,
                                   margin=_none_if_inf(e.margin)
                                   if e.margin is not None else None,
                                   value=_none_if_inf(e.value)
                                   if e.value is not None else None,
                                   witness=witness, note=e.note,
                                   boundary=e.boundary))
    return out


# ---------------------------------------------------------------------------
# /check


class CheckRequest(BaseModel):
    kernel1: KernelModel
    kernel2: KernelModel
    model: ModelSpec
    history: HistoryModel | None = None
    horizon: float = Field(default=1.0, gt=0.0)


class CheckResponse(BaseModel):
    verdict: str
    alpha1: float | None
    alpha2: float | None
    gamma: float | None
    holder_exponent: float | None
    entries: list[CheckEntryModel]


def run_check(request: CheckRequest) -> CheckResponse:
    k1, k2 = request.kernel1.build(), request.kernel2.build()
    history = (request.history or HistoryModel(delta=0.0)).build()
    params = request.model.build(k1, k2, history)
    report = full_report(params, history, request.horizon)
    return CheckResponse(verdict=report.verdict,
                         alpha1=report.alpha1, alpha2=report.alpha2,
                         gamma=report.gamma,
                         holder_exponent=report.holder_exponent,
                         entries=_report_entries(report))


# ---------------------------------------------------------------------------
# /simulate


class SimSettings(BaseModel):
    horizon: float = Field(gt=0.0)
    n_paths: int = Field(default=1, ge=1)
    steps_per_year: int = Field(default=2520, ge=1)
    seed: int = 0
    scheme: str = "MarkovRecursion"
    r2_floor: float = Field(default=1e-12, ge=0.0)
    g1_mode: Literal["sampled", "zero"] = "sampled"
    bound_tol_mult: float = 10.0
    report_horizons: list[float] | None = None
    chunk_size: int = Field(default=256, ge=1)
    threads: int = Field(default=1, ge=1)
    markov_approx_terms: int | None = Field(default=None, ge=2, le=8)

    def build(self) -> SimConfig:
        horizons = None if self.report_horizons is None \
            else tuple(self.report_horizons)
        return SimConfig(horizon=self.horizon, n_paths=self.n_paths,
                         steps_per_year=self.steps_per_year, seed=self.seed,
                         scheme=self.scheme, r2_floor=self.r2_floor,
                         g1_mode=self.g1_mode,
                         bound_tol_mult=self.bound_tol_mult,
                         report_horizons=horizons,
                         chunk_size=self.chunk_size, threads=self.threads,
                         markov_approx_terms=self.markov_approx_terms)


class SimulateRequest(BaseModel):
    kernel1: KernelModel
    kernel2: KernelModel
    model: ModelSpec
    history: HistoryModel | None = None
    sim: SimSettings
    force: bool = False
    keep_paths: int = Field(default=0, ge=0, le=64)


class PathModel(BaseModel):
    path_index: int
    times: list[float]
    r1: list[float]
    r2: list[float]
    sigma: list[float]
    s: list[float]
    x: list[float] | None
    events: dict[str, bool | float | str | None]


class HorizonStats(BaseModel):
    horizon: float
    sigma: dict[str, float]
    s: dict[str, float]


class SimulateResponse(BaseModel):
    verdict: str
    scheme: str
    g1_mode: str
    n_paths: int
    n_steps: int
    dt: float
    stats: list[HorizonStats]
    floor_hits: int
    bound_violations: int | None
    min_sigma_minus_x: float | None
    min_r2: float
    aborted: int
    abort_examples: list[tuple[int, int]]
    x_available: bool
    paths: list[PathModel]


def run_simulate(request: SimulateRequest) -> SimulateResponse:
    k1, k2 = request.kernel1.build(), request.kernel2.build()
    history = (request.history or HistoryModel(delta=0.0)).build()
    params = request.model.build(k1, k2, history)
    config = request.sim.build()
    # Run the entry check up front so forced runs still record the verdict.
    report = full_report(params, history, config.horizon)
    summary = monte_carlo(params, history, config,
                          force=request.force, gate_report=report,
                          keep_paths=request.keep_paths)
    stats = [HorizonStats(horizon=h,
                          sigma={k: float(v) for k, v in
                                 summary.stats["sigma"][i].items()},
                          s={k: float(v) for k, v in
                             summary.stats["S"][i].items()})
             for i, h in enumerate(summary.horizons)]
    paths = [PathModel(path_index=p.path_index,
                       times=p.times.tolist(), r1=p.r1.tolist(),
                       r2=p.r2.tolist(), sigma=p.sigma.tolist(),
                       s=p.s.tolist(),
                       x=None if p.x is None else p.x.tolist(),
                       events={k: (v if v is None or isinstance(v, (str, bool))
                                   else float(v))
                               for k, v in p.events.items()})
             for p in summary.paths]
    return SimulateResponse(
        verdict=summary.verdict or "UNCHECKED", scheme=summary.scheme,
        g1_mode=summary.g1_mode, n_paths=summary.n_paths,
        n_steps=summary.n_steps, dt=summary.dt, stats=stats,
        floor_hits=summary.floor_hits,
        bound_violations=summary.bound_violations,
        min_sigma_minus_x=summary.min_sigma_minus_x,
        min_r2=summary.min_r2, aborted=summary.aborted,
        abort_examples=[(int(a), int(b)) for a, b in summary.abort_examples],
        x_available=summary.x_available, paths=paths)


# ---------------------------------------------------------------------------
# /features


class FeaturesRequest(BaseModel):
    kernel1: KernelModel
    kernel2: KernelModel
    returns: list[float] | None = None
    prices: list[float] | None = None
    dates: list[str] | None = None
    method: Literal["auto", "recursion", "direct", "fft"] = "auto"
    cutoff_days: int | None = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _one_input(self):
        if (self.returns is None) == (self.prices is None):
            raise ValueError("provide exactly one of returns or prices")
        return self


class FeaturesResponse(BaseModel):
    dates: list[str]
    r1: list[float]
    r2: list[float]


def run_features(request: FeaturesRequest) -> FeaturesResponse:
    if request.prices is not None:
        prices = np.asarray(request.prices, dtype=float)
        if prices.size < 2 or np.any(prices <= 0.0):
            raise DataError("prices must be positive with >= 2 entries")
        returns = prices[1:] / prices[:-1] - 1.0
        dates = request.dates[1:] if request.dates else None
    else:
        returns = np.asarray(request.returns, dtype=float)
        dates = request.dates
    index = None if dates is None else pd.DatetimeIndex(
        pd.to_datetime(dates, format="ISO8601"))
    if index is not None and len(index) != returns.size:
        raise DataError("dates and values differ in length")
    feats = compute_features(returns, request.kernel1.build(),
                             request.kernel2.build(), dates=index,
                             method=request.method,
                             cutoff_days=request.cutoff_days)
    return FeaturesResponse(
        dates=[d.date().isoformat() for d in feats.dates],
        r1=feats.r1.tolist(), r2=feats.r2.tolist())


# ---------------------------------------------------------------------------
# /calibrate


class SeriesModel(BaseModel):
    dates: list[str]
    values: list[float]

    @model_validator(mode="after")
    def _same_length(self):
        if len(self.dates) != len(self.values):
            raise ValueError("dates and values differ in length")
        return self


class CalibrateSettings(BaseModel):
    choice: Literal["exp/exp", "tspl/tspl", "combo/combo", "exp/tspl"] \
        = "exp/exp"
    beta0_min: float = 0.0
    beta2_min: float = 0.0
    beta1_max: float = 1.0
    kappa: float | None = Field(default=None, ge=0.0)
    n_starts: int = Field(default=8, ge=1)
    max_iter: int = Field(default=600, ge=1)
    feature_method: Literal["auto", "recursion", "direct", "fft"] = "auto"
    cutoff_days: int | None = Field(default=None, ge=1)
    use_log_returns: bool = False
    label: str = "data"

    def build(self) -> CalibrationSpec:
        return CalibrationSpec(families=self.choice,
                               beta0_min=self.beta0_min,
                               beta2_min=self.beta2_min,
                               beta1_max=self.beta1_max, kappa=self.kappa,
                               n_starts=self.n_starts,
                               max_iter=self.max_iter,
                               feature_method=self.feature_method,
                               cutoff_days=self.cutoff_days,
                               use_log_returns=self.use_log_returns,
                               label=self.label)


class CalibrateRequest(BaseModel):
    prices: SeriesModel
    proxy: SeriesModel
    split_date: str
    settings: CalibrateSettings = CalibrateSettings()
    seed: int = 0
    threads: int = Field(default=1, ge=1)


class CalibrateResponse(BaseModel):
    choice: str
    label: str
    kernel1: KernelModel
    kernel2: KernelModel
    kernel_params: dict[str, float]
    beta: list[float]
    beta_active: list[bool]
    kappa: float
    objective: float
    train_r2: float
    test_r2: float
    train_sst_zero: bool
    test_sst_zero: bool
    rank_deficient: bool
    n_train: int
    n_test: int
    dropped: int
    ratio: float | None
    ratio_label: str | None
    ratio_pass: bool | None
    best_start: int
    evaluations: int


def _price_series(series: SeriesModel) -> PriceSeries:
    dates = pd.DatetimeIndex(pd.to_datetime(series.dates, format="ISO8601"))
    prices = np.asarray(series.values, dtype=float)
    if np.any(prices <= 0.0):
        raise DataError("prices must be positive")
    if dates.size < 2:
        raise DataError("need at least two price rows")
    if not dates.is_monotonic_increasing or dates.has_duplicates:
        raise DataError("price dates must be strictly increasing")
    return PriceSeries(dates=dates, prices=prices)


def run_calibrate(request: CalibrateRequest) -> CalibrateResponse:
    prices = _price_series(request.prices)
    proxy_dates = pd.DatetimeIndex(pd.to_datetime(request.proxy.dates,
                                                  format="ISO8601"))
    data = MarketDataset(prices=prices, proxy_dates=proxy_dates,
                         proxy=np.asarray(request.proxy.values, dtype=float),
                         split_date=pd.Timestamp(request.split_date))
    result = calibrate(data, request.settings.build(), seed=request.seed,
                       threads=request.threads)
    return CalibrateResponse(
        choice=result.spec.families, label=result.spec.label,
        kernel1=KernelModel.from_kernel(result.k1),
        kernel2=KernelModel.from_kernel(result.k2),
        kernel_params=result.kernel_params,
        beta=result.beta.tolist(), beta_active=list(result.beta_active),
        kappa=result.spec.ridge, objective=result.objective_value,
        train_r2=result.train_r2, test_r2=result.test_r2,
        train_sst_zero=result.train_sst_zero,
        test_sst_zero=result.test_sst_zero,
        rank_deficient=result.rank_deficient,
        n_train=result.n_train, n_test=result.n_test, dropped=result.dropped,
        ratio=result.ratio, ratio_label=result.ratio_label,
        ratio_pass=result.ratio_pass, best_start=result.best_start,
        evaluations=sum(t.evaluations for t in result.trace))


# ---------------------------------------------------------------------------
# App


def create_app() -> FastAPI:
    app = FastAPI(title="pdvol", description="Path-dependent volatility "
                  "model: condition checks, simulation, features, "
                  "calibration.")

    @app.exception_handler(GateError)
    async def _gate(request: Request, exc: GateError):
        return JSONResponse(status_code=409, content={
            "detail": str(exc), "verdict": exc.report.verdict})

    @app.exception_handler(KernelError)
    @app.exception_handler(DataError)
    @app.exception_handler(CalibrationError)
    @app.exception_handler(ValueError)
    async def _bad_request(request: Request, exc: Exception):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health")
    def health() -> dict[str, str]:
        return {"status": "ok"}

    @app.post("/check", response_model=CheckResponse)
    def check(request: CheckRequest) -> CheckResponse:
        return run_check(request)

    @app.post("/simulate", response_model=SimulateResponse)
    def simulate(request: SimulateRequest) -> SimulateResponse:
        return run_simulate(request)

    @app.post("/features", response_model=FeaturesResponse)
    def features(request: FeaturesRequest) -> FeaturesResponse:
        return run_features(request)

    @app.post("/calibrate", response_model=CalibrateResponse)
    def calibrate_route(request: CalibrateRequest) -> CalibrateResponse:
        return run_calibrate(request)

    return app
