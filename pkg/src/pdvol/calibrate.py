"""Fitting the volatility equation to a dated proxy series.

Inner problem: box-constrained ridge least squares for the coefficient
vector beta over rows (1, R1, sqrt(R2)) -> proxy,

    minimize ||X b - y||^2 / n + kappa ||b||^2   s.t.  lo <= b <= hi,

solved exactly by enumerating active sets (at most 3 per coordinate:
free, at the lower bound, at the upper bound).  Outer problem: a
derivative-free Nelder-Mead search (reflection 1, expansion 2,
contraction 0.5, shrink 0.5) over log-transformed kernel parameters,
restarted from a seed-derived quasi-random point set; out-of-domain
parameter vectors score +inf.

R^2 conventions: 1 - SSE/SST with SST centered on the evaluation set's
own mean; the out-of-sample R^2 therefore centers on the test-set mean
(stated in report headers).  A zero-variance evaluation set is flagged
and scored 0 by convention.  The intercept is penalized together with
the other coefficients.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy import optimize
from scipy.stats import qmc

from pdvol.features import (
    DataError,
    MarketDataset,
    RegressionData,
    align,
    compute_features,
)
from pdvol.kernels import Exponential, ExponentialCombo, Kernel, KernelError, \
    TimeShiftedPowerLaw

__all__ = [
    "CalibrationError",
    "CalibrationSpec",
    "CalibrationResult",
    "FitResult",
    "FAMILY_CHOICES",
    "fit_betas",
    "objective",
    "calibrate",
    "report",
    "report_delimited",
]

KKT_TOL = 1e-8
DEFAULT_TSPL_RIDGE = 1e-6


class CalibrationError(RuntimeError):
    """The outer search could not produce a usable fit."""


# ---------------------------------------------------------------------------
# Kernel-family choices


@dataclass(frozen=True)
class _Family:
    """One row of the kernel-choice menu."""

    names: tuple[str, ...]           # natural-parameter names, k1 then k2
    split: int                       # how many of them belong to k1
    build1: Callable[..., Kernel]
    build2: Callable[..., Kernel]
    start_lo: tuple[float, ...]      # natural-scale multistart box
    start_hi: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.names)

    def kernels(self, params: np.ndarray) -> tuple[Kernel, Kernel]:
        v = [float(p) for p in params]
        return self.build1(*v[:self.split]), self.build2(*v[self.split:])


FAMILY_CHOICES: dict[str, _Family] = {
    "exp/exp": _Family(("lam1", "lam2"), 1, Exponential, Exponential,
                       (0.5, 0.5), (80.0, 80.0)),
    "tspl/tspl": _Family(("alpha1", "delta1", "alpha2", "delta2"), 2,
                         TimeShiftedPowerLaw, TimeShiftedPowerLaw,
                         (1.05, 0.005, 1.05, 0.005), (5.0, 1.0, 5.0, 1.0)),
    "combo/combo": _Family(("theta1", "lam_a1", "lam_b1",
                            "theta2", "lam_a2", "lam_b2"), 3,
                           ExponentialCombo, ExponentialCombo,
                           (0.15, 0.5, 0.5, 0.15, 0.5, 0.5),
                           (0.85, 80.0, 80.0, 0.85, 80.0, 80.0)),
    "exp/tspl": _Family(("lam1", "alpha2", "delta2"), 1,
                        Exponential, TimeShiftedPowerLaw,
                        (0.5, 1.05, 0.005), (80.0, 5.0, 1.0)),
}


@dataclass(frozen=True)
class CalibrationSpec:
    """What to fit and how hard to try."""

    families: str = "exp/exp"
    beta0_min: float = 0.0
    beta2_min: float = 0.0
    beta1_max: float = 1.0
    kappa: float | None = None       # None: 1e-6 for tspl/tspl, else 0
    n_starts: int = 8
    max_iter: int = 600
    xatol: float = 1e-5
    fatol: float = 1e-12
    feature_method: str = "auto"
    cutoff_days: int | None = None
    use_log_returns: bool = False
    label: str = "data"

    def __post_init__(self):
        if self.families not in FAMILY_CHOICES:
            raise CalibrationError(
                f"unknown kernel choice {self.families!r}; options: "
                f"{sorted(FAMILY_CHOICES)}")
        for name in ("beta0_min", "beta2_min", "beta1_max"):
            if math.isnan(getattr(self, name)):
                raise CalibrationError(f"{name} must not be NaN")
        if self.kappa is not None and not self.kappa >= 0.0:
            raise CalibrationError("kappa must be >= 0")
        if self.n_starts < 1:
            raise CalibrationError("n_starts must be >= 1")
        if self.max_iter < 1:
            raise CalibrationError("max_iter must be >= 1")

    @property
    def family(self) -> _Family:
        return FAMILY_CHOICES[self.families]

    @property
    def ridge(self) -> float:
        if self.kappa is not None:
            return self.kappa
        return DEFAULT_TSPL_RIDGE if self.families == "tspl/tspl" else 0.0

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([self.beta0_min, -math.inf, self.beta2_min])
        hi = np.array([math.inf, self.beta1_max, math.inf])
        if np.any(lo > hi):
            raise CalibrationError("beta bounds define an empty box")
        return lo, hi


# ---------------------------------------------------------------------------
# Inner solver


class FitResult(NamedTuple):
    beta: np.ndarray
    residual: float                  # ||Xb - y||^2 / n + kappa ||b||^2
    active: tuple[bool, bool, bool]  # which coordinates sit on a bound
    rank_deficient: bool


def _penalized_mse(design: np.ndarray, y: np.ndarray, beta: np.ndarray,
                   kappa: float) -> float:
    r = design @ beta - y
    return float(r @ r) / y.size + kappa * float(beta @ beta)


def fit_betas(design: np.ndarray, targets: np.ndarray,
              bounds: tuple[np.ndarray, np.ndarray] | None = None,
              kappa: float = 0.0) -> FitResult:
    """Exact box-constrained ridge least squares over (1, R1, sqrt R2) rows.

    Enumerates every combination of per-coordinate states (free / pinned at
    a finite bound), solves the ridge normal equations on the free set via
    a smallest-norm solve, and keeps the feasible candidate with the lowest
    penalized objective.  With at most 3 coordinates this is exact.
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(targets, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise DataError("design and targets are inconsistent")
    n, k = X.shape
    if n < k:
        raise DataError(f"need at least {k} rows, got {n}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DataError("design and targets must be finite")
    if bounds is None:
        lo, hi = np.full(k, -math.inf), np.full(k, math.inf)
    else:
        lo = np.asarray(bounds[0], dtype=float)
        hi = np.asarray(bounds[1], dtype=float)
    if np.any(lo > hi):
        raise DataError("bounds define an empty box")

    scale = math.sqrt(n)
    ridge_rows = math.sqrt(kappa) * np.eye(k) if kappa > 0.0 else None
    options = [[None] + [b for b in (lo[i], hi[i]) if math.isfinite(b)]
               for i in range(k)]
    tol = 1e-10 * max(1.0, float(np.max(np.abs(y))) if n else 1.0)

    best: FitResult | None = None
    with np.errstate(over="ignore", invalid="ignore"):
        for combo in itertools.product(*options):
            pinned = np.array([c is not None for c in combo])
            beta = np.array([0.0 if c is None else c for c in combo])
            free = ~pinned
            deficient = False
            if free.any():
                A = X[:, free] / scale
                b = (y - X[:, pinned] @ beta[pinned]) / scale
                if ridge_rows is not None:
                    A = np.vstack([A, ridge_rows[np.ix_(free, free)]])
                    b = np.concatenate([b, np.zeros(int(free.sum()))])
                sol, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
                deficient = bool(rank < int(free.sum()))
                beta[free] = sol
            if np.any(beta < lo - tol) or np.any(beta > hi + tol):
                continue
            value = _penalized_mse(X, y, np.clip(beta, lo, hi), kappa)
            if math.isfinite(value) and (best is None or value < best.residual):
                clipped = np.clip(beta, lo, hi)
                active = tuple(bool(abs(clipped[i] - lo[i]) <= tol
                                    or abs(clipped[i] - hi[i]) <= tol)
                               for i in range(k))
                best = FitResult(clipped, value, active, deficient)
    if best is None:  # every candidate overflowed (pathological scaling)
        raise DataError("least-squares candidates all overflowed; "
                        "rescale the inputs")
    return best


# ---------------------------------------------------------------------------
# Outer objective


def _returns(data: MarketDataset, spec: CalibrationSpec) -> np.ndarray:
    if spec.use_log_returns:
        return data.prices.log_returns
    return data.prices.returns


def _partitions(data: MarketDataset, spec: CalibrationSpec, k1: Kernel,
                k2: Kernel) -> tuple[RegressionData, RegressionData, int]:
    feats = compute_features(_returns(data, spec), k1, k2,
                             dates=data.prices.return_dates,
                             method=spec.feature_method,
                             cutoff_days=spec.cutoff_days)
    return align(feats, data.proxy_dates, data.proxy, data.split_date)


def objective(kernel_params, data: MarketDataset,
              spec: CalibrationSpec) -> float:
    """Train-set penalized MSE at a candidate kernel-parameter vector.

    Out-of-domain parameters (lam <= 0, alpha or delta out of range, a
    combo weight outside [0, 1]) return +inf so derivative-free search can
    step anywhere.  Test rows never enter the value.
    """
    params = np.asarray(kernel_params, dtype=float)
    if params.shape != (spec.family.dim,):
        raise CalibrationError(
            f"{spec.families} takes {spec.family.dim} kernel parameters "
            f"({', '.join(spec.family.names)})")
    if not np.all(np.isfinite(params)):
        return math.inf
    try:
        k1, k2 = spec.family.kernels(params)
        train, _, _ = _partitions(data, spec, k1, k2)
        fit = fit_betas(train.design, train.y, spec.bounds(), spec.ridge)
    except (KernelError, DataError):
        return math.inf
    return fit.residual


# ---------------------------------------------------------------------------
# Outer search


@dataclass(frozen=True)
class StartTrace:
    index: int
    start: tuple[float, ...]         # natural parameters
    final: tuple[float, ...]
    value: float
    evaluations: int
    converged: bool


@dataclass(frozen=True)
class CalibrationResult:
    spec: CalibrationSpec
    k1: Kernel
    k2: Kernel
    kernel_params: dict[str, float]
    beta: np.ndarray
    beta_active: tuple[bool, bool, bool]
    objective_value: float
    train_r2: float
    test_r2: float
    train_sst_zero: bool
    test_sst_zero: bool
    rank_deficient: bool
    n_train: int
    n_test: int
    dropped: int
    ratio: float | None              # 2*lam*delta/alpha style diagnostic
    ratio_label: str | None
    ratio_pass: bool | None
    trace: tuple[StartTrace, ...]
    best_start: int

    def to_kv(self) -> str:
        lines = [f"choice={self.spec.families}", f"label={self.spec.label}",
                 f"kappa={self.spec.ridge:.17g}"]
        lines += [f"{k}={v:.17g}" for k, v in self.kernel_params.items()]
        for i, name in enumerate(("beta0", "beta1", "beta2")):
            lines.append(f"{name}={self.beta[i]:.17g}")
            lines.append(f"{name}.active={str(self.beta_active[i]).lower()}")
        lines += [f"objective={self.objective_value:.17g}",
                  f"train_r2={self.train_r2:.17g}",
                  f"test_r2={self.test_r2:.17g}",
                  f"train_sst_zero={str(self.train_sst_zero).lower()}",
                  f"test_sst_zero={str(self.test_sst_zero).lower()}",
                  f"rank_deficient={str(self.rank_deficient).lower()}",
                  f"n_train={self.n_train}", f"n_test={self.n_test}",
                  f"dropped={self.dropped}"]
        if self.ratio is not None:
            lines.append(f"ratio={self.ratio:.17g}")
            lines.append(f"ratio_label={self.ratio_label}")
            lines.append(f"ratio_pass={str(self.ratio_pass).lower()}")
        lines.append(f"best_start={self.best_start}")
        lines.append(f"evaluations={sum(t.evaluations for t in self.trace)}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        out = [f"calibration {self.spec.families} [{self.spec.label}]",
               f"  rows: train {self.n_train}, test {self.n_test}, "
               f"dropped {self.dropped}",
               f"  ridge kappa: {self.spec.ridge:g}"]
        for k, v in self.kernel_params.items():
            out.append(f"  {k} = {v:.6g}")
        for i, name in enumerate(("beta0", "beta1", "beta2")):
            mark = "  (at bound)" if self.beta_active[i] else ""
            out.append(f"  {name} = {self.beta[i]:.6g}{mark}")
        out.append(f"  objective = {self.objective_value:.6g}")
        out.append(f"  train R2 = {self.train_r2:.6f}"
                   + ("  [undefined: zero variance]" if self.train_sst_zero
                      else ""))
        out.append(f"  test R2 = {self.test_r2:.6f} (SST centered on the "
                   "test-set mean)"
                   + ("  [undefined: zero variance]" if self.test_sst_zero
                      else ""))
        if self.ratio is not None:
            out.append(f"  {self.ratio_label} = {self.ratio:.4g} "
                       f"{'PASS' if self.ratio_pass else 'FAIL'}")
        if self.rank_deficient:
            out.append("  warning: rank-deficient design; smallest-norm fit")
        out.append(f"  starts: best {self.best_start} of {len(self.trace)}, "
                   f"evaluations {sum(t.evaluations for t in self.trace)}")
        return "\n".join(out) + "\n"


def _r_squared(pred: np.ndarray, y: np.ndarray) -> tuple[float, bool]:
    sse = float(np.sum((y - pred) ** 2))
    sst = float(np.sum((y - y.mean()) ** 2))
    # variance at machine-noise scale means R^2 is undefined; a literal
    # constant vector leaves rounding residue in the mean, so compare
    # against that scale rather than exact zero
    noise = y.size * (1e-12 * max(1.0, float(np.max(np.abs(y))))) ** 2
    if sst <= noise:
        return 0.0, True
    return 1.0 - sse / sst, False


def _ratio_diagnostic(spec: CalibrationSpec, k1: Kernel,
                      k2: Kernel) -> tuple[float | None, str | None,
                                           bool | None]:
    """Closed-form kernel-pair positivity ratio where one exists."""
    if spec.families == "exp/tspl":
        ratio = 2.0 * k1.lam * k2.delta / k2.alpha
        return ratio, "2*lam1*delta2/alpha2", ratio >= 1.0
    if spec.families == "exp/exp":
        ratio = 2.0 * k1.lam / k2.lam
        return ratio, "2*lam1/lam2", ratio >= 1.0
    return None, None, None


def calibrate(data: MarketDataset, spec: CalibrationSpec, seed: int = 0,
              threads: int = 1) -> CalibrationResult:
    """Multistart Nelder-Mead over log kernel parameters, then a final fit.

    The quasi-random start set is derived from ``seed``; results are
    deterministic in (data, spec, seed) regardless of ``threads``.
    """
    fam = spec.family
    # surface empty-partition problems before any optimization work
    _partitions(data, spec, Exponential(1.0), Exponential(1.0))
    lo, hi = np.log(fam.start_lo), np.log(fam.start_hi)
    sampler = qmc.Sobol(d=fam.dim, scramble=True, seed=seed)
    # sample a full power-of-two block to keep the point set balanced
    block = sampler.random_base2(max(0, math.ceil(math.log2(spec.n_starts))))
    starts = lo + block[:spec.n_starts] * (hi - lo)

    def run(i: int) -> StartTrace:
        res = optimize.minimize(
            lambda x: objective(np.exp(x), data, spec), starts[i],
            method="Nelder-Mead",
            options={"maxiter": spec.max_iter, "xatol": spec.xatol,
                     "fatol": spec.fatol, "adaptive": False})
        return StartTrace(index=i, start=tuple(np.exp(starts[i])),
                          final=tuple(np.exp(res.x)), value=float(res.fun),
                          evaluations=int(res.nfev),
                          converged=bool(res.success))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trace = tuple(pool.map(run, range(spec.n_starts)))
    else:
        trace = tuple(run(i) for i in range(spec.n_starts))

    values = [t.value for t in trace]
    best = int(np.argmin(values))
    if not math.isfinite(values[best]):
        raise CalibrationError("no start produced an in-domain kernel "
                               "parameter vector")

    params = np.array(trace[best].final)
    k1, k2 = fam.kernels(params)
    train, test, dropped = _partitions(data, spec, k1, k2)
    fit = fit_betas(train.design, train.y, spec.bounds(), spec.ridge)
    train_r2, train_zero = _r_squared(train.design @ fit.beta, train.y)
    test_r2, test_zero = _r_squared(test.design @ fit.beta, test.y)
    ratio, ratio_label, ratio_pass = _ratio_diagnostic(spec, k1, k2)
    return CalibrationResult(
        spec=spec, k1=k1, k2=k2,
        kernel_params=dict(zip(fam.names, params.tolist())),
        beta=fit.beta, beta_active=fit.active,
        objective_value=fit.residual,
        train_r2=train_r2, test_r2=test_r2,
        train_sst_zero=train_zero, test_sst_zero=test_zero,
        rank_deficient=fit.rank_deficient,
        n_train=train.size, n_test=test.size, dropped=dropped,
        ratio=ratio, ratio_label=ratio_label, ratio_pass=ratio_pass,
        trace=trace, best_start=best)


# ---------------------------------------------------------------------------
# Comparison table


def report(results: list[CalibrationResult]) -> str:
    """Kernel choice x dataset grid of train/test R2 plus the ratio row."""
    header = ("R2 comparison (test R2 centers SST on the test-set mean; "
              "ratio is the kernel-pair positivity diagnostic)")
    rows = [("choice", "dataset", "train R2", "test R2", "ratio", "")]
    for r in results:
        ratio = "" if r.ratio is None else f"{r.ratio:.4g}"
        mark = "" if r.ratio_pass is None else \
            ("PASS" if r.ratio_pass else "FAIL")
        rows.append((r.spec.families, r.spec.label, f"{r.train_r2:.4f}",
                     f"{r.test_r2:.4f}", ratio, mark))
    widths = [max(len(row[i]) for row in rows) for i in range(6)]
    lines = [header]
    for row in rows:
        lines.append("  ".join(cell.ljust(w)
                               for cell, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"


def report_delimited(results: list[CalibrationResult],
                     delimiter: str = ",") -> str:
    lines = [delimiter.join(("choice", "dataset", "train_r2", "test_r2",
                             "ratio", "ratio_pass"))]
    for r in results:
        ratio = "" if r.ratio is None else f"{r.ratio:.17g}"
        mark = "" if r.ratio_pass is None else str(r.ratio_pass).lower()
        lines.append(delimiter.join((r.spec.families, r.spec.label,
                                     f"{r.train_r2:.17g}",
                                     f"{r.test_r2:.17g}", ratio, mark)))
    return "\n".join(lines) + "\n"
