"""Monte Carlo engine for the two-kernel volatility system.

Simulates the coupled feature processes ``(R1, R2)``, the volatility
``sigma = beta0 + beta1 R1 + beta2 sqrt(R2)``, the price ``S`` (exact
exponential of the Euler log-increment, so ``S > 0`` structurally), and —
whenever the trend kernel factorizes as ``f(s) e^{h(t)}`` — the explicit
lower-bound process ``X`` driven by the same noise.

Two stepping schemes:

* ``MarkovRecursion``: kernels built from exponential factors follow a
  linear SDE between grid points; with the volatility frozen over the step
  each factor is advanced by its exact conditional law (decay
  ``e^{-lam dt}``, a noise load matching the conditional variance, and the
  exact drift load ``1 - e^{-lam dt}``).  O(1) work per step.
* ``DirectQuadrature``: left-point Euler sums of the defining integrals;
  O(n) work per step, any kernel family.

Both schemes are first-order accurate and their gap on shared noise
shrinks linearly in the step size, which doubles as a convergence
diagnostic.

Randomness: path ``i`` owns ``default_rng(SeedSequence([seed, i]))`` and
draws its past-window increments first (oldest node first), then the
forward increments in time order.  ``g1_mode="zero"`` skips the past
draws entirely.  Ensemble results are therefore independent of chunking
and thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from pdvol.assumptions import AssumptionReport, full_report
from pdvol.kernels import Kernel, approximate_with_exponentials
from pdvol.model import HistorySegment, ModelParams, g2_path, history_nodes

__all__ = [
    "SCHEME_MARKOV",
    "SCHEME_QUADRATURE",
    "SimConfig",
    "SimPath",
    "EnsembleSummary",
    "SimulationError",
    "GateError",
    "build_g",
    "step_markov",
    "step_quadrature",
    "simulate_path",
    "monte_carlo",
]

SCHEME_MARKOV = "MarkovRecursion"
SCHEME_QUADRATURE = "DirectQuadrature"
_SCHEME_ALIASES = {
    "markovrecursion": SCHEME_MARKOV,
    "markov": SCHEME_MARKOV,
    "directquadrature": SCHEME_QUADRATURE,
    "quadrature": SCHEME_QUADRATURE,
}

QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


class SimulationError(Exception):
    """Simulation configuration or contract violation."""


class GateError(SimulationError):
    """Raised when the condition report does not grant existence."""

    def __init__(self, report: AssumptionReport):
        self.report = report
        super().__init__(
            f"condition report verdict is {report.verdict}; "
            "simulating such a configuration requires force=True")


def normalize_scheme(name: str) -> str:
    try:
        return _SCHEME_ALIASES[name.replace("_", "").replace("-", "").lower()]
    except (KeyError, AttributeError):
        raise SimulationError(
            f"unknown scheme {name!r}; choose {SCHEME_MARKOV} or {SCHEME_QUADRATURE}")


@dataclass(frozen=True)
class SimConfig:
    """Grid, seeding, scheme and diagnostics settings for one run.

    ``report_horizons`` selects the times at which ensemble statistics are
    reported (defaults to the quarter points of ``[0, horizon]``).
    ``markov_approx_terms`` (2..8) lets ``MarkovRecursion`` run on kernels
    without an exact exponential factorization by least-squares fitting
    that many exponential terms; the fit residual is recorded in the path
    event log.  ``bound_tol_mult`` scales the lower-bound violation
    tolerance ``mult * sqrt(dt) * sigma_0``.
    """

    horizon: float
    n_paths: int = 1
    steps_per_year: int = 2520
    seed: int = 0
    scheme: str = SCHEME_MARKOV
    r2_floor: float = 1e-12
    g1_mode: str = "sampled"
    bound_tol_mult: float = 10.0
    report_horizons: tuple[float, ...] | None = None
    chunk_size: int = 256
    threads: int = 1
    markov_approx_terms: int | None = None

    def __post_init__(self):
        if not (math.isfinite(self.horizon) and self.horizon > 0.0):
            raise SimulationError("horizon must be a positive number of years")
        if int(self.steps_per_year) < 1:
            raise SimulationError("steps_per_year must be >= 1")
        if int(self.n_paths) < 1:
            raise SimulationError("n_paths must be >= 1")
        if not (isinstance(self.seed, (int, np.integer)) and self.seed >= 0):
            raise SimulationError("seed must be a nonnegative integer")
        object.__setattr__(self, "scheme", normalize_scheme(self.scheme))
        if not self.r2_floor > 0.0:
            raise SimulationError("r2_floor must be > 0")
        if self.g1_mode not in ("sampled", "zero"):
            raise SimulationError('g1_mode must be "sampled" or "zero"')
        if self.chunk_size < 1 or self.threads < 1:
            raise SimulationError("chunk_size and threads must be >= 1")
        if self.markov_approx_terms is not None and not (
                2 <= int(self.markov_approx_terms) <= 8):
            raise SimulationError("markov_approx_terms must be in 2..8")
        if self.report_horizons is not None:
            hs = tuple(float(h) for h in self.report_horizons)
            if not hs or any(not (0.0 <= h <= self.horizon * (1 + 1e-9)) for h in hs):
                raise SimulationError("report horizons must lie in [0, horizon]")
            object.__setattr__(self, "report_horizons", hs)

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.horizon * self.steps_per_year)))

    @property
    def dt(self) -> float:
        return 1.0 / self.steps_per_year

    def grid(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) / self.steps_per_year

    def horizon_indices(self) -> list[int]:
        """Report-time grid indices (deduplicated, increasing)."""
        n = self.n_steps
        hs = self.report_horizons
        if hs is None:
            hs = tuple(self.horizon * q for q in (0.25, 0.5, 0.75, 1.0))
        idx = sorted({min(n, max(0, int(round(h * self.steps_per_year)))) for h in hs})
        return idx


@dataclass
class SimPath:
    """One simulated path plus its per-path event log.

    ``x`` is None when the trend kernel has no ``f(s)e^{h(t)}`` form (the
    event log records ``x_available``).  ``r2`` is stored after flooring,
    so ``r2 >= r2_floor`` pointwise on the non-aborted segment.
    """

    times: np.ndarray
    r1: np.ndarray
    r2: np.ndarray
    sigma: np.ndarray
    s: np.ndarray
    x: np.ndarray | None
    dw_past: np.ndarray
    dw_future: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    path_index: int
    events: dict = field(default_factory=dict)

    def to_text(self) -> str:
        """Columnar dump: time R1 R2 sigma S X dW, 17 significant digits."""
        n = self.times.size
        x = self.x if self.x is not None else np.full(n, math.nan)
        dw = np.append(self.dw_future, 0.0)
        lines = ["time R1 R2 sigma S X dW"]
        for k in range(n):
            lines.append(" ".join(
                format(v, ".17g") for v in
                (self.times[k], self.r1[k], self.r2[k], self.sigma[k],
                 self.s[k], x[k], dw[k])))
        return "\n".join(lines) + "\n"


def build_g(params: ModelParams, history: HistorySegment, t_grid,
            past_noise) -> tuple[np.ndarray, np.ndarray]:
    """Forcing terms on ``t_grid`` from the prescribed window.

    ``g2`` is the deterministic kernel-weighted past squared volatility;
    ``g1`` is the discrete stochastic sum ``sum_j K1(s_j, t) sigma_{s_j}
    dW_j`` over the window nodes, one increment per node interval
    (``past_noise`` supplies that realization; all zeros gives ``g1 = 0``).
    """
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    past_noise = np.asarray(past_noise, dtype=float)
    g2 = g2_path(params.k2, history, params.betas, t_grid)
    if history.is_empty:
        if past_noise.size:
            raise SimulationError("empty history admits no past increments")
        return np.zeros_like(t_grid), g2
    nodes = history_nodes(history, params.k1)
    if past_noise.shape != (nodes.size - 1,):
        raise SimulationError(
            f"need one past increment per node interval "
            f"({nodes.size - 1}), got shape {past_noise.shape}")
    weights, sig = _g1_weights(params, history, nodes, t_grid)
    return weights @ (sig * past_noise), g2


def _g1_weights(params: ModelParams, history: HistorySegment,
                nodes: np.ndarray, t_grid: np.ndarray):
    """Kernel weight matrix K1(s_j, t_i) and left-node history volatility."""
    left = nodes[:-1]
    weights = np.asarray(params.k1.evaluate(left[None, :], t_grid[:, None]),
                         dtype=float)
    sig_hist = history.sigma(params.betas)
    if history.constant:
        sig = np.full(left.size, float(sig_hist))
    else:
        sig = np.asarray(sig_hist, dtype=float)[:-1]
    return weights, sig


def _factor_arrays(kernel: Kernel, approx_terms: int | None, label: str):
    """Exponential factor weights/rates, fitting a surrogate if allowed."""
    factors = kernel.factors()
    residual = None
    if factors is None:
        if approx_terms is None:
            raise SimulationError(
                f"{label} has no exponential factorization; use scheme "
                f"{SCHEME_QUADRATURE} or set markov_approx_terms")
        factors, residual = approximate_with_exponentials(
            kernel, n_terms=int(approx_terms))
    w = np.array([f[0] for f in factors])
    lam = np.array([f[1] for f in factors])
    return w, lam, residual


def step_markov(state, sigma: float, dw: float, dt: float,
                factors1, factors2):
    """Advance per-factor states one step with the volatility frozen.

    ``state = (u, v)``: unweighted exponential-factor values for the trend
    and activity features; ``factors1``/``factors2`` are the matching
    ``(weight, rate)`` lists.  Each factor follows its linear SDE exactly
    over the step: decay ``e^{-lam dt}``, noise load
    ``lam sqrt((1 - e^{-2 lam dt}) / (2 lam dt))`` (so the increment
    variance equals the conditional law's), and drift load
    ``1 - e^{-lam dt}``.  Aggregate features are the weight-weighted sums.
    """
    u, v = state
    lam1 = np.array([f[1] for f in factors1])
    lam2 = np.array([f[1] for f in factors2])
    u = (np.exp(-lam1 * dt) * u
         + lam1 * np.sqrt(-np.expm1(-2.0 * lam1 * dt) / (2.0 * lam1 * dt))
         * sigma * dw)
    v = np.exp(-lam2 * dt) * v + -np.expm1(-lam2 * dt) * sigma ** 2
    return u, v


def step_quadrature(times, sigmas, dws, dt: float, t_next: float,
                    k1: Kernel, k2: Kernel,
                    g1_next: float, g2_next: float) -> tuple[float, float]:
    """Left-point Euler sums for the feature values at ``t_next``.

    ``times``/``sigmas``/``dws`` cover the steps already taken; with no
    history the result is ``(g1_next, g2_next)`` exactly.
    """
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        return float(g1_next), float(g2_next)
    w1 = np.asarray(k1.evaluate(times, t_next), dtype=float)
    w2 = np.asarray(k2.evaluate(times, t_next), dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    r1 = g1_next + float(np.dot(w1, sigmas * np.asarray(dws, dtype=float)))
    r2 = g2_next + float(np.dot(w2, sigmas ** 2)) * dt
    return r1, r2


class _Engine:
    """Shared precomputation + chunked path evolution for one run."""

    def __init__(self, params: ModelParams, history: HistorySegment,
                 config: SimConfig):
        self.params = params
        self.history = history
        self.cfg = config
        self.times = config.grid()
        self.n = config.n_steps
        self.dt = config.dt
        self.g2 = g2_path(params.k2, history, params.betas, self.times)
        self.events_common: dict = {}

        self.sample_past = (config.g1_mode == "sampled") and not history.is_empty
        if self.sample_past:
            self.nodes = history_nodes(history, params.k1)
            self.node_widths = np.diff(self.nodes)
            self.kmat, self.sig_nodes = _g1_weights(
                params, history, self.nodes, self.times)
        else:
            self.nodes = np.zeros(1)
            self.node_widths = np.zeros(0)

        if config.scheme == SCHEME_MARKOV:
            w1, lam1, res1 = _factor_arrays(
                params.k1, config.markov_approx_terms, "K1")
            w2, lam2, res2 = _factor_arrays(
                params.k2, config.markov_approx_terms, "K2")
            self.w1, self.w2 = w1, w2
            self.decay1 = np.exp(-lam1 * self.dt)
            self.decay2 = np.exp(-lam2 * self.dt)
            self.load1 = lam1 * np.sqrt(-np.expm1(-2.0 * lam1 * self.dt)
                                        / (2.0 * lam1 * self.dt))
            self.load2 = -np.expm1(-lam2 * self.dt)
            if res1 is not None:
                self.events_common["k1_markov_fit_residual"] = res1
            if res2 is not None:
                self.events_common["k2_markov_fit_residual"] = res2
        else:
            if params.k1.convolutional:
                self.klag1 = np.asarray(params.k1.lag_value(
                    np.arange(1, self.n + 1) * self.dt), dtype=float)
            else:
                p = params.k1.separable()
                self.f1 = np.asarray(p.f(self.times), dtype=float)
                self.eh1 = np.exp(np.asarray(p.h(self.times), dtype=float))
            if params.k2.convolutional:
                self.klag2 = np.asarray(params.k2.lag_value(
                    np.arange(1, self.n + 1) * self.dt), dtype=float)
            else:
                p = params.k2.separable()
                self.f2 = np.asarray(p.f(self.times), dtype=float)
                self.eh2 = np.exp(np.asarray(p.h(self.times), dtype=float))

        parts = params.k1.separable()
        self.x_available = parts is not None
        if self.x_available:
            self.diag = np.asarray(params.k1.diagonal(self.times), dtype=float)
            h = np.asarray(parts.h(self.times), dtype=float)
            self.h_shift = h - h[0]

    # -- noise ---------------------------------------------------------

    def draw_noise(self, indices) -> tuple[np.ndarray, np.ndarray]:
        """Per-path streams: past increments first, then forward ones."""
        m = self.node_widths.size
        dwp = np.empty((m, len(indices)))
        dwf = np.empty((self.n, len(indices)))
        sqrt_w = np.sqrt(self.node_widths)
        sqrt_dt = math.sqrt(self.dt)
        for j, idx in enumerate(indices):
            rng = np.random.default_rng(
                np.random.SeedSequence([self.cfg.seed, int(idx)]))
            if self.sample_past:
                dwp[:, j] = rng.standard_normal(m) * sqrt_w
            dwf[:, j] = rng.standard_normal(self.n) * sqrt_dt
        return dwp, dwf

    # -- path evolution --------------------------------------------------

    def run_chunk(self, indices, noise=None, keep: int = 0) -> dict:
        """Evolve the paths with the given indices; vectorized across paths.

        Returns per-chunk statistics plus (optionally) the first ``keep``
        fully materialized ``SimPath`` objects.
        """
        cfg, n = self.cfg, self.n
        nc = len(indices)
        if noise is not None:
            dwp, dwf = noise
        else:
            dwp, dwf = self.draw_noise(indices)
        if self.sample_past:
            # one matrix-vector product per path: the result for a given
            # path is then bit-identical however paths are chunked
            g1 = np.empty((n + 1, nc))
            for j in range(nc):
                g1[:, j] = self.kmat @ (self.sig_nodes * dwp[:, j])
        else:
            g1 = np.zeros((n + 1, nc))

        b0, b1, b2 = self.params.betas
        floor = cfg.r2_floor
        r1 = np.empty((n + 1, nc))
        r2 = np.empty((n + 1, nc))
        sigma = np.empty((n + 1, nc))
        floor_hits = 0
        markov = cfg.scheme == SCHEME_MARKOV
        with np.errstate(all="ignore"):
            r1[0] = g1[0]
            raw = np.broadcast_to(self.g2[0], (nc,)).copy()
            floor_hits += int(np.count_nonzero(raw < floor))
            r2[0] = np.maximum(raw, floor)
            if markov:
                u = np.zeros((self.w1.size, nc))
                v = np.zeros((self.w2.size, nc))
            else:
                a = np.empty((n, nc))
                b = np.empty((n, nc))
            for m in range(n):
                sig = b0 + b1 * r1[m] + b2 * np.sqrt(r2[m])
                sigma[m] = sig
                if markov:
                    u = self.decay1[:, None] * u \
                        + self.load1[:, None] * (sig * dwf[m])[None, :]
                    v = self.decay2[:, None] * v \
                        + self.load2[:, None] * (sig * sig)[None, :]
                    r1[m + 1] = g1[m + 1] + self.w1 @ u
                    raw = self.g2[m + 1] + self.w2 @ v
                else:
                    a[m] = sig * dwf[m]
                    b[m] = sig * sig * self.dt
                    if self.params.k1.convolutional:
                        r1[m + 1] = g1[m + 1] + self.klag1[:m + 1][::-1] @ a[:m + 1]
                    else:
                        r1[m + 1] = g1[m + 1] + self.eh1[m + 1] \
                            * (self.f1[:m + 1] @ a[:m + 1])
                    if self.params.k2.convolutional:
                        raw = self.g2[m + 1] + self.klag2[:m + 1][::-1] @ b[:m + 1]
                    else:
                        raw = self.g2[m + 1] + self.eh2[m + 1] \
                            * (self.f2[:m + 1] @ b[:m + 1])
                with np.errstate(invalid="ignore"):
                    floor_hits += int(np.count_nonzero(raw < floor))
                r2[m + 1] = np.maximum(raw, floor)
            sigma[n] = b0 + b1 * r1[n] + b2 * np.sqrt(r2[n])

            log_inc = (-0.5 * sigma[:n] ** 2 * self.dt + sigma[:n] * dwf)
            logs = np.vstack([np.zeros((1, nc)), np.cumsum(log_inc, axis=0)])
            s = self.params.s0 * np.exp(logs)
            if self.x_available:
                cum_w = np.vstack([np.zeros((1, nc)),
                                   np.cumsum(self.diag[:n, None] * dwf, axis=0)])
                cum_q = np.concatenate([[0.0],
                                        np.cumsum(self.diag[:n] ** 2 * self.dt)])
                x = sigma[0][None, :] * np.exp(
                    b1 * cum_w + self.h_shift[:, None]
                    - 0.5 * b1 * b1 * cum_q[:, None])
            else:
                x = None

        return self._collect(indices, r1, r2, sigma, s, x, g1, dwp, dwf,
                             floor_hits, keep)

    def _collect(self, indices, r1, r2, sigma, s, x, g1, dwp, dwf,
                 floor_hits, keep) -> dict:
        n, cfg = self.n, self.cfg
        finite = np.isfinite(sigma) & np.isfinite(r1) & np.isfinite(r2)
        alive = finite.all(axis=0)
        aborts = []
        if not alive.all():
            for j in np.flatnonzero(~alive):
                step = int(np.argmin(finite[:, j]))
                aborts.append((int(indices[j]), step))

        h_idx = cfg.horizon_indices()
        sig_h = sigma[h_idx][:, :]
        s_h = s[h_idx][:, :]
        viol = 0
        min_smx = math.inf
        if x is not None:
            with np.errstate(invalid="ignore"):
                # |sigma_0|: the tolerance is a scale and must stay a slack
                # even on paths whose sampled past noise makes sigma_0 < 0
                tol = cfg.bound_tol_mult * math.sqrt(self.dt) * np.abs(sigma[0])
                diff = sigma - x
                viol = int(np.count_nonzero(diff < -tol[None, :]))
                if np.any(finite):
                    min_smx = float(np.nanmin(np.where(finite, diff, np.nan)))
        min_r2 = float(np.nanmin(np.where(finite, r2, np.nan))) \
            if np.any(finite) else math.nan

        paths = []
        for j in range(min(keep, len(indices))):
            events = dict(self.events_common)
            events.update({
                "floor_hits": int(np.count_nonzero(
                    r2[:, j] <= cfg.r2_floor)),  # stored values sit at the floor
                "x_available": self.x_available,
                "abort_step": None if alive[j] else int(np.argmin(finite[:, j])),
            })
            if x is not None:
                events["min_sigma_minus_x"] = float(np.nanmin(
                    np.where(finite[:, j], sigma[:, j] - x[:, j], np.nan)))
            paths.append(SimPath(
                times=self.times, r1=r1[:, j].copy(), r2=r2[:, j].copy(),
                sigma=sigma[:, j].copy(), s=s[:, j].copy(),
                x=None if x is None else x[:, j].copy(),
                dw_past=dwp[:, j].copy(), dw_future=dwf[:, j].copy(),
                g1=g1[:, j].copy(), g2=self.g2.copy(),
                path_index=int(indices[j]), events=events))
        return {
            "indices": np.asarray(indices, dtype=int),
            "sig_h": sig_h, "s_h": s_h,
            "floor_hits": floor_hits, "violations": viol,
            "min_smx": min_smx, "min_r2": min_r2,
            "aborts": aborts, "paths": paths,
        }


def _check_gate(params: ModelParams, history: HistorySegment,
                config: SimConfig, force: bool,
                gate_report: AssumptionReport | None) -> AssumptionReport | None:
    if gate_report is None and not force:
        gate_report = full_report(params, history, config.horizon)
    if gate_report is not None and gate_report.verdict == "NEITHER" and not force:
        raise GateError(gate_report)
    return gate_report


def simulate_path(params: ModelParams, history: HistorySegment,
                  config: SimConfig, path_index: int = 0, *,
                  noise=None, force: bool = False,
                  gate_report: AssumptionReport | None = None) -> SimPath:
    """Simulate one path.

    Entry is gated on the condition report granting at least existence;
    ``force=True`` overrides (recorded in the event log).  ``noise``
    optionally injects ``(past_increments | None, forward_increments)``
    instead of drawing from the path's RNG stream.
    """
    gate_report = _check_gate(params, history, config, force, gate_report)
    engine = _Engine(params, history, config)
    if noise is not None:
        dwp, dwf = noise
        dwf = np.asarray(dwf, dtype=float).reshape(-1, 1)
        if dwf.shape[0] != engine.n:
            raise SimulationError(
                f"need {engine.n} forward increments, got {dwf.shape[0]}")
        m = engine.node_widths.size if engine.sample_past else 0
        if dwp is None:
            dwp = np.zeros((m, 1))
        else:
            dwp = np.asarray(dwp, dtype=float).reshape(-1, 1)
            if dwp.shape[0] != m:
                raise SimulationError(
                    f"need {m} past increments, got {dwp.shape[0]}")
        noise = (dwp, dwf)
    out = engine.run_chunk([path_index], noise=noise, keep=1)
    path = out["paths"][0]
    if force:
        path.events["gate_override"] = True
    if gate_report is not None:
        path.events["verdict"] = gate_report.verdict
    return path


@dataclass
class EnsembleSummary:
    """Order-independent aggregate of a Monte Carlo run."""

    n_paths: int
    n_steps: int
    dt: float
    scheme: str
    g1_mode: str
    verdict: str | None
    horizons: list[float]
    stats: dict
    floor_hits: int
    bound_violations: int | None
    min_sigma_minus_x: float | None
    min_r2: float
    aborted: int
    abort_examples: list
    x_available: bool
    paths: list = field(default_factory=list)

    def stat(self, var: str, horizon_index: int, name: str) -> float:
        return self.stats[var][horizon_index][name]

    def to_kv(self) -> str:
        lines = [
            f"n_paths={self.n_paths}",
            f"n_steps={self.n_steps}",
            f"dt={self.dt!r}",
            f"scheme={self.scheme}",
            f"g1_mode={self.g1_mode}",
            f"verdict={self.verdict or 'UNCHECKED'}",
            f"x_available={str(self.x_available).lower()}",
            f"floor_hits={self.floor_hits}",
            f"aborted={self.aborted}",
            f"min_r2={self.min_r2!r}",
        ]
        if self.x_available:
            lines.append(f"bound_violations={self.bound_violations}")
            lines.append(f"min_sigma_minus_x={self.min_sigma_minus_x!r}")
        for var in ("sigma", "S"):
            for hi, h in enumerate(self.horizons):
                st = self.stats[var][hi]
                for name in ("mean", "std", *[f"q{int(q * 100):02d}" for q in QUANTILES]):
                    lines.append(f"horizon_{h:g}.{var}.{name}={st[name]!r}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        head = (f"{'horizon':>8} {'var':<6} {'mean':>12} {'std':>12} "
                + " ".join(f"{'q' + format(int(q * 100), '02d'):>12}"
                           for q in QUANTILES))
        lines = [head, "-" * len(head)]
        for var in ("sigma", "S"):
            for hi, h in enumerate(self.horizons):
                st = self.stats[var][hi]
                row = [f"{h:>8g} {var:<6} {st['mean']:>12.6g} {st['std']:>12.6g}"]
                row += [f"{st[f'q{int(q * 100):02d}']:>12.6g}" for q in QUANTILES]
                lines.append(" ".join(row))
        lines.append("-" * len(head))
        lines.append(f"paths: {self.n_paths}  aborted: {self.aborted}  "
                     f"floor hits: {self.floor_hits}")
        if self.x_available:
            lines.append(f"lower-bound violations: {self.bound_violations}  "
                         f"min(sigma - X): {self.min_sigma_minus_x:.6g}")
        return "\n".join(lines) + "\n"


def monte_carlo(params: ModelParams, history: HistorySegment,
                config: SimConfig, *, force: bool = False,
                gate_report: AssumptionReport | None = None,
                keep_paths: int = 0) -> EnsembleSummary:
    """Simulate ``config.n_paths`` independent paths and aggregate.

    Statistics are assembled into per-path slots keyed by path index, so
    the summary is bit-identical for any chunking or thread count.  The
    first ``keep_paths`` paths are retained fully materialized.
    """
    gate_report = _check_gate(params, history, config, force, gate_report)
    engine = _Engine(params, history, config)
    n_paths = config.n_paths
    h_idx = config.horizon_indices()
    sig_h = np.empty((len(h_idx), n_paths))
    s_h = np.empty((len(h_idx), n_paths))

    chunks = [range(lo, min(lo + config.chunk_size, n_paths))
              for lo in range(0, n_paths, config.chunk_size)]

    def work(chunk):
        keep = max(0, min(keep_paths - chunk.start, len(chunk)))
        return engine.run_chunk(list(chunk), keep=keep)

    if config.threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(work, chunks))
    else:
        results = [work(c) for c in chunks]

    floor_hits = 0
    violations = 0
    min_smx = math.inf
    min_r2 = math.inf
    aborts: list = []
    paths: list = []
    for out in results:
        cols = out["indices"]
        sig_h[:, cols] = out["sig_h"]
        s_h[:, cols] = out["s_h"]
        floor_hits += out["floor_hits"]
        violations += out["violations"]
        min_smx = min(min_smx, out["min_smx"])
        min_r2 = min(min_r2, out["min_r2"]) if math.isfinite(out["min_r2"]) \
            else min_r2
        aborts.extend(out["aborts"])
        paths.extend(out["paths"])
    aborts.sort()

    def _stats(block: np.ndarray) -> list[dict]:
        rows = []
        with np.errstate(invalid="ignore"):
            for row in block:
                finite = row[np.isfinite(row)]
                if finite.size == 0:
                    rows.append({k: math.nan for k in
                                 ("mean", "std",
                                  *[f"q{int(q * 100):02d}" for q in QUANTILES])})
                    continue
                entry = {"mean": float(np.mean(finite)),
                         "std": float(np.std(finite, ddof=1))
                         if finite.size > 1 else 0.0}
                qs = np.quantile(finite, QUANTILES)
                entry.update({f"q{int(q * 100):02d}": float(v)
                              for q, v in zip(QUANTILES, qs)})
                rows.append(entry)
        return rows

    if force:
        verdict = gate_report.verdict if gate_report is not None else None
    else:
        verdict = gate_report.verdict
    return EnsembleSummary(
        n_paths=n_paths, n_steps=config.n_steps, dt=config.dt,
        scheme=config.scheme, g1_mode=config.g1_mode, verdict=verdict,
        horizons=[float(engine.times[i]) for i in h_idx],
        stats={"sigma": _stats(sig_h), "S": _stats(s_h)},
        floor_hits=floor_hits,
        bound_violations=violations if engine.x_available else None,
        min_sigma_minus_x=(min_smx if engine.x_available else None),
        min_r2=min_r2, aborted=len(aborts), abort_examples=aborts[:20],
        x_available=engine.x_available, paths=paths)
