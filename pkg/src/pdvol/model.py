"""Model parameters, volatility history, and the history-driven forcing terms.

Spot volatility is ``sigma_t = beta0 + beta1 * R1_t + beta2 * sqrt(R2_t)``
where ``R1`` integrates past volatility-scaled Brownian increments against a
kernel ``K1`` and ``R2`` integrates past squared volatility against ``K2``,
both over a window reaching ``delta`` years into the past.  On the window
before time 0 the pair ``(r1, r2)`` is prescribed rather than simulated;
everything the simulation needs from that prescribed segment enters through
two forcing terms:

* ``g1(t)``: the kernel-weighted past noise.  It is a centered Gaussian
  functional of the pre-0 Brownian increments, so it is either sampled
  (fresh per path) or taken as zero.
* ``g2(t)``: the kernel-weighted past squared volatility, deterministic.

Histories come in two shapes: an explicit grid of ``(time, r1, r2)`` rows
ending at 0, or a constant segment (possibly with an infinite window), for
which ``g2`` reduces to closed-form kernel integrals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from pdvol.kernels import Kernel, KernelError

__all__ = ["ModelParams", "HistorySegment", "g2_path", "g1_stddev", "history_nodes"]


@dataclass(frozen=True)
class ModelParams:
    """Volatility loadings, the two kernels, spot seed and window length.

    ``beta0`` (base level) and ``beta2`` (activity loading) must be
    nonnegative; ``beta1`` (trend loading) is typically negative and is only
    required to be finite.  ``delta`` is the history-window length in years
    (``inf`` allowed) and must not exceed either kernel's support cutoff.
    """

    beta0: float
    beta1: float
    beta2: float
    k1: Kernel
    k2: Kernel
    s0: float = 1.0
    delta: float = math.inf

    def __post_init__(self):
        for name in ("beta0", "beta1", "beta2", "s0"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.beta0 < 0.0:
            raise ValueError("beta0 must be >= 0")
        if self.beta2 < 0.0:
            raise ValueError("beta2 must be >= 0")
        if self.s0 <= 0.0:
            raise ValueError("s0 must be > 0")
        if not self.delta >= 0.0:
            raise ValueError("delta must be >= 0")
        if self.delta > self.k1.cutoff or self.delta > self.k2.cutoff:
            raise ValueError("history window exceeds a kernel support cutoff")

    def sigma_of(self, r1, r2):
        """Volatility implied by feature values; r2 must be >= 0 already."""
        return self.beta0 + self.beta1 * np.asarray(r1) + self.beta2 * np.sqrt(np.asarray(r2))

    @property
    def betas(self) -> tuple[float, float, float]:
        return (self.beta0, self.beta1, self.beta2)


@dataclass(frozen=True)
class HistorySegment:
    """Prescribed feature values on the window before time 0.

    Grid form: ``times`` strictly increasing and ending at 0, with ``r1``
    and ``r2`` arrays of the same length (``r2 >= 0``).  Constant form:
    scalar ``r1``/``r2`` held on ``(-delta, 0]`` with ``delta`` possibly
    infinite.  ``HistorySegment.empty()`` is the degenerate no-history
    segment (window length 0).
    """

    times: np.ndarray | None
    r1: np.ndarray | float
    r2: np.ndarray | float
    delta: float
    constant: bool

    @classmethod
    def from_grid(cls, times, r1, r2) -> "HistorySegment":
        times = np.asarray(times, dtype=float)
        r1 = np.asarray(r1, dtype=float)
        r2 = np.asarray(r2, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("history grid needs at least two times")
        if r1.shape != times.shape or r2.shape != times.shape:
            raise ValueError("history arrays must share the grid shape")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(r1)) and np.all(np.isfinite(r2))):
            raise ValueError("history values must be finite")
        if not np.all(np.diff(times) > 0.0):
            raise ValueError("history times must be strictly increasing")
        if abs(float(times[-1])) > 1e-12:
            raise ValueError("history must end at time 0")
        if np.any(r2 < 0.0):
            bad = int(np.argmax(r2 < 0.0))
            raise ValueError(f"r2 must be >= 0; first violation at index {bad}")
        times = times.copy()
        times[-1] = 0.0
        return cls(times=times, r1=r1, r2=r2, delta=float(-times[0]), constant=False)

    @classmethod
    def constant_segment(cls, r1: float, r2: float, delta: float) -> "HistorySegment":
        if not (math.isfinite(r1) and math.isfinite(r2)):
            raise ValueError("history values must be finite")
        if r2 < 0.0:
            raise ValueError("r2 must be >= 0")
        if not delta > 0.0:
            raise ValueError("constant history needs delta > 0")
        return cls(times=None, r1=float(r1), r2=float(r2), delta=float(delta), constant=True)

    @classmethod
    def empty(cls) -> "HistorySegment":
        return cls(times=None, r1=0.0, r2=0.0, delta=0.0, constant=True)

    @property
    def is_empty(self) -> bool:
        return self.delta == 0.0

    def sigma(self, betas: tuple[float, float, float]):
        """Prescribed volatility path (array for grids, scalar otherwise)."""
        b0, b1, b2 = betas
        return b0 + b1 * np.asarray(self.r1) + b2 * np.sqrt(np.asarray(self.r2))

    def sigma_sup(self, betas: tuple[float, float, float]) -> float:
        if self.is_empty:
            return 0.0
        return float(np.max(np.abs(self.sigma(betas))))


def history_nodes(history: HistorySegment, kernel: Kernel,
                  fine_step: float = 1.0 / 2520.0,
                  tail_tol: float = 1e-12) -> np.ndarray:
    """Increasing time grid ending at 0 for sampling the past-noise forcing.

    Grid histories keep their own grid.  Constant windows get a grid that is
    uniform at the recent end and geometric farther back, truncated where
    the remaining tail of ``kernel**2`` falls below ``tail_tol`` times its
    total mass (power-law windows would otherwise be astronomically long).
    """
    if history.is_empty:
        raise ValueError("empty history has no nodes")
    if not history.constant:
        return history.times
    span = history.delta
    if not math.isfinite(span):
        total = kernel.integral(2.0, -math.inf, 0.0, 0.0)
        if not math.isfinite(total) or total <= 0.0:
            raise KernelError("kernel noise variance is degenerate on an infinite window")
        span = -kernel.tail_start(2.0, 0.0, tol=tail_tol * total)
    near = min(span, 0.25)
    n_uniform = max(int(round(near / fine_step)), 8)
    grid = [np.linspace(-near, 0.0, n_uniform + 1)]
    if span > near:
        n_geo = max(int(math.ceil(math.log(span / near) / math.log(1.02))), 2)
        geo = -np.geomspace(near, span, n_geo)[::-1]
        grid.insert(0, geo[:-1])
    return np.concatenate(grid)


def g2_path(k2: Kernel, history: HistorySegment, betas: tuple[float, float, float],
            t_grid) -> np.ndarray:
    """Deterministic forcing g2(t): kernel-weighted past squared volatility.

    Constant histories use closed-form kernel integrals over the window;
    grid histories are integrated by the trapezoid rule on their own grid.
    """
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if history.is_empty:
        return np.zeros_like(t_grid)
    if history.constant:
        sig2 = float(history.sigma(betas)) ** 2
        return np.array([sig2 * k2.integral(1.0, -history.delta, 0.0, float(t))
                         for t in t_grid])
    sig2 = np.asarray(history.sigma(betas)) ** 2
    s = history.times
    out = np.empty(t_grid.shape)
    block = max(1, int(4e6) // max(s.size, 1))
    for i in range(0, t_grid.size, block):
        tc = t_grid[i:i + block]
        weights = k2.evaluate(s[None, :], tc[:, None])
        out[i:i + block] = np.trapezoid(weights * sig2[None, :], s, axis=1)
    return out


def g1_stddev(k1: Kernel, history: HistorySegment,
              betas: tuple[float, float, float], t: float = 0.0) -> float:
    """Standard deviation of the past-noise forcing g1(t) at a fixed time.

    For constant histories this is ``|sigma| * sqrt(int K1(s, t)^2 ds)`` over
    the window (closed form); for grid histories the variance sums the
    squared kernel weights times interval lengths at left endpoints.
    """
    if history.is_empty:
        return 0.0
    if history.constant:
        sig = abs(float(history.sigma(betas)))
        return sig * math.sqrt(k1.integral(2.0, -history.delta, 0.0, float(t)))
    s = history.times
    sig = np.asarray(history.sigma(betas))[:-1]
    weights = np.asarray(k1.evaluate(s[:-1], float(t)), dtype=float)
    var = float(np.sum((weights * sig) ** 2 * np.diff(s)))
    return math.sqrt(var)
