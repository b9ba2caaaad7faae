"""Parametric kernels weighting past returns and squared returns.

The volatility features are integrals of past noise against a kernel
``K(s, t)`` defined for ``s <= t``.  Four nonnegative families are
supported, all non-increasing in ``t``:

========================  =====================================================
family token              K(s, t)
========================  =====================================================
``exp``                   ``lam * exp(-lam * (t - s))``
``tspl``                  ``z / (t - s + delta) ** alpha``
``combo``                 ``theta * lam_a * exp(-lam_a * (t - s))
                          + (1 - theta) * lam_b * exp(-lam_b * (t - s))``
``shifted_power``         ``((s + c) / (t + c)) ** a`` for ``s >= -c``, else 0,
                          where ``c`` is the (finite) support cutoff
========================  =====================================================

All families except ``shifted_power`` are stationary in the lag ``t - s``.
Time is measured in years; one business day is 1/252.

A kernel's ``cutoff`` is the length of the history window: the model only
ever integrates over ``s >= -cutoff``.  ``exp``, ``tspl`` and ``combo``
default to an infinite window; ``shifted_power`` requires a finite one (the
kernel vanishes below it).  Time-shifted power laws are normalized to unit
mass over their support unless an explicit ``z`` is given; ``z`` is always
recomputed from ``(alpha, delta, cutoff)`` on deserialization, never stored.

Power integrals ``int_lower^upper K(s, t)**p ds`` have closed forms for
every family (convex combinations only for p in {1, 2}); an independent
adaptive-quadrature route, :func:`integral_quadrature`, is kept available
for cross-checking the closed forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate, optimize

__all__ = [
    "Kernel",
    "KernelError",
    "Exponential",
    "TimeShiftedPowerLaw",
    "ExponentialCombo",
    "ShiftedPower",
    "SeparableParts",
    "tspl_normalization",
    "integral_quadrature",
    "approximate_with_exponentials",
    "serialize_kernel",
    "parse_kernel",
    "kernel_to_dict",
    "kernel_from_dict",
]

QUAD_ABS_TOL = 1e-10


class KernelError(ValueError):
    """Invalid kernel parameters, or evaluation outside the domain s <= t."""


class SeparableParts(NamedTuple):
    """Factorization K(s, t) = f(s) * exp(h(t)) with vectorized callables."""

    f: Callable[[np.ndarray], np.ndarray]
    h: Callable[[np.ndarray], np.ndarray]
    h_prime: Callable[[np.ndarray], np.ndarray]


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise KernelError(message)


def _positive_finite(value: float, name: str) -> None:
    _require(math.isfinite(value) and value > 0.0, f"{name} must be finite and > 0, got {value!r}")


def _broadcast(s, t):
    s_arr = np.asarray(s, dtype=float)
    t_arr = np.asarray(t, dtype=float)
    _require(bool(np.all(np.isfinite(s_arr))) and bool(np.all(np.isfinite(t_arr))),
             "kernel arguments must be finite")
    _require(bool(np.all(s_arr <= t_arr)), "kernel arguments require s <= t")
    scalar = np.isscalar(s) and np.isscalar(t) or (s_arr.ndim == 0 and t_arr.ndim == 0)
    return s_arr, t_arr, scalar


def _maybe_scalar(out: np.ndarray, scalar: bool):
    return float(out) if scalar else out


@dataclass(frozen=True)
class Kernel:
    """Common interface of the kernel families.

    Subclasses set ``family`` and implement ``_value``/``_derivative`` (and
    the closed-form pieces they support).  ``cutoff`` is the history-window
    length ``Delta``: evaluation below ``s = -cutoff`` is an error except
    for :class:`ShiftedPower`, which is zero there by definition.
    """

    # Concrete families set these class attributes and declare a ``cutoff``
    # dataclass field (annotating it here would hijack subclass field order).
    family = "abstract"
    convolutional = True

    # -- evaluation ---------------------------------------------------------

    def evaluate(self, s, t):
        """Kernel value K(s, t), vectorized over broadcastable inputs.

        Raises :class:`KernelError` for non-finite input, ``s > t``, or
        ``s < -cutoff`` when the support is finite (``shifted_power``
        excepted: it returns 0 below its cutoff).
        """
        s_arr, t_arr, scalar = _broadcast(s, t)
        if math.isfinite(self.cutoff) and not self._zero_below_cutoff():
            _require(bool(np.all(s_arr >= -self.cutoff)),
                     f"kernel support starts at s = {-self.cutoff}; got smaller s")
        out = self._value(s_arr, t_arr)
        return _maybe_scalar(out, scalar)

    def time_derivative(self, s, t):
        """Partial derivative of K(s, t) in t (nonpositive for all families)."""
        s_arr, t_arr, scalar = _broadcast(s, t)
        if math.isfinite(self.cutoff) and not self._zero_below_cutoff():
            _require(bool(np.all(s_arr >= -self.cutoff)),
                     f"kernel support starts at s = {-self.cutoff}; got smaller s")
        out = self._derivative(s_arr, t_arr)
        return _maybe_scalar(out, scalar)

    def diagonal(self, t):
        """K(t, t), the weight a move receives instantaneously."""
        t_arr = np.asarray(t, dtype=float)
        return self.evaluate(t_arr, t_arr)

    def lag_value(self, u):
        """K as a function of the lag u = t - s (stationary families only)."""
        if not self.convolutional:
            raise KernelError(f"{self.family} kernel is not stationary in the lag")
        u_arr = np.asarray(u, dtype=float)
        _require(bool(np.all(np.isfinite(u_arr))) and bool(np.all(u_arr >= 0.0)),
                 "lag must be finite and >= 0")
        out = self._lag(u_arr)
        if math.isfinite(self.cutoff):
            out = np.where(u_arr <= self.cutoff, out, 0.0)
        return _maybe_scalar(out, np.isscalar(u) or u_arr.ndim == 0)

    # -- integrals ----------------------------------------------------------

    def integral(self, power: float, lower: float, upper: float, t: float) -> float:
        """``int_lower^upper K(s, t)**power ds`` (closed form when available).

        ``lower`` may be ``-inf``; it is clamped to the support start.  A
        divergent integral returns ``inf``.  Requires
        ``lower <= upper <= t`` and ``power > 0``.
        """
        _require(power > 0.0 and math.isfinite(power), "power must be finite and > 0")
        _require(not math.isnan(lower) and math.isfinite(upper) and math.isfinite(t),
                 "upper and t must be finite, lower may be -inf")
        _require(lower <= upper, "integral bounds are inverted")
        _require(upper <= t, "integral requires upper <= t")
        lower = max(lower, -self.cutoff)
        if lower >= upper:
            return 0.0
        value = self._integral_closed(power, lower, upper, t)
        if value is None:
            value = integral_quadrature(self, power, lower, upper, t)
        return value

    def tail_start(self, power: float, t: float, tol: float) -> float:
        """A point a <= t with ``int_{-inf}^{a} K(s, t)**power ds <= tol``.

        Used to truncate infinite lower limits; conservative closed-form
        bounds per family.
        """
        raise NotImplementedError

    # -- structure ----------------------------------------------------------

    def separable(self) -> SeparableParts | None:
        """Return f, h with K(s, t) = f(s) exp(h(t)), or None."""
        return None

    def factors(self) -> list[tuple[float, float]] | None:
        """Weights and rates (w_j, lam_j) with K(u) = sum_j w_j lam_j e^{-lam_j u}.

        Only exponential-type kernels have them; others return None.
        """
        return None

    # -- hooks --------------------------------------------------------------

    def _zero_below_cutoff(self) -> bool:
        return False

    def _value(self, s: np.ndarray, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _derivative(self, s: np.ndarray, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _lag(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _integral_closed(self, power, lower, upper, t) -> float | None:
        return None


def _exp_segment(rate: float, lower: float, upper: float, t: float) -> float:
    """int_lower^upper exp(-rate * (t - s)) ds with lower possibly -inf."""
    hi = math.exp(-rate * (t - upper))
    lo = 0.0 if lower == -math.inf else math.exp(-rate * (t - lower))
    return (hi - lo) / rate


@dataclass(frozen=True)
class Exponential(Kernel):
    """Exponentially fading memory: K(s, t) = lam * exp(-lam * (t - s))."""

    lam: float
    cutoff: float = math.inf

    family = "exp"

    def __post_init__(self):
        _positive_finite(self.lam, "lam")
        _require(self.cutoff > 0.0, "cutoff must be > 0")

    def _lag(self, u):
        return self.lam * np.exp(-self.lam * u)

    def _value(self, s, t):
        return self._lag(t - s)

    def _derivative(self, s, t):
        return -self.lam * self._lag(t - s)

    def _integral_closed(self, power, lower, upper, t):
        return self.lam ** power * _exp_segment(power * self.lam, lower, upper, t)

    def tail_start(self, power, t, tol):
        if math.isfinite(self.cutoff):
            return -self.cutoff
        rate = power * self.lam
        # tail mass below a: lam**power * exp(-rate * (t - a)) / rate
        lag = math.log(max(self.lam ** power / (rate * tol), 1.0)) / rate
        return t - lag

    def separable(self):
        lam = self.lam

        def f(s):
            return lam * np.exp(lam * np.asarray(s, dtype=float))

        def h(t):
            return -lam * np.asarray(t, dtype=float)

        def h_prime(t):
            return np.full_like(np.asarray(t, dtype=float), -lam)

        return SeparableParts(f, h, h_prime)

    def factors(self):
        return [(1.0, self.lam)]


def tspl_normalization(alpha: float, delta: float, cutoff: float = math.inf) -> float:
    """Mass normalization Z with ``int_0^cutoff Z / (u + delta)**alpha du = 1``.

    For an infinite window ``alpha > 1`` is required (the tail mass diverges
    otherwise); any ``alpha > 0`` works on a finite window, with the
    logarithmic antiderivative taking over at ``alpha = 1``.
    """
    _positive_finite(alpha, "alpha")
    _positive_finite(delta, "delta")
    _require(cutoff > 0.0, "cutoff must be > 0")
    if not math.isfinite(cutoff):
        _require(alpha > 1.0, "tspl with infinite support requires alpha > 1")
        return (alpha - 1.0) * delta ** (alpha - 1.0)
    if alpha == 1.0:
        return 1.0 / math.log((cutoff + delta) / delta)
    return (alpha - 1.0) / (delta ** (1.0 - alpha) - (cutoff + delta) ** (1.0 - alpha))


@dataclass(frozen=True)
class TimeShiftedPowerLaw(Kernel):
    """Power-law memory, shifted off its singularity: K = z / (t - s + delta)**alpha.

    ``z`` defaults to the unit-mass normalization over the support; pass an
    explicit value to override.
    """

    alpha: float
    delta: float
    cutoff: float = math.inf
    z: float | None = None

    family = "tspl"

    def __post_init__(self):
        _positive_finite(self.alpha, "alpha")
        _positive_finite(self.delta, "delta")
        _require(self.cutoff > 0.0, "cutoff must be > 0")
        if self.z is None:
            object.__setattr__(self, "z", tspl_normalization(self.alpha, self.delta, self.cutoff))
        else:
            _positive_finite(self.z, "z")
            _require(math.isfinite(self.cutoff) or self.alpha > 1.0,
                     "tspl with infinite support requires alpha > 1")

    def _lag(self, u):
        return self.z / (u + self.delta) ** self.alpha

    def _value(self, s, t):
        return self._lag(t - s)

    def _derivative(self, s, t):
        return -self.alpha * self._lag(t - s) / (t - s + self.delta)

    def _integral_closed(self, power, lower, upper, t):
        q = self.alpha * power
        zp = self.z ** power
        a = t - upper + self.delta  # smaller shift
        if q == 1.0:
            if lower == -math.inf:
                return math.inf
            return zp * math.log((t - lower + self.delta) / a)
        if lower == -math.inf:
            if q < 1.0:
                return math.inf
            return zp * a ** (1.0 - q) / (q - 1.0)
        b = t - lower + self.delta
        return zp * (a ** (1.0 - q) - b ** (1.0 - q)) / (q - 1.0)

    def tail_start(self, power, t, tol):
        if math.isfinite(self.cutoff):
            return -self.cutoff
        q = self.alpha * power
        _require(q > 1.0, "tail of tspl**power diverges for alpha * power <= 1")
        lag = (self.z ** power / ((q - 1.0) * tol)) ** (1.0 / (q - 1.0)) - self.delta
        return t - max(lag, 0.0)


@dataclass(frozen=True)
class ExponentialCombo(Kernel):
    """Convex combination of two exponential kernels (fast + slow memory)."""

    theta: float
    lam_a: float
    lam_b: float
    cutoff: float = math.inf

    family = "combo"

    def __post_init__(self):
        _require(0.0 <= self.theta <= 1.0, f"theta must be in [0, 1], got {self.theta!r}")
        _positive_finite(self.lam_a, "lam_a")
        _positive_finite(self.lam_b, "lam_b")
        _require(self.cutoff > 0.0, "cutoff must be > 0")

    def _lag(self, u):
        return (self.theta * self.lam_a * np.exp(-self.lam_a * u)
                + (1.0 - self.theta) * self.lam_b * np.exp(-self.lam_b * u))

    def _value(self, s, t):
        return self._lag(t - s)

    def _derivative(self, s, t):
        u = t - s
        return -(self.theta * self.lam_a ** 2 * np.exp(-self.lam_a * u)
                 + (1.0 - self.theta) * self.lam_b ** 2 * np.exp(-self.lam_b * u))

    def _integral_closed(self, power, lower, upper, t):
        wa = self.theta * self.lam_a
        wb = (1.0 - self.theta) * self.lam_b
        if power == 1.0:
            return (wa * _exp_segment(self.lam_a, lower, upper, t)
                    + wb * _exp_segment(self.lam_b, lower, upper, t))
        if power == 2.0:
            return (wa ** 2 * _exp_segment(2.0 * self.lam_a, lower, upper, t)
                    + 2.0 * wa * wb * _exp_segment(self.lam_a + self.lam_b, lower, upper, t)
                    + wb ** 2 * _exp_segment(2.0 * self.lam_b, lower, upper, t))
        return None

    def tail_start(self, power, t, tol):
        if math.isfinite(self.cutoff):
            return -self.cutoff
        lam_min = min(self.lam_a, self.lam_b)
        peak = self.theta * self.lam_a + (1.0 - self.theta) * self.lam_b
        rate = power * lam_min
        lag = math.log(max(peak ** power / (rate * tol), 1.0)) / rate
        return t - lag

    def separable(self):
        if self.theta == 1.0:
            return Exponential(self.lam_a, self.cutoff).separable()
        if self.theta == 0.0:
            return Exponential(self.lam_b, self.cutoff).separable()
        return None

    def factors(self):
        out = []
        if self.theta > 0.0:
            out.append((self.theta, self.lam_a))
        if self.theta < 1.0:
            out.append((1.0 - self.theta, self.lam_b))
        return out


@dataclass(frozen=True)
class ShiftedPower(Kernel):
    """Window-relative power weighting: K(s, t) = ((s + c)/(t + c))**a on s >= -c.

    Not stationary in the lag; the only family here whose value at fixed lag
    changes with t.  The cutoff c (the history-window length) is part of the
    kernel itself and must be finite; the kernel is exactly 0 below -c.
    Requires ``t > -c``.
    """

    a: float
    cutoff: float

    family = "shifted_power"
    convolutional = False

    def __post_init__(self):
        _positive_finite(self.a, "a")
        _require(math.isfinite(self.cutoff) and self.cutoff > 0.0,
                 "shifted_power requires a finite cutoff > 0")

    def _zero_below_cutoff(self) -> bool:
        return True

    def _value(self, s, t):
        _require(bool(np.all(t > -self.cutoff)), "shifted_power requires t > -cutoff")
        num = np.maximum(s + self.cutoff, 0.0)
        return (num / (t + self.cutoff)) ** self.a

    def _derivative(self, s, t):
        return -self.a * self._value(s, t) / (t + self.cutoff)

    def _integral_closed(self, power, lower, upper, t):
        _require(t > -self.cutoff, "shifted_power requires t > -cutoff")
        q = self.a * power
        lo = max(lower, -self.cutoff)
        return (((upper + self.cutoff) ** (q + 1.0) - (lo + self.cutoff) ** (q + 1.0))
                / ((q + 1.0) * (t + self.cutoff) ** q))

    def tail_start(self, power, t, tol):
        return -self.cutoff

    def separable(self):
        a, c = self.a, self.cutoff

        def f(s):
            return np.maximum(np.asarray(s, dtype=float) + c, 0.0) ** a

        def h(t):
            return -a * np.log(np.asarray(t, dtype=float) + c)

        def h_prime(t):
            return -a / (np.asarray(t, dtype=float) + c)

        return SeparableParts(f, h, h_prime)


def integral_quadrature(kernel: Kernel, power: float, lower: float, upper: float,
                        t: float, abs_tol: float = QUAD_ABS_TOL) -> float:
    """``int_lower^upper K(s, t)**power ds`` by adaptive quadrature.

    Independent of the closed forms: evaluates the kernel pointwise and
    integrates with an adaptive Gauss-Kronrod scheme to absolute tolerance
    ``abs_tol``.  Infinite lower limits are truncated where the closed-form
    tail bound drops below a fraction of the tolerance.  Steep time-shifted
    power laws are split near ``s = upper`` so the subdivision concentrates
    where the integrand varies.
    """
    _require(power > 0.0, "power must be > 0")
    _require(lower <= upper <= t, "need lower <= upper <= t")
    lower = max(lower, -kernel.cutoff)
    if lower >= upper:
        return 0.0

    def integrand(s):
        return kernel.evaluate(s, t) ** power

    # Split so adaptive subdivision concentrates where the kernel is steep,
    # and hand unbounded tails to the infinite-interval transform.
    if isinstance(kernel, TimeShiftedPowerLaw):
        scale = 10.0 * kernel.delta
    elif isinstance(kernel, Exponential):
        scale = 1.0 / kernel.lam
    elif isinstance(kernel, ExponentialCombo):
        scale = 1.0 / min(kernel.lam_a, kernel.lam_b)
    else:
        scale = max(upper - lower, 1.0) if math.isfinite(lower) else 1.0
    edge = upper - scale
    pieces = [(max(lower, edge), upper)]
    if lower < edge:
        pieces.insert(0, (lower, edge))
    total = 0.0
    for a, b in pieces:
        value, _ = integrate.quad(integrand, a, b, epsabs=abs_tol, epsrel=1e-12, limit=400)
        total += value
    return total


def approximate_with_exponentials(kernel: Kernel, n_terms: int = 6,
                                  lag_min: float = 1.0 / 2520.0,
                                  lag_max: float | None = None,
                                  n_points: int = 200) -> tuple[list[tuple[float, float]], float]:
    """Fit sum_j w_j lam_j exp(-lam_j u) to a stationary kernel on a lag grid.

    Rates are log-spaced reciprocals of lags in [lag_min, lag_max]; weights
    are solved by nonnegative least squares on relative errors, which keeps
    the approximation a nonnegative kernel.  Returns the factor list
    (weights w_j and rates lam_j, zero-weight terms dropped) and the maximum
    relative error over the fitting grid.  This is what lets the recursive
    factor scheme run on power-law kernels, at the cost of the reported
    residual.
    """
    if not kernel.convolutional:
        raise KernelError("only lag-stationary kernels can be approximated")
    _require(n_terms >= 1, "n_terms must be >= 1")
    if lag_max is None:
        lag_max = min(kernel.cutoff, 8.0) if math.isfinite(kernel.cutoff) else 8.0
    _require(0.0 < lag_min < lag_max, "need 0 < lag_min < lag_max")
    lags = np.geomspace(lag_min, lag_max, n_points)
    target = np.asarray(kernel.lag_value(lags), dtype=float)
    rates = 1.0 / np.geomspace(lag_min, lag_max, n_terms)
    design = rates[None, :] * np.exp(-rates[None, :] * lags[:, None])
    scale = 1.0 / np.maximum(target, 1e-300)
    coef, _ = optimize.nnls(design * scale[:, None], target * scale)
    fitted = design @ coef
    residual = float(np.max(np.abs(fitted - target) * scale))
    factors = [(float(w), float(r)) for w, r in zip(coef, rates) if w > 0.0]
    _require(len(factors) >= 1, "exponential fit collapsed to zero terms")
    return factors, residual


# -- serialization -----------------------------------------------------------

_FIELD_NAMES = {
    "exp": ("lam",),
    "tspl": ("alpha", "delta"),
    "combo": ("theta", "lam_a", "lam_b"),
    "shifted_power": ("a",),
}

_CLASSES = {
    "exp": Exponential,
    "tspl": TimeShiftedPowerLaw,
    "combo": ExponentialCombo,
    "shifted_power": ShiftedPower,
}

_KEY_ALIASES = {"lambda": "lam", "lambda_a": "lam_a", "lambda_b": "lam_b"}


def kernel_to_dict(kernel: Kernel) -> dict[str, str]:
    """Flat string mapping describing the kernel; normalization never stored."""
    out = {"family": kernel.family}
    for name in _FIELD_NAMES[kernel.family]:
        out[name] = repr(getattr(kernel, name))
    out["cutoff"] = "inf" if not math.isfinite(kernel.cutoff) else repr(kernel.cutoff)
    return out


def kernel_from_dict(data: dict) -> Kernel:
    """Inverse of :func:`kernel_to_dict`; accepts strings or numbers."""
    items = {str(k).strip().lower(): v for k, v in data.items()}
    items = {_KEY_ALIASES.get(k, k): v for k, v in items.items()}
    family = str(items.pop("family", "")).strip().lower()
    if family not in _CLASSES:
        raise KernelError(f"unknown kernel family {family!r}; "
                          f"expected one of {sorted(_CLASSES)}")
    cls = _CLASSES[family]
    kwargs = {}
    for key, value in items.items():
        if key == "z":
            continue  # always recomputed
        valid = {f.name for f in fields(cls)}
        if key not in valid:
            raise KernelError(f"unknown parameter {key!r} for family {family!r}")
        kwargs[key] = float(value)
    missing = [n for n in _FIELD_NAMES[family] if n not in kwargs]
    if missing:
        raise KernelError(f"family {family!r} is missing parameters {missing}")
    return cls(**kwargs)


def serialize_kernel(kernel: Kernel) -> str:
    """Key=value lines, one per parameter, e.g. ``family=exp`` then ``lam=10.0``."""
    return "\n".join(f"{k}={v}" for k, v in kernel_to_dict(kernel).items()) + "\n"


def parse_kernel(text: str) -> Kernel:
    """Parse the :func:`serialize_kernel` format (whitespace tolerant)."""
    data = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise KernelError(f"line {line_no}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        data[key.strip()] = value.strip()
    if not data:
        raise KernelError("empty kernel description")
    return kernel_from_dict(data)
