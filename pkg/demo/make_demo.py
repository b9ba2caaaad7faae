"""Regenerate the bundled synthetic dataset.

Writes, next to this script:

* ``prices.csv``      — 5040 business days of synthetic prices.
* ``proxy.csv``       — volatility proxy built from the price returns by
                        the package's own feature engine with known
                        exp/tspl kernel parameters (lam=10, alpha=1.2,
                        delta=0.24, so 2*lam*delta/alpha = 4.0) and betas
                        (0.05, -0.5, 2.0), plus 0.1% relative noise.
* ``sample_prices_30.csv``   — the first 31 price rows (30 returns).
* ``features_golden_30.txt`` — features for the sample computed by an
                        explicit brute-force double loop, kept as the
                        golden reference for the CLI feature output.

Everything is deterministic; rerunning reproduces identical files.
"""

import pathlib

import numpy as np
import pandas as pd

from pdvol.features import compute_features
from pdvol.kernels import Exponential, TimeShiftedPowerLaw

HERE = pathlib.Path(__file__).resolve().parent

N_DAYS = 5040
SEED = 20240
K1 = Exponential(lam=10.0)
K2 = TimeShiftedPowerLaw(alpha=1.2, delta=0.24)
BETAS = (0.05, -0.5, 2.0)
NOISE_REL = 0.0005


def bruteforce_features(returns: np.ndarray):
    """Direct double-loop sums; the independent oracle for the golden file."""
    n = returns.size
    r1 = np.zeros(n)
    r2 = np.zeros(n)
    for t in range(n):
        for j in range(t + 1):
            lag = (j + 1) / 252.0
            r1[t] += K1.lag_value(lag) / 252.0 * returns[t - j]
            r2[t] += K2.lag_value(lag) / 252.0 * returns[t - j] ** 2
    return r1, r2


def main() -> None:
    rng = np.random.default_rng(SEED)
    dates = pd.bdate_range("2004-01-05", periods=N_DAYS)
    shocks = rng.normal(0.0, 0.02, size=N_DAYS - 1)
    prices = np.round(100.0 * np.cumprod(np.concatenate([[1.0],
                                                         1.0 + shocks])), 6)
    returns = prices[1:] / prices[:-1] - 1.0

    with open(HERE / "prices.csv", "w", newline="\n") as fh:
        fh.write("date,price\n")
        for d, p in zip(dates, prices):
            fh.write(f"{d.date()},{p:.6f}\n")

    feats = compute_features(returns, K1, K2, dates=dates[1:])
    proxy = (BETAS[0] + BETAS[1] * feats.r1 + BETAS[2] * np.sqrt(feats.r2))
    proxy = np.round(proxy * (1.0 + NOISE_REL
                              * rng.standard_normal(proxy.size)), 8)
    assert np.all(proxy > 0.0)
    with open(HERE / "proxy.csv", "w", newline="\n") as fh:
        fh.write("date,vol\n")
        for d, v in zip(dates[1:], proxy):
            fh.write(f"{d.date()},{v:.8f}\n")

    with open(HERE / "sample_prices_30.csv", "w", newline="\n") as fh:
        fh.write("date,price\n")
        for d, p in zip(dates[:31], prices[:31]):
            fh.write(f"{d.date()},{p:.6f}\n")

    g1, g2 = bruteforce_features(returns[:30])
    with open(HERE / "features_golden_30.txt", "w", newline="\n") as fh:
        fh.write("date R1 R2\n")
        for d, a, b in zip(dates[1:31], g1, g2):
            fh.write(f"{d.date()} {a:.17g} {b:.17g}\n")

    print(f"wrote {N_DAYS} prices, {proxy.size} proxy rows, 30-row sample "
          f"+ golden features into {HERE}")


if __name__ == "__main__":
    main()
