import math

import numpy as np
import pandas as pd
import pytest

from pdvol.features import (
    DataError,
    FeaturePath,
    MarketDataset,
    PriceSeries,
    align,
    compute_features,
    feature_weights,
    load_prices,
    load_proxy,
)
from pdvol.kernels import (
    Exponential,
    ExponentialCombo,
    ShiftedPower,
    TimeShiftedPowerLaw,
)


def bdays(n, start="2020-01-01"):
    return pd.bdate_range(start, periods=n)


def write_csv(path, header, rows):
    path.write_text("\n".join([header] + rows) + "\n")
    return path


class TestLoading:
    def test_prices_roundtrip_and_returns(self, tmp_path):
        p = write_csv(tmp_path / "p.csv", "date,price",
                      ["2020-01-02,100.0", "2020-01-03,110.0",
                       "2020-01-06,99.0"])
        series = load_prices(p)
        assert list(series.dates.strftime("%Y-%m-%d")) == [
            "2020-01-02", "2020-01-03", "2020-01-06"]
        np.testing.assert_allclose(series.returns, [0.1, -0.1], rtol=1e-15)
        np.testing.assert_allclose(series.log_returns,
                                   [math.log(1.1), math.log(0.9)], rtol=1e-14)
        assert list(series.return_dates) == list(series.dates[1:])

    def test_unsorted_is_sorted_with_warning(self, tmp_path):
        p = write_csv(tmp_path / "p.csv", "date,price",
                      ["2020-01-03,110.0", "2020-01-02,100.0"])
        with pytest.warns(UserWarning, match="not sorted"):
            series = load_prices(p)
        assert series.prices[0] == 100.0

    def test_duplicate_date_rejected(self, tmp_path):
        p = write_csv(tmp_path / "p.csv", "date,price",
                      ["2020-01-02,100.0", "2020-01-02,101.0",
                       "2020-01-03,99.0"])
        with pytest.raises(DataError, match="duplicate date 2020-01-02"):
            load_prices(p)

    def test_nonpositive_price_rejected_with_row(self, tmp_path):
        p = write_csv(tmp_path / "p.csv", "date,price",
                      ["2020-01-02,100.0", "2020-01-03,0.0"])
        with pytest.raises(DataError, match="row 3: non-positive price"):
            load_prices(p)

    def test_bad_date_and_bad_number(self, tmp_path):
        p = write_csv(tmp_path / "p.csv", "date,price",
                      ["2020-01-02,100.0", "notadate,1.0"])
        with pytest.raises(DataError, match="row 3: unparseable date"):
            load_prices(p)
        q = write_csv(tmp_path / "q.csv", "date,price",
                      ["2020-01-02,abc"])
        with pytest.raises(DataError, match="row 2: non-numeric"):
            load_prices(q)

    def test_missing_column_and_file(self, tmp_path):
        p = write_csv(tmp_path / "p.csv", "day,price", ["2020-01-02,1.0"])
        with pytest.raises(DataError, match="missing column 'date'"):
            load_prices(p)
        with pytest.raises(DataError, match="file not found"):
            load_prices(tmp_path / "absent.csv")

    def test_single_row_rejected(self, tmp_path):
        p = write_csv(tmp_path / "p.csv", "date,price", ["2020-01-02,1.0"])
        with pytest.raises(DataError, match="at least two"):
            load_prices(p)

    def test_proxy_loading_and_negative_value(self, tmp_path):
        p = write_csv(tmp_path / "v.csv", "date,vol",
                      ["2020-01-02,0.2", "2020-01-03,0.25"])
        dates, values = load_proxy(p)
        np.testing.assert_array_equal(values, [0.2, 0.25])
        q = write_csv(tmp_path / "w.csv", "date,vol", ["2020-01-02,-0.1"])
        with pytest.raises(DataError, match="negative volatility"):
            load_proxy(q)

    def test_custom_delimiter_and_columns(self, tmp_path):
        p = write_csv(tmp_path / "p.txt", "dt;close",
                      ["2020-01-02;100.0", "2020-01-03;101.0"])
        series = load_prices(p, date_column="dt", price_column="close",
                             delimiter=";")
        assert series.prices[1] == 101.0

    def test_dataset_alignment_validation(self):
        series = PriceSeries(dates=bdays(4), prices=np.array([1., 2., 3., 4.]))
        with pytest.raises(DataError, match="not\\s+in the price calendar"):
            MarketDataset(prices=series,
                          proxy_dates=pd.DatetimeIndex(["2019-06-01"]),
                          proxy=np.array([0.2]),
                          split_date=pd.Timestamp("2020-01-03"))
        with pytest.raises(DataError, match="differ in length"):
            MarketDataset(prices=series, proxy_dates=series.dates[:2],
                          proxy=np.array([0.2]),
                          split_date=pd.Timestamp("2020-01-03"))
        ok = MarketDataset(prices=series, proxy_dates=series.dates[1:],
                           proxy=np.array([0.2, 0.21, 0.19]),
                           split_date=pd.Timestamp("2020-01-03"))
        assert ok.proxy.size == 3


class TestWeights:
    def test_exponential_weights_closed_form(self):
        k = Exponential(lam=7.0)
        w = feature_weights(k, 4)
        expect = [7.0 * math.exp(-7.0 * (j + 1) / 252.0) / 252.0
                  for j in range(4)]
        np.testing.assert_allclose(w, expect, rtol=1e-15)

    def test_cutoff_truncates(self):
        k = Exponential(lam=7.0)
        assert feature_weights(k, 100, cutoff_days=10).size == 10
        np.testing.assert_array_equal(feature_weights(k, 5, cutoff_days=50),
                                      feature_weights(k, 5))
        with pytest.raises(DataError, match="cutoff_days"):
            feature_weights(k, 5, cutoff_days=0)

    def test_window_relative_kernel_rejected(self):
        with pytest.raises(DataError, match="window-relative"):
            feature_weights(ShiftedPower(a=1.0, cutoff=0.1), 5)


class TestComputeFeatures:
    def test_single_return_oracle(self):
        # one return r at the newest day: R1 = lam * e^{-lam/252} * r / 252
        lam, r = 7.0, 0.013
        u = np.array([0.0, 0.0, 0.0, r])
        feats = compute_features(u, Exponential(lam), Exponential(lam),
                                 method="direct")
        expect = lam * math.exp(-lam / 252.0) * r / 252.0
        assert feats.r1[-1] == pytest.approx(expect, rel=1e-15)
        assert feats.r2[-1] == pytest.approx(
            lam * math.exp(-lam / 252.0) * r * r / 252.0, rel=1e-15)
        # older rows: the return has not happened yet
        np.testing.assert_array_equal(feats.r1[:-1], 0.0)

    def test_zero_returns_give_zero_features(self):
        feats = compute_features(np.zeros(50), Exponential(3.0),
                                 TimeShiftedPowerLaw(alpha=1.2, delta=0.05))
        np.testing.assert_array_equal(feats.r1, 0.0)
        np.testing.assert_array_equal(feats.r2, 0.0)

    def test_direct_matches_bruteforce_loop(self):
        rng = np.random.default_rng(5)
        u = rng.normal(0.0, 0.01, size=40)
        k1 = TimeShiftedPowerLaw(alpha=1.3, delta=0.02)
        k2 = Exponential(lam=12.0)
        feats = compute_features(u, k1, k2, method="direct")
        for t in (0, 7, 39):
            r1 = sum(k1.lag_value((j + 1) / 252.0) / 252.0 * u[t - j]
                     for j in range(t + 1))
            r2 = sum(k2.lag_value((j + 1) / 252.0) / 252.0 * u[t - j] ** 2
                     for j in range(t + 1))
            assert feats.r1[t] == pytest.approx(r1, rel=1e-13, abs=1e-18)
            assert feats.r2[t] == pytest.approx(r2, rel=1e-13, abs=1e-18)

    @pytest.mark.parametrize("kernel", [
        Exponential(lam=10.0),
        ExponentialCombo(theta=0.3, lam_a=25.0, lam_b=1.5),
    ])
    def test_recursion_matches_direct(self, kernel):
        rng = np.random.default_rng(11)
        u = rng.normal(0.0, 0.01, size=3000)
        a = compute_features(u, kernel, kernel, method="recursion")
        b = compute_features(u, kernel, kernel, method="direct")
        scale = np.max(np.abs(b.r1))
        assert np.max(np.abs(a.r1 - b.r1)) <= 1e-12 * max(1.0, scale)
        assert np.max(np.abs(a.r2 - b.r2)) <= 1e-12 * max(1.0, np.max(b.r2))

    def test_fft_matches_direct(self):
        rng = np.random.default_rng(12)
        u = rng.normal(0.0, 0.01, size=2000)
        k1 = TimeShiftedPowerLaw(alpha=1.1, delta=0.01)
        a = compute_features(u, k1, k1, method="fft")
        b = compute_features(u, k1, k1, method="direct")
        np.testing.assert_allclose(a.r1, b.r1, rtol=1e-11, atol=1e-16)
        assert np.all(a.r2 >= 0.0)

    def test_auto_routes_by_kernel(self):
        rng = np.random.default_rng(13)
        u = rng.normal(0.0, 0.01, size=200)
        exp, tspl = Exponential(4.0), TimeShiftedPowerLaw(alpha=1.4, delta=0.1)
        auto = compute_features(u, exp, tspl)
        np.testing.assert_array_equal(
            auto.r1, compute_features(u, exp, exp, method="recursion").r1)
        np.testing.assert_array_equal(
            auto.r2, compute_features(u, exp, tspl, method="direct").r2)
        # a cutoff forces the direct route even for exponentials
        cut = compute_features(u, exp, tspl, cutoff_days=50)
        np.testing.assert_array_equal(
            cut.r1,
            compute_features(u, exp, tspl, method="direct",
                             cutoff_days=50).r1)

    def test_truncation_consistency(self):
        rng = np.random.default_rng(14)
        u = rng.normal(0.0, 0.01, size=1500)
        k = Exponential(lam=20.0)
        full = compute_features(u, k, k, method="direct")
        huge = compute_features(u, k, k, method="direct", cutoff_days=10**7)
        np.testing.assert_array_equal(full.r1, huge.r1)
        cut_days = 200
        cut = compute_features(u, k, k, method="direct", cutoff_days=cut_days)
        # dropped tail is bounded by max |u| times the kernel tail mass
        tail = k.integral(1.0, -math.inf, -cut_days / 252.0, 0.0)
        bound = np.max(np.abs(u)) * tail
        assert np.max(np.abs(full.r1 - cut.r1)) <= bound + 1e-18

    def test_shift_covariance(self):
        rng = np.random.default_rng(15)
        u = rng.normal(0.0, 0.01, size=300)
        k = Exponential(lam=8.0)
        a = compute_features(u, k, k, dates=bdays(300, "2015-03-02"))
        b = compute_features(u, k, k, dates=bdays(300, "2021-07-05"))
        np.testing.assert_array_equal(a.r1, b.r1)
        np.testing.assert_array_equal(a.r2, b.r2)

    def test_monotone_response(self):
        k = Exponential(lam=5.0)
        u = np.full(100, 0.01)
        feats = compute_features(u, k, k)
        assert np.all(np.diff(feats.r1) > 0.0)  # accumulating positive trend
        bumped = u.copy()
        bumped[40] += 0.05
        f2 = compute_features(bumped, k, k)
        assert np.all(f2.r1[40:] > feats.r1[40:])
        np.testing.assert_array_equal(f2.r1[:40], feats.r1[:40])

    def test_validation_errors(self):
        k = Exponential(lam=5.0)
        with pytest.raises(DataError, match="nonempty"):
            compute_features(np.array([]), k, k)
        with pytest.raises(DataError, match="non-finite value at position 2"):
            compute_features(np.array([0.0, 0.1, np.nan]), k, k)
        with pytest.raises(DataError, match="differ in length"):
            compute_features(np.zeros(5), k, k, dates=bdays(4))
        with pytest.raises(DataError, match="unknown feature method"):
            compute_features(np.zeros(5), k, k, method="magic")
        with pytest.raises(DataError, match="full\\s+history"):
            compute_features(np.zeros(100), k, k, method="recursion",
                             cutoff_days=10)
        with pytest.raises(DataError, match="no rolling\\s+recursion"):
            compute_features(np.zeros(5),
                             TimeShiftedPowerLaw(alpha=1.2, delta=0.1), k,
                             method="recursion")
        with pytest.raises(DataError, match="window-relative"):
            compute_features(np.zeros(5), ShiftedPower(a=1.0, cutoff=0.1), k)

    def test_to_text_is_columnar(self):
        feats = compute_features(np.array([0.01, -0.02]), Exponential(2.0),
                                 Exponential(2.0), dates=bdays(2))
        lines = feats.to_text().splitlines()
        assert lines[0] == "date R1 R2"
        date, r1, r2 = lines[1].split()
        assert date == "2020-01-01"
        assert float(r1) == feats.r1[0]
        assert float(r2) == feats.r2[0]


class TestAlign:
    def make_features(self, n=6):
        dates = bdays(n)
        return FeaturePath(dates=dates, r1=np.arange(n, dtype=float),
                           r2=np.arange(n, dtype=float) ** 2)

    def test_inner_join_split_and_dropped(self):
        feats = self.make_features(6)
        proxy_dates = feats.dates[[1, 3, 5]]
        proxy = np.array([0.2, 0.3, 0.4])
        train, test, dropped = align(feats, proxy_dates, proxy,
                                     feats.dates[3])
        assert dropped == 3
        np.testing.assert_array_equal(train.r1, [1.0])
        np.testing.assert_array_equal(train.y, [0.2])
        np.testing.assert_array_equal(test.r1, [3.0, 5.0])
        np.testing.assert_array_equal(test.sqrt_r2, [3.0, 5.0])
        assert train.size == 1 and test.size == 2

    def test_design_matrix(self):
        feats = self.make_features(4)
        train, test, _ = align(feats, feats.dates, np.full(4, 0.2),
                               feats.dates[2])
        design = train.design
        np.testing.assert_array_equal(design[:, 0], 1.0)
        np.testing.assert_array_equal(design[:, 1], train.r1)
        np.testing.assert_array_equal(design[:, 2], train.sqrt_r2)

    def test_empty_partitions_raise(self):
        feats = self.make_features(4)
        proxy = np.full(4, 0.2)
        with pytest.raises(DataError, match="train partition is empty"):
            align(feats, feats.dates, proxy, feats.dates[0])
        with pytest.raises(DataError, match="test partition is empty"):
            align(feats, feats.dates, proxy,
                  feats.dates[-1] + pd.Timedelta(days=1))
