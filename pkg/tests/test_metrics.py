"""Error metrics, daily decomposition and block aggregation."""

import numpy as np
import pytest

from pvghi import InputError, bias_std_daily, block_average, normalized_rmse


def make_ts(n, step=600, start="2021-06-01T00:00:00"):
    return np.datetime64(start, "s") + np.arange(n) * np.timedelta64(step, "s")


def test_perfect_estimate():
    ref = np.array([0.0, 400.0, 600.0])
    rep = normalized_rmse(ref.copy(), ref)
    assert rep.nrmse == 0.0
    assert rep.rmse == 0.0
    assert rep.bias == 0.0


def test_hand_case():
    ref = np.array([0.0, 400.0, 600.0])
    est = ref + np.array([0.0, 50.0, -50.0])
    rep = normalized_rmse(est, ref)
    assert rep.k_n == 500.0
    np.testing.assert_allclose(rep.rmse, np.sqrt(5000.0 / 3.0))
    np.testing.assert_allclose(rep.nrmse, np.sqrt(5000.0 / 3.0) / 500.0)
    np.testing.assert_allclose(rep.nrmse, 0.0816, atol=5e-4)


def test_constant_daytime_offset_bias():
    # 10-sample fixture: 6 daytime samples offset by +20, 4 night zeros
    ref = np.array([0, 0, 100, 200, 300, 300, 200, 100, 0, 0], dtype=float)
    est = ref + np.where(ref > 0, 20.0, 0.0)
    rep = normalized_rmse(est, ref)
    np.testing.assert_allclose(rep.bias, 20.0 * 6 / 10)
    np.testing.assert_allclose(rep.k_n, ref[ref > 0].mean())


def test_identity_holds():
    rng = np.random.default_rng(18)
    ref = rng.uniform(0, 800, 500)
    est = ref + rng.normal(3.0, 25.0, 500)
    rep = normalized_rmse(est, ref)
    assert rep.identity_residual < 1e-9


def test_sign_symmetry():
    rng = np.random.default_rng(19)
    ref = rng.uniform(10, 800, 300)
    err = rng.normal(0, 30, 300)
    a = normalized_rmse(ref + err, ref)
    b = normalized_rmse(ref - err, ref)
    np.testing.assert_allclose(a.nrmse, b.nrmse)


def test_all_zero_reference_rejected():
    with pytest.raises(InputError):
        normalized_rmse(np.zeros(5), np.zeros(5))


def test_daily_constant_offset():
    ts = make_ts(288)  # two days at 10 min
    ref = np.full(288, 100.0)
    est = ref + 10.0
    daily = bias_std_daily(est, ref, ts)
    assert len(daily.dates) == 2
    np.testing.assert_allclose(daily.bias, 10.0)
    np.testing.assert_allclose(daily.std, 0.0)


def test_daily_identity_per_day():
    rng = np.random.default_rng(20)
    ts = make_ts(288)
    ref = rng.uniform(0, 600, 288)
    est = ref + rng.normal(5, 20, 288)
    daily = bias_std_daily(est, ref, ts)
    np.testing.assert_allclose(
        daily.bias**2 + daily.std**2, daily.rmse**2, rtol=1e-9
    )


def test_daily_alternating_errors():
    ts = make_ts(144)
    ref = np.full(144, 200.0)
    est = ref + np.where(np.arange(144) % 2 == 0, 10.0, -10.0)
    daily = bias_std_daily(est, ref, ts)
    np.testing.assert_allclose(daily.bias, 0.0, atol=1e-12)
    np.testing.assert_allclose(daily.std, 10.0)


def test_block_average_basic():
    ts = make_ts(12, step=600)
    vals = np.arange(12, dtype=float)
    avg, ts_b = block_average(vals, ts, 1800)
    np.testing.assert_allclose(avg, [1.0, 4.0, 7.0, 10.0])
    assert len(ts_b) == 4


def test_block_average_partial_block_dropped():
    ts = make_ts(10, step=600)
    vals = np.arange(10, dtype=float)
    avg, _ = block_average(vals, ts, 1800)
    assert len(avg) == 3  # the trailing 1-sample block is dropped


def test_aggregation_never_increases_nrmse_on_ar1_errors():
    rng = np.random.default_rng(21)
    n = 4320  # 30 days at 10 min
    ts = make_ts(n)
    ref = np.full(n, 500.0)
    err = np.empty(n)
    err[0] = rng.normal()
    for t in range(1, n):
        err[t] = 0.9 * err[t - 1] + rng.normal() * 10.0
    est = ref + err
    base = normalized_rmse(est, ref).nrmse
    last = base
    for minutes in (10, 30, 60):
        est_b, ts_b = block_average(est, ts, minutes * 60)
        ref_b, _ = block_average(ref, ts, minutes * 60)
        agg = normalized_rmse(est_b, ref_b).nrmse
        assert agg <= last + 1e-12
        last = agg
