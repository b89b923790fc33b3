import numpy as np
import pytest

from ammlab import synthpath as sp


class TestSimulateOu:
    def test_half_life_decay(self):
        # noiseless path: a 10-unit deviation halves over one half-life
        path = sp.simulate_ou(sp.OuParams(0.01, 100.0, 0.0), 110.0, 1, dt=69.31471805599453, seed=0)
        assert path[-1] == pytest.approx(105.0, abs=1e-9)

    def test_no_drift_no_noise_constant(self):
        path = sp.simulate_ou(sp.OuParams(0.0, 100.0, 0.0), 123.0, 50, 1.0, seed=0)
        assert np.all(path == 123.0)

    def test_stationary_variance(self):
        params = sp.OuParams(0.05, 100.0, 0.5)
        path = sp.simulate_ou(params, 100.0, 100_000, 1.0, seed=7)
        expected = params.sigma**2 / (2 * params.theta)
        assert np.var(path) == pytest.approx(expected, rel=0.10)

    def test_seed_determinism(self):
        a = sp.simulate_ou(sp.OuParams(0.01, 100.0, 0.3), 101.0, 1000, 1.0, seed=42)
        b = sp.simulate_ou(sp.OuParams(0.01, 100.0, 0.3), 101.0, 1000, 1.0, seed=42)
        assert np.array_equal(a, b)

    def test_increment_variance_matches_exact_discretization(self):
        params = sp.OuParams(0.02, 100.0, 0.4)
        dt = 3.0
        path = sp.simulate_ou(params, 100.0, 100_000, dt, seed=3)
        decay = np.exp(-params.theta * dt)
        innovations = path[1:] - (params.mu + (path[:-1] - params.mu) * decay)
        expected = params.sigma**2 * (1 - np.exp(-2 * params.theta * dt)) / (2 * params.theta)
        assert np.var(innovations) == pytest.approx(expected, rel=0.05)

    def test_long_path_mean_converges(self):
        params = sp.OuParams(0.05, 100.0, 0.5)
        n = 200_000
        path = sp.simulate_ou(params, 100.0, n, 1.0, seed=11)
        # time-average of an OU path has standard error ~ sigma/(theta sqrt(n))
        se = params.sigma / (params.theta * np.sqrt(n))
        assert abs(np.mean(path) - params.mu) < 3 * se

    def test_theta_zero_is_random_walk_variance(self):
        path = sp.simulate_ou(sp.OuParams(0.0, 100.0, 1.0), 100.0, 50_000, 1.0, seed=5)
        assert np.var(np.diff(path)) == pytest.approx(1.0, rel=0.05)

    def test_validation(self):
        with pytest.raises(ValueError):
            sp.simulate_ou(sp.OuParams(0.01, 100.0, 0.1), 100.0, 0, 1.0, 0)
        with pytest.raises(ValueError):
            sp.OuParams(-0.1, 100.0, 0.1)
        with pytest.raises(ValueError):
            sp.OuParams(0.1, -5.0, 0.1)


def two_regime_schedule(sig=0.3, vol=sp.VolumeModel(1000.0, 1.0)):
    return sp.RegimeSchedule(
        segments=((20_000, sp.OuParams(0.05, 100.0, sig)), (20_000, sp.OuParams(0.0005, 100.0, sig))),
        initial_price=100.0,
        volume_model=vol,
    )


class TestSimulateSchedule:
    def test_flat_degenerate_schedule(self):
        sched = sp.RegimeSchedule(
            segments=((100, sp.OuParams(0.0, 100.0, 0.0)),),
            initial_price=100.0,
            volume_model=sp.VolumeModel(500.0, 1.0),
        )
        series = sp.simulate_schedule(sched, 0)
        assert np.all(series.close == 100.0)
        assert np.all(series.volume == 500.0)  # zero returns leave volume at base

    def test_zero_coupling_constant_volume(self):
        sched = sp.RegimeSchedule(
            segments=((500, sp.OuParams(0.01, 100.0, 0.5)),),
            initial_price=100.0,
            volume_model=sp.VolumeModel(750.0, 0.0),
        )
        series = sp.simulate_schedule(sched, 1)
        assert np.all(series.volume == 750.0)

    def test_segments_join_continuously(self):
        series = sp.simulate_schedule(two_regime_schedule(), 5)
        assert len(series) == 40_000
        assert np.all(series.open[1:] == series.close[:-1])
        assert np.all(np.diff(series.t) == 1)

    def test_return_autocorrelation_orders_regimes(self):
        # strong mean reversion makes one-second returns more anti-persistent
        series = sp.simulate_schedule(two_regime_schedule(), 9)
        r1 = np.diff(series.close[:20_000])
        r2 = np.diff(series.close[20_000:])

        def lag1(x):
            return np.corrcoef(x[:-1], x[1:])[0, 1]

        assert lag1(r1) < lag1(r2)

    def test_ohlc_consistency(self):
        series = sp.simulate_schedule(two_regime_schedule(), 2)
        assert np.all(series.low <= series.open) and np.all(series.open <= series.high)
        assert np.all(series.low <= series.close) and np.all(series.close <= series.high)
        assert np.all(series.volume >= 0)

    def test_seed_determinism(self):
        a = sp.simulate_schedule(two_regime_schedule(), 33)
        b = sp.simulate_schedule(two_regime_schedule(), 33)
        assert np.array_equal(a.close, b.close) and np.array_equal(a.volume, b.volume)
