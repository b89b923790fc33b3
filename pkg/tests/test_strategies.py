import math

import numpy as np
import pytest

from ammlab import ammcore, backtest, envsim, marketdata, neural, regime, strategies as st
from ammlab.agent import Q_NET_DIMS
from ammlab.ammcore import PoolConfig
from ammlab.errors import ShapeError
from ammlab.synthpath import OuParams, RegimeSchedule, VolumeModel, simulate_schedule

POOL = PoolConfig()


def series_from_closes(closes, volume=1000.0):
    bars = [marketdata.Bar(i, c, c, c, c, volume) for i, c in enumerate(closes)]
    return marketdata.series_from_bars(bars)


def ctx_for(price, center, theta=0.05, mu=100.0, sigma=0.5, valid=True, width=0.002):
    pos = ammcore.Position(center=center, width=width, capital=1e4)
    est = regime.RegimeEstimate(theta=theta, mu=mu, sigma=sigma, window_len=1800, valid=valid)
    state = envsim.build_state(price, pos, est, 0.0)
    return st.DecisionContext(index=0, price=price, position=pos, estimate=est, agent_state=state)


def constant_policy_net(q0, q1):
    net = neural.Mlp(Q_NET_DIMS, seed=0)
    for w in net.weights:
        w[:] = 0.0
    for b in net.biases:
        b[:] = 0.0
    net.biases[-1][:] = [q0, q1]
    return net


class TestMerlin:
    def test_range_spans_series(self):
        closes = np.concatenate([np.linspace(2200, 3067, 500), np.linspace(3000, 2108, 500)])
        m = st.Merlin()
        m.prepare(series_from_closes(closes))
        assert m.center == pytest.approx(2587.5)
        assert m.width == pytest.approx(0.1853, abs=2e-4)
        assert ammcore.concentration(m.width) == pytest.approx(2.32, abs=0.01)

    def test_constant_series_clamps_width(self):
        m = st.Merlin()
        m.prepare(series_from_closes(np.full(100, 100.0)))
        assert m.width == st.MERLIN_MIN_WIDTH

    def test_small_series(self):
        m = st.Merlin()
        m.prepare(series_from_closes([100.0, 102.0]))
        assert m.center == pytest.approx(101.0)
        assert m.width == pytest.approx(1.0 / 101.0)

    def test_never_adjusts(self):
        m = st.Merlin()
        m.prepare(series_from_closes([100.0, 90.0, 110.0]))
        assert isinstance(m.decide(ctx_for(90.0, 100.0)), st.Hold)


class TestBedivere:
    def test_holds_out_of_range(self):
        b = st.Bedivere()
        assert isinstance(b.decide(ctx_for(150.0, 100.0)), st.Hold)

    def test_single_rebalance_per_run(self):
        series = series_from_closes(100.0 + np.sin(np.arange(300) / 10.0))
        report, _ = backtest.run(st.Bedivere(), series, POOL)
        assert report.rebalance_count == 1


class TestLancelot:
    def test_holds_in_range(self):
        assert isinstance(st.Lancelot().decide(ctx_for(100.1, 100.0)), st.Hold)

    def test_recenters_when_out(self):
        decision = st.Lancelot().decide(ctx_for(100.5, 100.0))
        assert isinstance(decision, st.Recenter)

    def test_always_active_structurally(self):
        rng = np.random.default_rng(0)
        series = series_from_closes(100.0 * np.exp(np.cumsum(rng.normal(0, 2e-3, 2000))))
        report, _ = backtest.run(st.Lancelot(), series, POOL)
        assert report.active_fraction == 1.0


class TestGalahadOu:
    def test_invalid_estimate_holds(self):
        g = st.GalahadOu()
        assert isinstance(g.decide(ctx_for(100.5, 100.0, valid=False)), st.Hold)

    def test_forecast_value(self):
        g = st.GalahadOu(horizon=60.0)
        decision = g.decide(ctx_for(104.0, 100.0, theta=0.01, mu=100.0))
        assert isinstance(decision, st.RecenterAt)
        assert decision.price == pytest.approx(100.0 + 4.0 * math.exp(-0.6), abs=1e-6)
        assert decision.price == pytest.approx(102.195, abs=1e-3)

    def test_large_theta_targets_mean(self):
        # center far above the mean: the forecast collapses onto mu
        g = st.GalahadOu(horizon=60.0)
        decision = g.decide(ctx_for(104.0, 105.0, theta=1.0, mu=100.0))
        assert isinstance(decision, st.RecenterAt)
        assert decision.price == pytest.approx(100.0, abs=1e-12)

    def test_theta_zero_degenerates_to_lancelot(self):
        rng = np.random.default_rng(5)
        series = series_from_closes(100.0 * np.exp(np.cumsum(rng.normal(0, 2e-3, 1500))))
        _, tr_g = backtest.run(st.GalahadOu(theta_override=0.0), series, POOL, collect_trace=True)
        _, tr_l = backtest.run(st.Lancelot(), series, POOL, collect_trace=True)
        acts_g = [(r[0], r[3], r[2]) for r in tr_g]  # (t, acted, resulting center)
        acts_l = [(r[0], r[3], r[2]) for r in tr_l]
        assert acts_g == acts_l

    def test_in_range_forecast_holds(self):
        g = st.GalahadOu(horizon=60.0)
        assert isinstance(g.decide(ctx_for(100.1, 100.0, theta=0.01)), st.Hold)


class TestPolicyStrategy:
    def test_constant_hold(self):
        pol = st.PolicyStrategy(constant_policy_net(0.0, -1.0))
        assert isinstance(pol.decide(ctx_for(105.0, 100.0)), st.Hold)

    def test_constant_recenter(self):
        pol = st.PolicyStrategy(constant_policy_net(-1.0, 0.0))
        assert isinstance(pol.decide(ctx_for(100.0, 100.0)), st.Recenter)

    def test_tie_holds(self):
        pol = st.PolicyStrategy(constant_policy_net(0.0, 0.0))
        assert isinstance(pol.decide(ctx_for(100.0, 100.0)), st.Hold)

    def test_shape_check(self):
        with pytest.raises(ShapeError):
            st.PolicyStrategy(neural.Mlp([8, 4, 2], seed=0))

    def test_from_checkpoint(self, tmp_path):
        net = constant_policy_net(-1.0, 0.0)
        path = tmp_path / "ckpt.json"
        neural.save_checkpoint(path, net)
        pol = st.PolicyStrategy.from_checkpoint(path)
        assert isinstance(pol.decide(ctx_for(100.0, 100.0)), st.Recenter)


class TestNoLookAhead:
    @pytest.mark.parametrize("factory", [st.Lancelot, st.GalahadOu, st.Bedivere])
    def test_prefix_decisions_stable(self, factory):
        sched = RegimeSchedule(
            segments=((800, OuParams(0.01, 100.0, 0.05)),),
            initial_price=100.0,
            volume_model=VolumeModel(1000.0, 1.0),
        )
        series = simulate_schedule(sched, 3)
        prefix = series.slice(0, 500)
        _, tr_full = backtest.run(factory(), series, POOL, collect_trace=True)
        _, tr_prefix = backtest.run(factory(), prefix, POOL, collect_trace=True)
        full_actions = [(r[0], r[3], r[2]) for r in tr_full[:500]]
        prefix_actions = [(r[0], r[3], r[2]) for r in tr_prefix]
        assert full_actions == prefix_actions


class TestRegistry:
    def test_known_names(self):
        for name, cls in [
            ("merlin", st.Merlin),
            ("bedivere", st.Bedivere),
            ("lancelot", st.Lancelot),
            ("galahad", st.GalahadOu),
        ]:
            assert isinstance(st.make_strategy(name), cls)

    def test_galahad_params(self):
        g = st.make_strategy("galahad", {"horizon": 30.0, "theta_override": 0.0})
        assert g.horizon == 30.0 and g.theta_override == 0.0

    def test_unknown_name(self):
        with pytest.raises(ValueError):
            st.make_strategy("gawain")

    def test_rammstein_needs_checkpoint(self):
        with pytest.raises(ValueError):
            st.make_strategy("rammstein")
