"""Strategy backtests, gas-cost sweeps, and decision-boundary grids.

The runner walks a bar series second by second: the strategy decides
from the current bar, the decision is applied (recenters pay the full
rebalance cost), then the second's fees accrue at the resulting center.
A strategy that always recenters on exit is therefore in range at every
accounted second by construction.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace

import numpy as np

from . import ammcore, envsim, neural
from .ammcore import PoolConfig
from .envsim import FeatureTrack
from .errors import EmptyData
from .marketdata import BarSeries
from .strategies import DecisionContext, Hold, Recenter, RecenterAt, Strategy


@dataclass(frozen=True)
class BacktestReport:
    strategy: str
    active_fraction: float
    normalized_liquidity: float
    rebalance_count: int
    total_fees: float
    total_gas: float
    net_roi: float
    capital: float
    config_hash: str = ""
    trace_path: str | None = None

    def metrics(self) -> dict:
        return {
            "active_frac": self.active_fraction,
            "lambda": self.normalized_liquidity,
            "rebalances": self.rebalance_count,
            "fees": self.total_fees,
            "gas": self.total_gas,
            "net_roi": self.net_roi,
        }

    def to_json_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "config_hash": self.config_hash,
            "metrics": self.metrics(),
            "trace_path": self.trace_path,
        }


def run(
    strategy: Strategy,
    series: BarSeries,
    cfg: PoolConfig | None = None,
    capital: float = 10_000.0,
    features: FeatureTrack | None = None,
    collect_trace: bool = False,
    config_hash: str = "",
):
    """Backtest one strategy over one series; returns (report, trace rows)."""
    if len(series) == 0:
        raise EmptyData("cannot backtest an empty series")
    cfg = cfg or PoolConfig()
    features = features or FeatureTrack(series)
    strategy.prepare(series)

    s0 = float(series.close[0])
    center0, width0 = strategy.initial_range(s0, cfg.width)
    pos = ammcore.Position(center=center0, width=width0, capital=capital)
    pos.rebalance_count = 1
    pos.accrued_gas = cfg.gas_cost

    trace = []
    for i in range(len(series)):
        price = float(series.close[i])
        est = features.estimate(i)
        state = envsim.build_state(price, pos, est, float(features.recent_vol[i]))
        decision = strategy.decide(
            DecisionContext(index=i, price=price, position=pos, estimate=est, agent_state=state)
        )
        acted = 0
        gas_before = pos.accrued_gas
        if isinstance(decision, Recenter):
            ammcore.recenter(pos, price, cfg)
            acted = 1
        elif isinstance(decision, RecenterAt):
            ammcore.recenter(pos, decision.price, cfg)
            acted = 1
        elif not isinstance(decision, Hold):
            raise TypeError(f"unknown decision {decision!r}")
        fee = ammcore.fee_step(pos, price, float(series.volume[i]), cfg)
        if collect_trace:
            in_now = 1 if ammcore.in_range(pos, price) else 0
            trace.append(
                (int(series.t[i]), price, pos.center, acted, fee, pos.accrued_gas - gas_before, 0.0, state.theta, in_now)
            )

    report = BacktestReport(
        strategy=strategy.name,
        active_fraction=ammcore.active_fraction(pos),
        normalized_liquidity=ammcore.concentration(pos.width),
        rebalance_count=pos.rebalance_count,
        total_fees=pos.accrued_fees,
        total_gas=pos.accrued_gas,
        net_roi=ammcore.net_roi(pos),
        capital=capital,
        config_hash=config_hash,
    )
    return report, trace


def rebalance_deviations(trace) -> list[float]:
    """Relative deviations |S/c - 1| at each rebalance event of a trace.

    The deviation is measured against the center held *before* the
    rebalance was applied, i.e. the trigger depth.
    """
    out = []
    prev_center = None
    for row in trace:
        _, price, center, acted, *_ = row
        if acted and prev_center is not None:
            out.append(abs(price / prev_center - 1.0))
        prev_center = center
    return out


def gas_sweep(
    strategy_factories,
    series: BarSeries,
    gas_levels=(1.0, 2.0, 5.0, 10.0, 20.0, 50.0),
    cfg: PoolConfig | None = None,
    capital: float = 10_000.0,
    features: FeatureTrack | None = None,
):
    """Net ROI per (gas level, strategy) plus interpolated break-even gas.

    Returns (rows, break_evens): rows are (gas, name, net_roi) and
    break_evens maps name -> gas where net ROI crosses zero (linear
    interpolation between bracketing levels; ROI is affine in gas for
    gas-blind strategies, so extrapolation from the last segment is used
    when no bracket exists).
    """
    if any(g <= 0 for g in gas_levels):
        raise ValueError("gas levels must be positive")
    cfg = cfg or PoolConfig()
    features = features or FeatureTrack(series)
    gas_levels = sorted(gas_levels)

    rows = []
    curves: dict[str, list[tuple[float, float]]] = {}
    for name, factory in strategy_factories:
        for g in gas_levels:
            report, _ = run(factory(), series, replace(cfg, gas_cost=g), capital, features)
            rows.append((g, name, report.net_roi))
            curves.setdefault(name, []).append((g, report.net_roi))

    break_evens = {name: _break_even(curve) for name, curve in curves.items()}
    return rows, break_evens


def _break_even(curve) -> float:
    """Gas level where the (gas, roi) curve crosses zero."""
    for (g0, r0), (g1, r1) in zip(curve, curve[1:]):
        if (r0 >= 0.0) != (r1 >= 0.0):
            return g0 + (g1 - g0) * r0 / (r0 - r1)
    # no sign change among the levels: extend the final affine segment
    (g0, r0), (g1, r1) = curve[-2], curve[-1]
    if r0 == r1:
        return float("inf") if r1 > 0 else float("-inf")
    return g0 + (g1 - g0) * r0 / (r0 - r1)


@dataclass(frozen=True)
class HeatmapGrid:
    theta_axis: np.ndarray
    d_edge_axis: np.ndarray
    q_diff: np.ndarray  # shape (len(theta_axis), len(d_edge_axis))


def heatmap(
    net: neural.Mlp,
    theta_grid,
    d_edge_grid,
    width: float = 0.002,
    sigma_norm: float = 0.0,
    recent_vol: float = 0.0,
    active_frac: float = 0.5,
) -> HeatmapGrid:
    """Q(rebalance) - Q(hold) over a (theta, distance-to-edge) grid.

    The remaining features are pinned: delta_p follows d_edge through the
    band width, mean deviation is zero, and the volatility features take
    the supplied reference values (run medians in the CLI pipeline).
    """
    theta_axis = np.asarray(theta_grid, dtype=np.float64)
    d_edge_axis = np.asarray(d_edge_grid, dtype=np.float64)
    tt, dd = np.meshgrid(theta_axis, d_edge_axis, indexing="ij")
    states = np.column_stack(
        [
            (dd * width).ravel(),
            dd.ravel(),
            tt.ravel(),
            np.zeros(tt.size),
            np.full(tt.size, sigma_norm),
            np.full(tt.size, active_frac),
            np.full(tt.size, recent_vol),
            (np.abs(dd.ravel()) < 1.0).astype(np.float64),
        ]
    )
    q = neural.forward(net, states)
    diff = (q[:, 1] - q[:, 0]).reshape(tt.shape)
    return HeatmapGrid(theta_axis=theta_axis, d_edge_axis=d_edge_axis, q_diff=diff)


def write_report_json(path, report: BacktestReport) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_json_dict(), fh, sort_keys=True, indent=2)


def write_report_csv(path, reports) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", "active_frac", "lambda", "rebalances", "fees", "gas", "net_roi"])
        for r in reports:
            writer.writerow(
                [
                    r.strategy,
                    repr(r.active_fraction),
                    repr(r.normalized_liquidity),
                    r.rebalance_count,
                    repr(r.total_fees),
                    repr(r.total_gas),
                    repr(r.net_roi),
                ]
            )


def write_gas_sweep_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["gas", "strategy", "net_roi"])
        for g, name, roi in rows:
            writer.writerow([repr(float(g)), name, repr(float(roi))])


def write_heatmap_csv(path, grid: HeatmapGrid) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["theta", "d_edge", "q_diff"])
        for i, th in enumerate(grid.theta_axis):
            for j, de in enumerate(grid.d_edge_axis):
                writer.writerow([repr(float(th)), repr(float(de)), repr(float(grid.q_diff[i, j]))])
