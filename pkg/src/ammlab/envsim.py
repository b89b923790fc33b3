"""Simulation environment for the binary hold/recenter decision problem.

Each step covers one second of bar data. The agent observes an
8-feature state, optionally recenters (paying the full rebalance cost),
the clock advances one bar, and fees accrue at the possibly-new center.
The reward is scaled net PnL plus a small in-range bonus:

    r = scale * (fee - rebalance_cost_paid) / capital
        + active_bonus * in_range(next bar)

Regime estimates and realized volatility are functions of the price
series alone, so they are precomputed for the whole series up front and
looked up per step.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import ammcore, regime
from .ammcore import PoolConfig, Position
from .errors import DomainError, EpisodeFinished
from .marketdata import BarSeries

VOL_WINDOW = 300
SIGMA_NORM_CLIP = 0.1
RECENT_VOL_CLIP = 0.1
STATE_DIM = 8


@dataclass(frozen=True)
class RewardParams:
    scale: float = 100.0
    active_bonus: float = 1e-4

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be > 0")
        if self.active_bonus < 0:
            raise ValueError("active_bonus must be >= 0")


@dataclass(frozen=True)
class AgentState:
    delta_p: float
    d_edge: float
    theta: float
    delta_mu: float
    sigma_norm: float
    active_frac: float
    recent_vol: float
    in_range_flag: float

    def as_vector(self) -> np.ndarray:
        return np.array(
            [
                self.delta_p,
                self.d_edge,
                self.theta,
                self.delta_mu,
                self.sigma_norm,
                self.active_frac,
                self.recent_vol,
                self.in_range_flag,
            ]
        )


@dataclass(frozen=True)
class Transition:
    state: AgentState
    action: int
    reward: float
    next_state: AgentState
    terminal: bool


def build_state(
    s: float,
    pos: Position,
    est: regime.RegimeEstimate,
    recent_vol: float,
) -> AgentState:
    """Assemble the observation vector; fallbacks keep every field finite."""
    inside = ammcore.in_range(pos, s)
    d_edge = (s - pos.center) / (pos.center * pos.width)
    return AgentState(
        delta_p=s / pos.center - 1.0,
        d_edge=min(max(d_edge, -1.0), 1.0),
        theta=est.theta if est.valid else 0.0,
        delta_mu=(est.mu - s) / s if est.valid else 0.0,
        sigma_norm=min(est.sigma / s, SIGMA_NORM_CLIP) if est.valid else 0.0,
        active_frac=pos.active_seconds / max(pos.total_seconds, 1),
        recent_vol=min(max(recent_vol, 0.0), RECENT_VOL_CLIP),
        in_range_flag=1.0 if inside else 0.0,
    )


def rolling_log_return_vol(closes: np.ndarray, window: int = VOL_WINDOW) -> np.ndarray:
    """Per-bar std of the last `window` one-second log returns (0 during warmup)."""
    closes = np.asarray(closes, dtype=np.float64)
    n = len(closes)
    out = np.zeros(n)
    if n < 3:
        return out
    r = np.diff(np.log(closes))
    c1 = np.zeros(n)
    c2 = np.zeros(n)
    np.cumsum(r, out=c1[1:])
    np.cumsum(r * r, out=c2[1:])
    idx = np.arange(n)
    lo = np.maximum(idx - window, 0)
    cnt = (idx - lo).astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        mean = (c1[idx] - c1[lo]) / cnt
        var = (c2[idx] - c2[lo]) / cnt - mean**2
    ok = cnt >= 2
    out[ok] = np.sqrt(np.maximum(var[ok], 0.0))
    return out


class FeatureTrack:
    """Per-bar regime estimates and realized vol for one series."""

    def __init__(self, series: BarSeries, dt: float = 1.0, window: int = regime.DEFAULT_WINDOW):
        self.series = series
        self.window = window
        th, mu, sg, va = regime.rolling_estimates(series.close, dt, window)
        self.theta = th
        self.mu = mu
        self.sigma = sg
        self.valid = va
        self.recent_vol = rolling_log_return_vol(series.close)

    def estimate(self, i: int) -> regime.RegimeEstimate:
        return regime.RegimeEstimate(
            theta=float(self.theta[i]),
            mu=float(self.mu[i]),
            sigma=float(self.sigma[i]),
            window_len=min(i + 1, self.window),
            valid=bool(self.valid[i]),
        )


TRACE_HEADER = ["t", "price", "center", "action", "fee", "gas", "reward", "theta", "in_range"]


def write_trace_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        writer.writerows(rows)


class LpEnv:
    """One mutable environment instance; never share across threads."""

    def __init__(
        self,
        series: BarSeries,
        pool: PoolConfig | None = None,
        reward: RewardParams | None = None,
        capital: float = 10_000.0,
        episode_length: int = 3600,
        seed: int = 0,
        features: FeatureTrack | None = None,
    ):
        if len(series) < 2:
            raise DomainError("series too short for an environment")
        self.series = series
        self.pool = pool or PoolConfig()
        self.reward_params = reward or RewardParams()
        self.capital = capital
        self.episode_length = episode_length
        self.features = features or FeatureTrack(series)
        self.rng = np.random.default_rng(seed)
        self.pos: Position | None = None
        self._i = 0
        self._steps = 0
        self._terminal = True
        self.trace: list = []

    def reseed(self, seed: int) -> None:
        self.rng = np.random.default_rng(seed)

    def max_start(self) -> int:
        return len(self.series) - 1 - self.episode_length

    def reset(self, start_index: int | None = None) -> AgentState:
        if start_index is None:
            hi = self.max_start()
            if hi < 0:
                raise DomainError("series shorter than one episode")
            start_index = int(self.rng.integers(0, hi + 1))
        if start_index < 0 or start_index + self.episode_length > len(self.series):
            raise DomainError(
                f"start {start_index} + episode_length {self.episode_length} exceeds series"
            )
        if start_index >= len(self.series) - 1:
            raise DomainError("start index leaves no bar to step into")
        self._i = start_index
        self._steps = 0
        self._terminal = False
        self.pos = ammcore.open_position(float(self.series.close[start_index]), self.pool, self.capital)
        self.trace = []
        return self._state_at(self._i)

    def _state_at(self, i: int) -> AgentState:
        return build_state(
            float(self.series.close[i]),
            self.pos,
            self.features.estimate(i),
            float(self.features.recent_vol[i]),
        )

    def step(self, action: int):
        """Apply hold (0) or recenter (1); returns (Transition, diagnostics)."""
        if self._terminal:
            raise EpisodeFinished("call reset() before stepping again")
        if action not in (0, 1):
            raise ValueError("action must be 0 or 1")
        state = self._state_at(self._i)
        price_now = float(self.series.close[self._i])

        gas_delta = 0.0
        if action == 1:
            before = self.pos.accrued_gas
            ammcore.recenter(self.pos, price_now, self.pool)
            gas_delta = self.pos.accrued_gas - before

        self._i += 1
        self._steps += 1
        price_next = float(self.series.close[self._i])
        fee = ammcore.fee_step(self.pos, price_next, float(self.series.volume[self._i]), self.pool)

        self._terminal = self._steps >= self.episode_length or self._i >= len(self.series) - 1
        next_state = self._state_at(self._i)
        rp = self.reward_params
        reward = rp.scale * (fee - gas_delta) / self.capital + rp.active_bonus * next_state.in_range_flag

        self.trace.append(
            (
                int(self.series.t[self._i]),
                price_next,
                self.pos.center,
                action,
                fee,
                gas_delta,
                reward,
                next_state.theta,
                int(next_state.in_range_flag),
            )
        )
        diag = {"fee": fee, "gas": gas_delta, "price": price_next, "in_range": next_state.in_range_flag}
        return Transition(state, action, reward, next_state, self._terminal), diag
