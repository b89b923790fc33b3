"""Concentrated-liquidity position math: range logic, fees, rebalance costs.

A position is a price band [c(1-w), c(1+w)] holding capital K. Narrowing
the band concentrates the capital, amplifying its pool share by
lambda = 1/sqrt(w). Fees accrue only while the price is inside the band:

    fee per second = alpha * V_cex * fee_tier * (K * lambda) / pool_tvl

Recentering swaps roughly half the position and pays gas, costing
fee_tier * 0.5 * K + gas. Opening a position counts as the first
rebalance but pays gas only (nothing needs swapping at entry).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import DomainError, InconsistentDeposit


@dataclass(frozen=True)
class PoolConfig:
    fee_tier: float = 0.0005
    gas_cost: float = 2.0
    pool_tvl: float = 500_000.0
    dex_cex_ratio: float = 0.10
    width: float = 0.002

    def __post_init__(self):
        if not 0 < self.fee_tier < 1:
            raise ValueError("fee_tier must be in (0, 1)")
        if self.gas_cost < 0:
            raise ValueError("gas_cost must be >= 0")
        if self.pool_tvl <= 0:
            raise ValueError("pool_tvl must be > 0")
        if not 0 < self.dex_cex_ratio <= 1:
            raise ValueError("dex_cex_ratio must be in (0, 1]")
        if not 0 < self.width < 1:
            raise ValueError("width must be in (0, 1)")


@dataclass
class Position:
    center: float
    width: float
    capital: float
    accrued_fees: float = 0.0
    accrued_gas: float = 0.0
    rebalance_count: int = 0
    active_seconds: int = 0
    total_seconds: int = 0

    lower: float = field(init=False)
    upper: float = field(init=False)

    def __post_init__(self):
        if self.center <= 0:
            raise ValueError("center must be > 0")
        if self.capital <= 0:
            raise ValueError("capital must be > 0")
        self._set_bounds()

    def _set_bounds(self):
        self.lower = self.center * (1.0 - self.width)
        self.upper = self.center * (1.0 + self.width)


def open_position(center: float, cfg: PoolConfig, capital: float = 10_000.0) -> Position:
    """Open a fresh position at `center`; counts as rebalance #1, gas only."""
    pos = Position(center=center, width=cfg.width, capital=capital)
    pos.rebalance_count = 1
    pos.accrued_gas = cfg.gas_cost
    return pos


def in_range(pos: Position, s: float) -> bool:
    """True iff s lies in [c(1-w), c(1+w)], boundaries inclusive."""
    return pos.lower <= s <= pos.upper


def concentration(w: float) -> float:
    """Fee amplification 1/sqrt(w) from narrowing the band to half-width w."""
    if not 0 < w < 1:
        raise DomainError("width must be in (0, 1)")
    return 1.0 / math.sqrt(w)


def fee_step(pos: Position, s: float, cex_volume: float, cfg: PoolConfig) -> float:
    """Accrue one second of fees; returns the amount (0 when out of range)."""
    if cex_volume < 0:
        raise ValueError("cex_volume must be >= 0")
    pos.total_seconds += 1
    if not in_range(pos, s):
        return 0.0
    pos.active_seconds += 1
    lam = concentration(pos.width)
    fee = cfg.dex_cex_ratio * cex_volume * cfg.fee_tier * (pos.capital * lam) / cfg.pool_tvl
    pos.accrued_fees += fee
    return fee


def rebalance_cost(cfg: PoolConfig, capital: float) -> float:
    """Half-position swap fee plus gas."""
    if capital <= 0:
        raise ValueError("capital must be > 0")
    return cfg.fee_tier * (0.5 * capital) + cfg.gas_cost


def recenter(pos: Position, s: float, cfg: PoolConfig) -> Position:
    """Move the band center to s, charging the full rebalance cost."""
    if s <= 0:
        raise ValueError("price must be > 0")
    pos.center = s
    pos._set_bounds()
    pos.accrued_gas += rebalance_cost(cfg, pos.capital)
    pos.rebalance_count += 1
    return pos


def net_roi(pos: Position) -> float:
    """(fees - gas) / capital over the position's life."""
    return (pos.accrued_fees - pos.accrued_gas) / pos.capital


def active_fraction(pos: Position) -> float:
    return pos.active_seconds / max(pos.total_seconds, 1)


def virtual_liquidity(
    p: float,
    p_a: float,
    p_b: float,
    dx: float | None = None,
    dy: float | None = None,
    rel_tol: float = 1e-6,
) -> float:
    """Uniswap-style virtual liquidity of a deposit into range (p_a, p_b).

    L = dx / (1/sqrt(p) - 1/sqrt(p_b)) = dy / (sqrt(p) - sqrt(p_a)).
    Either token amount may be omitted; when both are given they must
    agree on L within rel_tol.
    """
    if not p_a < p < p_b:
        raise DomainError(f"price {p} must lie strictly inside ({p_a}, {p_b})")
    if dx is None and dy is None:
        raise DomainError("at least one of dx, dy is required")
    l_x = dx / (1.0 / math.sqrt(p) - 1.0 / math.sqrt(p_b)) if dx is not None else None
    l_y = dy / (math.sqrt(p) - math.sqrt(p_a)) if dy is not None else None
    if l_x is not None and l_y is not None:
        if abs(l_x - l_y) > rel_tol * max(abs(l_x), abs(l_y)):
            raise InconsistentDeposit(f"dx implies L={l_x}, dy implies L={l_y}")
        return 0.5 * (l_x + l_y)
    return l_x if l_x is not None else l_y
