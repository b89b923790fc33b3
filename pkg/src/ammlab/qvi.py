"""Finite-difference solver for the stationary impulse-control inequality.

On a (price S, center c) grid the value function V must satisfy, at every
node, the complementarity condition

    min( rho*V - drift*V_S - 0.5*sigma^2*V_SS - f(S,c),
         V(S,c) - [V(S,S) - C] ) = 0,

where f is the in-range fee rate and C the recentering cost. Nodes where
the first expression vanishes form the continuation region; nodes where
the second binds form the jump region. The solver iterates obstacle
updates: given the current diagonal values, each c-slice is an ordinary
one-dimensional obstacle problem, solved exactly by policy (active-set)
iteration with vectorized tridiagonal sweeps. Upwinded drift and central
diffusion make every slice matrix an M-matrix, so the scheme is monotone
and the active-set iteration terminates.

Reflecting (zero-derivative) boundaries are imposed at the S-grid edges;
the grid must be wide enough that they sit far from the band.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import ammcore
from .ammcore import PoolConfig
from .synthpath import OuParams

DEFAULT_RHO = -math.log(0.99)  # one-second discounting matched to gamma=0.99


@dataclass(frozen=True)
class GridSpec:
    lo: float
    hi: float
    n: int

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("grid needs at least 3 points")
        if not self.lo < self.hi:
            raise ValueError("grid bounds must satisfy lo < hi")

    def points(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (self.n - 1)


@dataclass(frozen=True)
class QviProblem:
    ou: OuParams
    pool: PoolConfig
    s_grid: GridSpec
    c_grid: GridSpec
    rho: float = DEFAULT_RHO
    capital: float = 10_000.0
    ref_volume: float = 50_000.0
    cost: float | None = None

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be > 0")
        if self.ou.theta > 0 and self.ou.sigma > 0:
            half_span = 5.0 * self.ou.sigma / math.sqrt(2.0 * self.ou.theta)
            if self.s_grid.lo > self.ou.mu - half_span or self.s_grid.hi < self.ou.mu + half_span:
                raise ValueError("S-grid must span mu +/- 5 sigma/sqrt(2 theta)")

    @classmethod
    def default(
        cls,
        ou: OuParams,
        pool: PoolConfig | None = None,
        n_s: int = 400,
        n_c: int = 100,
        span_sigmas: float = 5.0,
        **kwargs,
    ) -> "QviProblem":
        pool = pool or PoolConfig()
        if ou.theta <= 0 or ou.sigma <= 0:
            raise ValueError("default grids need theta > 0 and sigma > 0")
        half_span = span_sigmas * ou.sigma / math.sqrt(2.0 * ou.theta)
        s_grid = GridSpec(ou.mu - half_span, ou.mu + half_span, n_s)
        c_grid = GridSpec(ou.mu - half_span, ou.mu + half_span, n_c)
        return cls(ou=ou, pool=pool, s_grid=s_grid, c_grid=c_grid, **kwargs)

    def fee_rate(self) -> float:
        """In-range fee per second at the reference volume."""
        lam = ammcore.concentration(self.pool.width)
        return (
            self.pool.dex_cex_ratio
            * self.ref_volume
            * self.pool.fee_tier
            * (self.capital * lam)
            / self.pool.pool_tvl
        )

    def cost_value(self) -> float:
        if self.cost is not None:
            return self.cost
        return ammcore.rebalance_cost(self.pool, self.capital)


@dataclass
class QviSolution:
    problem: QviProblem
    s: np.ndarray
    c: np.ndarray
    V: np.ndarray  # (n_s, n_c)
    jump: np.ndarray  # bool (n_s, n_c): obstacle binding within tolerance
    converged: bool
    iterations: int
    sup_change: float


def _operator(problem: QviProblem):
    """Tridiagonal coefficients of rho - L with upwind drift, reflecting edges."""
    s = problem.s_grid.points()
    h = problem.s_grid.step
    n = len(s)
    b = problem.ou.theta * (problem.ou.mu - s)
    bp = np.maximum(b, 0.0)
    bm = np.maximum(-b, 0.0)
    half_diff = 0.5 * problem.ou.sigma**2 / h**2

    lower = -(bm / h + half_diff)
    upper = -(bp / h + half_diff)
    diag = problem.rho + (bp + bm) / h + 2.0 * half_diff

    # reflecting edges: mirrored diffusion neighbor, outward drift dropped
    diag[0] = problem.rho + bp[0] / h + 2.0 * half_diff
    upper[0] = -(bp[0] / h + 2.0 * half_diff)
    lower[0] = 0.0
    diag[-1] = problem.rho + bm[-1] / h + 2.0 * half_diff
    lower[-1] = -(bm[-1] / h + 2.0 * half_diff)
    upper[-1] = 0.0
    return s, lower, diag, upper


def _fee_table(problem: QviProblem, s: np.ndarray, c: np.ndarray) -> np.ndarray:
    f0 = problem.fee_rate()
    w = problem.pool.width
    in_band = np.abs(s[:, None] / c[None, :] - 1.0) <= w
    return np.where(in_band, f0, 0.0)


def _thomas(lower, diag, upper, rhs):
    """Solve independent tridiagonal systems stacked along axis 1."""
    n = diag.shape[0]
    cp = np.empty_like(diag)
    dp = np.empty_like(rhs)
    cp[0] = upper[0] / diag[0]
    dp[0] = rhs[0] / diag[0]
    for i in range(1, n):
        denom = diag[i] - lower[i] * cp[i - 1]
        cp[i] = upper[i] / denom
        dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / denom
    x = np.empty_like(rhs)
    x[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


def _apply_operator(lower, diag, upper, V):
    out = diag[:, None] * V
    out[1:] += lower[1:, None] * V[:-1]
    out[:-1] += upper[:-1, None] * V[1:]
    return out


def _solve_obstacle(lower, diag, upper, F, psi, mask, max_policy_iters=100):
    """Exact LCP solve per slice: min(A V - F, V - psi) = 0 nodewise.

    `mask` is the warm-start active set (True = obstacle row); returns
    (V, final mask). Active-set iteration on an M-matrix terminates.
    """
    ones = np.ones_like(F)
    psi_col = np.broadcast_to(psi[:, None], F.shape)
    for _ in range(max_policy_iters):
        lo = np.where(mask, 0.0, lower[:, None] * ones)
        dg = np.where(mask, 1.0, diag[:, None] * ones)
        up = np.where(mask, 0.0, upper[:, None] * ones)
        rhs = np.where(mask, psi_col, F)
        V = _thomas(lo, dg, up, rhs)
        residual = _apply_operator(lower, diag, upper, V) - F
        gap = V - psi_col
        new_mask = gap < residual
        if np.array_equal(new_mask, mask):
            return V, mask
        mask = new_mask
    return V, mask


def _diagonal_values(V: np.ndarray, s: np.ndarray, c: np.ndarray) -> np.ndarray:
    """V(S, c=S) per S row, linear interpolation along c (clamped at edges)."""
    n_s = len(s)
    pos = np.interp(s, c, np.arange(len(c)))
    j0 = np.floor(pos).astype(int)
    j1 = np.minimum(j0 + 1, len(c) - 1)
    frac = pos - j0
    rows = np.arange(n_s)
    return (1.0 - frac) * V[rows, j0] + frac * V[rows, j1]


def solve(problem: QviProblem, tol: float = 1e-6, max_iters: int = 20_000) -> QviSolution:
    """Iterate obstacle updates until the value function is stationary.

    Starts from the no-intervention value and repeatedly re-solves every
    c-slice against the obstacle psi(S) = V(S,S) - C from the previous
    iterate. Values increase monotonically toward the fixed point;
    convergence is declared when the sup-norm change drops below tol.
    Hitting max_iters returns the last iterate flagged converged=False.
    """
    s, lower, diag, upper = _operator(problem)
    c = problem.c_grid.points()
    F = _fee_table(problem, s, c)
    C = problem.cost_value()

    # no-intervention start: plain PDE solve per slice
    V = _thomas(
        np.broadcast_to(lower[:, None], F.shape).copy(),
        np.broadcast_to(diag[:, None], F.shape).copy(),
        np.broadcast_to(upper[:, None], F.shape).copy(),
        F,
    )
    mask = np.zeros(F.shape, dtype=bool)

    sup_change = math.inf
    iterations = 0
    for iterations in range(1, max_iters + 1):
        psi = _diagonal_values(V, s, c) - C
        V_new, mask = _solve_obstacle(lower, diag, upper, F, psi, mask)
        sup_change = float(np.max(np.abs(V_new - V)))
        V = V_new
        if sup_change < tol:
            break

    converged = sup_change < tol
    psi = _diagonal_values(V, s, c) - C
    label_tol = max(tol, 1e-9 * float(np.max(np.abs(V))) if V.size else tol)
    jump = (V - psi[:, None]) <= label_tol
    return QviSolution(
        problem=problem,
        s=s,
        c=c,
        V=V,
        jump=jump,
        converged=converged,
        iterations=iterations,
        sup_change=sup_change,
    )


def complementarity_residual(sol: QviSolution) -> np.ndarray:
    """Nodewise |min(PDE residual, obstacle gap)|; ~0 for a valid solution."""
    _, lower, diag, upper = _operator(sol.problem)
    F = _fee_table(sol.problem, sol.s, sol.c)
    psi = _diagonal_values(sol.V, sol.s, sol.c) - sol.problem.cost_value()
    residual = _apply_operator(lower, diag, upper, sol.V) - F
    gap = sol.V - psi[:, None]
    return np.abs(np.minimum(residual, gap))


def obstacle_violation(sol: QviSolution) -> float:
    """Largest amount by which V dips below V(S,S) - C (0 when feasible)."""
    psi = _diagonal_values(sol.V, sol.s, sol.c) - sol.problem.cost_value()
    return float(np.max(psi[:, None] - sol.V))


def boundary_deviation(sol: QviSolution, c_value: float) -> tuple[float, float]:
    """Nearest jump-labeled deviations below and above a given center.

    Returns (lower_dev, upper_dev) as |S/c - 1| of the closest jump node
    on each side; NaN when that side has no jump nodes. The node closest
    to the center itself is ignored so a zero-cost solution reports the
    first off-center cell rather than 0.
    """
    j = int(np.argmin(np.abs(sol.c - c_value)))
    cj = sol.c[j]
    col = sol.jump[:, j]
    half_cell = 0.5 * sol.problem.s_grid.step
    below = np.where(col & (sol.s < cj - half_cell))[0]
    above = np.where(col & (sol.s > cj + half_cell))[0]
    lower_dev = abs(sol.s[below[-1]] / cj - 1.0) if len(below) else math.nan
    upper_dev = abs(sol.s[above[0]] / cj - 1.0) if len(above) else math.nan
    return lower_dev, upper_dev


def write_solution_csv(path, sol: QviSolution) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["S", "c", "V", "region"])
        for i, s_val in enumerate(sol.s):
            for j, c_val in enumerate(sol.c):
                writer.writerow(
                    [
                        repr(float(s_val)),
                        repr(float(c_val)),
                        repr(float(sol.V[i, j])),
                        "jump" if sol.jump[i, j] else "continuation",
                    ]
                )


def write_boundary_csv(path, sol: QviSolution) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["c", "lower_dev", "upper_dev"])
        for c_val in sol.c:
            lo, hi = boundary_deviation(sol, float(c_val))
            writer.writerow([repr(float(c_val)), repr(lo), repr(hi)])
