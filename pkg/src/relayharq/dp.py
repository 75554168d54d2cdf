"""Nested backward dynamic programs over the accumulated-redundancy state,
the dual-threshold bisection, and local refinement of the exact throughput.

The dual cost D + lambda * P_out decomposes round by round once the failure
probabilities depend only on the accumulated state (sum rho, sum rho^2).
An inner backward pass optimizes the relay rounds for every source state, an
outer backward pass optimizes the source rounds against those tables, and a
forward pass reads the argmins back into an explicit policy. The smallest
lambda admitting a non-degenerate solution is located by bisection. Final
throughput numbers are always exact Monte Carlo re-evaluations of the
extracted policy, never the approximate objective.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .approx import mixed_fail, mixed_fail_1d, src_fail, src_fail_1d
from .channel import RelayTopology, TopologyMoments
from .errors import ContractError, DegeneratePolicyError, DomainError, SolverError
from .exact import FrozenSampleSet
from .policy import RatePolicy, ensure_valid, random_policy
from .sampling import TAG_REFINE, TAG_RESTART, derived_rng

logger = logging.getLogger(__name__)

DEFAULT_RHO_STEP = 0.05
DEFAULT_RHO_MAX = 4.0
DEFAULT_LAMBDA_TOL = 1e-3
DEFAULT_LAMBDA_CAP = 2.0**16
DEFAULT_REFINE_SAMPLES = 10**5


# ---------------------------------------------------------------------------
# State grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DpGrid:
    """Action grid plus the (X, Y) state grids, with nearest-node snapping.

    X states sit on the action step, so sums of actions never snap; Y nodes
    are spaced uniformly in sqrt(Y), concentrating resolution where the
    spread term of the probability approximation is sensitive.
    """

    rho_actions: np.ndarray
    x_grid: np.ndarray
    y_grid: np.ndarray

    def __post_init__(self):
        for name in ("rho_actions", "x_grid", "y_grid"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim != 1 or len(arr) < 2:
                raise DomainError(f"{name} must be a 1-D grid with at least two nodes")
            if arr[0] != 0.0:
                raise DomainError(f"{name} must start at 0")
            if np.any(np.diff(arr) <= 0.0):
                raise DomainError(f"{name} must be strictly increasing")
            object.__setattr__(self, name, arr)
        steps = np.diff(self.rho_actions)
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
            raise DomainError("rho_actions must be uniformly spaced")
        object.__setattr__(self, "_x_mid", (self.x_grid[1:] + self.x_grid[:-1]) / 2.0)
        object.__setattr__(self, "_y_mid", (self.y_grid[1:] + self.y_grid[:-1]) / 2.0)

    @property
    def rho_step(self) -> float:
        return float(self.rho_actions[1] - self.rho_actions[0])

    @property
    def rho_max(self) -> float:
        return float(self.rho_actions[-1])

    def check_covers(self, k_max) -> None:
        top = k_max * self.rho_max
        if self.x_grid[-1] < top * (1.0 - 1e-12):
            raise DomainError("x_grid does not cover states reachable in K rounds")
        if self.y_grid[-1] < k_max * self.rho_max**2 * (1.0 - 1e-12):
            raise DomainError("y_grid does not cover states reachable in K rounds")

    def snap_x(self, values):
        idx = np.searchsorted(self._x_mid, np.asarray(values, dtype=float), side="right")
        return idx if np.ndim(values) else int(idx)

    def snap_y(self, values):
        idx = np.searchsorted(self._y_mid, np.asarray(values, dtype=float), side="right")
        return idx if np.ndim(values) else int(idx)

    @classmethod
    def build(cls, k_max, rho_max=DEFAULT_RHO_MAX, rho_step=DEFAULT_RHO_STEP,
              n_y=None) -> "DpGrid":
        n_a = int(round(rho_max / rho_step)) + 1
        actions = rho_step * np.arange(n_a)
        x = rho_step * np.arange(k_max * (n_a - 1) + 1)
        if n_y is None:
            n_y = len(x)
        y = np.linspace(0.0, np.sqrt(k_max) * actions[-1], n_y) ** 2
        return cls(rho_actions=actions, x_grid=x, y_grid=y)

    @classmethod
    def exact(cls, k_max, rho_max, rho_step) -> "DpGrid":
        """Grids holding every sum of <= K actions (and squared actions) exactly.

        Only practical for small instances; used to compare the solvers against
        brute-force enumeration with zero snapping error.
        """
        n_a = int(round(rho_max / rho_step)) + 1
        actions = rho_step * np.arange(n_a)
        x = rho_step * np.arange(k_max * (n_a - 1) + 1)
        y_step = rho_step**2
        n_yn = k_max * (n_a - 1) ** 2 + 1
        y = y_step * np.arange(n_yn)
        return cls(rho_actions=actions, x_grid=x, y_grid=y)


def _reach_sets(grid: DpGrid, n_steps):
    """Boolean masks of snapped states reachable after 0..n_steps rounds."""
    n_x, n_y = len(grid.x_grid), len(grid.y_grid)
    masks = [np.zeros((n_x, n_y), dtype=bool)]
    masks[0][0, 0] = True
    for _ in range(n_steps):
        cur = masks[-1]
        nxt = np.zeros_like(cur)
        ix, iy = np.nonzero(cur)
        x = grid.x_grid[ix]
        y = grid.y_grid[iy]
        for a in grid.rho_actions:
            nxt[grid.snap_x(x + a), grid.snap_y(y + a * a)] = True
        masks.append(nxt)
    return masks


# ---------------------------------------------------------------------------
# Relay-phase tables (inner DP)
# ---------------------------------------------------------------------------


@dataclass
class _VStage:
    state_ix: np.ndarray
    state_iy: np.ndarray
    index_map: np.ndarray
    argmin: np.ndarray


@dataclass
class _VPhase:
    value: np.ndarray
    batch_map: np.ndarray
    stages: list


@dataclass
class VTables:
    """Minimal relay-phase cost tables, one per possible relay-decode round."""

    lam: float
    k_max: int
    grid: DpGrid
    phases: dict

    def value_table(self, i) -> np.ndarray:
        """Full (n_x, n_y) table for phase i; NaN where the state is off-support."""
        return self.phases[i].value

    def value_at(self, i, x, y) -> float:
        ph = self.phases[i]
        v = ph.value[self.grid.snap_x(x), self.grid.snap_y(y)]
        if np.isnan(v):
            raise ContractError(f"state ({x}, {y}) outside the phase-{i} support")
        return float(v)

    def relay_row(self, i, ix, iy):
        """Extract the optimal relay redundancies for phase i at source node (ix, iy)."""
        ph = self.phases[i]
        m = int(ph.batch_map[ix, iy])
        if m < 0:
            raise ContractError(f"source state node ({ix}, {iy}) not tabulated for phase {i}")
        grid = self.grid
        r_ix, r_iy = 0, 0
        row = []
        for stage in ph.stages:
            col = int(stage.index_map[r_ix, r_iy])
            a = float(grid.rho_actions[stage.argmin[m, col]])
            row.append(a)
            r_ix = grid.snap_x(grid.x_grid[r_ix] + a)
            r_iy = grid.snap_y(grid.y_grid[r_iy] + a * a)
        return row

    def to_csv(self) -> str:
        lines = ["phase,x,y,value"]
        for i in sorted(self.phases):
            ph = self.phases[i]
            ix, iy = np.nonzero(~np.isnan(ph.value))
            for a, b in zip(ix, iy):
                lines.append(f"{i},{self.grid.x_grid[a]!r},{self.grid.y_grid[b]!r},"
                             f"{ph.value[a, b]!r}")
        return "\n".join(lines) + "\n"


def solve_v_tables(lam, grid: DpGrid, moments: TopologyMoments, k_max,
                   restrict_reachable=True, _reach=None) -> VTables:
    """Tabulate the minimal relay-phase cost for every source state and phase.

    For phase i the relay transmits rounds i+1..K; the cost of a round is its
    redundancy weighted by the probability the destination still needs it,
    plus lambda times the final failure probability.
    """
    grid.check_covers(k_max)
    if k_max < 2:
        return VTables(lam=lam, k_max=k_max, grid=grid, phases={})
    sd, rd = moments.sd, moments.rd
    n_x, n_y = len(grid.x_grid), len(grid.y_grid)
    reach = _reach if _reach is not None else _reach_sets(grid, k_max)
    relay_reach = _reach_sets(grid, k_max - 1)
    actions = grid.rho_actions
    phases = {}
    for i in range(1, k_max):
        mask = reach[i] if restrict_reachable else np.ones((n_x, n_y), dtype=bool)
        six, siy = np.nonzero(mask)
        alpha = grid.x_grid[six]
        beta = grid.y_grid[siy]
        n_b = len(six)
        p1_src = np.asarray(src_fail(alpha, beta, sd, rounds=i))
        n_r = k_max - i
        stages = []
        next_vals = None
        next_map = None
        for j in range(n_r, 0, -1):
            rmask = relay_reach[j - 1]
            rix, riy = np.nonzero(rmask)
            xr = grid.x_grid[rix]
            yr = grid.y_grid[riy]
            n_s = len(rix)
            index_map = np.full((n_x, n_y), -1, dtype=np.int64)
            index_map[rix, riy] = np.arange(n_s)
            w = np.asarray(mixed_fail(alpha[:, None], beta[:, None],
                                      xr[None, :], yr[None, :], sd, rd))
            zero_cols = (xr == 0.0) & (yr == 0.0)
            if zero_cols.any():
                w[:, zero_cols] = p1_src[:, None]
            best = None
            arg = None
            for ai, a in enumerate(actions):
                jx = grid.snap_x(xr + a)
                jy = grid.snap_y(yr + a * a)
                if j == n_r:
                    tail = lam * np.asarray(mixed_fail(
                        alpha[:, None], beta[:, None],
                        grid.x_grid[jx][None, :], grid.y_grid[jy][None, :], sd, rd))
                else:
                    tail = next_vals[:, next_map[jx, jy]]
                cand = a * w + tail
                if best is None:
                    best = cand
                    arg = np.zeros(cand.shape, dtype=np.int16)
                else:
                    better = cand < best
                    best = np.where(better, cand, best)
                    arg[better] = ai
            stages.append(_VStage(state_ix=rix, state_iy=riy, index_map=index_map,
                                  argmin=arg))
            next_vals = best
            next_map = index_map
        stages.reverse()
        value_full = np.full((n_x, n_y), np.nan)
        value_full[six, siy] = next_vals[:, 0]
        batch_map = np.full((n_x, n_y), -1, dtype=np.int64)
        batch_map[six, siy] = np.arange(n_b)
        logger.debug("v-tables phase=%d lam=%g batch=%d rounds=%d min=%g",
                     i, lam, n_b, n_r, float(np.nanmin(value_full)))
        phases[i] = _VPhase(value=value_full, batch_map=batch_map, stages=stages)
    return VTables(lam=lam, k_max=k_max, grid=grid, phases=phases)


# ---------------------------------------------------------------------------
# Outer DP (2-D state) and policy extraction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DualSolution:
    """Grid-optimal policy for the dual cost at one multiplier value."""

    lam: float
    j_value: float
    policy: RatePolicy
    degenerate: bool
    solver: str = "2d"


def solve_dual_2d(lam, grid: DpGrid, moments: TopologyMoments, k_max,
                  v_tables: VTables | None = None) -> DualSolution:
    """Globally optimal grid policy for the 2-D-state approximate dual cost."""
    grid.check_covers(k_max)
    sd, sr = moments.sd, moments.sr
    reach = _reach_sets(grid, k_max)
    if k_max > 1 and v_tables is None:
        v_tables = solve_v_tables(lam, grid, moments, k_max, _reach=reach)
    actions = grid.rho_actions
    stages = []
    next_vals = None
    next_map = None
    for k in range(k_max, 0, -1):
        six, siy = np.nonzero(reach[k - 1])
        x = grid.x_grid[six]
        y = grid.y_grid[siy]
        n_s = len(six)
        index_map = np.full((len(grid.x_grid), len(grid.y_grid)), -1, dtype=np.int64)
        index_map[six, siy] = np.arange(n_s)
        p1_in = np.asarray(src_fail(x, y, sd, rounds=k - 1))
        p2_in = np.asarray(src_fail(x, y, sr, rounds=k - 1))
        base = p1_in * p2_in
        best = None
        arg = None
        for ai, a in enumerate(actions):
            jx = grid.snap_x(x + a)
            jy = grid.snap_y(y + a * a)
            x2 = grid.x_grid[jx]
            y2 = grid.y_grid[jy]
            if k == k_max:
                p1_fin = np.asarray(src_fail(x2, y2, sd, rounds=k_max))
                cand = a * base + lam * p1_fin * p2_in
            else:
                p2_next = np.asarray(src_fail(x2, y2, sr, rounds=k))
                cand = (a * base + (p2_in - p2_next) * v_tables.phases[k].value[jx, jy]
                        + next_vals[next_map[jx, jy]])
            if best is None:
                best = cand
                arg = np.zeros(cand.shape, dtype=np.int16)
            else:
                better = cand < best
                best = np.where(better, cand, best)
                arg[better] = ai
        logger.debug("dual-2d stage=%d lam=%g states=%d min=%g", k, lam, n_s,
                     float(best.min()))
        stages.append((index_map, arg))
        next_vals = best
        next_map = index_map
    stages.reverse()
    j_value = float(next_vals[0])

    cur_ix, cur_iy = 0, 0
    rho_s = []
    state_nodes = []
    for index_map, arg in stages:
        col = int(index_map[cur_ix, cur_iy])
        a = float(actions[arg[col]])
        rho_s.append(a)
        cur_ix = grid.snap_x(grid.x_grid[cur_ix] + a)
        cur_iy = grid.snap_y(grid.y_grid[cur_iy] + a * a)
        state_nodes.append((cur_ix, cur_iy))
    rows = []
    for i in range(1, k_max):
        ix, iy = state_nodes[i - 1]
        rows.append(tuple(v_tables.relay_row(i, ix, iy)))
    policy = RatePolicy(k_max=k_max, rho_s=tuple(rho_s), rho_r=tuple(rows))
    return DualSolution(lam=float(lam), j_value=j_value, policy=policy,
                        degenerate=policy.is_degenerate(grid.rho_step), solver="2d")


def dual_objective_2d(policy: RatePolicy, lam, moments: TopologyMoments) -> float:
    """Approximate dual cost of an explicit policy (no grids, no recursion).

    Serves as the direct evaluator for enumeration oracles and for re-checking
    extracted policies against the backward-pass value.
    """
    k_max = policy.k_max
    sd, sr, rd = moments.sd, moments.sr, moments.rd
    rho = np.asarray(policy.rho_s)
    xs = np.concatenate([[0.0], np.cumsum(rho)])
    ys = np.concatenate([[0.0], np.cumsum(rho**2)])
    p1 = [float(src_fail(xs[k], ys[k], sd, rounds=k)) for k in range(k_max + 1)]
    p2 = [float(src_fail(xs[k], ys[k], sr, rounds=k)) for k in range(k_max)]
    total = 0.0
    for i in range(1, k_max):
        total += rho[i - 1] * p1[i - 1] * p2[i - 1]
        row = policy.rho_r[i - 1]
        xr = np.concatenate([[0.0], np.cumsum(row)])
        yr = np.concatenate([[0.0], np.cumsum(np.asarray(row) ** 2)])
        g = lam * float(mixed_fail(xs[i], ys[i], xr[-1], yr[-1], sd, rd))
        g += row[0] * p1[i]
        for l in range(i + 2, k_max + 1):
            g += row[l - i - 1] * float(mixed_fail(xs[i], ys[i], xr[l - 1 - i],
                                                   yr[l - 1 - i], sd, rd))
        total += (p2[i - 1] - p2[i]) * g
    total += rho[k_max - 1] * p1[k_max - 1] * p2[k_max - 1]
    p2_last = p2[k_max - 1]
    total += lam * p1[k_max] * p2_last
    return float(total)


# ---------------------------------------------------------------------------
# 1-D simplified state
# ---------------------------------------------------------------------------


def dual_objective_1d(policy: RatePolicy, lam, moments: TopologyMoments) -> float:
    """Approximate dual cost of an explicit policy under the 1-D state forms."""
    k_max = policy.k_max
    sd, sr, rd = moments.sd, moments.sr, moments.rd
    rho = np.asarray(policy.rho_s)
    xs = np.concatenate([[0.0], np.cumsum(rho)])
    p1 = [float(src_fail_1d(xs[k], sd, rounds=k)) for k in range(k_max + 1)]
    p2 = [float(src_fail_1d(xs[k], sr, rounds=k)) for k in range(k_max)]
    total = 0.0
    for i in range(1, k_max):
        total += rho[i - 1] * p1[i - 1] * p2[i - 1]
        row = policy.rho_r[i - 1]
        xr = np.concatenate([[0.0], np.cumsum(row)])
        g = lam * float(mixed_fail_1d(xs[i], xr[-1], sd, rd))
        g += row[0] * p1[i]
        for l in range(i + 2, k_max + 1):
            g += row[l - i - 1] * float(mixed_fail_1d(xs[i], xr[l - 1 - i], sd, rd))
        total += (p2[i - 1] - p2[i]) * g
    total += rho[k_max - 1] * p1[k_max - 1] * p2[k_max - 1]
    total += lam * p1[k_max] * p2[k_max - 1]
    return float(total)


def solve_dual_1d(lam, grid: DpGrid, moments: TopologyMoments, k_max) -> DualSolution:
    """Grid-optimal policy for the 1-D-state approximate dual cost.

    States are totals on the action step, so every subtraction X - rho is
    exact index arithmetic and the solver needs no snapping at all.
    """
    sd, sr, rd = moments.sd, moments.sr, moments.rd
    actions = grid.rho_actions
    n_a = len(actions)
    step = grid.rho_step

    if k_max == 1:
        costs = actions + lam * np.asarray(src_fail_1d(actions, sd, rounds=1))
        ai = int(np.argmin(costs))
        policy = RatePolicy(k_max=1, rho_s=(float(actions[ai]),), rho_r=())
        return DualSolution(lam=float(lam), j_value=float(costs[ai]), policy=policy,
                            degenerate=policy.is_degenerate(step), solver="1d")

    # Relay tables: for each phase i, the cheapest way to spread a relay total
    # X' over rounds i+1..K, then the best X' per source total X.
    relay_best = {}
    relay_xp_star = {}
    relay_args = {}
    for i in range(1, k_max):
        n_x = i * (n_a - 1) + 1
        xvals = step * np.arange(n_x)
        p1_i = np.asarray(src_fail_1d(xvals, sd, rounds=i))
        n_r = k_max - i
        n_xp = n_r * (n_a - 1) + 1
        xpvals = step * np.arange(n_xp)
        if n_r == 1:
            u_final = (xpvals[None, :] * p1_i[:, None]
                       + lam * np.asarray(mixed_fail_1d(xvals[:, None],
                                                        xpvals[None, :], sd, rd)))
            relay_args[i] = {}
        else:
            stage_args = {}
            u = np.full((n_x, n_xp), np.inf)
            arg = np.full((n_x, n_xp), -1, dtype=np.int16)
            max_prev = n_a - 1
            for j, a in enumerate(actions):
                hi = min(j + max_prev, n_xp - 1)
                cols = np.arange(j, hi + 1)
                prev_x = xpvals[cols - j]
                cand = (prev_x[None, :] * p1_i[:, None]
                        + a * np.asarray(mixed_fail_1d(xvals[:, None],
                                                       prev_x[None, :], sd, rd)))
                better = cand < u[:, cols]
                u[:, cols] = np.where(better, cand, u[:, cols])
                arg[:, cols] = np.where(better, np.int16(j), arg[:, cols])
            stage_args[i + 2] = arg
            for k in range(i + 3, k_max + 1):
                u_next = np.full((n_x, n_xp), np.inf)
                arg = np.full((n_x, n_xp), -1, dtype=np.int16)
                max_prev = (k - 1 - i) * (n_a - 1)
                for j, a in enumerate(actions):
                    hi = min(j + max_prev, n_xp - 1)
                    cols = np.arange(j, hi + 1)
                    prev_x = xpvals[cols - j]
                    cand = (u[:, cols - j]
                            + a * np.asarray(mixed_fail_1d(xvals[:, None],
                                                           prev_x[None, :], sd, rd)))
                    better = cand < u_next[:, cols]
                    u_next[:, cols] = np.where(better, cand, u_next[:, cols])
                    arg[:, cols] = np.where(better, np.int16(j), arg[:, cols])
                u = u_next
                stage_args[k] = arg
            u_final = u + lam * np.asarray(mixed_fail_1d(xvals[:, None],
                                                         xpvals[None, :], sd, rd))
            relay_args[i] = stage_args
        relay_best[i] = u_final.min(axis=1)
        relay_xp_star[i] = u_final.argmin(axis=1)
        logger.debug("dual-1d relay phase=%d lam=%g table=%dx%d", i, lam, n_x, n_xp)

    # Outer pass over source totals.
    p2_1 = np.asarray(src_fail_1d(actions, sr, rounds=1))
    j_cur = actions + (1.0 - p2_1) * relay_best[1][:n_a]
    out_args = {}
    for k in range(2, k_max + 1):
        n_xk = k * (n_a - 1) + 1
        xk = step * np.arange(n_xk)
        n_xprev = (k - 1) * (n_a - 1) + 1
        j_next = np.full(n_xk, np.inf)
        argk = np.full(n_xk, -1, dtype=np.int16)
        if k == k_max:
            p1_end = np.asarray(src_fail_1d(xk, sd, rounds=k_max))
        else:
            p2_k = np.asarray(src_fail_1d(xk, sr, rounds=k))
            u_k = relay_best[k]
        for j, a in enumerate(actions):
            hi = min(j + n_xprev - 1, n_xk - 1)
            cols = np.arange(j, hi + 1)
            prev = cols - j
            x_prev = xk[prev]
            p1_prev = np.asarray(src_fail_1d(x_prev, sd, rounds=k - 1))
            p2_prev = np.asarray(src_fail_1d(x_prev, sr, rounds=k - 1))
            base = j_cur[prev] + a * p1_prev * p2_prev
            if k == k_max:
                cand = base + lam * p1_end[cols] * p2_prev
            else:
                cand = base + (p2_prev - p2_k[cols]) * u_k[cols]
            better = cand < j_next[cols]
            j_next[cols] = np.where(better, cand, j_next[cols])
            argk[cols] = np.where(better, np.int16(j), argk[cols])
        j_cur = j_next
        out_args[k] = argk

    x_idx = int(np.argmin(j_cur))
    j_value = float(j_cur[x_idx])
    rev = []
    cur = x_idx
    for k in range(k_max, 1, -1):
        j = int(out_args[k][cur])
        rev.append(float(actions[j]))
        cur -= j
    rho_s = [float(step * cur)] + rev[::-1]

    prefix_idx = []
    acc = 0
    for v in rho_s:
        acc += int(round(v / step))
        prefix_idx.append(acc)
    rows = []
    for i in range(1, k_max):
        xi = prefix_idx[i - 1]
        n_r = k_max - i
        xp = int(relay_xp_star[i][xi])
        if n_r == 1:
            rows.append((float(step * xp),))
        else:
            rev_row = []
            for k in range(k_max, i + 1, -1):
                j = int(relay_args[i][k][xi, xp])
                rev_row.append(float(actions[j]))
                xp -= j
            row = [float(step * xp)] + rev_row[::-1]
            rows.append(tuple(row))
    policy = RatePolicy(k_max=k_max, rho_s=tuple(rho_s), rho_r=tuple(rows))
    return DualSolution(lam=float(lam), j_value=j_value, policy=policy,
                        degenerate=policy.is_degenerate(step), solver="1d")


# ---------------------------------------------------------------------------
# Multiplier bisection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BisectionResult:
    """Bracketed degeneracy threshold: lambda_lo degenerate, lambda_th not."""

    lambda_th: float
    lambda_lo: float
    policy: RatePolicy
    solution: DualSolution
    trace: tuple = field(default=())


def bisect_lambda(solver, grid: DpGrid, moments: TopologyMoments, k_max,
                  tol=DEFAULT_LAMBDA_TOL, lambda_cap=DEFAULT_LAMBDA_CAP) -> BisectionResult:
    """Find the smallest multiplier (within tol) with a non-degenerate dual optimum."""
    if tol <= 0.0:
        raise DomainError("tol must be positive")
    if solver == "2d":
        solve = solve_dual_2d
    elif solver == "1d":
        solve = solve_dual_1d
    else:
        raise DomainError(f"unknown solver {solver!r}; expected '2d' or '1d'")
    trace = []

    def attempt(lam):
        sol = solve(lam, grid, moments, k_max)
        trace.append((float(lam), sol.degenerate))
        return sol

    lo_sol = attempt(0.0)
    if not lo_sol.degenerate:
        raise SolverError("dual solution at lambda=0 must be degenerate")
    lo = 0.0
    hi = 1.0
    hi_sol = attempt(hi)
    while hi_sol.degenerate:
        lo = hi
        hi *= 2.0
        if hi > lambda_cap:
            raise SolverError(f"no non-degenerate solution up to lambda={lambda_cap}")
        hi_sol = attempt(hi)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        sol = attempt(mid)
        if sol.degenerate:
            lo = mid
        else:
            hi = mid
            hi_sol = sol
    return BisectionResult(lambda_th=float(hi), lambda_lo=float(lo),
                           policy=hi_sol.policy, solution=hi_sol, trace=tuple(trace))


# ---------------------------------------------------------------------------
# Local refinement of the exact throughput and the restart study
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RefineResult:
    policy: RatePolicy
    eta_start: float
    eta_refined: float
    n_evaluations: int
    converged: bool


def refine_policy(start: RatePolicy, topo: RelayTopology,
                  n_samples=DEFAULT_REFINE_SAMPLES, seed=0, max_evals=None,
                  xatol=1e-4, fatol=1e-8,
                  frozen: FrozenSampleSet | None = None) -> RefineResult:
    """Simplex local search of the exact throughput on one frozen sample set.

    The returned policy never scores below the start on the shared draws;
    entries are clamped at zero.
    """
    ensure_valid(start)
    if start.is_degenerate():
        raise DegeneratePolicyError("refinement needs a non-degenerate start")
    if frozen is None:
        frozen = FrozenSampleSet.draw(topo, start.k_max, n_samples, seed, TAG_REFINE)
    k_max = start.k_max

    def objective(vec):
        pol = RatePolicy.from_vector(k_max, np.clip(vec, 0.0, None))
        return -frozen.eta(pol)

    x0 = start.as_vector()
    n = len(x0)
    if max_evals is None:
        max_evals = 250 * n
    res = optimize.minimize(objective, x0, method="Nelder-Mead",
                            options={"xatol": xatol, "fatol": fatol,
                                     "maxfev": max_evals, "adaptive": n > 4})
    refined = RatePolicy.from_vector(k_max, np.clip(res.x, 0.0, None))
    eta_start = frozen.eta(start)
    eta_ref = frozen.eta(refined)
    if eta_ref < eta_start:
        refined, eta_ref = start, eta_start
    return RefineResult(policy=refined, eta_start=float(eta_start),
                        eta_refined=float(eta_ref), n_evaluations=int(res.nfev),
                        converged=bool(res.success))


@dataclass(frozen=True)
class RestartStudyResult:
    """Throughputs reached by local search from uniform random starting points."""

    etas: np.ndarray
    converged: np.ndarray
    best_policy: RatePolicy

    @property
    def n_failures(self) -> int:
        return int((~self.converged).sum())

    def histogram(self, bins=20):
        return np.histogram(self.etas, bins=bins)


def random_restart_study(n_starts, seed, topo: RelayTopology, k_max,
                         rho_max=DEFAULT_RHO_MAX, n_samples=DEFAULT_REFINE_SAMPLES,
                         max_evals=None) -> RestartStudyResult:
    """Refine from n_starts uniform random policies; all scored on shared draws."""
    if n_starts < 1:
        raise DomainError("n_starts must be at least 1")
    rng = derived_rng(seed, TAG_RESTART)
    frozen = FrozenSampleSet.draw(topo, k_max, n_samples, seed, TAG_REFINE)
    etas = np.empty(n_starts)
    converged = np.empty(n_starts, dtype=bool)
    best = None
    for s in range(n_starts):
        start = random_policy(k_max, rho_max, rng, rho_min=1e-6)
        out = refine_policy(start, topo, seed=seed, frozen=frozen,
                            max_evals=max_evals)
        etas[s] = out.eta_refined
        converged[s] = out.converged
        if best is None or out.eta_refined > best[0]:
            best = (out.eta_refined, out.policy)
    return RestartStudyResult(etas=etas, converged=converged, best_policy=best[1])
