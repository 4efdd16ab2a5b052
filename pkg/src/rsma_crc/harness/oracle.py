"""Brute-force grid oracles used to cross-check the solvers."""

from __future__ import annotations

import itertools

import numpy as np

from .. import model
from ..model import Allocation, TrmpInstance

MAX_GRID_DIMS = 5
CHUNK = 200_000


class OracleDimensionError(ValueError):
    pass


def _grid(upper: float, n: int) -> np.ndarray:
    return np.linspace(0.0, upper, n + 1)


def _bs_grid(num_streams: int, n: int) -> np.ndarray:
    """Integer grid points ``i`` of ``num_streams`` BS powers with ``sum i <= n``."""
    pts = [c for c in itertools.product(range(n + 1), repeat=num_streams) if sum(c) <= n]
    return np.asarray(pts, dtype=float).reshape(-1, num_streams)


def grid_objective(instance: TrmpInstance, pvecs: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Best objective for each power vector (rows), ``-inf`` where infeasible.

    For fixed powers the best shares give the whole common rate ``min R0``
    provided the minimum-rate shortfalls fit into it.
    """
    Q = instance.num_cus
    p0, p, pr = pvecs[:, 0], pvecs[:, 1:1 + Q], pvecs[:, 1 + Q:]
    r0 = model.common_rates(instance, p0, p, pr)
    rq = model.private_rates(instance, p, pr)
    common = r0.min(axis=1)
    need = np.maximum(0.0, instance.min_rate_bps - rq).sum(axis=1)
    ok = need <= common + tol * instance.bandwidth_hz
    A, b, upper = model.feasible_set(instance)
    if A.shape[0]:
        ok &= np.all(pvecs @ A.T <= b + tol * (np.abs(pvecs) @ np.abs(A.T) + np.abs(b)), axis=1)
    return np.where(ok, common + rq.sum(axis=1), -np.inf)


def brute_force_oracle(instance: TrmpInstance, grid_points_per_axis: int = 60,
                       return_value: bool = False):
    """Best allocation over a uniform power grid.

    Each axis ``[0, budget]`` is cut into ``grid_points_per_axis`` equal
    intervals, so a grid of ``n`` points per axis refines every grid whose
    count divides ``n``. BS points above the BS budget are skipped outright.
    Returns ``None`` when no grid point is feasible.
    """
    Q, K = instance.num_cus, instance.num_radars
    if Q + K + 1 > MAX_GRID_DIMS:
        raise OracleDimensionError(f"grid oracle supports Q + K + 1 <= {MAX_GRID_DIMS}, got {Q + K + 1}")
    n = int(grid_points_per_axis)
    if n < 1:
        raise ValueError("grid_points_per_axis must be >= 1")
    bs = _bs_grid(1 + Q, n) * (instance.bs_budget_w / n)
    radar_pts = list(itertools.product(_grid(instance.radar_budget_w, n), repeat=K))
    radar = np.array(radar_pts, dtype=float).reshape(len(radar_pts), K)

    best_val, best_p = -np.inf, None
    rows_per_chunk = max(1, CHUNK // max(1, radar.shape[0]))
    for start in range(0, bs.shape[0], rows_per_chunk):
        block = bs[start:start + rows_per_chunk]
        pvecs = np.hstack([np.repeat(block, radar.shape[0], axis=0), np.tile(radar, (block.shape[0], 1))])
        vals = grid_objective(instance, pvecs)
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val, best_p = float(vals[i]), pvecs[i]
    if best_p is None:
        return (None, -np.inf) if return_value else None
    alloc = _allocation(instance, best_p)
    return (alloc, best_val) if return_value else alloc


def _allocation(instance: TrmpInstance, pvec: np.ndarray) -> Allocation:
    Q = instance.num_cus
    p0, p, pr = pvec[0], pvec[1:1 + Q], pvec[1 + Q:]
    r0 = model.common_rates(instance, p0, p, pr)
    rq = model.private_rates(instance, p, pr)
    need = np.maximum(0.0, instance.min_rate_bps - rq)
    a = model.split_common_rate(instance, float(r0.min()), need, int(np.argmax(rq)))
    return Allocation(need if a is None else a, p0, p, pr)


def grid_ratio_max(instance: TrmpInstance, q: int, message: str = "private",
                   points: int = 41, rounds: int = 12, shrink: float = 0.25) -> float:
    """``1 + max SINR`` of one stream by zooming grid search over the polytope.

    Only the stream's own BS power and the radar powers are searched; the
    other BS streams are held at zero because they only add interference at
    CU ``q`` and at the radars.
    """
    Q, K = instance.num_cus, instance.num_radars
    col = 0 if message == "common" else 1 + q
    ch = instance.channels
    A, b, _ = model.feasible_set(instance)
    lo = np.zeros(1 + K)
    hi = np.concatenate([[instance.bs_budget_w], np.full(K, instance.radar_budget_w)])
    box_lo, box_hi = lo.copy(), hi.copy()
    best_val, best = 0.0, None
    for _ in range(rounds):
        axes = [np.linspace(box_lo[i], box_hi[i], points) for i in range(1 + K)]
        grid = np.array(list(itertools.product(*axes))).reshape(-1, 1 + K)
        pvecs = np.zeros((grid.shape[0], 1 + Q + K))
        pvecs[:, col] = grid[:, 0]
        pvecs[:, 1 + Q:] = grid[:, 1:]
        feas = np.all(pvecs @ A.T <= b + 1e-12 * (np.abs(pvecs) @ np.abs(A.T) + np.abs(b)), axis=1)
        interf = pvecs[:, 1 + Q:] @ ch.g_rc[:, q] + ch.noise_cu_w[q]
        if message == "common":
            interf = interf + ch.h_c[q] * pvecs[:, 1:1 + Q].sum(axis=1)
        ratio = np.where(feas, ch.h_c[q] * pvecs[:, col] / interf, -np.inf)
        i = int(np.argmax(ratio))
        if ratio[i] > best_val or best is None:
            if np.isfinite(ratio[i]):
                best_val, best = max(best_val, float(ratio[i])), grid[i]
        if best is None:
            break
        half = (box_hi - box_lo) * shrink
        box_lo = np.maximum(lo, best - half)
        box_hi = np.minimum(hi, best + half)
    return 1.0 + best_val
