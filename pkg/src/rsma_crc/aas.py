"""Additive approximation scheme for the sum-rate problem.

The private-SINR space of the CUs is cut into geometric cells
``[(1+eps)^(t-1), (1+eps)^t]`` per user. Inside one cell the private rates are
known up to ``delta = log2(1+eps)`` each, so what remains is a max-min over
common rates, solved by bisection on the common rate with an LP feasibility
test at every step. The best cell found is within ``delta * Q * B`` of the
optimum.
"""

from __future__ import annotations

import csv
import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import model
from .lp import BREAKDOWN, LinearProgram, lp_feasible, lp_solve, relative_violation
from .model import Allocation, TrmpInstance

BISECTION_TOL = 1e-6  # in units of B
REL_TOL = 1e-7  # accepted relative row violation of an LP witness
POLISH_STARTS = 4  # most recent incumbents handed to the local solver
CANDIDATE_TOL = 1e-6  # normalised constraint violation accepted for a returned point


class EmptyFeasibleSetError(ValueError):
    pass


@dataclass(frozen=True)
class RateBounds:
    ub_private: np.ndarray
    ub_common: np.ndarray
    t_bar: float  # upper bound on the common rate, in units of B

    def __post_init__(self):
        if np.any(self.ub_private < 1) or np.any(self.ub_common < 1) or self.t_bar < 0:
            raise ValueError("ratio bounds must be >= 1 and t_bar >= 0")


@dataclass(frozen=True)
class Cube:
    indices: tuple[int, ...]
    lo: np.ndarray
    hi: np.ndarray

    @property
    def label(self) -> str:
        return "-".join(map(str, self.indices))


@dataclass
class CubeSolution:
    allocation: Allocation  # normalised units
    objective: float  # normalised units (B = 1)
    t_star: float
    min_rate_slack: float


@dataclass
class AasResult:
    status: str
    allocation: Allocation | None
    objective: float
    certified_objective: float
    error_bound: float
    delta: float
    epsilon: float
    cubes_total: int
    cubes_examined: int
    cubes_feasible: int
    runtime_s: float
    min_rate_slack: float = 0.0
    best_cube: tuple[int, ...] | None = None
    bounds: RateBounds | None = None
    diagnostics: list = field(default_factory=list)

    def write_diagnostics(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["cube_index", "feasible", "T_star", "objective"])
            writer.writerows(self.diagnostics)


def _ratio_terms(instance: TrmpInstance, q: int, message: str):
    """Numerator/denominator coefficient vectors of a CU's SINR over (p0, p, pr)."""
    Q, K = instance.num_cus, instance.num_radars
    ch = instance.channels
    num = np.zeros(1 + Q + K)
    den = np.zeros(1 + Q + K)
    den[1 + Q:] = ch.g_rc[:, q]
    den[1:1 + Q] = ch.h_c[q]
    if message == "private":
        num[1 + q] = ch.h_c[q]
        den[1 + q] = 0.0
    elif message == "common":
        num[0] = ch.h_c[q]
    else:
        raise ValueError(f"message must be 'private' or 'common', got {message!r}")
    return num, den, ch.noise_cu_w[q]


@dataclass
class RatioBound:
    ub: float
    point: np.ndarray  # maximiser over (p0, p, pr)
    y: np.ndarray
    t: float


def ratio_bound_lp(instance: TrmpInstance, q: int, message: str = "private") -> LinearProgram:
    """Charnes-Cooper LP of ``max num.p / (den.p + noise)`` over the polytope X.

    Variables are ``(y, t)`` with ``y = t p`` and ``t = 1 / (den.p + noise)``.
    """
    num, den, noise = _ratio_terms(instance, q, message)
    A, b, upper = model.feasible_set(instance)
    n = num.size
    rows = [np.hstack([A, -b[:, None]]), np.hstack([np.eye(n), -upper[:, None]])]
    A_ub = np.vstack(rows)
    A_eq = np.concatenate([den, [noise]])[None, :]
    return LinearProgram(np.concatenate([num, [0.0]]), A_ub, np.zeros(A_ub.shape[0]),
                         A_eq, np.ones(1), maximize=True)


def ratio_upper_bound(instance: TrmpInstance, q: int, message: str = "private",
                      detail: bool = False):
    """``1 + max SINR`` of CU ``q``'s private or common stream over X."""
    res = lp_solve(ratio_bound_lp(instance, q, message))
    if res.status == "infeasible":
        raise EmptyFeasibleSetError("empty feasible set")
    if not res.success:
        raise RuntimeError(f"ratio bound LP failed: {res.status}")
    y, t = res.x[:-1], res.x[-1]
    ub = 1.0 + max(res.value, 0.0)
    if not detail:
        return ub
    point = y / t if t > 0 else np.zeros_like(y)
    return RatioBound(ub, point, y, t)


def compute_bounds(instance: TrmpInstance) -> RateBounds:
    """Ratio bounds for every CU; ``t_bar`` is in units of B."""
    Q = instance.num_cus
    ub_p = np.array([ratio_upper_bound(instance, q, "private") for q in range(Q)])
    ub_c = np.array([ratio_upper_bound(instance, q, "common") for q in range(Q)])
    return RateBounds(ub_p, ub_c, float(np.log2(np.max(ub_c))))


def num_intervals(ub: float, epsilon: float) -> int:
    """``T_q = floor(log_{1+eps} UB_q)``, robust to round-off at exact powers."""
    x = math.log(ub) / math.log1p(epsilon)
    return int(math.floor(x + 1e-9))


def _interval(t: int, T: int, ub: float, epsilon: float) -> tuple[float, float]:
    lo = (1.0 + epsilon) ** (t - 1)
    hi = ub if t == T + 1 else min((1.0 + epsilon) ** t, ub)
    return lo, hi


def partition_cubes(bounds: RateBounds, epsilon: float) -> Iterator[Cube]:
    """All ``prod_q (T_q + 1)`` cells, lexicographically, generated lazily."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    Ts = [num_intervals(u, epsilon) for u in bounds.ub_private]
    for idx in itertools.product(*[range(1, T + 2) for T in Ts]):
        lo, hi = zip(*(_interval(t, T, u, epsilon) for t, T, u in zip(idx, Ts, bounds.ub_private)))
        yield Cube(idx, np.array(lo), np.array(hi))


def count_cubes(bounds: RateBounds, epsilon: float) -> int:
    return math.prod(num_intervals(u, epsilon) + 1 for u in bounds.ub_private)


def _candidate_cubes(bounds: RateBounds, epsilon: float, min_rate: np.ndarray, delta: float) -> list[Cube]:
    """Cells that are not provably empty, lexicographic order.

    For any power allocation sum_q SINR_q / (1 + SINR_q) < 1, so a cell whose
    lower corners already reach 1 holds no point. Cells whose relaxed
    minimum-rate shares exceed the common-rate bound are also dropped.
    """
    Ts = [num_intervals(u, epsilon) for u in bounds.ub_private]
    Q = len(Ts)
    out: list[Cube] = []

    def rec(q, idx, used, need):
        if q == Q:
            lo, hi = zip(*(_interval(t, T, u, epsilon) for t, T, u in zip(idx, Ts, bounds.ub_private)))
            out.append(Cube(tuple(idx), np.array(lo), np.array(hi)))
            return
        for t in range(1, Ts[q] + 2):
            lo = (1.0 + epsilon) ** (t - 1)
            u = used + (1.0 - 1.0 / lo)
            if u >= 1.0:
                break
            n = need + max(0.0, min_rate[q] - t * delta)
            if n > bounds.t_bar + BISECTION_TOL:
                continue
            idx.append(t)
            rec(q + 1, idx, u, n)
            idx.pop()

    rec(0, [], 0.0, 0.0)
    return out


class _CubeLP:
    """Feasibility system of one cell at a given common-rate level."""

    def __init__(self, instance: TrmpInstance, cube: Cube):
        Q, K = instance.num_cus, instance.num_radars
        ch = instance.channels
        A, b, upper = model.feasible_set(instance)
        rows, rhs = [A], [b]
        n = 1 + Q + K
        for q in range(Q):
            num, den, noise = _ratio_terms(instance, q, "private")
            if cube.lo[q] > 1.0:
                rows.append(((cube.lo[q] - 1.0) * den - num)[None, :])
                rhs.append([-(cube.lo[q] - 1.0) * noise])
            rows.append((num - (cube.hi[q] - 1.0) * den)[None, :])
            rhs.append([(cube.hi[q] - 1.0) * noise])
        self.base_A = np.vstack(rows)
        self.base_b = np.concatenate([np.asarray(r, dtype=float) for r in rhs])
        self.upper = upper
        # common-rate rows: (2^T - 1) * (h sum p + g pr + noise) - h p0 <= 0
        self.rate_den = np.zeros((Q, n))
        self.rate_den[:, 1:1 + Q] = ch.h_c[:, None]
        self.rate_den[:, 1 + Q:] = ch.g_rc.T
        self.rate_num = np.zeros((Q, n))
        self.rate_num[:, 0] = ch.h_c
        self.noise = ch.noise_cu_w

    def check(self, level: float):
        if level <= 0:
            A, b = self.base_A, self.base_b
        else:
            f = 2.0 ** level - 1.0
            A = np.vstack([self.base_A, f * self.rate_den - self.rate_num])
            b = np.concatenate([self.base_b, -f * self.noise])
        # max total power: a witness on the budget face stays meaningful when
        # the noise terms are negligible next to the gains
        res = lp_solve(LinearProgram(np.ones(A.shape[1]), A, b, upper=self.upper, maximize=True))
        x = res.x if res.success else None
        if res.status == BREAKDOWN:
            # degenerate optimisation; a phase-one witness still settles feasibility
            x = lp_feasible(A, b, upper=self.upper).witness
        if x is None or relative_violation(A, b, x) > REL_TOL:
            return None
        return x


def min_rate_shares(instance: TrmpInstance, indices, delta: float) -> np.ndarray:
    """Common-rate share each CU needs inside a cell, crediting it with the
    cell's top private rate ``t_q * delta`` (the relaxed minimum-rate rule)."""
    return np.maximum(0.0, instance.min_rate_bps - np.asarray(indices) * delta)


def solve_cube(instance: TrmpInstance, cube: Cube, epsilon: float, bounds: RateBounds | None = None,
               favoured: int | None = None, floor: float = 0.0) -> CubeSolution | None:
    """Best common rate inside one cell, with the matching rate split.

    ``instance`` must be normalised (B = 1). The common-rate search starts at
    ``floor`` (used by the caller to skip cells that cannot beat an incumbent);
    ``None`` means no point of the cell reaches it. The split meets every
    minimum rate exactly when it can; otherwise it falls back to the relaxed
    shares and ``min_rate_slack`` records the largest shortfall.
    """
    if bounds is None:
        bounds = compute_bounds(instance)
    if favoured is None:
        favoured = int(np.argmax(bounds.ub_private))
    delta = math.log2(1.0 + epsilon)
    shares = min_rate_shares(instance, cube.indices, delta)
    lo_level = max(floor, float(shares.sum()), 0.0)
    if lo_level > bounds.t_bar + BISECTION_TOL:
        return None

    system = _CubeLP(instance, cube)
    witness = system.check(lo_level)
    if witness is None:
        return None
    hi_level = bounds.t_bar
    if hi_level > lo_level:
        top = system.check(hi_level)
        if top is not None:
            lo_level, witness = hi_level, top
        else:
            while hi_level - lo_level > BISECTION_TOL:
                mid = 0.5 * (lo_level + hi_level)
                w = system.check(mid)
                if w is None:
                    hi_level = mid
                else:
                    lo_level, witness = mid, w
    Q = instance.num_cus
    p0, p, pr = witness[0], witness[1:1 + Q], witness[1 + Q:]
    r0 = model.common_rates(instance, p0, p, pr)
    rq = model.private_rates(instance, p, pr)
    common_total = float(np.min(r0))
    exact = np.maximum(0.0, instance.min_rate_bps - rq)
    a = model.split_common_rate(instance, common_total, exact, favoured)
    if a is None:
        a = model.split_common_rate(instance, common_total, shares, favoured)
        if a is None:
            return None
    slack = float(max(0.0, np.max(instance.min_rate_bps - a - rq)))
    alloc = Allocation(a, p0, p, pr)
    return CubeSolution(alloc, common_total + float(rq.sum()), lo_level, slack)


def epsilon_from_delta(delta: float) -> float:
    return 2.0**delta - 1.0


def aas_solve(instance: TrmpInstance, delta: float | None = None, *, epsilon: float | None = None,
              diagnostics: bool = False, polish: int = POLISH_STARTS) -> AasResult:
    """Global solve to within ``delta * Q * B`` of the optimum.

    Give either ``delta`` in (0, 1) or the cell ratio ``epsilon = 2**delta - 1``.
    Cells are visited in decreasing order of their private-rate ceiling;
    a cell is only searched above the common rate it would need to beat the
    incumbent, so skipped cells cannot change the optimal value.

    A cell counts as feasible under the relaxed minimum-rate rule, which the
    certificate is proved for; its best value is ``certified_objective``.
    Relaxed solutions may miss a CU's minimum rate by up to ``delta * B``,
    so the returned allocation is the best fully feasible candidate: cell
    solutions whose exact split fits, and local-solver runs started from the
    last ``polish`` incumbents. Only when no candidate is feasible is the
    relaxed solution returned, with its shortfall in ``min_rate_slack``.
    """
    start = time.perf_counter()
    if (delta is None) == (epsilon is None):
        raise ValueError("give exactly one of delta and epsilon")
    if delta is None:
        if not epsilon > 0:
            raise ValueError("epsilon must be positive")
        delta = math.log2(1.0 + epsilon)
    else:
        if not 0 < delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        epsilon = epsilon_from_delta(delta)

    norm, scaling = instance.normalized()
    Q = norm.num_cus
    error_bound = delta * Q * instance.bandwidth_hz

    def empty(status, bounds=None, total=0, examined=0):
        return AasResult(status, None, float("nan"), float("nan"), error_bound, delta, epsilon, total, examined, 0,
                         time.perf_counter() - start, bounds=bounds)

    A, b, upper = model.feasible_set(norm)
    if not lp_feasible(A, b, upper=upper).feasible:
        return empty("infeasible problem")
    bounds = compute_bounds(norm)
    favoured = int(np.argmax(bounds.ub_private))
    total = count_cubes(bounds, epsilon)
    cubes = _candidate_cubes(bounds, epsilon, norm.min_rate_bps, delta)
    ceiling = {c.indices: float(np.sum(np.log2(c.hi))) for c in cubes}
    cubes.sort(key=lambda c: (-ceiling[c.indices], c.indices))

    best: CubeSolution | None = None
    best_idx = None
    examined = feasible = 0
    rows = []
    incumbents: list[CubeSolution] = []
    for cube in cubes:
        cap = ceiling[cube.indices]
        incumbent = best.objective if best is not None else -np.inf
        if cap + bounds.t_bar < incumbent:
            break
        examined += 1
        sol = solve_cube(norm, cube, epsilon, bounds, favoured, floor=incumbent - cap)
        if sol is None:
            if diagnostics:
                rows.append([cube.label, 0, "", ""])
            continue
        feasible += 1
        if diagnostics:
            rows.append([cube.label, 1, repr(sol.t_star * instance.bandwidth_hz),
                         repr(sol.objective * instance.bandwidth_hz)])
        better = best is None or sol.objective > best.objective + 1e-12 or (
            abs(sol.objective - best.objective) <= 1e-12 and cube.indices < best_idx)
        if better:
            best, best_idx = sol, cube.indices
            incumbents.append(sol)

    if best is None:
        res = empty("infeasible problem", bounds, total, examined)
        res.diagnostics = rows
        return res

    candidates = [s.allocation for s in incumbents if s.min_rate_slack == 0.0]
    if polish:
        from .sqp import sqp_solve  # local import: sqp depends on this module's helpers

        candidates += [sqp_solve(norm, init=s.allocation).allocation for s in incumbents[-polish:]]
    candidates = [c for c in candidates if model.check_feasibility(norm, c, CANDIDATE_TOL).feasible]
    if candidates:
        alloc_n = max(candidates, key=lambda c: model.objective(norm, c))
        slack_n = 0.0
    else:
        alloc_n, slack_n = best.allocation, best.min_rate_slack

    alloc = scaling.to_physical(alloc_n)
    return AasResult(
        status="optimal",
        allocation=alloc,
        objective=model.objective(instance, alloc),
        certified_objective=best.objective * instance.bandwidth_hz,
        error_bound=error_bound,
        delta=delta,
        epsilon=epsilon,
        cubes_total=total,
        cubes_examined=examined,
        cubes_feasible=feasible,
        runtime_s=time.perf_counter() - start,
        min_rate_slack=slack_n * instance.bandwidth_hz,
        best_cube=best_idx,
        bounds=bounds,
        diagnostics=rows,
    )
