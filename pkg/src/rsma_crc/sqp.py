"""Local solver: SQP with a damped BFGS Hessian and a fractional-programming line search.

Works on the normalised instance (B = 1, unit budgets and noise). The
decision vector is ``x = (a_1..a_Q, p0, p_1..p_Q, pr_1..pr_K)``.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import model
from .lp import LinearProgram, QuadraticProgram, lp_solve, qp_solve
from .model import Allocation, TrmpInstance

LN2 = math.log(2.0)
ALPHA_MIN = 1e-12
DAMPING = 0.2
ELASTIC_PENALTY = 1e6
ARMIJO = 1e-4
COND_RESET = 1e10  # the QP subproblem degrades beyond this Hessian conditioning


def _split_x(instance: TrmpInstance, x):
    Q = instance.num_cus
    x = np.asarray(x, dtype=float)
    return x[:Q], x[Q], x[Q + 1:2 * Q + 1], x[2 * Q + 1:]


def _as_vector(instance: TrmpInstance, point) -> np.ndarray:
    if isinstance(point, Allocation):
        return point.vector()
    x = np.asarray(point, dtype=float)
    if x.shape != (2 * instance.num_cus + 1 + instance.num_radars,):
        raise ValueError(f"point has shape {x.shape}, expected ({2 * instance.num_cus + 1 + instance.num_radars},)")
    return x


def rate_jacobians(instance: TrmpInstance, point):
    """Private and common rates with their Jacobians over the full x."""
    x = _as_vector(instance, point)
    Q, K = instance.num_cus, instance.num_radars
    a, p0, p, pr = _split_x(instance, x)
    ch = instance.channels
    h = ch.h_c
    B = instance.bandwidth_hz
    f = h * p.sum() + pr @ ch.g_rc + ch.noise_cu_w  # everything received except p0
    g = f - h * p  # minus own private stream
    F0 = f + h * p0
    R = B * (np.log2(f) - np.log2(g))
    R0 = B * (np.log2(F0) - np.log2(f))

    n = x.size
    df = np.zeros((Q, n))
    df[:, Q + 1:2 * Q + 1] = h[:, None]
    df[:, 2 * Q + 1:] = ch.g_rc.T
    dg = df.copy()
    dg[np.arange(Q), Q + 1 + np.arange(Q)] = 0.0
    dF0 = df.copy()
    dF0[:, Q] = h
    JR = B / LN2 * (df / f[:, None] - dg / g[:, None])
    JR0 = B / LN2 * (dF0 / F0[:, None] - df / f[:, None])
    return R, R0, JR, JR0


def objective_value(instance: TrmpInstance, point) -> float:
    """Minimisation objective ``-sum a - sum R_q``."""
    x = _as_vector(instance, point)
    a, _, p, pr = _split_x(instance, x)
    return -float(a.sum() + model.private_rates(instance, p, pr).sum())


def objective_gradient(instance: TrmpInstance, point) -> np.ndarray:
    x = _as_vector(instance, point)
    if np.any(x < 0):
        raise ValueError("point must be entrywise nonnegative")
    Q = instance.num_cus
    _, _, JR, _ = rate_jacobians(instance, x)
    grad = -JR.sum(axis=0)
    grad[:Q] -= 1.0
    return grad


@dataclass
class Linearization:
    """Nonlinear constraints ``c(x) <= 0`` and their gradients at a point.

    Rows ``0..Q-1`` are ``g_q = sum a - R_{q,0}``, rows ``Q..2Q-1`` are
    ``h_q = C_q - a_q - R_q``. ``A_lin, b_lin, upper`` are the linear
    constraints over x, which the subproblem takes verbatim.
    """

    values: np.ndarray
    jacobian: np.ndarray
    A_lin: np.ndarray
    b_lin: np.ndarray
    upper: np.ndarray

    def affine(self, s) -> np.ndarray:
        return self.values + self.jacobian @ np.asarray(s, dtype=float)


def nonlinear_constraints(instance: TrmpInstance, point):
    x = _as_vector(instance, point)
    Q = instance.num_cus
    a = x[:Q]
    R, R0, JR, JR0 = rate_jacobians(instance, x)
    n = x.size
    Jg = -JR0
    Jg[:, :Q] += 1.0
    Jh = -JR
    Jh[np.arange(Q), np.arange(Q)] -= 1.0
    values = np.concatenate([a.sum() - R0, instance.min_rate_bps - a - R])
    return values, np.vstack([Jg, Jh]).reshape(2 * Q, n)


def linear_constraints(instance: TrmpInstance):
    """Linear part of the feasible set over x: ``A x <= b``, ``0 <= x <= upper``."""
    Q = instance.num_cus
    A, b, upper = model.feasible_set(instance)
    A_x = np.hstack([np.zeros((A.shape[0], Q)), A])
    return A_x, b, np.concatenate([np.full(Q, np.inf), upper])


def linearize_constraints(instance: TrmpInstance, point) -> Linearization:
    values, jac = nonlinear_constraints(instance, point)
    A, b, upper = linear_constraints(instance)
    return Linearization(values, jac, A, b, upper)


def bfgs_update(H: np.ndarray, u: np.ndarray, v: np.ndarray, damping: float = DAMPING) -> np.ndarray:
    """Powell-damped BFGS update; keeps ``H`` symmetric positive definite.

    If ``v'u < damping * u'Hu`` the curvature pair is replaced by a convex
    combination of ``v`` and ``Hu`` that meets the threshold exactly.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    Hu = H @ u
    uHu = float(u @ Hu)
    if uHu <= 0 or not np.isfinite(uHu):
        return H.copy()
    vu = float(v @ u)
    if vu < damping * uHu:
        theta = (1.0 - damping) * uHu / (uHu - vu)
        v = theta * v + (1.0 - theta) * Hu
        vu = float(v @ u)
    H_new = H + np.outer(v, v) / vu - np.outer(Hu, Hu) / uHu
    return 0.5 * (H_new + H_new.T)


@dataclass
class LineSearchProblem:
    """Rate part of the objective along ``x + alpha s`` as linear-fractional terms.

    Per CU, ``f_q(alpha) = alpha V_q + W_q`` is the received power without the
    common stream and ``g_q(alpha) = alpha V'_q + W'_q`` additionally drops the
    own private stream.
    """

    V: np.ndarray
    W: np.ndarray
    Vp: np.ndarray
    Wp: np.ndarray
    a: np.ndarray
    s_a: np.ndarray
    bandwidth: float = 1.0
    alpha_max: float = 1.0
    alpha_min: float = ALPHA_MIN
    direction_norm: float | None = None

    def __post_init__(self):
        for name in ("V", "W", "Vp", "Wp", "a", "s_a"):
            setattr(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        if np.any(self.W <= 0) or np.any(self.Wp <= 0):
            raise ValueError("W and W' must be positive")
        if self.direction_norm is None:
            self.direction_norm = float(np.abs(np.concatenate([self.V, self.Vp, self.s_a])).max())

    @classmethod
    def from_iterate(cls, instance: TrmpInstance, x, s, alpha_max: float = 1.0) -> "LineSearchProblem":
        a, _, p, pr = _split_x(instance, x)
        s_a, _, s_p, s_r = _split_x(instance, s)
        ch = instance.channels
        h = ch.h_c
        V = h * s_p.sum() + s_r @ ch.g_rc
        W = h * p.sum() + pr @ ch.g_rc + ch.noise_cu_w
        Vp = V - h * s_p
        Wp = W - h * p
        return cls(V, W, Vp, Wp, a, s_a, instance.bandwidth_hz, alpha_max,
                   direction_norm=float(np.abs(s).max()))

    def value(self, alpha: float) -> float:
        f = alpha * self.V + self.W
        g = alpha * self.Vp + self.Wp
        return float(np.sum(self.a + alpha * self.s_a + self.bandwidth * np.log2(f / g)))

    def beta(self, alpha: float) -> np.ndarray:
        return np.sqrt(alpha * self.V + self.W) / (alpha * self.Vp + self.Wp)

    def _inner(self, alpha, beta):
        return 2.0 * beta * np.sqrt(alpha * self.V + self.W) - beta**2 * (alpha * self.Vp + self.Wp)

    def surrogate(self, alpha: float, beta: np.ndarray) -> float:
        inner = self._inner(alpha, beta)
        if np.any(inner <= 0):
            return -np.inf
        return float(np.sum(self.a + alpha * self.s_a + self.bandwidth * np.log2(inner)))

    def surrogate_slope(self, alpha: float, beta: np.ndarray) -> float:
        inner = self._inner(alpha, beta)
        d_inner = beta * self.V / np.sqrt(alpha * self.V + self.W) - beta**2 * self.Vp
        return float(np.sum(self.s_a + self.bandwidth / LN2 * d_inner / inner))


def _maximize_concave(lsp: LineSearchProblem, beta, anchor: float, tol: float) -> float:
    """Bisection on the slope sign of the concave surrogate over [alpha_min, alpha_max].

    ``anchor`` is a point inside the surrogate's domain; outside the domain the
    search is steered back towards it.
    """
    lo, hi = lsp.alpha_min, lsp.alpha_max

    def ascent(alpha):
        if np.any(lsp._inner(alpha, beta) <= 0):
            return alpha < anchor
        return lsp.surrogate_slope(alpha, beta) > 0

    if ascent(hi):
        return hi
    if not ascent(lo):
        return lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ascent(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def fp_line_search(lsp: LineSearchProblem, eps_fp: float = 1e-6, max_iter: int = 100,
                   history: list | None = None) -> float:
    """Step length by alternating closed-form ``beta`` and a concave 1-D solve in ``alpha``.

    The objective ``lsp.value`` never decreases between iterations; a new
    ``alpha`` that would lower the surrogate is rejected. Iteration stops once
    successive values differ by at most ``eps_fp``.
    """
    if lsp.direction_norm == 0:
        raise ValueError("line search needs a nonzero direction")
    alpha = lsp.alpha_max
    if history is not None:
        history.append(lsp.value(alpha))
    for _ in range(max_iter):
        beta = lsp.beta(alpha)
        new = _maximize_concave(lsp, beta, alpha, 0.1 * eps_fp)
        if lsp.surrogate(new, beta) < lsp.surrogate(alpha, beta):
            new = alpha
        done = abs(new - alpha) <= eps_fp
        alpha = new
        if history is not None:
            history.append(lsp.value(alpha))
        if done:
            break
    return max(alpha, lsp.alpha_min)


@dataclass
class Subproblem:
    step: np.ndarray
    multipliers: np.ndarray  # nonlinear rows
    lin_multipliers: np.ndarray
    lower_multipliers: np.ndarray
    upper_multipliers: np.ndarray
    elastic: bool


def _solve_subproblem(instance: TrmpInstance, x, H, grad, lin: Linearization) -> Subproblem | None:
    n = x.size
    m = lin.values.size
    b_lin = lin.b_lin - lin.A_lin @ x
    lower, upper = -x, lin.upper - x
    qp = QuadraticProgram(H, grad, np.vstack([lin.jacobian, lin.A_lin]),
                          np.concatenate([-lin.values, b_lin]), lower=lower, upper=upper)
    res = qp_solve(qp)
    if res.success:
        return Subproblem(res.x, res.multipliers_ub[:m], res.multipliers_ub[m:],
                          res.multipliers_lower, res.multipliers_upper, False)
    # elastic mode: slacks on the linearised nonlinear rows
    H_e = np.eye(n + m)
    H_e[:n, :n] = H
    g_e = np.concatenate([grad, np.full(m, ELASTIC_PENALTY)])
    A_e = np.vstack([np.hstack([lin.jacobian, -np.eye(m)]),
                     np.hstack([lin.A_lin, np.zeros((lin.A_lin.shape[0], m))])])
    qp = QuadraticProgram(H_e, g_e, A_e, np.concatenate([-lin.values, b_lin]),
                          lower=np.concatenate([lower, np.zeros(m)]),
                          upper=np.concatenate([upper, np.full(m, np.inf)]))
    res = qp_solve(qp)
    if not res.success:
        return None
    return Subproblem(res.x[:n], res.multipliers_ub[:m], res.multipliers_ub[m:],
                      res.multipliers_lower[:n], res.multipliers_upper[:n], True)


def _violation(instance: TrmpInstance, x) -> float:
    """Sum of constraint violations (l1)."""
    values, _ = nonlinear_constraints(instance, x)
    A, b, upper = linear_constraints(instance)
    return float(np.maximum(values, 0).sum() + np.maximum(A @ x - b, 0).sum()
                 + np.maximum(-x, 0).sum() + np.maximum(x - upper, 0).sum())


def kkt_residual(instance: TrmpInstance, x, sub: Subproblem, grad=None, lin=None) -> float:
    """Stationarity, complementarity and primal violation at ``x`` (max norm)."""
    grad = objective_gradient(instance, np.maximum(x, 0)) if grad is None else grad
    lin = linearize_constraints(instance, x) if lin is None else lin
    stat = (grad + lin.jacobian.T @ sub.multipliers + lin.A_lin.T @ sub.lin_multipliers
            - sub.lower_multipliers + sub.upper_multipliers)
    lin_res = lin.A_lin @ x - lin.b_lin
    upper_res = np.where(np.isfinite(lin.upper), x - lin.upper, 0.0)
    comp = np.concatenate([sub.multipliers * lin.values, sub.lin_multipliers * lin_res,
                           sub.lower_multipliers * x, sub.upper_multipliers * upper_res])
    primal = np.concatenate([lin.values, lin_res, -x, upper_res])
    return float(max(np.abs(stat).max(), np.abs(comp).max(initial=0.0), np.maximum(primal, 0).max(initial=0.0)))


def default_start(instance: TrmpInstance) -> Allocation:
    """Equal power on every BS stream, as large as the polytope allows.

    Falls back to any point of the polytope if the equal split is infeasible.
    """
    Q, K = instance.num_cus, instance.num_radars
    A, b, upper = model.feasible_set(instance)
    # variables (t, pr): p0 = p_q = t
    A_t = np.hstack([A[:, :1 + Q].sum(axis=1, keepdims=True), A[:, 1 + Q:]])
    res = lp_solve(LinearProgram(np.concatenate([[1.0], np.zeros(K)]), A_t, b,
                                 upper=np.concatenate([[upper[0]], upper[1 + Q:]]), maximize=True))
    if res.success:
        t, pr = res.x[0], res.x[1:]
        pvec = np.concatenate([np.full(1 + Q, t), pr])
    else:
        res = lp_solve(LinearProgram(np.zeros(1 + Q + K), A, b, upper=upper))
        if not res.success:
            raise ValueError("empty feasible set")
        pvec = res.x
    return allocation_for_powers(instance, pvec)


def allocation_for_powers(instance: TrmpInstance, pvec) -> Allocation:
    """Best common-rate split for fixed powers (minimum-rate shortfalls first)."""
    Q = instance.num_cus
    pvec = np.asarray(pvec, dtype=float)
    p0, p, pr = pvec[0], pvec[1:1 + Q], pvec[1 + Q:]
    r0 = model.common_rates(instance, p0, p, pr)
    rq = model.private_rates(instance, p, pr)
    need = np.maximum(0.0, instance.min_rate_bps - rq)
    favoured = int(np.argmax(rq))
    a = model.split_common_rate(instance, float(np.min(r0)), need, favoured)
    if a is None:
        a = need
    return Allocation(a, p0, p, pr)


@dataclass
class SolveReport:
    status: str
    allocation: Allocation
    objective: float
    iterations: int
    kkt_residual: float
    max_violation: float
    feasible: bool
    runtime_s: float
    trace: list = field(default_factory=list)

    def write_trace(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "objective", "step_norm", "kkt_residual"])
            writer.writerows(self.trace)


def sqp_solve(instance: TrmpInstance, init: Allocation | None = None, tol: float = 1e-8,
              max_iter: int = 500, eps_fp: float = 1e-6, feas_tol: float = 1e-6,
              hessian_log: list | None = None) -> SolveReport:
    """Local maximisation of the sum rate from ``init`` (need not be feasible).

    Stops when the subproblem step has max-norm ``<= tol`` or after
    ``max_iter`` iterations. At the end the common-rate split is recomputed
    for the final powers, which can only raise the objective.
    """
    start = time.perf_counter()
    norm, scaling = instance.normalized()
    Q = norm.num_cus
    if init is None:
        x = default_start(norm).vector()
    else:
        x = scaling.to_normalized(init).vector()
        if np.any(x < 0):
            raise ValueError("initial point must be nonnegative")
    n = x.size
    H = np.eye(n)
    rho = 1.0
    trace = []
    status = "max_iter"
    sub = None
    kkt = np.inf
    fresh_hessian = True
    for it in range(1, max_iter + 1):
        grad = objective_gradient(norm, x)
        lin = linearize_constraints(norm, x)
        sub = _solve_subproblem(norm, x, H, grad, lin)
        if sub is None:
            status = "stalled"
            break
        kkt = kkt_residual(norm, x, sub, grad, lin)
        s = sub.step
        if np.abs(s).max() <= tol:
            status = "converged"
            break
        rho = max(rho, 2.0 * float(np.abs(sub.multipliers).max(initial=0.0)))

        lsp = LineSearchProblem.from_iterate(norm, x, s)
        alpha = fp_line_search(lsp, eps_fp)

        def merit(y):
            return objective_value(norm, y) + rho * _violation(norm, y)

        phi0 = merit(x)
        slope = float(grad @ s) - rho * float(np.maximum(lin.values, 0).sum())
        # the FP step ignores the nonlinear constraints; the merit function
        # arbitrates between it and the full step
        if alpha < 1.0 and merit(np.maximum(x + s, 0)) < merit(np.maximum(x + alpha * s, 0)):
            alpha = 1.0
        while alpha > ALPHA_MIN and merit(np.maximum(x + alpha * s, 0)) > phi0 + ARMIJO * alpha * min(slope, 0.0):
            alpha *= 0.5
        x_new = np.maximum(x + alpha * s, 0.0)
        u = x_new - x
        if not np.any(u) or alpha <= ALPHA_MIN:
            if fresh_hessian:
                status = "stalled"
                break
            # no usable step along a stale curvature model: restart from identity
            H = np.eye(n)
            fresh_hessian = True
            continue
        fresh_hessian = False

        def lagrangian_grad(y):
            _, J = nonlinear_constraints(norm, y)
            return objective_gradient(norm, y) + J.T @ sub.multipliers

        H = bfgs_update(H, u, lagrangian_grad(x_new) - lagrangian_grad(x))
        if np.linalg.cond(H) > COND_RESET:
            H = np.eye(n)
        if hessian_log is not None:
            hessian_log.append(float(np.linalg.eigvalsh(H).min()))
        x = x_new
        trace.append([it, -objective_value(norm, x) * instance.bandwidth_hz,
                      float(np.linalg.norm(u)), kkt])

    if status != "converged" or sub is None:
        grad = objective_gradient(norm, x)
        lin = linearize_constraints(norm, x)
        final = _solve_subproblem(norm, x, H, grad, lin)
        if final is not None:
            kkt = kkt_residual(norm, x, final, grad, lin)

    alloc_n = Allocation.from_vector(x, Q)
    refit = allocation_for_powers(norm, alloc_n.power_vector())
    if model.check_feasibility(norm, refit, feas_tol).feasible and \
            model.objective(norm, refit) >= model.objective(norm, alloc_n):
        alloc_n = refit
    alloc = scaling.to_physical(alloc_n)
    report = model.check_feasibility(instance, alloc, feas_tol)
    return SolveReport(
        status=status,
        allocation=alloc,
        objective=model.objective(instance, alloc),
        iterations=len(trace),
        kkt_residual=kkt,
        max_violation=report.max_violation,
        feasible=report.feasible,
        runtime_s=time.perf_counter() - start,
        trace=trace,
    )
