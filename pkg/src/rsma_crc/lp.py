"""Small dense LP and strictly convex QP solvers.

LPs are solved with a two-phase revised simplex method; pricing is
Dantzig's rule until a run of degenerate pivots, after which Bland's rule
takes over for the rest of the phase, which rules out cycling. QPs use a
primal active-set method started from a phase-one point.

Problem sizes here are tiny (a few dozen rows), so the basis inverse is
kept explicitly and refreshed from scratch every few pivots.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-9
MAX_ITER = 100_000
_REFACTOR_EVERY = 40
_DEGENERATE_SWITCH = 10

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
BREAKDOWN = "numerical_breakdown"


class DimensionError(ValueError):
    pass


def _as_matrix(A, n):
    if A is None:
        return np.zeros((0, n))
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A.reshape(1, -1) if A.size else np.zeros((0, n))
    return A


@dataclass
class LinearProgram:
    """``min/max c @ x`` s.t. ``A_ub x <= b_ub``, ``A_eq x = b_eq``, ``lower <= x <= upper``.

    Bounds default to ``x >= 0``.
    """

    c: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    maximize: bool = False

    def __post_init__(self):
        self.c = np.atleast_1d(np.asarray(self.c, dtype=float))
        n = self.c.size
        self.A_ub = _as_matrix(self.A_ub, n)
        self.A_eq = _as_matrix(self.A_eq, n)
        self.b_ub = np.zeros(0) if self.b_ub is None else np.atleast_1d(np.asarray(self.b_ub, dtype=float))
        self.b_eq = np.zeros(0) if self.b_eq is None else np.atleast_1d(np.asarray(self.b_eq, dtype=float))
        self.lower = np.zeros(n) if self.lower is None else np.broadcast_to(
            np.asarray(self.lower, dtype=float), (n,)).copy()
        self.upper = np.full(n, np.inf) if self.upper is None else np.broadcast_to(
            np.asarray(self.upper, dtype=float), (n,)).copy()
        if self.A_ub.shape[1] != n or self.A_eq.shape[1] != n:
            raise DimensionError("constraint matrices must have one column per variable")
        if self.A_ub.shape[0] != self.b_ub.size or self.A_eq.shape[0] != self.b_eq.size:
            raise DimensionError("right-hand sides must have one entry per constraint row")
        for name in ("c", "A_ub", "b_ub", "A_eq", "b_eq"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} has non-finite entries")
        if np.any(np.isnan(self.lower)) or np.any(np.isnan(self.upper)) or np.any(self.lower == np.inf) \
                or np.any(self.upper == -np.inf):
            raise ValueError("invalid variable bounds")

    @property
    def num_vars(self) -> int:
        return self.c.size

    def primal_residual(self, x: np.ndarray) -> float:
        r = [0.0]
        if self.A_ub.shape[0]:
            r.append(np.max(self.A_ub @ x - self.b_ub))
        if self.A_eq.shape[0]:
            r.append(np.max(np.abs(self.A_eq @ x - self.b_eq)))
        r.append(np.max(self.lower - x, initial=0.0))
        r.append(np.max(x - self.upper, initial=0.0))
        return float(max(r))

    def to_lp_format(self) -> str:
        """Render in CPLEX LP text format for cross-checking with external solvers."""

        def expr(row):
            terms = [f"{'+' if v >= 0 else '-'} {abs(v)!r} x{j}" for j, v in enumerate(row) if v != 0]
            return " ".join(terms) if terms else "0 x0"

        lines = ["Maximize" if self.maximize else "Minimize", f" obj: {expr(self.c)}", "Subject To"]
        for i, (row, b) in enumerate(zip(self.A_ub, self.b_ub)):
            lines.append(f" u{i}: {expr(row)} <= {b!r}")
        for i, (row, b) in enumerate(zip(self.A_eq, self.b_eq)):
            lines.append(f" e{i}: {expr(row)} = {b!r}")
        lines.append("Bounds")
        for j, (lo, up) in enumerate(zip(self.lower, self.upper)):
            lo_s = "-inf" if lo == -np.inf else repr(lo)
            up_s = "+inf" if up == np.inf else repr(up)
            lines.append(f" {lo_s} <= x{j} <= {up_s}")
        lines.append("End")
        return "\n".join(lines) + "\n"


@dataclass
class LPResult:
    status: str
    x: np.ndarray | None = None
    value: float | None = None
    iterations: int = 0

    @property
    def success(self) -> bool:
        return self.status == OPTIMAL


@dataclass
class _StandardForm:
    A: np.ndarray  # rows already scaled, rhs >= 0
    b: np.ndarray
    c: np.ndarray
    n_struct: int  # transformed structural columns
    n_total: int  # structural + slack columns
    basis0: list  # initial basis; -1 marks rows that need an artificial
    offset: np.ndarray  # x = offset + T @ x'
    T: np.ndarray
    obj_const: float


def _standardize(lp: LinearProgram) -> _StandardForm:
    n = lp.num_vars
    lo, up = lp.lower, lp.upper
    cols = []  # (orig index, sign)
    offset = np.zeros(n)
    extra_ub_rows = []
    for j in range(n):
        if np.isfinite(lo[j]):
            offset[j] = lo[j]
            cols.append((j, 1.0))
            if np.isfinite(up[j]):
                extra_ub_rows.append((len(cols) - 1, up[j] - lo[j]))
        elif np.isfinite(up[j]):
            offset[j] = up[j]
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    m_struct = len(cols)
    T = np.zeros((n, m_struct))
    for k, (j, s) in enumerate(cols):
        T[j, k] = s

    A_ub = lp.A_ub @ T
    b_ub = lp.b_ub - lp.A_ub @ offset
    if extra_ub_rows:
        E = np.zeros((len(extra_ub_rows), m_struct))
        for r, (k, width) in enumerate(extra_ub_rows):
            E[r, k] = 1.0
        A_ub = np.vstack([A_ub, E])
        b_ub = np.concatenate([b_ub, [w for _, w in extra_ub_rows]])
    A_eq = lp.A_eq @ T
    b_eq = lp.b_eq - lp.A_eq @ offset

    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    A = np.zeros((m_ub + m_eq, m_struct + m_ub))
    A[:m_ub, :m_struct] = A_ub
    A[:m_ub, m_struct:] = np.eye(m_ub)
    A[m_ub:, :m_struct] = A_eq
    b = np.concatenate([b_ub, b_eq])

    scale = np.max(np.abs(A[:, :m_struct]), axis=1, initial=0.0)
    scale = np.where(scale > 0, scale, 1.0)
    A /= scale[:, None]
    b = b / scale

    basis0 = []
    for i in range(A.shape[0]):
        if b[i] < 0:
            A[i] *= -1.0
            b[i] *= -1.0
            basis0.append(-1)
        elif i < m_ub:
            basis0.append(m_struct + i)
        else:
            basis0.append(-1)

    c_std = np.concatenate([T.T @ (-lp.c if lp.maximize else lp.c), np.zeros(m_ub)])
    obj_const = float(lp.c @ offset)
    return _StandardForm(A, b, c_std, m_struct, m_struct + m_ub, basis0, offset, T, obj_const)


class _Simplex:
    """Revised simplex on ``min c x, A x = b, x >= 0`` with a given basis."""

    def __init__(self, A, b, basis, max_iter=MAX_ITER):
        self.A = A
        self.b = b
        self.m, self.n = A.shape
        self.basis = list(basis)
        self.max_iter = max_iter
        self.iterations = 0
        self._refactor()

    def _refactor(self):
        Bm = self.A[:, self.basis]
        self.Binv = np.linalg.inv(Bm)
        self.xB = self.Binv @ self.b
        self._since_refactor = 0

    def run(self, c, allowed) -> str:
        """Optimise ``c`` over columns flagged in ``allowed``; returns a status."""
        bland = False
        degenerate_run = 0
        while True:
            if self.iterations >= self.max_iter:
                return BREAKDOWN
            y = c[self.basis] @ self.Binv
            d = c - y @ self.A
            d[self.basis] = 0.0
            cand = np.flatnonzero(allowed & (d < -FEAS_TOL * max(1.0, np.max(np.abs(c)))))
            if cand.size == 0:
                return OPTIMAL
            j = int(cand[0]) if bland else int(cand[np.argmin(d[cand])])
            w = self.Binv @ self.A[:, j]
            pos = w > PIVOT_TOL
            if not np.any(pos):
                return UNBOUNDED
            ratios = np.full(self.m, np.inf)
            ratios[pos] = np.maximum(self.xB[pos], 0.0) / w[pos]
            best = np.min(ratios)
            ties = np.flatnonzero(ratios <= best + 1e-12 * max(1.0, best))
            if bland:
                r = int(min(ties, key=lambda i: self.basis[i]))
            else:
                r = int(ties[np.argmax(w[ties])])
            if best <= FEAS_TOL:
                degenerate_run += 1
                if degenerate_run >= _DEGENERATE_SWITCH:
                    bland = True
            else:
                degenerate_run = 0
            self._pivot(r, j, w)
            self.iterations += 1

    def _pivot(self, r, j, w):
        self.basis[r] = j
        self._since_refactor += 1
        if self._since_refactor >= _REFACTOR_EVERY:
            self._refactor()
            return
        piv = w[r]
        E_row = self.Binv[r] / piv
        self.Binv -= np.outer(w, E_row)
        self.Binv[r] = E_row
        theta = self.xB[r] / piv
        self.xB -= theta * w
        self.xB[r] = theta


def _phase_one(std: _StandardForm, max_iter: int):
    """Returns (simplex, status); status INFEASIBLE when the system is empty."""
    m = std.A.shape[0]
    need = [i for i, bi in enumerate(std.basis0) if bi < 0]
    n_art = len(need)
    A = np.hstack([std.A, np.zeros((m, n_art))])
    basis = list(std.basis0)
    for k, i in enumerate(need):
        A[i, std.n_total + k] = 1.0
        basis[i] = std.n_total + k
    sx = _Simplex(A, std.b, basis, max_iter)
    if n_art:
        c1 = np.zeros(A.shape[1])
        c1[std.n_total:] = 1.0
        status = sx.run(c1, np.ones(A.shape[1], dtype=bool))
        if status == BREAKDOWN:
            return sx, BREAKDOWN
        infeas = float(np.sum(np.maximum(sx.xB[[i for i, bv in enumerate(sx.basis) if bv >= std.n_total]], 0.0)))
        if infeas > FEAS_TOL * max(1.0, float(np.max(std.b, initial=0.0))):
            return sx, INFEASIBLE
        # Drive zero-level artificials out of the basis; drop redundant rows.
        keep_rows = []
        for r in range(m):
            if sx.basis[r] < std.n_total:
                keep_rows.append(r)
                continue
            row = sx.Binv[r] @ A[:, :std.n_total]
            row[[b for b in sx.basis if b < std.n_total]] = 0.0
            j = int(np.argmax(np.abs(row))) if row.size else 0
            if row.size and abs(row[j]) > 1e-8:
                sx._pivot(r, j, sx.Binv @ A[:, j])
                keep_rows.append(r)
        sx._refactor()
        if len(keep_rows) < m:
            A2 = std.A[keep_rows]
            sx = _Simplex(A2, std.b[keep_rows], [sx.basis[r] for r in keep_rows], max_iter - sx.iterations)
            return sx, OPTIMAL
        sx.A = std.A
        sx.n = std.n_total
    return sx, OPTIMAL


def _recover(std: _StandardForm, sx: _Simplex) -> np.ndarray:
    z = np.zeros(std.n_total)
    z[sx.basis] = np.maximum(sx.xB, 0.0)
    return std.offset + std.T @ z[:std.n_struct]


def lp_solve(lp: LinearProgram, max_iter: int = MAX_ITER) -> LPResult:
    """Solve ``lp``; status is one of optimal/infeasible/unbounded/numerical_breakdown."""
    std = _standardize(lp)
    if std.A.shape[0] == 0:
        # Only sign constraints: optimum at the origin of the transformed space unless unbounded.
        if np.any(std.c < -FEAS_TOL):
            return LPResult(UNBOUNDED)
        x = std.offset.copy()
        return LPResult(OPTIMAL, x, float(lp.c @ x), 0)
    try:
        sx, status = _phase_one(std, max_iter)
        if status != OPTIMAL:
            return LPResult(status, iterations=sx.iterations)
        allowed = np.ones(sx.A.shape[1], dtype=bool)
        status = sx.run(std.c, allowed)
        if status == OPTIMAL:
            sx._refactor()
    except np.linalg.LinAlgError:
        return LPResult(BREAKDOWN)
    if status != OPTIMAL:
        return LPResult(status, iterations=sx.iterations)
    x = _recover(std, sx)
    if lp.primal_residual(x) > 1e-6 * max(1.0, float(np.max(np.abs(lp.b_ub), initial=0.0))):
        return LPResult(BREAKDOWN, x, iterations=sx.iterations)
    return LPResult(OPTIMAL, x, float(lp.c @ x), sx.iterations)


@dataclass
class FeasibilityResult:
    feasible: bool
    witness: np.ndarray | None = None
    status: str = OPTIMAL

    def __bool__(self):
        return self.feasible


def lp_feasible(A_ub=None, b_ub=None, A_eq=None, b_eq=None, lower=None, upper=None,
                num_vars: int | None = None) -> FeasibilityResult:
    """Phase-one test of ``{x : A_ub x <= b_ub, A_eq x = b_eq, lower <= x <= upper}``.

    Bounds default to ``x >= 0``. On success a witness point is returned.
    """
    if num_vars is None:
        shapes = [np.atleast_2d(M).shape[1] for M in (A_ub, A_eq) if M is not None and np.size(M)]
        num_vars = shapes[0] if shapes else (np.size(lower) if lower is not None else 0)
    lp = LinearProgram(np.zeros(num_vars), A_ub, b_ub, A_eq, b_eq, lower, upper)
    std = _standardize(lp)
    if std.A.shape[0] == 0:
        return FeasibilityResult(True, std.offset.copy())
    try:
        sx, status = _phase_one(std, MAX_ITER)
    except np.linalg.LinAlgError:
        return FeasibilityResult(False, None, BREAKDOWN)
    if status != OPTIMAL:
        return FeasibilityResult(False, None, status)
    x = _recover(std, sx)
    return FeasibilityResult(True, x)


@dataclass
class QuadraticProgram:
    """``min 0.5 x'Hx + g'x`` under the same constraint structure as :class:`LinearProgram`.

    Bounds default to free variables.
    """

    H: np.ndarray
    g: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        self.g = np.atleast_1d(np.asarray(self.g, dtype=float))
        n = self.g.size
        if self.H.shape != (n, n):
            raise DimensionError("H must be n x n")
        if not np.allclose(self.H, self.H.T, atol=1e-10 * max(1.0, np.max(np.abs(self.H)))):
            raise ValueError("H must be symmetric")
        self.lower = np.full(n, -np.inf) if self.lower is None else np.broadcast_to(
            np.asarray(self.lower, dtype=float), (n,)).copy()
        self.upper = np.full(n, np.inf) if self.upper is None else np.broadcast_to(
            np.asarray(self.upper, dtype=float), (n,)).copy()
        self.A_ub = _as_matrix(self.A_ub, n)
        self.A_eq = _as_matrix(self.A_eq, n)
        self.b_ub = np.zeros(0) if self.b_ub is None else np.atleast_1d(np.asarray(self.b_ub, dtype=float))
        self.b_eq = np.zeros(0) if self.b_eq is None else np.atleast_1d(np.asarray(self.b_eq, dtype=float))
        if self.A_ub.shape[0] != self.b_ub.size or self.A_eq.shape[0] != self.b_eq.size:
            raise DimensionError("right-hand sides must have one entry per constraint row")

    def inequality_rows(self):
        """All inequalities (rows, bounds) as ``G x <= h``; also returns their origin tags."""
        n = self.g.size
        rows, rhs, tags = [self.A_ub], [self.b_ub], [("ub", i) for i in range(self.b_ub.size)]
        for j in range(n):
            if np.isfinite(self.upper[j]):
                e = np.zeros((1, n))
                e[0, j] = 1.0
                rows.append(e)
                rhs.append([self.upper[j]])
                tags.append(("upper", j))
            if np.isfinite(self.lower[j]):
                e = np.zeros((1, n))
                e[0, j] = -1.0
                rows.append(e)
                rhs.append([-self.lower[j]])
                tags.append(("lower", j))
        return np.vstack(rows), np.concatenate([np.asarray(r, dtype=float) for r in rhs]), tags


@dataclass
class QPResult:
    status: str
    x: np.ndarray | None = None
    value: float | None = None
    multipliers_ub: np.ndarray | None = None
    multipliers_eq: np.ndarray | None = None
    multipliers_lower: np.ndarray | None = None
    multipliers_upper: np.ndarray | None = None
    iterations: int = 0
    kkt_residual: float = field(default=np.nan)

    @property
    def success(self) -> bool:
        return self.status == OPTIMAL


def qp_solve(qp: QuadraticProgram, max_iter: int = 10_000) -> QPResult:
    """Primal active-set method for a strictly convex QP."""
    n = qp.g.size
    G, h, tags = qp.inequality_rows()
    E, e = qp.A_eq, qp.b_eq
    m_eq = E.shape[0]

    if G.shape[0] + m_eq == 0:
        x = np.linalg.solve(qp.H, -qp.g)
        return _qp_result(qp, x, np.zeros(0), np.zeros(0), tags, 0)

    start = lp_feasible(G, h, E if m_eq else None, e if m_eq else None,
                        lower=np.full(n, -np.inf), num_vars=n)
    if not start.feasible:
        return QPResult(INFEASIBLE if start.status == INFEASIBLE else BREAKDOWN)
    x = start.witness.copy()

    Gn = np.linalg.norm(G, axis=1)
    Gn = np.where(Gn > 0, Gn, 1.0)
    tol_active = 1e-9

    def independent(rows, cand):
        M = np.vstack(rows + [cand]) if rows else cand[None, :]
        return np.linalg.matrix_rank(M, tol=1e-9) == M.shape[0]

    W = []
    base_rows = [E[i] for i in range(m_eq)]
    for i in np.flatnonzero(np.abs(G @ x - h) <= tol_active * np.maximum(1.0, np.abs(h))):
        if independent(base_rows + [G[j] for j in W], G[i]):
            W.append(int(i))

    it = 0
    lam_W = np.zeros(0)
    nu = np.zeros(m_eq)
    while it < max_iter:
        it += 1
        Aw = np.vstack([E] + [G[W]]) if (m_eq or W) else np.zeros((0, n))
        k = Aw.shape[0]
        K = np.zeros((n + k, n + k))
        K[:n, :n] = qp.H
        K[:n, n:] = Aw.T
        K[n:, :n] = Aw
        rhs = np.concatenate([-(qp.H @ x + qp.g), np.zeros(k)])
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        d = sol[:n]
        mult = sol[n:]
        nu, lam_W = mult[:m_eq], mult[m_eq:]
        if np.linalg.norm(d, np.inf) <= 1e-12 * max(1.0, np.linalg.norm(x, np.inf)):
            if lam_W.size == 0 or np.min(lam_W) >= -1e-10:
                return _qp_result(qp, x, nu, _full_lambda(G.shape[0], W, lam_W), tags, it)
            W.pop(int(np.argmin(lam_W)))
            continue
        Gd = G @ d
        slack = h - G @ x
        alpha, block = 1.0, None
        for i in np.flatnonzero(Gd > 1e-14 * Gn):
            if i in W:
                continue
            step = max(slack[i], 0.0) / Gd[i]
            if step < alpha:
                alpha, block = step, int(i)
        x = x + alpha * d
        if block is not None:
            W.append(block)
    return QPResult(BREAKDOWN, x, iterations=it)


def _full_lambda(m, W, lam_W):
    lam = np.zeros(m)
    for idx, val in zip(W, lam_W):
        lam[idx] = max(val, 0.0)
    return lam


def _qp_result(qp, x, nu, lam_G, tags, it) -> QPResult:
    n = qp.g.size
    m_ub = qp.b_ub.size
    lam_ub = np.zeros(m_ub)
    lam_lo = np.zeros(n)
    lam_up = np.zeros(n)
    for val, (kind, idx) in zip(lam_G, tags):
        if kind == "ub":
            lam_ub[idx] = val
        elif kind == "upper":
            lam_up[idx] = val
        else:
            lam_lo[idx] = val
    grad = qp.H @ x + qp.g + qp.A_ub.T @ lam_ub + qp.A_eq.T @ nu + lam_up - lam_lo
    value = float(0.5 * x @ qp.H @ x + qp.g @ x)
    res = QPResult(OPTIMAL, x, value, lam_ub, nu, lam_lo, lam_up, it)
    res.kkt_residual = float(np.max(np.abs(grad), initial=0.0))
    return res


def relative_violation(A, b, x) -> float:
    """Largest violation of ``A x <= b`` relative to the size of each row's terms.

    Rows with a tiny right-hand side next to large coefficients (nearly
    homogeneous systems) are judged against ``|A| |x| + |b|`` rather than an
    absolute tolerance, so the origin does not pass as feasible.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] == 0:
        return 0.0
    x = np.asarray(x, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = np.abs(A) @ np.abs(x) + np.abs(b)
    viol = A @ x - b
    rel = np.where(scale > 0, viol / np.where(scale > 0, scale, 1.0), np.maximum(viol, 0.0))
    return float(max(0.0, rel.max()))
