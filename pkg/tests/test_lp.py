import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rsma_crc.lp import (
    BREAKDOWN,
    INFEASIBLE,
    OPTIMAL,
    UNBOUNDED,
    DimensionError,
    LinearProgram,
    QuadraticProgram,
    lp_feasible,
    lp_solve,
    qp_solve,
    relative_violation,
)


def test_trivial_max():
    res = lp_solve(LinearProgram([1.0], [[1.0]], [1.0], maximize=True))
    assert res.status == OPTIMAL
    assert res.x[0] == pytest.approx(1.0)


def test_trivial_infeasible():
    assert lp_solve(LinearProgram([1.0], [[1.0]], [-1.0])).status == INFEASIBLE


def test_unbounded():
    assert lp_solve(LinearProgram([1.0, 0.0], [[-1.0, 1.0]], [1.0], maximize=True)).status == UNBOUNDED


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        LinearProgram([1.0, 2.0], [[1.0]], [1.0])
    with pytest.raises(DimensionError):
        LinearProgram([1.0], [[1.0]], [1.0, 2.0])


def test_equalities_and_bounds():
    lp = LinearProgram([1.0, 2.0, 0.0], A_eq=[[1.0, 1.0, 1.0]], b_eq=[3.0],
                       lower=[-1.0, 0.0, 0.0], upper=[np.inf, 1.0, 2.0])
    res = lp_solve(lp)
    assert res.status == OPTIMAL
    assert res.value == pytest.approx(1.0)  # x3 <= 2 forces x1 >= 1
    assert lp.primal_residual(res.x) <= 1e-9


def _vertex_oracle(c, A, b):
    """Enumerate basic points of ``A x <= b, x >= 0``; best value for ``max c x``."""
    n = len(c)
    G = np.vstack([A, -np.eye(n)])
    h = np.concatenate([b, np.zeros(n)])
    best = -np.inf
    for rows in itertools.combinations(range(G.shape[0]), n):
        M = G[list(rows)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, h[list(rows)])
        if np.all(G @ x <= h + 1e-9):
            best = max(best, float(c @ x))
    return best


def test_random_lps_match_vertex_enumeration():
    rng = np.random.default_rng(11)
    for _ in range(30):
        n, m = 5, 6
        A = rng.uniform(0.1, 1.0, (m, n))
        b = rng.uniform(1.0, 2.0, m)
        c = rng.normal(size=n)
        res = lp_solve(LinearProgram(c, A, b, maximize=True))
        assert res.status == OPTIMAL
        assert res.value == pytest.approx(_vertex_oracle(c, A, b), abs=1e-8)
        assert LinearProgram(c, A, b).primal_residual(res.x) <= 1e-9


def test_weak_duality_spot_check():
    rng = np.random.default_rng(3)
    for _ in range(100):
        A = rng.uniform(0.0, 1.0, (4, 3))
        b = rng.uniform(0.5, 1.5, 4)
        c = rng.normal(size=3)
        res = lp_solve(LinearProgram(c, A, b, maximize=True))
        samples = rng.uniform(0, 2, (200, 3))
        feas = samples[np.all(samples @ A.T <= b, axis=1)]
        if feas.size:
            assert res.value >= np.max(feas @ c) - 1e-12


def test_deterministic():
    rng = np.random.default_rng(5)
    A, b, c = rng.uniform(size=(5, 4)), rng.uniform(1, 2, 5), rng.normal(size=4)
    r1 = lp_solve(LinearProgram(c, A, b, maximize=True))
    r2 = lp_solve(LinearProgram(c, A, b, maximize=True))
    assert np.array_equal(r1.x, r2.x) and r1.value == r2.value


def test_status_is_single_label():
    res = lp_solve(LinearProgram([1.0], [[1.0]], [1.0], maximize=True))
    assert res.status in {OPTIMAL, INFEASIBLE, UNBOUNDED, BREAKDOWN}
    assert res.success


def test_feasible_empty_constraints():
    res = lp_feasible(num_vars=3)
    assert res.feasible
    np.testing.assert_array_equal(res.witness, np.zeros(3))


def test_feasible_contradiction():
    assert not lp_feasible(A_ub=[[1.0]], b_ub=[0.0], lower=[1.0])


@given(st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_feasible_witness_contract(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(4, 3))
    b = rng.normal(size=4)
    res = lp_feasible(A, b, upper=np.full(3, 10.0))
    if res.feasible:
        x = res.witness
        assert np.all(A @ x <= b + 1e-9 * (1 + np.abs(b)))
        assert np.all(x >= -1e-9) and np.all(x <= 10 + 1e-9)


def test_relative_violation():
    A = np.array([[1.0, 1.0]])
    assert relative_violation(A, np.array([1.0]), np.array([0.5, 0.5])) == 0.0
    assert relative_violation(A, np.array([1.0]), np.array([1.0, 1.0])) == pytest.approx(1 / 3)


def test_lp_format_dump():
    text = LinearProgram([1.0, -2.0], [[1.0, 1.0]], [4.0], maximize=True).to_lp_format()
    assert text.startswith("Maximize") and "Subject To" in text and text.rstrip().endswith("End")


def test_qp_unconstrained():
    res = qp_solve(QuadraticProgram(np.eye(2), [-1.0, -1.0]))
    np.testing.assert_allclose(res.x, [1.0, 1.0])


def test_qp_projection():
    res = qp_solve(QuadraticProgram(np.eye(2), [0.0, 0.0], A_ub=[[-1.0, 0.0]], b_ub=[-2.0]))
    assert res.status == OPTIMAL
    np.testing.assert_allclose(res.x, [2.0, 0.0], atol=1e-12)
    assert res.kkt_residual <= 1e-8


def test_qp_infeasible():
    res = qp_solve(QuadraticProgram(np.eye(1), [0.0], A_ub=[[1.0], [-1.0]], b_ub=[0.0, -1.0]))
    assert res.status == INFEASIBLE


def test_qp_asymmetric_rejected():
    with pytest.raises(ValueError):
        QuadraticProgram(np.array([[1.0, 1.0], [0.0, 1.0]]), [0.0, 0.0])


def test_random_qps_one_active_constraint():
    rng = np.random.default_rng(8)
    for _ in range(30):
        L = rng.normal(size=(3, 3))
        H = L @ L.T + 3 * np.eye(3)
        g = rng.normal(size=3)
        a = rng.normal(size=3)
        x_free = np.linalg.solve(H, -g)
        b = float(a @ x_free) - 1.0  # cut off the free minimiser
        # hand KKT: [H a; a' 0] [x; mu] = [-g; b]
        K = np.block([[H, a[:, None]], [a[None, :], np.zeros((1, 1))]])
        sol = np.linalg.solve(K, np.concatenate([-g, [b]]))
        res = qp_solve(QuadraticProgram(H, g, A_ub=[a], b_ub=[b]))
        assert res.status == OPTIMAL
        np.testing.assert_allclose(res.x, sol[:3], atol=1e-9)
        assert res.multipliers_ub[0] == pytest.approx(sol[3], abs=1e-8)
        assert res.kkt_residual <= 1e-8
