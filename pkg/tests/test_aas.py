import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rsma_crc import model
from rsma_crc.aas import (
    Cube,
    EmptyFeasibleSetError,
    RateBounds,
    _CubeLP,
    aas_solve,
    compute_bounds,
    count_cubes,
    epsilon_from_delta,
    num_intervals,
    partition_cubes,
    ratio_upper_bound,
    solve_cube,
)
from rsma_crc.harness.instances import random_instance
from rsma_crc.harness.oracle import brute_force_oracle, grid_ratio_max
from rsma_crc.model import TrmpInstance
from rsma_crc.sqp import sqp_solve


def _bounds(ubs):
    ubs = np.asarray(ubs, dtype=float)
    return RateBounds(ubs, ubs, float(np.log2(ubs.max())))


def test_interference_free_bound():
    inst = TrmpInstance.build([1.0])
    assert ratio_upper_bound(inst, 0) == pytest.approx(2.0)


def test_empty_polytope_raises():
    # radar echo can never beat the noise at this threshold
    inst = TrmpInstance.build([1.0], h_r=[1.0], h_cr=[0.1], gamma_r=10.0)
    with pytest.raises(EmptyFeasibleSetError, match="empty feasible set"):
        ratio_upper_bound(inst, 0)


def test_ratio_bound_matches_grid():
    inst = TrmpInstance.build([2.0, 3.0], g_rc=[[0.5, 0.2]], h_r=[20.0], h_cr=[0.5], gamma_r=2.0)
    for q in range(2):
        for message in ("private", "common"):
            lp = ratio_upper_bound(inst, q, message)
            grid = grid_ratio_max(inst, q, message)
            assert lp == pytest.approx(grid, rel=1e-4)


def test_charnes_cooper_round_trip(rng):
    inst = random_instance(rng, num_cus=3, num_radars=2)
    for q in range(3):
        rb = ratio_upper_bound(inst, q, detail=True)
        h = inst.channels.h_c[q]
        np.testing.assert_allclose(rb.y, rb.point * rb.t, rtol=1e-9, atol=1e-15)
        assert h * rb.y[1 + q] == pytest.approx(h * rb.point[1 + q] * rb.t, rel=1e-9)
        assert rb.ub - 1 == pytest.approx(h * rb.y[1 + q], rel=1e-9)
        A, b, upper = model.feasible_set(inst)
        assert np.all(A @ rb.point <= b + 1e-9 * (np.abs(A) @ np.abs(rb.point) + np.abs(b)))
        ratio = model.private_sinr_ratio(inst, rb.point[1:4], rb.point[4:])[q]
        assert ratio == pytest.approx(rb.ub, rel=1e-9)


def test_partition_examples():
    cubes = list(partition_cubes(_bounds([1.0, 1.0]), 0.5))
    assert [c.indices for c in cubes] == [(1, 1)]
    assert count_cubes(_bounds([4.0, 4.0]), 1.0) == 9
    assert len(list(partition_cubes(_bounds([4.0, 4.0]), 1.0))) == 9


@given(st.lists(st.floats(1.0, 50.0), min_size=1, max_size=3), st.floats(0.05, 1.5))
@settings(max_examples=60, deadline=None)
def test_partition_tiles_interval(ubs, eps):
    bounds = _bounds(ubs)
    cubes = list(partition_cubes(bounds, eps))
    assert len(cubes) == math.prod(num_intervals(u, eps) + 1 for u in ubs) == count_cubes(bounds, eps)
    for q, ub in enumerate(ubs):
        edges = sorted({(c.lo[q], c.hi[q]) for c in cubes})
        assert edges[0][0] == 1.0 and edges[-1][1] == pytest.approx(ub, rel=1e-12)
        for (_, hi), (lo, _) in zip(edges, edges[1:]):
            assert lo == pytest.approx(hi, rel=1e-12)
        assert all(lo <= hi for lo, hi in edges)


def test_empty_cube_returns_none():
    inst = TrmpInstance.build([1.0])
    bounds = compute_bounds(inst)
    reachable = Cube((7,), np.array([1.9]), np.array([2.0]))
    assert solve_cube(inst, reachable, 0.1, bounds) is not None
    impossible = Cube((9,), np.array([2.5]), np.array([3.0]))  # above the bound of 2
    assert solve_cube(inst, impossible, 0.1, bounds) is None


def test_cube_matches_restricted_grid():
    inst = TrmpInstance.build([3.0], g_rc=[[0.4]], h_r=[30.0], h_cr=[0.5], gamma_r=2.0)
    eps = 0.25
    bounds = compute_bounds(inst)
    n = 120
    g = np.linspace(0, 1, n + 1)
    pv = np.array([(x, y, r) for x, y, r in itertools.product(g, g, g) if x + y <= 1])
    A, b, _ = model.feasible_set(inst)
    ok = np.all(pv @ A.T <= b + 1e-12, axis=1)
    ratio = model.private_sinr_ratio(inst, pv[:, 1:2], pv[:, 2:])[:, 0]
    r0 = model.common_rates(inst, pv[:, 0], pv[:, 1:2], pv[:, 2:])[:, 0]
    value = r0 + np.log2(ratio)
    for cube in partition_cubes(bounds, eps):
        sol = solve_cube(inst, cube, eps, bounds)
        inside = ok & (ratio >= cube.lo[0]) & (ratio <= cube.hi[0])
        if sol is None:
            assert not inside.any()
            continue
        if inside.any():
            assert sol.objective >= value[inside].max() - math.log2(1 + eps) - 2e-2
        # common-rate identity: sum a equals the decodable common rate
        alloc = sol.allocation
        r0_hat = model.common_rates(inst, alloc.p0, alloc.p, alloc.pr).min()
        assert alloc.a.sum() == pytest.approx(r0_hat, abs=1e-8)


def test_bisection_monotone(rng):
    inst = random_instance(rng, num_cus=2)
    bounds = compute_bounds(inst)
    for cube in list(partition_cubes(bounds, 0.3))[:10]:
        system = _CubeLP(inst, cube)
        levels = np.linspace(0, bounds.t_bar, 9)
        feas = [system.check(t) is not None for t in levels]
        # once infeasible, stays infeasible
        assert feas == sorted(feas, reverse=True)


def test_aas_input_validation(small_instances):
    inst = small_instances[0]
    with pytest.raises(ValueError):
        aas_solve(inst, 1.5)
    with pytest.raises(ValueError):
        aas_solve(inst, 0.1, epsilon=0.1)
    with pytest.raises(ValueError):
        aas_solve(inst)


def test_aas_infeasible_problem():
    inst = TrmpInstance.build([1.0], h_r=[1.0], h_cr=[0.1], gamma_r=10.0)
    res = aas_solve(inst, 0.1)
    assert res.status == "infeasible problem" and res.allocation is None


def test_aas_beats_oracle(small_instances):
    for inst in small_instances[:2]:
        res = aas_solve(inst, 0.1)
        _, best = brute_force_oracle(inst, 30, return_value=True)
        assert res.objective >= best - 0.1 * 2
        assert model.check_feasibility(inst, res.allocation, 1e-6).feasible
        assert res.certified_objective >= best - 1e-9


def test_aas_not_worse_than_sqp(small_instances):
    for inst in small_instances:
        assert aas_solve(inst, 0.1).objective >= sqp_solve(inst).objective - 1e-6


def test_refinement_dominance(small_instances):
    inst = small_instances[2]
    coarse = aas_solve(inst, 0.3)
    fine = aas_solve(inst, 0.1)
    assert fine.objective >= coarse.objective - 1e-9


def test_epsilon_delta_relation():
    assert epsilon_from_delta(1.0) == 1.0
    assert aas_solve(TrmpInstance.build([1.0, 2.0]), epsilon=1.0).delta == pytest.approx(1.0)


def test_certificate_units():
    inst = TrmpInstance.build([1.0, 2.0], bandwidth=1e6, noise_cu=1e-3)
    res = aas_solve(inst, 0.2)
    assert res.error_bound == pytest.approx(0.2 * 2 * 1e6)
    assert res.cubes_examined <= res.cubes_total


def test_diagnostics_csv(tmp_path, small_instances):
    res = aas_solve(small_instances[0], 0.2, diagnostics=True)
    res.write_diagnostics(tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "cube_index,feasible,T_star,objective"
    assert len(lines) == 1 + res.cubes_examined
