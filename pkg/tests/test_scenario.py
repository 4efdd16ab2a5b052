import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rsma_crc.scenario import (
    DEFAULT_DOCUMENT,
    DegenerateGeometryError,
    MissingKeyError,
    NonPositiveQuantityError,
    UnknownFadingModeError,
    UnknownKeyError,
    compute_channels,
    dbm_to_watts,
    load_scenario,
    place_entities,
    small_scale_factors,
)


def test_reference_defaults():
    sc = load_scenario({})
    assert sc.wavelength_m == 0.1
    assert sc.radar_power_budget_w == 1000.0
    assert sc.radar_sinr_threshold_linear == pytest.approx(10.0)
    assert sc.bandwidth_hz == 1e6
    assert sc.min_rate_bps == 1e5
    assert sc.noise_power_w == pytest.approx(1e-12)


def test_dbm_conversion():
    assert dbm_to_watts(30.0) == pytest.approx(1.0)
    assert load_scenario({"bs_power_budget_dbm": 30.0}).bs_power_budget_w == pytest.approx(1.0)


def test_zero_bandwidth_rejected():
    with pytest.raises(NonPositiveQuantityError, match="non-positive"):
        load_scenario({"bandwidth_hz": 0})


def test_distinct_errors():
    with pytest.raises(UnknownFadingModeError):
        load_scenario({"fading_mode": "nakagami"})
    with pytest.raises(UnknownKeyError):
        load_scenario({"bandwith_hz": 1.0})
    with pytest.raises(MissingKeyError):
        load_scenario({"wavelength_m": 0.1}, strict=True)


def test_load_from_file(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps({**DEFAULT_DOCUMENT, "num_cus": 3}))
    assert load_scenario(path).num_cus == 3


@pytest.mark.parametrize("seed", [0, 1, 99])
def test_placement(seed):
    sc = load_scenario({})
    g = place_entities(sc, num_cus=5, seed=seed)
    np.testing.assert_array_equal(g.bs, [0, 0, 0])
    np.testing.assert_array_equal(g.target, [0, 0, 10000])
    np.testing.assert_array_equal(g.radars, [[-1000, 0, 0], [1000, 0, 0]])
    assert np.all(np.abs(g.cus[:, :2]) <= 200) and np.all(g.cus[:, 2] == 0)
    np.testing.assert_array_equal(g.cus, place_entities(sc, num_cus=5, seed=seed).cus)


def test_geometry_csv(tmp_path):
    g = place_entities(load_scenario({}), num_cus=2, seed=0)
    g.to_csv(tmp_path / "g.csv")
    lines = (tmp_path / "g.csv").read_text().splitlines()
    assert lines[0] == "entity,x_m,y_m,z_m"
    assert len(lines) == 1 + 1 + 2 + 2 + 1


def _with_cus(positions, **extra):
    return load_scenario({"cu_positions_m": positions, "num_cus": len(positions), **extra})


def test_cu_gain_hand_value():
    sc = _with_cus([[100.0, 0.0, 0.0]])
    ch = compute_channels(sc, place_entities(sc))
    expected = 10 ** 1.7 * 0.01 / ((4 * math.pi) ** 2 * 100.0 ** 2)
    assert ch.h_c[0] == pytest.approx(expected, rel=1e-12)
    assert ch.h_c[0] == pytest.approx(3.174e-7, rel=1e-3)


def test_radar_round_trip_hand_value():
    sc = _with_cus([[100.0, 0.0, 0.0]])
    ch = compute_channels(sc, place_entities(sc))
    d = math.hypot(1000.0, 10000.0)
    expected = 1e3 * 1e3 * 1.0 * 0.01 / ((4 * math.pi) ** 3 * d ** 4)
    np.testing.assert_allclose(ch.h_r, expected, rtol=1e-12)
    assert ch.h_r[0] == pytest.approx(4.94e-16, rel=1e-2)


def test_mirror_symmetry():
    sc = _with_cus([[30.0, -70.0, 0.0], [-30.0, 70.0, 0.0]])
    ch = compute_channels(sc, place_entities(sc))
    assert ch.h_c[0] == pytest.approx(ch.h_c[1], rel=1e-14)


def test_degenerate_geometry():
    sc = _with_cus([[0.0, 0.0, 0.0]])
    with pytest.raises(DegenerateGeometryError, match="degenerate geometry"):
        compute_channels(sc, place_entities(sc))


@given(st.floats(1.0, 150.0), st.floats(1.01, 2.0))
@settings(max_examples=30, deadline=None)
def test_path_loss_monotone(d, factor):
    sc = _with_cus([[d, 0.0, 0.0], [d * factor, 0.0, 0.0]])
    ch = compute_channels(sc, place_entities(sc))
    assert ch.h_c[1] < ch.h_c[0]


@pytest.mark.parametrize("c", [0.0, 1.0, 2.5])
def test_normalization_identities(c):
    sc = load_scenario({"rtr_coupling_c": c, "fading_mode": "rayleigh", "fading_seed": 3})
    ch = compute_channels(sc, place_entities(sc))
    K = ch.num_radars
    for k in range(K):
        assert ch.h_tilde[k] == pytest.approx(ch.h_cr[k] / ch.h_r[k], rel=1e-12)
        assert ch.sigma_tilde[k] == pytest.approx(ch.noise_radar_w[k] / ch.h_r[k], rel=1e-12)
        for kp in range(K):
            if kp != k:
                direct = ch.g_rr[kp, k] / ch.h_r[k] + c * ch.g_rtr[kp, k] / ch.h_r[k]
                assert ch.g_tilde[kp, k] == pytest.approx(direct, rel=1e-12)


def test_rayleigh_unit_mean():
    draws = small_scale_factors(np.random.default_rng(0), 200_000)
    assert abs(draws.mean() - 1.0) < 0.02
    assert np.all(draws >= 0)


def test_rayleigh_deterministic_per_seed():
    sc = load_scenario({"fading_mode": "rayleigh", "fading_seed": 5})
    g = place_entities(sc)
    np.testing.assert_array_equal(compute_channels(sc, g).h_c, compute_channels(sc, g).h_c)
