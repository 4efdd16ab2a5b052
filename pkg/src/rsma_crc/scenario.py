"""Scenario description and channel-gain computation.

A scenario is loaded from a flat JSON document whose keys carry their units
(``_dbm``, ``_dbi``, ``_m``, ``_hz`` ...). Missing keys fall back to the
reference simulation parameters, unless the caller asks for a strict load.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

FADING_MODES = ("deterministic-unit", "rayleigh")

# Reference simulation parameters (physical units in the key names).
DEFAULT_DOCUMENT: dict[str, Any] = {
    "wavelength_m": 0.1,
    "bandwidth_hz": 1e6,
    "bs_power_budget_dbm": 30.0,
    "radar_power_budget_w": 1000.0,
    "radar_sinr_threshold_db": 10.0,
    "min_rate_bps": 1e5,
    "bs_tx_gain_dbi": 17.0,
    "cu_rx_gain_dbi": 0.0,
    "radar_mainlobe_tx_gain_dbi": 30.0,
    "radar_mainlobe_rx_gain_dbi": 30.0,
    "radar_sidelobe_tx_gain_dbi": -27.0,
    "radar_sidelobe_rx_gain_dbi": -27.0,
    "rcs_m2": 1.0,
    "cross_rcs_m2": 1.0,
    "noise_psd_dbm_per_hz": -150.0,
    "noise_total_w": None,
    "rtr_coupling_c": 1.0,
    "fading_mode": "deterministic-unit",
    "fading_seed": 0,
    "bs_position_m": [0.0, 0.0, 0.0],
    "radar_positions_m": [[-1000.0, 0.0, 0.0], [1000.0, 0.0, 0.0]],
    "target_position_m": [0.0, 0.0, 10000.0],
    "cu_positions_m": None,
    "num_cus": 4,
    "placement_seed": 0,
    "area_side_m": 400.0,
}

# Keys that may legitimately be null.
_NULLABLE = {"noise_total_w", "cu_positions_m"}


class ScenarioError(ValueError):
    """Base class for scenario validation problems."""


class MissingKeyError(ScenarioError):
    pass


class UnknownKeyError(ScenarioError):
    pass


class NonPositiveQuantityError(ScenarioError):
    pass


class UnknownFadingModeError(ScenarioError):
    pass


class DegenerateGeometryError(ScenarioError):
    pass


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


def dbm_to_watts(value_dbm: float) -> float:
    return 10.0 ** ((value_dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class Geometry:
    """Entity positions in metres, one row per entity."""

    bs: np.ndarray
    cus: np.ndarray
    radars: np.ndarray
    target: np.ndarray

    @property
    def num_cus(self) -> int:
        return self.cus.shape[0]

    @property
    def num_radars(self) -> int:
        return self.radars.shape[0]

    def rows(self) -> list[tuple[str, float, float, float]]:
        out = [("bs", *map(float, self.bs))]
        out += [(f"cu{i + 1}", *map(float, p)) for i, p in enumerate(self.cus)]
        out += [(f"radar{k + 1}", *map(float, p)) for k, p in enumerate(self.radars)]
        out.append(("target", *map(float, self.target)))
        return out

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["entity", "x_m", "y_m", "z_m"])
            for name, x, y, z in self.rows():
                writer.writerow([name, repr(x), repr(y), repr(z)])


@dataclass(frozen=True)
class Scenario:
    """Physical layout and radio parameters, all in linear units (W, Hz, m)."""

    wavelength_m: float
    bandwidth_hz: float
    bs_power_budget_w: float
    radar_power_budget_w: float
    radar_sinr_threshold_linear: float
    min_rate_bps: tuple[float, ...] | float
    bs_tx_gain_linear: float
    cu_rx_gain_linear: float
    radar_mainlobe_tx_gain_linear: float
    radar_mainlobe_rx_gain_linear: float
    radar_sidelobe_tx_gain_linear: float
    radar_sidelobe_rx_gain_linear: float
    rcs_m2: float
    cross_rcs_m2: float
    noise_psd_dbm_per_hz: float
    rtr_coupling_c: float
    bs_position_m: tuple[float, float, float]
    radar_positions_m: tuple[tuple[float, float, float], ...]
    target_position_m: tuple[float, float, float]
    noise_total_w: float | None = None
    fading_mode: str = "deterministic-unit"
    fading_seed: int = 0
    cu_positions_m: tuple[tuple[float, float, float], ...] | None = None
    num_cus: int = 4
    placement_seed: int = 0
    area_side_m: float = 400.0

    @property
    def num_radars(self) -> int:
        return len(self.radar_positions_m)

    @property
    def noise_power_w(self) -> float:
        """Noise power at every receiver: PSD x bandwidth unless overridden."""
        if self.noise_total_w is not None:
            return self.noise_total_w
        return dbm_to_watts(self.noise_psd_dbm_per_hz) * self.bandwidth_hz

    def min_rates(self, num_cus: int) -> np.ndarray:
        if np.isscalar(self.min_rate_bps):
            return np.full(num_cus, float(self.min_rate_bps))
        rates = np.asarray(self.min_rate_bps, dtype=float)
        if rates.shape != (num_cus,):
            raise ScenarioError(
                f"min_rate_bps has {rates.size} entries but there are {num_cus} CUs"
            )
        return rates


def _require_positive(name: str, value: float) -> None:
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise NonPositiveQuantityError(f"non-positive quantity: {name}={value!r}")


def _position(name: str, value: Any) -> tuple[float, float, float]:
    arr = np.asarray(value, dtype=float)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise ScenarioError(f"{name} must be a finite [x, y, z] triple, got {value!r}")
    return tuple(float(v) for v in arr)


def load_scenario(
    document: Mapping[str, Any] | str | Path, *, strict: bool = False
) -> Scenario:
    """Build a :class:`Scenario` from a JSON document (mapping or file path).

    With ``strict=True`` every key of :data:`DEFAULT_DOCUMENT` must be present;
    otherwise absent keys take their reference values. The BS budget may be
    given as ``bs_power_budget_dbm`` or ``bs_power_budget_w``, and the radar
    threshold as ``radar_sinr_threshold_db`` or ``radar_sinr_threshold_linear``.
    """
    if isinstance(document, (str, Path)):
        with open(document) as fh:
            document = json.load(fh)
    doc = dict(document)

    aliases = {
        "bs_power_budget_w": "bs_power_budget_dbm",
        "radar_sinr_threshold_linear": "radar_sinr_threshold_db",
    }
    unknown = set(doc) - set(DEFAULT_DOCUMENT) - set(aliases)
    if unknown:
        raise UnknownKeyError(f"unknown scenario key(s): {sorted(unknown)}")
    if strict:
        missing = [
            k
            for k in DEFAULT_DOCUMENT
            if k not in doc and not any(a in doc for a, t in aliases.items() if t == k)
        ]
        if missing:
            raise MissingKeyError(f"missing scenario key(s): {missing}")

    merged = {**DEFAULT_DOCUMENT, **doc}
    for key, value in merged.items():
        if value is None and key not in _NULLABLE:
            raise MissingKeyError(f"scenario key {key!r} is null")

    if "bs_power_budget_w" in doc:
        bs_budget = float(doc["bs_power_budget_w"])
    else:
        bs_budget = dbm_to_watts(float(merged["bs_power_budget_dbm"]))
    if "radar_sinr_threshold_linear" in doc:
        gamma = float(doc["radar_sinr_threshold_linear"])
    else:
        gamma = db_to_linear(float(merged["radar_sinr_threshold_db"]))

    for name in ("wavelength_m", "bandwidth_hz", "radar_power_budget_w", "rcs_m2",
                 "cross_rcs_m2", "area_side_m"):
        _require_positive(name, merged[name])
    _require_positive("bs_power_budget", bs_budget)
    _require_positive("radar_sinr_threshold", gamma)
    if merged["noise_total_w"] is not None:
        _require_positive("noise_total_w", merged["noise_total_w"])
    if merged["rtr_coupling_c"] < 0 or not math.isfinite(merged["rtr_coupling_c"]):
        raise NonPositiveQuantityError(
            f"rtr_coupling_c must be finite and >= 0, got {merged['rtr_coupling_c']!r}"
        )
    if merged["fading_mode"] not in FADING_MODES:
        raise UnknownFadingModeError(
            f"unknown fading mode {merged['fading_mode']!r}; expected one of {FADING_MODES}"
        )

    min_rate = merged["min_rate_bps"]
    if isinstance(min_rate, (list, tuple)):
        min_rate = tuple(float(r) for r in min_rate)
        bad = [r for r in min_rate if not (math.isfinite(r) and r >= 0)]
    else:
        min_rate = float(min_rate)
        bad = [] if (math.isfinite(min_rate) and min_rate >= 0) else [min_rate]
    if bad:
        raise NonPositiveQuantityError(f"min_rate_bps must be >= 0, got {bad}")

    radars = merged["radar_positions_m"]
    if not radars:
        raise ScenarioError("at least one radar is required")
    cus = merged["cu_positions_m"]
    num_cus = int(len(cus) if cus is not None else merged["num_cus"])
    if num_cus < 1:
        raise ScenarioError("at least one CU is required")

    return Scenario(
        wavelength_m=float(merged["wavelength_m"]),
        bandwidth_hz=float(merged["bandwidth_hz"]),
        bs_power_budget_w=bs_budget,
        radar_power_budget_w=float(merged["radar_power_budget_w"]),
        radar_sinr_threshold_linear=gamma,
        min_rate_bps=min_rate,
        bs_tx_gain_linear=db_to_linear(merged["bs_tx_gain_dbi"]),
        cu_rx_gain_linear=db_to_linear(merged["cu_rx_gain_dbi"]),
        radar_mainlobe_tx_gain_linear=db_to_linear(merged["radar_mainlobe_tx_gain_dbi"]),
        radar_mainlobe_rx_gain_linear=db_to_linear(merged["radar_mainlobe_rx_gain_dbi"]),
        radar_sidelobe_tx_gain_linear=db_to_linear(merged["radar_sidelobe_tx_gain_dbi"]),
        radar_sidelobe_rx_gain_linear=db_to_linear(merged["radar_sidelobe_rx_gain_dbi"]),
        rcs_m2=float(merged["rcs_m2"]),
        cross_rcs_m2=float(merged["cross_rcs_m2"]),
        noise_psd_dbm_per_hz=float(merged["noise_psd_dbm_per_hz"]),
        noise_total_w=None if merged["noise_total_w"] is None else float(merged["noise_total_w"]),
        rtr_coupling_c=float(merged["rtr_coupling_c"]),
        fading_mode=merged["fading_mode"],
        fading_seed=int(merged["fading_seed"]),
        bs_position_m=_position("bs_position_m", merged["bs_position_m"]),
        radar_positions_m=tuple(_position("radar_positions_m", r) for r in radars),
        target_position_m=_position("target_position_m", merged["target_position_m"]),
        cu_positions_m=None if cus is None else tuple(_position("cu_positions_m", c) for c in cus),
        num_cus=num_cus,
        placement_seed=int(merged["placement_seed"]),
        area_side_m=float(merged["area_side_m"]),
    )


def place_entities(scenario: Scenario, num_cus: int | None = None, seed: int | None = None) -> Geometry:
    """Lay out BS, radars, target and CUs.

    CUs are drawn uniformly on the ground inside a square of side
    ``scenario.area_side_m`` centred on the BS. For a fixed seed the first
    ``Q`` CUs of a ``Q + 1`` layout coincide with the ``Q``-CU layout.
    Explicit ``cu_positions_m`` in the scenario take precedence.
    """
    if num_cus is None:
        num_cus = scenario.num_cus
    if seed is None:
        seed = scenario.placement_seed
    if num_cus < 1:
        raise ValueError("num_cus must be >= 1")
    bs = np.asarray(scenario.bs_position_m, dtype=float)
    if scenario.cu_positions_m is not None:
        cus = np.asarray(scenario.cu_positions_m, dtype=float)[:num_cus]
        if cus.shape[0] != num_cus:
            raise ValueError(f"scenario lists {cus.shape[0]} CU positions, {num_cus} requested")
    else:
        rng = np.random.default_rng(seed)
        half = scenario.area_side_m / 2.0
        xy = rng.uniform(-half, half, size=(num_cus, 2))
        cus = np.column_stack([xy + bs[:2], np.zeros(num_cus)])
    return Geometry(
        bs=bs,
        cus=cus,
        radars=np.asarray(scenario.radar_positions_m, dtype=float),
        target=np.asarray(scenario.target_position_m, dtype=float),
    )


@dataclass(frozen=True)
class ChannelSet:
    """Channel power gains plus the radar-normalised coefficients.

    Cross-radar matrices are indexed ``[k_from, k_to]``; their diagonals are
    zero and never used.
    """

    h_c: np.ndarray  # (Q,) BS -> CU q
    g_rc: np.ndarray  # (K, Q) radar k -> CU q
    h_r: np.ndarray  # (K,) round trip of radar k
    h_cr: np.ndarray  # (K,) BS -> radar k
    g_rr: np.ndarray  # (K, K) direct radar k' -> radar k
    g_rtr: np.ndarray  # (K, K) radar k' -> target -> radar k
    noise_cu_w: np.ndarray  # (Q,)
    noise_radar_w: np.ndarray  # (K,)
    coupling_c: np.ndarray = field(default=None)  # (K, K)

    def __post_init__(self):
        K = self.h_r.shape[0]
        if self.coupling_c is None:
            object.__setattr__(self, "coupling_c", np.ones((K, K)))
        elif np.isscalar(self.coupling_c):
            object.__setattr__(self, "coupling_c", np.full((K, K), float(self.coupling_c)))
        for name in ("h_c", "g_rc", "h_r", "h_cr", "g_rr", "g_rtr", "noise_cu_w", "noise_radar_w"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ValueError(f"channel array {name} must be finite and >= 0")

    @property
    def num_cus(self) -> int:
        return self.h_c.shape[0]

    @property
    def num_radars(self) -> int:
        return self.h_r.shape[0]

    @property
    def g_tilde(self) -> np.ndarray:
        """g~[k', k] = (g_rr[k', k] + c[k', k] g_rtr[k', k]) / h_r[k], zero diagonal."""
        gt = (self.g_rr + self.coupling_c * self.g_rtr) / self.h_r[None, :]
        np.fill_diagonal(gt, 0.0)
        return gt

    @property
    def h_tilde(self) -> np.ndarray:
        return self.h_cr / self.h_r

    @property
    def sigma_tilde(self) -> np.ndarray:
        return self.noise_radar_w / self.h_r


def small_scale_factors(rng: np.random.Generator, size) -> np.ndarray:
    """Unit-mean exponential power factors (Rayleigh amplitude fading)."""
    return rng.exponential(1.0, size=size)


def _distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = np.linalg.norm(a - b, axis=-1)
    if np.any(d <= 0):
        raise DegenerateGeometryError("degenerate geometry: zero distance between distinct entities")
    return d


def compute_channels(scenario: Scenario, geometry: Geometry) -> ChannelSet:
    Q, K = geometry.num_cus, geometry.num_radars
    lam2 = scenario.wavelength_m**2
    fs2 = (4.0 * math.pi) ** 2
    fs3 = (4.0 * math.pi) ** 3
    Gt_c = scenario.bs_tx_gain_linear
    G_q = scenario.cu_rx_gain_linear
    Gm_t = scenario.radar_mainlobe_tx_gain_linear
    Gm_r = scenario.radar_mainlobe_rx_gain_linear
    Gs_t = scenario.radar_sidelobe_tx_gain_linear
    Gs_r = scenario.radar_sidelobe_rx_gain_linear

    d_q = _distance(geometry.cus, geometry.bs[None, :])
    d_r = _distance(geometry.radars, geometry.target[None, :])
    d_cr = _distance(geometry.radars, geometry.bs[None, :])
    d_rq = _distance(geometry.radars[:, None, :], geometry.cus[None, :, :])
    d_rr = np.linalg.norm(geometry.radars[:, None, :] - geometry.radars[None, :, :], axis=-1)
    off = ~np.eye(K, dtype=bool)
    if np.any(d_rr[off] <= 0):
        raise DegenerateGeometryError("degenerate geometry: co-located radars")

    if scenario.fading_mode == "rayleigh":
        rng = np.random.default_rng(scenario.fading_seed)
        f_c = small_scale_factors(rng, Q)
        f_cr = small_scale_factors(rng, K)
        f_rr = small_scale_factors(rng, (K, K))
        f_rc = small_scale_factors(rng, (K, Q))
    else:
        f_c, f_cr, f_rr, f_rc = np.ones(Q), np.ones(K), np.ones((K, K)), np.ones((K, Q))

    h_r = Gm_t * Gm_r * scenario.rcs_m2 * lam2 / (fs3 * d_r**4)
    h_cr = Gt_c * Gs_r * lam2 / (fs2 * d_cr**2) * f_cr
    h_c = Gt_c * G_q * lam2 / (fs2 * d_q**2) * f_c
    g_rc = Gs_t * G_q * lam2 / (fs2 * d_rq**2) * f_rc

    g_rr = np.zeros((K, K))
    g_rtr = np.zeros((K, K))
    g_rr[off] = (Gs_t * Gs_r * lam2 / (fs2 * np.where(off, d_rr, 1.0) ** 2) * f_rr)[off]
    rtr = Gm_t * Gm_r * scenario.cross_rcs_m2 * lam2 / (fs3 * d_r[:, None] ** 2 * d_r[None, :] ** 2)
    g_rtr[off] = rtr[off]

    noise = scenario.noise_power_w
    return ChannelSet(
        h_c=h_c,
        g_rc=g_rc,
        h_r=h_r,
        h_cr=h_cr,
        g_rr=g_rr,
        g_rtr=g_rtr,
        noise_cu_w=np.full(Q, noise),
        noise_radar_w=np.full(K, noise),
        coupling_c=np.full((K, K), scenario.rtr_coupling_c),
    )
