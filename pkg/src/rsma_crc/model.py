"""The sum-rate maximisation problem: rates, radar SINR, feasibility.

Power vectors are laid out as ``(p0, p_1..p_Q, pr_1..pr_K)``; decision
vectors used by the local solver prepend the common-rate shares ``a``.
All rates use the binary logarithm and are in bit/s.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .scenario import ChannelSet, Geometry, Scenario, compute_channels, place_entities

DEFAULT_FEAS_TOL = 1e-8


@dataclass(frozen=True)
class TrmpInstance:
    channels: ChannelSet
    bandwidth_hz: float
    bs_budget_w: float
    radar_budget_w: float
    gamma_r: float
    min_rate_bps: np.ndarray

    def __post_init__(self):
        Q, K = self.channels.num_cus, self.channels.num_radars
        object.__setattr__(self, "min_rate_bps", np.broadcast_to(
            np.asarray(self.min_rate_bps, dtype=float), (Q,)).copy())
        ch = self.channels
        if ch.g_rc.shape != (K, Q) or ch.h_cr.shape != (K,) or ch.g_rr.shape != (K, K):
            raise ValueError("channel array dimensions do not match Q and K")
        if ch.noise_cu_w.shape != (Q,) or ch.noise_radar_w.shape != (K,):
            raise ValueError("noise array dimensions do not match Q and K")
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth must be positive")
        if min(self.bs_budget_w, self.radar_budget_w) < 0 or np.any(self.min_rate_bps < 0):
            raise ValueError("budgets and rate thresholds must be >= 0")
        if K and self.gamma_r <= 0:
            raise ValueError("radar SINR threshold must be positive")
        if K and np.any(ch.h_r <= 0):
            raise ValueError("radar round-trip gains must be positive")
        if np.any(ch.noise_cu_w <= 0) or np.any(ch.noise_radar_w <= 0):
            raise ValueError("noise powers must be positive")

    @property
    def num_cus(self) -> int:
        return self.channels.num_cus

    @property
    def num_radars(self) -> int:
        return self.channels.num_radars

    @property
    def num_powers(self) -> int:
        return 1 + self.num_cus + self.num_radars

    @classmethod
    def from_scenario(cls, scenario: Scenario, geometry: Geometry | None = None) -> "TrmpInstance":
        if geometry is None:
            geometry = place_entities(scenario)
        channels = compute_channels(scenario, geometry)
        return cls(
            channels=channels,
            bandwidth_hz=scenario.bandwidth_hz,
            bs_budget_w=scenario.bs_power_budget_w,
            radar_budget_w=scenario.radar_power_budget_w,
            gamma_r=scenario.radar_sinr_threshold_linear,
            min_rate_bps=scenario.min_rates(geometry.num_cus),
        )

    @classmethod
    def build(cls, h_c, *, g_rc=None, h_r=(), h_cr=(), g_rr=None, g_rtr=None,
              noise_cu=1.0, noise_radar=1.0, coupling_c=1.0, bandwidth=1.0,
              bs_budget=1.0, radar_budget=1.0, gamma_r=1.0, min_rate=0.0) -> "TrmpInstance":
        """Assemble an instance straight from gain arrays (handy for tests)."""
        h_c = np.atleast_1d(np.asarray(h_c, dtype=float))
        h_r = np.atleast_1d(np.asarray(h_r, dtype=float))
        Q, K = h_c.size, h_r.size
        g_rc = np.zeros((K, Q)) if g_rc is None else np.asarray(g_rc, dtype=float).reshape(K, Q)
        g_rr = np.zeros((K, K)) if g_rr is None else np.asarray(g_rr, dtype=float).reshape(K, K)
        g_rtr = np.zeros((K, K)) if g_rtr is None else np.asarray(g_rtr, dtype=float).reshape(K, K)
        channels = ChannelSet(
            h_c=h_c,
            g_rc=g_rc,
            h_r=h_r,
            h_cr=np.atleast_1d(np.asarray(h_cr, dtype=float)).reshape(K),
            g_rr=g_rr,
            g_rtr=g_rtr,
            noise_cu_w=np.broadcast_to(np.asarray(noise_cu, dtype=float), (Q,)).copy(),
            noise_radar_w=np.broadcast_to(np.asarray(noise_radar, dtype=float), (K,)).copy(),
            coupling_c=np.broadcast_to(np.asarray(coupling_c, dtype=float), (K, K)).copy(),
        )
        return cls(channels, float(bandwidth), float(bs_budget), float(radar_budget),
                   float(gamma_r), min_rate)

    def normalized(self) -> tuple["TrmpInstance", "Scaling"]:
        """Equivalent instance with B = 1, unit budgets and unit noise.

        Every rate ratio and radar SINR is unchanged; allocations map back
        through the returned :class:`Scaling`.
        """
        ch = self.channels
        pc = self.bs_budget_w if self.bs_budget_w > 0 else 1.0
        pr = self.radar_budget_w if self.radar_budget_w > 0 else 1.0
        nq, nk = ch.noise_cu_w, ch.noise_radar_w
        channels = ChannelSet(
            h_c=ch.h_c * pc / nq,
            g_rc=ch.g_rc * pr / nq[None, :],
            h_r=ch.h_r * pr / nk,
            h_cr=ch.h_cr * pc / nk,
            g_rr=ch.g_rr * pr / nk[None, :],
            g_rtr=ch.g_rtr * pr / nk[None, :],
            noise_cu_w=np.ones_like(nq),
            noise_radar_w=np.ones_like(nk),
            coupling_c=ch.coupling_c,
        )
        inst = TrmpInstance(
            channels=channels,
            bandwidth_hz=1.0,
            bs_budget_w=self.bs_budget_w / pc,
            radar_budget_w=self.radar_budget_w / pr,
            gamma_r=self.gamma_r,
            min_rate_bps=self.min_rate_bps / self.bandwidth_hz,
        )
        return inst, Scaling(self.bandwidth_hz, pc, pr)


@dataclass(frozen=True)
class Scaling:
    rate: float
    bs_power: float
    radar_power: float

    def to_physical(self, alloc: "Allocation") -> "Allocation":
        return Allocation(alloc.a * self.rate, alloc.p0 * self.bs_power,
                          alloc.p * self.bs_power, alloc.pr * self.radar_power)

    def to_normalized(self, alloc: "Allocation") -> "Allocation":
        return Allocation(alloc.a / self.rate, alloc.p0 / self.bs_power,
                          alloc.p / self.bs_power, alloc.pr / self.radar_power)


@dataclass(frozen=True)
class Allocation:
    a: np.ndarray
    p0: float
    p: np.ndarray
    pr: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", np.atleast_1d(np.asarray(self.a, dtype=float)))
        object.__setattr__(self, "p", np.atleast_1d(np.asarray(self.p, dtype=float)))
        object.__setattr__(self, "pr", np.atleast_1d(np.asarray(self.pr, dtype=float)))
        object.__setattr__(self, "p0", float(self.p0))
        if self.a.shape != self.p.shape:
            raise ValueError("a and p must both have one entry per CU")

    @classmethod
    def zeros(cls, num_cus: int, num_radars: int) -> "Allocation":
        return cls(np.zeros(num_cus), 0.0, np.zeros(num_cus), np.zeros(num_radars))

    @classmethod
    def from_vector(cls, x: np.ndarray, num_cus: int) -> "Allocation":
        """Split ``(a, p0, p, pr)`` into an allocation."""
        x = np.asarray(x, dtype=float)
        Q = num_cus
        return cls(x[:Q], x[Q], x[Q + 1:2 * Q + 1], x[2 * Q + 1:])

    @classmethod
    def from_powers(cls, a, pvec: np.ndarray, num_cus: int) -> "Allocation":
        pvec = np.asarray(pvec, dtype=float)
        return cls(a, pvec[0], pvec[1:num_cus + 1], pvec[num_cus + 1:])

    def power_vector(self) -> np.ndarray:
        return np.concatenate([[self.p0], self.p, self.pr])

    def vector(self) -> np.ndarray:
        return np.concatenate([self.a, [self.p0], self.p, self.pr])

    def to_dict(self) -> dict:
        return {"a": self.a.tolist(), "p0": self.p0, "p": self.p.tolist(), "pr": self.pr.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "Allocation":
        return cls(data["a"], data["p0"], data["p"], data["pr"])

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps({**self.to_dict(), "units": {"a": "bit/s", "p0": "W", "p": "W", "pr": "W"}})
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_json(cls, text_or_path: str | Path) -> "Allocation":
        text = str(text_or_path)
        if not text.lstrip().startswith("{"):
            text = Path(text_or_path).read_text()
        return cls.from_dict(json.loads(text))


def _split(instance: TrmpInstance, p0, p, pr):
    return (np.asarray(p0, dtype=float), np.asarray(p, dtype=float), np.asarray(pr, dtype=float))


def cu_interference(instance: TrmpInstance, p, pr) -> np.ndarray:
    """Radar interference plus noise at each CU, shape ``(..., Q)``."""
    ch = instance.channels
    return np.asarray(pr, dtype=float) @ ch.g_rc + ch.noise_cu_w


def common_rates(instance: TrmpInstance, p0, p, pr) -> np.ndarray:
    """R_{q,0} for all CUs; accepts leading batch dimensions."""
    p0, p, pr = _split(instance, p0, p, pr)
    h = instance.channels.h_c
    denom = h * p.sum(axis=-1, keepdims=True) + cu_interference(instance, p, pr)
    return instance.bandwidth_hz * np.log2(1.0 + h * p0[..., None] / denom)


def private_rates(instance: TrmpInstance, p, pr) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    h = instance.channels.h_c
    others = p.sum(axis=-1, keepdims=True) - p
    denom = h * others + cu_interference(instance, p, pr)
    return instance.bandwidth_hz * np.log2(1.0 + h * p / denom)


def private_sinr_ratio(instance: TrmpInstance, p, pr) -> np.ndarray:
    """1 + SINR of each private stream (the argument of the private-rate log)."""
    p = np.asarray(p, dtype=float)
    h = instance.channels.h_c
    others = p.sum(axis=-1, keepdims=True) - p
    return 1.0 + h * p / (h * others + cu_interference(instance, p, pr))


def common_rate(instance: TrmpInstance, q: int, alloc: Allocation) -> float:
    return float(common_rates(instance, alloc.p0, alloc.p, alloc.pr)[q])


def private_rate(instance: TrmpInstance, q: int, alloc: Allocation) -> float:
    return float(private_rates(instance, alloc.p, alloc.pr)[q])


def radar_sinrs(instance: TrmpInstance, p0, p, pr) -> np.ndarray:
    p0, p, pr = _split(instance, p0, p, pr)
    ch = instance.channels
    cross = ch.g_rr + ch.coupling_c * ch.g_rtr
    cross = cross * (1.0 - np.eye(ch.num_radars))
    bs_total = p0 + p.sum(axis=-1)
    denom = pr @ cross + ch.h_cr * bs_total[..., None] + ch.noise_radar_w
    return ch.h_r * pr / denom


def radar_sinr(instance: TrmpInstance, k: int, alloc: Allocation) -> float:
    return float(radar_sinrs(instance, alloc.p0, alloc.p, alloc.pr)[k])


def linearized_radar_constraints(instance: TrmpInstance) -> tuple[np.ndarray, np.ndarray]:
    """Radar SINR constraints as ``A @ pvec <= b`` over ``(p0, p, pr)``.

    Row k is ``-pr_k/gamma + sum_{k'!=k} g~[k',k] pr_k' + h~_k sum p <= -sigma~_k``.
    """
    ch = instance.channels
    Q, K = instance.num_cus, instance.num_radars
    A = np.zeros((K, 1 + Q + K))
    if K == 0:
        return A, np.zeros(0)
    A[:, :1 + Q] = ch.h_tilde[:, None]
    A[:, 1 + Q:] = ch.g_tilde.T - np.eye(K) / instance.gamma_r
    return A, -ch.sigma_tilde


def feasible_set(instance: TrmpInstance) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Linear description of the power polytope X.

    Returns ``(A, b, upper)`` with ``A @ pvec <= b``, ``0 <= pvec <= upper``:
    the BS budget row followed by the radar rows.
    """
    Q, K = instance.num_cus, instance.num_radars
    budget = np.zeros((1, 1 + Q + K))
    budget[0, :1 + Q] = 1.0
    A_r, b_r = linearized_radar_constraints(instance)
    A = np.vstack([budget, A_r])
    b = np.concatenate([[instance.bs_budget_w], b_r])
    upper = np.concatenate([np.full(1 + Q, instance.bs_budget_w), np.full(K, instance.radar_budget_w)])
    return A, b, upper


def objective(instance: TrmpInstance, alloc: Allocation) -> float:
    return float(np.sum(alloc.a) + np.sum(private_rates(instance, alloc.p, alloc.pr)))


@dataclass
class FeasibilityReport:
    feasible: bool
    max_violation: float
    common_rate_cap: float
    min_rate: np.ndarray
    bs_budget: float
    radar_sinr: np.ndarray
    radar_budget: np.ndarray
    nonnegativity: float
    normalized: dict = field(default_factory=dict)

    def violation_without_min_rate(self) -> float:
        return max([0.0] + [v for k, v in self.normalized.items() if k != "min_rate"])


def check_feasibility(instance: TrmpInstance, alloc: Allocation, tol: float = DEFAULT_FEAS_TOL) -> FeasibilityReport:
    """Residual of every constraint group; positive entries are violations.

    Raw residuals are in physical units. ``max_violation`` uses residuals
    scaled by each constraint's natural scale (B for rates, the budgets for
    powers, gamma for the radar SINR).
    """
    B = instance.bandwidth_hz
    r0 = common_rates(instance, alloc.p0, alloc.p, alloc.pr)
    rq = private_rates(instance, alloc.p, alloc.pr)
    cap = float(np.sum(alloc.a) - np.min(r0))
    min_rate = instance.min_rate_bps - alloc.a - rq
    bs = float(alloc.p0 + np.sum(alloc.p) - instance.bs_budget_w)
    if instance.num_radars:
        radar = instance.gamma_r - radar_sinrs(instance, alloc.p0, alloc.p, alloc.pr)
    else:
        radar = np.zeros(0)
    rb = alloc.pr - instance.radar_budget_w
    nonneg = float(max(0.0, -np.min(alloc.vector())))

    def scale(x):
        return x if x > 0 else 1.0

    power_scale = scale(max(instance.bs_budget_w, instance.radar_budget_w))
    normalized = {
        "common_rate_cap": cap / B,
        "min_rate": float(np.max(min_rate, initial=-np.inf)) / B,
        "bs_budget": bs / scale(instance.bs_budget_w),
        "radar_sinr": float(np.max(radar, initial=-np.inf)) / scale(instance.gamma_r),
        "radar_budget": float(np.max(rb, initial=-np.inf)) / scale(instance.radar_budget_w),
        "nonnegativity": nonneg / power_scale,
    }
    max_violation = max(0.0, *normalized.values())
    return FeasibilityReport(
        feasible=max_violation <= tol,
        max_violation=max_violation,
        common_rate_cap=cap,
        min_rate=min_rate,
        bs_budget=bs,
        radar_sinr=radar,
        radar_budget=rb,
        nonnegativity=nonneg,
        normalized=normalized,
    )


def split_common_rate(instance: TrmpInstance, common_total: float, lower: np.ndarray, favoured: int) -> np.ndarray | None:
    """Give each CU its lower bound and the remainder to ``favoured``.

    Returns ``None`` when the lower bounds do not fit in ``common_total``.
    """
    lower = np.maximum(np.asarray(lower, dtype=float), 0.0)
    others = lower.sum() - lower[favoured]
    rest = common_total - others
    if rest < lower[favoured] - 1e-12 * max(1.0, abs(common_total)):
        return None
    a = lower.copy()
    a[favoured] = max(rest, 0.0)
    return a
