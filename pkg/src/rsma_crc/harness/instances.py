"""Random unit-scale instances for tests and cross-solver checks."""

from __future__ import annotations

import numpy as np

from ..lp import lp_feasible
from ..model import TrmpInstance, feasible_set


def _loguniform(rng, lo, hi, size=None):
    return np.exp(rng.uniform(np.log(lo), np.log(hi), size))


def random_instance(rng: np.random.Generator, num_cus: int = 2, num_radars: int = 1,
                    min_rate: tuple[float, float] = (0.0, 0.5), max_tries: int = 100) -> TrmpInstance:
    """B = 1, unit noise and budgets; redraws until the power polytope is nonempty."""
    Q, K = num_cus, num_radars
    for _ in range(max_tries):
        inst = TrmpInstance.build(
            _loguniform(rng, 1.0, 100.0, Q),
            g_rc=_loguniform(rng, 0.01, 1.0, (K, Q)),
            h_r=_loguniform(rng, 10.0, 100.0, K),
            h_cr=_loguniform(rng, 0.01, 0.5, K),
            g_rr=_loguniform(rng, 1e-3, 0.05, (K, K)),
            g_rtr=_loguniform(rng, 1e-3, 0.05, (K, K)),
            gamma_r=float(rng.uniform(1.0, 3.0)),
            min_rate=rng.uniform(*min_rate, Q),
        )
        A, b, upper = feasible_set(inst)
        if lp_feasible(A, b, upper=upper).feasible:
            return inst
    raise RuntimeError("could not draw an instance with a nonempty power polytope")
