"""SVG line charts of sweep results, one file per swept parameter."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .sweep import ResultRow, mean_series  # noqa: E402

LABELS = {
    "num_cus": "Number of CUs",
    "epsilon": "epsilon",
    "gamma_r_db": "Radar SINR threshold (dB)",
    "min_rate": "Minimum rate (bit/s)",
    "bs_budget": "BS power budget (dBm)",
    "radar_budget": "Radar power budget (W)",
    "radar_distance": "Radar 2 distance to BS (m)",
}


def _as_dicts(table) -> list[dict]:
    out = []
    for r in table:
        if isinstance(r, ResultRow):
            r = {"param": r.param, "value": float(r.value), "solver": r.solver, "seed": r.seed,
                 "sum_rate_bps": float(r.sum_rate_bps), "runtime_s": float(r.runtime_s), "status": r.status}
        out.append(r)
    return out


def emit_plots(table, output_dir) -> list[Path]:
    """Write ``sum_rate_<param>.svg`` per swept parameter (mean over seeds per solver).

    Rendering is deterministic: a fixed SVG hash salt and no date metadata,
    so the same table always gives the same bytes.
    """
    rows = _as_dicts(table)
    if not rows:
        raise ValueError("cannot plot an empty result table")
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for param in sorted({r["param"] for r in rows}):
        series = mean_series([r for r in rows if r["param"] == param])
        with plt.rc_context({"svg.hashsalt": "rsma-crc", "svg.fonttype": "none"}):
            fig, ax = plt.subplots(figsize=(6, 4))
            for solver, (xs, ys) in series.items():
                ax.plot(xs, [y / 1e6 for y in ys], marker="o", label=solver.upper())
            ax.set_xlabel(LABELS.get(param, param))
            ax.set_ylabel("Sum rate (Mbit/s)")
            ax.grid(True, alpha=0.3)
            ax.legend()
            fig.tight_layout()
            path = out / f"sum_rate_{param}.svg"
            fig.savefig(path, format="svg", metadata={"Date": None})
            plt.close(fig)
        paths.append(path)
    return paths
