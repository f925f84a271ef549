"""Result serialization: frozen CSV schemas and the SVG figures beside them.

Every figure is rendered from rows that are also written as CSV, so plots
are views over the delimited record, never the only artifact.  CSV output
is byte-deterministic: fixed column order, fixed float formatting, and a
single '#' header comment carrying the units.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")  # headless batch rendering only

import matplotlib.pyplot as plt

from .channels import ChannelModel

# deterministic element ids inside the SVG output
matplotlib.rcParams["svg.hashsalt"] = "trispade"

_SVG_META = {"Date": None}

ENTROPY_COLUMNS = ("gamma", "qre_leading_order", "qre_numerical",
                   "trispade_re_per_photon", "direct_re_per_photon")
ENTROPY_HEADER = "gamma dimensionless; entropies in nats per photon"

SLOPE_COLUMNS = ("series", "slope", "window_lo", "window_hi", "n_points")
SLOPE_HEADER = "log-log slopes of entropy vs gamma over the stated window"

THRESHOLD_COLUMNS = ("h", "receiver", "mean_latency", "latency_se", "e0_overshoot",
                     "prediction", "mean_tfa", "tfa_se", "einf_exp_neg_overshoot",
                     "fa_bound", "info_rate_per_step", "drift_per_step",
                     "n_latency_trials", "n_fa_trials", "censored_fraction")
THRESHOLD_HEADER = ("h, overshoots, rates in nats; latencies and false-alarm times "
                    "in time steps")

LATENCY_COLUMNS = ("gamma", "receiver", "mean_latency", "latency_se", "n_latency",
                   "e0_overshoot", "prediction", "tau_star", "info_rate_per_step",
                   "drift_per_step", "mean_tfa", "tfa_se", "fa_rate",
                   "censored_fraction")
LATENCY_HEADER = ("gamma dimensionless; latencies, tau_star and false-alarm times in "
                  "time steps; rates in nats per step")

CHANNEL_COLUMNS = ("id", "lambda_pre", "lambda_post")
CHANNEL_HEADER = "mean photon counts per time step under each hypothesis"

TRACE_COLUMNS = ("t", "llr", "g")
TRACE_HEADER = "t in time steps; llr increment and statistic g in nats"


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return format(value, ".12g")
    return str(value)


def write_csv(path, columns, rows, header_comment: str) -> Path:
    """Rows (mappings) to CSV with a leading '#' units comment."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(f"# {header_comment}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in columns])
    return path


def write_channels_csv(path, cm: ChannelModel) -> Path:
    rows = [{"id": i, "lambda_pre": float(p), "lambda_post": float(q)}
            for i, p, q in zip(cm.ids, cm.lambda_pre, cm.lambda_post)]
    return write_csv(path, CHANNEL_COLUMNS, rows,
                     f"{CHANNEL_HEADER}; receiver={cm.receiver}")


def write_trace_csv(path, trace) -> Path:
    rows = [{"t": int(t), "llr": float(u), "g": float(g)} for t, u, g in trace]
    return write_csv(path, TRACE_COLUMNS, rows, TRACE_HEADER)


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return path


_SERIES_STYLE = {
    "qre_leading_order": dict(color="k", ls="-", marker="", label="quantum limit, leading order"),
    "qre_numerical": dict(color="k", ls="--", marker="o", mfc="none",
                          label="quantum relative entropy, numerical"),
    "trispade_re_per_photon": dict(color="tab:blue", ls="", marker="s", label="TriSPADE"),
    "direct_re_per_photon": dict(color="tab:red", ls="", marker="^", label="direct imaging"),
}


def render_entropy_sweep(path, rows) -> Path:
    fig, ax = plt.subplots(figsize=(5.2, 4.0))
    gammas = [r["gamma"] for r in rows]
    for series, style in _SERIES_STYLE.items():
        vals = [r.get(series) for r in rows]
        pts = [(g, v) for g, v in zip(gammas, vals)
               if v is not None and math.isfinite(v) and v > 0]
        if pts:
            ax.loglog(*zip(*pts), **style)
    ax.set_xlabel(r"object-to-PSF ratio $\gamma$")
    ax.set_ylabel("relative entropy (nats / photon)")
    ax.legend(fontsize=8, frameon=False)
    ax.grid(True, which="both", alpha=0.25)
    fig.tight_layout()
    return _save(fig, path)


def render_threshold_sweep(path, rows) -> Path:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.6, 3.6))
    hs = [r["h"] for r in rows]
    lat = [r["mean_latency"] for r in rows]
    lse = [r["latency_se"] or 0.0 for r in rows]
    ax1.errorbar(hs, lat, yerr=[3 * s for s in lse], fmt="o", color="tab:blue",
                 capsize=3, label="measured")
    pred = [(h, r["prediction"]) for h, r in zip(hs, rows) if r["prediction"] is not None]
    if pred:
        ax1.plot(*zip(*pred), "k--", label=r"$(h + E_0[x]) / (N S)$")
    ax1.set_xlabel("threshold h (nats)")
    ax1.set_ylabel("mean latency (steps)")
    ax1.legend(fontsize=8, frameon=False)
    ax1.grid(alpha=0.25)
    tfa = [(h, r["mean_tfa"], r["tfa_se"] or 0.0) for h, r in zip(hs, rows)
           if r["mean_tfa"] is not None]
    if tfa:
        ax2.errorbar([t[0] for t in tfa], [t[1] for t in tfa],
                     yerr=[3 * t[2] for t in tfa], fmt="o", color="tab:blue",
                     capsize=3, label="measured")
    bound = [(h, r["fa_bound"]) for h, r in zip(hs, rows) if r["fa_bound"] is not None]
    if bound:
        ax2.plot(*zip(*bound), "k--", label=r"$e^h / E_\infty[e^{-x}]$")
    ax2.set_yscale("log")
    ax2.set_xlabel("threshold h (nats)")
    ax2.set_ylabel("mean time to false alarm (steps)")
    ax2.legend(fontsize=8, frameon=False)
    ax2.grid(alpha=0.25, which="both")
    fig.tight_layout()
    return _save(fig, path)


_RECEIVER_STYLE = {
    "trispade": dict(color="tab:blue", marker="s", label="TriSPADE"),
    "direct": dict(color="tab:red", marker="^", label="direct imaging"),
}


def render_latency_ensemble(path, rows) -> Path:
    fig, ax = plt.subplots(figsize=(5.2, 4.0))
    for receiver, style in _RECEIVER_STYLE.items():
        pts = [(r["gamma"], r["mean_latency"], r["latency_se"] or 0.0)
               for r in rows if r["receiver"] == receiver and r["mean_latency"]]
        if pts:
            ax.errorbar([p[0] for p in pts], [p[1] for p in pts],
                        yerr=[3 * p[2] for p in pts], fmt=style["marker"],
                        color=style["color"], capsize=3, ls="", label=style["label"])
    limit = sorted({(r["gamma"], r["tau_star"]) for r in rows
                    if r["tau_star"] is not None})
    if limit:
        ax.plot(*zip(*limit), "k-", label=r"quantum limit $\bar\tau^*$")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(r"object-to-PSF ratio $\gamma$")
    ax.set_ylabel("mean latency (steps)")
    ax.legend(fontsize=8, frameon=False)
    ax.grid(alpha=0.25, which="both")
    fig.tight_layout()
    return _save(fig, path)
