"""Experiment drivers: entropy sweep, threshold sweep, latency ensemble.

Each driver returns plain row dictionaries keyed by the frozen CSV column
names (see report.py), so results serialize deterministically and tests
can snapshot them.
"""

from __future__ import annotations

import math

import numpy as np

from . import channels, sim
from .channels import DIRECT_IMAGING, TRISPADE, Scenario
from .config import ExperimentConfig, make_grid, make_scenario, scenario_objects

# false-alarm ensembles draw from a stream offset so they never reuse the
# post-change ensembles' trial streams
FA_SEED_OFFSET = 1


def info_rate_leading_order(sc: Scenario) -> float:
    """N * S with S the leading-order QRE per photon (nats per step)."""
    return sc.photons_per_step * channels.qre_leading_order(sc)


def build_channels(cfg: ExperimentConfig, sc: Scenario, receiver: str):
    if receiver == TRISPADE:
        return channels.trispade_channels(sc)
    if receiver == DIRECT_IMAGING:
        return channels.direct_channels(sc, make_grid(cfg))
    raise ValueError(f"unknown receiver {receiver!r}")


def entropy_sweep(cfg: ExperimentConfig) -> dict:
    """Per-gamma information table plus fitted log-log slopes.

    Columns: gamma, qre_leading_order, qre_numerical, trispade_re_per_photon,
    direct_re_per_photon (all nats per photon; blank where undefined for the
    scenario/receiver selection).
    """
    objects = scenario_objects(cfg)
    n = cfg.scenario.photons_per_step
    point_masses = objects[0].is_point_masses and objects[1].is_point_masses
    gaussian = cfg.scenario.psf == "gaussian"
    rows = []
    for gamma in cfg.entropy_sweep.gamma_grid:
        sc = make_scenario(cfg, gamma, objects)
        row = {"gamma": gamma,
               "qre_leading_order": channels.qre_leading_order(sc),
               "qre_numerical": (channels.qre_numerical(sc, cfg.qre.n_max)
                                 if point_masses and gaussian else None),
               "trispade_re_per_photon": None,
               "direct_re_per_photon": None}
        if TRISPADE in cfg.receivers:
            row["trispade_re_per_photon"] = (
                channels.poisson_re_per_step(channels.trispade_channels(sc)) / n)
        if DIRECT_IMAGING in cfg.receivers:
            row["direct_re_per_photon"] = (
                channels.poisson_re_per_step(channels.direct_channels(sc, make_grid(cfg))) / n)
        rows.append(row)
    slopes = []
    lo, hi = cfg.entropy_sweep.slope_window
    for series in ("qre_leading_order", "qre_numerical",
                   "trispade_re_per_photon", "direct_re_per_photon"):
        pts = [(r["gamma"], r[series]) for r in rows
               if lo <= r["gamma"] <= hi and r[series] is not None
               and math.isfinite(r[series]) and r[series] > 0]
        if len(pts) >= 3:
            slopes.append({"series": series, "slope": sim.fit_log_slope(pts),
                           "window_lo": lo, "window_hi": hi, "n_points": len(pts)})
    return {"rows": rows, "slopes": slopes}


def _fa_ensemble(cm, h: float, cfg: ExperimentConfig) -> sim.EnsembleStats | None:
    det = cfg.detector
    if det.fa_trials == 0:
        return None
    cap = det.fa_max_steps if det.fa_max_steps is not None else sim.default_fa_cap(h)
    return sim.run_ensemble(cm, h, math.inf, det.fa_trials, cap,
                            det.master_seed + FA_SEED_OFFSET, cfg.workers)


def threshold_sweep(cfg: ExperimentConfig) -> dict:
    """Latency and false-alarm statistics versus the CUSUM threshold.

    Runs a single receiver (the mode sorter when selected) at the
    scenario's gamma.  The prediction column is (h + E0[x]) / (N*S) with S
    the leading-order QRE; drift_per_step is the exact post-change mean
    increment for comparison.
    """
    receiver = TRISPADE if TRISPADE in cfg.receivers else cfg.receivers[0]
    sc = make_scenario(cfg)
    cm = build_channels(cfg, sc, receiver)
    rate_lo = info_rate_leading_order(sc)
    drift = sim.post_change_drift(cm)
    det = cfg.detector
    rows = []
    for h in cfg.threshold_sweep.h_grid:
        post = sim.run_ensemble(cm, h, det.change_time, det.n_trials, det.max_steps,
                                det.master_seed, cfg.workers)
        fa = _fa_ensemble(cm, h, cfg)
        prediction = (sim.latency_prediction(h, post.e0_overshoot, rate_lo)
                      if post.e0_overshoot is not None else None)
        bound = (sim.fa_bound(h, fa.einf_exp_neg_overshoot)
                 if fa is not None and fa.einf_exp_neg_overshoot is not None else None)
        rows.append({
            "h": h,
            "receiver": receiver,
            "mean_latency": post.mean_latency,
            "latency_se": post.latency_se,
            "e0_overshoot": post.e0_overshoot,
            "prediction": prediction,
            "mean_tfa": fa.mean_tfa if fa else None,
            "tfa_se": fa.tfa_se if fa else None,
            "einf_exp_neg_overshoot": fa.einf_exp_neg_overshoot if fa else None,
            "fa_bound": bound,
            "info_rate_per_step": rate_lo,
            "drift_per_step": drift,
            "n_latency_trials": post.n_latency,
            "n_fa_trials": fa.n_fa if fa else 0,
            "censored_fraction": max(post.censored_fraction,
                                     fa.censored_fraction if fa else 0.0),
        })
    return {"rows": rows, "receiver": receiver}


def latency_ensemble(cfg: ExperimentConfig) -> dict:
    """Mean latency versus gamma for each receiver, with the quantum limit.

    tau_star is ln(T_FA)/(N*S) computed from the mode sorter's measured
    mean time to false alarm at each gamma (the limit itself is receiver
    independent); when no false-alarm statistics exist it falls back to
    the nominal T_FA = e^h.
    """
    objects = scenario_objects(cfg)
    det = cfg.detector
    h = cfg.threshold
    rows = []
    for gamma in cfg.latency_ensemble.gamma_grid:
        sc = make_scenario(cfg, gamma, objects)
        rate_lo = info_rate_leading_order(sc)
        tfa_stats = None
        per_receiver = {}
        for receiver in cfg.receivers:
            cm = build_channels(cfg, sc, receiver)
            n_trials = (cfg.latency_ensemble.n_trials_direct
                        if receiver == DIRECT_IMAGING else det.n_trials)
            post = sim.run_ensemble(cm, h, det.change_time, n_trials, det.max_steps,
                                    det.master_seed, cfg.workers)
            per_receiver[receiver] = (cm, post)
            if receiver == TRISPADE:
                tfa_stats = _fa_ensemble(cm, h, cfg)
        tfa = (tfa_stats.mean_tfa if tfa_stats is not None
               and tfa_stats.mean_tfa is not None else math.exp(h))
        tau_star = sim.quantum_limit_latency(tfa, rate_lo)
        for receiver, (cm, post) in per_receiver.items():
            prediction = (sim.latency_prediction(h, post.e0_overshoot, rate_lo)
                          if post.e0_overshoot is not None else None)
            rows.append({
                "gamma": gamma,
                "receiver": receiver,
                "mean_latency": post.mean_latency,
                "latency_se": post.latency_se,
                "n_latency": post.n_latency,
                "e0_overshoot": post.e0_overshoot,
                "prediction": prediction,
                "tau_star": tau_star,
                "info_rate_per_step": rate_lo,
                "drift_per_step": sim.post_change_drift(cm),
                "mean_tfa": (tfa_stats.mean_tfa
                             if receiver == TRISPADE and tfa_stats else None),
                "tfa_se": (tfa_stats.tfa_se
                           if receiver == TRISPADE and tfa_stats else None),
                "fa_rate": post.fa_rate,
                "censored_fraction": post.censored_fraction,
            })
    return {"rows": rows, "h": h}
