"""Monte Carlo trials, ensembles, and the theory-side latency predictors.

Each trial owns a counter-derived random stream keyed by
(master_seed, trial_index), so ensembles are bit-reproducible for any
worker count and any execution order.  Trials are stepped in growing
blocks; within a block the clamped CUSUM recursion is evaluated in closed
form from prefix sums.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import detect
from .channels import ChannelModel, poisson_kl

WORKERS_ENV = "TRISPADE_WORKERS"

_FIRST_BLOCK = 256
_MAX_BLOCK_ELEMENTS = 4_000_000  # cap on block_steps * n_channels draws


@dataclass(frozen=True)
class TrialRecord:
    """Outcome of one simulated detection trial.

    Exactly one of (latency set, false_alarm, censored) holds.  overshoot
    is g - h at trigger; change_time may be math.inf for pure false-alarm
    runs.
    """

    trigger_time: int | None
    change_time: float
    latency: int | None
    false_alarm: bool
    censored: bool
    overshoot: float | None
    seed: int
    trace: np.ndarray | None = None

    def __post_init__(self):
        states = (self.latency is not None, self.false_alarm, self.censored)
        if sum(states) != 1:
            raise ValueError("trial must be exactly one of latency/false-alarm/censored")
        if self.overshoot is not None and self.overshoot < 0:
            raise ValueError("overshoot cannot be negative")


@dataclass(frozen=True)
class EnsembleStats:
    """Aggregates over independent trials.

    Latency statistics cover post-change triggers only; false-alarm time
    statistics cover triggered no-change (or pre-change) runs.  Fields are
    None when no qualifying trials exist rather than fabricating a mean.
    """

    n_trials: int
    n_latency: int
    mean_latency: float | None
    latency_se: float | None
    e0_overshoot: float | None
    n_fa: int
    fa_rate: float
    mean_tfa: float | None
    tfa_se: float | None
    einf_exp_neg_overshoot: float | None
    censored_fraction: float


def trial_rng(master_seed: int, trial_index: int) -> tuple[np.random.Generator, int]:
    """Independent per-trial generator plus the 64-bit word recorded as its seed."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(trial_index,))
    seed_word = int(ss.generate_state(1, dtype=np.uint64)[0])
    return np.random.Generator(np.random.Philox(ss)), seed_word


def sample_counts(cm: ChannelModel, hypothesis: str, rng: np.random.Generator) -> np.ndarray:
    """One vector of independent Poisson counts under `hypothesis` (pre/post)."""
    if hypothesis == "pre":
        return rng.poisson(cm.lambda_pre)
    if hypothesis == "post":
        return rng.poisson(cm.lambda_post)
    raise ValueError(f"hypothesis must be 'pre' or 'post', got {hypothesis!r}")


def _block_schedule(n_channels: int):
    cap = max(_FIRST_BLOCK, _MAX_BLOCK_ELEMENTS // max(n_channels, 1))
    block = _FIRST_BLOCK
    while True:
        yield block
        block = min(block * 2, cap)


def _run_trial_fast(cm: ChannelModel, h: float, t_c: float, max_steps: int,
                    rng: np.random.Generator, coeffs: np.ndarray, offset: float,
                    collect_trace: bool):
    """Blocked walk for channel models with finite log-ratio coefficients."""
    g = 0.0
    t = 0
    trace_rows = [] if collect_trace else None
    schedule = _block_schedule(cm.n_channels)
    while t < max_steps:
        nb = min(next(schedule), max_steps - t)
        # split a block that straddles the change point
        n_pre = int(np.clip(t_c - t, 0, nb)) if math.isfinite(t_c) else nb
        parts = []
        if n_pre:
            parts.append(rng.poisson(cm.lambda_pre, size=(n_pre, cm.n_channels)))
        if nb - n_pre:
            parts.append(rng.poisson(cm.lambda_post, size=(nb - n_pre, cm.n_channels)))
        counts = parts[0] if len(parts) == 1 else np.concatenate(parts)
        u = counts @ coeffs + offset
        walk = detect.cusum_path(u, g0=g)
        if collect_trace:
            trace_rows.append(np.column_stack([t + 1 + np.arange(nb), u, walk]))
        hits = np.nonzero(walk > h)[0]
        if hits.size:
            k = int(hits[0])
            trace = None
            if collect_trace:
                trace_rows[-1] = trace_rows[-1][:k + 1]
                trace = np.concatenate(trace_rows)
            return t + k + 1, float(walk[k] - h), trace
        g = float(walk[-1])
        t += nb
    trace = np.concatenate(trace_rows) if collect_trace and trace_rows else None
    return None, None, trace


def _run_trial_singular(cm: ChannelModel, h: float, t_c: float, max_steps: int,
                        rng: np.random.Generator, collect_trace: bool):
    """Step-at-a-time walk for models with impossible-under-one-hypothesis channels."""
    state = detect.CusumState(h=h)
    trace_rows = [] if collect_trace else None
    for t in range(1, max_steps + 1):
        hyp = "pre" if t <= t_c else "post"
        llr = detect.llr_step(cm, sample_counts(cm, hyp, rng))
        state = detect.cusum_update(state, llr)
        if collect_trace:
            trace_rows.append((t, llr, state.g))
        if state.triggered:
            trace = np.array(trace_rows) if collect_trace else None
            return state.trigger_time, state.g - h, trace
    trace = np.array(trace_rows) if collect_trace and trace_rows else None
    return None, None, trace


def run_trial(cm: ChannelModel, h: float, t_c: float, max_steps: int,
              master_seed: int, trial_index: int = 0,
              record_trace: bool = False) -> TrialRecord:
    """Simulate one detection run: pre-change rates through step t_c, post after.

    t_c = math.inf gives a pure false-alarm run.  Censoring at max_steps is
    a recorded outcome, not an error.
    """
    if h <= 0:
        raise ValueError("threshold must be positive")
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    if t_c < 0:
        raise ValueError("change time cannot be negative")
    rng, seed_word = trial_rng(master_seed, trial_index)
    coeffs, offset = detect.llr_coefficients(cm)
    if np.all(np.isfinite(coeffs)):
        T, overshoot, trace = _run_trial_fast(cm, h, t_c, max_steps, rng, coeffs,
                                              offset, record_trace)
    else:
        T, overshoot, trace = _run_trial_singular(cm, h, t_c, max_steps, rng, record_trace)
    if T is None:
        return TrialRecord(None, t_c, None, False, True, None, seed_word, trace)
    if T > t_c:
        return TrialRecord(T, t_c, int(T - t_c), False, False, overshoot, seed_word, trace)
    return TrialRecord(T, t_c, None, True, False, overshoot, seed_word, trace)


def _run_range(cm: ChannelModel, h: float, t_c: float, max_steps: int,
               master_seed: int, start: int, stop: int) -> list[TrialRecord]:
    return [run_trial(cm, h, t_c, max_steps, master_seed, i) for i in range(start, stop)]


def _worker(args) -> list[TrialRecord]:
    return _run_range(*args)


def resolve_workers(n_workers: int | None) -> int:
    if n_workers is None:
        n_workers = int(os.environ.get(WORKERS_ENV, "1"))
    if n_workers < 1:
        raise ValueError("worker count must be >= 1")
    return n_workers


def run_trials(cm: ChannelModel, h: float, t_c: float, n_trials: int, max_steps: int,
               master_seed: int, n_workers: int | None = None) -> list[TrialRecord]:
    """Independent trials 0..n_trials-1, merged in index order.

    Results are identical for every worker count because each trial's
    stream depends only on (master_seed, trial_index).
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    n_workers = resolve_workers(n_workers)
    if n_workers == 1:
        return _run_range(cm, h, t_c, max_steps, master_seed, 0, n_trials)
    bounds = np.linspace(0, n_trials, n_workers + 1).astype(int)
    jobs = [(cm, h, t_c, max_steps, master_seed, int(a), int(b))
            for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        chunks = list(pool.map(_worker, jobs))
    return [rec for chunk in chunks for rec in chunk]


def aggregate(records: list[TrialRecord]) -> EnsembleStats:
    """Fold trial records into ensemble statistics (see EnsembleStats)."""
    n = len(records)
    lat = np.array([r.latency for r in records if r.latency is not None], dtype=float)
    lat_osh = np.array([r.overshoot for r in records if r.latency is not None], dtype=float)
    fa_T = np.array([r.trigger_time for r in records if r.false_alarm], dtype=float)
    fa_osh = np.array([r.overshoot for r in records if r.false_alarm], dtype=float)
    censored = sum(r.censored for r in records)

    def _mean_se(x: np.ndarray):
        if len(x) == 0:
            return None, None
        se = float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0
        return float(x.mean()), se

    mean_lat, lat_se = _mean_se(lat)
    mean_tfa, tfa_se = _mean_se(fa_T)
    e0 = float(lat_osh.mean()) if len(lat_osh) else None
    einf = float(np.exp(-fa_osh).mean()) if len(fa_osh) else None
    return EnsembleStats(
        n_trials=n,
        n_latency=len(lat),
        mean_latency=mean_lat,
        latency_se=lat_se,
        e0_overshoot=e0,
        n_fa=len(fa_T),
        fa_rate=len(fa_T) / n if n else 0.0,
        mean_tfa=mean_tfa,
        tfa_se=tfa_se,
        einf_exp_neg_overshoot=einf,
        censored_fraction=censored / n if n else 0.0,
    )


def run_ensemble(cm: ChannelModel, h: float, t_c: float, n_trials: int, max_steps: int,
                 master_seed: int, n_workers: int | None = None) -> EnsembleStats:
    """run_trials + aggregate."""
    return aggregate(run_trials(cm, h, t_c, n_trials, max_steps, master_seed, n_workers))


def quantum_limit_latency(tfa: float, info_rate: float) -> float:
    """Best achievable worst-case mean latency: ln(tfa) / info_rate (steps)."""
    if tfa < 1:
        raise ValueError("mean time to false alarm must be >= 1")
    if info_rate <= 0:
        raise ValueError("information rate must be positive")
    return math.log(tfa) / info_rate


def latency_prediction(h: float, e0_overshoot: float, info_rate: float) -> float:
    """Asymptotic CUSUM mean latency (h + E0[x]) / info_rate (steps)."""
    if h <= 0:
        raise ValueError("threshold must be positive")
    if e0_overshoot < 0:
        raise ValueError("overshoot mean cannot be negative")
    if info_rate <= 0:
        raise ValueError("information rate must be positive")
    return (h + e0_overshoot) / info_rate


def fa_bound(h: float, einf_exp_neg_overshoot: float) -> float:
    """Lower bound e^h / E_inf[e^-x] on the mean time to false alarm."""
    if not 0 < einf_exp_neg_overshoot <= 1:
        raise ValueError("E[e^-x] must lie in (0, 1]")
    return math.exp(h) / einf_exp_neg_overshoot


def default_fa_cap(h: float, hard_cap: int = 50_000_000) -> int:
    """Step budget for no-change runs: generous multiple of the e^h scale."""
    return int(min(50 * math.exp(h), hard_cap))


def fit_log_slope(points) -> float:
    """Least-squares slope of ln(value) versus ln(gamma).

    Needs >= 3 points with distinct positive abscissae and positive values.
    """
    pts = [(float(g), float(v)) for g, v in points]
    if len(pts) < 3:
        raise ValueError("need at least 3 points to fit a slope")
    g = np.array([p[0] for p in pts])
    v = np.array([p[1] for p in pts])
    if np.any(g <= 0) or np.any(v <= 0):
        raise ValueError("log-log fit needs positive coordinates")
    if len(np.unique(g)) < len(g):
        raise ValueError("duplicate abscissae make the fit degenerate")
    return float(np.polyfit(np.log(g), np.log(v), 1)[0])


def pre_change_drift(cm: ChannelModel) -> float:
    """Expected per-step log-likelihood increment under pre-change sampling."""
    return -float(np.sum(poisson_kl(cm.lambda_post, cm.lambda_pre)))


def post_change_drift(cm: ChannelModel) -> float:
    """Expected per-step log-likelihood increment under post-change sampling."""
    return float(np.sum(poisson_kl(cm.lambda_pre, cm.lambda_post)))
