"""CUSUM sequential change detector for per-step Poisson count vectors.

The detector accumulates clamped log-likelihood-ratio increments
g' = max(0, g + llr) and declares a change the first time g' strictly
exceeds the threshold h.  Infinite increments are legitimate for
singular-support channel pairs: +inf triggers immediately, -inf resets
the statistic to zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .channels import ChannelModel


@dataclass(frozen=True)
class CusumState:
    """Detector state: statistic g (nats), step counter t, threshold h."""

    h: float
    g: float = 0.0
    t: int = 0
    triggered: bool = False
    trigger_time: int | None = None

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("threshold must be positive")
        if self.g < 0:
            raise ValueError("statistic is clamped at zero and cannot be negative")
        if self.triggered and (self.trigger_time is None or self.trigger_time > self.t):
            raise ValueError("inconsistent trigger bookkeeping")


def llr_coefficients(cm: ChannelModel) -> tuple[np.ndarray, float]:
    """(per-count log-rate-ratios, count-free offset) for fast accumulation.

    llr(counts) = counts . coeffs + offset.  Channels with both rates zero
    contribute nothing; a count on a channel where one hypothesis has zero
    rate yields an infinite coefficient, handled downstream.
    """
    lp, lq = cm.lambda_pre, cm.lambda_post
    both = (lp > 0) & (lq > 0)
    coeffs = np.where(both, np.log(np.where(both, lq, 1.0) / np.where(both, lp, 1.0)), 0.0)
    coeffs = np.where((lq > 0) & (lp == 0), np.inf, coeffs)
    coeffs = np.where((lp > 0) & (lq == 0), -np.inf, coeffs)
    # zero-rate channels draw zero counts, so inf * 0 never arises in the dot
    offset = float(np.sum(lp[np.isfinite(coeffs)] - lq[np.isfinite(coeffs)])
                   + np.sum(lp[coeffs == -np.inf]) - np.sum(lq[coeffs == np.inf]))
    return coeffs, offset


def llr_step(cm: ChannelModel, counts) -> float:
    """Log-likelihood ratio of one count vector (nats).

    sum_k [ n_k ln(lambda_post_k / lambda_pre_k) - (lambda_post_k - lambda_pre_k) ],
    with zero-zero channels dropped.  Returns +/-inf when a count lands on a
    channel that is impossible under one hypothesis.
    """
    n = np.asarray(counts)
    if n.shape != cm.lambda_pre.shape:
        raise ValueError(f"counts shape {n.shape} does not match {cm.n_channels} channels")
    if np.any(n < 0):
        raise ValueError("counts must be nonnegative")
    coeffs, offset = llr_coefficients(cm)
    infinite = ~np.isfinite(coeffs) & (n > 0)
    if np.any(infinite & (coeffs == np.inf)):
        return math.inf
    if np.any(infinite):
        return -math.inf
    finite = np.isfinite(coeffs)
    return float(n[finite] @ coeffs[finite] + offset)


def cusum_update(state: CusumState, llr: float) -> CusumState:
    """One clamped-recursion step; the state freezes once triggered."""
    if state.triggered:
        raise ValueError("detector already triggered; state is frozen")
    g = max(0.0, state.g + llr)
    t = state.t + 1
    if g > state.h:
        return replace(state, g=g, t=t, triggered=True, trigger_time=t)
    return replace(state, g=g, t=t)


def threshold_for_pfa(pfa: float, window: int) -> float:
    """Threshold guaranteeing false-alarm probability <= pfa over `window` steps."""
    if not 0 < pfa < 1:
        raise ValueError("pfa must lie in (0, 1)")
    if window < 1:
        raise ValueError("window must be >= 1")
    return math.log(window / pfa)


def cusum_path(llrs: np.ndarray, g0: float = 0.0) -> np.ndarray:
    """Vectorized clamped walk over a block of increments.

    Uses the running-minimum identity for the recursion
    g_t = max(0, g_{t-1} + u_t): with s the inclusive prefix sums started
    at g0, g_t = s_t - min(0, min_{k<=t} s_k).  Valid because g0 >= 0.
    """
    s = g0 + np.cumsum(llrs)
    return s - np.minimum(np.minimum.accumulate(s), 0.0)
