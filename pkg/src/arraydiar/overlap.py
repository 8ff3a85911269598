"""Instantaneous source counting: unimodality of the spatial spectrum + HMM.

The dip statistic here is the minimax sup-distance between the empirical
CDF of the (normalized) response-power curve and the nearest unimodal CDF.
For a discrete distribution with masses p at ordered positions x it is
computed exactly per candidate mode c:

  * the convex flank on [x_1, x_c] costs A(c)/2, where A(c) is the largest
    deviation of the CDF above the greatest convex minorant of its left
    limits on that range;
  * the concave flank on [x_c, x_n] costs B(c)/2 via the least concave
    majorant, mirrored;
  * dip = min over c of max(A(c), B(c))/2.

Shifting the two hull fits by half their deviation yields a unimodal CDF
achieving the bound whenever A/2 + B/2 <= p_c (the mode's atom absorbs the
junction). In the measure-zero case where that slack fails at every
minimizing mode, an exact linear-program fallback resolves the value.

The angle grid is circular; the curve is cut at the antipode of the global
peak before the linear computation so the dominant mode is never split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .angles import circular_distance
from .errors import DegenerateInput, NoSecondPeak
from .localization import DoaEstimate, SpatialSpectrum

DIP_DELTA = 0.05
DIP_SCALE = 0.015
STICKY_SELF_PROB = 0.95
MIN_PEAK_SEPARATION_RAD = math.radians(20.0)
SECOND_PEAK_RATIO = 0.1

NO_SPEECH, ONE_SOURCE, TWO_SOURCES = 0, 1, 2
STATE_NAMES = ("no_speech", "one_source", "two_sources")


@dataclass(frozen=True)
class DipResult:
    dip: float
    modal_interval: tuple[float, float]


def _flank_deviations(x: np.ndarray, hull_ord: np.ndarray, dev_ord: np.ndarray) -> np.ndarray:
    """Deviation budget of the convex flank ending at each candidate mode.

    Maintains the lower hull of (x, hull_ord) left to right; out[c] is the
    running maximum of dev_ord[j] - hull(x[j]) over j < c, where the hull is
    the one fitted to points [0..c]. Deviations only grow as the hull drops,
    so a running maximum is exact.
    """
    n = len(x)
    out = np.zeros(n)
    hull: list[int] = [0]
    devmax = 0.0
    for c in range(1, n):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            # pop b when (a, b, c) turns non-convex in the hull ordinates
            if (hull_ord[c] - hull_ord[a]) * (x[b] - x[a]) < (
                hull_ord[b] - hull_ord[a]
            ) * (x[c] - x[a]) - 1e-18:
                hull.pop()
            else:
                break
        v = hull[-1]
        # fold the chord-span deviations (covers every popped vertex too)
        x_v, y_v = x[v], hull_ord[v]
        slope = (hull_ord[c] - y_v) / (x[c] - x_v)
        for j in range(v, c):
            dev = dev_ord[j] - (y_v + slope * (x[j] - x_v))
            if dev > devmax:
                devmax = dev
        hull.append(c)
        out[c] = devmax
    return out


def _dip_linear(x: np.ndarray, p: np.ndarray) -> tuple[float, int, int]:
    """Exact dip of the discrete distribution (positions x, masses p).

    Returns (dip, lo, hi) where [lo, hi] spans the minimizing mode slots.
    """
    n = len(x)
    if n == 1:
        return 0.0, 0, 0
    mass = np.asarray(p, dtype=float)
    mass = mass / mass.sum()
    cdf = np.cumsum(mass)
    left = cdf - mass

    a_dev = _flank_deviations(x, left, cdf)
    # concave flank: mirror the axis and swap the roles of the limits
    b_rev = _flank_deviations(-x[::-1], -cdf[::-1], -left[::-1])
    b_dev = b_rev[::-1]

    per_mode = np.maximum(a_dev, b_dev)
    best = float(per_mode.min())
    winners = np.flatnonzero(per_mode <= best + 1e-15)
    lo, hi = int(winners[0]), int(winners[-1])

    # max(A, B)/2 is achieved by shifted hull fits when the mode's atom can
    # absorb the junction; otherwise fall back to the exact LP per mode.
    slack_ok = (a_dev + b_dev) / 2.0 <= mass + 1e-12
    if not slack_ok[winners].any():
        lp_best = _dip_linear_lp(x, mass, candidates=np.arange(n))
        if lp_best is not None:
            return lp_best, lo, hi
    return best / 2.0, lo, hi


def _dip_linear_lp(x: np.ndarray, p: np.ndarray, candidates: np.ndarray) -> float | None:
    """Exact per-mode dip by linear programming (rarely-taken slow path)."""
    from scipy.optimize import linprog

    n = len(x)
    cdf = np.cumsum(p)
    fl = cdf - p
    best = None
    for c in candidates:
        num = n + 2  # g_0..g_{n-1}, gl (left limit at mode), d
        gl, dv = n, n + 1
        a_ub, b_ub = [], []

        def le(coeffs, bound):
            row = np.zeros(num)
            for idx, val in coeffs:
                row[idx] += val
            a_ub.append(row)
            b_ub.append(bound)

        for i in range(n):
            if i == c:
                le([(i, -1.0), (dv, -1.0)], -cdf[i])    # g_c >= F_c - d
                le([(i, 1.0), (dv, -1.0)], cdf[i])      # g_c <= F_c + d
                le([(gl, -1.0), (dv, -1.0)], -fl[i])    # gl >= Fl_c - d
                le([(gl, 1.0), (dv, -1.0)], fl[i])      # gl <= Fl_c + d
            else:
                le([(i, -1.0), (dv, -1.0)], -cdf[i])    # g_i >= F_i - d
                le([(i, 1.0), (dv, -1.0)], fl[i])       # g_i <= F_{i-1} + d
        for i in range(n - 1):
            hi_v = gl if i + 1 == c else i + 1
            le([(i, 1.0), (hi_v, -1.0)], 0.0)           # monotone up to left limit
        if c < n:
            le([(gl, 1.0), (c, -1.0)], 0.0)             # gl <= g_c (jump up at mode)
        # convexity strictly left of the mode (sequence ends at the left limit)
        idx_left = list(range(c)) + [gl]
        xs_left = list(x[:c]) + [x[c]]
        for k in range(1, len(idx_left) - 1):
            d1, d2 = xs_left[k] - xs_left[k - 1], xs_left[k + 1] - xs_left[k]
            le([(idx_left[k - 1], -d2), (idx_left[k], d1 + d2), (idx_left[k + 1], -d1)], 0.0)
        # concavity from the mode rightward
        for k in range(c + 1, n - 1):
            d1, d2 = x[k] - x[k - 1], x[k + 1] - x[k]
            le([(k - 1, d2), (k, -(d1 + d2)), (k + 1, d1)], 0.0)

        cost = np.zeros(num)
        cost[dv] = 1.0
        bounds = [(0.0, 1.0)] * n + [(0.0, 1.0), (0.0, None)]
        res = linprog(cost, A_ub=np.array(a_ub), b_ub=np.array(b_ub),
                      bounds=bounds, method="highs")
        if res.status == 0 and (best is None or res.fun < best):
            best = float(res.fun)
    return best


def unroll_circular(weights: np.ndarray) -> np.ndarray:
    """Index order cutting the circle at the antipode of the global peak."""
    n = len(weights)
    start = (int(np.argmax(weights)) + n // 2) % n
    return (start + np.arange(n)) % n


def dip_statistic(weights: np.ndarray, theta_grid: np.ndarray | None = None) -> DipResult:
    """Dip of the response-power curve, treated as a pmf over the angle grid."""
    weights = np.asarray(weights, dtype=float)
    if weights.ndim != 1 or weights.size == 0:
        raise DegenerateInput("weights must be a non-empty 1-D vector")
    if np.any(weights < 0):
        raise DegenerateInput("weights must be non-negative")
    total = float(weights.sum())
    if total <= 0.0:
        raise DegenerateInput("total weight must be positive")
    if theta_grid is None:
        theta_grid = 2.0 * math.pi * np.arange(len(weights)) / len(weights)

    order = unroll_circular(weights)
    w = weights[order]
    keep = w > 0.0
    positions = np.flatnonzero(keep).astype(float)
    masses = w[keep] / total
    dip, lo, hi = _dip_linear(positions, masses)
    kept_order = order[keep]
    dip = min(max(dip, 0.0), 0.25)
    return DipResult(
        dip=dip,
        modal_interval=(
            float(theta_grid[kept_order[lo]]),
            float(theta_grid[kept_order[hi]]),
        ),
    )


@dataclass
class SourceCountState:
    log_likelihoods: np.ndarray

    @property
    def state(self) -> int:
        return int(np.argmax(self.log_likelihoods))

    @property
    def state_name(self) -> str:
        return STATE_NAMES[self.state]

    @classmethod
    def initial(cls) -> "SourceCountState":
        return cls(log_likelihoods=np.log(np.full(3, 1.0 / 3.0)))


class SourceCountHmm:
    """Sticky three-state forward recursion over (VAD posterior, dip) pairs."""

    def __init__(self, delta: float = DIP_DELTA, scale: float = DIP_SCALE,
                 self_prob: float = STICKY_SELF_PROB):
        self.delta = delta
        self.scale = scale
        off = (1.0 - self_prob) / 2.0
        trans = np.full((3, 3), off)
        np.fill_diagonal(trans, self_prob)
        self._log_trans = np.log(trans)

    def emissions(self, vad_posterior: float, dip: float) -> np.ndarray:
        v = min(max(vad_posterior, 0.0), 1.0)
        sig = 1.0 / (1.0 + math.exp(-(dip - self.delta) / self.scale))
        e = np.array([1.0 - v, v * (1.0 - sig), v * sig])
        return np.maximum(e, 1e-12)

    def step(self, state: SourceCountState, vad_posterior: float, dip: float) -> SourceCountState:
        prev = state.log_likelihoods
        # forward update: logsumexp over predecessors, in the log domain
        combined = prev[:, None] + self._log_trans
        m = combined.max(axis=0)
        log_pred = m + np.log(np.exp(combined - m).sum(axis=0))
        scores = log_pred + np.log(self.emissions(vad_posterior, dip))
        norm = scores.max() + math.log(np.exp(scores - scores.max()).sum())
        return SourceCountState(log_likelihoods=scores - norm)


def hmm_step(state: SourceCountState, vad_posterior: float, dip: float,
             hmm: SourceCountHmm | None = None) -> SourceCountState:
    """One forward step with the default sticky parameterization."""
    if not 0.0 <= vad_posterior <= 1.0:
        raise ValueError("vad_posterior must lie in [0, 1]")
    if dip < 0.0:
        raise ValueError("dip must be non-negative")
    return (hmm or SourceCountHmm()).step(state, vad_posterior, dip)


def top_two_sources(
    spectrum: SpatialSpectrum,
    min_separation: float = MIN_PEAK_SEPARATION_RAD,
    second_ratio: float = SECOND_PEAK_RATIO,
) -> tuple[DoaEstimate, DoaEstimate]:
    """The two strongest circular local maxima, at least `min_separation` apart."""
    power = spectrum.smoothed_power
    grid = spectrum.theta_grid
    n = len(power)
    if n < 3 or power.max() <= 0.0:
        raise NoSecondPeak("spectrum carries no usable peaks")
    prev_p = np.roll(power, 1)
    next_p = np.roll(power, -1)
    peak_mask = (power >= prev_p) & (power >= next_p)
    main_idx = int(np.argmax(power))
    main_power = float(power[main_idx])

    mean = float(power.mean())

    def estimate(idx: int) -> DoaEstimate:
        z = (power[idx] / mean - 1.0) / 2.0
        conf = 2.0 / (1.0 + math.exp(-z)) - 1.0
        return DoaEstimate(frame_index=-1, theta_hat=float(grid[idx]),
                           peak_power=float(power[idx]), confidence=conf)

    second_idx = None
    second_power = -1.0
    for idx in np.flatnonzero(peak_mask):
        if idx == main_idx:
            continue
        if circular_distance(grid[idx], grid[main_idx]) < min_separation:
            continue
        if power[idx] > second_power:
            second_idx = int(idx)
            second_power = float(power[idx])
    if second_idx is None or second_power < second_ratio * main_power:
        raise NoSecondPeak("no secondary peak clears separation and level rules")
    return estimate(main_idx), estimate(second_idx)
