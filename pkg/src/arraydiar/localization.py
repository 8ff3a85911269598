"""Steered response power over an angle grid, smoothing, and DOA extraction.

Per frame, each beam in a bank steered around the circle is projected onto
the microphone spectra; summing squared responses over the speech band gives
the transient response power at each candidate angle. A first-order recursive
smoother turns the per-frame powers into the spatial spectrum used by the
rest of the pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .angles import circular_median
from .beamformer import BeamBank
from .errors import DimensionMismatch

SPEECH_BAND_HZ = (100.0, 7000.0)
DEFAULT_ALPHA = 0.7
CONFIDENCE_KAPPA = 2.0
DEFAULT_MIN_CONFIDENCE = 0.2


@dataclass(frozen=True)
class FrameSpectrum:
    """One STFT frame across the array: bins is (num_bins, num_channels)."""

    frame_index: int
    bins: np.ndarray

    def __post_init__(self):
        if self.bins.ndim != 2:
            raise DimensionMismatch("bins must be (num_bins, num_channels)")


@dataclass
class DoaEstimate:
    frame_index: int
    theta_hat: float
    peak_power: float
    confidence: float
    valid: bool = True


class SpatialSpectrum:
    """Recursively smoothed response power over the angle grid.

    Mutable, single-writer per session; frames must be applied in order.
    """

    def __init__(self, theta_grid: np.ndarray, alpha: float = DEFAULT_ALPHA,
                 keep_history: bool = False):
        if not 0.0 <= alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        self.theta_grid = np.asarray(theta_grid, dtype=float)
        self.alpha = alpha
        self.smoothed_power = np.zeros(len(self.theta_grid))
        self.keep_history = keep_history
        self.history: list[np.ndarray] = []
        self._initialized = False

    def update(self, instantaneous: np.ndarray) -> np.ndarray:
        instantaneous = np.asarray(instantaneous, dtype=float)
        if instantaneous.shape != self.smoothed_power.shape:
            raise DimensionMismatch("power vector length must match the grid")
        if not self._initialized:
            # First frame: no previous estimate to blend with.
            self.smoothed_power = instantaneous.copy()
            self._initialized = True
        else:
            self.smoothed_power = (
                self.alpha * self.smoothed_power + (1.0 - self.alpha) * instantaneous
            )
        if self.keep_history:
            self.history.append(self.smoothed_power.copy())
        return self.smoothed_power


def phat_normalize(bins: np.ndarray) -> np.ndarray:
    """Per-channel, per-bin magnitude normalization; zeros stay zero."""
    mag = np.abs(bins)
    return np.where(mag > 0.0, bins / np.maximum(mag, 1e-300), 0.0)


def frame_srp(
    frame: FrameSpectrum,
    bank: BeamBank,
    phat: bool = True,
    band_bins: np.ndarray | None = None,
) -> np.ndarray:
    """Response power at every bank angle for one frame (length num_beams)."""
    engine = SrpEngine(bank, phat=phat, band_bins=band_bins)
    return engine.compute(frame.bins)


class SrpEngine:
    """Caches the bank weight tensor restricted to the analysis band."""

    def __init__(self, bank: BeamBank, phat: bool = True,
                 band_bins: np.ndarray | None = None,
                 band_hz: tuple[float, float] = SPEECH_BAND_HZ):
        grid = bank.beams[0].freq_grid
        if band_bins is None:
            band_bins = grid.band_bins(*band_hz)
        self.band_bins = np.asarray(band_bins, dtype=int)
        self.phat = phat
        self.num_channels = bank.beams[0].geometry.num_elements
        self.num_bins = grid.num_bins
        self.theta_grid = bank.look_directions
        self._w = bank.weight_tensor()[:, self.band_bins, :]  # (num_beams, band, M)

    def compute(self, bins: np.ndarray) -> np.ndarray:
        if bins.shape != (self.num_bins, self.num_channels):
            raise DimensionMismatch(
                f"expected {(self.num_bins, self.num_channels)}, got {bins.shape}"
            )
        x = bins[self.band_bins, :]
        if self.phat:
            x = phat_normalize(x)
        resp = np.einsum("km,gkm->gk", np.conj(x), self._w)
        return np.sum(np.abs(resp) ** 2, axis=1)

    def compute_batch(self, spectra: np.ndarray) -> np.ndarray:
        """SRP for stacked frames (frames, num_bins, M) -> (frames, num_beams)."""
        x = spectra[:, self.band_bins, :]
        if self.phat:
            x = phat_normalize(x)
        resp = np.einsum("tkm,gkm->tgk", np.conj(x), self._w)
        return np.sum(np.abs(resp) ** 2, axis=2)


def smooth_srp(state: SpatialSpectrum, instantaneous: np.ndarray) -> SpatialSpectrum:
    """Apply one recursive-smoothing step in place and return the state."""
    state.update(instantaneous)
    return state


def argmax_doa(state: SpatialSpectrum, frame_index: int) -> DoaEstimate:
    """Grid angle of the smoothed maximum; ties break to the smallest angle.

    Confidence maps the peak-to-mean ratio through a logistic rescaled to
    [0, 1): flat spectra give ~0, dominant peaks approach 1. An all-zero
    spectrum yields an invalid estimate with zero confidence.
    """
    power = state.smoothed_power
    if power.size == 0:
        raise ValueError("empty spectrum")
    peak_idx = int(np.argmax(power))
    peak = float(power[peak_idx])
    if peak <= 0.0:
        return DoaEstimate(frame_index, math.nan, 0.0, 0.0, valid=False)
    mean = float(np.mean(power))
    z = (peak / mean - 1.0) / CONFIDENCE_KAPPA
    confidence = 2.0 / (1.0 + math.exp(-z)) - 1.0
    return DoaEstimate(
        frame_index=frame_index,
        theta_hat=float(state.theta_grid[peak_idx]),
        peak_power=peak,
        confidence=confidence,
    )


def median_filter_angles(
    estimates: list[DoaEstimate],
    window: int,
    min_confidence: float = DEFAULT_MIN_CONFIDENCE,
) -> list[float | None]:
    """Circular median over a centered window, skipping low-confidence frames.

    Windows are clipped at the stream edges. A window with no usable member
    yields None for that frame.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be odd and >= 1")
    half = window // 2
    out: list[float | None] = []
    for t in range(len(estimates)):
        lo = max(0, t - half)
        hi = min(len(estimates), t + half + 1)
        members = [
            e.theta_hat
            for e in estimates[lo:hi]
            if e.valid and e.confidence >= min_confidence
        ]
        out.append(circular_median(np.array(members)) if members else None)
    return out


class StreamingMedianFilter:
    """Online centered circular-median filter with (window-1)/2 frame latency.

    Produces exactly the same outputs as `median_filter_angles` fed the full
    stream, emitted as soon as each centered window is complete.
    """

    def __init__(self, window: int, min_confidence: float = DEFAULT_MIN_CONFIDENCE):
        if window < 1 or window % 2 == 0:
            raise ValueError("window must be odd and >= 1")
        self.window = window
        self.half = window // 2
        self.min_confidence = min_confidence
        self._buffer: list[DoaEstimate] = []
        self._emitted = 0

    @property
    def latency_frames(self) -> int:
        return self.half

    def _result(self, t: int) -> tuple[int, float | None]:
        lo = max(0, t - self.half)
        members = [
            e.theta_hat
            for e in self._buffer[lo : t + self.half + 1]
            if e.valid and e.confidence >= self.min_confidence
        ]
        angle = circular_median(np.array(members)) if members else None
        return (t, angle)

    def push(self, estimate: DoaEstimate) -> list[tuple[int, float | None]]:
        self._buffer.append(estimate)
        out = []
        while self._emitted + self.half < len(self._buffer):
            out.append(self._result(self._emitted))
            self._emitted += 1
        return out

    def flush(self) -> list[tuple[int, float | None]]:
        out = []
        while self._emitted < len(self._buffer):
            out.append(self._result(self._emitted))
            self._emitted += 1
        return out
