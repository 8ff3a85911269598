"""Frame-level voice activity posteriors.

The neural VAD the pipeline was designed around is external; this module
provides the provider interface plus two concrete sources: a baseline
energy detector with a tracked noise floor, and a reader that replays
posteriors from a CSV file.
"""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

ENERGY_EPS = 1e-12
POSTERIOR_OFFSET_DB = 6.0
POSTERIOR_SCALE_DB = 3.0
FLOOR_PERCENTILE = 10.0
FLOOR_HISTORY_FRAMES = 1250  # ~20 s at a 16 ms hop


@dataclass(frozen=True)
class VadFrame:
    frame_index: int
    speech_posterior: float

    def __post_init__(self):
        if not 0.0 <= self.speech_posterior <= 1.0:
            raise ValueError("posterior must lie in [0, 1]")


def frame_energy_db(samples: np.ndarray) -> float:
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("empty frame")
    return 10.0 * math.log10(float(np.mean(samples**2)) + ENERGY_EPS)


def posterior_from_energy(energy_db: float, noise_floor_db: float) -> float:
    z = (energy_db - noise_floor_db - POSTERIOR_OFFSET_DB) / POSTERIOR_SCALE_DB
    return 1.0 / (1.0 + math.exp(-z))


def energy_vad(frame_samples: np.ndarray, noise_floor_db: float,
               frame_index: int = 0) -> VadFrame:
    """Posterior for one frame given an externally tracked noise floor."""
    posterior = posterior_from_energy(frame_energy_db(frame_samples), noise_floor_db)
    return VadFrame(frame_index=frame_index, speech_posterior=posterior)


class EnergyVad:
    """Baseline energy VAD tracking the floor as a running low percentile."""

    def __init__(self, percentile: float = FLOOR_PERCENTILE,
                 history_frames: int = FLOOR_HISTORY_FRAMES):
        self.percentile = percentile
        self._history: deque[float] = deque(maxlen=history_frames)
        self._frame_index = 0

    @property
    def noise_floor_db(self) -> float:
        if not self._history:
            raise ValueError("no frames observed yet")
        return float(np.percentile(np.fromiter(self._history, dtype=float),
                                   self.percentile))

    def update_energy(self, energy_db: float) -> float:
        """Fold one frame energy into the floor and return its posterior."""
        self._history.append(energy_db)
        return posterior_from_energy(energy_db, self.noise_floor_db)

    def process_frame(self, samples: np.ndarray) -> VadFrame:
        posterior = self.update_energy(frame_energy_db(samples))
        frame = VadFrame(frame_index=self._frame_index, speech_posterior=posterior)
        self._frame_index += 1
        return frame


class PosteriorFileVad:
    """Replays frame posteriors from a CSV of (frame_index, posterior) rows."""

    def __init__(self, path, default: float = 0.0):
        self.default = default
        self._posteriors: dict[int, float] = {}
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            for row in reader:
                if not row or row[0].strip().lower() in ("frame_index", "frame"):
                    continue
                self._posteriors[int(row[0])] = float(row[1])

    def posterior(self, frame_index: int) -> float:
        return self._posteriors.get(frame_index, self.default)
