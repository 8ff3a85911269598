"""Per-segment speaker-embedding providers.

Embedding extraction networks are external to this toolkit; segments are
mapped to vectors either by replaying a file produced by any extractor, or
by a synthetic per-speaker Gaussian generator for simulated scenes.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Protocol

import numpy as np


def segment_key(start_s: float, end_s: float) -> str:
    """Canonical lookup key for a segment's embedding: start_end at ms precision."""
    return f"{start_s:.3f}_{end_s:.3f}"


def unit_norm(vector: np.ndarray) -> np.ndarray:
    vector = np.asarray(vector, dtype=float)
    n = float(np.linalg.norm(vector))
    if n < 1e-12:
        raise ValueError("cannot normalize a zero vector")
    return vector / n


class EmbeddingProvider(Protocol):
    def embed(self, start_s: float, end_s: float, angle: float) -> np.ndarray:
        """Unit-norm embedding for the segment [start_s, end_s] at `angle`."""
        ...


class FileEmbeddingProvider:
    """Replays per-segment vectors from CSV (`key,v0,v1,...`) or JSON files."""

    def __init__(self, path):
        path = Path(path)
        self._vectors: dict[str, np.ndarray] = {}
        if path.suffix.lower() == ".json":
            data = json.loads(path.read_text(encoding="utf-8"))
            for key, values in data.items():
                self._vectors[key] = unit_norm(np.asarray(values, dtype=float))
        else:
            with open(path, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    fields = line.split(",")
                    self._vectors[fields[0]] = unit_norm(
                        np.array([float(v) for v in fields[1:]])
                    )

    def embed(self, start_s: float, end_s: float, angle: float) -> np.ndarray:
        key = segment_key(start_s, end_s)
        if key not in self._vectors:
            raise KeyError(f"no embedding for segment {key}")
        return self._vectors[key]


def make_speaker_centroids(num_speakers: int, dim: int, seed: int = 0) -> np.ndarray:
    """Orthonormal unit centroids (pairwise cosine 0), deterministic by seed."""
    if dim < num_speakers:
        raise ValueError("dim must be >= num_speakers for orthonormal centroids")
    rng = np.random.default_rng(seed)
    mat = rng.standard_normal((dim, num_speakers))
    q, _ = np.linalg.qr(mat)
    return q.T[:num_speakers]


class SyntheticEmbeddingProvider:
    """Gaussian-per-speaker embeddings keyed to simulated ground truth.

    A segment resolves to the speaker whose scheduled utterances overlap it
    most; when nothing overlaps, the speaker with the nearest configured
    angle wins. Draws are sequential from one seeded generator, so identical
    segment streams give identical vectors.
    """

    def __init__(
        self,
        centroids: np.ndarray,
        speaker_angles: dict[int, float],
        noise_sigma: float = 0.05,
        seed: int = 0,
        utterances=None,
    ):
        self.centroids = np.asarray(centroids, dtype=float)
        self.speaker_angles = dict(speaker_angles)
        self.noise_sigma = noise_sigma
        self.utterances = list(utterances) if utterances else []
        self._rng = np.random.default_rng(seed)

    def _resolve_speaker(self, start_s: float, end_s: float, angle: float) -> int:
        best_id, best_overlap = None, 0.0
        for utt in self.utterances:
            overlap = min(end_s, utt.end_s) - max(start_s, utt.start_s)
            if overlap > best_overlap:
                best_overlap = overlap
                best_id = utt.speaker_id
        if best_id is not None:
            return best_id
        from .angles import circular_distance

        return min(
            self.speaker_angles,
            key=lambda sid: circular_distance(angle, self.speaker_angles[sid]),
        )

    def embed(self, start_s: float, end_s: float, angle: float) -> np.ndarray:
        sid = self._resolve_speaker(start_s, end_s, angle)
        noise = self._rng.standard_normal(self.centroids.shape[1])
        return unit_norm(self.centroids[sid] + self.noise_sigma * noise)
