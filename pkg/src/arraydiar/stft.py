"""Short-time Fourier analysis/synthesis with overlap-add reconstruction."""

from __future__ import annotations

import numpy as np


def hann_window(size: int) -> np.ndarray:
    # Periodic Hann, which sums to a constant at hop = size/2 and size/4.
    n = np.arange(size)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / size)


def stft(signal: np.ndarray, fft_size: int, hop: int) -> np.ndarray:
    """One-sided STFT, frames on rows; frame i covers samples [i*hop, i*hop+fft_size)."""
    signal = np.asarray(signal, dtype=float)
    window = hann_window(fft_size)
    if len(signal) < fft_size:
        signal = np.pad(signal, (0, fft_size - len(signal)))
    num_frames = 1 + (len(signal) - fft_size) // hop
    frames = np.lib.stride_tricks.sliding_window_view(signal, fft_size)[::hop][:num_frames]
    return np.fft.rfft(frames * window, axis=1)


def istft(spectra: np.ndarray, fft_size: int, hop: int, length: int | None = None) -> np.ndarray:
    """Weighted overlap-add inverse of `stft` (synthesis window = analysis window)."""
    window = hann_window(fft_size)
    frames = np.fft.irfft(spectra, n=fft_size, axis=1) * window
    num_frames = frames.shape[0]
    out_len = fft_size + (num_frames - 1) * hop
    out = np.zeros(out_len)
    norm = np.zeros(out_len)
    wsq = window * window
    for i in range(num_frames):
        start = i * hop
        out[start : start + fft_size] += frames[i]
        norm[start : start + fft_size] += wsq
    out = out / np.maximum(norm, 1e-12)
    if length is not None:
        if length > out_len:
            out = np.pad(out, (0, length - out_len))
        else:
            out = out[:length]
    return out


class StreamingStft:
    """Incremental multichannel STFT: push samples, pop completed frames.

    Frame i covers samples [i*hop, i*hop + fft_size); it is emitted once its
    last sample has arrived, so the intrinsic lookahead is under one window.
    """

    def __init__(self, fft_size: int, hop: int, num_channels: int):
        self.fft_size = fft_size
        self.hop = hop
        self.num_channels = num_channels
        self.window = hann_window(fft_size)
        self._buffer = np.zeros((0, num_channels))
        self._consumed = 0  # samples dropped from the left of the buffer
        self.frames_emitted = 0

    def push(self, samples: np.ndarray):
        """Append samples (num_samples, channels); yield (index, spectrum) frames.

        Spectrum shape is (num_bins, channels).
        """
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        if samples.shape[1] != self.num_channels:
            raise ValueError("channel count mismatch")
        self._buffer = np.concatenate([self._buffer, samples], axis=0)
        out = []
        while True:
            start = self.frames_emitted * self.hop - self._consumed
            if start + self.fft_size > self._buffer.shape[0]:
                break
            chunk = self._buffer[start : start + self.fft_size]
            spec = np.fft.rfft(chunk * self.window[:, None], axis=0)
            out.append((self.frames_emitted, spec))
            self.frames_emitted += 1
        # Drop samples no future frame will touch.
        keep_from = self.frames_emitted * self.hop - self._consumed
        if keep_from > 0:
            self._buffer = self._buffer[keep_from:]
            self._consumed += keep_from
        return out

    def frame_time(self, frame_index: int, sample_rate: float) -> float:
        """Center time of a frame, in seconds."""
        return (frame_index * self.hop + self.fft_size / 2) / sample_rate


def frame_center_time(frame_index: int, hop: int, fft_size: int, sample_rate: float) -> float:
    return (frame_index * hop + fft_size / 2) / sample_rate
