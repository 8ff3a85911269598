"""Free-field multichannel scene synthesis with controlled ground truth.

Sources at fixed angles play bursts of speech-shaped noise (or supplied
audio) in a documented schedule; gaps between consecutive utterances of
distinct sources are the interims that segmentation is scored against.
Rendering is anechoic: each mono burst is steered to all channels per STFT
bin, then spatially diffuse noise is mixed at a calibrated SNR.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import butter, lfilter

from .angles import wrap_angle
from .errors import ScheduleOverlap
from .geometry import ArrayGeometry, FrequencyGrid, load_geometry, steering_matrix
from .stft import istft, stft

RENDER_FFT = 512
RENDER_HOP = 128  # 75% overlap
DIFFUSE_DIRECTIONS = 36
NOISE_KINDS = ("white", "fan", "knock", "keyboard", "chair")


@dataclass(frozen=True)
class Utterance:
    speaker_id: int
    start_s: float
    end_s: float
    angle: float


@dataclass(frozen=True)
class Interim:
    start_s: float
    end_s: float

    @property
    def duration(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True)
class GroundTruth:
    utterances: tuple[Utterance, ...]
    interims: tuple[Interim, ...]
    noise_kind: str

    def to_dict(self) -> dict:
        return {
            "utterances": [
                {
                    "speaker_id": u.speaker_id,
                    "start_s": u.start_s,
                    "end_s": u.end_s,
                    "angle_deg": math.degrees(u.angle),
                }
                for u in self.utterances
            ],
            "interims": [{"start_s": i.start_s, "end_s": i.end_s} for i in self.interims],
            "noise_kind": self.noise_kind,
        }


@dataclass
class SceneConfig:
    geometry: ArrayGeometry
    sources: list[dict]  # {"angle": rad, "level_db": float}
    schedule: list[dict]  # {"source_index": int, "start_s": float, "end_s": float}
    noise_kind: str = "white"
    snr_db: float = 20.0
    noise_level_db: float = -30.0  # used when the schedule is empty
    sample_rate: float = 16000.0
    duration_s: float | None = None
    seed: int = 0
    allow_overlap: bool = False
    source_files: dict[int, np.ndarray] = field(default_factory=dict)


@dataclass(frozen=True)
class NoiseTrack:
    kind: str
    samples: np.ndarray
    events: tuple[float, ...]


def round_robin_schedule(
    num_sources: int,
    utterance_s: float,
    interim_s: float,
    num_utterances: int,
    lead_in_s: float = 1.0,
) -> list[dict]:
    """Sources take strictly alternating turns separated by exact interims."""
    schedule = []
    t = lead_in_s
    for i in range(num_utterances):
        schedule.append(
            {"source_index": i % num_sources, "start_s": t, "end_s": t + utterance_s}
        )
        t += utterance_s + interim_s
    return schedule


def _bandpass(signal: np.ndarray, sr: float, lo: float, hi: float, order: int = 2) -> np.ndarray:
    nyq = sr / 2.0
    b, a = butter(order, [lo / nyq, min(hi / nyq, 0.99)], btype="band")
    return lfilter(b, a, signal)


def speech_burst(duration_s: float, sample_rate: float, rng: np.random.Generator) -> np.ndarray:
    """Speech-shaped noise with syllabic 4 Hz amplitude modulation, unit RMS."""
    n = int(round(duration_s * sample_rate))
    noise = rng.standard_normal(n)
    shaped = _bandpass(noise, sample_rate, 120.0, 3800.0)
    t = np.arange(n) / sample_rate
    phase = rng.uniform(0.0, 2.0 * math.pi)
    envelope = 0.55 + 0.45 * np.sin(2.0 * math.pi * 4.0 * t + phase)
    # short fades keep utterance edges click-free
    ramp = min(n // 10, int(0.02 * sample_rate))
    if ramp > 0:
        fade = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
        envelope[:ramp] *= fade
        envelope[-ramp:] *= fade[::-1]
    out = shaped * envelope
    rms = float(np.sqrt(np.mean(out**2)))
    return out / max(rms, 1e-12)


def make_noise(kind: str, duration_s: float, sample_rate: float, seed: int) -> np.ndarray:
    return generate_noise(kind, duration_s, sample_rate, seed).samples


def generate_noise(kind: str, duration_s: float, sample_rate: float, seed: int) -> NoiseTrack:
    """Meeting-room noise surrogates, unit RMS, with an event log for sparse kinds."""
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate))
    t = np.arange(n) / sample_rate
    events: list[float] = []

    if kind == "white":
        out = rng.standard_normal(n)
    elif kind == "fan":
        b, a = butter(4, 500.0 / (sample_rate / 2.0), btype="low")
        base = lfilter(b, a, rng.standard_normal(n))
        wobble = 1.0 + 0.3 * np.sin(2.0 * math.pi * 0.3 * t + rng.uniform(0, 2 * math.pi))
        out = base * wobble
    elif kind == "knock":
        out = np.zeros(n)
        count = rng.poisson(0.5 * duration_s)
        times = np.sort(rng.uniform(0.0, max(duration_s - 0.1, 0.01), size=count))
        for t0 in times:
            events.append(float(t0))
            start = int(t0 * sample_rate)
            length = min(int(0.08 * sample_rate), n - start)
            if length <= 0:
                continue
            body = _bandpass(rng.standard_normal(length), sample_rate, 80.0, 1200.0)
            decay = np.exp(-np.arange(length) / (0.015 * sample_rate))
            out[start : start + length] += 8.0 * body * decay
    elif kind == "keyboard":
        out = np.zeros(n)
        count = rng.poisson(3.0 * duration_s)
        times = np.sort(rng.uniform(0.0, max(duration_s - 0.02, 0.01), size=count))
        for t0 in times:
            events.append(float(t0))
            start = int(t0 * sample_rate)
            length = min(int(rng.uniform(0.008, 0.018) * sample_rate), n - start)
            if length <= 0:
                continue
            click = _bandpass(rng.standard_normal(length), sample_rate, 2000.0, 6000.0)
            click *= np.hanning(length) if length > 2 else 1.0
            out[start : start + length] += 6.0 * click
    elif kind == "chair":
        out = np.zeros(n)
        count = max(1, rng.poisson(0.25 * duration_s))
        times = np.sort(rng.uniform(0.0, max(duration_s - 1.0, 0.01), size=count))
        for t0 in times:
            events.append(float(t0))
            start = int(t0 * sample_rate)
            length = min(int(rng.uniform(1.0, 2.0) * sample_rate), n - start)
            if length <= 2:
                continue
            swoosh = _bandpass(rng.standard_normal(length), sample_rate, 200.0, 2000.0)
            out[start : start + length] += 3.0 * swoosh * np.hanning(length)
    else:
        raise ValueError(f"unknown noise kind {kind!r}")

    rms = float(np.sqrt(np.mean(out**2)))
    if rms > 1e-12:
        out = out / rms
    return NoiseTrack(kind=kind, samples=out, events=tuple(events))


def _render_steered(
    mono: np.ndarray,
    geometry: ArrayGeometry,
    angle: float,
    sample_rate: float,
    extra_phase: np.ndarray | None = None,
) -> np.ndarray:
    """Steer a mono signal to all channels in the STFT domain; (n, M) output."""
    n = len(mono)
    padded = np.concatenate([np.zeros(RENDER_FFT), mono, np.zeros(2 * RENDER_FFT)])
    spec = stft(padded, RENDER_FFT, RENDER_HOP)  # (frames, bins)
    grid = FrequencyGrid(sample_rate=sample_rate, fft_size=RENDER_FFT)
    d = steering_matrix(geometry, grid.bin_omegas, [wrap_angle(angle)])[:, 0, :]  # (bins, M)
    if extra_phase is not None:
        spec = spec * extra_phase[None, :]
    out = np.empty((n, geometry.num_elements))
    for m in range(geometry.num_elements):
        chan = istft(spec * d[None, :, m], RENDER_FFT, RENDER_HOP, length=len(padded))
        out[:, m] = chan[RENDER_FFT : RENDER_FFT + n]
    return out


def diffuse_noise_render(
    mono: np.ndarray,
    geometry: ArrayGeometry,
    sample_rate: float,
    seed: int = 0,
    num_directions: int = DIFFUSE_DIRECTIONS,
) -> np.ndarray:
    """Spatialize noise as equal-power independent plane waves from a ring.

    Each direction gets an independent random all-pass (per-bin phase) copy
    of the input, so no single direction dominates the response spectrum.
    Scaling preserves the mono energy in the omnidirectional field.
    """
    n = len(mono)
    if n == 0 or not np.any(mono):
        return np.zeros((n, geometry.num_elements))
    rng = np.random.default_rng(seed)
    padded = np.concatenate([np.zeros(RENDER_FFT), mono, np.zeros(2 * RENDER_FFT)])
    spec = stft(padded, RENDER_FFT, RENDER_HOP)
    grid = FrequencyGrid(sample_rate=sample_rate, fft_size=RENDER_FFT)
    angles = 2.0 * math.pi * np.arange(num_directions) / num_directions
    d = steering_matrix(geometry, grid.bin_omegas, angles)  # (bins, dirs, M)
    num_bins = spec.shape[1]
    acc = np.zeros((spec.shape[0], num_bins, geometry.num_elements), dtype=complex)
    for k in range(num_directions):
        phases = np.exp(1j * rng.uniform(0.0, 2.0 * math.pi, size=num_bins))
        acc += (spec * phases[None, :])[:, :, None] * d[None, :, k, :]
    acc /= math.sqrt(num_directions)
    out = np.empty((n, geometry.num_elements))
    for m in range(geometry.num_elements):
        chan = istft(acc[:, :, m], RENDER_FFT, RENDER_HOP, length=len(padded))
        out[:, m] = chan[RENDER_FFT : RENDER_FFT + n]
    return out


def _validate_schedule(schedule: list[dict], allow_overlap: bool):
    ordered = sorted(schedule, key=lambda u: u["start_s"])
    for a, b in zip(ordered, ordered[1:]):
        if b["start_s"] < a["end_s"] - 1e-9 and not allow_overlap:
            raise ScheduleOverlap(
                f"utterances at {a['start_s']:.3f}s and {b['start_s']:.3f}s overlap"
            )
    return ordered


def _build_ground_truth(config: SceneConfig, ordered: list[dict]) -> GroundTruth:
    utterances = tuple(
        Utterance(
            speaker_id=u["source_index"],
            start_s=u["start_s"],
            end_s=u["end_s"],
            angle=wrap_angle(config.sources[u["source_index"]]["angle"]),
        )
        for u in ordered
    )
    interims = []
    for a, b in zip(utterances, utterances[1:]):
        if b.speaker_id != a.speaker_id and b.start_s > a.end_s + 1e-9:
            interims.append(Interim(start_s=a.end_s, end_s=b.start_s))
    return GroundTruth(
        utterances=utterances, interims=tuple(interims), noise_kind=config.noise_kind
    )


def synthesize(config: SceneConfig) -> tuple[np.ndarray, GroundTruth]:
    """Render the scene to (num_samples, M) float audio plus its ground truth."""
    ordered = _validate_schedule(config.schedule, config.allow_overlap)
    sr = config.sample_rate
    duration = config.duration_s
    if duration is None:
        duration = (max((u["end_s"] for u in ordered), default=0.0)) + 1.0
    n = int(round(duration * sr))
    rng = np.random.default_rng(config.seed)
    signal = np.zeros((n, config.geometry.num_elements))
    speech_mask = np.zeros(n, dtype=bool)

    for utt in ordered:
        src = config.sources[utt["source_index"]]
        start = int(round(utt["start_s"] * sr))
        stop = min(int(round(utt["end_s"] * sr)), n)
        if stop <= start:
            continue
        if utt["source_index"] in config.source_files:
            mono = np.asarray(config.source_files[utt["source_index"]], dtype=float)
            mono = mono[: stop - start]
            if len(mono) < stop - start:
                mono = np.pad(mono, (0, stop - start - len(mono)))
        else:
            mono = speech_burst((stop - start) / sr, sr, rng)[: stop - start]
        mono = mono * 10.0 ** (src.get("level_db", 0.0) / 20.0)
        rendered = _render_steered(mono, config.geometry, src["angle"], sr)
        signal[start:stop] += rendered[: stop - start]
        speech_mask[start:stop] = True

    truth = _build_ground_truth(config, ordered)

    track = generate_noise(config.noise_kind, duration, sr, config.seed + 1)
    noise = diffuse_noise_render(
        track.samples, config.geometry, sr, seed=config.seed + 2
    )
    if speech_mask.any() and np.any(noise):
        speech_power = float(np.mean(signal[speech_mask] ** 2))
        noise_power = float(np.mean(noise[speech_mask] ** 2))
        if noise_power > 0 and speech_power > 0:
            target = speech_power / 10.0 ** (config.snr_db / 10.0)
            noise = noise * math.sqrt(target / noise_power)
    else:
        rms = float(np.sqrt(np.mean(noise**2))) if np.any(noise) else 0.0
        if rms > 0:
            noise = noise * (10.0 ** (config.noise_level_db / 20.0) / rms)
    return signal + noise, truth


def scene_from_json(source, geometry: ArrayGeometry | None = None) -> SceneConfig:
    """Build a SceneConfig from a JSON file/dict; see README for the schema."""
    if isinstance(source, (str, Path)):
        cfg = json.loads(Path(source).read_text(encoding="utf-8"))
    else:
        cfg = dict(source)
    sample_rate = float(cfg.get("sample_rate", 16000))
    if geometry is None:
        geometry, sample_rate = load_geometry(cfg["geometry"])
    sources = [
        {"angle": math.radians(s["angle_deg"]), "level_db": s.get("level_db", 0.0)}
        for s in cfg["sources"]
    ]
    if "protocol" in cfg:
        proto = cfg["protocol"]
        schedule = round_robin_schedule(
            num_sources=len(sources),
            utterance_s=float(proto["utterance_s"]),
            interim_s=float(proto["interim_ms"]) / 1000.0,
            num_utterances=int(proto["num_utterances"]),
            lead_in_s=float(proto.get("lead_in_s", 1.0)),
        )
    else:
        schedule = [
            {
                "source_index": int(u["source"]),
                "start_s": float(u["start_s"]),
                "end_s": float(u["end_s"]),
            }
            for u in cfg["schedule"]
        ]
    noise = cfg.get("noise", {})
    return SceneConfig(
        geometry=geometry,
        sources=sources,
        schedule=schedule,
        noise_kind=noise.get("kind", "white"),
        snr_db=float(noise.get("snr_db", 20.0)),
        noise_level_db=float(noise.get("level_db", -30.0)),
        sample_rate=sample_rate,
        duration_s=cfg.get("duration_s"),
        seed=int(cfg.get("seed", 0)),
        allow_overlap=bool(cfg.get("allow_overlap", False)),
    )
