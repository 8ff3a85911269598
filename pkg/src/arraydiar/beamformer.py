"""Fixed beamformer design and analysis for circular arrays.

The differential designs solve, per frequency bin, the minimum-norm
constrained problem

    h = R^H (R R^H)^{-1} c

where R stacks conjugated steering vectors at the constraint angles and c
holds the desired responses. Directional elements in R give the
directional-element design; substituting omnidirectional elements gives the
conventional differential baseline. Delay-and-sum is plain phase alignment.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .angles import wrap_angle, wrap_angles
from .geometry import (
    ArrayGeometry,
    ElementPattern,
    FrequencyGrid,
    constraint_matrix,
    steering_matrix,
    steering_vector,
)

COND_LIMIT = 1e12
RIDGE_SCALE = 1e-10
DI_GRID_POINTS = 360

SUPER_CARDIOID_ANGLES = (0.0, 3.0 * math.pi / 4.0, 5.0 * math.pi / 4.0)
SUPER_CARDIOID_VALUES = (1.0, 0.0, 0.0)


@dataclass(frozen=True)
class ConstraintSpec:
    """Constraint angles (relative to the look direction) and target responses."""

    angles: tuple[float, ...]
    values: tuple[complex, ...]

    def __post_init__(self):
        if len(self.angles) != len(self.values):
            raise ValueError("angles and values must have equal length")
        if len(self.angles) == 0:
            raise ValueError("need at least one constraint")

    @classmethod
    def super_cardioid(cls) -> "ConstraintSpec":
        """Unit look response with nulls at look+3pi/4 and look+5pi/4."""
        return cls(angles=SUPER_CARDIOID_ANGLES, values=SUPER_CARDIOID_VALUES)

    @classmethod
    def distortionless(cls) -> "ConstraintSpec":
        return cls(angles=(0.0,), values=(1.0,))

    def absolute_angles(self, look_direction: float) -> np.ndarray:
        return wrap_angles(np.asarray(self.angles, dtype=float) + look_direction)


@dataclass(frozen=True)
class Beamformer:
    """Per-bin complex weights plus the design metadata needed for analysis.

    `flagged_bins` maps bin index -> reason ("dc" or "ill_conditioned") for
    bins where the differential solve was replaced or regularized.
    """

    look_direction: float
    weights: np.ndarray = field(repr=False)
    geometry: ArrayGeometry = field(repr=False)
    freq_grid: FrequencyGrid
    design_kind: str
    flagged_bins: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.weights.shape != (self.freq_grid.num_bins, self.geometry.num_elements):
            raise ValueError("weights must be (num_bins, num_elements)")
        object.__setattr__(self, "look_direction", wrap_angle(self.look_direction))
        self.weights.setflags(write=False)

    @property
    def num_bins(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class BeamBank:
    """Beamformers with look directions uniformly covering the circle."""

    beams: tuple[Beamformer, ...]

    def __post_init__(self):
        b = len(self.beams)
        for i, beam in enumerate(self.beams):
            expected = 2.0 * math.pi * i / b
            if abs(wrap_angle(beam.look_direction - expected)) > 1e-9:
                raise ValueError(f"beam {i} look direction is not uniform")

    @property
    def num_beams(self) -> int:
        return len(self.beams)

    @property
    def look_directions(self) -> np.ndarray:
        return np.array([b.look_direction for b in self.beams])

    def weight_tensor(self) -> np.ndarray:
        """Stacked weights, shape (num_beams, num_bins, M)."""
        return np.stack([b.weights for b in self.beams])

    def nearest_beam_index(self, theta: float) -> int:
        spacing = 2.0 * math.pi / self.num_beams
        return int(round(wrap_angle(theta) / spacing)) % self.num_beams


def _dc_fallback(geometry: ArrayGeometry, look_direction: float) -> np.ndarray:
    """Delay-and-sum weights used for the DC bin of differential designs."""
    d = steering_vector(geometry.with_pattern(ElementPattern.omni()), 0.0, look_direction)
    return d / geometry.num_elements


def _design_differential(
    geometry: ArrayGeometry,
    freq_grid: FrequencyGrid,
    look_direction: float,
    constraints: ConstraintSpec,
    design_kind: str,
) -> Beamformer:
    m = geometry.num_elements
    n = len(constraints.angles)
    if n > m:
        raise ValueError(f"more constraints ({n}) than elements ({m})")
    angles = constraints.absolute_angles(look_direction)
    # Validates distinctness once; per-bin rows reuse the same angles.
    constraint_matrix(geometry, 1.0, angles)

    omegas = freq_grid.bin_omegas
    c = np.asarray(constraints.values, dtype=complex)
    d = steering_matrix(geometry, omegas, angles)  # (K, N, M)
    r = np.conj(d)
    gram = np.einsum("knm,kpm->knp", r, d)  # R R^H, (K, N, N)

    singvals = np.linalg.svd(gram, compute_uv=False)
    with np.errstate(divide="ignore"):
        cond = singvals[:, 0] / singvals[:, -1]
    cond = np.where(np.isfinite(cond), cond, np.inf)

    flagged: dict[int, str] = {}
    weights = np.zeros((freq_grid.num_bins, m), dtype=complex)
    ridge = RIDGE_SCALE * np.einsum("kii->k", gram).real / n

    for k in range(freq_grid.num_bins):
        if omegas[k] == 0.0:
            weights[k] = _dc_fallback(geometry, look_direction)
            flagged[k] = "dc"
            continue
        g = gram[k]
        if cond[k] > COND_LIMIT:
            g = g + ridge[k] * np.eye(n)
            flagged[k] = "ill_conditioned"
        y = np.linalg.solve(g, c)
        weights[k] = r[k].conj().T @ y  # R^H y

    return Beamformer(
        look_direction=look_direction,
        weights=weights,
        geometry=geometry,
        freq_grid=freq_grid,
        design_kind=design_kind,
        flagged_bins=flagged,
    )


def design_cddma(
    geometry: ArrayGeometry,
    freq_grid: FrequencyGrid,
    look_direction: float,
    constraints: ConstraintSpec,
) -> Beamformer:
    """Differential design on the geometry's own (directional) elements."""
    return _design_differential(geometry, freq_grid, look_direction, constraints, "cddma")


def design_cdma(
    geometry: ArrayGeometry,
    freq_grid: FrequencyGrid,
    look_direction: float,
    constraints: ConstraintSpec,
) -> Beamformer:
    """Conventional differential baseline: same solve with omni elements."""
    omni = geometry.with_pattern(ElementPattern.omni())
    return _design_differential(omni, freq_grid, look_direction, constraints, "cdma")


def design_delay_and_sum(
    geometry: ArrayGeometry, freq_grid: FrequencyGrid, look_direction: float
) -> Beamformer:
    """Pure phase alignment over omni gains, unit response toward look."""
    omni = geometry.with_pattern(ElementPattern.omni())
    d = steering_matrix(omni, freq_grid.bin_omegas, [look_direction])[:, 0, :]
    return Beamformer(
        look_direction=look_direction,
        weights=d / geometry.num_elements,
        geometry=omni,
        freq_grid=freq_grid,
        design_kind="delay_and_sum",
    )


def beampattern(beam: Beamformer, theta_grid) -> np.ndarray:
    """Array response per (bin, angle): conj(d(omega, theta)) . h(omega).

    Shares the constraint-row convention, so the pattern at a constraint
    angle equals the constraint value exactly.
    """
    thetas = np.atleast_1d(np.asarray(theta_grid, dtype=float))
    if thetas.size == 0:
        raise ValueError("theta_grid must be non-empty")
    d = steering_matrix(beam.geometry, beam.freq_grid.bin_omegas, thetas)
    return np.einsum("kgm,km->kg", np.conj(d), beam.weights)


def response_at(beam: Beamformer, bin_index: int, theta: float) -> complex:
    d = steering_vector(
        beam.geometry, beam.freq_grid.bin_omegas[bin_index], theta
    )
    return complex(np.vdot(d, beam.weights[bin_index]))


def white_noise_gain(beam: Beamformer, bin_index: int) -> float:
    """10 log10 of look-response power over weight energy, in dB."""
    h = beam.weights[bin_index]
    r = response_at(beam, bin_index, beam.look_direction)
    return 10.0 * math.log10(abs(r) ** 2 / float(np.vdot(h, h).real))


def directivity_index(
    beam: Beamformer, bin_index: int, grid_points: int = DI_GRID_POINTS
) -> float:
    """Look-response power over the 2-D diffuse-field average, in dB."""
    thetas = 2.0 * math.pi * np.arange(grid_points) / grid_points
    d = steering_matrix(
        beam.geometry, [beam.freq_grid.bin_omegas[bin_index]], thetas
    )[0]
    resp = np.conj(d) @ beam.weights[bin_index]
    mean_power = float(np.mean(np.abs(resp) ** 2))
    r_look = response_at(beam, bin_index, beam.look_direction)
    return 10.0 * math.log10(abs(r_look) ** 2 / mean_power)


def wng_curve(beam: Beamformer) -> np.ndarray:
    """White noise gain in dB at every bin."""
    h = beam.weights
    d = steering_matrix(
        beam.geometry, beam.freq_grid.bin_omegas, [beam.look_direction]
    )[:, 0, :]
    resp = np.einsum("km,km->k", np.conj(d), h)
    energy = np.einsum("km,km->k", np.conj(h), h).real
    return 10.0 * np.log10(np.abs(resp) ** 2 / energy)


def di_curve(beam: Beamformer, grid_points: int = DI_GRID_POINTS) -> np.ndarray:
    """Directivity index in dB at every bin."""
    thetas = 2.0 * math.pi * np.arange(grid_points) / grid_points
    d = steering_matrix(beam.geometry, beam.freq_grid.bin_omegas, thetas)
    resp = np.einsum("kgm,km->kg", np.conj(d), beam.weights)
    mean_power = np.mean(np.abs(resp) ** 2, axis=1)
    d_look = steering_matrix(
        beam.geometry, beam.freq_grid.bin_omegas, [beam.look_direction]
    )[:, 0, :]
    look_power = np.abs(np.einsum("km,km->k", np.conj(d_look), beam.weights)) ** 2
    return 10.0 * np.log10(look_power / mean_power)


def constraint_residual(beam: Beamformer, constraints: ConstraintSpec) -> np.ndarray:
    """Max-norm residual |R h - c| per bin for the beam's own constraints."""
    angles = constraints.absolute_angles(beam.look_direction)
    c = np.asarray(constraints.values, dtype=complex)
    d = steering_matrix(beam.geometry, beam.freq_grid.bin_omegas, angles)
    achieved = np.einsum("knm,km->kn", np.conj(d), beam.weights)
    return np.max(np.abs(achieved - c), axis=1)


def build_beam_bank(
    geometry: ArrayGeometry,
    freq_grid: FrequencyGrid,
    num_beams: int,
    constraints_template: ConstraintSpec | None = None,
) -> BeamBank:
    """One differential design per uniformly spaced look direction."""
    if num_beams < 2:
        raise ValueError("num_beams must be at least 2")
    template = constraints_template or ConstraintSpec.super_cardioid()
    beams = []
    for b in range(num_beams):
        look = 2.0 * math.pi * b / num_beams
        try:
            beams.append(design_cddma(geometry, freq_grid, look, template))
        except Exception as exc:
            raise type(exc)(f"beam {b} (look {look:.4f} rad): {exc}") from exc
    return BeamBank(beams=tuple(beams))


def save_beamformer(beam: Beamformer, bin_path, header_path=None) -> None:
    """Write weights as little-endian complex64 rows plus a JSON header."""
    bin_path = Path(bin_path)
    header_path = Path(header_path) if header_path else bin_path.with_suffix(".json")
    beam.weights.astype("<c8").tofile(bin_path)
    header = {
        "format": "complex64-le",
        "num_bins": beam.num_bins,
        "num_elements": beam.geometry.num_elements,
        "look_direction_rad": beam.look_direction,
        "design": beam.design_kind,
        "sample_rate": beam.freq_grid.sample_rate,
        "fft_size": beam.freq_grid.fft_size,
        "radius_m": beam.geometry.radius,
        "pattern_a": beam.geometry.element_pattern.a,
        "flagged_bins": {str(k): v for k, v in sorted(beam.flagged_bins.items())},
    }
    header_path.write_text(json.dumps(header, indent=2), encoding="utf-8")


def load_beamformer(bin_path, header_path=None) -> Beamformer:
    bin_path = Path(bin_path)
    header_path = Path(header_path) if header_path else bin_path.with_suffix(".json")
    header = json.loads(header_path.read_text(encoding="utf-8"))
    weights = np.fromfile(bin_path, dtype="<c8").astype(complex)
    weights = weights.reshape(header["num_bins"], header["num_elements"])
    geometry = ArrayGeometry.uniform_circular(
        num_elements=header["num_elements"],
        radius=header["radius_m"],
        pattern=ElementPattern(a=header["pattern_a"]),
    )
    grid = FrequencyGrid(sample_rate=header["sample_rate"], fft_size=header["fft_size"])
    return Beamformer(
        look_direction=header["look_direction_rad"],
        weights=weights,
        geometry=geometry,
        freq_grid=grid,
        design_kind=header["design"],
        flagged_bins={int(k): v for k, v in header["flagged_bins"].items()},
    )
