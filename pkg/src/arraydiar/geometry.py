"""Uniform circular arrays of directional elements: patterns, steering, constraints.

The propagation model is 2-D (azimuth only, far field), with the array
center as phase reference. A plane wave from direction theta reaches
element m with phase advance (omega * radius / c) * cos(theta - azimuth_m),
scaled by the element's directional gain toward theta.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .angles import wrap_angle, wrap_angles
from .errors import DuplicateConstraintAngle

SPEED_OF_SOUND = 343.0


@dataclass(frozen=True)
class ElementPattern:
    """First-order directional response a + (1-a)*cos(psi), a in [0, 1].

    a=1 is omnidirectional, a=0.5 the classic cardioid.
    """

    a: float

    def __post_init__(self):
        if not 0.0 <= self.a <= 1.0:
            raise ValueError(f"pattern parameter a={self.a} outside [0, 1]")

    @classmethod
    def omni(cls) -> "ElementPattern":
        return cls(a=1.0)

    @classmethod
    def cardioid(cls) -> "ElementPattern":
        return cls(a=0.5)

    def response(self, relative_angle) -> np.ndarray | float:
        """Gain toward a direction `relative_angle` off the element axis."""
        return self.a + (1.0 - self.a) * np.cos(relative_angle)


def element_response(pattern: ElementPattern, relative_angle: float) -> float:
    """Directional gain of one element; 1.0 on axis, 2*pi-periodic."""
    return float(pattern.response(relative_angle))


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform circular array of M outward-pointing directional elements."""

    num_elements: int
    radius: float
    element_azimuths: np.ndarray = field(repr=False)
    element_orientations: np.ndarray = field(repr=False)
    element_pattern: ElementPattern = field(default_factory=ElementPattern.omni)
    speed_of_sound: float = SPEED_OF_SOUND

    def __post_init__(self):
        if self.num_elements < 2:
            raise ValueError("need at least 2 elements")
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        az = np.asarray(self.element_azimuths, dtype=float)
        orient = np.asarray(self.element_orientations, dtype=float)
        if az.shape != (self.num_elements,) or orient.shape != (self.num_elements,):
            raise ValueError("azimuth/orientation length must equal num_elements")
        object.__setattr__(self, "element_azimuths", wrap_angles(az))
        object.__setattr__(self, "element_orientations", wrap_angles(orient))
        self.element_azimuths.setflags(write=False)
        self.element_orientations.setflags(write=False)

    @classmethod
    def uniform_circular(
        cls,
        num_elements: int,
        radius: float,
        pattern: ElementPattern | None = None,
        speed_of_sound: float = SPEED_OF_SOUND,
    ) -> "ArrayGeometry":
        """Standard constructor: azimuths 2*pi*m/M, orientations outward."""
        az = 2.0 * math.pi * np.arange(num_elements) / num_elements
        return cls(
            num_elements=num_elements,
            radius=radius,
            element_azimuths=az,
            element_orientations=az.copy(),
            element_pattern=pattern or ElementPattern.omni(),
            speed_of_sound=speed_of_sound,
        )

    def with_pattern(self, pattern: ElementPattern) -> "ArrayGeometry":
        return ArrayGeometry(
            num_elements=self.num_elements,
            radius=self.radius,
            element_azimuths=self.element_azimuths.copy(),
            element_orientations=self.element_orientations.copy(),
            element_pattern=pattern,
            speed_of_sound=self.speed_of_sound,
        )


@dataclass(frozen=True)
class FrequencyGrid:
    """One-sided FFT bin frequencies: bin k sits at k * sample_rate / fft_size."""

    sample_rate: float
    fft_size: int

    def __post_init__(self):
        if self.fft_size <= 0 or self.fft_size % 2 != 0:
            raise ValueError("fft_size must be a positive even integer")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def num_bins(self) -> int:
        return self.fft_size // 2 + 1

    @property
    def bin_frequencies(self) -> np.ndarray:
        return np.arange(self.num_bins) * self.sample_rate / self.fft_size

    @property
    def bin_omegas(self) -> np.ndarray:
        return 2.0 * math.pi * self.bin_frequencies

    def band_bins(self, f_lo: float, f_hi: float) -> np.ndarray:
        """Indices of bins whose center frequency lies in [f_lo, f_hi]."""
        f = self.bin_frequencies
        return np.flatnonzero((f >= f_lo) & (f <= f_hi))


def steering_vector(geometry: ArrayGeometry, omega: float, theta: float) -> np.ndarray:
    """Far-field steering vector at angular frequency omega toward theta.

    Component m is the element gain toward theta times the unit-modulus
    plane-wave phase term relative to the array center.
    """
    if omega < 0:
        raise ValueError("omega must be non-negative")
    theta = wrap_angle(theta)
    gains = geometry.element_pattern.response(theta - geometry.element_orientations)
    phase = (omega * geometry.radius / geometry.speed_of_sound) * np.cos(
        theta - geometry.element_azimuths
    )
    return gains * np.exp(1j * phase)


def steering_matrix(
    geometry: ArrayGeometry, omegas: np.ndarray, thetas: np.ndarray
) -> np.ndarray:
    """Steering vectors for every (omega, theta) pair, shape (len(omegas), len(thetas), M)."""
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    thetas = wrap_angles(np.atleast_1d(thetas))
    gains = geometry.element_pattern.response(
        thetas[:, None] - geometry.element_orientations[None, :]
    )
    cosines = np.cos(thetas[:, None] - geometry.element_azimuths[None, :])
    tau = geometry.radius / geometry.speed_of_sound
    phase = omegas[:, None, None] * tau * cosines[None, :, :]
    return gains[None, :, :] * np.exp(1j * phase)


def constraint_matrix(
    geometry: ArrayGeometry, omega: float, constraint_angles
) -> np.ndarray:
    """Constraint rows: row k is the conjugated steering vector at angle k.

    With this convention (R @ h)[k] is the beamformer response toward
    constraint angle k, so a design solves R @ h = c directly.
    """
    angles = wrap_angles(np.atleast_1d(constraint_angles))
    n = len(angles)
    if not 1 <= n <= geometry.num_elements:
        raise ValueError(f"need 1 <= N <= M constraint angles, got N={n}")
    for i in range(n):
        for j in range(i + 1, n):
            d = abs(angles[i] - angles[j]) % (2.0 * math.pi)
            if min(d, 2.0 * math.pi - d) < 1e-9:
                raise DuplicateConstraintAngle(
                    f"constraint angles {i} and {j} coincide ({angles[i]:.6f} rad)"
                )
    rows = [np.conj(steering_vector(geometry, omega, t)) for t in angles]
    return np.vstack(rows)


def load_geometry(source) -> tuple[ArrayGeometry, float]:
    """Load (geometry, sample_rate) from a JSON config file, dict, or path.

    Expected keys: elements, diameter_m, pattern ("omni" | "cardioid" | float a),
    sample_rate.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    else:
        cfg = dict(source)
    pattern = parse_pattern(cfg.get("pattern", "omni"))
    geometry = ArrayGeometry.uniform_circular(
        num_elements=int(cfg["elements"]),
        radius=float(cfg["diameter_m"]) / 2.0,
        pattern=pattern,
        speed_of_sound=float(cfg.get("speed_of_sound", SPEED_OF_SOUND)),
    )
    return geometry, float(cfg.get("sample_rate", 16000))


def parse_pattern(value) -> ElementPattern:
    if isinstance(value, str):
        name = value.lower()
        if name == "omni":
            return ElementPattern.omni()
        if name == "cardioid":
            return ElementPattern.cardioid()
        raise ValueError(f"unknown pattern name {value!r}")
    return ElementPattern(a=float(value))
