from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DomainError(ValueError):
    """A coordinate or parameter lies outside the detector's valid domain."""


class GeometryError(ValueError):
    """Detector geometry parameters are inconsistent."""


def _integer_ratio(num, den, what):
    r = num / den
    n = round(r)
    if n < 1 or abs(r - n) > 1e-9 * max(1.0, r):
        raise GeometryError(f"{what}: {num} is not an integer multiple of {den}")
    return int(n)


@dataclass(frozen=True)
class DetectorGeometry:
    """Modular LArTPC geometry.

    Extents and plane positions are in meters; voxel and pixel pitches in mm.
    The drift axis is x.
    """

    extent_x: float = 2.0
    extent_y: float = 2.0
    extent_z: float = 7.0
    anode_x: tuple = (-0.9, -0.3, 0.3, 0.9)
    cathode_x: tuple = (-0.6, 0.0, 0.6)
    voxel_pitch: tuple = (1.0, 5.0, 5.0)
    pixel_pitch: float = 50.0
    image_size: int = 64

    def __post_init__(self):
        object.__setattr__(self, "anode_x", tuple(float(a) for a in self.anode_x))
        object.__setattr__(self, "cathode_x", tuple(float(c) for c in self.cathode_x))
        object.__setattr__(self, "voxel_pitch", tuple(float(p) for p in self.voxel_pitch))
        extents = (self.extent_x, self.extent_y, self.extent_z)
        if min(extents) <= 0 or min(self.voxel_pitch) <= 0 or self.pixel_pitch <= 0:
            raise GeometryError("extents and pitches must be strictly positive")
        if len(self.voxel_pitch) != 3:
            raise GeometryError(f"voxel_pitch needs 3 entries, got {self.voxel_pitch}")
        if not isinstance(self.image_size, (int, np.integer)) or self.image_size < 1:
            raise GeometryError(f"image_size must be a positive integer, got {self.image_size}")
        if not self.anode_x:
            raise GeometryError("at least one anode plane is required")
        half = self.extent_x / 2
        for p in self.anode_x + self.cathode_x:
            if not -half < p < half:
                raise GeometryError(f"plane at x={p} m is not strictly inside ±{half} m")
        planes = sorted([(a, "A") for a in self.anode_x] + [(c, "C") for c in self.cathode_x])
        for (p0, k0), (p1, k1) in zip(planes, planes[1:]):
            if k0 == k1 or p0 == p1:
                raise GeometryError(f"anode/cathode planes must alternate; {k0}@{p0} then {k1}@{p1}")
        for ext, pitch, axis in zip(extents, self.voxel_pitch, "xyz"):
            _integer_ratio(ext * 1000.0, pitch, f"extent_{axis}")
            _integer_ratio(self.pixel_pitch, pitch, f"pixel_pitch vs voxel pitch d{axis}")

    @property
    def extents(self):
        return np.array([self.extent_x, self.extent_y, self.extent_z])

    @property
    def origin(self):
        """Lower detector corner in meters."""
        return -self.extents / 2

    @property
    def voxel_pitch_m(self):
        return np.array(self.voxel_pitch) / 1000.0

    @property
    def voxel_counts(self):
        return tuple(_integer_ratio(e * 1000.0, p, "extent")
                     for e, p in zip(self.extents, self.voxel_pitch))

    @property
    def voxels_per_pixel(self):
        return tuple(_integer_ratio(self.pixel_pitch, p, "pixel_pitch") for p in self.voxel_pitch)

    def contains(self, positions):
        pos = np.atleast_2d(positions)
        half = self.extents / 2
        return np.all(np.abs(pos) <= half, axis=1)

    def pixel_of(self, coord, axis):
        """Index of the pixel containing ``coord`` (meters) along ``axis``."""
        return int(np.floor((coord - self.origin[axis]) / (self.pixel_pitch / 1000.0)))

    def to_dict(self):
        return {
            "extent_x": self.extent_x, "extent_y": self.extent_y, "extent_z": self.extent_z,
            "anode_x": list(self.anode_x), "cathode_x": list(self.cathode_x),
            "voxel_pitch": list(self.voxel_pitch), "pixel_pitch": self.pixel_pitch,
            "image_size": int(self.image_size),
        }


@dataclass(frozen=True)
class DiffusionModel:
    """Gaussian smearing widths in mm per meter of drift to the nearest anode."""

    sigma_transverse_per_m: float = 1.3
    sigma_longitudinal_per_m: float = 0.9

    def __post_init__(self):
        if self.sigma_transverse_per_m < 0 or self.sigma_longitudinal_per_m < 0:
            raise GeometryError("diffusion coefficients must be nonnegative")


def nearest_anode_distance(x, geom: DetectorGeometry):
    """Distance (m) from ``x`` to the closest anode plane; vectorizes over arrays."""
    arr = np.asarray(x, dtype=np.float64)
    half = geom.extent_x / 2
    if np.any(np.abs(arr) > half) or not np.all(np.isfinite(arr)):
        raise DomainError(f"x outside detector drift range ±{half} m")
    anodes = np.asarray(geom.anode_x)
    d = np.min(np.abs(arr[..., None] - anodes), axis=-1)
    return float(d) if d.ndim == 0 else d
