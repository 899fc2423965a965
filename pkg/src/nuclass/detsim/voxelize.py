from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .geometry import DetectorGeometry, DiffusionModel, DomainError, nearest_anode_distance

TRUNCATION = 4.0  # splat support in units of sigma


@dataclass
class VoxelGrid:
    """Sparse voxel energies: integer (ix, iy, iz) rows with positive energies."""

    indices: np.ndarray  # (K, 3) int64, sorted by linear index
    energies: np.ndarray  # (K,) float64, all > 0
    shape: tuple

    def __len__(self):
        return len(self.energies)

    def total(self):
        return float(self.energies.sum())

    def as_dict(self):
        return {tuple(i): e for i, e in zip(self.indices.tolist(), self.energies.tolist())}


def _axis_masses(mu, sigma, origin, pitch):
    """Per-deposit bin indices and normalized Gaussian masses along one axis."""
    lo_edge = mu - TRUNCATION * sigma
    hi_edge = mu + TRUNCATION * sigma
    lo = np.floor((lo_edge - origin) / pitch).astype(np.int64)
    hi = np.floor((hi_edge - origin) / pitch).astype(np.int64)
    width = int((hi - lo).max()) + 1 if len(mu) else 1
    bins = lo[:, None] + np.arange(width)
    valid = bins <= hi[:, None]
    left = np.maximum(origin + bins * pitch, lo_edge[:, None])
    right = np.minimum(origin + (bins + 1) * pitch, hi_edge[:, None])
    point = sigma == 0
    safe = np.where(point, 1.0, sigma)[:, None]
    mass = ndtr((right - mu[:, None]) / safe) - ndtr((left - mu[:, None]) / safe)
    mass = np.where(valid, np.maximum(mass, 0.0), 0.0)
    mass[point] = 0.0
    mass[point, 0] = 1.0
    mass /= mass.sum(axis=1, keepdims=True)
    return bins, mass


def smear_and_voxelize(deposits, model: DiffusionModel | None = None,
                       geom: DetectorGeometry | None = None) -> VoxelGrid:
    """Spread each deposit over voxels with a drift-dependent Gaussian.

    Widths grow linearly with the distance ``d`` to the nearest anode:
    ``sigma_x = longitudinal * d`` along the drift axis and
    ``sigma_y = sigma_z = transverse * d``. Each splat is cut at ±4 sigma and
    renormalized, so interior deposits conserve energy exactly; mass that
    falls outside the detector is dropped.

    ``deposits`` is a sequence of EnergyDeposit or a ``(positions, energies)``
    pair of arrays.
    """
    model = model or DiffusionModel()
    geom = geom or DetectorGeometry()
    if isinstance(deposits, tuple) and len(deposits) == 2 and hasattr(deposits[0], "shape"):
        pos, en = deposits
        pos = np.asarray(pos, dtype=np.float64).reshape(-1, 3)
        en = np.asarray(en, dtype=np.float64).reshape(-1)
    else:
        deposits = list(deposits)
        pos = np.array([(d.x, d.y, d.z) for d in deposits], dtype=np.float64).reshape(-1, 3)
        en = np.array([d.energy for d in deposits], dtype=np.float64)
    if len(pos) != len(en):
        raise ValueError(f"{len(pos)} positions but {len(en)} energies")
    if np.any(en < 0):
        raise DomainError("deposit energies must be nonnegative")
    if not np.all(geom.contains(pos)) and len(pos):
        raise DomainError("deposit outside detector extents")
    shape = geom.voxel_counts
    keep = en > 0
    pos, en = pos[keep], en[keep]
    if len(en) == 0:
        return VoxelGrid(np.zeros((0, 3), np.int64), np.zeros(0), shape)

    d = nearest_anode_distance(pos[:, 0], geom)
    sig_l = model.sigma_longitudinal_per_m * d / 1000.0
    sig_t = model.sigma_transverse_per_m * d / 1000.0
    origin = geom.origin
    pitch = geom.voxel_pitch_m
    bx, mx = _axis_masses(pos[:, 0], sig_l, origin[0], pitch[0])
    by, my = _axis_masses(pos[:, 1], sig_t, origin[1], pitch[1])
    bz, mz = _axis_masses(pos[:, 2], sig_t, origin[2], pitch[2])

    w = (en[:, None, None, None] * mx[:, :, None, None]
         * my[:, None, :, None] * mz[:, None, None, :])
    ix = np.broadcast_to(bx[:, :, None, None], w.shape)
    iy = np.broadcast_to(by[:, None, :, None], w.shape)
    iz = np.broadcast_to(bz[:, None, None, :], w.shape)
    nx, ny, nz = shape
    ok = ((w > 0) & (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny) & (iz >= 0) & (iz < nz))
    lin = (ix[ok] * ny + iy[ok]) * nz + iz[ok]
    uniq, inv = np.unique(lin, return_inverse=True)
    energy = np.bincount(inv, weights=w[ok], minlength=len(uniq))
    positive = energy > 0
    uniq, energy = uniq[positive], energy[positive]
    idx = np.stack([uniq // (ny * nz), (uniq // nz) % ny, uniq % nz], axis=1)
    return VoxelGrid(idx.astype(np.int64), energy, shape)
