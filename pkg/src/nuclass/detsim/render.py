from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .geometry import DetectorGeometry, DiffusionModel
from .voxelize import VoxelGrid, smear_and_voxelize

VIEWS = ("XZ", "YZ")


@dataclass
class PixelMap:
    view: str
    intensities: np.ndarray  # (height, width) float32 in [0, 1]; rows run along x or y, columns along z
    raw_energy_total: float = 0.0

    @property
    def width(self):
        return self.intensities.shape[1]

    @property
    def height(self):
        return self.intensities.shape[0]

    @property
    def image(self):
        return self.intensities


@dataclass(frozen=True)
class NormSettings:
    """intensity = min(1, pixel_energy / scale)."""

    scale: float
    percentile: float = 99.5

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"normalization scale must be positive, got {self.scale}")


def project_grid(grid: VoxelGrid, vertex, geom: DetectorGeometry):
    """Raw pixel energies of the XZ and YZ views in a vertex-centered window.

    Pixels come from integer voxel-to-pixel division, so every voxel lands
    in exactly one pixel; the window is zero-padded where it leaves the
    detector.
    """
    if len(grid) == 0:
        raise ValueError("cannot render an empty voxel grid")
    size = geom.image_size
    rx, ry, rz = geom.voxels_per_pixel
    px = grid.indices[:, 0] // rx
    py = grid.indices[:, 1] // ry
    pz = grid.indices[:, 2] // rz
    start = [geom.pixel_of(vertex[a], a) - size // 2 for a in range(3)]
    col = pz - start[2]
    out = []
    for rows in (px - start[0], py - start[1]):
        ok = (rows >= 0) & (rows < size) & (col >= 0) & (col < size)
        img = np.zeros(size * size)
        np.add.at(img, rows[ok] * size + col[ok], grid.energies[ok])
        out.append(img.reshape(size, size))
    return out[0], out[1]


def render_views(grid: VoxelGrid, vertex, geom: DetectorGeometry, norm: NormSettings):
    """(XZ, YZ) PixelMaps: projections normalized by ``norm.scale`` and clipped to 1."""
    raw = project_grid(grid, vertex, geom)
    maps = []
    for view, r in zip(VIEWS, raw):
        img = np.minimum(1.0, r / norm.scale).astype(np.float32)
        maps.append(PixelMap(view, img, float(r.sum())))
    return maps[0], maps[1]


def calibrate_scale(raw_views, percentile=99.5):
    """Percentile of nonzero raw pixel energies pooled over views and events."""
    vals = np.concatenate([np.ravel(r)[np.ravel(r) > 0] for r in raw_views])
    if len(vals) == 0:
        raise ValueError("calibration sample has no nonzero pixels")
    return float(np.percentile(vals, percentile))


def render_event(event, geom: DetectorGeometry, diffusion: DiffusionModel, norm: NormSettings):
    grid = smear_and_voxelize((event.positions, event.energies), diffusion, geom)
    return render_views(grid, event.vertex, geom, norm)


class EventRenderer(TransformerMixin, BaseEstimator):
    """Turn Events into (N, 2, S, S) float32 pixel-map pairs.

    ``fit`` picks the intensity scale as a percentile of nonzero pixel
    energies over the given events unless ``scale`` is fixed up front.
    """

    def __init__(self, geometry=None, diffusion=None, scale=None, percentile=99.5):
        self.geometry = geometry
        self.diffusion = diffusion
        self.scale = scale
        self.percentile = percentile

    def _parts(self):
        return self.geometry or DetectorGeometry(), self.diffusion or DiffusionModel()

    def fit(self, events, y=None):
        geom, diff = self._parts()
        if self.scale is not None:
            self.scale_ = float(self.scale)
        else:
            raws = []
            for ev in events:
                grid = smear_and_voxelize((ev.positions, ev.energies), diff, geom)
                raws.extend(project_grid(grid, ev.vertex, geom))
            self.scale_ = calibrate_scale(raws, self.percentile)
        self.norm_ = NormSettings(self.scale_, self.percentile)
        return self

    def render(self, event):
        check_is_fitted(self, "norm_")
        geom, diff = self._parts()
        return render_event(event, geom, diff, self.norm_)

    def transform(self, events):
        check_is_fitted(self, "norm_")
        pairs = [self.render(ev) for ev in events]
        return np.stack([np.stack([a.intensities, b.intensities]) for a, b in pairs])
