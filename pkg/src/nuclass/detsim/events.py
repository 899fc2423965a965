"""Parametric toy neutrino event generator.

Three topologies stand in for full neutrino-interaction and particle-transport
simulation: a muon-like straight track (NuMu CC), an electromagnetic shower
(NuE CC), and hadronic activity only (NC). Every class gets hadronic vertex
activity so the vertex itself carries no label information.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .geometry import DetectorGeometry, GeometryError

CLASSES = ("NuE_CC", "NuMu_CC", "NC")
CLASS_ALIASES = {"nue_cc": "NuE_CC", "numu_cc": "NuMu_CC", "nc": "NC"}


def class_index(name) -> int:
    if isinstance(name, (int, np.integer)):
        if not 0 <= int(name) < len(CLASSES):
            raise ValueError(f"class index {name} out of range")
        return int(name)
    key = CLASS_ALIASES.get(str(name).lower(), name)
    if key not in CLASSES:
        raise ValueError(f"unknown class {name!r}; expected one of {CLASSES}")
    return CLASSES.index(key)


def class_name(label) -> str:
    return CLASSES[class_index(label)]


@dataclass(frozen=True)
class EnergyDeposit:
    x: float
    y: float
    z: float
    energy: float


@dataclass
class Event:
    truth_class: str
    neutrino_energy: float
    vertex: tuple
    positions: np.ndarray  # (M, 3) meters
    energies: np.ndarray  # (M,) GeV
    event_id: int = 0
    seed: int = 0

    @property
    def label(self):
        return CLASSES.index(self.truth_class)

    @property
    def deposits(self):
        return [EnergyDeposit(*p, e) for p, e in zip(self.positions.tolist(), self.energies.tolist())]

    @property
    def deposited_energy(self):
        return float(self.energies.sum())


@dataclass(frozen=True)
class GeneratorConfig:
    energy_min: float = 0.5  # GeV
    energy_max: float = 10.0
    max_visible_fraction: float = 1.0
    vertex_margin_xy: float = 0.3  # m
    vertex_z_range: tuple = (-3.0, 0.0)
    step: float = 0.01  # m, track sampling step
    mip_dedx: float = 0.21  # GeV/m
    track_length: tuple = (1.0, 5.0)
    max_track_angle: float = 0.25  # rad from +z
    scatter_per_step: float = 0.004  # rad
    shower_points: int = 400
    radiation_length: float = 0.14  # m
    critical_energy: float = 0.032  # GeV
    shower_core: float = 0.03  # m
    shower_spread: float = 0.08  # lateral growth per meter of depth
    cc_inelasticity: tuple = (0.1, 0.6)
    nc_inelasticity: tuple = (0.2, 0.9)
    max_prongs: int = 5
    prong_length: tuple = (0.03, 0.4)
    prong_dedx: tuple = (0.2, 1.0)  # GeV/m
    blob_points: int = 20
    blob_sigma: float = 0.03
    blob_energy: tuple = (0.02, 0.2)  # GeV

    def __post_init__(self):
        if not 0 < self.energy_min < self.energy_max <= 10.0:
            raise GeometryError(f"need 0 < energy_min < energy_max <= 10 GeV, got "
                                f"{self.energy_min}, {self.energy_max}")
        if not 0 < self.max_visible_fraction <= 1.0:
            raise GeometryError("max_visible_fraction must lie in (0, 1]")

    def to_dict(self):
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v)
                for f in fields(self)}

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise GeometryError(f"unknown generator keys: {sorted(unknown)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


def _unit(theta, phi):
    return np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])


def _walk(rng, start, direction, length, step, scatter, inside):
    """Positions along a scattered line, stopping at the detector boundary."""
    n = max(1, int(round(length / step)))
    kicks = rng.normal(0.0, scatter, size=(n, 3)) if scatter > 0 else np.zeros((n, 3))
    dirs = np.asarray(direction, dtype=float) + np.cumsum(kicks, axis=0)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    pts = np.asarray(start, dtype=float) + step * np.cumsum(dirs, axis=0)
    keep = inside(pts)
    # truncate at the first exit, a track does not re-enter
    if not keep.all():
        pts = pts[: int(np.argmin(keep))]
    return pts


def _track(rng, vertex, cfg, inside):
    length = rng.uniform(*cfg.track_length)
    theta = cfg.max_track_angle * np.sqrt(rng.random())
    direction = _unit(theta, rng.uniform(0, 2 * np.pi))
    pts = _walk(rng, vertex, direction, length, cfg.step, cfg.scatter_per_step, inside)
    return pts, np.full(len(pts), cfg.mip_dedx * cfg.step)


def _shower(rng, vertex, energy, cfg, inside):
    theta = cfg.max_track_angle * np.sqrt(rng.random())
    axis = _unit(theta, rng.uniform(0, 2 * np.pi))
    # longitudinal gamma profile with its peak at ln(E/Ec) - 0.5 radiation lengths
    b = 0.5
    t_max = max(np.log(max(energy, 1e-6) / cfg.critical_energy) - 0.5, 0.0)
    a = b * t_max + 1.0
    depth = rng.gamma(a, 1.0 / b, size=cfg.shower_points) * cfg.radiation_length
    sigma_r = cfg.shower_core + cfg.shower_spread * depth
    helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(axis, helper)
    u /= np.linalg.norm(u)
    v = np.cross(axis, u)
    lateral = rng.normal(size=(cfg.shower_points, 2)) * sigma_r[:, None]
    pts = (np.asarray(vertex) + depth[:, None] * axis + lateral[:, :1] * u + lateral[:, 1:] * v)
    pts = pts[inside(pts)]
    return pts, np.full(len(pts), energy / cfg.shower_points)


def _hadronic(rng, vertex, energy, cfg, inside):
    """Short prongs at proton-like dE/dx plus a diffuse vertex blob.

    Whatever the prongs and blob do not use is treated as invisible
    (neutrons, binding energy).
    """
    n_prongs = min(1 + rng.poisson(1.5), cfg.max_prongs)
    chunks, energies = [], []
    budget = energy
    for _ in range(n_prongs):
        cos_t = rng.uniform(-0.3, 1.0)
        direction = _unit(np.arccos(cos_t), rng.uniform(0, 2 * np.pi))
        length = rng.uniform(*cfg.prong_length)
        dedx = rng.uniform(*cfg.prong_dedx)
        pts = _walk(rng, vertex, direction, length, cfg.step, 2 * cfg.scatter_per_step, inside)
        e = np.full(len(pts), dedx * cfg.step)
        e = e[np.cumsum(e) <= budget]
        pts = pts[: len(e)]
        budget -= e.sum()
        chunks.append(pts)
        energies.append(e)
    blob = np.asarray(vertex) + rng.normal(0.0, cfg.blob_sigma, size=(cfg.blob_points, 3))
    blob = blob[inside(blob)]
    blob_energy = min(budget, rng.uniform(*cfg.blob_energy))
    chunks.append(blob)
    energies.append(np.full(len(blob), blob_energy / max(len(blob), 1)))
    return np.concatenate(chunks), np.concatenate(energies)


def sample_event(seed, truth_class, config: GeneratorConfig | None = None,
                 geom: DetectorGeometry | None = None, event_id=0) -> Event:
    """Draw one event; identical (seed, class, config, geometry) gives an identical event."""
    config = config or GeneratorConfig()
    geom = geom or DetectorGeometry()
    name = class_name(truth_class)
    lo_z, hi_z = config.vertex_z_range
    half = geom.extents / 2
    margin = config.vertex_margin_xy
    if (margin >= half[0] or margin >= half[1] or lo_z < -half[2] or hi_z > half[2] or lo_z > hi_z):
        raise GeometryError("vertex sampling region does not fit inside the detector")

    rng = np.random.default_rng(int(seed))
    e_nu = rng.uniform(config.energy_min, config.energy_max)
    vertex = np.array([rng.uniform(-half[0] + margin, half[0] - margin),
                       rng.uniform(-half[1] + margin, half[1] - margin),
                       rng.uniform(lo_z, hi_z)])
    inside = geom.contains

    if name == "NC":
        y = rng.uniform(*config.nc_inelasticity)
        pos, en = _hadronic(rng, vertex, y * e_nu, config, inside)
    else:
        y = rng.uniform(*config.cc_inelasticity)
        if name == "NuMu_CC":
            lep_pos, lep_en = _track(rng, vertex, config, inside)
        else:
            lep_pos, lep_en = _shower(rng, vertex, (1.0 - y) * e_nu, config, inside)
        had_pos, had_en = _hadronic(rng, vertex, y * e_nu, config, inside)
        pos = np.concatenate([lep_pos, had_pos])
        en = np.concatenate([lep_en, had_en])

    budget = config.max_visible_fraction * e_nu
    total = en.sum()
    if total > budget:
        en = en * (budget / total)
    return Event(truth_class=name, neutrino_energy=float(e_nu), vertex=tuple(vertex.tolist()),
                 positions=np.ascontiguousarray(pos, dtype=np.float64),
                 energies=np.ascontiguousarray(en, dtype=np.float64),
                 event_id=int(event_id), seed=int(seed))


def event_seed(global_seed, index, stream=0) -> int:
    """64-bit per-event seed derived from (global seed, stream, index)."""
    ss = np.random.SeedSequence([int(global_seed), int(stream), int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def apportion(total, weights):
    """Integer counts summing to ``total``, proportional to ``weights`` (largest remainder)."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or np.any(w < 0) or w.sum() <= 0:
        raise ValueError(f"weights must be nonnegative with a positive sum, got {weights}")
    quota = total * w / w.sum()
    counts = np.floor(quota).astype(int)
    order = np.argsort(-(quota - counts), kind="stable")
    counts[order[: total - counts.sum()]] += 1
    return counts


def class_schedule(n_events, classes, priors, global_seed):
    """Truth class for every event index: exact prior counts, deterministically permuted."""
    counts = apportion(n_events, priors)
    labels = np.repeat([class_index(c) for c in classes], counts)
    rng = np.random.default_rng(np.random.SeedSequence([int(global_seed), 7]))
    return labels[rng.permutation(n_events)]
