"""Binary pixel-map files and the line-delimited dataset manifest.

Image file layout (little-endian)::

    offset 0   4 bytes  magic "NPXM"
    offset 4   u8       format version (1)
    offset 5   u8       view tag (0 = XZ, 1 = YZ)
    offset 6   u32      width
    offset 10  u32      height
    offset 14  f32[width * height] intensities, row-major

The manifest holds one JSON object per line, one line per event.
"""
from __future__ import annotations

import json
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .events import CLASSES, GeneratorConfig, class_index, class_schedule, event_seed, sample_event
from .geometry import DetectorGeometry, DiffusionModel
from .render import VIEWS, NormSettings, PixelMap, calibrate_scale, project_grid, render_views
from .voxelize import smear_and_voxelize

MAGIC = b"NPXM"
VERSION = 1
HEADER = struct.Struct("<4sBBII")
MANIFEST = "manifest.jsonl"
METADATA = "dataset.json"
IMAGE_DIR = "images"


class FormatError(ValueError):
    """A data file does not follow the expected binary or text layout."""

    def __init__(self, path, offset, message):
        super().__init__(f"{path}: offset {offset}: {message}")
        self.path = str(path)
        self.offset = offset


def encode_pixelmap(pm: PixelMap) -> bytes:
    data = np.ascontiguousarray(pm.intensities, dtype="<f4")
    h, w = data.shape
    return HEADER.pack(MAGIC, VERSION, VIEWS.index(pm.view), w, h) + data.tobytes()


def write_pixelmap(path, pm: PixelMap):
    Path(path).write_bytes(encode_pixelmap(pm))


def decode_pixelmap(blob: bytes, path="<bytes>", raw_energy_total=0.0) -> PixelMap:
    if len(blob) < HEADER.size:
        raise FormatError(path, len(blob), f"truncated header ({len(blob)} < {HEADER.size} bytes)")
    magic, version, tag, w, h = HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise FormatError(path, 0, f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(path, 4, f"unsupported format version {version}")
    if tag >= len(VIEWS):
        raise FormatError(path, 5, f"unknown view tag {tag}")
    if w == 0 or h == 0:
        raise FormatError(path, 6, f"degenerate dimensions {w}x{h}")
    expected = HEADER.size + 4 * w * h
    if len(blob) != expected:
        raise FormatError(path, min(len(blob), expected),
                          f"payload holds {len(blob) - HEADER.size} bytes, "
                          f"{w}x{h} needs {4 * w * h}")
    img = np.frombuffer(blob, dtype="<f4", offset=HEADER.size).reshape(h, w).astype(np.float32)
    return PixelMap(VIEWS[tag], img, raw_energy_total)


def read_pixelmap(path, raw_energy_total=0.0) -> PixelMap:
    return decode_pixelmap(Path(path).read_bytes(), path, raw_energy_total)


@dataclass
class DatasetRecord:
    event_id: int
    truth_class: str
    neutrino_energy: float
    vertex: tuple
    seed: int
    norm_scale: float
    xz: PixelMap
    yz: PixelMap

    @property
    def label(self):
        return class_index(self.truth_class)

    def manifest_entry(self):
        return {
            "event_id": self.event_id,
            "class": self.truth_class,
            "neutrino_energy": self.neutrino_energy,
            "vertex": list(self.vertex),
            "files": {"XZ": image_name(self.event_id, "XZ"), "YZ": image_name(self.event_id, "YZ")},
            "raw_energy": {"XZ": self.xz.raw_energy_total, "YZ": self.yz.raw_energy_total},
            "norm_scale": self.norm_scale,
            "seed": self.seed,
        }


def image_name(event_id, view):
    return f"{IMAGE_DIR}/{int(event_id):07d}_{view.lower()}.npxm"


class Dataset:
    """In-memory view of a written dataset."""

    def __init__(self, records, metadata=None):
        self.records = list(records)
        self.metadata = metadata or {}

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    @property
    def X(self):
        return np.stack([np.stack([r.xz.intensities, r.yz.intensities]) for r in self.records])

    @property
    def y(self):
        return np.array([r.label for r in self.records], dtype=np.int64)

    @property
    def event_ids(self):
        return np.array([r.event_id for r in self.records], dtype=np.int64)

    def subset(self, indices):
        return Dataset([self.records[i] for i in indices], self.metadata)


class DatasetWriter:
    """Streams records to disk; manifest lines are appended in call order."""

    def __init__(self, path, metadata=None):
        self.path = Path(path)
        (self.path / IMAGE_DIR).mkdir(parents=True, exist_ok=True)
        self._manifest = open(self.path / MANIFEST, "w", encoding="utf-8", newline="\n")
        self.count = 0
        self.class_counts = {c: 0 for c in CLASSES}
        self.metadata = dict(metadata or {})

    def add(self, record: DatasetRecord):
        write_pixelmap(self.path / image_name(record.event_id, "XZ"), record.xz)
        write_pixelmap(self.path / image_name(record.event_id, "YZ"), record.yz)
        self._manifest.write(json.dumps(record.manifest_entry(), sort_keys=True) + "\n")
        self.count += 1
        self.class_counts[record.truth_class] += 1

    def close(self):
        self._manifest.close()
        summary = dict(self.metadata, n_events=self.count, class_counts=self.class_counts)
        (self.path / METADATA).write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
        return summary

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        if not self._manifest.closed:
            self.close()
        return False


def _record_from(event, pair, norm_scale):
    xz, yz = pair
    return DatasetRecord(event.event_id, event.truth_class, event.neutrino_energy,
                         tuple(event.vertex), event.seed, float(norm_scale), xz, yz)


def write_dataset(items, path, norm_scale, metadata=None):
    """Write (Event, (PixelMap XZ, PixelMap YZ)) pairs; returns the summary dict."""
    with DatasetWriter(path, dict(metadata or {}, norm_scale=float(norm_scale))) as writer:
        for event, pair in items:
            writer.add(_record_from(event, pair, norm_scale))
        return writer.close()


def iter_dataset(path):
    """Yield DatasetRecords one manifest line at a time."""
    path = Path(path)
    manifest = path / MANIFEST
    with open(manifest, encoding="utf-8") as fh:
        offset = 0
        for line in fh:
            try:
                entry = json.loads(line)
                files, raw = entry["files"], entry["raw_energy"]
                rec = DatasetRecord(
                    int(entry["event_id"]), entry["class"], entry["neutrino_energy"],
                    tuple(entry["vertex"]), int(entry["seed"]), entry["norm_scale"],
                    read_pixelmap(path / files["XZ"], raw["XZ"]),
                    read_pixelmap(path / files["YZ"], raw["YZ"]))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise FormatError(manifest, offset, f"malformed manifest record: {exc}") from exc
            offset += len(line.encode("utf-8"))
            yield rec


def read_dataset(path) -> Dataset:
    path = Path(path)
    meta_file = path / METADATA
    metadata = json.loads(meta_file.read_text()) if meta_file.exists() else {}
    return Dataset(iter_dataset(path), metadata)


# ---------------------------------------------------------------------------
# generation


@dataclass(frozen=True)
class GenerationPlan:
    seed: int
    n_events: int
    classes: tuple = CLASSES
    priors: tuple = (1.0, 1.0, 1.0)
    generator: GeneratorConfig = GeneratorConfig()
    geometry: DetectorGeometry = DetectorGeometry()
    diffusion: DiffusionModel = DiffusionModel()
    n_calibration: int = 1000
    percentile: float = 99.5

    def metadata(self):
        return {
            "seed": self.seed, "n_events": self.n_events, "classes": list(self.classes),
            "priors": list(self.priors), "generator": self.generator.to_dict(),
            "geometry": self.geometry.to_dict(),
            "diffusion": {"sigma_transverse_per_m": self.diffusion.sigma_transverse_per_m,
                          "sigma_longitudinal_per_m": self.diffusion.sigma_longitudinal_per_m},
            "n_calibration": self.n_calibration, "percentile": self.percentile,
        }


def _make_event(plan: GenerationPlan, stream, index, label):
    seed = event_seed(plan.seed, index, stream)
    return sample_event(seed, label, plan.generator, plan.geometry, event_id=index)


def _calibration_raw(args):
    plan, index, label = args
    ev = _make_event(plan, 1, index, label)
    grid = smear_and_voxelize((ev.positions, ev.energies), plan.diffusion, plan.geometry)
    return project_grid(grid, ev.vertex, plan.geometry)


def _render_one(args):
    plan, index, label, scale = args
    ev = _make_event(plan, 0, index, label)
    grid = smear_and_voxelize((ev.positions, ev.energies), plan.diffusion, plan.geometry)
    return ev, render_views(grid, ev.vertex, plan.geometry, NormSettings(scale, plan.percentile))


def _map(fn, items, threads):
    if threads <= 1:
        yield from map(fn, items)
        return
    with ProcessPoolExecutor(max_workers=threads) as pool:
        yield from pool.map(fn, items, chunksize=16)


def calibration_scale(plan: GenerationPlan, threads=1):
    """Intensity scale from a separate calibration stream of events."""
    labels = class_schedule(plan.n_calibration, plan.classes, plan.priors, plan.seed + 1)
    raws = []
    for pair in _map(_calibration_raw, [(plan, i, int(c)) for i, c in enumerate(labels)], threads):
        raws.extend(pair)
    return calibrate_scale(raws, plan.percentile)


def generate_dataset(plan: GenerationPlan, out, threads=1, scale=None):
    """Generate, render and write ``plan.n_events`` events; returns the summary.

    Event ``i`` draws from its own stream seeded by (seed, i), so the output
    does not depend on ``threads``.
    """
    if scale is None:
        scale = calibration_scale(plan, threads)
    labels = class_schedule(plan.n_events, plan.classes, plan.priors, plan.seed)
    jobs = ((plan, i, int(c), scale) for i, c in enumerate(labels))
    meta = plan.metadata()
    return write_dataset(_map(_render_one, jobs, threads), out, scale, meta)

