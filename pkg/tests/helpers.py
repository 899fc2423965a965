"""Measurement helpers shared by unit and acceptance tests."""
import numpy as np
from scipy.special import logsumexp

from nuclass.detsim import DetectorGeometry, DiffusionModel, smear_and_voxelize

# one anode far from a 1 m drift point, so the drift distance is exactly d
WIDE = DetectorGeometry(extent_x=4.0, extent_y=2.0, extent_z=2.0, anode_x=(-1.5,), cathode_x=(),
                        image_size=16)


def measured_sigmas(d=1.0, n=2000, seed=0, model=None, geom=WIDE):
    """Bin-variance-corrected splat widths (mm) along x, y, z for deposits at drift ``d``.

    Deposits sit at uniformly random sub-voxel offsets; for a Gaussian of
    width s binned with pitch h the expected weighted variance of voxel
    centres about the true position is s^2 + h^2 / 12.
    """
    model = model or DiffusionModel()
    rng = np.random.default_rng(seed)
    pitch = geom.voxel_pitch_m
    origin = geom.origin
    x0 = geom.anode_x[0] + d
    acc = np.zeros(3)
    for _ in range(n):
        pos = np.array([x0, 0.0, 0.0]) + (rng.random(3) - 0.5) * pitch
        grid = smear_and_voxelize((pos[None], np.array([1.0])), model, geom)
        centres = origin + (grid.indices + 0.5) * pitch
        w = grid.energies / grid.energies.sum()
        acc += (w[:, None] * (centres - pos) ** 2).sum(axis=0)
    var = acc / n - pitch ** 2 / 12
    return np.sqrt(var) * 1000.0


class TableProvider:
    """Deterministic pseudo-random distribution per context."""

    def __init__(self, vocab_size, seed, sharp=3.0):
        self.vocab_size = vocab_size
        self.seed = seed
        self.sharp = sharp

    def next_log_probs(self, context, images=None):
        rng = np.random.default_rng([self.seed, len(context), *context[-4:]])
        z = rng.normal(size=self.vocab_size) * self.sharp
        return z - logsumexp(z)


# PASS/FAIL lines collected by the acceptance suite, printed in the terminal summary
CRITERIA = []


def verdict(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    CRITERIA.append(line)
    print(line)
    assert ok, line
