"""Independent brute-force references used by the test suite.

Nothing here is called from the estimation pipeline; these functions provide
slow, obviously-correct answers (exhaustive search, direct rounding, central
differences) to check the fast paths against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Deployment, Region


@dataclass(frozen=True)
class GridSpec:
    """Uniform evaluation lattice over a region."""

    resolution: float
    region: Region

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")

    def points(self):
        """Lattice nodes in row-major order (y rows, x fastest)."""
        r = self.region
        xs = r.x_min + self.resolution * np.arange(
            int(np.floor((r.x_max - r.x_min) / self.resolution)) + 1)
        ys = r.y_min + self.resolution * np.arange(
            int(np.floor((r.y_max - r.y_min) / self.resolution)) + 1)
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel()])


def lattice_diff_distances(deployment: Deployment, grid: GridSpec) -> np.ndarray:
    """(N, |J|) differential distances of every lattice node; reusable across
    repeated grid searches on the same deployment."""
    pts = grid.points()
    ref = deployment.ap_positions[deployment.reference_index]
    d0 = np.linalg.norm(pts - ref, axis=1)
    dj = np.linalg.norm(pts[:, None, :] - deployment.ap_positions[list(deployment.j_set)][None, :, :], axis=2)
    return dj - d0[:, None]


def grid_search_position(dd_hat, deployment: Deployment, grid: GridSpec,
                         lattice_dd: np.ndarray | None = None):
    """Exhaustive cost minimization over the lattice.

    Returns (point, cost); ties resolve to the lowest row-major index.
    lattice_dd may carry precomputed lattice_diff_distances output.
    """
    pts = grid.points()
    if len(pts) < 4:
        raise ValueError("grid too coarse: fewer than 4 points")
    if lattice_dd is None:
        lattice_dd = lattice_diff_distances(deployment, grid)
    resid = lattice_dd - np.asarray(dd_hat)[None, :]
    costs = np.einsum("ij,ij->i", resid, resid)
    best = int(np.argmin(costs))     # argmin returns the first (lowest) index
    return pts[best], float(costs[best])


def nearest_lattice_labels(delta, dd_bar, wavelength: float) -> np.ndarray:
    """Labels recovered by rounding (diff distance - measurement) to whole
    cycles; must agree with the geometry construction on noiseless
    failure-free samples."""
    delta = np.asarray(delta, dtype=float)
    dd_bar = np.asarray(dd_bar, dtype=float)
    return np.rint((dd_bar - delta) / wavelength).astype(int)


def finite_diff(fn, x, h: float) -> np.ndarray:
    """Central finite-difference gradient of a scalar field on R^2."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=float)
    grad = np.zeros(2)
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        grad[i] = (fn(x + e) - fn(x - e)) / (2.0 * h)
    return grad
