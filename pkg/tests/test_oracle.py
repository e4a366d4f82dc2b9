"""Brute-force oracles: grid search, lattice labels, finite differences."""

import numpy as np
import pytest

from phasefix import geometry, oracle, simulator
from phasefix import hyperbola_solver as hs
from phasefix.geometry import Region, deploy_aps
from phasefix.oracle import (GridSpec, finite_diff, grid_search_position,
                             nearest_lattice_labels)

REGION = Region(0.0, 10.0, 0.0, 10.0)


@pytest.fixture(scope="module")
def dep():
    return deploy_aps(REGION, 9, 2.0, seed=7)


class TestGridSearch:
    def test_exact_on_lattice_point(self, dep):
        grid = GridSpec(resolution=0.25, region=REGION)
        pts = grid.points()
        ue = pts[1234]
        if np.min(np.linalg.norm(ue - dep.ap_positions, axis=1)) < 0.3:
            ue = pts[2345]
        gt_dd = geometry.ground_truth(dep, ue, 0.0).diff_distances
        point, cost = grid_search_position(gt_dd, dep, grid)
        assert np.array_equal(point, ue)
        assert cost <= 1e-18

    def test_minimizer_within_lattice_spacing(self, dep):
        grid = GridSpec(resolution=0.01, region=REGION)
        rng = np.random.default_rng(2)
        lattice_dd = oracle.lattice_diff_distances(dep, grid)
        for _ in range(5):
            ue = rng.uniform(0.5, 9.5, 2)
            gt_dd = geometry.ground_truth(dep, ue, 0.0).diff_distances
            point, cost = grid_search_position(gt_dd, dep, grid, lattice_dd)
            assert np.linalg.norm(point - ue) <= 0.01 * np.sqrt(2) / 2 + 1e-12

    def test_gd_beats_grid_cost(self, dep):
        grid = GridSpec(resolution=0.01, region=REGION)
        lattice_dd = oracle.lattice_diff_distances(dep, grid)
        radio = simulator.RadioConfig(noise_scale=0.0)
        ds = simulator.generate_dataset(dep, radio, 0.0, 20, "test", root_seed=5)
        X, y = ds.features(), ds.label_matrix()
        dd = X + dep.wavelength * y
        pos, costs = hs.solve_batch(dd, dep, hs.SolverConfig(restarts=5), seed=1)
        for i in range(len(ds.samples)):
            _, grid_cost = grid_search_position(dd[i], dep, grid, lattice_dd)
            assert costs[i] <= grid_cost + 1e-15

    def test_too_coarse_rejected(self, dep):
        with pytest.raises(ValueError):
            grid_search_position(np.zeros(8), dep,
                                 GridSpec(resolution=11.0, region=REGION))


class TestNearestLatticeLabels:
    def test_matches_geometry_labels(self, dep):
        radio = simulator.RadioConfig(noise_scale=0.0)
        ds = simulator.generate_dataset(dep, radio, 0.0, 500, "test", root_seed=4)
        for s in ds.samples:
            lab = nearest_lattice_labels(s.delta, s.ground_truth.diff_distances,
                                         dep.wavelength)
            assert np.array_equal(lab, s.labels)

    def test_delta_equals_dd_gives_zero(self):
        dd = np.array([0.5, -0.25, 1.0])
        assert np.array_equal(nearest_lattice_labels(dd, dd, 0.13),
                              np.zeros(3, dtype=int))

    def test_one_cycle_short(self):
        dd = np.array([0.5, -0.25, 1.0])
        lam = 0.13
        assert np.array_equal(nearest_lattice_labels(dd - lam, dd, lam),
                              np.ones(3, dtype=int))


class TestFiniteDiff:
    def test_quadratic_norm(self):
        g = finite_diff(lambda p: p[0] ** 2 + p[1] ** 2, np.array([1.0, 2.0]), 1e-6)
        assert np.allclose(g, [2.0, 4.0], atol=1e-6)

    def test_constant_zero(self):
        g = finite_diff(lambda p: 3.0, np.array([0.4, -0.7]), 1e-6)
        assert np.array_equal(g, [0.0, 0.0])

    def test_bad_h(self):
        with pytest.raises(ValueError):
            finite_diff(lambda p: 0.0, np.zeros(2), 0.0)
