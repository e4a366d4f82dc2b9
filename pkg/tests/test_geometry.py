"""Geometry: deployment, phase wrapping, ambiguity bounds, ground truth."""

import numpy as np
import pytest

from phasefix import geometry
from phasefix.errors import DegeneratePosition, InfeasibleDeployment
from phasefix.geometry import (Region, ambiguity_bounds, deploy_aps,
                               ground_truth, wrap_phase)

REGION = Region(0.0, 10.0, 0.0, 10.0)


class TestRegion:
    def test_invalid_extent_rejected(self):
        with pytest.raises(ValueError):
            Region(0, 0, 0, 10)
        with pytest.raises(ValueError):
            Region(0, 10, 5, 5)

    def test_contains(self):
        assert REGION.contains((0, 0))
        assert REGION.contains((10, 10))
        assert not REGION.contains((10.001, 5))


class TestWrapPhase:
    def test_zero(self):
        value, k = wrap_phase(0.0)
        assert value == 0.0 and k == 0

    def test_pi_maps_to_minus_pi(self):
        # half-open convention [-pi, pi)
        value, k = wrap_phase(np.pi)
        assert value == -np.pi and k == -1

    def test_three_pi(self):
        # 3*pi - 4*pi = -pi
        value, k = wrap_phase(3 * np.pi)
        assert np.isclose(value, -np.pi) and k == -2

    def test_idempotent_value(self):
        rng = np.random.default_rng(0)
        psi = rng.uniform(-50, 50, size=2000)
        v1, _ = wrap_phase(psi)
        v2, k2 = wrap_phase(v1)
        assert np.array_equal(v1, v2)
        assert np.all(k2 == 0)

    def test_range(self):
        rng = np.random.default_rng(1)
        psi = rng.uniform(-1000, 1000, size=5000)
        v, k = wrap_phase(psi)
        assert np.all(v >= -np.pi) and np.all(v < np.pi)
        assert np.allclose(psi + 2 * np.pi * k, v)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            wrap_phase(np.inf)


class TestDeployAps:
    def test_respects_separation_and_region(self):
        dep = deploy_aps(REGION, 9, 2.0, seed=7)
        assert dep.ap_count == 9
        for p in dep.ap_positions:
            assert REGION.contains(p)
        d = np.linalg.norm(dep.ap_positions[:, None] - dep.ap_positions[None, :], axis=2)
        np.fill_diagonal(d, np.inf)
        assert d.min() >= 2.0

    def test_two_aps_no_separation(self):
        dep = deploy_aps(REGION, 2, 0.0, seed=3)
        assert dep.ap_count == 2
        for p in dep.ap_positions:
            assert REGION.contains(p)

    def test_infeasible(self):
        # 9 points pairwise >= 10 m apart cannot fit a 10 m square
        with pytest.raises(InfeasibleDeployment):
            deploy_aps(REGION, 9, 10.0, seed=0)

    def test_deterministic(self):
        a = deploy_aps(REGION, 9, 2.0, seed=42)
        b = deploy_aps(REGION, 9, 2.0, seed=42)
        assert np.array_equal(a.ap_positions, b.ap_positions)
        assert a.j_set == b.j_set

    def test_reference_is_index_zero(self):
        dep = deploy_aps(REGION, 9, 2.0, seed=5)
        assert dep.reference_index == 0
        assert dep.j_set == tuple(range(1, 9))

    def test_json_round_trip(self, tmp_path):
        dep = deploy_aps(REGION, 9, 2.0, seed=11)
        path = tmp_path / "dep.json"
        dep.save(path)
        back = geometry.Deployment.load(path)
        assert np.array_equal(back.ap_positions, dep.ap_positions)
        assert back.wavelength == dep.wavelength
        assert back.j_set == dep.j_set
        assert back.region == dep.region


class TestAmbiguityBounds:
    def test_five_meter_example(self):
        # separation 5.0 m at wavelength 0.13034 m
        dep = geometry.Deployment(
            ap_positions=np.array([[0.0, 0.0], [5.0, 0.0]]),
            reference_index=0, region=REGION, wavelength=0.13034)
        b = ambiguity_bounds(dep)
        assert b.q[0] == 38
        assert b.Q_per[0] == 78
        assert b.Q == 78

    def test_below_wavelength(self):
        dep = geometry.Deployment(
            ap_positions=np.array([[0.0, 0.0], [0.05, 0.0]]),
            reference_index=0, region=REGION, wavelength=0.13034)
        b = ambiguity_bounds(dep)
        assert b.q[0] == 0
        assert b.Q_per[0] == 2

    def test_q_definition_exact(self):
        dep = deploy_aps(REGION, 9, 2.0, seed=2)
        b = ambiguity_bounds(dep)
        dists = dep.reference_distances()
        assert np.array_equal(b.q, np.floor(dists / dep.wavelength).astype(int))
        assert np.array_equal(b.Q_per, 2 * b.q + 2)
        assert b.Q == b.Q_per.sum()
        assert np.all(b.Q_per % 2 == 0) and np.all(b.Q_per >= 2)


class TestGroundTruth:
    def setup_method(self):
        self.dep = deploy_aps(REGION, 9, 2.0, seed=7)

    def test_distances(self):
        gt = ground_truth(self.dep, (4.0, 4.0), 1.0)
        expect = np.linalg.norm(np.array([4.0, 4.0]) - self.dep.ap_positions, axis=1)
        assert np.allclose(gt.distances, expect)

    def test_equidistant_ue_gives_zero_differentials(self):
        # place a UE on the perpendicular bisector of (ap_1, ap_0)
        a, b = self.dep.ap_positions[0], self.dep.ap_positions[1]
        mid = (a + b) / 2
        if not REGION.contains(mid):
            pytest.skip("midpoint outside region for this seed")
        gt = ground_truth(self.dep, mid, 0.7)
        assert abs(gt.diff_distances[0]) < 1e-12
        assert gt.diff_ambiguities[0] == 0

    def test_one_cycle_offset(self):
        # d_1 = d_0 + wavelength exactly: the label is one whole cycle and
        # the wrapped measurement identity reproduces the difference
        lam = 0.13034
        dep = geometry.Deployment(
            ap_positions=np.array([[4.0, 5.0], [6.0, 5.0]]),
            reference_index=0, region=REGION, wavelength=lam)
        # UE on the segment axis: d0 = s, d1 = 2 - s -> d1 - d0 = lam
        s = (2.0 - lam) / 2.0
        ue = np.array([4.0 + s, 5.0])
        gt = ground_truth(dep, ue, 0.0)
        assert np.isclose(gt.diff_distances[0], lam)
        dz = gt.diff_ambiguities[0]
        assert dz in (-1, 0, 1)
        # one-cycle-wrapped phase difference satisfies dd - lam*dz = delta
        psi = geometry.ue_phase_angles(dep, gt.distances, 0.0)
        wrapped, _ = wrap_phase(psi)
        dwrapped, _ = geometry.wrap_cycle_difference(wrapped[1] - wrapped[0])
        delta = -(lam / (2 * np.pi)) * dwrapped
        assert np.isclose(gt.diff_distances[0] - lam * dz, delta, atol=1e-12)

    def test_degenerate_position(self):
        ap = self.dep.ap_positions[3]
        with pytest.raises(DegeneratePosition):
            ground_truth(self.dep, ap + np.array([1e-9, 0.0]), 0.0)

    def test_outside_region_rejected(self):
        with pytest.raises(ValueError):
            ground_truth(self.dep, (12.0, 5.0), 0.0)

    def test_triangle_inequality_on_diff_distances(self):
        rng = np.random.default_rng(3)
        ref = self.dep.ap_positions[0]
        sep = np.linalg.norm(self.dep.ap_positions[1:] - ref, axis=1)
        for _ in range(200):
            ue = rng.uniform(0, 10, 2)
            try:
                gt = ground_truth(self.dep, ue, rng.uniform(0, 2 * np.pi))
            except DegeneratePosition:
                continue
            assert np.all(np.abs(gt.diff_distances) <= sep + 1e-12)

    def test_z_is_wrap_integer(self):
        gt = ground_truth(self.dep, (2.5, 7.5), 2.0)
        psi = geometry.ue_phase_angles(self.dep, gt.distances, 2.0)
        theta, k = wrap_phase(psi)
        assert np.array_equal(gt.z, k)
        # differential labels: per-AP integers plus the one-cycle wrap of the
        # phase difference; equal to floor(diff_distance / wavelength)
        js = list(self.dep.j_set)
        _, kd = geometry.wrap_cycle_difference(theta[js] - theta[0])
        assert np.array_equal(gt.diff_ambiguities, gt.z[js] - gt.z[0] + kd)
        assert np.array_equal(
            gt.diff_ambiguities,
            np.floor(gt.diff_distances / self.dep.wavelength).astype(int))

    def test_label_bound_holds_for_all_draws(self):
        bounds = ambiguity_bounds(self.dep)
        rng = np.random.default_rng(8)
        for _ in range(2000):
            ue = rng.uniform(0, 10, 2)
            try:
                gt = ground_truth(self.dep, ue, rng.uniform(0, 2 * np.pi))
            except DegeneratePosition:
                continue
            assert np.all(gt.diff_ambiguities >= -bounds.q - 1)
            assert np.all(gt.diff_ambiguities <= bounds.q)
