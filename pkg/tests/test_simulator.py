"""Simulator: path loss, phase noise, observations, datasets, persistence."""

import numpy as np
import pytest

from phasefix import geometry, oracle, simulator
from phasefix.errors import DegenerateDistance, InvalidCount, SchemaError
from phasefix.geometry import Region, deploy_aps
from phasefix.simulator import (RadioConfig, diff_measurements,
                                draw_failure_mask, gen_complex_observations,
                                gen_phase_observations, generate_dataset,
                                path_loss_amplitude, phase_noise_sigma,
                                read_dataset, write_dataset)

REGION = Region(0.0, 10.0, 0.0, 10.0)


@pytest.fixture(scope="module")
def dep():
    return deploy_aps(REGION, 9, 2.0, seed=7)


class TestPathLoss:
    def test_one_meter(self):
        # lam/(4*pi) at 1 m
        rho = path_loss_amplitude(1.0, 0.13034)
        assert np.isclose(rho, 1.0372e-2, rtol=1e-3)

    def test_inverse_distance(self):
        assert np.isclose(path_loss_amplitude(2.0, 0.13) * 2,
                          path_loss_amplitude(1.0, 0.13))

    def test_degenerate(self):
        with pytest.raises(DegenerateDistance):
            path_loss_amplitude(0.0, 0.13)


class TestPhaseNoiseSigma:
    def test_reference_anchor(self):
        # 0 dBm at 5 m: SNR ~ 54.8 dB, sigma ~ 1.3e-3 rad.  Recomputed
        # independently: SNR_dB = P + 20 log10(rho) - (N0 + 10 log10 W + NF)
        radio = RadioConfig(tx_power_dbm=0.0)
        lam = radio.wavelength
        rho = path_loss_amplitude(5.0, lam)
        snr_db = (0.0 + 20 * np.log10(rho)
                  - (-174.0 + 10 * np.log10(1.8e5) + 13.0))
        sigma_expected = np.sqrt(1.0 / (2.0 * 10 ** (snr_db / 10)))
        assert 54.0 < snr_db < 56.0
        assert np.isclose(sigma_expected, 1.3e-3, rtol=0.05)
        assert np.isclose(phase_noise_sigma(radio, rho), sigma_expected, rtol=1e-12)

    def test_power_scaling(self):
        radio_lo = RadioConfig(tx_power_dbm=0.0)
        radio_hi = RadioConfig(tx_power_dbm=20.0)   # x100 power
        s_lo = phase_noise_sigma(radio_lo, 1e-3)
        s_hi = phase_noise_sigma(radio_hi, 1e-3)
        assert np.isclose(s_lo / s_hi, 10.0)

    def test_monotone_in_rho(self):
        radio = RadioConfig()
        rhos = np.logspace(-6, -1, 30)
        sig = phase_noise_sigma(radio, rhos)
        assert np.all(np.diff(sig) < 0)

    def test_snr_halving_scales_sigma_sqrt2(self):
        radio = RadioConfig(tx_power_dbm=0.0)
        radio_half = RadioConfig(tx_power_dbm=0.0 - 10 * np.log10(2))
        assert np.isclose(phase_noise_sigma(radio_half, 1e-3),
                          np.sqrt(2) * phase_noise_sigma(radio, 1e-3))

    def test_noise_scale_knob(self):
        base = RadioConfig()
        scaled = RadioConfig(noise_scale=32.0)
        assert np.isclose(phase_noise_sigma(scaled, 1e-3),
                          32.0 * phase_noise_sigma(base, 1e-3))


class TestPhaseObservations:
    def test_zero_noise_gives_wrapped_phases(self, dep):
        radio = RadioConfig(noise_scale=0.0)
        gt = geometry.ground_truth(dep, (3.3, 6.1), 1.234)
        mask = simulator.FailureMask(f=np.ones(9, dtype=int), p_f=0.0)
        theta = gen_phase_observations(dep, radio, gt, mask, seed=0)
        psi = geometry.ue_phase_angles(dep, gt.distances, gt.phi_ue)
        wrapped, _ = geometry.wrap_phase(psi)
        assert np.allclose(theta, wrapped, atol=1e-15)

    def test_dead_aps_uniform(self, dep):
        # KS test at the 1% level against Uniform[-pi, pi)
        radio = RadioConfig()
        gt = geometry.ground_truth(dep, (3.3, 6.1), 1.234)
        mask = simulator.FailureMask(f=np.zeros(9, dtype=int), p_f=1.0)
        rng = np.random.default_rng(5)
        draws = np.concatenate([
            gen_phase_observations(dep, radio, gt, mask, rng)
            for _ in range(12000)])
        x = np.sort(draws)
        n = len(x)
        cdf = (x + np.pi) / (2 * np.pi)
        d_stat = np.max(np.abs(np.arange(1, n + 1) / n - cdf))
        assert d_stat < 1.63 / np.sqrt(n)   # 1% critical value

    def test_deterministic(self, dep):
        radio = RadioConfig()
        gt = geometry.ground_truth(dep, (3.3, 6.1), 1.234)
        mask = draw_failure_mask(9, 0.3, seed=10)
        a = gen_phase_observations(dep, radio, gt, mask, seed=77)
        b = gen_phase_observations(dep, radio, gt, mask, seed=77)
        assert np.array_equal(a, b)

    def test_gaussian_failure_model(self, dep):
        radio = RadioConfig(failure_phase_model="gaussian_n_i", noise_scale=0.0)
        gt = geometry.ground_truth(dep, (3.3, 6.1), 1.234)
        mask = simulator.FailureMask(f=np.zeros(9, dtype=int), p_f=1.0)
        theta = gen_phase_observations(dep, radio, gt, mask, seed=0)
        assert np.allclose(theta, 0.0)      # literal reading: theta = n_i


class TestComplexObservations:
    def test_zero_noise_phase(self, dep):
        radio = RadioConfig(noise_scale=0.0)
        gt = geometry.ground_truth(dep, (4.2, 2.9), 0.456)
        mask = simulator.FailureMask(f=np.ones(9, dtype=int), p_f=0.0)
        y = gen_complex_observations(dep, radio, gt, mask, 1.0 + 0j, seed=0)
        extracted = simulator.extract_phases(y, 1.0 + 0j)
        psi = geometry.ue_phase_angles(dep, gt.distances, gt.phi_ue)
        wrapped, _ = geometry.wrap_phase(psi)
        # angle() uses (-pi, pi]; compare circularly
        assert np.allclose(np.angle(np.exp(1j * (extracted - wrapped))), 0.0,
                           atol=1e-12)

    def test_noise_variance_forces_cross_model_agreement(self, dep):
        # circular std of the extracted phase within 10% of the small-angle
        # sigma at high SNR
        radio = RadioConfig(tx_power_dbm=0.0)
        gt = geometry.ground_truth(dep, (4.2, 2.9), 0.456)
        mask = simulator.FailureMask(f=np.ones(9, dtype=int), p_f=0.0)
        rng = np.random.default_rng(8)
        phases = np.array([
            simulator.extract_phases(
                gen_complex_observations(dep, radio, gt, mask, 1.0 + 0j, rng),
                1.0 + 0j)
            for _ in range(10000)])
        sigma_pred = phase_noise_sigma(
            radio, path_loss_amplitude(gt.distances, dep.wavelength))
        mean_vec = np.mean(np.exp(1j * phases), axis=0)
        circ_std = np.sqrt(-2 * np.log(np.abs(mean_vec)))
        assert np.all(np.abs(circ_std - sigma_pred) / sigma_pred < 0.10)

    def test_failed_ap_is_pure_noise(self, dep):
        radio = RadioConfig()
        gt = geometry.ground_truth(dep, (4.2, 2.9), 0.456)
        mask = simulator.FailureMask(f=np.zeros(9, dtype=int), p_f=1.0)
        rng = np.random.default_rng(9)
        draws = np.concatenate([
            simulator.extract_phases(
                gen_complex_observations(dep, radio, gt, mask, 1.0 + 0j, rng), 1.0 + 0j)
            for _ in range(8000)])
        x = np.sort(draws)
        n = len(x)
        cdf = (x + np.pi) / (2 * np.pi)
        d_stat = np.max(np.abs(np.arange(1, n + 1) / n - cdf))
        assert d_stat < 1.63 / np.sqrt(n)

    def test_rejects_non_unit_pilot(self, dep):
        gt = geometry.ground_truth(dep, (4.2, 2.9), 0.456)
        mask = simulator.FailureMask(f=np.ones(9, dtype=int), p_f=0.0)
        with pytest.raises(ValueError):
            gen_complex_observations(dep, RadioConfig(), gt, mask, 2.0 + 0j, 0)


class TestDiffMeasurements:
    def test_equal_phases_zero(self):
        assert np.allclose(diff_measurements(np.full(9, 0.4), 0.13), 0.0)

    def test_half_cycle(self):
        # pi phase difference is half a cycle; in the [0, lambda) image of
        # the one-cycle wrap that is +lambda/2
        theta = np.array([0.0, np.pi])
        delta = diff_measurements(theta, 0.13034)
        assert np.isclose(delta[0], 0.13034 / 2)
        assert np.isclose(delta[0], 0.06517)

    def test_range_is_one_cycle(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            theta = rng.uniform(-np.pi, np.pi, 9)
            delta = diff_measurements(theta, 0.13034)
            assert np.all(delta >= 0.0) and np.all(delta < 0.13034)

    def test_identity_with_geometry(self, dep):
        # noiseless failure-free: delta = dd - lam*dz to <= 1e-9 m
        radio = RadioConfig(noise_scale=0.0)
        ds = generate_dataset(dep, radio, 0.0, 300, "train", root_seed=21)
        for s in ds.samples:
            lhs = s.delta + dep.wavelength * np.array(
                [s.ground_truth.diff_ambiguities[k]
                 for k in range(len(dep.j_set))])
            assert np.max(np.abs(lhs - s.ground_truth.diff_distances)) <= 1e-9


class TestFailureMask:
    def test_p_zero(self):
        mask = draw_failure_mask(9, 0.0, seed=0)
        assert np.all(mask.f == 1)

    def test_p_one(self):
        mask = draw_failure_mask(9, 1.0, seed=0)
        assert np.all(mask.f == 0)

    def test_binomial_rate(self):
        rng = np.random.default_rng(4)
        n_draws = 10 ** 6
        fails = 0
        chunk = 10 ** 5
        for _ in range(n_draws // chunk):
            mask = draw_failure_mask(chunk, 0.01, rng)
            fails += int((mask.f == 0).sum())
        p_hat = fails / n_draws
        tol = 3 * np.sqrt(0.01 * 0.99 / n_draws)
        assert abs(p_hat - 0.01) < tol

    def test_invalid_probability(self):
        with pytest.raises(ValueError):
            draw_failure_mask(9, 1.5, seed=0)


class TestGenerateDataset:
    def test_zero_count(self, dep):
        with pytest.raises(InvalidCount):
            generate_dataset(dep, RadioConfig(), 0.0, 0, "train", 1)

    def test_failure_fraction(self, dep):
        # p_f = 1e-2, I = 9: ~8.65% of samples have at least one failure
        radio = RadioConfig()
        ds = generate_dataset(dep, radio, 1e-2, 20000, "train", root_seed=31)
        frac = np.mean([np.any(s.failure_mask.f == 0) for s in ds.samples])
        expected = 1 - 0.99 ** 9
        assert abs(frac - expected) < 3 * np.sqrt(expected * (1 - expected) / 20000)

    def test_determinism(self, dep):
        radio = RadioConfig()
        a = generate_dataset(dep, radio, 0.01, 100, "train", root_seed=5)
        b = generate_dataset(dep, radio, 0.01, 100, "train", root_seed=5)
        assert np.array_equal(a.features(), b.features())
        assert np.array_equal(a.label_matrix(), b.label_matrix())

    def test_splits_differ(self, dep):
        radio = RadioConfig()
        a = generate_dataset(dep, radio, 0.0, 50, "train", root_seed=5)
        b = generate_dataset(dep, radio, 0.0, 50, "val", root_seed=5)
        assert not np.array_equal(a.features(), b.features())

    def test_labels_within_bounds(self, dep):
        bounds = geometry.ambiguity_bounds(dep)
        ds = generate_dataset(dep, RadioConfig(), 0.05, 2000, "test", root_seed=6)
        labels = ds.label_matrix()
        assert np.all(labels >= -bounds.q - 1)
        assert np.all(labels <= bounds.q)

    def test_forced_failures(self, dep):
        ds = generate_dataset(dep, RadioConfig(), 0.0, 50, "test", root_seed=6,
                              forced_failure_count=3)
        for s in ds.samples:
            assert (s.failure_mask.f == 0).sum() == 3


class TestPersistence:
    def test_round_trip(self, dep, tmp_path):
        radio = RadioConfig(tx_power_dbm=-10.0, noise_scale=2.0)
        ds = generate_dataset(dep, radio, 0.01, 40, "val", root_seed=77)
        path = tmp_path / "ds.csv"
        write_dataset(ds, path)
        back = read_dataset(path)
        assert back.split == "val"
        assert back.p_f == 0.01
        assert back.radio == radio
        assert np.array_equal(back.features(), ds.features())
        assert np.array_equal(back.label_matrix(), ds.label_matrix())
        for s1, s2 in zip(ds.samples, back.samples):
            assert np.array_equal(s1.theta, s2.theta)
            assert np.array_equal(s1.failure_mask.f, s2.failure_mask.f)
            assert np.array_equal(s1.ground_truth.ue_position,
                                  s2.ground_truth.ue_position)

    def test_truncated_file(self, dep, tmp_path):
        ds = generate_dataset(dep, RadioConfig(), 0.0, 10, "test", root_seed=1)
        path = tmp_path / "ds.csv"
        write_dataset(ds, path)
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:-3]) + "\n")
        with pytest.raises(SchemaError, match="line"):
            read_dataset(path)

    def test_permuted_header(self, dep, tmp_path):
        ds = generate_dataset(dep, RadioConfig(), 0.0, 5, "test", root_seed=1)
        path = tmp_path / "ds.csv"
        write_dataset(ds, path)
        lines = path.read_text().splitlines()
        cols = lines[0].split(",")
        cols[0], cols[1] = cols[1], cols[0]
        path.write_text("\n".join([",".join(cols)] + lines[1:]) + "\n")
        with pytest.raises(SchemaError, match="line 1"):
            read_dataset(path)

    def test_bad_field_count(self, dep, tmp_path):
        ds = generate_dataset(dep, RadioConfig(), 0.0, 5, "test", root_seed=1)
        path = tmp_path / "ds.csv"
        write_dataset(ds, path)
        lines = path.read_text().splitlines()
        lines[3] = lines[3] + ",0"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(SchemaError, match="line 4"):
            read_dataset(path)
