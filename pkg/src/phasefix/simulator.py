"""Phase observation simulator: noise, AP failures, differential measurements,
labeled datasets and their CSV persistence.

The canonical generator is the phase-domain path (gen_phase_observations);
gen_complex_observations exists to cross-validate it against the baseband
signal model.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import geometry
from .errors import DegenerateDistance, InvalidCount, SchemaError
from .geometry import Deployment, GroundTruth, wrap_phase

SPEED_OF_LIGHT = 299792458.0
FLOAT_FMT = "%.17g"

_SPLIT_CODES = {"train": 0, "val": 1, "test": 2}


def _split_code(split: str) -> int:
    if split in _SPLIT_CODES:
        return _SPLIT_CODES[split]
    return 16 + (zlib.crc32(split.encode()) & 0x7FFFFFFF)


@dataclass(frozen=True)
class RadioConfig:
    """Link-budget parameters. Powers in dBm, PSD in dBm/Hz.

    noise_scale multiplies the phase-noise standard deviation; 1.0 keeps the
    plain high-SNR map sigma = 1/sqrt(2*SNR). It is the single calibration
    knob for absolute accuracy levels.
    """

    carrier_freq: float = 2.3e9
    bandwidth: float = 1.8e5
    tx_power_dbm: float = 0.0
    noise_psd_dbm_hz: float = -174.0
    noise_figure_db: float = 13.0
    noise_scale: float = 1.0
    failure_phase_model: str = "uniform"   # or "gaussian_n_i"

    def __post_init__(self):
        if self.bandwidth <= 0 or self.carrier_freq <= 0:
            raise ValueError("carrier and bandwidth must be positive")
        if self.failure_phase_model not in ("uniform", "gaussian_n_i"):
            raise ValueError("failure_phase_model must be 'uniform' or 'gaussian_n_i'")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq

    @property
    def tx_power_mw(self) -> float:
        return 10.0 ** (self.tx_power_dbm / 10.0)

    @property
    def noise_psd_mw_hz(self) -> float:
        return 10.0 ** (self.noise_psd_dbm_hz / 10.0)

    @property
    def noise_figure_lin(self) -> float:
        return 10.0 ** (self.noise_figure_db / 10.0)

    def as_dict(self) -> dict:
        return {
            "carrier_freq": self.carrier_freq,
            "bandwidth": self.bandwidth,
            "tx_power_dbm": self.tx_power_dbm,
            "noise_psd_dbm_hz": self.noise_psd_dbm_hz,
            "noise_figure_db": self.noise_figure_db,
            "noise_scale": self.noise_scale,
            "failure_phase_model": self.failure_phase_model,
        }


@dataclass(frozen=True)
class FailureMask:
    """Binary per-AP operational indicator (1 = alive, 0 = failed)."""

    f: np.ndarray
    p_f: float

    def __post_init__(self):
        f = np.asarray(self.f, dtype=int)
        object.__setattr__(self, "f", f)
        if not np.all((f == 0) | (f == 1)):
            raise ValueError("mask entries must be 0 or 1")


@dataclass(frozen=True)
class Sample:
    """One labeled measurement instance."""

    ground_truth: GroundTruth
    failure_mask: FailureMask
    theta: np.ndarray      # (I,) observed phases
    delta: np.ndarray      # (I-1,) differential measurements
    labels: np.ndarray     # (|J|,) failure-independent differential ambiguities


@dataclass
class Dataset:
    deployment: Deployment
    radio: RadioConfig
    p_f: float
    samples: list
    split: str
    root_seed: int = 0
    forced_failure_count: int | None = None

    def __len__(self):
        return len(self.samples)

    def features(self) -> np.ndarray:
        """(S, I-1) matrix of differential measurements."""
        return np.array([s.delta for s in self.samples])

    def label_matrix(self) -> np.ndarray:
        """(S, |J|) matrix of integer labels."""
        return np.array([s.labels for s in self.samples], dtype=int)

    def ue_positions(self) -> np.ndarray:
        return np.array([s.ground_truth.ue_position for s in self.samples])


def path_loss_amplitude(d: float, wavelength: float):
    """Free-space amplitude gain rho = wavelength / (4*pi*d)."""
    d_arr = np.asarray(d, dtype=float)
    if np.any(d_arr <= geometry.EPS_POSITION):
        raise DegenerateDistance("distance at or below the degeneracy guard")
    rho = wavelength / (4.0 * np.pi * d_arr)
    return float(rho) if d_arr.ndim == 0 else rho


def phase_noise_sigma(radio: RadioConfig, rho):
    """Phase noise std from the high-SNR map sigma = 1/sqrt(2*SNR).

    SNR = P_T * rho^2 / (W * N_0 * F) in linear units; the configured
    noise_scale multiplies the result.
    """
    rho_arr = np.asarray(rho, dtype=float)
    if np.any(rho_arr <= 0):
        raise ValueError("amplitude gain must be positive")
    noise = radio.bandwidth * radio.noise_psd_mw_hz * radio.noise_figure_lin
    snr = radio.tx_power_mw * rho_arr ** 2 / noise
    sigma = radio.noise_scale / np.sqrt(2.0 * snr)
    return float(sigma) if rho_arr.ndim == 0 else sigma


def _per_ap_sigmas(deployment: Deployment, radio: RadioConfig,
                   distances: np.ndarray) -> np.ndarray:
    rho = path_loss_amplitude(distances, deployment.wavelength)
    return phase_noise_sigma(radio, rho)


def gen_phase_observations(deployment: Deployment, radio: RadioConfig,
                           gt: GroundTruth, mask: FailureMask, seed) -> np.ndarray:
    """Observed phases theta_i, one per AP.

    Working APs report the wrapped carrier phase plus N(0, sigma_i^2) noise;
    failed APs report Uniform[-pi, pi) (or the bare noise term when
    failure_phase_model = "gaussian_n_i"). Deterministic per seed.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    sigma = _per_ap_sigmas(deployment, radio, gt.distances)
    psi = geometry.ue_phase_angles(deployment, gt.distances, gt.phi_ue)
    wrapped, _ = wrap_phase(psi)
    noise = rng.normal(0.0, 1.0, size=len(gt.distances)) * sigma
    junk = rng.uniform(-np.pi, np.pi, size=len(gt.distances))
    alive = np.asarray(mask.f, dtype=bool)
    theta = wrapped + noise
    if radio.failure_phase_model == "uniform":
        theta = np.where(alive, theta, junk)
    else:                                     # literal reading: theta_i = n_i
        theta = np.where(alive, theta, noise)
    return theta


def gen_complex_observations(deployment: Deployment, radio: RadioConfig,
                             gt: GroundTruth, mask: FailureMask,
                             pilot_symbol: complex, seed) -> np.ndarray:
    """Baseband samples y_i = f_i*sqrt(P_T/W)*rho_i*exp(-j(2*pi*d_i/lambda - phi)) s + v_i.

    v_i ~ CN(0, N_0*F) so the implied SNR matches phase_noise_sigma; used for
    cross-validating the phase-domain generator.
    """
    if abs(abs(pilot_symbol) - 1.0) > 1e-12:
        raise ValueError("pilot symbol must have unit modulus")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    rho = path_loss_amplitude(gt.distances, deployment.wavelength)
    amp = np.sqrt(radio.tx_power_mw / radio.bandwidth) * rho
    phase = -(2.0 * np.pi / deployment.wavelength) * gt.distances + gt.phi_ue
    var = radio.noise_psd_mw_hz * radio.noise_figure_lin * radio.noise_scale ** 2
    v = np.sqrt(var / 2.0) * (rng.normal(size=len(gt.distances))
                              + 1j * rng.normal(size=len(gt.distances)))
    alive = np.asarray(mask.f, dtype=float)
    return alive * amp * np.exp(1j * phase) * pilot_symbol + v


def extract_phases(y: np.ndarray, pilot_symbol: complex) -> np.ndarray:
    """Companion phase extractor for the complex path."""
    return np.angle(y * np.conj(pilot_symbol))


def diff_measurements(theta: np.ndarray, wavelength: float,
                      reference_index: int = 0) -> np.ndarray:
    """delta_m = -(lambda/2*pi) * wrap(theta_m - theta_0), in [0, lambda).

    The phase difference is wrapped to a single carrier cycle, matching the
    conjugate-product phase a receiver actually measures; with this
    convention a noiseless failure-free measurement equals the differential
    distance modulo the wavelength, and the paired integer label is
    floor(diff_distance/lambda).
    """
    theta = np.asarray(theta, dtype=float)
    others = np.delete(theta, reference_index)
    wrapped, _ = geometry.wrap_cycle_difference(others - theta[reference_index])
    return -(wavelength / (2.0 * np.pi)) * wrapped


def draw_failure_mask(ap_count: int, p_f: float, seed) -> FailureMask:
    """Each AP fails independently with probability p_f."""
    if not 0.0 <= p_f <= 1.0:
        raise ValueError("p_f must be in [0, 1]")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    f = (rng.random(ap_count) >= p_f).astype(int)
    return FailureMask(f=f, p_f=p_f)


def _forced_mask(ap_count: int, n_failures: int, rng) -> FailureMask:
    f = np.ones(ap_count, dtype=int)
    if n_failures > 0:
        f[rng.choice(ap_count, size=n_failures, replace=False)] = 0
    return FailureMask(f=f, p_f=float("nan"))


def _draw_ground_truth(deployment: Deployment, rng):
    """Uniform in-region UE and phase offset; resamples the measure-zero
    placements that coincide with an AP."""
    region = deployment.region
    while True:
        ue = np.array([rng.uniform(region.x_min, region.x_max),
                       rng.uniform(region.y_min, region.y_max)])
        d = np.linalg.norm(ue - deployment.ap_positions, axis=1)
        if np.min(d) <= geometry.EPS_POSITION:
            continue
        phi = rng.uniform(0.0, 2.0 * np.pi)
        return geometry.ground_truth(deployment, ue, phi)


def generate_dataset(deployment: Deployment, radio: RadioConfig, p_f: float,
                     count: int, split: str, root_seed: int,
                     forced_failure_count: int | None = None) -> Dataset:
    """Generate `count` labeled samples.

    Each sample gets an independent UE position (uniform in region), common
    phase offset, failure mask and measurement noise, all derived from
    (root_seed, split, sample index) so the result is independent of any
    parallel execution order. forced_failure_count, when given, replaces the
    Bernoulli failure draw by exactly that many failed APs per sample.
    """
    if count < 1:
        raise InvalidCount("dataset size must be at least 1")
    if forced_failure_count is not None and forced_failure_count > deployment.ap_count:
        raise InvalidCount("cannot force more failures than APs")
    code = _split_code(split)
    samples = []
    for i in range(count):
        rng = np.random.default_rng([root_seed & 0xFFFFFFFF, code, i])
        gt = _draw_ground_truth(deployment, rng)
        if forced_failure_count is None:
            mask = draw_failure_mask(deployment.ap_count, p_f, rng)
        else:
            mask = _forced_mask(deployment.ap_count, forced_failure_count, rng)
        theta = gen_phase_observations(deployment, radio, gt, mask, rng)
        delta = diff_measurements(theta, deployment.wavelength,
                                  deployment.reference_index)
        samples.append(Sample(ground_truth=gt, failure_mask=mask, theta=theta,
                              delta=delta, labels=gt.diff_ambiguities))
    return Dataset(deployment=deployment, radio=radio, p_f=p_f, samples=samples,
                   split=split, root_seed=root_seed,
                   forced_failure_count=forced_failure_count)


def _csv_header(ap_count: int, j_count: int) -> list:
    cols = ["ue_x", "ue_y", "phi_ue"]
    cols += [f"f_{i}" for i in range(ap_count)]
    cols += [f"theta_{i}" for i in range(ap_count)]
    cols += [f"delta_{m}" for m in range(1, ap_count)]
    cols += [f"dz_{k}" for k in range(1, j_count + 1)]
    return cols


def write_dataset(dataset: Dataset, path) -> None:
    """One CSV row per sample plus a sidecar JSON with the run context."""
    path = Path(path)
    ap_count = dataset.deployment.ap_count
    j_count = len(dataset.deployment.j_set)
    header = _csv_header(ap_count, j_count)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for s in dataset.samples:
            vals = [FLOAT_FMT % s.ground_truth.ue_position[0],
                    FLOAT_FMT % s.ground_truth.ue_position[1],
                    FLOAT_FMT % s.ground_truth.phi_ue]
            vals += [str(int(v)) for v in s.failure_mask.f]
            vals += [FLOAT_FMT % v for v in s.theta]
            vals += [FLOAT_FMT % v for v in s.delta]
            vals += [str(int(v)) for v in s.labels]
            fh.write(",".join(vals) + "\n")
    sidecar = {
        "deployment": dataset.deployment.to_json_dict(),
        "radio": dataset.radio.as_dict(),
        "p_f": dataset.p_f,
        "split": dataset.split,
        "root_seed": dataset.root_seed,
        "count": len(dataset.samples),
        "forced_failure_count": dataset.forced_failure_count,
    }
    with open(path.with_suffix(path.suffix + ".json"), "w") as fh:
        json.dump(sidecar, fh, indent=1)
        fh.write("\n")


def read_dataset(path) -> Dataset:
    """Inverse of write_dataset; validates the positional column layout."""
    path = Path(path)
    sidecar_path = path.with_suffix(path.suffix + ".json")
    if not sidecar_path.exists():
        raise SchemaError(f"missing sidecar {sidecar_path}")
    with open(sidecar_path) as fh:
        meta = json.load(fh)
    deployment = Deployment.from_json_dict(meta["deployment"])
    radio = RadioConfig(**meta["radio"])
    ap_count = deployment.ap_count
    j_count = len(deployment.j_set)
    expected = _csv_header(ap_count, j_count)
    samples = []
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split(",")
        if header != expected:
            raise SchemaError(f"line 1: header mismatch, expected {expected[:4]}...")
        n_cols = len(expected)
        for lineno, line in enumerate(fh, start=2):
            fields = line.rstrip("\n").split(",")
            if len(fields) != n_cols:
                raise SchemaError(f"line {lineno}: expected {n_cols} fields, "
                                  f"got {len(fields)}")
            try:
                vals = [float(x) for x in fields]
            except ValueError as exc:
                raise SchemaError(f"line {lineno}: {exc}") from None
            pos = 3
            f = np.array(vals[pos:pos + ap_count], dtype=int); pos += ap_count
            theta = np.array(vals[pos:pos + ap_count]); pos += ap_count
            delta = np.array(vals[pos:pos + ap_count - 1]); pos += ap_count - 1
            labels = np.array(vals[pos:], dtype=int)
            ue = np.array(vals[0:2])
            gt = geometry.ground_truth(deployment, ue, vals[2])
            if not np.array_equal(gt.diff_ambiguities, labels):
                # stored labels are authoritative; geometry recomputation is a
                # cross-check that the file belongs to this deployment
                raise SchemaError(f"line {lineno}: labels inconsistent with geometry")
            mask = FailureMask(f=f, p_f=meta["p_f"])
            samples.append(Sample(ground_truth=gt, failure_mask=mask,
                                  theta=theta, delta=delta, labels=labels))
    if meta["count"] != len(samples):
        raise SchemaError(f"line {len(samples) + 1}: expected {meta['count']} rows, "
                          f"file ends after {len(samples)}")
    return Dataset(deployment=deployment, radio=radio, p_f=meta["p_f"],
                   samples=samples, split=meta["split"],
                   root_seed=meta["root_seed"],
                   forced_failure_count=meta.get("forced_failure_count"))
