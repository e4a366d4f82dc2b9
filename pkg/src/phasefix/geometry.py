"""Deterministic geometry of the AP network and ground-truth generation.

Conventions fixed here and relied on everywhere else:
  - phases wrap to the half-open interval [-pi, pi)
  - the reference AP is index 0 after deployment reindexing
  - the carrier phase seen at distance d is psi = -(2*pi/lambda)*d + phi_ue,
    and the integer ambiguity z is the wrapping integer of psi
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DegeneratePosition, InfeasibleDeployment

EPS_POSITION = 1e-6            # UE-on-AP degeneracy guard, meters
DEPLOY_ATTEMPT_BUDGET = 10 ** 5


@dataclass(frozen=True)
class Region:
    """Axis-aligned rectangular evaluation region, meters."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError("region must have positive extent")

    def contains(self, point) -> bool:
        x, y = float(point[0]), float(point[1])
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max

    def as_dict(self) -> dict:
        return {"x_min": self.x_min, "x_max": self.x_max,
                "y_min": self.y_min, "y_max": self.y_max}


@dataclass(frozen=True)
class Deployment:
    """AP network geometry.

    ap_positions has shape (I, 2); index 0 is the reference AP. j_set lists
    the non-reference AP indices whose differential ambiguities are estimated
    (by default all of 1..I-1, in order).
    """

    ap_positions: np.ndarray
    reference_index: int
    region: Region
    wavelength: float
    j_set: tuple = field(default=())

    def __post_init__(self):
        aps = np.asarray(self.ap_positions, dtype=float)
        object.__setattr__(self, "ap_positions", aps)
        if aps.ndim != 2 or aps.shape[1] != 2 or aps.shape[0] < 2:
            raise ValueError("ap_positions must be an (I, 2) array with I >= 2")
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")
        if not self.j_set:
            object.__setattr__(self, "j_set", tuple(range(1, aps.shape[0])))
        js = tuple(int(j) for j in self.j_set)
        object.__setattr__(self, "j_set", js)
        if self.reference_index in js or len(set(js)) != len(js):
            raise ValueError("j_set must exclude the reference and contain no duplicates")
        if any(j < 1 or j >= aps.shape[0] for j in js):
            raise ValueError("j_set indices out of range")
        for p in aps:
            if not self.region.contains(p):
                raise ValueError("all AP positions must lie inside the region")

    @property
    def ap_count(self) -> int:
        return int(self.ap_positions.shape[0])

    def reference_distances(self) -> np.ndarray:
        """Distances from each j_set AP to the reference AP."""
        ref = self.ap_positions[self.reference_index]
        return np.linalg.norm(self.ap_positions[list(self.j_set)] - ref, axis=1)

    def to_json_dict(self) -> dict:
        return {
            "wavelength_m": self.wavelength,
            "region": self.region.as_dict(),
            "reference_index": self.reference_index,
            "j_set": list(self.j_set),
            "aps": [[float(x), float(y)] for x, y in self.ap_positions],
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=1)
            fh.write("\n")

    @staticmethod
    def from_json_dict(doc: dict) -> "Deployment":
        region = Region(**doc["region"])
        return Deployment(
            ap_positions=np.array(doc["aps"], dtype=float),
            reference_index=int(doc["reference_index"]),
            region=region,
            wavelength=float(doc["wavelength_m"]),
            j_set=tuple(doc["j_set"]),
        )

    @staticmethod
    def load(path) -> "Deployment":
        with open(path) as fh:
            return Deployment.from_json_dict(json.load(fh))


@dataclass(frozen=True)
class AmbiguityBounds:
    """Per-branch geometric label bounds.

    q[k] = floor(||ap_jk - ap_0|| / wavelength); branch k admits the integers
    [-q[k]-1, q[k]], i.e. Q_per[k] = 2*q[k] + 2 classes.
    """

    q: np.ndarray
    Q_per: np.ndarray
    Q: int

    def contains(self, labels) -> bool:
        lab = np.asarray(labels)
        return bool(np.all(lab >= -self.q - 1) and np.all(lab <= self.q))


@dataclass(frozen=True)
class GroundTruth:
    """Noise-free truth for one UE placement."""

    ue_position: np.ndarray         # (2,)
    phi_ue: float                   # radians in [0, 2*pi)
    distances: np.ndarray           # (I,) meters
    z: np.ndarray                   # (I,) wrapping integers
    diff_distances: np.ndarray      # (I-1,) d_m - d_0
    diff_ambiguities: np.ndarray    # (|J|,) z_jk - z_0


class WrappedPhase(NamedTuple):
    value: float
    k: int


def wrap_phase(psi):
    """Wrap a phase into [-pi, pi).

    Returns (value, k) with value = psi + 2*pi*k for the unique integer k.
    Accepts scalars or arrays.
    """
    psi_arr = np.asarray(psi, dtype=float)
    if not np.all(np.isfinite(psi_arr)):
        raise ValueError("phase must be finite")
    k = -np.floor((psi_arr + np.pi) / (2.0 * np.pi))
    value = psi_arr + 2.0 * np.pi * k
    # guard the float boundary: value must stay in [-pi, pi)
    high = value >= np.pi
    k = k - high
    value = value - 2.0 * np.pi * high
    low = value < -np.pi
    k = k + low
    value = value + 2.0 * np.pi * low
    if psi_arr.ndim == 0:
        return WrappedPhase(float(value), int(k))
    return WrappedPhase(value, k.astype(int))


def wrap_cycle_difference(diff):
    """Wrap a phase difference into (-2*pi, 0].

    Returns (value, k) with value = diff + 2*pi*k. This is the convention a
    receiver's conjugate-product phase difference lives in once the sign flip
    of the differential measurement is applied: the scaled measurement
    -(lambda/2*pi)*value falls in [0, lambda), which is exactly what makes a
    branch's integer label equal floor(diff_distance/lambda) and confines it
    to the asymmetric range [-q-1, q].
    """
    diff_arr = np.asarray(diff, dtype=float)
    k = -np.ceil(diff_arr / (2.0 * np.pi))
    value = diff_arr + 2.0 * np.pi * k
    high = value > 0.0
    k = k - high
    value = value - 2.0 * np.pi * high
    low = value <= -2.0 * np.pi
    k = k + low
    value = value + 2.0 * np.pi * low
    if diff_arr.ndim == 0:
        return WrappedPhase(float(value), int(k))
    return WrappedPhase(value, k.astype(int))


DEFAULT_WAVELENGTH = 299792458.0 / 2.3e9  # 5G NR band n40 carrier


def deploy_aps(region: Region, ap_count: int, min_separation: float, seed,
               wavelength: float = DEFAULT_WAVELENGTH) -> Deployment:
    """Place ap_count APs uniformly in the region with pairwise separation.

    Rejection sampling with a fixed attempt budget; the reference AP and the
    ordering of the remaining indices come from the same seeded draw.
    Deterministic for a fixed seed.
    """
    if ap_count < 2:
        raise ValueError("need at least two APs")
    if min_separation < 0:
        raise ValueError("min_separation must be non-negative")
    rng = np.random.default_rng(seed)
    points = []
    attempts = 0
    while len(points) < ap_count:
        if attempts >= DEPLOY_ATTEMPT_BUDGET:
            raise InfeasibleDeployment(
                f"could not place {ap_count} APs with separation "
                f"{min_separation} m in {DEPLOY_ATTEMPT_BUDGET} attempts")
        attempts += 1
        cand = np.array([rng.uniform(region.x_min, region.x_max),
                         rng.uniform(region.y_min, region.y_max)])
        if all(np.linalg.norm(cand - p) >= min_separation for p in points):
            points.append(cand)
    aps = np.array(points)
    # reference randomly designated, then reindexed to 0; remaining indices
    # randomly permuted so AP labels carry no placement-order information
    ref = int(rng.integers(ap_count))
    rest = [i for i in range(ap_count) if i != ref]
    order = [ref] + [rest[i] for i in rng.permutation(ap_count - 1)]
    return Deployment(ap_positions=aps[order], reference_index=0,
                      region=region, wavelength=wavelength)


def with_wavelength(deployment: Deployment, wavelength: float) -> Deployment:
    """Copy of a deployment with a different carrier wavelength."""
    return Deployment(ap_positions=deployment.ap_positions.copy(),
                      reference_index=deployment.reference_index,
                      region=deployment.region, wavelength=wavelength,
                      j_set=deployment.j_set)


def ambiguity_bounds(deployment: Deployment) -> AmbiguityBounds:
    """Geometric per-branch label bounds for the deployment's j_set."""
    dists = deployment.reference_distances()
    q = np.floor(dists / deployment.wavelength).astype(int)
    q_per = 2 * q + 2
    return AmbiguityBounds(q=q, Q_per=q_per, Q=int(q_per.sum()))


def ue_phase_angles(deployment: Deployment, distances: np.ndarray, phi_ue: float):
    """Unwrapped carrier phases psi_i = -(2*pi/lambda)*d_i + phi_ue."""
    return -(2.0 * np.pi / deployment.wavelength) * np.asarray(distances) + phi_ue


def ground_truth(deployment: Deployment, ue, phi_ue: float) -> GroundTruth:
    """Distances, wrapping integers and differential truth for a UE placement.

    The differential ambiguity of branch j combines the per-antenna wrapping
    integers with the one-cycle wrap of the noiseless phase difference, which
    makes it equal floor(diff_distance/lambda) and pairs it exactly with the
    [0, lambda) differential measurement. Raises DegeneratePosition if the UE
    is within EPS_POSITION of any AP.
    """
    ue = np.asarray(ue, dtype=float)
    if not deployment.region.contains(ue):
        raise ValueError("UE position outside the region")
    d = np.linalg.norm(ue - deployment.ap_positions, axis=1)
    if np.min(d) <= EPS_POSITION:
        raise DegeneratePosition(f"UE within {EPS_POSITION} m of an AP")
    psi = ue_phase_angles(deployment, d, phi_ue)
    theta, z = wrap_phase(psi)
    ref = deployment.reference_index
    diff_d = np.delete(d, ref) - d[ref]
    js = list(deployment.j_set)
    _, k = wrap_cycle_difference(theta[js] - theta[ref])
    diff_z = z[js] - z[ref] + k
    return GroundTruth(ue_position=ue, phi_ue=float(phi_ue), distances=d,
                       z=z, diff_distances=diff_d, diff_ambiguities=diff_z)
