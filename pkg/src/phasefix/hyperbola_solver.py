"""Gradient-descent position solver on hyperbola residuals with a
cost-threshold failure flag.

Each reconstructed differential distance constrains the UE to a hyperbola
with the paired APs as foci; the solver minimizes the summed squared
residuals with plain fixed-step gradient descent and always returns an
estimate, flagged unreliable when the final cost exceeds the threshold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DimensionMismatch, SingularPoint
from .geometry import Deployment


class Flag(Enum):
    NO_AP_FAILURE = "NoApFailure"
    POTENTIAL_AP_FAILURE = "PotentialApFailure"


@dataclass(frozen=True)
class SolverConfig:
    """Fixed-iteration GD configuration.

    backtracking halves a step (for that iteration only) whenever it would
    increase the cost; the nominal learning_rate is restored every iteration.
    Near a reference AP the cost curvature exceeds 2/learning_rate for the
    default 0.08, where plain fixed-step GD enters a limit cycle instead of
    converging; backtracking leaves the stable regions' arithmetic untouched
    while damping those cycles.
    """

    iterations: int = 500
    learning_rate: float = 0.08
    threshold: float = 1e-4          # m^2, on the final cost
    restarts: int = 1
    singularity_guard: float = 1e-9  # m
    init_mode: str = "uniform"       # uniform-random inside the region
    backtracking: bool = True

    def __post_init__(self):
        if self.iterations < 1 or self.learning_rate <= 0 or self.threshold <= 0:
            raise ValueError("iterations >= 1, learning_rate > 0, threshold > 0 required")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")

    def as_dict(self) -> dict:
        return {"iterations": self.iterations, "learning_rate": self.learning_rate,
                "threshold": self.threshold, "restarts": self.restarts,
                "singularity_guard": self.singularity_guard,
                "init_mode": self.init_mode, "backtracking": self.backtracking}


@dataclass(frozen=True)
class SolverResult:
    x_hat: np.ndarray
    final_cost: float
    flag: Flag
    restarts_used: int
    trace: np.ndarray | None = None

    def to_json_dict(self) -> dict:
        return {"x_hat": [float(self.x_hat[0]), float(self.x_hat[1])],
                "final_cost": self.final_cost,
                "flag": self.flag.value,
                "iterations": None if self.trace is None else len(self.trace),
                "restarts_used": self.restarts_used}

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict())


def reconstruct_diff_distances(delta_j, dz_hat, wavelength: float) -> np.ndarray:
    """Failure-independent differential distances: delta + wavelength * dz."""
    delta_j = np.asarray(delta_j, dtype=float)
    dz_hat = np.asarray(dz_hat, dtype=float)
    if delta_j.shape != dz_hat.shape:
        raise DimensionMismatch(f"delta {delta_j.shape} vs dz {dz_hat.shape}")
    return delta_j + wavelength * dz_hat


def _geometry_arrays(deployment: Deployment):
    ap_j = deployment.ap_positions[list(deployment.j_set)]
    ap_0 = deployment.ap_positions[deployment.reference_index]
    return ap_j, ap_0


def cost(x, deployment: Deployment, dd_hat, guard: float = 1e-9) -> float:
    """Sum of squared hyperbola residuals at position x."""
    x = np.asarray(x, dtype=float)
    ap_j, ap_0 = _geometry_arrays(deployment)
    d_j = np.linalg.norm(x - ap_j, axis=1)
    d_0 = np.linalg.norm(x - ap_0)
    if d_0 < guard or np.min(d_j) < guard:
        raise SingularPoint("position within the singularity guard of an AP")
    e = (d_j - d_0) - np.asarray(dd_hat)
    return float(np.dot(e, e))


def gradient(x, deployment: Deployment, dd_hat, guard: float = 1e-9) -> np.ndarray:
    """Analytic cost gradient: 2 * sum e_k * (u_k - u_0) with unit offsets."""
    x = np.asarray(x, dtype=float)
    ap_j, ap_0 = _geometry_arrays(deployment)
    diff_j = x - ap_j
    diff_0 = x - ap_0
    d_j = np.linalg.norm(diff_j, axis=1)
    d_0 = np.linalg.norm(diff_0)
    if d_0 < guard or np.min(d_j) < guard:
        raise SingularPoint("position within the singularity guard of an AP")
    e = (d_j - d_0) - np.asarray(dd_hat)
    terms = diff_j / d_j[:, None] - diff_0[None, :] / d_0
    return 2.0 * np.sum(e[:, None] * terms, axis=0)


def solve_batch(dd_hat: np.ndarray, deployment: Deployment, config: SolverConfig,
                seed) -> tuple:
    """Vectorized solve over S samples (and the configured restarts).

    dd_hat has shape (S, |J|). Returns (positions (S, 2), final_costs (S,)).
    Each sample's arithmetic is elementwise in the batch, so results match
    the single-sample path exactly.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    dd_hat = np.atleast_2d(np.asarray(dd_hat, dtype=float))
    S = dd_hat.shape[0]
    R = config.restarts
    ap_j, ap_0 = _geometry_arrays(deployment)
    if dd_hat.shape[1] != len(ap_j):
        raise DimensionMismatch(f"expected {len(ap_j)} branches, got {dd_hat.shape[1]}")
    region = deployment.region
    x = np.empty((R, S, 2))
    x[..., 0] = rng.uniform(region.x_min, region.x_max, size=(R, S))
    x[..., 1] = rng.uniform(region.y_min, region.y_max, size=(R, S))
    guard = config.singularity_guard
    alpha = config.learning_rate

    def residuals(pts):
        diff_j = pts[:, :, None, :] - ap_j[None, None, :, :]   # (R,S,J,2)
        diff_0 = pts - ap_0[None, None, :]                     # (R,S,2)
        d_j = np.sqrt(np.sum(diff_j ** 2, axis=-1))            # (R,S,J)
        d_0 = np.sqrt(np.sum(diff_0 ** 2, axis=-1))            # (R,S)
        e = (d_j - d_0[:, :, None]) - dd_hat[None, :, :]       # (R,S,J)
        return diff_j, diff_0, d_j, d_0, e

    t = 0
    while t < config.iterations:
        diff_j, diff_0, d_j, d_0, e = residuals(x)
        near = (d_0 < guard) | (np.min(d_j, axis=-1) < guard)
        if np.any(near):
            # an iterate landed on an AP: nudge the offenders, redo the step
            bump = rng.normal(size=(int(near.sum()), 2))
            bump *= 1e-6 / np.linalg.norm(bump, axis=1, keepdims=True)
            x[near] += bump
            continue
        terms = diff_j / d_j[..., None] - (diff_0 / d_0[..., None])[:, :, None, :]
        grad = 2.0 * np.sum(e[..., None] * terms, axis=2)      # (R,S,2)
        if not config.backtracking:
            x -= alpha * grad
        else:
            cost_now = np.sum(e ** 2, axis=-1)                 # (R,S)
            step = np.full((R, S, 1), alpha)
            x_new = x - step * grad
            for _ in range(40):
                _, _, dj_n, d0_n, e_n = residuals(x_new)
                worse = np.sum(e_n ** 2, axis=-1) > cost_now
                # keep singular candidates out of the accepted set too
                worse |= (d0_n < guard) | (np.min(dj_n, axis=-1) < guard)
                if not np.any(worse):
                    break
                step[worse] *= 0.5
                x_new = x - step * grad
            x = x_new
        t += 1
    # final costs per restart, then keep the best (lowest index on ties)
    _, _, d_j, d_0, e = residuals(x)
    costs = np.sum(e ** 2, axis=-1)                            # (R,S)
    best = np.argmin(costs, axis=0)                            # first minimum
    cols = np.arange(S)
    return x[best, cols], costs[best, cols]


def solve(delta_j, dz_hat, deployment: Deployment, config: SolverConfig, seed,
          record_trace: bool = False) -> SolverResult:
    """Reconstruct differential distances, run fixed-iteration GD from a
    random in-region init (best of `restarts`), and flag by threshold.

    There is no early stopping and iterates are not confined to the region.
    A threshold exceedance may equally indicate a wrong ambiguity estimate;
    it is reported as a potential AP failure.
    """
    dd_hat = reconstruct_diff_distances(delta_j, dz_hat, deployment.wavelength)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if not record_trace:
        pos, c = solve_batch(dd_hat[None, :], deployment, config, rng)
        x_hat, final_cost = pos[0], float(c[0])
        trace = None
    else:
        best = None
        trace = None
        region = deployment.region
        for r in range(config.restarts):
            x = np.array([rng.uniform(region.x_min, region.x_max),
                          rng.uniform(region.y_min, region.y_max)])
            costs = np.empty(config.iterations)
            for t in range(config.iterations):
                while True:
                    try:
                        g = gradient(x, deployment, dd_hat, config.singularity_guard)
                        c_now = cost(x, deployment, dd_hat, config.singularity_guard)
                        break
                    except SingularPoint:
                        bump = rng.normal(size=2)
                        x = x + bump * (1e-6 / np.linalg.norm(bump))
                step = config.learning_rate
                x_new = x - step * g
                if config.backtracking:
                    for _ in range(40):
                        try:
                            if cost(x_new, deployment, dd_hat,
                                    config.singularity_guard) <= c_now:
                                break
                        except SingularPoint:
                            pass
                        step *= 0.5
                        x_new = x - step * g
                x = x_new
                costs[t] = cost(x, deployment, dd_hat, config.singularity_guard)
            if best is None or costs[-1] < best[1]:
                best = (x, float(costs[-1]))
                trace = costs
        x_hat, final_cost = best
    flag = Flag.NO_AP_FAILURE if final_cost <= config.threshold else Flag.POTENTIAL_AP_FAILURE
    return SolverResult(x_hat=np.asarray(x_hat), final_cost=final_cost, flag=flag,
                        restarts_used=config.restarts, trace=trace)
