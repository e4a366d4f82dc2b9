"""Metrics and the experiment harness: ambiguity accuracy, positioning
error ECDF and percentiles, threshold-test pass ratios, FLOP accounting.

run_experiment reproduces the evaluation protocol: per trained
(transmit power, failure probability) configuration it regenerates matched
test sets, runs predict -> solve per sample, and emits one CSV (plus a JSON
mirror) per results table.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import ambiguity_net, hyperbola_solver, simulator
from .errors import EmptyInput, LengthMismatch, MissingModel
from .geometry import Deployment
from .hyperbola_solver import SolverConfig
from .simulator import FLOAT_FMT, RadioConfig

FORCED_FAILURE_SETS = (0, 1, 2, 3)
_TESTSET_NAMES = {0: "no_failure", 1: "1_failure", 2: "2_failures", 3: "3_failures"}


@dataclass(frozen=True)
class FailureTestSpec:
    """Forced-failure test set: each sample has exactly this many failed APs,
    at indices drawn randomly per sample."""

    forced_failure_count: int

    def __post_init__(self):
        if self.forced_failure_count < 0:
            raise ValueError("failure count must be non-negative")


@dataclass
class EvalReport:
    config: dict
    sample_count: int
    accuracy_pct: float
    error_percentiles: dict          # percentile -> meters
    ecdf_errors: np.ndarray
    ecdf_fractions: np.ndarray
    pass_ratios: dict                # testset name -> percent
    flops: dict

    def to_json_dict(self) -> dict:
        return {"config": self.config,
                "sample_count": self.sample_count,
                "accuracy_pct": self.accuracy_pct,
                "error_percentiles": {str(k): v for k, v in
                                      self.error_percentiles.items()},
                "pass_ratios": self.pass_ratios,
                "flops": self.flops}


def overall_accuracy(predictions, labels) -> float:
    """Exact-vector match rate in percent: a sample counts only when every
    branch component matches."""
    preds = np.asarray(predictions, dtype=int)
    labs = np.asarray(labels, dtype=int)
    if preds.shape != labs.shape:
        raise LengthMismatch(f"predictions {preds.shape} vs labels {labs.shape}")
    if preds.size == 0:
        raise LengthMismatch("need at least one sample")
    return float(np.all(preds == labs, axis=1).mean() * 100.0)


def positioning_errors(estimates, truths) -> np.ndarray:
    """Euclidean position errors in meters.

    estimates may be SolverResult objects or an (S, 2) array.
    """
    if len(estimates) == 0:
        raise EmptyInput("no solver results")
    if isinstance(estimates[0], hyperbola_solver.SolverResult):
        est = np.array([r.x_hat for r in estimates])
    else:
        est = np.asarray(estimates, dtype=float)
    truths = np.asarray(truths, dtype=float)
    if est.shape != truths.shape:
        raise LengthMismatch(f"estimates {est.shape} vs truths {truths.shape}")
    return np.linalg.norm(est - truths, axis=1)


def ecdf(errors) -> tuple:
    """Empirical CDF: sorted errors and cumulative fractions (i+1)/n."""
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        raise EmptyInput("no errors")
    x = np.sort(errors)
    return x, np.arange(1, len(x) + 1) / len(x)


def percentile(errors, p: float) -> float:
    """Nearest-rank percentile: the ceil(p*S/100)-th order statistic."""
    errors = np.asarray(errors, dtype=float)
    if errors.size == 0:
        raise EmptyInput("no errors")
    if not 0 < p <= 100:
        raise ValueError("percentile must be in (0, 100]")
    rank = int(np.ceil(p * errors.size / 100.0))
    return float(np.sort(errors)[max(rank, 1) - 1])


def failure_pass_ratio(final_costs, tau: float) -> float:
    """Percent of samples whose final cost passes the threshold test."""
    costs = np.asarray(final_costs, dtype=float)
    if costs.size == 0:
        raise EmptyInput("no solver costs")
    return float((costs <= tau).mean() * 100.0)


def flops_nn(width: int, branch_count: int, q_total: int, ap_count: int) -> int:
    """Closed-form inference FLOP estimate of the branch classifier."""
    return (width ** 2 * (4 * branch_count + 16)
            + width * (2 * q_total + 4 * ap_count))


def flops_gd(iterations: int, branch_count: int) -> int:
    """Closed-form FLOP estimate of the GD solver (18|J|+10 per iteration)."""
    return iterations * (18 * branch_count + 10)


def flops_model(config: ambiguity_net.MlpConfig) -> int:
    """FLOPs of the actual architecture, 2 * n_out * n_in per dense layer."""
    total = 2 * config.width * config.feature_dim
    total += config.shared_hidden_layers * 2 * config.width ** 2
    for q_total in config.branch_sizes:
        total += config.branch_hidden_layers * 2 * config.width ** 2
        total += 2 * q_total * config.width
    return total


def _predict_chunked(model, X, chunk: int = 4096) -> np.ndarray:
    out = []
    for start in range(0, len(X), chunk):
        out.append(ambiguity_net.predict_batch(model, X[start:start + chunk]))
    return np.vstack(out)


def evaluate_configuration(deployment: Deployment, radio: RadioConfig,
                           p_f: float, model, solver_config: SolverConfig,
                           sample_count: int, seed: int,
                           forced_failure_counts=FORCED_FAILURE_SETS) -> EvalReport:
    """Full metric set for one trained configuration.

    Generates a matched test set (failures drawn at p_f), computes accuracy
    and positioning metrics on it, then regenerates one forced-failure set
    per requested count for the threshold-test pass ratios.
    """
    if sample_count < 1:
        raise EmptyInput("sample_count must be >= 1")
    test = simulator.generate_dataset(deployment, radio, p_f, sample_count,
                                      "test", seed)
    X = test.features()
    labels = test.label_matrix()
    preds = _predict_chunked(model, X)
    acc = overall_accuracy(preds, labels)

    j_cols = [j - 1 for j in deployment.j_set]
    dd_hat = X[:, j_cols] + deployment.wavelength * preds
    pos, costs = hyperbola_solver.solve_batch(
        dd_hat, deployment, solver_config,
        np.random.default_rng([seed & 0xFFFFFFFF, 0xE0]))
    errors = positioning_errors(pos, test.ue_positions())
    perc = {p: percentile(errors, p) for p in (50, 90, 95, 99)}
    ex, ef = ecdf(errors)

    pass_ratios = {}
    for n_fail in forced_failure_counts:
        forced = simulator.generate_dataset(
            deployment, radio, p_f, sample_count, f"test_ff{n_fail}", seed,
            forced_failure_count=n_fail)
        Xf = forced.features()
        predf = _predict_chunked(model, Xf)
        ddf = Xf[:, j_cols] + deployment.wavelength * predf
        _, costs_f = hyperbola_solver.solve_batch(
            ddf, deployment, solver_config,
            np.random.default_rng([seed & 0xFFFFFFFF, 0xE1, n_fail]))
        pass_ratios[_TESTSET_NAMES.get(n_fail, f"{n_fail}_failures")] = \
            failure_pass_ratio(costs_f, solver_config.threshold)

    cfg_echo = {"p_f": p_f, "tx_power_dbm": radio.tx_power_dbm,
                "radio": radio.as_dict(), "solver": solver_config.as_dict(),
                "mlp": model.config.as_dict(), "seed": seed,
                "sample_count": sample_count}
    bounds_q = int(sum(model.config.branch_sizes))
    flops = {"nn": flops_nn(model.config.width, model.config.branch_count,
                            bounds_q, deployment.ap_count),
             "gd": flops_gd(solver_config.iterations, model.config.branch_count),
             "model": flops_model(model.config)}
    flops["total"] = flops["nn"] + flops["gd"]
    return EvalReport(config=cfg_echo, sample_count=sample_count,
                      accuracy_pct=acc, error_percentiles=perc,
                      ecdf_errors=ex, ecdf_fractions=ef,
                      pass_ratios=pass_ratios, flops=flops)


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _fmt(x) -> str:
    return FLOAT_FMT % x


def _cfg_tag(p_f: float, power_dbm: float) -> str:
    return f"pf{p_f:g}_pt{power_dbm:g}dBm"


def run_experiment(deployment: Deployment, radio_base: RadioConfig,
                   combos, model_store: dict, solver_config: SolverConfig,
                   sample_count: int, seed: int, out_dir,
                   forced_failure_counts=FORCED_FAILURE_SETS) -> dict:
    """Evaluate every (p_f, tx_power_dbm) combo and write the report tables.

    combos: iterable of (p_f, power_dbm) pairs; model_store maps those pairs
    to trained models (MissingModel otherwise). Emits table1/table2/table3
    and per-combo ECDF CSVs with JSON mirrors under out_dir. Returns the
    EvalReports keyed by combo.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = {}
    for idx, (p_f, power) in enumerate(combos):
        key = (p_f, power)
        if key not in model_store:
            raise MissingModel(f"no trained model for p_f={p_f}, P_T={power} dBm")
        radio = replace(radio_base, tx_power_dbm=power)
        reports[key] = evaluate_configuration(
            deployment, radio, p_f, model_store[key], solver_config,
            sample_count, seed + idx, forced_failure_counts)

    ordered = sorted(reports.keys(), key=lambda k: (k[0], k[1]))
    rows1 = [[ _fmt(pf), _fmt(pw), f"{reports[(pf, pw)].accuracy_pct:.6f}"]
             for pf, pw in ordered]
    _write_csv(out_dir / "table1.csv", ["p_f", "P_T_dBm", "accuracy_pct"], rows1)

    rows2 = [["hyperbola_gd", _fmt(pf), _fmt(pw),
              f"{reports[(pf, pw)].error_percentiles[95] * 100.0:.6f}"]
             for pf, pw in ordered]
    _write_csv(out_dir / "table2.csv",
               ["approach", "p_f", "P_T_dBm", "p95_cm"], rows2)

    rows3 = []
    for n_fail in forced_failure_counts:
        name = _TESTSET_NAMES.get(n_fail, f"{n_fail}_failures")
        for pf, pw in ordered:
            rows3.append([name, _fmt(pf), _fmt(pw),
                          f"{reports[(pf, pw)].pass_ratios[name]:.6f}"])
    _write_csv(out_dir / "table3.csv",
               ["testset", "p_f_train", "P_T_dBm", "pass_pct"], rows3)

    for (pf, pw) in ordered:
        rep = reports[(pf, pw)]
        tag = _cfg_tag(pf, pw)
        _write_csv(out_dir / f"ecdf_{tag}.csv", ["error_m", "cdf"],
                   [[_fmt(e), _fmt(c)] for e, c in
                    zip(rep.ecdf_errors, rep.ecdf_fractions)])
        with open(out_dir / f"report_{tag}.json", "w") as fh:
            json.dump(rep.to_json_dict(), fh, indent=1)
            fh.write("\n")

    for stem in ("table1", "table2", "table3"):
        _csv_to_json_mirror(out_dir / f"{stem}.csv")
    return reports


def _csv_to_json_mirror(csv_path: Path) -> None:
    with open(csv_path) as fh:
        header = fh.readline().rstrip("\n").split(",")
        records = [dict(zip(header, line.rstrip("\n").split(",")))
                   for line in fh]
    with open(csv_path.with_suffix(".json"), "w") as fh:
        json.dump(records, fh, indent=1)
        fh.write("\n")
