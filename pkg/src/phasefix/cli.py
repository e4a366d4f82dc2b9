"""Config-driven command-line pipeline.

Subcommands: deploy | gendata | train | eval | position | flops. Each reads
a TOML run configuration, writes its artifacts under the configured output
directory, and echoes the resolved configuration to manifest.json there.
Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:                       # Python 3.10
    import tomli as tomllib

import numpy as np

from . import ambiguity_net, evaluation, hyperbola_solver, simulator
from .errors import (ConfigParseError, MissingArtifact, MissingModel,
                     PhasefixError)
from .geometry import Deployment, Region, ambiguity_bounds, deploy_aps
from .hyperbola_solver import SolverConfig
from .simulator import SPEED_OF_LIGHT, RadioConfig

# seed stream offsets: data splits use simulator's split codes internally;
# these separate the remaining pipeline stages from one another
_SEED_DEPLOY = 101
_SEED_TRAIN = 202
_SEED_EVAL = 303


@dataclass(frozen=True)
class DeployConfig:
    region: tuple = (0.0, 10.0, 0.0, 10.0)   # x_min, x_max, y_min, y_max
    ap_count: int = 9
    min_separation: float = 2.0
    seed: int = -1        # -1: derive the placement seed from root_seed


@dataclass(frozen=True)
class MlpSection:
    width: int = 128
    shared_hidden_layers: int = 8
    branch_hidden_layers: int = 2
    dropout_rate: float = 0.1
    l2_coeff: float = 1e-5


@dataclass(frozen=True)
class TrainSection:
    batch_size: int = 500
    epochs: int = 500
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


@dataclass(frozen=True)
class SolverSection:
    iterations: int = 500
    learning_rate: float = 0.08
    threshold: float = 1e-4
    restarts: int = 1
    backtracking: bool = True


@dataclass(frozen=True)
class DatasetSection:
    train_size: int = 700000
    val_size: int = 150000
    test_size: int = 100000


@dataclass(frozen=True)
class RadioSection:
    carrier_freq_hz: float = 2.3e9
    bandwidth_hz: float = 1.8e5
    noise_psd_dbm_hz: float = -174.0
    noise_figure_db: float = 13.0
    noise_scale: float = 1.0
    failure_phase_model: str = "uniform"


@dataclass(frozen=True)
class EvalSection:
    # (p_f, tx_power_dbm) pairs that are trained and evaluated
    combos: tuple = ((0.0, -20.0), (0.0, -10.0), (0.0, 0.0),
                     (1e-3, -20.0), (1e-3, -10.0), (1e-3, 0.0),
                     (1e-2, -20.0), (1e-2, -10.0), (1e-2, 0.0))
    forced_failure_counts: tuple = (0, 1, 2, 3)


@dataclass(frozen=True)
class RunConfig:
    root_seed: int = 20260810
    output_dir: str = "runs/default"
    threads: int = 0                      # 0 = leave BLAS threading alone
    deployment: DeployConfig = field(default_factory=DeployConfig)
    radio: RadioSection = field(default_factory=RadioSection)
    mlp: MlpSection = field(default_factory=MlpSection)
    train: TrainSection = field(default_factory=TrainSection)
    solver: SolverSection = field(default_factory=SolverSection)
    datasets: DatasetSection = field(default_factory=DatasetSection)
    eval: EvalSection = field(default_factory=EvalSection)


_SECTION_TYPES = {
    "deployment": DeployConfig, "radio": RadioSection, "mlp": MlpSection,
    "train": TrainSection, "solver": SolverSection,
    "datasets": DatasetSection, "eval": EvalSection,
}


def _build_section(cls, data: dict, section: str):
    fields = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - fields
    if unknown:
        raise ConfigParseError(f"unknown key '{section}.{sorted(unknown)[0]}'")
    coerced = {}
    for key, value in data.items():
        if isinstance(value, list):
            value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        coerced[key] = value
    try:
        return cls(**coerced)
    except (TypeError, ValueError) as exc:
        raise ConfigParseError(f"section [{section}]: {exc}") from None


def load_config(path) -> RunConfig:
    """Parse and validate a TOML run configuration. Unknown keys are errors."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigParseError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigParseError(f"{path}: {exc}") from None
    top_fields = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(raw) - top_fields
    if unknown:
        raise ConfigParseError(f"unknown key '{sorted(unknown)[0]}'")
    kwargs = {}
    for key, value in raw.items():
        if key in _SECTION_TYPES:
            if not isinstance(value, dict):
                raise ConfigParseError(f"'{key}' must be a table")
            kwargs[key] = _build_section(_SECTION_TYPES[key], value, key)
        else:
            kwargs[key] = value
    cfg = RunConfig(**kwargs)
    env_seed = os.environ.get("PHASEFIX_SEED")
    if env_seed is not None:
        try:
            cfg = replace(cfg, root_seed=int(env_seed))
        except ValueError:
            raise ConfigParseError(f"PHASEFIX_SEED must be an integer, got {env_seed!r}") from None
    return cfg


def _radio_for(cfg: RunConfig, power_dbm: float) -> RadioConfig:
    r = cfg.radio
    return RadioConfig(carrier_freq=r.carrier_freq_hz, bandwidth=r.bandwidth_hz,
                       tx_power_dbm=power_dbm,
                       noise_psd_dbm_hz=r.noise_psd_dbm_hz,
                       noise_figure_db=r.noise_figure_db,
                       noise_scale=r.noise_scale,
                       failure_phase_model=r.failure_phase_model)


def _solver_for(cfg: RunConfig) -> SolverConfig:
    s = cfg.solver
    return SolverConfig(iterations=s.iterations, learning_rate=s.learning_rate,
                        threshold=s.threshold, restarts=s.restarts,
                        backtracking=s.backtracking)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(cfg: RunConfig, command: str) -> None:
    doc = {"command": command, "config": dataclasses.asdict(cfg)}
    with open(_out_dir(cfg) / "manifest.json", "w") as fh:
        json.dump(doc, fh, indent=1, default=list)
        fh.write("\n")


def _deployment_path(cfg: RunConfig) -> Path:
    return _out_dir(cfg) / "deployment.json"


def _load_deployment(cfg: RunConfig) -> Deployment:
    path = _deployment_path(cfg)
    if not path.exists():
        raise MissingArtifact(f"{path} not found; run 'deploy' first")
    return Deployment.load(path)


def _combo_tag(p_f: float, power: float) -> str:
    return f"pf{p_f:g}_pt{power:g}dBm"


def _dataset_path(cfg: RunConfig, split: str, p_f: float, power: float) -> Path:
    return _out_dir(cfg) / "data" / f"{split}_{_combo_tag(p_f, power)}.csv"


def _model_path(cfg: RunConfig, p_f: float, power: float) -> Path:
    return _out_dir(cfg) / "models" / f"model_{_combo_tag(p_f, power)}.json"


def cmd_deploy(cfg: RunConfig) -> int:
    region = Region(*cfg.deployment.region)
    wavelength = SPEED_OF_LIGHT / cfg.radio.carrier_freq_hz
    if cfg.deployment.seed >= 0:
        seed = cfg.deployment.seed
    else:
        seed = [cfg.root_seed & 0xFFFFFFFF, _SEED_DEPLOY]
    dep = deploy_aps(region, cfg.deployment.ap_count,
                     cfg.deployment.min_separation, seed=seed,
                     wavelength=wavelength)
    dep.save(_deployment_path(cfg))
    bounds = ambiguity_bounds(dep)
    print(f"deployment: {dep.ap_count} APs, Q = {bounds.Q}, "
          f"wrote {_deployment_path(cfg)}")
    return 0


def cmd_gendata(cfg: RunConfig, split: str) -> int:
    dep = _load_deployment(cfg)
    sizes = {"train": cfg.datasets.train_size, "val": cfg.datasets.val_size,
             "test": cfg.datasets.test_size}
    if split not in sizes:
        raise ConfigParseError(f"unknown split '{split}' (train/val/test)")
    (_out_dir(cfg) / "data").mkdir(exist_ok=True)
    for p_f, power in cfg.eval.combos:
        radio = _radio_for(cfg, power)
        ds = simulator.generate_dataset(dep, radio, p_f, sizes[split], split,
                                        cfg.root_seed)
        path = _dataset_path(cfg, split, p_f, power)
        simulator.write_dataset(ds, path)
        print(f"wrote {path} ({sizes[split]} samples)")
    return 0


def cmd_train(cfg: RunConfig, epochs_override: int | None = None) -> int:
    dep = _load_deployment(cfg)
    bounds = ambiguity_bounds(dep)
    (_out_dir(cfg) / "models").mkdir(exist_ok=True)
    epochs = cfg.train.epochs if epochs_override is None else epochs_override
    hyper = ambiguity_net.TrainConfig(
        batch_size=cfg.train.batch_size, epochs=epochs,
        learning_rate=cfg.train.learning_rate, beta1=cfg.train.beta1,
        beta2=cfg.train.beta2, epsilon=cfg.train.epsilon)
    for p_f, power in cfg.eval.combos:
        train_path = _dataset_path(cfg, "train", p_f, power)
        val_path = _dataset_path(cfg, "val", p_f, power)
        for p in (train_path, val_path):
            if not p.exists():
                raise MissingArtifact(f"{p} not found; run 'gendata' first")
        train_set = simulator.read_dataset(train_path)
        val_set = simulator.read_dataset(val_path)
        mcfg = ambiguity_net.config_for(
            dep, bounds, width=cfg.mlp.width,
            shared_hidden_layers=cfg.mlp.shared_hidden_layers,
            branch_hidden_layers=cfg.mlp.branch_hidden_layers,
            dropout_rate=cfg.mlp.dropout_rate, l2_coeff=cfg.mlp.l2_coeff)
        model = ambiguity_net.init_model(
            mcfg, seed=[cfg.root_seed & 0xFFFFFFFF, _SEED_TRAIN])
        tag = _combo_tag(p_f, power)
        model, history = ambiguity_net.train(
            model, train_set, val_set, hyper,
            seed=[cfg.root_seed & 0xFFFFFFFF, _SEED_TRAIN, 1],
            on_epoch=lambda h: print(
                f"  [{tag}] epoch {h['epoch']}/{epochs} "
                f"train {h['train_loss']:.4f} val {h['val_loss']:.4f} "
                f"acc {h['val_accuracy_pct']:.2f}%", flush=True))
        mpath = _model_path(cfg, p_f, power)
        ambiguity_net.save_model(model, mpath)
        hist_path = mpath.with_suffix(".history.csv")
        with open(hist_path, "w") as fh:
            fh.write("epoch,train_loss,val_loss,val_accuracy_pct\n")
            for h in history:
                fh.write(f"{h['epoch']},{h['train_loss']:.10g},"
                         f"{h['val_loss']:.10g},{h['val_accuracy_pct']:.6f}\n")
        tail = history[-1] if history else {"val_accuracy_pct": float("nan")}
        print(f"trained {mpath.name}: epochs={epochs} "
              f"val_acc={tail['val_accuracy_pct']:.2f}%")
    return 0


def cmd_eval(cfg: RunConfig) -> int:
    dep = _load_deployment(cfg)
    store = {}
    for p_f, power in cfg.eval.combos:
        mpath = _model_path(cfg, p_f, power)
        if not mpath.exists():
            raise MissingModel(f"{mpath} not found; run 'train' first")
        store[(p_f, power)] = ambiguity_net.load_model(mpath)
    reports_dir = _out_dir(cfg) / "reports"
    evaluation.run_experiment(
        dep, _radio_for(cfg, 0.0), list(cfg.eval.combos), store,
        _solver_for(cfg), cfg.datasets.test_size,
        seed=cfg.root_seed + _SEED_EVAL, out_dir=reports_dir,
        forced_failure_counts=cfg.eval.forced_failure_counts)
    print(f"reports written under {reports_dir}")
    return 0


def cmd_position(cfg: RunConfig, model_path: str, delta_json: str,
                 dz_json: str | None = None) -> int:
    dep = _load_deployment(cfg)
    delta = np.asarray(json.loads(delta_json), dtype=float)
    if dz_json is not None:
        dz = np.asarray(json.loads(dz_json), dtype=int)
    else:
        if not Path(model_path).exists():
            raise MissingArtifact(f"model file {model_path} not found")
        model = ambiguity_net.load_model(model_path)
        dz = ambiguity_net.predict(model, delta)
    delta_j = delta[[j - 1 for j in dep.j_set]]
    result = hyperbola_solver.solve(delta_j, dz, dep, _solver_for(cfg),
                                    seed=[cfg.root_seed & 0xFFFFFFFF, _SEED_EVAL, 7])
    print(result.to_json())
    return 0


def cmd_flops(cfg: RunConfig) -> int:
    dep_path = _deployment_path(cfg)
    mlp = cfg.mlp
    if dep_path.exists():
        dep = Deployment.load(dep_path)
        bounds = ambiguity_bounds(dep)
        branch_count, q_total, ap_count = len(dep.j_set), bounds.Q, dep.ap_count
        branch_sizes = tuple(int(v) for v in bounds.Q_per)
    else:
        # headline numbers for the reference configuration
        branch_count, q_total, ap_count = 8, 334, 9
        even = 2 * (q_total // (2 * branch_count)) + 2
        branch_sizes = tuple([even] * (branch_count - 1)
                             + [q_total - even * (branch_count - 1)])
    c_nn = evaluation.flops_nn(mlp.width, branch_count, q_total, ap_count)
    c_gd = evaluation.flops_gd(cfg.solver.iterations, branch_count)
    mcfg = ambiguity_net.MlpConfig(
        input_dim=ap_count - 1, branch_sizes=branch_sizes, width=mlp.width,
        shared_hidden_layers=mlp.shared_hidden_layers,
        branch_hidden_layers=mlp.branch_hidden_layers)
    c_model = evaluation.flops_model(mcfg)
    print(f"C_NN  (formula) = {c_nn}")
    print(f"C_GD  (formula) = {c_gd}")
    print(f"C_T   (formula) = {c_nn + c_gd}")
    print(f"C_NN  (architecture, {mlp.shared_hidden_layers}+"
          f"{mlp.branch_hidden_layers} hidden) = {c_model}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phasefix",
        description="Phase-only positioning pipeline over a distributed AP network")
    parser.add_argument("--config", "-c", required=True, help="TOML run configuration")
    parser.add_argument("--threads", type=int, default=None,
                        help="BLAS thread cap (default: leave untouched)")
    parser.add_argument("--seed", type=int, default=None, help="override root seed")
    parser.add_argument("--output-dir", default=None, help="override output directory")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("deploy", help="place the AP network")
    p = sub.add_parser("gendata", help="generate labeled datasets")
    p.add_argument("--split", required=True, choices=["train", "val", "test"])
    p = sub.add_parser("train", help="train one model per (p_f, power) combo")
    p.add_argument("--epochs", type=int, default=None, help="override epoch count")
    sub.add_parser("eval", help="run the evaluation harness, write report CSVs")
    p = sub.add_parser("position", help="solve one measurement vector")
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--delta", required=True, help="JSON list of differential measurements")
    p.add_argument("--dz", default=None, help="JSON list of ambiguities (bypass the model)")
    sub.add_parser("flops", help="print FLOP accounting")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None and args.threads > 0:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, root_seed=args.seed)
        if args.output_dir is not None:
            cfg = replace(cfg, output_dir=args.output_dir)
    except ConfigParseError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        _write_manifest(cfg, args.command)
        if args.command == "deploy":
            return cmd_deploy(cfg)
        if args.command == "gendata":
            return cmd_gendata(cfg, args.split)
        if args.command == "train":
            return cmd_train(cfg, args.epochs)
        if args.command == "eval":
            return cmd_eval(cfg)
        if args.command == "position":
            return cmd_position(cfg, args.model, args.delta, args.dz)
        if args.command == "flops":
            return cmd_flops(cfg)
        raise ConfigParseError(f"unknown command {args.command}")
    except ConfigParseError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except PhasefixError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
