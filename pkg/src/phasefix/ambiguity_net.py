"""Branch-classifier MLP that resolves failure-independent differential
integer ambiguities from the differential measurements.

Architecture: a shared ReLU trunk followed by one parallel branch per
estimated ambiguity; every branch ends in a softmax over its admissible
integer range [-q-1, q], encoded as class offsets l + q + 1. Forward,
backprop, Adam and serialization are implemented directly on numpy arrays.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (ConfigMismatch, DimensionMismatch, LabelOutOfRange,
                     SchemaError, VersionMismatch)

FORMAT_VERSION = 1
PROB_CLAMP = 1e-12


@dataclass(frozen=True)
class MlpConfig:
    """Architecture descriptor.

    branch_sizes holds Q_jk = 2*q_jk + 2 per estimated branch;
    shared_hidden_layers counts the width*width dense layers after the input
    projection; branch_hidden_layers counts width*width layers per branch
    before its softmax output. input_scale (usually 1/wavelength) normalizes
    the differential measurements to roughly (-1, 1).
    """

    input_dim: int
    branch_sizes: tuple
    width: int = 128
    shared_hidden_layers: int = 8
    branch_hidden_layers: int = 2
    dropout_rate: float = 0.1
    l2_coeff: float = 1e-5
    input_scale: float = 1.0
    input_features: str = "scaled_trig"   # or "scaled"

    def __post_init__(self):
        object.__setattr__(self, "branch_sizes",
                           tuple(int(q) for q in self.branch_sizes))
        if self.input_dim < 1 or self.width < 1:
            raise ValueError("input_dim and width must be >= 1")
        if self.shared_hidden_layers < 1 or self.branch_hidden_layers < 1:
            raise ValueError("layer counts must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if min(self.branch_sizes, default=0) < 2 or any(q % 2 for q in self.branch_sizes):
            raise ValueError("branch sizes must be even and >= 2")
        if self.input_features not in ("scaled", "scaled_trig"):
            raise ValueError("input_features must be 'scaled' or 'scaled_trig'")

    @property
    def branch_count(self) -> int:
        return len(self.branch_sizes)

    @property
    def feature_dim(self) -> int:
        """Width of the first dense layer's input after featurization."""
        if self.input_features == "scaled_trig":
            return 3 * self.input_dim
        return self.input_dim

    def as_dict(self) -> dict:
        return {"input_dim": self.input_dim,
                "branch_sizes": list(self.branch_sizes),
                "width": self.width,
                "shared_hidden_layers": self.shared_hidden_layers,
                "branch_hidden_layers": self.branch_hidden_layers,
                "dropout_rate": self.dropout_rate,
                "l2_coeff": self.l2_coeff,
                "input_scale": self.input_scale,
                "input_features": self.input_features}


def config_for(deployment, bounds=None, **overrides) -> MlpConfig:
    """Config matching a deployment's geometry (one branch per j_set entry)."""
    from . import geometry
    if bounds is None:
        bounds = geometry.ambiguity_bounds(deployment)
    return MlpConfig(input_dim=deployment.ap_count - 1,
                     branch_sizes=tuple(int(v) for v in bounds.Q_per),
                     input_scale=1.0 / deployment.wavelength,
                     **overrides)


@dataclass
class Dense:
    W: np.ndarray   # (out, in)
    b: np.ndarray   # (out,)


@dataclass
class MlpModel:
    config: MlpConfig
    trunk: list            # input projection + shared hidden Dense layers
    branches: list         # per branch: hidden Dense layers + output Dense
    metadata: dict = field(default_factory=dict)

    def parameters(self):
        """All Dense layers in serialization order."""
        layers = list(self.trunk)
        for br in self.branches:
            layers.extend(br)
        return layers


class BranchDistributions:
    """Per-branch class probabilities for a single input.

    Branch k's vector has length Q_k; entry at offset o corresponds to the
    integer o - Q_k // 2.
    """

    def __init__(self, probs):
        self.probs = [np.asarray(p) for p in probs]

    def __len__(self):
        return len(self.probs)

    def __getitem__(self, k):
        return self.probs[k]

    def integer_values(self, k) -> np.ndarray:
        q_total = len(self.probs[k])
        return np.arange(q_total) - q_total // 2

    def prob_of(self, k: int, label: int) -> float:
        q_total = len(self.probs[k])
        offset = int(label) + q_total // 2
        if not 0 <= offset < q_total:
            raise LabelOutOfRange(f"label {label} outside branch {k} range")
        return float(self.probs[k][offset])


def _relu(a):
    return np.maximum(a, 0.0)


def _featurize(config: MlpConfig, X: np.ndarray) -> np.ndarray:
    """Input featurization: measurements in whole-cycle units, optionally
    joined by the sine/cosine of the wrapped phase differences (the real and
    imaginary parts of the conjugate phase products), which expose the cycle
    structure to the first layer directly."""
    scaled = X * config.input_scale
    if config.input_features == "scaled":
        return scaled
    ang = 2.0 * np.pi * scaled
    return np.concatenate([scaled, np.sin(ang), np.cos(ang)], axis=-1)


def init_model(config: MlpConfig, seed) -> MlpModel:
    """He-uniform fan-in init for hidden layers, zero biases.

    Branch output layers start at zero: every branch then opens at the
    uniform distribution and no gradient reaches the shared trunk until the
    heads have formed, which prevents the early collapse of the trunk's
    input-dependence under the many-class cross-entropy.
    """
    rng = np.random.default_rng(seed)

    def dense(n_out, n_in):
        limit = np.sqrt(6.0 / n_in)
        return Dense(W=rng.uniform(-limit, limit, size=(n_out, n_in)),
                     b=np.zeros(n_out))

    trunk = [dense(config.width, config.feature_dim)]
    trunk += [dense(config.width, config.width)
              for _ in range(config.shared_hidden_layers)]
    branches = []
    for q_total in config.branch_sizes:
        layers = [dense(config.width, config.width)
                  for _ in range(config.branch_hidden_layers)]
        layers.append(Dense(W=np.zeros((q_total, config.width)),
                            b=np.zeros(q_total)))
        branches.append(layers)
    return MlpModel(config=config, trunk=trunk, branches=branches,
                    metadata={"epochs_seen": 0})


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _forward_batch(model: MlpModel, X: np.ndarray, train: bool, rng,
                   keep_cache: bool):
    """Shared forward pass. X is (B, input_dim). Returns (probs, cache)."""
    cfg = model.config
    if X.ndim != 2 or X.shape[1] != cfg.input_dim:
        raise DimensionMismatch(f"expected (*, {cfg.input_dim}) input, got {X.shape}")
    p_drop = cfg.dropout_rate if train else 0.0
    if p_drop > 0.0 and rng is None:
        raise ValueError("train-mode forward needs a dropout rng")
    keep = 1.0 - p_drop

    def dropout(h):
        if p_drop == 0.0:
            return h, None
        mask = (rng.random(h.shape) >= p_drop) / keep   # inverted dropout
        return h * mask, mask

    cache = {"inputs": [], "acts": [], "masks": [], "branch": []} if keep_cache else None
    h = _featurize(cfg, X)
    for layer in model.trunk:
        if keep_cache:
            cache["inputs"].append(h)
        a = h @ layer.W.T + layer.b
        h = _relu(a)
        h, mask = dropout(h)
        if keep_cache:
            cache["acts"].append(a)
            cache["masks"].append(mask)
    trunk_out = h
    probs = []
    for layers in model.branches:
        bcache = {"inputs": [], "acts": [], "masks": []} if keep_cache else None
        hb = trunk_out
        for layer in layers[:-1]:
            if keep_cache:
                bcache["inputs"].append(hb)
            a = hb @ layer.W.T + layer.b
            hb = _relu(a)
            hb, mask = dropout(hb)
            if keep_cache:
                bcache["acts"].append(a)
                bcache["masks"].append(mask)
        out = layers[-1]
        if keep_cache:
            bcache["inputs"].append(hb)
            cache["branch"].append(bcache)
        logits = hb @ out.W.T + out.b
        probs.append(_softmax(logits))
    return probs, cache


def forward(model: MlpModel, delta, mode: str = "infer",
            dropout_seed=None) -> BranchDistributions:
    """Branch probability distributions for one measurement vector.

    mode "train" activates inverted dropout (needs dropout_seed); "infer" is
    deterministic.
    """
    if mode not in ("train", "infer"):
        raise ValueError("mode must be 'train' or 'infer'")
    delta = np.asarray(delta, dtype=float)
    if delta.ndim != 1:
        raise DimensionMismatch("forward takes a single measurement vector")
    rng = None
    if mode == "train":
        rng = (dropout_seed if isinstance(dropout_seed, np.random.Generator)
               else np.random.default_rng(dropout_seed))
    probs, _ = _forward_batch(model, delta[None, :], mode == "train", rng,
                              keep_cache=False)
    return BranchDistributions([p[0] for p in probs])


def predict_batch(model: MlpModel, X: np.ndarray) -> np.ndarray:
    """(S, |J|) integer predictions, argmax per branch (ties to the smaller
    integer via first-maximum)."""
    probs, _ = _forward_batch(model, np.asarray(X, dtype=float), False, None,
                              keep_cache=False)
    cols = []
    for p, q_total in zip(probs, model.config.branch_sizes):
        cols.append(np.argmax(p, axis=1) - q_total // 2)
    return np.column_stack(cols)


def predict(model: MlpModel, delta) -> np.ndarray:
    """Integer ambiguity vector for one measurement vector."""
    delta = np.asarray(delta, dtype=float)
    if delta.ndim != 1:
        raise DimensionMismatch("predict takes a single measurement vector")
    return predict_batch(model, delta[None, :])[0]


def _label_offsets(labels: np.ndarray, branch_sizes) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    offs = labels + np.array([q // 2 for q in branch_sizes], dtype=int)
    sizes = np.array(branch_sizes, dtype=int)
    if np.any(offs < 0) or np.any(offs >= sizes):
        raise LabelOutOfRange("label outside its branch class range")
    return offs


def scce_loss(dists: BranchDistributions, labels) -> float:
    """Mean over branches of the negative log probability of the true class."""
    labels = np.asarray(labels, dtype=int)
    if len(labels) != len(dists):
        raise DimensionMismatch("one label per branch required")
    total = 0.0
    for k, lab in enumerate(labels):
        total -= np.log(max(dists.prob_of(k, int(lab)), PROB_CLAMP))
    return total / len(labels)


def _batch_loss(probs, offsets, l2_coeff, model) -> float:
    """Batch-mean SCCE plus the L2 penalty."""
    B = probs[0].shape[0]
    rows = np.arange(B)
    total = 0.0
    for k, p in enumerate(probs):
        total -= np.log(np.maximum(p[rows, offsets[:, k]], PROB_CLAMP)).sum()
    loss = total / (B * len(probs))
    if l2_coeff:
        loss += l2_coeff * sum(float(np.sum(l.W ** 2)) for l in model.parameters())
    return loss


@dataclass
class Gradients:
    trunk: list
    branches: list

    def parameters(self):
        layers = list(self.trunk)
        for br in self.branches:
            layers.extend(br)
        return layers


def backprop_gradients(model: MlpModel, X, labels, dropout_rng=None):
    """Exact analytic gradients of the regularized batch loss.

    Returns (Gradients, loss). When dropout_rng is given the forward pass
    runs in train mode and the gradients correspond to those masks;
    otherwise dropout is inactive (deterministic loss, finite-difference
    checkable).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    labels = np.atleast_2d(np.asarray(labels, dtype=int))
    if labels.shape[0] != X.shape[0]:
        raise DimensionMismatch("one label row per sample required")
    cfg = model.config
    offsets = np.vstack([_label_offsets(lab, cfg.branch_sizes) for lab in labels])
    train = dropout_rng is not None
    probs, cache = _forward_batch(model, X, train, dropout_rng, keep_cache=True)
    B = X.shape[0]
    rows = np.arange(B)
    scale = 1.0 / (B * cfg.branch_count)

    g_trunk = [Dense(W=np.zeros_like(l.W), b=np.zeros_like(l.b)) for l in model.trunk]
    g_branches = [[Dense(W=np.zeros_like(l.W), b=np.zeros_like(l.b)) for l in br]
                  for br in model.branches]
    d_trunk_out = np.zeros((B, cfg.width))

    for k, (layers, glayers) in enumerate(zip(model.branches, g_branches)):
        p = probs[k].copy()
        p[rows, offsets[:, k]] -= 1.0
        dlogits = p * scale                       # d loss / d logits
        bcache = cache["branch"][k]
        out = layers[-1]
        glayers[-1].W[:] = dlogits.T @ bcache["inputs"][-1]
        glayers[-1].b[:] = dlogits.sum(axis=0)
        dh = dlogits @ out.W
        for li in range(len(layers) - 2, -1, -1):
            mask = bcache["masks"][li]
            if mask is not None:
                dh = dh * mask
            da = dh * (bcache["acts"][li] > 0)
            glayers[li].W[:] = da.T @ bcache["inputs"][li]
            glayers[li].b[:] = da.sum(axis=0)
            dh = da @ layers[li].W
        d_trunk_out += dh

    dh = d_trunk_out
    for li in range(len(model.trunk) - 1, -1, -1):
        mask = cache["masks"][li]
        if mask is not None:
            dh = dh * mask
        da = dh * (cache["acts"][li] > 0)
        g_trunk[li].W[:] = da.T @ cache["inputs"][li]
        g_trunk[li].b[:] = da.sum(axis=0)
        dh = da @ model.trunk[li].W

    grads = Gradients(trunk=g_trunk, branches=g_branches)
    if cfg.l2_coeff:
        for g, l in zip(grads.parameters(), model.parameters()):
            g.W += 2.0 * cfg.l2_coeff * l.W
    loss = _batch_loss(probs, offsets, cfg.l2_coeff, model)
    return grads, loss


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 500
    epochs: int = 500
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def as_dict(self) -> dict:
        return {"batch_size": self.batch_size, "epochs": self.epochs,
                "learning_rate": self.learning_rate, "beta1": self.beta1,
                "beta2": self.beta2, "epsilon": self.epsilon}


class _Adam:
    def __init__(self, model: MlpModel, hyper: TrainConfig):
        self.hyper = hyper
        self.t = 0
        self.m = [Dense(W=np.zeros_like(l.W), b=np.zeros_like(l.b))
                  for l in model.parameters()]
        self.v = [Dense(W=np.zeros_like(l.W), b=np.zeros_like(l.b))
                  for l in model.parameters()]

    def step(self, model: MlpModel, grads: Gradients):
        h = self.hyper
        self.t += 1
        bc1 = 1.0 - h.beta1 ** self.t
        bc2 = 1.0 - h.beta2 ** self.t
        for layer, grad, m, v in zip(model.parameters(), grads.parameters(),
                                     self.m, self.v):
            for attr in ("W", "b"):
                g = getattr(grad, attr)
                mm = getattr(m, attr)
                vv = getattr(v, attr)
                mm *= h.beta1
                mm += (1.0 - h.beta1) * g
                vv *= h.beta2
                vv += (1.0 - h.beta2) * g * g
                getattr(layer, attr)[:] -= (h.learning_rate * (mm / bc1)
                                            / (np.sqrt(vv / bc2) + h.epsilon))


def exact_vector_accuracy(model: MlpModel, X, labels) -> float:
    """Fraction (percent) of samples whose full prediction vector is correct."""
    preds = predict_batch(model, X)
    labels = np.asarray(labels, dtype=int)
    return float(np.all(preds == labels, axis=1).mean() * 100.0)


def _dataset_arrays(dataset):
    return dataset.features(), dataset.label_matrix()


def train(model: MlpModel, train_set, val_set, hyper: TrainConfig, seed,
          on_epoch=None):
    """Mini-batch Adam on the regularized SCCE loss.

    Shuffles per epoch from `seed`; history records per-epoch train loss
    (running mean over batches), validation loss and exact-vector accuracy.
    on_epoch, when given, is called with each history record as it is
    produced. Returns (best_model, history) where best_model minimizes
    validation loss over epochs (the input model is not modified).
    """
    X_tr, y_tr = _dataset_arrays(train_set)
    X_va, y_va = _dataset_arrays(val_set)
    cfg = model.config
    if X_tr.shape[1] != cfg.input_dim or y_tr.shape[1] != cfg.branch_count:
        raise ConfigMismatch("dataset dimensions do not match the model config")
    if abs(train_set.deployment.wavelength * cfg.input_scale - 1.0) > 1e-9:
        raise ConfigMismatch("model input scale does not match the deployment wavelength")

    model = copy.deepcopy(model)
    history = []
    if hyper.epochs == 0:
        return model, history
    rng = np.random.default_rng(seed)
    opt = _Adam(model, hyper)
    offsets_va = np.vstack([_label_offsets(lab, cfg.branch_sizes) for lab in y_va])
    best = None
    for epoch in range(hyper.epochs):
        order = rng.permutation(len(X_tr))
        losses = []
        for start in range(0, len(order), hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            grads, loss = backprop_gradients(model, X_tr[idx], y_tr[idx],
                                             dropout_rng=rng)
            opt.step(model, grads)
            losses.append(loss)
        val_probs, _ = _forward_batch(model, X_va, False, None, keep_cache=False)
        val_loss = _batch_loss(val_probs, offsets_va, 0.0, model)
        val_acc = _val_accuracy_from_probs(val_probs, y_va, cfg.branch_sizes)
        history.append({"epoch": epoch + 1,
                        "train_loss": float(np.mean(losses)),
                        "val_loss": float(val_loss),
                        "val_accuracy_pct": val_acc})
        if on_epoch is not None:
            on_epoch(history[-1])
        if best is None or val_loss < best[0]:
            best = (val_loss, [(l.W.copy(), l.b.copy())
                               for l in model.parameters()], epoch + 1)
    # restore the best-validation weights
    for layer, (W, b) in zip(model.parameters(), best[1]):
        layer.W[:] = W
        layer.b[:] = b
    model.metadata.update({"epochs_seen": hyper.epochs,
                           "best_epoch": best[2],
                           "best_val_loss": float(best[0]),
                           "final_train_loss": history[-1]["train_loss"]})
    return model, history


def _val_accuracy_from_probs(probs, labels, branch_sizes) -> float:
    preds = np.column_stack([np.argmax(p, axis=1) - q // 2
                             for p, q in zip(probs, branch_sizes)])
    return float(np.all(preds == labels, axis=1).mean() * 100.0)


def save_model(model: MlpModel, path) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "mlp_config": model.config.as_dict(),
        "layers": [{"rows": int(l.W.shape[0]), "cols": int(l.W.shape[1]),
                    "weights": l.W.ravel().tolist(), "bias": l.b.tolist()}
                   for l in model.parameters()],
        "metadata": model.metadata,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_model(path) -> MlpModel:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format_version") != FORMAT_VERSION:
        raise VersionMismatch(f"unsupported model format {doc.get('format_version')}")
    cfg_dict = dict(doc["mlp_config"])
    cfg_dict["branch_sizes"] = tuple(cfg_dict["branch_sizes"])
    config = MlpConfig(**cfg_dict)
    model = init_model(config, seed=0)
    layers = model.parameters()
    if len(layers) != len(doc["layers"]):
        raise SchemaError(f"expected {len(layers)} layers, file has {len(doc['layers'])}")
    for layer, entry in zip(layers, doc["layers"]):
        rows, cols = int(entry["rows"]), int(entry["cols"])
        if (rows, cols) != layer.W.shape:
            raise SchemaError(f"layer dimension mismatch: file {rows}x{cols}, "
                              f"config {layer.W.shape}")
        W = np.array(entry["weights"], dtype=float)
        if W.size != rows * cols:
            raise SchemaError("weight count does not match layer dimensions")
        layer.W[:] = W.reshape(rows, cols)
        b = np.array(entry["bias"], dtype=float)
        if b.size != rows:
            raise SchemaError("bias length does not match layer rows")
        layer.b[:] = b
    model.metadata = dict(doc.get("metadata", {}))
    return model
