"""Trainable core: sigmoid-gated knowledge attention, feature fusion, MLP
classifier with softmax output, categorical cross-entropy, and AdaMax updates
with hand-derived gradients."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, asdict
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np

from .knowledge import NUM_RELATIONS

PLM1_MAGIC = b"PLM1"
NUM_CLASSES = 3
LOG_CLAMP = 1e-12


class ModelError(Exception):
    pass


class TrainingError(ModelError):
    pass


class TrainMode(Enum):
    HEADLINE_ONLY = "headline_only"
    KNOWLEDGE_ONLY = "knowledge_only"
    HEADLINE_PLUS_KNOWLEDGE = "headline_plus_knowledge"
    HEADLINE_PLUS_ATTENDED_KNOWLEDGE = "headline_plus_attended_knowledge"

    @property
    def uses_knowledge(self) -> bool:
        return self is not TrainMode.HEADLINE_ONLY

    @property
    def uses_headline(self) -> bool:
        return self is not TrainMode.KNOWLEDGE_ONLY

    @property
    def uses_gate(self) -> bool:
        return self is TrainMode.HEADLINE_PLUS_ATTENDED_KNOWLEDGE


class Activation(Enum):
    RELU = "relu"
    IDENTITY = "identity"
    SOFTMAX = "softmax"


@dataclass
class MlpLayer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray     # (out,)
    activation: Activation = Activation.IDENTITY

    def __post_init__(self):
        out_dim, in_dim = self.weights.shape
        if self.bias.shape != (out_dim,):
            raise ModelError(f"bias shape {self.bias.shape} inconsistent with weights {self.weights.shape}")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ModelError("layer parameters must be finite")


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=-1, keepdims=True)


def _layer_forward(layer: MlpLayer, x: np.ndarray):
    z = x @ layer.weights.T + layer.bias
    if layer.activation is Activation.RELU:
        a = np.maximum(z, 0.0)
    elif layer.activation is Activation.SOFTMAX:
        a = softmax(z)
    else:
        a = z
    return z, a


def _layer_backward(layer: MlpLayer, x: np.ndarray, z: np.ndarray, d_out: np.ndarray):
    """Gradient through a non-softmax layer; returns (d_x, d_w, d_b)."""
    if layer.activation is Activation.RELU:
        dz = d_out * (z > 0)
    elif layer.activation is Activation.IDENTITY:
        dz = d_out
    else:
        raise ModelError("softmax backward is fused with the loss")
    return dz @ layer.weights, dz.T @ x, dz.sum(axis=0)


@dataclass
class AttentionHead:
    """Mixer MLP mapping the flattened (9 * d) gated knowledge to a d-vector."""

    layers: list

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weights.shape[0]


@dataclass
class ClassifierHead:
    trunk: list            # hidden layers
    output: MlpLayer       # final layer with softmax activation


@dataclass
class TrainConfig:
    mode: TrainMode = TrainMode.HEADLINE_PLUS_ATTENDED_KNOWLEDGE
    epochs: int = 50
    batch_size: int = 64
    seed: int = 0
    learning_rate: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    hidden_sizes: tuple = (256, 64)
    knowledge_only_attention: bool = False

    def __post_init__(self):
        if isinstance(self.mode, str):
            self.mode = TrainMode(self.mode)
        self.hidden_sizes = tuple(self.hidden_sizes)
        if self.learning_rate <= 0 or self.epsilon <= 0:
            raise ModelError("learning rate and epsilon must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ModelError("decay rates must lie in (0, 1)")
        if self.epochs < 0 or self.batch_size <= 0:
            raise ModelError("epochs must be >= 0 and batch size positive")

    def to_json_obj(self) -> dict:
        obj = asdict(self)
        obj["mode"] = self.mode.value
        obj["hidden_sizes"] = list(self.hidden_sizes)
        return obj


def glorot_uniform(rng: np.random.Generator, out_dim: int, in_dim: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-limit, limit, size=(out_dim, in_dim))


def sigmoid_gate(K: np.ndarray) -> np.ndarray:
    """Elementwise relevance gate: sigmoid(K) * K."""
    return sigmoid(K) * K


def attend_knowledge(K: np.ndarray, head: AttentionHead, use_gate: bool = True) -> np.ndarray:
    """Gate the (9, d) knowledge matrix and mix it down to a d-vector."""
    K = np.asarray(K, dtype=np.float64)
    single = K.ndim == 2
    if single:
        K = K[None]
    if K.shape[1] != NUM_RELATIONS:
        raise ModelError(f"knowledge matrix must have {NUM_RELATIONS} rows, got {K.shape[1]}")
    x = (sigmoid_gate(K) if use_gate else K).reshape(K.shape[0], -1)
    for layer in head.layers:
        _, x = _layer_forward(layer, x)
    return x[0] if single else x


def fuse(h: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Concatenate headline and knowledge vectors, headline first."""
    h = np.asarray(h)
    k = np.asarray(k)
    if h.shape[-1] != k.shape[-1]:
        raise ModelError(f"cannot fuse dims {h.shape[-1]} and {k.shape[-1]}")
    return np.concatenate([h, k], axis=-1)


def predict(fused: np.ndarray, clf: ClassifierHead) -> np.ndarray:
    """Forward a fused vector through the classifier; returns probabilities."""
    x = np.asarray(fused, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None]
    for i, layer in enumerate(clf.trunk):
        _, x = _layer_forward(layer, x)
        if not np.all(np.isfinite(x)):
            raise ModelError(f"non-finite activation after trunk layer {i}")
    _, probs = _layer_forward(clf.output, x)
    if not np.all(np.isfinite(probs)):
        raise ModelError("non-finite activation in output layer")
    return probs[0] if single else probs


def predicted_label(probs: np.ndarray) -> int:
    """Argmax with ties broken by the lowest class index."""
    return int(np.argmax(probs))


def cross_entropy(pred: np.ndarray, true_index) -> float:
    """Categorical cross-entropy; batch input returns the mean loss."""
    pred = np.asarray(pred, dtype=np.float64)
    if pred.ndim == 1:
        return float(-np.log(max(pred[int(true_index)], LOG_CLAMP)))
    rows = np.arange(pred.shape[0])
    picked = np.clip(pred[rows, np.asarray(true_index, dtype=int)], LOG_CLAMP, None)
    return float(-np.log(picked).mean())


@dataclass
class AdaMaxState:
    """Per-parameter first moment and infinity-norm accumulators."""

    m: list
    u: list
    t: int = 0

    @classmethod
    def for_params(cls, params) -> "AdaMaxState":
        return cls(m=[np.zeros_like(p) for p in params], u=[np.zeros_like(p) for p in params])


def adamax_step(params, grads, state: AdaMaxState, cfg: TrainConfig) -> None:
    """In-place AdaMax update:
    m <- b1*m + (1-b1)*g; u <- max(b2*u, |g|);
    theta <- theta - (lr / (1 - b1^t)) * m / (u + eps).
    """
    state.t += 1
    scale = cfg.learning_rate / (1.0 - cfg.beta1 ** state.t)
    for p, g, m, u in zip(params, grads, state.m, state.u):
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        np.maximum(cfg.beta2 * u, np.abs(g), out=u)
        p -= scale * m / (u + cfg.epsilon)


class BiasModel:
    """Gate + mixer + trunk + softmax classifier for one training mode."""

    def __init__(self, cfg: TrainConfig, dim: int, rng: Optional[np.random.Generator] = None):
        self.cfg = cfg
        self.dim = dim
        rng = rng or np.random.default_rng(cfg.seed)
        mode = cfg.mode
        self.use_gate = mode.uses_gate or (
            mode is TrainMode.KNOWLEDGE_ONLY and cfg.knowledge_only_attention
        )
        self.attention: Optional[AttentionHead] = None
        if mode.uses_knowledge:
            self.attention = AttentionHead(
                layers=[
                    MlpLayer(
                        glorot_uniform(rng, dim, NUM_RELATIONS * dim),
                        np.zeros(dim),
                        Activation.IDENTITY,
                    )
                ]
            )
        trunk_in = dim * (2 if (mode.uses_headline and mode.uses_knowledge) else 1)
        trunk = []
        for size in cfg.hidden_sizes:
            trunk.append(MlpLayer(glorot_uniform(rng, size, trunk_in), np.zeros(size), Activation.RELU))
            trunk_in = size
        output = MlpLayer(glorot_uniform(rng, NUM_CLASSES, trunk_in), np.zeros(NUM_CLASSES), Activation.SOFTMAX)
        self.classifier = ClassifierHead(trunk=trunk, output=output)

    # parameter tensors in declaration order: mixer, trunk, output
    def named_params(self) -> list:
        named = []
        if self.attention is not None:
            for i, layer in enumerate(self.attention.layers):
                named.append((f"mixer.{i}.weights", layer))
        for i, layer in enumerate(self.classifier.trunk):
            named.append((f"trunk.{i}.weights", layer))
        named.append(("output.weights", self.classifier.output))
        out = []
        for name, layer in named:
            out.append((name, layer.weights))
            out.append((name.replace(".weights", ".bias"), layer.bias))
        return out

    def params(self) -> list:
        return [p for _, p in self.named_params()]

    def _mix_layers(self) -> list:
        return self.attention.layers if self.attention else []

    def forward(self, H, K):
        """Forward pass; returns (probs, cache) for backprop."""
        mode = self.cfg.mode
        n = (H if H is not None else K).shape[0]
        cache = {}
        if mode.uses_knowledge:
            K = np.asarray(K, dtype=np.float64)
            if K.shape[1:] != (NUM_RELATIONS, self.dim):
                raise ModelError(f"knowledge batch shape {K.shape} != (n, {NUM_RELATIONS}, {self.dim})")
            gated = sigmoid_gate(K) if self.use_gate else K
            x = gated.reshape(n, -1)
            cache["mix_inputs"] = []
            for layer in self._mix_layers():
                cache["mix_inputs"].append(x)
                z, x = _layer_forward(layer, x)
                cache.setdefault("mix_zs", []).append(z)
            kvec = x
        else:
            kvec = None
        if mode.uses_headline:
            H = np.asarray(H, dtype=np.float64)
            if H.shape[1:] != (self.dim,):
                raise ModelError(f"headline batch shape {H.shape} != (n, {self.dim})")
        if mode is TrainMode.HEADLINE_ONLY:
            x = H
        elif mode is TrainMode.KNOWLEDGE_ONLY:
            x = kvec
        else:
            x = fuse(H, kvec)
        cache["trunk_inputs"] = []
        for layer in self.classifier.trunk:
            cache["trunk_inputs"].append(x)
            z, x = _layer_forward(layer, x)
            cache.setdefault("trunk_zs", []).append(z)
        cache["out_input"] = x
        logits = x @ self.classifier.output.weights.T + self.classifier.output.bias
        probs = softmax(logits)
        return probs, cache

    def loss_and_grads(self, H, K, y):
        """Mean cross-entropy and gradients for every parameter tensor."""
        probs, cache = self.forward(H, K)
        n = probs.shape[0]
        y = np.asarray(y, dtype=int)
        loss = cross_entropy(probs, y)
        d_logits = probs.copy()
        d_logits[np.arange(n), y] -= 1.0
        d_logits /= n
        grads = {}
        out = self.classifier.output
        grads["output.weights"] = d_logits.T @ cache["out_input"]
        grads["output.bias"] = d_logits.sum(axis=0)
        dx = d_logits @ out.weights
        for i in range(len(self.classifier.trunk) - 1, -1, -1):
            layer = self.classifier.trunk[i]
            dx, dw, db = _layer_backward(layer, cache["trunk_inputs"][i], cache["trunk_zs"][i], dx)
            grads[f"trunk.{i}.weights"] = dw
            grads[f"trunk.{i}.bias"] = db
        if self.cfg.mode.uses_knowledge:
            if self.cfg.mode.uses_headline:
                dx = dx[:, self.dim:]
            for i in range(len(self._mix_layers()) - 1, -1, -1):
                layer = self._mix_layers()[i]
                dx, dw, db = _layer_backward(layer, cache["mix_inputs"][i], cache["mix_zs"][i], dx)
                grads[f"mixer.{i}.weights"] = dw
                grads[f"mixer.{i}.bias"] = db
        ordered = [grads[name] for name, _ in self.named_params()]
        return loss, ordered

    def predict_proba(self, H, K) -> np.ndarray:
        probs, _ = self.forward(H, K)
        return probs

    def predict_labels(self, H, K) -> np.ndarray:
        return np.argmax(self.predict_proba(H, K), axis=1)


@dataclass
class TrainedModel:
    model: BiasModel
    train_losses: list = field(default_factory=list)
    valid_losses: list = field(default_factory=list)
    best_epoch: Optional[int] = None


def train(dataset, cfg: TrainConfig, valid=None) -> TrainedModel:
    """Train a BiasModel on (H, K, y) arrays by mini-batch AdaMax.

    H may be None in knowledge-only mode, K may be None in headline-only mode.
    When `valid` is given, the parameters from the best-validation-loss epoch
    are restored at the end.
    """
    H, K, y = dataset
    n = len(y)
    if n == 0:
        raise TrainingError("empty training set")
    dim = H.shape[1] if H is not None else K.shape[2]
    rng = np.random.default_rng(cfg.seed)
    model = BiasModel(cfg, dim, rng=rng)
    params = model.params()
    state = AdaMaxState.for_params(params)
    result = TrainedModel(model=model)
    best_valid = np.inf
    best_snapshot = None
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            bh = H[idx] if H is not None else None
            bk = K[idx] if K is not None else None
            loss, grads = model.loss_and_grads(bh, bk, y[idx])
            if not np.isfinite(loss):
                raise TrainingError(
                    f"divergence: non-finite loss at epoch {epoch}, batch {start // cfg.batch_size}"
                )
            adamax_step(params, grads, state, cfg)
            epoch_loss += loss * len(idx)
        result.train_losses.append(epoch_loss / n)
        if valid is not None:
            vh, vk, vy = valid
            v_probs = model.predict_proba(vh, vk)
            v_loss = cross_entropy(v_probs, vy)
            result.valid_losses.append(v_loss)
            if v_loss < best_valid:
                best_valid = v_loss
                best_snapshot = [p.copy() for p in params]
                result.best_epoch = epoch
    if best_snapshot is not None:
        for p, snap in zip(params, best_snapshot):
            p[...] = snap
    return result


def _layer_specs(model: BiasModel) -> list:
    specs = []
    if model.attention is not None:
        for i, layer in enumerate(model.attention.layers):
            specs.append(["mixer", i, list(layer.weights.shape), layer.activation.value])
    for i, layer in enumerate(model.classifier.trunk):
        specs.append(["trunk", i, list(layer.weights.shape), layer.activation.value])
    out = model.classifier.output
    specs.append(["output", 0, list(out.weights.shape), out.activation.value])
    return specs


def save_checkpoint(trained: TrainedModel, path) -> None:
    """Versioned binary checkpoint plus a JSON metadata sidecar."""
    path = Path(path)
    model = trained.model
    header = {
        "config": model.cfg.to_json_obj(),
        "dim": model.dim,
        "use_gate": model.use_gate,
        "layers": _layer_specs(model),
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with path.open("wb") as fh:
        fh.write(PLM1_MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for _, tensor in model.named_params():
            fh.write(tensor.astype("<f4").tobytes())
    sidecar = {
        "mode": model.cfg.mode.value,
        "dim": model.dim,
        "seed": model.cfg.seed,
        "epochs": model.cfg.epochs,
        "train_losses": trained.train_losses,
        "valid_losses": trained.valid_losses,
        "best_epoch": trained.best_epoch,
    }
    Path(f"{path}.json").write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")


def load_checkpoint(path) -> TrainedModel:
    path = Path(path)
    with path.open("rb") as fh:
        if fh.read(4) != PLM1_MAGIC:
            raise ModelError(f"{path}: not a model checkpoint")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        cfg = TrainConfig(**{**header["config"], "mode": TrainMode(header["config"]["mode"])})
        model = BiasModel(cfg, header["dim"])
        for _, tensor in model.named_params():
            raw = fh.read(4 * tensor.size)
            tensor[...] = np.frombuffer(raw, dtype="<f4").reshape(tensor.shape)
    trained = TrainedModel(model=model)
    sidecar_path = Path(f"{path}.json")
    if sidecar_path.exists():
        meta = json.loads(sidecar_path.read_text(encoding="utf-8"))
        trained.train_losses = meta.get("train_losses", [])
        trained.valid_losses = meta.get("valid_losses", [])
        trained.best_epoch = meta.get("best_epoch")
    return trained
