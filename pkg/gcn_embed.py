"""
Three-layer graph convolutional network written directly against numpy.

Forward:  H1 = act(Â X W1), H2 = act(Â H1 W2), Z = Â H2 W3
Loss:     weighted mean over training pairs of BCE(sigmoid(sim(z_a, z_b)), label)
Backward: explicit gradients for W1..W3, then a functional Adam update.
"""

from __future__ import annotations

import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from errors import (
    ConfigError,
    DivergenceError,
    HashMismatchError,
    MalformedFileError,
    NonFiniteError,
    ShapeMismatchError,
    ZeroNormError,
)
from graph_core import SRG, srg_to_gcn_inputs
from scene_world import CategorySpace
from trajectories import TrainingPair, Trajectory, collapse_pairs, corpus_pairs
from utils import FLOAT_FORMAT, canonical_json, make_rng, read_text, write_text

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1
ACTIVATIONS = ("relu", "tanh")
SIMILARITIES = ("dot", "cosine")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-4
    epochs: int = 200
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    hidden1: int = 128
    hidden2: int = 128
    embed_dim: int = 128
    activation: str = "relu"
    similarity: str = "dot"
    # stop after `patience` epochs without a relative improvement of min_delta; 0 disables
    patience: int = 20
    min_delta: float = 1e-7

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning rate must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if min(self.hidden1, self.hidden2, self.embed_dim) < 1:
            raise ConfigError("layer sizes must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}")
        if self.similarity not in SIMILARITIES:
            raise ConfigError(f"similarity must be one of {SIMILARITIES}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.epsilon > 0):
            raise ConfigError("invalid Adam parameters")
        if self.patience < 0 or self.min_delta < 0:
            raise ConfigError("patience and min_delta must be non-negative")


@dataclass(eq=False)
class GcnModel:
    weights: List[np.ndarray]
    activation: str = "relu"

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        if len(self.weights) != 3:
            raise ShapeMismatchError(f"expected 3 weight matrices, got {len(self.weights)}")
        for l in range(2):
            if self.weights[l].shape[1] != self.weights[l + 1].shape[0]:
                raise ShapeMismatchError(
                    f"W{l + 1} {self.weights[l].shape} does not chain into W{l + 2} {self.weights[l + 1].shape}"
                )
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}")

    @property
    def dims(self) -> Tuple[int, int, int, int]:
        w1, w2, w3 = self.weights
        return w1.shape[0], w1.shape[1], w2.shape[1], w3.shape[1]

    @classmethod
    def initialize(cls, in_dim: int, hidden1: int = 128, hidden2: int = 128, embed_dim: int = 128,
                   seed: int = 0, activation: str = "relu") -> "GcnModel":
        """Glorot-uniform weights drawn from one seeded generator."""
        rng = make_rng(seed)
        weights = []
        for fan_in, fan_out in ((in_dim, hidden1), (hidden1, hidden2), (hidden2, embed_dim)):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        return cls(weights, activation)


def normalize_adjacency(adjacency: np.ndarray) -> np.ndarray:
    """Â = D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I."""
    a = np.asarray(adjacency, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeMismatchError(f"adjacency must be square, got {a.shape}")
    a_tilde = a + np.eye(a.shape[0])
    d_inv_sqrt = 1.0 / np.sqrt(a_tilde.sum(axis=1))
    return a_tilde * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    return np.maximum(z, 0.0) if kind == "relu" else np.tanh(z)


def _activate_grad(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (z > 0).astype(float)
    return 1.0 - np.tanh(z) ** 2


@dataclass
class ForwardCache:
    a_hat: np.ndarray
    propagated: List[np.ndarray] = field(default_factory=list)  # Â H_{l-1}
    pre_activations: List[np.ndarray] = field(default_factory=list)  # Â H_{l-1} W_l


def gcn_forward(model: GcnModel, a_hat: np.ndarray, features: np.ndarray) -> Tuple[np.ndarray, ForwardCache]:
    a_hat = np.asarray(a_hat, dtype=float)
    h = np.asarray(features, dtype=float)
    if a_hat.shape[0] != h.shape[0] or h.shape[1] != model.dims[0]:
        raise ShapeMismatchError(
            f"Â {a_hat.shape} and features {h.shape} do not fit W1 {model.weights[0].shape}"
        )
    cache = ForwardCache(a_hat)
    last = len(model.weights)
    for layer, w in enumerate(model.weights, start=1):
        propagated = a_hat @ h
        z = propagated @ w
        h = _activate(z, model.activation) if layer < last else z
        if not np.all(np.isfinite(h)):
            raise NonFiniteError(layer)
        cache.propagated.append(propagated)
        cache.pre_activations.append(z)
    return h, cache


def backward(model: GcnModel, cache: ForwardCache, d_embeddings: np.ndarray) -> List[np.ndarray]:
    """Gradients of the loss with respect to W1..W3 given dLoss/dZ."""
    d_embeddings = np.asarray(d_embeddings, dtype=float)
    if len(cache.pre_activations) != len(model.weights):
        raise ShapeMismatchError("cache does not come from a forward pass of this model")
    if d_embeddings.shape != cache.pre_activations[-1].shape:
        raise ShapeMismatchError(
            f"upstream gradient {d_embeddings.shape} does not match embeddings {cache.pre_activations[-1].shape}"
        )
    grads: List[Optional[np.ndarray]] = [None] * len(model.weights)
    dz = d_embeddings
    for l in reversed(range(len(model.weights))):
        grads[l] = cache.propagated[l].T @ dz
        if l == 0:
            break
        dh = cache.a_hat.T @ (dz @ model.weights[l].T)
        dz = dh * _activate_grad(cache.pre_activations[l - 1], model.activation)
    return grads


def _log_sigmoid(s: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -s)


def _sigmoid(s: np.ndarray) -> np.ndarray:
    return np.exp(_log_sigmoid(s))


def pair_scores(embeddings: np.ndarray, anchors: np.ndarray, others: np.ndarray,
                similarity: str = "dot") -> np.ndarray:
    za, zb = embeddings[anchors], embeddings[others]
    dots = np.einsum("ij,ij->i", za, zb)
    if similarity == "dot":
        return dots
    norms = np.linalg.norm(za, axis=1) * np.linalg.norm(zb, axis=1)
    if np.any(norms == 0):
        raise ZeroNormError("cosine similarity over a zero-norm embedding")
    return dots / norms


def pair_loss_and_grad(embeddings: np.ndarray, pairs: Sequence[TrainingPair],
                       weights: Optional[Sequence[float]] = None,
                       similarity: str = "dot") -> Tuple[float, np.ndarray]:
    """
    Mean sigmoid cross-entropy over pairs (weighted when `weights` is given)
    and its exact gradient with respect to the embeddings.
    """
    if not pairs:
        raise ValueError("pair list is empty")
    z = np.asarray(embeddings, dtype=float)
    a = np.array([p.anchor for p in pairs])
    b = np.array([p.other for p in pairs])
    y = np.array([p.label for p in pairs], dtype=float)
    w = np.ones(len(pairs)) if weights is None else np.asarray(weights, dtype=float)
    w = w / w.sum()

    s = pair_scores(z, a, b, similarity)
    per_pair = np.logaddexp(0.0, s) - y * s
    loss = float(np.sum(w * per_pair))

    ds = w * (_sigmoid(s) - y)
    za, zb = z[a], z[b]
    if similarity == "dot":
        d_za = ds[:, None] * zb
        d_zb = ds[:, None] * za
    else:
        na = np.linalg.norm(za, axis=1)[:, None]
        nb = np.linalg.norm(zb, axis=1)[:, None]
        cos = s[:, None]
        d_za = ds[:, None] * (zb / (na * nb) - cos * za / na ** 2)
        d_zb = ds[:, None] * (za / (na * nb) - cos * zb / nb ** 2)
    grad = np.zeros_like(z)
    np.add.at(grad, a, d_za)
    np.add.at(grad, b, d_zb)
    return loss, grad


@dataclass
class AdamState:
    m: List[np.ndarray]
    v: List[np.ndarray]
    t: int = 0

    @classmethod
    def zeros(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


def adam_update(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState,
                config: TrainConfig) -> Tuple[List[np.ndarray], AdamState]:
    """One bias-corrected Adam step; inputs are left untouched."""
    t = state.t + 1
    b1, b2 = config.beta1, config.beta2
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        new_params.append(p - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(new_m, new_v, t)


def adam_step(model: GcnModel, grads: Sequence[np.ndarray], state: AdamState,
              config: TrainConfig) -> Tuple[GcnModel, AdamState]:
    weights, state = adam_update(model.weights, grads, state, config)
    return GcnModel(weights, model.activation), state


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroNormError("cosine similarity is undefined for a zero-norm vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


@dataclass(eq=False)
class EmbeddingTable:
    """One row per node, ordered as CategorySpace.node_names."""

    names: List[str]
    vectors: np.ndarray
    space_hash: str = ""

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=float)
        if self.vectors.shape[0] != len(self.names):
            raise ShapeMismatchError("one embedding row per node name required")
        if not np.all(np.isfinite(self.vectors)):
            raise NonFiniteError(3, "embedding table holds non-finite values")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def vector(self, key) -> np.ndarray:
        idx = self.names.index(key) if isinstance(key, str) else int(key)
        return self.vectors[idx]

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.vectors, columns=[f"e{i}" for i in range(self.dim)])
        df.insert(0, "node", self.names)
        return df

    def to_csv(self) -> str:
        return self.to_frame().to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")

    @classmethod
    def from_csv(cls, text: str, space_hash: str = "") -> "EmbeddingTable":
        df = pd.read_csv(io.StringIO(text), float_precision="round_trip")
        return cls(df["node"].astype(str).tolist(), df.drop(columns=["node"]).to_numpy(dtype=float), space_hash)


@dataclass
class TrainResult:
    model: GcnModel
    table: EmbeddingTable
    loss_history: List[float]
    epochs_run: int
    stopped_early: bool = False


def train(pruned: SRG, corpus: Sequence[Trajectory], space: CategorySpace,
          config: TrainConfig = TrainConfig()) -> TrainResult:
    """Full-batch training over every pair derived from the corpus."""
    if not corpus:
        raise ValueError("training corpus is empty")
    adjacency, features = srg_to_gcn_inputs(pruned, space)
    a_hat = normalize_adjacency(adjacency)
    collapsed = collapse_pairs(corpus_pairs(corpus, space))
    pairs = [p for p, _ in collapsed]
    counts = [c for _, c in collapsed]
    logger.info("Training on %d unique pairs (%d total) for up to %d epochs",
                len(pairs), sum(counts), config.epochs)

    model = GcnModel.initialize(space.num_nodes, config.hidden1, config.hidden2, config.embed_dim,
                                config.seed, config.activation)
    state = AdamState.zeros(model.weights)
    history: List[float] = []
    best, since_best, stopped = math.inf, 0, False
    for epoch in range(config.epochs):
        try:
            emb, cache = gcn_forward(model, a_hat, features)
        except NonFiniteError as e:
            raise DivergenceError(epoch, history[-1] if history else float("nan")) from e
        loss, d_emb = pair_loss_and_grad(emb, pairs, counts, config.similarity)
        if not math.isfinite(loss):
            raise DivergenceError(epoch, history[-1] if history else float("nan"))
        history.append(loss)
        model, state = adam_step(model, backward(model, cache, d_emb), state, config)

        if loss < best - config.min_delta * abs(best if math.isfinite(best) else loss):
            best, since_best = loss, 0
        else:
            since_best += 1
        if config.patience and since_best >= config.patience:
            logger.warning("Loss plateaued at %.6g; stopping after epoch %d", loss, epoch + 1)
            stopped = True
            break
        if (epoch + 1) % 50 == 0:
            logger.debug("epoch %d loss %.6g", epoch + 1, loss)

    emb, _ = gcn_forward(model, a_hat, features)
    table = EmbeddingTable(space.node_names, emb, space.hash)
    return TrainResult(model, table, history, len(history), stopped)


# ---------------------------------------------------------------------------
# Checkpoints and tables on disk
# ---------------------------------------------------------------------------

def checkpoint_to_dict(result: TrainResult, config: TrainConfig, space: CategorySpace) -> dict:
    return {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "category_space_hash": space.hash,
        "dims": list(result.model.dims),
        "activation": result.model.activation,
        "train_config": asdict(config),
        "weights": [w.tolist() for w in result.model.weights],
        "embeddings": result.table.vectors.tolist(),
        "node_names": result.table.names,
        "epochs_run": result.epochs_run,
        "stopped_early": result.stopped_early,
    }


def save_checkpoint(path, result: TrainResult, config: TrainConfig, space: CategorySpace):
    return write_text(path, canonical_json(checkpoint_to_dict(result, config, space)))


def load_checkpoint(path, space: CategorySpace) -> Tuple[GcnModel, EmbeddingTable, TrainConfig]:
    try:
        data = json.loads(read_text(path))
        if data["format_version"] != CHECKPOINT_FORMAT_VERSION:
            raise MalformedFileError(f"unsupported checkpoint format_version {data['format_version']}")
        if data["category_space_hash"] != space.hash:
            raise HashMismatchError(
                f"checkpoint built for category space {data['category_space_hash']}, expected {space.hash}"
            )
        model = GcnModel([np.array(w, dtype=float) for w in data["weights"]], data["activation"])
        table = EmbeddingTable(list(data["node_names"]), np.array(data["embeddings"], dtype=float), space.hash)
        config = TrainConfig(**data["train_config"])
    except (KeyError, TypeError, json.JSONDecodeError) as e:
        raise MalformedFileError(f"{path}: malformed checkpoint ({e})") from e
    return model, table, config


def loss_history_csv(history: Sequence[float]) -> str:
    df = pd.DataFrame({"epoch": np.arange(1, len(history) + 1), "loss": list(history)})
    return df.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
