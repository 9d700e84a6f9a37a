"""Training loop and inference for the subspace network."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError, DivergenceError, DimensionError
from ..linalg import qr_thin
from .gram_schmidt import orthonormalize_backward, orthonormalize_forward
from .losses import LossKind, loss_weights, weighted_energy_loss
from .mlp import SMALL_HIDDEN, Adam, MlpModel

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    rank: int
    epochs: int = 1000
    learning_rate: float = 1e-3
    batch_size: int = 1
    permutation_augmentation: bool = True
    mixing_augmentation: bool = False
    seed: int = 0
    loss: LossKind = LossKind.NLSS
    hidden: tuple = SMALL_HIDDEN

    def __post_init__(self):
        self.loss = LossKind.parse(self.loss)
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.rank < 1:
            raise ConfigError("rank must be positive")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["loss"] = self.loss.value
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class TrainResult:
    model: MlpModel
    optimizer: Adam
    history: list = field(default_factory=list)


def encode_input(S) -> np.ndarray:
    """Frobenius-normalised S, flattened column by column."""
    S = np.asarray(S, dtype=np.float64)
    return (S / np.linalg.norm(S)).T.ravel()


def decode_output(out, n: int) -> np.ndarray:
    """``(B, n*r)`` network output to ``(B, n, r)`` with column-major columns."""
    out = np.atleast_2d(out)
    r = out.shape[1] // n
    return out.reshape(out.shape[0], r, n).transpose(0, 2, 1)


def forward(model: MlpModel, S) -> np.ndarray:
    """Raw (non-orthonormal) n x r basis predicted for one S."""
    S = np.asarray(S, dtype=np.float64)
    n = S.shape[0]
    if model.in_features != S.size:
        raise DimensionError(f"model expects {model.in_features} inputs, S has {S.size}")
    out, _ = model.forward(encode_input(S)[None])
    return decode_output(out, n)[0]


def predict_basis(model: MlpModel, S, rank: int | None = None) -> np.ndarray:
    """Orthonormal learned basis, optionally truncated to its leading columns."""
    P, _ = orthonormalize_forward(forward(model, S))
    if rank is not None:
        P, _ = qr_thin(P[:, :rank])
    return P


def random_orthogonal(k: int, rng) -> np.ndarray:
    """Haar-distributed k x k orthogonal matrix."""
    Q, R = np.linalg.qr(rng.standard_normal((k, k)))
    return Q * np.where(np.diag(R) < 0, -1.0, 1.0)


def _as_matrix(item) -> np.ndarray:
    return np.asarray(getattr(item, "S", item), dtype=np.float64)


def train_step(model: MlpModel, optimizer: Adam, batch, weights):
    """One optimiser update on a list of S matrices; returns the mean loss."""
    S = np.stack(batch)
    B, n, _ = S.shape
    X = np.stack([encode_input(s) for s in batch])
    out, cache = model.forward(X)
    P_raw = decode_output(out, n)
    P, tape = orthonormalize_forward(P_raw)
    loss, dP = weighted_energy_loss(S, P, weights)
    dP_raw = orthonormalize_backward(tape, dP / B)
    dout = dP_raw.transpose(0, 2, 1).reshape(B, -1)
    grads, _ = model.backward(cache, dout)
    optimizer.step(model.params, grads)
    return float(loss.mean())


def train(model: MlpModel, dataset, config: TrainConfig, optimizer: Adam | None = None,
          callback=None) -> TrainResult:
    """Fit ``model`` so its orthonormalised output spans the leading subspace of S.

    Each step permutes the columns of every S in the batch (when enabled),
    normalises it, runs the network and Gram-Schmidt, and applies Adam to the
    backpropagated loss gradient. ``history`` holds the mean loss per epoch.
    """
    data = [_as_matrix(item) for item in dataset]
    if not data:
        raise ConfigError("training set is empty")
    n, K = data[0].shape
    if any(s.shape != (n, K) for s in data):
        raise ConfigError("all training instances must share n and K")
    if config.rank > K:
        raise ConfigError(f"rank {config.rank} exceeds the number of smoothed vectors {K}")
    if model.in_features != n * K or model.out_features != n * config.rank:
        raise ConfigError("model widths do not match (n, K, rank)")
    if optimizer is None:
        optimizer = Adam(model.params, lr=config.learning_rate)
    rng = np.random.default_rng(config.seed)
    weights = loss_weights(config.loss, config.rank)
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(data))
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = []
            for idx in order[start:start + config.batch_size]:
                S = data[idx]
                if config.permutation_augmentation:
                    S = S[:, rng.permutation(K)]
                if config.mixing_augmentation:
                    S = S @ random_orthogonal(K, rng)
                batch.append(S)
            loss = train_step(model, optimizer, batch, weights)
            if not np.isfinite(loss):
                raise DivergenceError(f"loss became non-finite in epoch {epoch}", epoch=epoch)
            losses.append(loss)
        history.append(float(np.mean(losses)))
        if callback is not None:
            callback(epoch, history[-1])
    return TrainResult(model, optimizer, history)


def evaluate_loss(model: MlpModel, dataset, kind, rank: int | None = None) -> np.ndarray:
    """Per-instance loss of the learned bases (truncated to ``rank`` if given)."""
    out = []
    for item in dataset:
        S = _as_matrix(item)
        P = predict_basis(model, S, rank)
        w = loss_weights(kind, P.shape[1])
        loss, _ = weighted_energy_loss(S[None], P[None], w)
        out.append(float(loss[0]))
    return np.array(out)
