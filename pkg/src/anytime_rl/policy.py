"""Linear-softmax categorical policies with exact log-probability gradients.

Both the thinking and the summary policy are a single weight matrix W of
shape (feature_dim, n_actions); logits are <W[:, a], features>. No hidden
layers: gradients are analytic and cheap to verify by finite differences.
Parameters initialize to zeros, i.e. the uniform policy.

Checkpoint format (little-endian): magic b"ARLP", uint32 version, uint64
feature_dim, uint64 n_actions, then float64 weights in row-major order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .core import PROB_ATOL

_MAGIC = b"ARLP"
_VERSION = 1


@dataclass
class PolicyParams:
    """Weight matrix of a linear-softmax policy; float64, finite entries."""

    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ValueError(f"weights must be 2-D, got shape {self.weights.shape}")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights contain non-finite entries")

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def n_actions(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.weights.copy())

    def flat(self) -> np.ndarray:
        return self.weights.reshape(-1)


def zero_params(feature_dim: int, n_actions: int) -> PolicyParams:
    return PolicyParams(np.zeros((feature_dim, n_actions)))


def softmax(logits: np.ndarray) -> np.ndarray:
    """Stabilized softmax over the last axis."""
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    exps = np.exp(shifted)
    return exps / exps.sum(axis=-1, keepdims=True)


def _check_features(params: PolicyParams, features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.shape != (params.feature_dim,):
        raise ValueError(
            f"feature dimension {features.shape} does not match params ({params.feature_dim},)"
        )
    return features


def action_distribution(params: PolicyParams, features: np.ndarray) -> np.ndarray:
    """Softmax action probabilities for one feature vector."""
    features = _check_features(params, features)
    return softmax(features @ params.weights)


def log_prob(params: PolicyParams, features: np.ndarray, action: int) -> float:
    features = _check_features(params, features)
    logits = features @ params.weights
    shifted = logits - logits.max()
    return float(shifted[action] - np.log(np.exp(shifted).sum()))


def log_prob_grad(params: PolicyParams, features: np.ndarray, action: int) -> np.ndarray:
    """d/dW log pi(action | features) = features (x) (one_hot(action) - probs)."""
    features = _check_features(params, features)
    probs = softmax(features @ params.weights)
    delta = -probs
    delta[action] += 1.0
    return np.outer(features, delta)


def sample_from_probs(probs: np.ndarray, u: float) -> int:
    """Inverse-CDF categorical draw from one uniform in [0, 1)."""
    cum = np.cumsum(probs)
    return min(int(np.searchsorted(cum, u, side="right")), len(probs) - 1)


def sample_action(
    params: PolicyParams,
    features: np.ndarray,
    rng: np.random.Generator,
    deterministic: bool = False,
) -> int:
    """Categorical draw (one uniform consumed); deterministic mode returns the
    lowest-index argmax instead and consumes nothing."""
    probs = action_distribution(params, features)
    if deterministic:
        return int(np.argmax(probs))
    return sample_from_probs(probs, float(rng.random()))


class StateDistributionTable:
    """Per-state action distributions for one-hot feature spaces.

    For tabular contexts (every feature vector a basis vector e_i) the logits
    of state i are just row i of the weight matrix; caching the softmax of
    the whole matrix makes rollouts cheap and is exactly equivalent to
    action_distribution on the one-hot vectors.
    """

    def __init__(self, params: PolicyParams):
        self.probs = softmax(params.weights)
        self.cum = np.cumsum(self.probs, axis=1)
        with np.errstate(divide="ignore"):
            self.logp = np.log(self.probs)

    def distribution(self, state_index: int) -> np.ndarray:
        return self.probs[state_index]

    def sample(self, state_index: int, u: float) -> int:
        row = self.cum[state_index]
        return min(int(np.searchsorted(row, u, side="right")), row.shape[0] - 1)

    def log_prob(self, state_index: int, action: int) -> float:
        return float(self.logp[state_index, action])


def check_distribution(probs: np.ndarray) -> None:
    if np.any(probs < 0) or abs(float(probs.sum()) - 1.0) > PROB_ATOL:
        raise ValueError("action probabilities must be a distribution")


def save_params(params: PolicyParams, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<QQ", params.feature_dim, params.n_actions))
        fh.write(params.weights.astype("<f8").tobytes())


def load_params(path: str) -> PolicyParams:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a policy checkpoint (bad magic {magic!r})")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        d, a = struct.unpack("<QQ", fh.read(16))
        data = np.frombuffer(fh.read(d * a * 8), dtype="<f8").reshape(d, a)
    return PolicyParams(data.copy())
