"""Logistic router fitting and the on-disk router checkpoint.

Checkpoint layout (little-endian, see docs/router_checkpoint.md)::

    magic   4 bytes  b"VIRC"
    version u16      1
    dim     u32      feature dimension D
    weights (D+1) x f64, bias last
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import InvalidInput, ShapeError
from ..vision import RouterParams

CKPT_MAGIC = b"VIRC"
CKPT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sHI")


def _design(dataset) -> tuple[np.ndarray, np.ndarray]:
    if not dataset:
        raise InvalidInput("empty router dataset")
    dims = {len(np.ravel(x)) for x, _ in dataset}
    if len(dims) != 1:
        raise ShapeError(f"features have mixed dims {sorted(dims)}")
    x = np.array([np.ravel(f) for f, _ in dataset], dtype=np.float64)
    y = np.array([int(lab) for _, lab in dataset], dtype=np.float64)
    if not np.all((y == 0) | (y == 1)):
        raise InvalidInput("labels must be 0 or 1")
    return np.hstack([x, np.ones((len(x), 1))]), y


def _log_sigmoid(z):
    return -np.logaddexp(0.0, -z)


def logistic_loss(weights: np.ndarray, xb: np.ndarray, y: np.ndarray) -> float:
    z = xb @ weights
    return float(-np.mean(y * _log_sigmoid(z) + (1 - y) * _log_sigmoid(-z)))


def logistic_grad(weights: np.ndarray, xb: np.ndarray, y: np.ndarray) -> np.ndarray:
    z = xb @ weights
    p = 0.5 * (1.0 + np.tanh(0.5 * z))
    return xb.T @ (p - y) / len(y)


def train_router(dataset, epochs: int = 500, lr: float = 0.5,
                 init: RouterParams | None = None, history: list | None = None) -> RouterParams:
    """Full-batch gradient descent on binary cross-entropy.

    ``dataset`` is a sequence of (pooled feature, label). If ``history`` is
    given, the training loss before each epoch and after the last one is
    appended to it.
    """
    xb, y = _design(dataset)
    if init is None:
        w = np.zeros(xb.shape[1])
    else:
        if init.dim != xb.shape[1] - 1:
            raise ShapeError(f"init dim {init.dim} != feature dim {xb.shape[1] - 1}")
        w = init.weights.copy()
    for _ in range(int(epochs)):
        if history is not None:
            history.append(logistic_loss(w, xb, y))
        w = w - lr * logistic_grad(w, xb, y)
    if history is not None:
        history.append(logistic_loss(w, xb, y))
    return RouterParams(w)


def router_accuracy(params: RouterParams, dataset, threshold: float = 0.5) -> float:
    xb, y = _design(dataset)
    pred = (params.score(xb[:, :-1]) >= threshold).astype(float)
    return float(np.mean(pred == y))


def save_router(params: RouterParams, path) -> None:
    data = _CKPT_HEADER.pack(CKPT_MAGIC, CKPT_VERSION, params.dim) + params.weights.astype("<f8").tobytes()
    Path(path).write_bytes(data)


def load_router(path) -> RouterParams:
    data = Path(path).read_bytes()
    if len(data) < _CKPT_HEADER.size:
        raise InvalidInput("router checkpoint truncated")
    magic, version, dim = _CKPT_HEADER.unpack_from(data)
    if magic != CKPT_MAGIC:
        raise InvalidInput(f"not a router checkpoint (magic {magic!r})")
    if version != CKPT_VERSION:
        raise InvalidInput(f"unsupported router checkpoint version {version}")
    body = data[_CKPT_HEADER.size :]
    if len(body) != 8 * (dim + 1):
        raise InvalidInput(f"checkpoint holds {len(body)} bytes, expected {8 * (dim + 1)}")
    return RouterParams(np.frombuffer(body, dtype="<f8").astype(np.float64))
