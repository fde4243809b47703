"""
One-hidden-layer ReLU network under the Chebyshev (max-abs) loss.

Training is full batch: every epoch takes one optimizer step along the subgradient
of the loss at a single worst point.
"""
import logging
import math
import time
from typing import List, Tuple

import numpy as np

from models.schemas import FreeKnotError, OptimizerKind, ReluNet1, SampledFunction, TrainConfig, TrainHistory

logger = logging.getLogger(__name__)

ZERO_WEIGHT = 1e-12
KNOT_MERGE_RTOL = 1e-9


class DivergenceError(FreeKnotError):
    """Raised when the training loss stops being finite."""

    def __init__(self, epoch: int, loss: float = math.nan):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")


def init_net(hidden: int = 1, seed: int = 0) -> ReluNet1:
    """Weights uniform on (-1, 1), biases zero."""
    rng = np.random.default_rng(seed)
    w1 = rng.uniform(-1.0, 1.0, hidden)
    w2 = rng.uniform(-1.0, 1.0, hidden)
    return ReluNet1(w1=tuple(w1.tolist()), b1=(0.0,) * hidden, w2=tuple(w2.tolist()), b2=0.0)


def _arrays(net: ReluNet1):
    return (np.asarray(net.w1, dtype=float), np.asarray(net.b1, dtype=float),
            np.asarray(net.w2, dtype=float), float(net.b2))


def _flatten(net: ReluNet1) -> np.ndarray:
    w1, b1, w2, b2 = _arrays(net)
    return np.concatenate([w1, b1, w2, [b2]])


def _split(params: np.ndarray, n: int):
    return params[:n], params[n:2 * n], params[2 * n:3 * n], float(params[3 * n])


def _unflatten(params: np.ndarray, n: int) -> ReluNet1:
    w1, b1, w2, b2 = _split(params, n)
    return ReluNet1(w1=tuple(w1.tolist()), b1=tuple(b1.tolist()), w2=tuple(w2.tolist()), b2=b2)


def _output(w1, b1, w2, b2, x: np.ndarray) -> np.ndarray:
    z = np.multiply.outer(x, w1) + b1
    return np.maximum(z, 0.0) @ w2 + b2


def forward(net: ReluNet1, x):
    """y(x) = sum_j w2_j max(0, w1_j x + b1_j) + b2, for a scalar or an array."""
    xs = np.asarray(x, dtype=float)
    y = _output(*_arrays(net), np.atleast_1d(xs))
    return float(y[0]) if xs.ndim == 0 else y.reshape(xs.shape)


def chebyshev_loss(net: ReluNet1, data: SampledFunction) -> float:
    return float(np.max(np.abs(forward(net, data.t) - data.f)))


def _subgradient(params: np.ndarray, n: int, t: np.ndarray, f: np.ndarray) -> Tuple[float, np.ndarray]:
    w1, b1, w2, b2 = _split(params, n)
    residual = _output(w1, b1, w2, b2, t) - f
    j = int(np.argmax(np.abs(residual)))  # lowest index on ties
    sigma = float(np.sign(residual[j]))
    x = t[j]
    z = w1 * x + b1
    active = (z > 0).astype(float)
    grad = np.concatenate([
        sigma * w2 * active * x,
        sigma * w2 * active,
        sigma * np.maximum(z, 0.0),
        [sigma],
    ])
    return float(abs(residual[j])), grad


def loss_subgradient(net: ReluNet1, data: SampledFunction) -> np.ndarray:
    """Subgradient of the Chebyshev loss, ordered as (w1, b1, w2, b2)."""
    _, grad = _subgradient(_flatten(net), net.hidden, data.t, data.f)
    return grad


class Adam:
    def __init__(self, size: int, lr: float, b1: float, b2: float, eps: float):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.t = 0
        self.m = np.zeros(size)
        self.v = np.zeros(size)

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad**2
        m_hat = self.m / (1 - self.b1**self.t)
        v_hat = self.v / (1 - self.b2**self.t)
        return theta - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class Adamax(Adam):
    """Adam with the second moment replaced by an exponentially weighted infinity norm."""

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = np.maximum(self.b2 * self.v, np.abs(grad))
        return theta - (self.lr / (1 - self.b1**self.t)) * self.m / (self.v + self.eps)


OPTIMIZERS = {
    OptimizerKind.ADAM: Adam,
    OptimizerKind.ADAMAX: Adamax,
}


def train(net0: ReluNet1, data: SampledFunction, cfg: TrainConfig) -> Tuple[ReluNet1, TrainHistory]:
    n = net0.hidden
    t = np.asarray(data.t, dtype=float)
    f = np.asarray(data.f, dtype=float)
    params = _flatten(net0)
    opt = OPTIMIZERS[cfg.optimizer](params.size, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)

    start = time.perf_counter()
    losses: List[float] = []
    for epoch in range(1, cfg.epochs + 1):
        _, grad = _subgradient(params, n, t, f)
        params = opt.step(params, grad)
        loss = float(np.max(np.abs(_output(*_split(params, n), t) - f)))
        if not math.isfinite(loss):
            logger.error(f"{cfg.optimizer.value}: loss {loss} at epoch {epoch}")
            raise DivergenceError(epoch, loss)
        losses.append(loss)
        if epoch % 50 == 0:
            logger.debug(f"{cfg.optimizer.value} epoch {epoch}: loss {loss:.6g}")

    net = _unflatten(params, n)
    final = losses[-1] if losses else chebyshev_loss(net0, data)
    history = TrainHistory(loss_per_epoch=losses, final_loss=final, wall_time=time.perf_counter() - start)
    logger.info(f"{data.label}: {cfg.optimizer.value} finished {cfg.epochs} epochs, loss {final:.6g}")
    return net, history


def extract_knots(net: ReluNet1, c: float, d: float) -> List[float]:
    """Knots -b1/w1 of the hidden nodes that fall inside (c, d), sorted and merged."""
    w1, b1, _, _ = _arrays(net)
    live = np.abs(w1) > ZERO_WEIGHT
    theta = np.sort(-b1[live] / w1[live])
    theta = theta[(theta > c) & (theta < d)]
    merged: List[float] = []
    tol = KNOT_MERGE_RTOL * (d - c)
    for k in theta:
        if not merged or k - merged[-1] > tol:
            merged.append(float(k))
    return merged

