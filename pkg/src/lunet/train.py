"""Maximum-likelihood training: clipped SGD with heavy-ball momentum and step decay."""
from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .model import GradientSet, LUNet, backward, log_density, zeros_like_net

LN2 = math.log(2.0)


class Diverged(ArithmeticError):
    def __init__(self, epoch: int, batch: int, reason: str = "non-finite loss"):
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"training diverged at epoch {epoch}, batch {batch}: {reason}")


class ClipKind(str, enum.Enum):
    EUCLIDEAN = "euclidean"   # global L2 norm, rescale
    MAX_ABS = "maxabs"        # global max |g|, rescale
    CLAMP = "clamp"           # per-entry clamp to [-t, t]
    L1 = "l1"                 # global sum |g|, rescale


class Unit(str, enum.Enum):
    NATS = "nats"
    BITS_PER_PIXEL = "bpd"


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 128
    lr0: float = 1.0
    lr_decay: float = 0.9
    decay_every: int = 1
    momentum: float = 0.9
    clip_kind: ClipKind = ClipKind.EUCLIDEAN
    clip_threshold: float = 1.0
    gamma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.clip_kind = ClipKind(self.clip_kind)
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.lr0 < 0:
            raise ValueError("lr0 must be non-negative")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ValueError("lr_decay must lie in (0, 1]")
        if self.decay_every < 1:
            raise ValueError("decay_every must be at least 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.clip_threshold <= 0:
            raise ValueError("clip_threshold must be positive")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")


@dataclass
class OptimizerState:
    velocity: GradientSet

    @classmethod
    def zeros(cls, net: LUNet) -> "OptimizerState":
        return cls(zeros_like_net(net))


def _blocks(grads: GradientSet):
    for g in grads:
        yield g.du
        yield g.dl
        yield g.db


def global_norm(grads: GradientSet, kind: ClipKind | str) -> float:
    kind = ClipKind(kind)
    if kind is ClipKind.EUCLIDEAN:
        return math.sqrt(sum(float(np.dot(b, b)) for b in _blocks(grads)))
    if kind is ClipKind.L1:
        return sum(float(np.abs(b).sum()) for b in _blocks(grads))
    return max((float(np.abs(b).max()) for b in _blocks(grads) if b.size), default=0.0)


def clip_gradients(grads: GradientSet, kind: ClipKind | str, threshold: float) -> GradientSet:
    """Clip in place (and return) so the keyed norm is at most ``threshold``."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    kind = ClipKind(kind)
    if kind is ClipKind.CLAMP:
        for b in _blocks(grads):
            np.clip(b, -threshold, threshold, out=b)
        return grads
    g = global_norm(grads, kind)
    if g > threshold:
        scale = threshold / g
        for b in _blocks(grads):
            b *= scale
    return grads


def sgd_momentum_step(net: LUNet, grads: GradientSet, state: OptimizerState,
                      lr: float, momentum: float) -> None:
    """Heavy-ball update ``v <- momentum*v + g``, ``theta <- theta - lr*v``."""
    for layer, g, v in zip(net.layers, grads, state.velocity):
        for p, gb, vb in zip(layer.params(), (g.du, g.dl, g.db), (v.du, v.dl, v.db)):
            if p.shape != gb.shape or p.shape != vb.shape:
                raise ValueError("gradient shape does not match parameter shape")
            vb *= momentum
            vb += gb
            p -= lr * vb


def lr_at(config: TrainConfig, epoch: int) -> float:
    return config.lr0 * config.lr_decay ** (epoch // config.decay_every)


@dataclass
class EpochStats:
    epoch: int
    lr: float
    train_nll: float   # nats per sample, gamma = 1
    wallclock: float


@dataclass
class TrainReport:
    epochs: list[EpochStats] = field(default_factory=list)

    @property
    def train_nll(self) -> list[float]:
        return [e.train_nll for e in self.epochs]


def fit(net: LUNet, train_data, config: TrainConfig,
        hooks: Callable[[EpochStats], None] | None = None,
        state: OptimizerState | None = None) -> TrainReport:
    """Train ``net`` in place; reports the running mean train NLL of each epoch."""
    data = np.asarray(train_data, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != net.dim:
        raise ValueError(f"training data must be (N, {net.dim}), got {data.shape}")
    state = state or OptimizerState.zeros(net)
    report = TrainReport()
    start = time.perf_counter()
    n = data.shape[0]
    for epoch in range(config.epochs):
        lr = lr_at(config, epoch)
        order = np.random.default_rng([config.seed, epoch]).permutation(n)
        total = 0.0
        for bi, lo in enumerate(range(0, n, config.batch_size)):
            batch = data[order[lo:lo + config.batch_size]]
            try:
                loss, grads = backward(net, batch, config.gamma)
            except ArithmeticError as exc:
                raise Diverged(epoch, bi, str(exc)) from exc
            if not math.isfinite(loss):
                raise Diverged(epoch, bi)
            log_diag = sum(float(np.log(np.abs(l.U.diagonal())).sum()) for l in net.layers)
            total += loss + (config.gamma - 1.0) * batch.shape[0] * log_diag
            clip_gradients(grads, config.clip_kind, config.clip_threshold)
            sgd_momentum_step(net, grads, state, lr, config.momentum)
        stats = EpochStats(epoch, lr, total / n, time.perf_counter() - start)
        report.epochs.append(stats)
        if hooks is not None:
            hooks(stats)
    return report


def per_sample_nll(net: LUNet, data, unit: Unit | str = Unit.NATS,
                   pipeline_correction=None) -> np.ndarray:
    values = -np.atleast_1d(log_density(net, np.atleast_2d(data)))
    if Unit(unit) is Unit.BITS_PER_PIXEL:
        if pipeline_correction is not None:
            values = values + np.asarray(pipeline_correction, dtype=np.float64)
        values = values / (net.dim * LN2)
    return values


def evaluate_nll(net: LUNet, data, unit: Unit | str = Unit.NATS,
                 pipeline_correction=None) -> tuple[float, float]:
    """Mean and standard deviation of the per-sample NLL."""
    values = per_sample_nll(net, data, unit, pipeline_correction)
    if values.size == 0:
        raise ValueError("data must be non-empty")
    return float(values.mean()), float(values.std())
