"""Condition numbers of the learned factors, projection normality tests, and likelihood ranking."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .model import LUNet, forward, log_density
from .trilinalg import NearSingularDiagonal, condition_number


@dataclass
class LayerCondition:
    layer: int
    kappa_U: float
    kappa_L: float
    singular: bool = False


@dataclass
class ConditionReport:
    M: int
    D: int
    layers: list[LayerCondition]
    checkpoint_id: str = ""

    def rows(self) -> list[tuple]:
        return [(c.layer, c.kappa_U, c.kappa_L, int(c.singular)) for c in self.layers]


def condition_report(net: LUNet, checkpoint_id: str = "", seed: int = 0) -> ConditionReport:
    """kappa(U) and kappa(L) for every layer; singular U factors are flagged with kappa = inf."""
    out = []
    for m, layer in enumerate(net.layers):
        try:
            ku = condition_number(layer.U, seed=seed)
            singular = False
        except NearSingularDiagonal:
            ku, singular = math.inf, True
        out.append(LayerCondition(m, ku, condition_number(layer.L, seed=seed), singular))
    return ConditionReport(net.depth, net.dim, out, checkpoint_id)


def ks_statistic(values) -> float:
    """One-sample Kolmogorov-Smirnov distance to the standard normal CDF."""
    x = np.sort(np.asarray(values, dtype=np.float64))
    n = x.size
    cdf = ndtr(x)
    above = np.arange(1, n + 1) / n - cdf
    below = cdf - np.arange(0, n) / n
    return float(max(above.max(), below.max()))


@dataclass
class ProjectionTest:
    direction: np.ndarray
    values: np.ndarray = field(repr=False)
    ks_statistic: float
    seed: int


def random_direction(dim: int, seed: int) -> np.ndarray:
    c = np.random.default_rng(seed).standard_normal(dim)
    return c / np.linalg.norm(c)


def projection_normality(net: LUNet, data, seed: int = 0) -> ProjectionTest:
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    if data.shape[0] == 0:
        raise ValueError("data must be non-empty")
    c = random_direction(net.dim, seed)
    z, _ = forward(net, data)
    values = z @ c
    return ProjectionTest(c, values, ks_statistic(values), seed)


def rank_by_likelihood(net: LUNet, data) -> np.ndarray:
    """Indices ordered by decreasing log-density; ties keep their input order."""
    ld = np.atleast_1d(log_density(net, np.atleast_2d(data)))
    return np.argsort(-ld, kind="stable")


def normality_histogram(test: ProjectionTest, bins: int) -> np.ndarray:
    """Rows ``(bin_center, count, normal_density)`` over equal-width bins on [min, max].

    Bins are half-open ``[a, b)`` except the last, which is closed on the right.
    Constant samples fall into the middle of a unit-width range around the value.
    """
    if bins < 2:
        raise ValueError("bins must be at least 2")
    counts, edges = np.histogram(test.values, bins=bins)
    centers = 0.5 * (edges[:-1] + edges[1:])
    density = np.exp(-0.5 * centers**2) / math.sqrt(2.0 * math.pi)
    return np.column_stack([centers, counts.astype(np.float64), density])
