"""Leaky softplus ``a*x + (1-a)*log(1+e^x)`` and the identity output activation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

DEFAULT_ALPHA = 0.1
INVERSE_TOL = 1e-12
INVERSE_MAX_ITER = 100
_SOFTPLUS_BRANCH = 30.0


class NoConvergence(ArithmeticError):
    pass


def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    big = x > _SOFTPLUS_BRANCH
    # x + log1p(e^-x) keeps precision for large x, log1p(e^x) for the rest
    safe = np.where(big, 0.0, x)
    return np.where(big, x + np.log1p(np.exp(-np.where(big, x, 0.0))), np.log1p(np.exp(safe)))


@dataclass(frozen=True)
class LeakySoftplus:
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")

    name = "leaky_softplus"

    def value(self, x):
        x = np.asarray(x, dtype=np.float64)
        return self.alpha * x + (1.0 - self.alpha) * softplus(x)

    def prime(self, x):
        return self.alpha + (1.0 - self.alpha) * expit(np.asarray(x, dtype=np.float64))

    def second(self, x):
        s = expit(np.asarray(x, dtype=np.float64))
        return (1.0 - self.alpha) * s * (1.0 - s)

    def inverse(self, y, tol: float = INVERSE_TOL):
        """Safeguarded Newton solve of ``value(x) = y``.

        Since ``max(0,x) < softplus(x) <= max(0,x) + ln 2``, the piecewise-linear
        map ``g(x) = a*x + (1-a)*max(0,x)`` gives the bracket
        ``[g^-1(y - (1-a) ln 2), g^-1(y)]``. Newton starts at the right end;
        any step leaving the bracket is replaced by bisection.
        """
        y = np.asarray(y, dtype=np.float64)
        scalar = y.ndim == 0
        y = np.atleast_1d(y)
        a = self.alpha

        def ginv(t):
            return np.where(t >= 0.0, t, t / a)

        lo = ginv(y - (1.0 - a) * np.log(2.0))
        hi = ginv(y)
        x = hi.copy()
        target = tol * np.maximum(1.0, np.abs(y))
        done = np.zeros(y.shape, dtype=bool)
        for _ in range(INVERSE_MAX_ITER):
            r = self.value(x) - y
            done = np.abs(r) <= target
            if done.all():
                break
            hi = np.where(r > 0.0, x, hi)
            lo = np.where(r < 0.0, x, lo)
            step = x - r / self.prime(x)
            inside = (step > lo) & (step < hi)
            x = np.where(done, x, np.where(inside, step, 0.5 * (lo + hi)))
        else:
            if not done.all():
                raise NoConvergence(f"leaky softplus inverse: {int((~done).sum())} values unconverged")
        # one polishing step: the tolerance is relative to |y| and the slope can be as small as alpha
        step = x - (self.value(x) - y) / self.prime(x)
        x = np.where(np.isfinite(step), step, x)
        return float(x[0]) if scalar else x


@dataclass(frozen=True)
class Identity:
    name = "identity"

    def value(self, x):
        return np.asarray(x, dtype=np.float64)

    def prime(self, x):
        return np.ones_like(np.asarray(x, dtype=np.float64))

    def second(self, x):
        return np.zeros_like(np.asarray(x, dtype=np.float64))

    def inverse(self, y, tol: float = INVERSE_TOL):
        return np.asarray(y, dtype=np.float64)


ActivationKind = LeakySoftplus | Identity


def act(kind: ActivationKind, x):
    return kind.value(x)


def act_prime(kind: ActivationKind, x):
    return kind.prime(x)


def act_second(kind: ActivationKind, x):
    return kind.second(x)


def act_inverse(kind: ActivationKind, y, tol: float = INVERSE_TOL):
    return kind.inverse(y, tol)


def to_spec(kind: ActivationKind) -> dict:
    if isinstance(kind, LeakySoftplus):
        return {"kind": kind.name, "alpha": kind.alpha}
    return {"kind": kind.name}


def from_spec(spec: dict) -> ActivationKind:
    if spec["kind"] == LeakySoftplus.name:
        return LeakySoftplus(float(spec["alpha"]))
    if spec["kind"] == Identity.name:
        return Identity()
    raise ValueError(f"unknown activation kind {spec['kind']!r}")
