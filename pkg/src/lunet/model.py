"""LU layers, the LU network, exact log-densities and hand-written backpropagation.

A layer maps ``x -> phi(L U x + b)`` with ``L`` unit lower triangular and ``U``
upper triangular. Hidden layers use leaky softplus, the last layer the identity.
Batches are ``(N, D)`` arrays; single vectors ``(D,)`` are accepted everywhere.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .activation import ActivationKind, Identity, LeakySoftplus, DEFAULT_ALPHA
from .trilinalg import (
    DIAG_EPS,
    UnitLowerTriangular,
    UpperTriangular,
    pack_lower,
    pack_upper,
    solve_unit_lower,
    solve_upper,
    upper_diag_positions,
)

LOG_2PI = float(np.log(2.0 * np.pi))


class NonFinite(ArithmeticError):
    def __init__(self, layer: int, where: str):
        self.layer = layer
        super().__init__(f"non-finite values in layer {layer} ({where})")


class InitScheme(str, enum.Enum):
    NORMAL = "normal"
    ZEROS = "zeros"
    UNSTRUCTURED = "unstructured"


@dataclass(eq=False)
class LULayer:
    U: UpperTriangular
    L: UnitLowerTriangular
    b: np.ndarray
    act: ActivationKind

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=np.float64)
        if not (self.U.dim == self.L.dim == self.b.shape[0]) or self.b.ndim != 1:
            raise ValueError("U, L and b must share the same dimension")

    @property
    def dim(self) -> int:
        return self.U.dim

    def params(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """The packed parameter arrays ``(u, l, b)``; mutating them updates the layer."""
        return self.U.upper, self.L.strict_lower, self.b

    def copy(self) -> "LULayer":
        return LULayer(
            UpperTriangular(self.dim, self.U.upper.copy()),
            UnitLowerTriangular(self.dim, self.L.strict_lower.copy()),
            self.b.copy(),
            self.act,
        )


@dataclass(eq=False)
class LUNet:
    layers: list[LULayer]

    def __post_init__(self):
        if len(self.layers) < 1:
            raise ValueError("a net needs at least one layer")
        d = self.layers[0].dim
        if any(layer.dim != d for layer in self.layers):
            raise ValueError("all layers must share the same dimension")

    @property
    def dim(self) -> int:
        return self.layers[0].dim

    @property
    def depth(self) -> int:
        return len(self.layers)

    def copy(self) -> "LUNet":
        return LUNet([layer.copy() for layer in self.layers])

    def check_invertible(self, eps: float = DIAG_EPS) -> None:
        for m, layer in enumerate(self.layers):
            layer.U.check_diagonal(eps, layer=m)

    def num_params(self) -> int:
        return sum(sum(p.size for p in layer.params()) for layer in self.layers)


@dataclass
class ForwardTrace:
    inputs: list[np.ndarray] = field(default_factory=list)   # a^(m-1)
    hidden: list[np.ndarray] = field(default_factory=list)   # v^(m) = U a^(m-1)
    preact: list[np.ndarray] = field(default_factory=list)   # s^(m) = L v^(m) + b
    output: np.ndarray | None = None


@dataclass
class LayerGrad:
    du: np.ndarray
    dl: np.ndarray
    db: np.ndarray


GradientSet = list[LayerGrad]


def zeros_like_net(net: LUNet) -> GradientSet:
    return [LayerGrad(*(np.zeros_like(p) for p in layer.params())) for layer in net.layers]


def init_net(
    M: int,
    D: int,
    seed: int = 0,
    scheme: InitScheme | str = InitScheme.NORMAL,
    alpha: float = DEFAULT_ALPHA,
    sigma_init: float = 1.0,
) -> LUNet:
    """Build an M-layer net of width D.

    ``normal``: unit U diagonal, off-diagonal U and strict-lower L entries drawn
    from N(0, sigma_init^2 / D), zero bias. ``zeros``: L = U = I, b = 0.
    ``unstructured``: like ``normal`` but the U diagonal is random as well.
    """
    if M < 1 or D < 1:
        raise ValueError("M and D must be positive")
    scheme = InitScheme(scheme)
    rng = np.random.default_rng(seed)
    scale = sigma_init / np.sqrt(D)
    diag = upper_diag_positions(D)
    layers = []
    for m in range(M):
        kind = Identity() if m == M - 1 else LeakySoftplus(alpha)
        if scheme is InitScheme.ZEROS:
            U = UpperTriangular.identity(D)
            L = UnitLowerTriangular.identity(D)
        else:
            u = rng.normal(0.0, scale, D * (D + 1) // 2)
            if scheme is InitScheme.NORMAL:
                u[diag] = 1.0
            U = UpperTriangular(D, u)
            L = UnitLowerTriangular(D, rng.normal(0.0, scale, D * (D - 1) // 2))
        layers.append(LULayer(U, L, np.zeros(D), kind))
    return LUNet(layers)


def _as_batch(net: LUNet, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.ndim != 2 or x.shape[1] != net.dim:
        raise ValueError(f"expected inputs of dimension {net.dim}, got shape {x.shape}")
    return x, single


def forward(net: LUNet, x) -> tuple[np.ndarray, ForwardTrace]:
    a, single = _as_batch(net, x)
    trace = ForwardTrace()
    for m, layer in enumerate(net.layers):
        with np.errstate(over="ignore", invalid="ignore"):  # reported as NonFinite below
            v = a @ layer.U.to_dense().T
            s = v @ layer.L.to_dense().T + layer.b
        if not np.all(np.isfinite(s)):
            raise NonFinite(m, "pre-activation")
        trace.inputs.append(a)
        trace.hidden.append(v)
        trace.preact.append(s)
        a = layer.act.value(s)
    trace.output = a
    return (a[0] if single else a), trace


def inverse(net: LUNet, z) -> np.ndarray:
    """Generating direction: per layer, act^-1, subtract bias, then two substitution solves."""
    z, single = _as_batch(net, z)
    net.check_invertible()
    x = z
    for m in range(net.depth - 1, -1, -1):
        layer = net.layers[m]
        w = layer.act.inverse(x) - layer.b
        y = solve_unit_lower(layer.L, w)
        x = solve_upper(layer.U, y)
        if not np.all(np.isfinite(x)):
            raise NonFinite(m, "inverse")
    return x[0] if single else x


def _log_abs_diag(net: LUNet) -> float:
    net.check_invertible()
    return float(sum(np.log(np.abs(layer.U.diagonal())).sum() for layer in net.layers))


def log_abs_det_jacobian(net: LUNet, trace: ForwardTrace) -> np.ndarray | float:
    """``sum_m sum_d log phi'(s_d) + log|u_dd|`` per sample of the traced batch."""
    diag = _log_abs_diag(net)
    act_terms = sum(
        np.log(layer.act.prime(s)).sum(axis=1) for layer, s in zip(net.layers, trace.preact)
    )
    out = act_terms + diag
    return float(out[0]) if out.shape[0] == 1 else out


def log_density(net: LUNet, x) -> np.ndarray | float:
    """Log-density under the standard normal pushed back through the net."""
    xb, single = _as_batch(net, x)
    z, trace = forward(net, xb)
    ladj = np.atleast_1d(log_abs_det_jacobian(net, trace))
    out = -0.5 * net.dim * LOG_2PI - 0.5 * np.sum(z * z, axis=1) + ladj
    return float(out[0]) if single else out


def nll_loss(net: LUNet, batch, gamma: float = 1.0) -> float:
    """Summed negative log-likelihood with the diagonal term weighted by gamma."""
    xb, _ = _as_batch(net, batch)
    n, d = xb.shape
    z, trace = forward(net, xb)
    act_terms = sum(
        float(np.log(layer.act.prime(s)).sum()) for layer, s in zip(net.layers, trace.preact)
    )
    return 0.5 * n * d * LOG_2PI + 0.5 * float(np.sum(z * z)) - act_terms - gamma * n * _log_abs_diag(net)


def backward(net: LUNet, batch, gamma: float = 1.0) -> tuple[float, GradientSet]:
    """Loss and its exact gradient w.r.t. every packed parameter entry (summed over the batch)."""
    xb, _ = _as_batch(net, batch)
    n, d = xb.shape
    net.check_invertible()
    z, trace = forward(net, xb)
    diag_pos = upper_diag_positions(d)

    act_terms = 0.0
    grads: GradientSet = [None] * net.depth
    g = z  # d loss / d a^(m)
    for m in range(net.depth - 1, -1, -1):
        layer = net.layers[m]
        s = trace.preact[m]
        p1 = layer.act.prime(s)
        act_terms += float(np.log(p1).sum())
        delta = g * p1 - layer.act.second(s) / p1
        Ld = layer.L.to_dense()
        Ud = layer.U.to_dense()
        db = delta.sum(axis=0)
        dl = pack_lower(delta.T @ trace.hidden[m])
        gv = delta @ Ld
        du = pack_upper(gv.T @ trace.inputs[m])
        du[diag_pos] -= gamma * n / layer.U.diagonal()
        grads[m] = LayerGrad(du, dl, db)
        g = gv @ Ud

    loss = 0.5 * n * d * LOG_2PI + 0.5 * float(np.sum(z * z)) - act_terms - gamma * n * _log_abs_diag(net)
    return loss, grads


def sample(net: LUNet, n: int, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, net.dim))
    if n == 0:
        return z
    return inverse(net, z)


def interpolate(net: LUNet, x_a, x_b, steps: int) -> np.ndarray:
    """Decode ``steps`` evenly spaced points on the latent segment between two inputs."""
    if steps < 2:
        raise ValueError("steps must be at least 2")
    za, _ = forward(net, np.asarray(x_a, dtype=np.float64))
    zb, _ = forward(net, np.asarray(x_b, dtype=np.float64))
    t = np.linspace(0.0, 1.0, steps)[:, None]
    return inverse(net, (1.0 - t) * za + t * zb)
