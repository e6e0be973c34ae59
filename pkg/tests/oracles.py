"""Independent reference computations shared by the unit and acceptance tests."""
import numpy as np

from lunet.model import backward, forward, nll_loss


def fd_gradient(f, params: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. each entry of ``params`` (perturbed in place)."""
    out = np.empty_like(params)
    for i in range(params.size):
        old = params[i]
        params[i] = old + h
        fp = f()
        params[i] = old - h
        fm = f()
        params[i] = old
        out[i] = (fp - fm) / (2 * h)
    return out


def fd_jacobian(func, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    d = x.size
    jac = np.empty((d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        jac[:, j] = (func(x + e) - func(x - e)) / (2 * h)
    return jac


def relative_error(analytic, numeric, floor: float = 1e-3) -> np.ndarray:
    """``|a - n| / max(|a|, |n|, floor)``; the floor keeps near-zero entries from
    measuring only finite-difference round-off."""
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def gradient_check(net, batch, gamma: float = 1.0, h: float = 1e-6) -> float:
    """Worst relative error between ``backward`` and central differences of ``nll_loss``."""
    _, grads = backward(net, batch, gamma)
    worst = 0.0
    for layer, grad in zip(net.layers, grads):
        for param, analytic in zip(layer.params(), (grad.du, grad.dl, grad.db)):
            if param.size == 0:
                continue
            numeric = fd_gradient(lambda: nll_loss(net, batch, gamma), param, h)
            worst = max(worst, float(relative_error(analytic, numeric).max()))
    return worst


def fd_log_abs_det(net, x: np.ndarray, h: float = 1e-6) -> float:
    jac = fd_jacobian(lambda v: forward(net, v)[0], x, h)
    return float(np.linalg.slogdet(jac)[1])
