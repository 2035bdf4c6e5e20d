"""Finite-difference verification of backpropagation."""

from __future__ import annotations

import numpy as np

from affectanim.nn.network import Network


def numerical_gradient(f, array: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f()`` with respect to every entry of ``array`` (perturbed in place)."""
    grad = np.zeros(array.shape, dtype=np.float64)
    flat = array.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        up = f()
        flat[i] = keep - h
        down = f()
        flat[i] = keep
        out[i] = (up - down) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-10) -> np.ndarray:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    return np.abs(analytic - numeric) / np.maximum(np.abs(analytic) + np.abs(numeric), floor)


def check_network(net: Network, x: np.ndarray, loss_fn, target: np.ndarray, h: float = 1e-5) -> dict:
    """Compare backprop gradients with central differences for every parameter and the input.

    The network runs in training mode with dropout masks frozen after the
    first pass. Returns the maximum relative error per parameter name plus
    ``"input"``.
    """
    net.freeze_dropout(True)
    try:
        out = net.forward(x, train=True)
        _, dout = loss_fn(out, target)
        dx = net.backward(dout)
        analytic = {name: g.copy() for (name, _), g in zip(net.named_parameters(), net.gradients())}

        def loss():
            return loss_fn(net.forward(x, train=True), target)[0]

        report = {}
        for name, p in net.named_parameters():
            report[name] = float(relative_error(analytic[name], numerical_gradient(loss, p, h)).max())
        xin = np.array(x, dtype=net.dtype)

        def loss_x():
            return loss_fn(net.forward(xin, train=True), target)[0]

        report["input"] = float(relative_error(dx, numerical_gradient(loss_x, xin, h)).max())
        return report
    finally:
        net.freeze_dropout(False)
