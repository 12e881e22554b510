"""Central finite-difference verification of the hand-written backward passes.

Relative error of a gradient array is ``|analytic - numeric| / max(|analytic|,
|numeric|)`` measured in the 2-norm over the array, which stays meaningful
for entries that are legitimately close to zero.
"""

from __future__ import annotations

import numpy as np

from .layers import Layer, softmax_cross_entropy
from .network import Network


#: denominator floor; central differences at h=1e-5 carry ~1e-11 round-off
SCALE_FLOOR = 1e-8


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``|a - n| / max(|a|, |n|, SCALE_FLOOR)`` with 2-norms over whole arrays.

    The floor keeps gradients that are exactly zero in theory (a bias
    feeding straight into batch normalization) from comparing round-off
    against round-off.
    """
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), SCALE_FLOOR)
    return float(np.linalg.norm(analytic - numeric) / scale)


def numeric_gradient(f, arr: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. ``arr``, perturbed in place."""
    grad = np.zeros_like(arr)
    flat, gflat = arr.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = f()
        flat[i] = old - h
        down = f()
        flat[i] = old
        gflat[i] = (up - down) / (2 * h)
    return grad


def check_layer(layer: Layer, x: np.ndarray, train: bool = True, seed: int = 0,
                h: float = 1e-5) -> dict[str, float]:
    """Relative errors for the input and every parameter of one layer.

    The scalar objective is ``sum(out * R)`` for a fixed random ``R``; the
    dropout mask is pinned by reseeding before every forward pass.
    """
    x = np.array(x, dtype=np.float64)
    out = layer.forward(x, train=train, rng=np.random.default_rng(seed))
    weights = np.random.default_rng(seed + 1).standard_normal(out.shape)

    def objective():
        return float(np.sum(layer.forward(x, train=train, rng=np.random.default_rng(seed)) * weights))

    objective()
    dx = layer.backward(weights)
    grads = {k: v.copy() for k, v in layer.grads.items()}
    errors = {"input": relative_error(dx, numeric_gradient(objective, x, h))}
    for name, arr in layer.params.items():
        errors[name] = relative_error(grads[name], numeric_gradient(objective, arr, h))
    return errors


def check_network(net: Network, x: np.ndarray, labels, train: bool = True, seed: int = 0,
                  h: float = 1e-5) -> dict[str, float]:
    """Relative errors of every parameter (and the input) under softmax cross-entropy."""
    x = np.array(x, dtype=np.float64)

    def objective():
        logits = net.forward(x, train=train, rng=np.random.default_rng(seed))
        return softmax_cross_entropy(logits, labels)[0]

    logits = net.forward(x, train=train, rng=np.random.default_rng(seed))
    _, dlogits = softmax_cross_entropy(logits, labels)
    dx = net.backward(dlogits)
    analytic = {f"{i}.{name}": g.copy() for i, name, g in net.gradients()}
    errors = {"input": relative_error(dx, numeric_gradient(objective, x, h))}
    for i, name, arr in net.parameters():
        errors[f"{i}.{name}"] = relative_error(analytic[f"{i}.{name}"], numeric_gradient(objective, arr, h))
    return errors
