"""Shared test helpers: independent finite-difference gradient oracle."""

import numpy as np

from kernelvi.autodiff import Tensor, backward


def finite_difference(f, params, h=1e-5):
    """Central-difference gradients of a scalar function of parameter tensors.

    ``f()`` must rebuild its computation from the current ``param.data``
    each call; returns one gradient array per parameter.
    """
    grads = []
    for p in params:
        g = np.zeros(p.data.shape)
        flat = p.data.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(f())
            flat[i] = orig - h
            f_minus = float(f())
            flat[i] = orig
            gflat[i] = (f_plus - f_minus) / (2 * h)
        grads.append(g)
    return grads


def check_gradients(build_loss, params, h=1e-5, rtol=1e-5):
    """Compare reverse-mode gradients against central differences.

    ``build_loss()`` constructs the scalar loss tensor from the current
    parameter values. Returns the worst relative error.
    """
    loss = build_loss()
    grads = backward(loss, params=params)
    fd = finite_difference(lambda: build_loss().data, params, h=h)
    worst = 0.0
    for p, fd_g in zip(params, fd):
        an_g = grads[p]
        denom = np.maximum(np.abs(fd_g), 1e-6)
        worst = max(worst, float(np.max(np.abs(an_g - fd_g) / denom)))
    assert worst <= rtol, f"gradient mismatch: max rel err {worst:.3e} > {rtol}"
    return worst


def make_param(rng, shape, scale=1.0):
    return Tensor(scale * rng.standard_normal(shape), requires_grad=True)
