"""Finite-difference verification of every differentiable op.

Each registry entry builds a scalar-valued function and its inputs for
tensor.gradient_check; non-scalar ops are reduced through a fixed random
projection so every output element influences the result. One entry
composes a full small generator with a discriminator to exercise the
whole graph machinery end to end. Inputs near activation kinks are
nudged away so central differences stay valid.
"""

from __future__ import annotations

import numpy as np

from .networks import forward, new_model
from .tensor import (
    Tensor,
    add,
    conv2d,
    gradient_check,
    instance_norm,
    l1_mean,
    leaky_relu,
    mul,
    reflection_pad,
    relu,
    sub,
    tanh,
    tmean,
    transposed_conv2d,
    tsum,
)


def _away_from_zero(rng, shape, margin: float = 0.05) -> np.ndarray:
    """Uniform values with |v| >= margin, safe for kinked activations."""
    sign = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    return sign * rng.uniform(margin, 1.0, size=shape)


def _projected(out: Tensor, proj: np.ndarray) -> Tensor:
    return tsum(mul(out, Tensor(proj)))


def _chk_add(rng):
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(1, 4))
    p = rng.normal(size=(3, 4))
    return (lambda ta, tb: _projected(add(ta, tb), p)), [a, b]


def _chk_sub(rng):
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(3, 1))
    p = rng.normal(size=(3, 4))
    return (lambda ta, tb: _projected(sub(ta, tb), p)), [a, b]


def _chk_mul(rng):
    a, b = rng.normal(size=(2, 3, 4)), rng.normal(size=(3, 4))
    p = rng.normal(size=(2, 3, 4))
    return (lambda ta, tb: _projected(mul(ta, tb), p)), [a, b]


def _chk_tsum(rng):
    return tsum, [rng.normal(size=(4, 5))]


def _chk_tmean(rng):
    return tmean, [rng.normal(size=(2, 3, 3))]


def _chk_l1_mean(rng):
    a = rng.normal(size=(3, 4))
    b = a + _away_from_zero(rng, (3, 4), margin=0.2)
    return l1_mean, [a, b]


def _chk_relu(rng):
    x = _away_from_zero(rng, (3, 5))
    p = rng.normal(size=(3, 5))
    return (lambda t: _projected(relu(t), p)), [x]


def _chk_leaky_relu(rng):
    x = _away_from_zero(rng, (3, 5))
    p = rng.normal(size=(3, 5))
    return (lambda t: _projected(leaky_relu(t, 0.2), p)), [x]


def _chk_tanh(rng):
    x = rng.normal(size=(3, 5))
    p = rng.normal(size=(3, 5))
    return (lambda t: _projected(tanh(t), p)), [x]


def _chk_reflection_pad(rng):
    x = rng.normal(size=(1, 2, 4, 4))
    p = rng.normal(size=(1, 2, 10, 10))
    return (lambda t: _projected(reflection_pad(t, 3), p)), [x]


def _chk_conv2d(rng):
    x = rng.normal(size=(2, 2, 5, 5))
    w = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=(3,))
    p = rng.normal(size=(2, 3, 3, 3))
    return (lambda tx, tw, tb: _projected(conv2d(tx, tw, tb, stride=2, padding=1), p)), [x, w, b]


def _chk_transposed_conv2d(rng):
    x = rng.normal(size=(2, 2, 3, 3))
    w = rng.normal(size=(2, 3, 3, 3))
    b = rng.normal(size=(3,))
    p = rng.normal(size=(2, 3, 6, 6))
    return (lambda tx, tw, tb: _projected(
        transposed_conv2d(tx, tw, tb, stride=2, padding=1, output_padding=1), p)), [x, w, b]


def _chk_instance_norm(rng):
    x = rng.normal(size=(2, 3, 4, 4))
    gamma = rng.uniform(0.5, 1.5, size=(3,))
    beta = rng.normal(size=(3,))
    p = rng.normal(size=(2, 3, 4, 4))
    return (lambda tx, tg, tb: _projected(instance_norm(tx, tg, tb), p)), [x, gamma, beta]


def _chk_composition(rng):
    """Small full translator judged by a full patch discriminator.

    Checks the gradient of mean(D(G(x))^2) with respect to parameters
    spanning the whole graph: an early norm scale, a residual-block norm
    scale, the output conv bias, and the first discriminator bias. Conv
    biases that feed a norm layer are excluded on purpose: the norm
    subtracts the per-channel mean, so their true gradient is zero and
    the check direction would measure only float noise.
    """
    model = new_model(32, residual_blocks=1, gen_filters=2, disc_filters=2,
                      seed=int(rng.integers(1 << 31)))
    x = rng.uniform(-1.0, 1.0, size=(1, 3, 32, 32))
    checked = [("g", "l00.gamma"), ("g", "l03.c1.gamma"), ("g", "l06.b"), ("dy", "l00.b")]

    def fn(*tensors):
        g_params = dict(model.g_params)
        dy_params = dict(model.dy_params)
        for (net, name), t in zip(checked, tensors):
            (g_params if net == "g" else dy_params)[name] = t
        fake = forward(model.g_spec, g_params, Tensor(x))
        judged = forward(model.dy_spec, dy_params, fake)
        return tmean(mul(judged, judged))

    inputs = [(model.g_params if net == "g" else model.dy_params)[name].data
              for net, name in checked]
    return fn, inputs


REGISTRY = (
    ("add", _chk_add),
    ("sub", _chk_sub),
    ("mul", _chk_mul),
    ("tsum", _chk_tsum),
    ("tmean", _chk_tmean),
    ("l1_mean", _chk_l1_mean),
    ("relu", _chk_relu),
    ("leaky_relu", _chk_leaky_relu),
    ("tanh", _chk_tanh),
    ("reflection_pad", _chk_reflection_pad),
    ("conv2d", _chk_conv2d),
    ("transposed_conv2d", _chk_transposed_conv2d),
    ("instance_norm", _chk_instance_norm),
    ("composition", _chk_composition),
)


def _scaled_backward(fn):
    """Sabotage fn's output node: its backward feeds a 1% too-large
    gradient. A working checker must flag the mismatch."""

    def wrapped(*tensors):
        out = fn(*tensors)
        inner = out._backward_fn
        if inner is not None:
            out._backward_fn = lambda g: inner(g * 1.01)
        return out

    return wrapped


def run_suite(seeds: int = 10, corrupt: str | None = None) -> list[tuple[str, float]]:
    """Max relative error per registered op over the given number of
    seeded draws. `corrupt` names an op whose backward is deliberately
    broken, as a negative control for the harness itself.

    The probe step is 1e-6: small enough that a network activation
    sitting near a relu kink is rarely straddled, while float64 keeps
    central differences accurate to ~1e-10 relative at this scale.
    """
    results = []
    for name, build in REGISTRY:
        worst = 0.0
        for s in range(seeds):
            rng = np.random.default_rng(1000 + s)
            fn, inputs = build(rng)
            if corrupt == name:
                fn = _scaled_backward(fn)
            worst = max(worst, gradient_check(fn, inputs, eps=1e-6))
        results.append((name, worst))
    return results
