"""Shared fixtures: a 1-parameter-per-network toy model (1x1 convs on 1x1
single-channel images) that makes every training-loop property cheap to check."""

import numpy as np
import pytest

from cyclegan.networks import LayerSpec, ModelState, NetworkSpec, init_weights


def linear_spec(role: str) -> NetworkSpec:
    # a single 1x1 conv is just out = w*x + b: the smallest usable network
    layer = LayerSpec("final-conv", 1, 1, "none", "none", "zero", 1)
    return NetworkSpec((layer,), 1, role)


def toy_model(seed: int = 0) -> ModelState:
    empty = ModelState(
        g_spec=linear_spec("generator"),
        f_spec=linear_spec("generator"),
        dx_spec=linear_spec("discriminator"),
        dy_spec=linear_spec("discriminator"),
    )
    return init_weights(empty, seed)


def toy_domains(n: int = 10, seed: int = 0):
    rng = np.random.default_rng(seed)
    xs = rng.uniform(0.2, 0.9, size=(n, 1, 1, 1)).astype(np.float32)
    ys = (-rng.uniform(0.2, 0.9, size=(n, 1, 1, 1))).astype(np.float32)
    return xs, ys


@pytest.fixture
def toy():
    return toy_model(0)
