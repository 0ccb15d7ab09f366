"""Generator and discriminator construction from a compact layer notation.

Tokens: "c7s1-K" is a 7x7 stride-1 conv with K filters (reflect padded),
"dK" a 3x3 stride-2 downsampling conv, "RK" a residual block of two 3x3
convs, "uK" a 3x3 stride-2 transposed conv, "CK" a 4x4 discriminator conv
with leaky relu. Generators normalize with instance norm everywhere except
the output layer (tanh, straight to image range); discriminators skip the
norm on their first layer and emit a raw 1-channel patch map.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

import numpy as np

from .tensor import (
    Tensor,
    ShapeError,
    activation as apply_activation,
    conv2d,
    instance_norm,
    reflection_pad,
    transposed_conv2d,
)


class LayerParseError(ValueError):
    """A layer token does not match the notation grammar."""


WEIGHT_STD = 0.02

_KERNEL_BY_KIND = {
    "conv7s1": 7,
    "down-conv": 3,
    "residual-block": 3,
    "up-conv": 3,
    "disc-conv": 4,
    "final-conv": 4,
}


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # conv7s1 | down-conv | residual-block | up-conv | disc-conv | final-conv
    filters: int
    stride: int
    norm: str  # instance | none
    activation: str  # relu | leaky_relu | tanh | none
    padding: str  # reflect | zero
    kernel: int


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple[LayerSpec, ...]
    input_channels: int
    role: str  # generator | discriminator

    def tokens(self) -> list[str]:
        out = []
        for l in self.layers:
            if l.kind == "conv7s1":
                out.append(f"c7s1-{l.filters}")
            elif l.kind == "down-conv":
                out.append(f"d{l.filters}")
            elif l.kind == "residual-block":
                out.append(f"R{l.filters}")
            elif l.kind == "up-conv":
                out.append(f"u{l.filters}")
            else:
                out.append(f"C{l.filters}")
        return out


_TOKEN_RE = re.compile(r"^(c7s1-|d|R|u|C)(\d+)$")


def parse_layer_spec(token: str) -> LayerSpec:
    """Turn one notation token into a fully populated LayerSpec."""
    m = _TOKEN_RE.match(token.strip())
    if not m:
        raise LayerParseError(f"unrecognized layer token {token!r}")
    prefix, filters = m.group(1), int(m.group(2))
    if filters < 1:
        raise LayerParseError(f"layer token {token!r} has non-positive filter count")
    if prefix == "c7s1-":
        return LayerSpec("conv7s1", filters, 1, "instance", "relu", "reflect", 7)
    if prefix == "d":
        return LayerSpec("down-conv", filters, 2, "instance", "relu", "zero", 3)
    if prefix == "R":
        return LayerSpec("residual-block", filters, 1, "instance", "relu", "reflect", 3)
    if prefix == "u":
        return LayerSpec("up-conv", filters, 2, "instance", "relu", "zero", 3)
    return LayerSpec("disc-conv", filters, 2, "instance", "leaky_relu", "zero", 4)


def build_generator(
    resolution: int,
    residual_blocks: int | None = None,
    base_filters: int = 64,
    input_channels: int = 3,
) -> NetworkSpec:
    """Encoder, a stack of residual blocks, decoder, tanh output.

    Residual-block count follows resolution (6 below 256, 9 at or above)
    unless overridden; base_filters scales every width for small runs.
    """
    if resolution % 4 != 0 or resolution < 4:
        raise ValueError(f"resolution must be a positive multiple of 4, got {resolution}")
    if residual_blocks is None:
        residual_blocks = 9 if resolution >= 256 else 6
    if residual_blocks < 0:
        raise ValueError(f"residual_blocks must be >= 0, got {residual_blocks}")
    f = base_filters
    tokens = [f"c7s1-{f}", f"d{2 * f}", f"d{4 * f}"]
    tokens += [f"R{4 * f}"] * residual_blocks
    tokens += [f"u{2 * f}", f"u{f}", f"c7s1-{input_channels}"]
    layers = [parse_layer_spec(t) for t in tokens]
    layers[-1] = replace(layers[-1], norm="none", activation="tanh")
    return NetworkSpec(tuple(layers), input_channels, "generator")


def build_discriminator(base_filters: int = 64, input_channels: int = 3, tokens=None) -> NetworkSpec:
    """Patch classifier: stride-2 4x4 convs, the last width and the final
    1-channel map at stride 1, no norm on the first layer, raw outputs."""
    if tokens is None:
        f = base_filters
        tokens = [f"C{f}", f"C{2 * f}", f"C{4 * f}", f"C{8 * f}"]
    layers = [parse_layer_spec(t) for t in tokens]
    for l in layers:
        if l.kind != "disc-conv":
            raise LayerParseError(f"discriminator accepts only Ck tokens, got kind {l.kind!r}")
    layers[0] = replace(layers[0], norm="none")
    layers[-1] = replace(layers[-1], stride=1)
    layers.append(LayerSpec("final-conv", 1, 1, "none", "none", "zero", 4))
    return NetworkSpec(tuple(layers), input_channels, "discriminator")


def receptive_field(spec: NetworkSpec) -> int:
    """Input-pixel extent seen by one output element of a pure conv chain."""
    for l in spec.layers:
        if l.kind == "residual-block":
            raise ValueError("receptive_field requires a pure chain of convolutions")
    r = 1
    for l in reversed(spec.layers):
        r = (r - 1) * l.stride + l.kernel
    return r


def param_shapes(spec: NetworkSpec) -> list[tuple[str, tuple[int, ...]]]:
    """Ordered (name, shape) pairs of every parameter the spec needs."""
    shapes: list[tuple[str, tuple[int, ...]]] = []
    c = spec.input_channels

    def conv_entry(prefix: str, c_in: int, l: LayerSpec, transposed: bool = False):
        if transposed:
            shapes.append((f"{prefix}.w", (c_in, l.filters, l.kernel, l.kernel)))
        else:
            shapes.append((f"{prefix}.w", (l.filters, c_in, l.kernel, l.kernel)))
        shapes.append((f"{prefix}.b", (l.filters,)))
        if l.norm == "instance":
            shapes.append((f"{prefix}.gamma", (l.filters,)))
            shapes.append((f"{prefix}.beta", (l.filters,)))

    for i, l in enumerate(spec.layers):
        name = f"l{i:02d}"
        if l.kind == "residual-block":
            if l.filters != c:
                raise ShapeError(f"residual block at layer {i} needs {c} filters to match its input, got {l.filters}")
            conv_entry(f"{name}.c1", c, l)
            conv_entry(f"{name}.c2", l.filters, l)
        elif l.kind == "up-conv":
            conv_entry(name, c, l, transposed=True)
        else:
            conv_entry(name, c, l)
        c = l.filters
    return shapes


def init_network_params(spec: NetworkSpec, rng: np.random.Generator) -> dict[str, Tensor]:
    """Kernels from N(0, WEIGHT_STD^2), biases 0, norm scale 1 / shift 0."""
    params: dict[str, Tensor] = {}
    for name, shape in param_shapes(spec):
        leaf = name.rsplit(".", 1)[1]
        if leaf == "w":
            data = rng.normal(0.0, WEIGHT_STD, size=shape).astype(np.float32)
        elif leaf == "gamma":
            data = np.ones(shape, dtype=np.float32)
        else:  # b, beta
            data = np.zeros(shape, dtype=np.float32)
        params[name] = Tensor(data, requires_grad=True)
    return params


@dataclass
class ModelState:
    """The two generators and two discriminators with their parameters."""

    g_spec: NetworkSpec  # X -> Y
    f_spec: NetworkSpec  # Y -> X
    dx_spec: NetworkSpec  # judges domain X
    dy_spec: NetworkSpec  # judges domain Y
    g_params: dict = field(default_factory=dict)
    f_params: dict = field(default_factory=dict)
    dx_params: dict = field(default_factory=dict)
    dy_params: dict = field(default_factory=dict)
    seed: int = 0

    def generator_parameters(self) -> list[Tensor]:
        return list(self.g_params.values()) + list(self.f_params.values())

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for prefix, params in (("g", self.g_params), ("f", self.f_params),
                               ("dx", self.dx_params), ("dy", self.dy_params)):
            out += [(f"{prefix}.{k}", v) for k, v in params.items()]
        return out


def init_weights(model: ModelState, seed: int) -> ModelState:
    """Fresh deterministic parameters for all four networks.

    One generator stream seeded by `seed`, consumed in g, f, dx, dy order,
    so the result is a pure function of (specs, seed).
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    return ModelState(
        g_spec=model.g_spec,
        f_spec=model.f_spec,
        dx_spec=model.dx_spec,
        dy_spec=model.dy_spec,
        g_params=init_network_params(model.g_spec, rng),
        f_params=init_network_params(model.f_spec, rng),
        dx_params=init_network_params(model.dx_spec, rng),
        dy_params=init_network_params(model.dy_spec, rng),
        seed=seed,
    )


def new_model(
    resolution: int,
    residual_blocks: int | None = None,
    gen_filters: int = 64,
    disc_filters: int = 64,
    input_channels: int = 3,
    seed: int = 0,
) -> ModelState:
    gen = build_generator(resolution, residual_blocks, gen_filters, input_channels)
    disc = build_discriminator(disc_filters, input_channels)
    empty = ModelState(g_spec=gen, f_spec=gen, dx_spec=disc, dy_spec=disc)
    return init_weights(empty, seed)


def _conv_block(x: Tensor, l: LayerSpec, params: dict, prefix: str) -> Tensor:
    pad = (l.kernel - 1) // 2
    if l.kind == "up-conv":
        h = transposed_conv2d(x, params[f"{prefix}.w"], params[f"{prefix}.b"],
                              stride=l.stride, padding=pad, output_padding=l.stride - 1)
    elif l.padding == "reflect":
        h = reflection_pad(x, pad)
        h = conv2d(h, params[f"{prefix}.w"], params[f"{prefix}.b"], stride=l.stride, padding=0)
    else:
        h = conv2d(x, params[f"{prefix}.w"], params[f"{prefix}.b"], stride=l.stride, padding=pad)
    if l.norm == "instance":
        h = instance_norm(h, params[f"{prefix}.gamma"], params[f"{prefix}.beta"])
    return h


def forward(spec: NetworkSpec, params: dict, x: Tensor) -> Tensor:
    """Apply the spec's layers in order; residual blocks add their input."""
    if x.data.ndim != 4 or x.shape[1] != spec.input_channels:
        raise ShapeError(f"expected NCHW input with {spec.input_channels} channels, got shape {x.shape}")
    h = x
    for i, l in enumerate(spec.layers):
        name = f"l{i:02d}"
        if l.kind == "residual-block":
            r = _conv_block(h, l, params, f"{name}.c1")
            r = apply_activation(r, l.activation)
            r = _conv_block(r, l, params, f"{name}.c2")
            h = h + r
        else:
            h = _conv_block(h, l, params, name)
            h = apply_activation(h, l.activation)
    return h
