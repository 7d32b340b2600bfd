"""Network description: linear / activation / conv layers and their algebra.

A loaded model is compiled to an alternating chain of Linear and Activation
layers: convolutions are lowered to their explicit linear maps, and runs of
adjacent linear layers are fused into one, so the interactive protocol sees
exactly one round per activation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ModelError

ACTIVATION_KINDS = ("relu", "sigmoid", "tanh", "square")


def apply_activation(kind: str, x: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "sigmoid":
        return 1.0 / (1.0 + np.exp(-x))
    if kind == "tanh":
        return np.tanh(x)
    if kind == "square":
        return x * x
    raise ModelError(f"unknown activation kind {kind!r}")


@dataclass
class LinearLayer:
    weights: np.ndarray  # (rows, cols)
    bias: np.ndarray  # (rows,)

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ModelError(f"weights must be 2-D, got shape {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise ModelError(
                f"bias shape {self.bias.shape} does not match {self.weights.shape[0]} rows"
            )
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise ModelError("non-finite layer parameters")

    @property
    def rows(self) -> int:
        return self.weights.shape[0]

    @property
    def cols(self) -> int:
        return self.weights.shape[1]


@dataclass
class ActivationLayer:
    kind: str

    def __post_init__(self):
        if self.kind not in ACTIVATION_KINDS:
            raise ModelError(f"unknown activation kind {self.kind!r}")


@dataclass
class ConvLayer:
    """2-D convolution; exists only pre-compile, lowered to LinearLayer."""

    kernels: np.ndarray  # (out_channels, in_channels, kh, kw)
    bias: np.ndarray  # (out_channels,)
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        self.kernels = np.ascontiguousarray(self.kernels, dtype=np.float64)
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float64)
        if self.kernels.ndim != 4:
            raise ModelError(f"kernels must be 4-D, got shape {self.kernels.shape}")
        if self.bias.shape != (self.kernels.shape[0],):
            raise ModelError("conv bias shape does not match output channels")
        if self.stride < 1 or self.padding < 0:
            raise ModelError("bad conv stride/padding")


def lower_conv(conv: ConvLayer, input_shape: tuple[int, int, int]):
    """Explicit linear map of a conv over (channels, height, width) input.

    Returns the LinearLayer plus the (out_channels, oh, ow) output shape.
    """
    c, h, w = input_shape
    oc, ic, kh, kw = conv.kernels.shape
    if ic != c:
        raise ModelError(f"conv expects {ic} input channels, input has {c}")
    s, p = conv.stride, conv.padding
    oh = (h + 2 * p - kh) // s + 1
    ow = (w + 2 * p - kw) // s + 1
    if oh < 1 or ow < 1:
        raise ModelError("conv output has non-positive spatial size")
    mat = np.zeros((oc * oh * ow, c * h * w))
    for o in range(oc):
        for y in range(oh):
            for x in range(ow):
                out_idx = (o * oh + y) * ow + x
                for cc in range(c):
                    for ky in range(kh):
                        iy = y * s + ky - p
                        if not 0 <= iy < h:
                            continue
                        for kx in range(kw):
                            ix = x * s + kx - p
                            if not 0 <= ix < w:
                                continue
                            mat[out_idx, (cc * h + iy) * w + ix] = conv.kernels[o, cc, ky, kx]
    bias = np.repeat(conv.bias, oh * ow)
    return LinearLayer(mat, bias), (oc, oh, ow)


def fuse_linear(first: LinearLayer, second: LinearLayer) -> LinearLayer:
    """Collapse second(first(x)) into a single linear layer."""
    if second.cols != first.rows:
        raise ModelError(f"cannot fuse {first.rows}-out into {second.cols}-in linear")
    return LinearLayer(second.weights @ first.weights, second.weights @ first.bias + second.bias)


@dataclass
class ModelSpec:
    """Compiled model: only Linear and Activation layers, dimensions chained."""

    layers: list = field(default_factory=list)
    input_dim: int = 0

    def __post_init__(self):
        if self.input_dim < 1:
            raise ModelError("input_dim must be positive")
        if not self.layers:
            raise ModelError("model has no layers")
        dim = self.input_dim
        prev_linear = False
        for i, layer in enumerate(self.layers):
            if isinstance(layer, LinearLayer):
                if prev_linear:
                    raise ModelError(f"unfused adjacent linear layers at index {i}")
                if layer.cols != dim:
                    raise ModelError(
                        f"layer {i} expects {layer.cols} inputs, chain provides {dim}"
                    )
                dim = layer.rows
                prev_linear = True
            elif isinstance(layer, ActivationLayer):
                prev_linear = False
            else:
                raise ModelError(f"unsupported layer type {type(layer).__name__} after compile")

    @property
    def output_dim(self) -> int:
        for layer in reversed(self.layers):
            if isinstance(layer, LinearLayer):
                return layer.rows
        return self.input_dim

    @property
    def activation_count(self) -> int:
        return sum(1 for l in self.layers if isinstance(l, ActivationLayer))

    def describe(self) -> list[tuple]:
        """Wire-friendly layer summary: shapes for linear, kind for activation."""
        out = []
        for layer in self.layers:
            if isinstance(layer, LinearLayer):
                out.append(("linear", layer.rows, layer.cols))
            else:
                out.append(("activation", layer.kind))
        return out


def compile_layers(raw_layers: list, input_dim: int, input_shape=None) -> ModelSpec:
    """Lower convs, fuse adjacent linears, and validate the chain."""
    shape = tuple(input_shape) if input_shape else None
    compiled: list = []
    for layer in raw_layers:
        if isinstance(layer, ConvLayer):
            if shape is None:
                raise ModelError("conv layer requires an input_shape")
            layer, shape = lower_conv(layer, shape)
        elif isinstance(layer, LinearLayer):
            shape = None  # spatial structure is gone after an explicit linear
        if isinstance(layer, LinearLayer) and compiled and isinstance(compiled[-1], LinearLayer):
            compiled[-1] = fuse_linear(compiled[-1], layer)
        else:
            compiled.append(layer)
    return ModelSpec(compiled, input_dim)


def reference_infer(model: ModelSpec, x: np.ndarray) -> np.ndarray:
    """Plain numpy forward pass; the numeric oracle for protocol runs."""
    v = np.asarray(x, dtype=np.float64).ravel()
    if v.shape[0] != model.input_dim:
        raise ModelError(f"input has {v.shape[0]} values, model expects {model.input_dim}")
    for layer in model.layers:
        if isinstance(layer, LinearLayer):
            v = layer.weights @ v + layer.bias
        else:
            v = apply_activation(layer.kind, v)
    return v
