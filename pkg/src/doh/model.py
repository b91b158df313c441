"""Sinusoidal target network: forward pass, analytic gradients, init.

Layers l < L-1 compute sin(omega * (W_l x + h_l)); the output layer is
linear so that a 0.5 output bias sits in the middle of the signal range.
All math is float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import RngStream, stream_u64, stream_uniform_array
from .signals import ImageSignal, OccupancySignal, PositionalEncodingSpec, encode, grid_coords


@dataclass(frozen=True)
class ModelConfig:
    in_dim: int
    out_dim: int
    width: int
    hidden: int
    omega: float = 30.0
    encoding: PositionalEncodingSpec | None = None

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError("in_dim and out_dim must be >= 1")
        if self.width < 1:
            raise ValueError("width must be >= 1")
        if self.hidden < 0:
            raise ValueError("hidden must be >= 0")
        if self.omega <= 0:
            raise ValueError("omega must be positive")

    @property
    def encoded_dim(self) -> int:
        if self.encoding is None:
            return self.in_dim
        return self.encoding.encoded_dim(self.in_dim)

    def layer_shapes(self) -> list[tuple[int, int]]:
        """(fan_out, fan_in) per weight matrix; hidden=k means k width->width layers."""
        shapes = [(self.width, self.encoded_dim)]
        shapes += [(self.width, self.width)] * self.hidden
        shapes.append((self.out_dim, self.width))
        return shapes

    @property
    def n_layers(self) -> int:
        return self.hidden + 2

    @property
    def total_weights(self) -> int:
        return sum(fo * fi for fo, fi in self.layer_shapes())

    @property
    def total_biases(self) -> int:
        return sum(fo for fo, _ in self.layer_shapes())


@dataclass
class TargetWeights:
    weights: list[np.ndarray] = field(default_factory=list)
    biases: list[np.ndarray] = field(default_factory=list)

    def copy(self) -> "TargetWeights":
        return TargetWeights(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


@dataclass
class GradientSet:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


def param_count(config: ModelConfig) -> int:
    """Weights plus biases of the plain MLP (encoded input included)."""
    return sum(fo * fi + fo for fo, fi in config.layer_shapes())


def init_mlp(config: ModelConfig, stream: RngStream) -> TargetWeights:
    """SIREN init: input layer U(+-1/fan_in), others U(+-1/(omega*sqrt(width))).

    Hidden biases start at zero; the output bias starts at 0.5. Layer l draws
    from a child stream seeded by output l of `stream`, entries row-major.
    """
    weights, biases = [], []
    shapes = config.layer_shapes()
    for l, (fo, fi) in enumerate(shapes):
        if l == 0:
            bound = 1.0 / fi
        else:
            bound = 1.0 / (config.omega * math.sqrt(fi))
        layer_stream = RngStream(stream_u64(stream, l))
        w = stream_uniform_array(layer_stream, 0, fo * fi, bound).reshape(fo, fi)
        b = np.zeros(fo)
        if l == len(shapes) - 1:
            b[:] = 0.5
        weights.append(w)
        biases.append(b)
    return TargetWeights(weights=weights, biases=biases)


def _check_shapes(weights: TargetWeights, config: ModelConfig) -> None:
    shapes = config.layer_shapes()
    if len(weights.weights) != len(shapes) or len(weights.biases) != len(shapes):
        raise ValueError("weight/bias layer count does not match config")
    for l, (fo, fi) in enumerate(shapes):
        if weights.weights[l].shape != (fo, fi):
            raise ValueError(f"layer {l}: expected weight shape {(fo, fi)}")
        if weights.biases[l].shape != (fo,):
            raise ValueError(f"layer {l}: expected bias shape {(fo,)}")


def _forward_trace(weights: TargetWeights, config: ModelConfig, coords: np.ndarray):
    """Returns (layer inputs x_l, pre-activations, output)."""
    x = encode(coords, config.encoding)
    inputs = [x]
    pres = []
    last = config.n_layers - 1
    for l in range(config.n_layers):
        pre = x @ weights.weights[l].T + weights.biases[l]
        pres.append(pre)
        if l < last:
            x = np.sin(config.omega * pre)
            inputs.append(x)
    return inputs, pres, pres[-1]


def forward(weights: TargetWeights, config: ModelConfig, coords) -> np.ndarray:
    """Evaluate the network on raw coordinates, (d,) or (N, d)."""
    coords = np.asarray(coords, dtype=np.float64)
    single = coords.ndim == 1
    c = coords[None, :] if single else coords
    if c.shape[1] != config.in_dim:
        raise ValueError(f"coords must have {config.in_dim} components")
    _check_shapes(weights, config)
    _, _, out = _forward_trace(weights, config, c)
    return out[0] if single else out


def backward(weights: TargetWeights, config: ModelConfig, coords, targets) -> tuple[float, GradientSet]:
    """Mean squared error over batch and channels, with exact reverse-mode grads."""
    coords = np.asarray(coords, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[0] == 0:
        raise ValueError("backward requires a nonempty (N, d) batch")
    if targets.shape != (coords.shape[0], config.out_dim):
        raise ValueError("targets must have shape (N, out_dim)")
    _check_shapes(weights, config)

    inputs, pres, out = _forward_trace(weights, config, coords)
    diff = out - targets
    denom = diff.size
    loss = float(np.mean(diff * diff))

    g_w: list[np.ndarray | None] = [None] * config.n_layers
    g_b: list[np.ndarray | None] = [None] * config.n_layers
    d_pre = (2.0 / denom) * diff  # output layer is linear
    for l in range(config.n_layers - 1, -1, -1):
        g_w[l] = d_pre.T @ inputs[l]
        g_b[l] = d_pre.sum(axis=0)
        if l > 0:
            d_x = d_pre @ weights.weights[l]
            d_pre = d_x * (config.omega * np.cos(config.omega * pres[l - 1]))
    return loss, GradientSet(weights=g_w, biases=g_b)  # type: ignore[arg-type]


def render_image(weights: TargetWeights, config: ModelConfig, height: int, width: int,
                 batch: int = 16384) -> ImageSignal:
    """Evaluate the full pixel grid; output clamped to [0,1] only here."""
    coords = grid_coords((height, width))
    out = np.empty((coords.shape[0], config.out_dim))
    for i in range(0, coords.shape[0], batch):
        out[i:i + batch] = forward(weights, config, coords[i:i + batch])
    return ImageSignal(np.clip(out, 0.0, 1.0).reshape(height, width, 3))


def render_field(weights: TargetWeights, config: ModelConfig, dims: tuple[int, int, int],
                 batch: int = 16384) -> OccupancySignal:
    """Evaluate the voxel lattice; values stay real (threshold downstream)."""
    coords = grid_coords(dims)
    out = np.empty((coords.shape[0], config.out_dim))
    for i in range(0, coords.shape[0], batch):
        out[i:i + batch] = forward(weights, config, coords[i:i + batch])
    return OccupancySignal(out.reshape(dims))


def render_raw(weights: TargetWeights, config: ModelConfig, shape: tuple[int, ...],
               batch: int = 16384) -> np.ndarray:
    """Unclamped grid evaluation, shape (*shape, out_dim)."""
    coords = grid_coords(shape)
    out = np.empty((coords.shape[0], config.out_dim))
    for i in range(0, coords.shape[0], batch):
        out[i:i + batch] = forward(weights, config, coords[i:i + batch])
    return out.reshape(*shape, config.out_dim)
